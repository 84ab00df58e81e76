//! Noise schedules: monotone decreasing survival curves on `[0, 1]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const BOUNDARY_TOL: f64 = 1e-12;
const VALIDATION_GRID: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("time {0} outside [0, 1]")]
    TimeOutOfRange(f64),
    #[error("interval s={s} > t={t}")]
    InvalidInterval { s: f64, t: f64 },
    #[error("degenerate ratio: schedule is 0 at s={s} but t={t} > s")]
    DegenerateRatio { s: f64, t: f64 },
    #[error("level {level}: boundary violated, value {value} at t={t}")]
    Boundary { level: usize, t: f64, value: f64 },
    #[error("level {level}: not monotone decreasing near t={t}")]
    NotMonotone { level: usize, t: f64 },
    #[error("level {level}: value {value} outside [0, 1] at t={t}")]
    Range { level: usize, t: f64, value: f64 },
    #[error("ordering violated at t={t}: level {lower} = {lower_value} exceeds level {upper} = {upper_value}")]
    Ordering {
        t: f64,
        lower: usize,
        upper: usize,
        lower_value: f64,
        upper_value: f64,
    },
    #[error("unknown schedule family {0:?}")]
    UnknownFamily(String),
    #[error("a schedule needs at least one level")]
    Empty,
}

/// One survival curve `a(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "family", content = "coefficients")]
pub enum ScheduleFn {
    /// `1 - t`
    Linear,
    /// `1 - t^2`
    Quadratic,
    /// `sum_k c_k t^k`, coefficients in increasing degree.
    Polynomial(Vec<f64>),
}

impl ScheduleFn {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            ScheduleFn::Linear => 1.0 - t,
            ScheduleFn::Quadratic => 1.0 - t * t,
            ScheduleFn::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &k| acc * t + k),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            ScheduleFn::Linear => -1.0,
            ScheduleFn::Quadratic => -2.0 * t,
            ScheduleFn::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, &ck)| acc * t + k as f64 * ck),
        }
    }
}

impl fmt::Display for ScheduleFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleFn::Linear => write!(f, "linear"),
            ScheduleFn::Quadratic => write!(f, "quadratic"),
            ScheduleFn::Polynomial(c) => {
                let parts: Vec<String> = c.iter().map(|v| v.to_string()).collect();
                write!(f, "poly:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for ScheduleFn {
    type Err = ScheduleError;

    /// `linear`, `quadratic`, or `poly:c0,c1,...`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(ScheduleFn::Linear),
            "quadratic" => Ok(ScheduleFn::Quadratic),
            other => {
                let coeffs = other
                    .strip_prefix("poly:")
                    .ok_or_else(|| ScheduleError::UnknownFamily(other.to_string()))?;
                coeffs
                    .split(',')
                    .map(|c| c.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map(ScheduleFn::Polynomial)
                    .map_err(|_| ScheduleError::UnknownFamily(other.to_string()))
            }
        }
    }
}

fn check_time(t: f64) -> Result<(), ScheduleError> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(ScheduleError::TimeOutOfRange(t))
    }
}

/// Ordered per-level schedules `a^(1) <= ... <= a^(n)`. The two-level case
/// is `(alpha, beta)`; a single level is plain absorbing diffusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    levels: Vec<ScheduleFn>,
}

impl Schedule {
    /// Builds without validating; call [`validate`] before use in kernels.
    pub fn new(levels: Vec<ScheduleFn>) -> Result<Self, ScheduleError> {
        if levels.is_empty() {
            return Err(ScheduleError::Empty);
        }
        Ok(Self { levels })
    }

    pub fn two_level(alpha: ScheduleFn, beta: ScheduleFn) -> Self {
        Self {
            levels: vec![alpha, beta],
        }
    }

    pub fn single(alpha: ScheduleFn) -> Self {
        Self { levels: vec![alpha] }
    }

    /// `alpha = 1 - t`, `beta = 1 - t^2`.
    pub fn linear_quadratic() -> Self {
        Self::two_level(ScheduleFn::Linear, ScheduleFn::Quadratic)
    }

    pub fn levels(&self) -> &[ScheduleFn] {
        &self.levels
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    /// `(value, derivative)` for every level at `t`.
    pub fn eval(&self, t: f64) -> Result<Vec<(f64, f64)>, ScheduleError> {
        check_time(t)?;
        Ok(self.levels.iter().map(|f| (f.value(t), f.derivative(t))).collect())
    }

    /// Values of every level at `t`, clamped to `[0, 1]`.
    pub fn values(&self, t: f64) -> Result<Vec<f64>, ScheduleError> {
        check_time(t)?;
        Ok(self.levels.iter().map(|f| f.value(t).clamp(0.0, 1.0)).collect())
    }

    pub fn value(&self, level: usize, t: f64) -> Result<f64, ScheduleError> {
        check_time(t)?;
        Ok(self.levels[level].value(t).clamp(0.0, 1.0))
    }

    pub fn derivative(&self, level: usize, t: f64) -> Result<f64, ScheduleError> {
        check_time(t)?;
        Ok(self.levels[level].derivative(t))
    }

    /// `a(t) / a(s)` for one level.
    pub fn conditional_ratio(&self, level: usize, s: f64, t: f64) -> Result<f64, ScheduleError> {
        check_time(s)?;
        check_time(t)?;
        if s > t {
            return Err(ScheduleError::InvalidInterval { s, t });
        }
        if s == t {
            return Ok(1.0);
        }
        let vs = self.value(level, s)?;
        if vs <= 0.0 {
            return Err(ScheduleError::DegenerateRatio { s, t });
        }
        Ok((self.value(level, t)? / vs).clamp(0.0, 1.0))
    }

    /// Conditional ratios of every level over `[s, t]`.
    pub fn conditional_ratios(&self, s: f64, t: f64) -> Result<Vec<f64>, ScheduleError> {
        (0..self.levels.len())
            .map(|l| self.conditional_ratio(l, s, t))
            .collect()
    }
}

/// Checks boundaries, range, monotonicity and level ordering on a 1000-point
/// grid plus both endpoints.
pub fn validate(schedule: &Schedule) -> Result<(), ScheduleError> {
    for (l, f) in schedule.levels.iter().enumerate() {
        let level = l + 1;
        for (t, target) in [(0.0, 1.0), (1.0, 0.0)] {
            let v = f.value(t);
            if (v - target).abs() > BOUNDARY_TOL {
                return Err(ScheduleError::Boundary { level, t, value: v });
            }
        }
        let mut prev = f.value(0.0);
        for i in 1..=VALIDATION_GRID {
            let t = i as f64 / VALIDATION_GRID as f64;
            let v = f.value(t);
            if !(-BOUNDARY_TOL..=1.0 + BOUNDARY_TOL).contains(&v) {
                return Err(ScheduleError::Range { level, t, value: v });
            }
            if v > prev + BOUNDARY_TOL {
                return Err(ScheduleError::NotMonotone { level, t });
            }
            prev = v;
        }
    }
    for i in 0..=VALIDATION_GRID {
        let t = i as f64 / VALIDATION_GRID as f64;
        for l in 1..schedule.levels.len() {
            let lower_value = schedule.levels[l - 1].value(t);
            let upper_value = schedule.levels[l].value(t);
            if lower_value > upper_value + BOUNDARY_TOL {
                return Err(ScheduleError::Ordering {
                    t,
                    lower: l,
                    upper: l + 1,
                    lower_value,
                    upper_value,
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn built_in_families() {
        let s = Schedule::linear_quadratic();
        let v = s.eval(0.5).unwrap();
        assert_eq!(v[0], (0.5, -1.0));
        assert_eq!(v[1], (0.75, -1.0));
        for l in 0..2 {
            assert_eq!(s.value(l, 0.0).unwrap(), 1.0);
            assert_eq!(s.value(l, 1.0).unwrap(), 0.0);
        }
        assert!(matches!(s.eval(1.5), Err(ScheduleError::TimeOutOfRange(_))));
    }

    #[test]
    fn ratios() {
        let s = Schedule::linear_quadratic();
        assert!((s.conditional_ratio(0, 0.5, 0.8).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(s.conditional_ratio(0, 0.3, 0.3).unwrap(), 1.0);
        assert_eq!(s.conditional_ratio(1, 0.5, 1.0).unwrap(), 0.0);
        assert_eq!(s.conditional_ratio(1, 1.0, 1.0).unwrap(), 1.0);
        assert!(matches!(
            s.conditional_ratio(0, 0.8, 0.5),
            Err(ScheduleError::InvalidInterval { .. })
        ));
        let flat = Schedule::single(ScheduleFn::Polynomial(vec![0.0]));
        assert!(matches!(
            flat.conditional_ratio(0, 0.2, 0.4),
            Err(ScheduleError::DegenerateRatio { .. })
        ));
    }

    #[test]
    fn validation_cases() {
        assert!(validate(&Schedule::linear_quadratic()).is_ok());
        assert!(matches!(
            validate(&Schedule::two_level(ScheduleFn::Quadratic, ScheduleFn::Linear)),
            Err(ScheduleError::Ordering { .. })
        ));
        assert!(matches!(
            validate(&Schedule::single(ScheduleFn::Polynomial(vec![1.0]))),
            Err(ScheduleError::Boundary { t, .. }) if t == 1.0
        ));
        // 1 - 3t + 2t^2 hits the boundaries but dips below zero
        assert!(validate(&Schedule::single(ScheduleFn::Polynomial(vec![1.0, -3.0, 2.0]))).is_err());
    }

    #[test]
    fn parse_families() {
        assert_eq!("linear".parse::<ScheduleFn>().unwrap(), ScheduleFn::Linear);
        assert_eq!(
            "poly:1,0,0,-1".parse::<ScheduleFn>().unwrap(),
            ScheduleFn::Polynomial(vec![1.0, 0.0, 0.0, -1.0])
        );
        assert!("cosine".parse::<ScheduleFn>().is_err());
    }

    fn families() -> Vec<ScheduleFn> {
        vec![
            ScheduleFn::Linear,
            ScheduleFn::Quadratic,
            ScheduleFn::Polynomial(vec![1.0, 0.0, 0.0, -1.0]),
            ScheduleFn::Polynomial(vec![1.0, -0.5, -0.5]),
        ]
    }

    proptest! {
        #[test]
        fn derivative_matches_finite_difference(t in 1e-3f64..0.999) {
            let h = 1e-6;
            for f in families() {
                let fd = (f.value(t + h) - f.value(t - h)) / (2.0 * h);
                prop_assert!((fd - f.derivative(t)).abs() < 1e-6);
            }
        }

        #[test]
        fn ratios_compose(a in 0.0f64..0.99, b in 0.0f64..0.99, c in 0.0f64..0.99) {
            let mut v = [a, b, c];
            v.sort_by(f64::total_cmp);
            let [r, s, t] = v;
            let sched = Schedule::linear_quadratic();
            for l in 0..2 {
                let lhs = sched.conditional_ratio(l, r, s).unwrap() * sched.conditional_ratio(l, s, t).unwrap();
                let rhs = sched.conditional_ratio(l, r, t).unwrap();
                prop_assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }
}
