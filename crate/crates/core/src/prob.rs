//! Small helpers over probability vectors and the seeded generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded generator for stream `stream` of run `seed`. Distinct streams are
/// independent, so samples can be drawn in any order or in parallel.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Inverse-CDF draw from an (approximately) normalized vector.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Rescales to unit sum; returns `None` when the mass is zero or not finite.
pub fn normalize(v: &mut [f64]) -> Option<()> {
    let s: f64 = v.iter().sum();
    if !(s > 0.0 && s.is_finite()) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= s);
    Some(())
}

/// `KL(p || q)`; `Err(i)` names a state where `p > 0` but `q = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, usize> {
    let mut total = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Err(i);
        }
        total += pi * (pi / qi).ln();
    }
    Ok(total.max(0.0))
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

pub fn one_hot(dim: usize, index: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[index] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categorical_frequencies() {
        let mut rng = stream_rng(1, 0);
        let p = [0.2, 0.0, 0.5, 0.3];
        let mut counts = [0usize; 4];
        for _ in 0..100_000 {
            counts[sample_categorical(&p, &mut rng)] += 1;
        }
        assert_eq!(counts[1], 0);
        for (c, &pi) in counts.iter().zip(&p) {
            assert!((*c as f64 / 1e5 - pi).abs() < 5e-3);
        }
    }

    #[test]
    fn streams_differ_and_repeat() {
        let a: Vec<u64> = (0..4).map(|_| stream_rng(7, 0).gen()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let b: u64 = stream_rng(7, 1).gen();
        assert_ne!(a[0], b);
    }

    #[test]
    fn kl_edge_cases() {
        assert_eq!(kl_divergence(&[1.0, 0.0], &[1.0, 0.0]), Ok(0.0));
        assert_eq!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]), Err(1));
        let v = kl_divergence(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
        let expected = 0.5 * (2.0f64).ln() + 0.5 * (0.5f64 / 0.75).ln();
        assert!((v - expected).abs() < 1e-15);
    }
}
