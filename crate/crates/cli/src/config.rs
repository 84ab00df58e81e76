use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Environment variable read when no seed is given by flag or config.
pub const SEED_ENV: &str = "HDDM_SEED";

/// Why a subcommand stopped. The variant fixes the exit code.
#[derive(Debug)]
pub enum Failure {
    /// Input or result failed a check: exit 1.
    Invalid(String),
    /// Bad configuration or unreadable/unwritable file: exit 2.
    Config(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Config(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Invalid(m) | Failure::Config(m) => f.write_str(m),
        }
    }
}

pub type Outcome<T> = Result<T, Failure>;

pub trait Classify<T> {
    fn invalid(self, context: &str) -> Outcome<T>;
    fn config(self, context: &str) -> Outcome<T>;
}

impl<T, E: fmt::Display> Classify<T> for Result<T, E> {
    fn invalid(self, context: &str) -> Outcome<T> {
        self.map_err(|e| Failure::Invalid(format!("{context}: {e}")))
    }

    fn config(self, context: &str) -> Outcome<T> {
        self.map_err(|e| Failure::Config(format!("{context}: {e}")))
    }
}

/// Flat JSON object of option values keyed by flag name.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile(Map<String, Value>);

impl ConfigFile {
    pub fn load(path: &Path) -> Outcome<Self> {
        let text = fs::read_to_string(path).config(&format!("cannot read config {}", path.display()))?;
        match serde_json::from_str(&text).config(&format!("config {}", path.display()))? {
            Value::Object(map) => Ok(Self(map)),
            _ => Err(Failure::Config(format!(
                "config {} must be a JSON object",
                path.display()
            ))),
        }
    }

    /// Fills every option left unset on the command line from the config.
    ///
    /// Keys are flag names without the leading dashes; unknown keys are ignored.
    pub fn fill<T: Serialize + DeserializeOwned>(&self, flags: T) -> Outcome<T> {
        let mut value = serde_json::to_value(flags).config("options")?;
        if let Value::Object(slots) = &mut value {
            for (key, v) in &self.0 {
                if let Some(slot) = slots.get_mut(key) {
                    if slot.is_null() {
                        *slot = v.clone();
                    }
                }
            }
        }
        serde_json::from_value(value).config("config")
    }
}

/// Flag or config seed, then `HDDM_SEED`, then 0.
pub fn resolve_seed(seed: Option<u64>) -> Outcome<u64> {
    if let Some(s) = seed {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().config(&format!("{SEED_ENV}={v:?}")),
        Err(_) => Ok(0),
    }
}

pub fn read_text(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).config(&format!("cannot read {}", path.display()))
}

/// Writes to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, text: &str) -> Outcome<()> {
    match path {
        Some(p) => fs::write(p, text).config(&format!("cannot write {}", p.display())),
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).config("stdout")?;
            out.flush().config("stdout")
        }
    }
}
