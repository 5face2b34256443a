use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

/// Environment variable naming a TOML file of default settings.
pub const CONFIG_ENV: &str = "RELUINV_CONFIG";

/// Settings that flags override. Unset keys keep the built-in defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Defaults {
    pub time_limit: f64,
    pub gap_tol: f64,
    pub t_max: f64,
    pub jobs: usize,
    pub seed: u64,
    pub restarts: usize,
    pub epsilon: f64,
}

impl Default for Defaults {
    fn default() -> Self {
        Self {
            time_limit: 150.0,
            gap_tol: 1e-6,
            t_max: 150.0,
            jobs: 1,
            seed: 0,
            restarts: 16,
            epsilon: 1e-3,
        }
    }
}

impl Defaults {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Built-in defaults, or the file named by [`CONFIG_ENV`].
    pub fn load() -> anyhow::Result<Self> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Self::from_file(Path::new(&p)),
            _ => Ok(Self::default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_other_defaults() {
        let d: Defaults = toml::from_str("time_limit = 5\njobs = 2\n").unwrap();
        assert_eq!(d.time_limit, 5.0);
        assert_eq!(d.jobs, 2);
        assert_eq!(d.t_max, 150.0);
        assert!(toml::from_str::<Defaults>("tmax = 1").is_err());
    }
}
