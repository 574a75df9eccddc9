//! Run configuration, read from a TOML document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::ingest::OutputFormat;
use crate::metrics::DEFAULT_BINS;
use crate::paths::ProbMode;
use crate::pruning::FitConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub estimators: Vec<EstimatorKind>,
    pub prob_mode: ProbMode,
    /// Sample budgets, strictly increasing.
    pub n_grid: Vec<usize>,
    /// Seeded repeats per cell in `simulate`.
    pub repeats: usize,
    /// Monte Carlo trials per cell in `convergence` and `decompose`.
    pub trials: usize,
    /// Largest `paths^n` that `decompose` enumerates before sampling instead.
    pub enumeration_limit: u64,
    pub bins: usize,
    /// Divide PC/RPC scores by their sum before scoring calibration.
    pub normalize_confidence: bool,
    pub format: OutputFormat,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub fit: FitConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            estimators: EstimatorKind::ALL.to_vec(),
            prob_mode: ProbMode::default(),
            n_grid: vec![4, 8, 16, 32, 64, 128],
            repeats: 10,
            trials: 10_000,
            enumeration_limit: 200_000,
            bins: DEFAULT_BINS,
            normalize_confidence: false,
            format: OutputFormat::Csv,
            oracle: None,
            input: None,
            out: None,
            fit: FitConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.estimators.is_empty() {
            return bad("estimators must not be empty".into());
        }
        if self.n_grid.is_empty() || self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("n_grid must be positive and strictly increasing, got {:?}", self.n_grid));
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if self.trials < 2 {
            return bad("trials must be at least 2".into());
        }
        if self.bins == 0 {
            return bad("bins must be at least 1".into());
        }
        self.fit.validate().map_err(|e| Error::Config(format!("fit: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let d = RunConfig::default();
        let text = d.to_toml().unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), d);
        assert_eq!(RunConfig::parse("").unwrap(), d);
    }

    #[test]
    fn partial_and_invalid() {
        let c = RunConfig::parse("seed = 7\nestimators = [\"sc\", \"rpc\"]\n[fit]\nmax_iter = 50\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.estimators, vec![EstimatorKind::Sc, EstimatorKind::Rpc]);
        assert_eq!(c.fit.max_iter, 50);
        assert!(matches!(RunConfig::parse("sed = 7"), Err(Error::Config(_))));
        assert!(RunConfig::parse("n_grid = [8, 4]").is_err());
        assert!(RunConfig::parse("repeats = 0").is_err());
        assert!(RunConfig::parse("[fit]\nweight_min = 0.9").is_err());
    }
}
