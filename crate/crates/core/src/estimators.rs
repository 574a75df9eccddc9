//! Confidence estimators over a batch of sampled paths.
//!
//! * SC: vote fraction of each answer.
//! * PPL: each unique path's own probability; unsampled paths get 0.
//! * PC: per answer, the summed probability of its unique sampled paths.
//! * RPC: PC restricted to the paths that survive reasoning pruning.
//!
//! Estimators read `ReasoningPath::path_prob` as given: exact values for
//! oracle batches, values derived under the configured `ProbMode` for
//! ingested ones. PPL and PC are never renormalized over the batch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{group_by_answer, unique_paths, ConfidenceEntry, ConfidenceMap, ReasoningPath, SampleBatch};
use crate::pruning::{prune, FitConfig, PruningReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Sc,
    Ppl,
    Pc,
    Rpc,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [EstimatorKind::Sc, EstimatorKind::Ppl, EstimatorKind::Pc, EstimatorKind::Rpc];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Sc => "SC",
            EstimatorKind::Ppl => "PPL",
            EstimatorKind::Pc => "PC",
            EstimatorKind::Rpc => "RPC",
        }
    }

    /// Whether the kind scores paths rather than answers.
    pub fn is_path_level(self) -> bool {
        self == EstimatorKind::Ppl
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sc" => Ok(EstimatorKind::Sc),
            "ppl" => Ok(EstimatorKind::Ppl),
            "pc" => Ok(EstimatorKind::Pc),
            "rpc" => Ok(EstimatorKind::Rpc),
            other => Err(Error::InvalidArgument(format!("unknown estimator '{other}'"))),
        }
    }
}

fn non_empty(batch: &SampleBatch) -> Result<()> {
    if batch.is_empty() {
        Err(Error::EmptyBatch)
    } else {
        Ok(())
    }
}

pub fn sc_confidence(batch: &SampleBatch) -> Result<ConfidenceMap> {
    non_empty(batch)?;
    let n = batch.len() as f64;
    let mut map = ConfidenceMap::new(EstimatorKind::Sc);
    for group in group_by_answer(&batch.paths) {
        map.push(group.answer.clone(), group.paths.len() as f64 / n);
    }
    Ok(map)
}

/// One entry per unique path, keyed by its text, valued at its probability.
pub fn ppl_confidence(batch: &SampleBatch) -> Result<ConfidenceMap> {
    non_empty(batch)?;
    let mut map = ConfidenceMap::new(EstimatorKind::Ppl);
    map.entries = unique_paths(batch)
        .into_iter()
        .map(|p| ConfidenceEntry {
            answer: p.answer.clone(),
            path: Some(p.text.clone()),
            value: p.path_prob,
        })
        .collect();
    Ok(map)
}

fn grouped_sum<'a>(kind: EstimatorKind, paths: impl IntoIterator<Item = &'a ReasoningPath>) -> ConfidenceMap {
    let mut map = ConfidenceMap::new(kind);
    for group in group_by_answer(paths) {
        let value = group.paths.iter().map(|p| p.path_prob).sum();
        map.push(group.answer.clone(), value);
    }
    map
}

pub fn pc_confidence(batch: &SampleBatch) -> Result<ConfidenceMap> {
    non_empty(batch)?;
    Ok(grouped_sum(EstimatorKind::Pc, unique_paths(batch)))
}

/// Prune the unique paths, then apply perplexity consistency to the survivors.
///
/// Report indices refer to positions in `unique_paths(batch)`.
pub fn rpc_confidence(batch: &SampleBatch, config: &FitConfig) -> Result<(ConfidenceMap, PruningReport)> {
    non_empty(batch)?;
    let unique = unique_paths(batch);
    let probs: Vec<f64> = unique.iter().map(|p| p.path_prob).collect();
    let report = prune(&probs, config)?;
    let retained = report.retained_indices.iter().map(|&i| unique[i]);
    Ok((grouped_sum(EstimatorKind::Rpc, retained), report))
}

/// Uniform dispatch over the four estimators.
pub fn estimate(kind: EstimatorKind, batch: &SampleBatch, config: &FitConfig) -> Result<ConfidenceMap> {
    match kind {
        EstimatorKind::Sc => sc_confidence(batch),
        EstimatorKind::Ppl => ppl_confidence(batch),
        EstimatorKind::Pc => pc_confidence(batch),
        EstimatorKind::Rpc => rpc_confidence(batch, config).map(|(map, _)| map),
    }
}
