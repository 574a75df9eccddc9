//! Sampled reasoning paths, answer labels and best-of-N selection.
//!
//! A [`SampleBatch`] keeps paths in sampling order. Every view derived from
//! it (the unique set, answer groups, confidence maps) preserves
//! first-occurrence order, which is what makes tie-breaking deterministic.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;

/// Smallest path probability we hand out; keeps downstream logs finite.
pub const MIN_PATH_PROB: f64 = 1e-300;

/// How token log-probabilities collapse into one path probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbMode {
    /// `exp(sum logprobs)`, the joint generation probability.
    Joint,
    /// `exp(mean logprobs)`, the inverse per-token perplexity.
    #[default]
    LengthNormalized,
}

impl std::fmt::Display for ProbMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProbMode::Joint => f.write_str("joint"),
            ProbMode::LengthNormalized => f.write_str("length_normalized"),
        }
    }
}

/// Trim, strip one surrounding `\boxed{...}`, and case-fold.
pub fn canonicalize_answer(raw: &str) -> String {
    let mut s = raw.trim();
    if let Some(inner) = s
        .strip_prefix("\\boxed{")
        .and_then(|rest| rest.strip_suffix('}'))
    {
        s = inner.trim();
    }
    s.to_lowercase()
}

/// The output of the extraction function for one path.
///
/// Two labels are equal iff their class ids match when both carry one,
/// otherwise iff their canonical strings match. This relation is not
/// transitive across mixed labelled/unlabelled inputs, so labels are never
/// hashed; grouping is done by linear scan.
#[derive(Debug, Clone, Serialize)]
pub struct AnswerLabel {
    canonical: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    class_id: Option<i64>,
    #[serde(skip)]
    raw: String,
}

impl AnswerLabel {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        AnswerLabel {
            canonical: canonicalize_answer(&raw),
            class_id: None,
            raw,
        }
    }

    pub fn with_class(raw: impl Into<String>, class_id: Option<i64>) -> Self {
        AnswerLabel {
            class_id,
            ..AnswerLabel::new(raw)
        }
    }

    pub fn canonical(&self) -> &str {
        &self.canonical
    }

    pub fn class_id(&self) -> Option<i64> {
        self.class_id
    }

    /// The answer text exactly as supplied, before canonicalization.
    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn is_empty(&self) -> bool {
        self.canonical.is_empty()
    }
}

impl PartialEq for AnswerLabel {
    fn eq(&self, other: &Self) -> bool {
        match (self.class_id, other.class_id) {
            (Some(a), Some(b)) => a == b,
            _ => self.canonical == other.canonical,
        }
    }
}

impl std::fmt::Display for AnswerLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.canonical)
    }
}

/// Collapse token log-probabilities into a path probability in `[1e-300, 1]`.
pub fn derive_path_prob(token_logprobs: &[f64], mode: ProbMode) -> Result<f64> {
    if token_logprobs.is_empty() {
        return Err(Error::InvalidPath("empty token log-probability sequence".into()));
    }
    if let Some(bad) = token_logprobs.iter().find(|lp| lp.is_nan()) {
        return Err(Error::InvalidPath(format!("log-probability {bad} is not a number")));
    }
    let total: f64 = token_logprobs.iter().sum();
    let log_prob = match mode {
        ProbMode::Joint => total,
        ProbMode::LengthNormalized => total / token_logprobs.len() as f64,
    };
    Ok(log_prob.exp().clamp(MIN_PATH_PROB, 1.0))
}

/// One sampled reasoning path.
#[derive(Debug, Clone, Serialize)]
pub struct ReasoningPath {
    pub text: String,
    pub token_logprobs: Vec<f64>,
    pub answer: AnswerLabel,
    /// Externally supplied score; carried through, never used by estimators.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ext_score: Option<f64>,
    pub path_prob: f64,
}

impl ReasoningPath {
    /// Build a path from token log-probabilities, deriving its probability.
    pub fn new(
        text: impl Into<String>,
        token_logprobs: Vec<f64>,
        answer: AnswerLabel,
        mode: ProbMode,
    ) -> Result<Self> {
        if answer.is_empty() {
            return Err(Error::InvalidPath("answer is empty after canonicalization".into()));
        }
        let path_prob = derive_path_prob(&token_logprobs, mode)?;
        Ok(ReasoningPath {
            text: text.into(),
            token_logprobs,
            answer,
            ext_score: None,
            path_prob,
        })
    }

    /// Build a path whose probability is known exactly (oracle paths).
    pub fn with_prob(text: impl Into<String>, answer: AnswerLabel, path_prob: f64) -> Result<Self> {
        if !(path_prob > 0.0 && path_prob <= 1.0) {
            return Err(Error::InvalidPath(format!("path probability {path_prob} outside (0, 1]")));
        }
        if answer.is_empty() {
            return Err(Error::InvalidPath("answer is empty after canonicalization".into()));
        }
        Ok(ReasoningPath {
            text: text.into(),
            token_logprobs: vec![path_prob.ln()],
            answer,
            ext_score: None,
            path_prob,
        })
    }
}

/// The `n` paths sampled for one problem, in sampling order.
#[derive(Debug, Clone, Serialize)]
pub struct SampleBatch {
    pub problem_id: String,
    pub paths: Vec<ReasoningPath>,
}

impl SampleBatch {
    pub fn new(problem_id: impl Into<String>, paths: Vec<ReasoningPath>) -> Self {
        SampleBatch {
            problem_id: problem_id.into(),
            paths,
        }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn unique_paths(&self) -> Vec<&ReasoningPath> {
        unique_paths(self)
    }
}

/// The unique set of sampled paths: exact-text dedup, first occurrence kept.
pub fn unique_paths(batch: &SampleBatch) -> Vec<&ReasoningPath> {
    let mut seen = HashSet::with_capacity(batch.paths.len());
    batch
        .paths
        .iter()
        .filter(|p| seen.insert(p.text.as_str()))
        .collect()
}

/// Paths sharing one answer label, in input order.
#[derive(Debug, Clone)]
pub struct AnswerGroup<'a> {
    pub answer: &'a AnswerLabel,
    pub paths: Vec<&'a ReasoningPath>,
}

/// Partition paths by answer; groups appear in first-occurrence order.
pub fn group_by_answer<'a, I>(paths: I) -> Vec<AnswerGroup<'a>>
where
    I: IntoIterator<Item = &'a ReasoningPath>,
{
    let mut groups: Vec<AnswerGroup<'a>> = Vec::new();
    for path in paths {
        match groups.iter_mut().find(|g| *g.answer == path.answer) {
            Some(group) => group.paths.push(path),
            None => groups.push(AnswerGroup {
                answer: &path.answer,
                paths: vec![path],
            }),
        }
    }
    groups
}

/// One candidate and its estimated confidence.
#[derive(Debug, Clone, Serialize)]
pub struct ConfidenceEntry {
    pub answer: AnswerLabel,
    /// Set for path-level estimators (PPL), where candidates are paths.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub value: f64,
}

/// Estimated confidences, ordered by first occurrence in sampling order.
#[derive(Debug, Clone, Serialize)]
pub struct ConfidenceMap {
    pub kind: EstimatorKind,
    pub entries: Vec<ConfidenceEntry>,
}

impl ConfidenceMap {
    pub fn new(kind: EstimatorKind) -> Self {
        ConfidenceMap {
            kind,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, answer: AnswerLabel, value: f64) {
        self.entries.push(ConfidenceEntry {
            answer,
            path: None,
            value,
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Confidence of an answer: the first matching entry, or 0 if unobserved.
    pub fn get(&self, answer: &AnswerLabel) -> f64 {
        self.entries
            .iter()
            .find(|e| e.answer == *answer)
            .map_or(0.0, |e| e.value)
    }

    /// Confidence of a path by its text (path-level maps only).
    pub fn get_path(&self, text: &str) -> f64 {
        self.entries
            .iter()
            .find(|e| e.path.as_deref() == Some(text))
            .map_or(0.0, |e| e.value)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.value).sum()
    }
}

/// Best-of-N selection: the highest-confidence entry, earliest on ties.
pub fn select_answer(conf: &ConfidenceMap) -> Result<(&AnswerLabel, f64)> {
    let mut best: Option<&ConfidenceEntry> = None;
    for entry in &conf.entries {
        if best.is_none_or(|b| entry.value > b.value) {
            best = Some(entry);
        }
    }
    best.map(|e| (&e.answer, e.value)).ok_or(Error::NoCandidates)
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn selection_is_scale_invariant(values in prop::collection::vec(0.0f64..1.0, 1..20), c in 1e-3f64..1e3) {
            let mut m = ConfidenceMap::new(EstimatorKind::Pc);
            let mut scaled = ConfidenceMap::new(EstimatorKind::Pc);
            for (i, v) in values.iter().enumerate() {
                m.push(AnswerLabel::new(format!("a{i}")), *v);
                scaled.push(AnswerLabel::new(format!("a{i}")), *v * c);
            }
            let (a, _) = select_answer(&m).unwrap();
            let (b, _) = select_answer(&scaled).unwrap();
            // Scaling may merge near-ties through rounding; compare only clear winners.
            let mut sorted = values.clone();
            sorted.sort_by(|x, y| y.partial_cmp(x).unwrap());
            if sorted.len() < 2 || sorted[0] - sorted[1] > 1e-9 {
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn unique_paths_idempotent_and_grouping_partitions(ids in prop::collection::vec(0usize..6, 0..30)) {
            let paths: Vec<_> = ids
                .iter()
                .map(|i| ReasoningPath::with_prob(format!("t{i}"), AnswerLabel::new(format!("{}", i % 3)), 0.1).unwrap())
                .collect();
            let batch = SampleBatch::new("p", paths);
            let once: Vec<ReasoningPath> = unique_paths(&batch).into_iter().cloned().collect();
            let again = SampleBatch::new("p", once.clone());
            let twice: Vec<&str> = unique_paths(&again).iter().map(|p| p.text.as_str()).collect();
            let once_texts: Vec<&str> = once.iter().map(|p| p.text.as_str()).collect();
            prop_assert_eq!(once_texts, twice);

            let groups = group_by_answer(&batch.paths);
            let total: usize = groups.iter().map(|g| g.paths.len()).sum();
            prop_assert_eq!(total, batch.len());
            for g in &groups {
                prop_assert!(g.paths.iter().all(|p| p.answer == *g.answer));
            }
        }

        #[test]
        fn derive_prob_monotone(lp in prop::collection::vec(-5.0f64..0.0, 1..10), idx in 0usize..10, bump in 0.0f64..1.0) {
            let i = idx % lp.len();
            let mut higher = lp.clone();
            higher[i] = (higher[i] + bump).min(0.0);
            for mode in [ProbMode::Joint, ProbMode::LengthNormalized] {
                prop_assert!(derive_path_prob(&higher, mode).unwrap() >= derive_path_prob(&lp, mode).unwrap());
            }
        }

        #[test]
        fn derive_prob_is_one_only_for_zero_logprobs(lp in prop::collection::vec(-5.0f64..-1e-6, 1..10), zeros in 1usize..10) {
            for mode in [ProbMode::Joint, ProbMode::LengthNormalized] {
                prop_assert!(derive_path_prob(&lp, mode).unwrap() < 1.0);
                prop_assert_eq!(derive_path_prob(&vec![0.0; zeros], mode).unwrap(), 1.0);
            }
        }
    }
}
