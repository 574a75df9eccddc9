//! A synthetic sampling oracle with a fully known path distribution.
//!
//! The oracle plays the part of the model: a finite set of abstract paths,
//! each with an exact probability and an answer. Batches are i.i.d.
//! categorical draws from it, and [`exact_estimator_moments`] enumerates
//! every ordered outcome of `n` draws so that expectations over sampling are
//! computed exactly rather than estimated.
//!
//! Random numbers come from ChaCha8 (`rand_chacha`), seeded through
//! `SeedableRng::seed_from_u64`. Uniforms are built from the top 53 bits of
//! `next_u64`, so batches are bit-reproducible on every platform.

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{AnswerLabel, ReasoningPath, SampleBatch};

/// Upper bound on `M^n` for exhaustive enumeration.
pub const ENUMERATION_CAP: u64 = 10_000_000;

const PROB_SUM_TOL: f64 = 1e-12;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `index` of a run seeded with `seed` (SplitMix64 mix).
///
/// Used for repeats and Monte Carlo trials so each one is reproducible on its
/// own, independent of evaluation order.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
pub fn uniform(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleDoc {
    path_probs: Vec<f64>,
    path_answers: Vec<String>,
    truth: String,
}

/// Either one oracle document or an array of them.
#[derive(Deserialize)]
#[serde(untagged)]
enum OracleFile {
    One(OracleDoc),
    Many(Vec<OracleDoc>),
}

/// A synthetic model: path probabilities, their answers, and the correct answer.
#[derive(Debug, Clone, Serialize)]
pub struct OracleSpec {
    path_probs: Vec<f64>,
    path_answers: Vec<AnswerLabel>,
    truth: AnswerLabel,
    #[serde(skip)]
    cumulative: Vec<f64>,
    #[serde(skip)]
    paths: Vec<ReasoningPath>,
}

impl OracleSpec {
    pub fn new(path_probs: Vec<f64>, path_answers: Vec<AnswerLabel>, truth: AnswerLabel) -> Result<Self> {
        if path_probs.is_empty() {
            return Err(Error::InvalidOracle("no paths".into()));
        }
        if path_probs.len() != path_answers.len() {
            return Err(Error::InvalidOracle(format!(
                "{} probabilities but {} answers",
                path_probs.len(),
                path_answers.len()
            )));
        }
        if let Some(p) = path_probs.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::InvalidOracle(format!("path probability {p} outside (0, 1]")));
        }
        let total: f64 = path_probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidOracle(format!("path probabilities sum to {total}, not 1")));
        }
        if path_answers.iter().any(AnswerLabel::is_empty) || truth.is_empty() {
            return Err(Error::InvalidOracle("empty answer label".into()));
        }
        let cumulative = path_probs
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        let paths = path_probs
            .iter()
            .zip(&path_answers)
            .enumerate()
            .map(|(i, (&p, a))| ReasoningPath::with_prob(format!("path-{i}"), a.clone(), p))
            .collect::<Result<Vec<_>>>()?;
        Ok(OracleSpec {
            path_probs,
            path_answers,
            truth,
            cumulative,
            paths,
        })
    }

    /// Convenience constructor from plain strings.
    pub fn from_strs(path_probs: &[f64], path_answers: &[&str], truth: &str) -> Result<Self> {
        OracleSpec::new(
            path_probs.to_vec(),
            path_answers.iter().map(|a| AnswerLabel::new(*a)).collect(),
            AnswerLabel::new(truth),
        )
    }

    /// Parse a JSON document holding one oracle or an array of oracles.
    pub fn parse_json(text: &str) -> Result<Vec<OracleSpec>> {
        let file: OracleFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidOracle(e.to_string()))?;
        let docs = match file {
            OracleFile::One(doc) => vec![doc],
            OracleFile::Many(docs) => docs,
        };
        if docs.is_empty() {
            return Err(Error::InvalidOracle("empty oracle list".into()));
        }
        docs.into_iter()
            .map(|d| {
                OracleSpec::new(
                    d.path_probs,
                    d.path_answers.into_iter().map(AnswerLabel::new).collect(),
                    AnswerLabel::new(d.truth),
                )
            })
            .collect()
    }

    pub fn load_json(path: &Path) -> Result<Vec<OracleSpec>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        OracleSpec::parse_json(&text)
    }

    pub fn num_paths(&self) -> usize {
        self.path_probs.len()
    }

    pub fn path_probs(&self) -> &[f64] {
        &self.path_probs
    }

    pub fn path_answers(&self) -> &[AnswerLabel] {
        &self.path_answers
    }

    pub fn truth(&self) -> &AnswerLabel {
        &self.truth
    }

    /// The reasoning path standing for abstract path `index`.
    pub fn path(&self, index: usize) -> &ReasoningPath {
        &self.paths[index]
    }

    /// Number of oracle paths whose answer is `answer`.
    pub fn paths_for(&self, answer: &AnswerLabel) -> usize {
        self.path_answers.iter().filter(|a| *a == answer).count()
    }

    /// Inverse-CDF categorical draw of one path index.
    pub fn draw_index(&self, rng: &mut impl RngCore) -> usize {
        let u = uniform(rng);
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.path_probs.len() - 1)
    }

    /// `n` i.i.d. path indices.
    pub fn sample_indices(&self, n: usize, rng: &mut impl RngCore) -> Vec<usize> {
        (0..n).map(|_| self.draw_index(rng)).collect()
    }

    pub fn batch_from_indices(&self, problem_id: &str, indices: &[usize]) -> SampleBatch {
        SampleBatch::new(problem_id, indices.iter().map(|&i| self.paths[i].clone()).collect())
    }
}

/// Sum of path probabilities whose answer equals `answer`.
pub fn true_answer_prob(oracle: &OracleSpec, answer: &AnswerLabel) -> f64 {
    oracle
        .path_probs
        .iter()
        .zip(&oracle.path_answers)
        .filter(|(_, a)| *a == answer)
        .map(|(p, _)| p)
        .sum()
}

/// Draw `n` i.i.d. paths; identical seeds give identical batches.
pub fn sample_batch(oracle: &OracleSpec, n: usize, seed: u64) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::InvalidSampleSize);
    }
    let mut rng = rng_from_seed(seed);
    let indices = oracle.sample_indices(n, &mut rng);
    Ok(oracle.batch_from_indices("oracle", &indices))
}

/// What an estimator is scored against: an answer or a single oracle path.
#[derive(Debug, Clone)]
pub enum Target {
    Answer(AnswerLabel),
    Path(usize),
}

impl Target {
    /// Ground-truth confidence `p` of the target under the oracle.
    pub fn true_prob(&self, oracle: &OracleSpec) -> f64 {
        match self {
            Target::Answer(a) => true_answer_prob(oracle, a),
            Target::Path(i) => oracle.path_probs[*i],
        }
    }

    /// Correctness indicator of the target.
    pub fn indicator(&self, oracle: &OracleSpec) -> f64 {
        let answer = match self {
            Target::Answer(a) => a,
            Target::Path(i) => &oracle.path_answers[*i],
        };
        if *answer == oracle.truth {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Outcome {
    pub prob: f64,
    pub value: f64,
}

/// Exact moments of an estimator over all ordered outcomes of `n` draws.
///
/// `estimation_error` is the reasoning error minus the model error, the
/// quantity the closed forms call estimation error. It equals `mse` exactly
/// when the estimator is unbiased; `cross_term` holds the difference.
#[derive(Debug, Clone, Serialize)]
pub struct OutcomeEnumeration {
    pub outcomes: Vec<Outcome>,
    pub true_value: f64,
    pub indicator: f64,
    pub mean: f64,
    pub second_moment: f64,
    /// `E[(p_hat - p)^2]`
    pub mse: f64,
    /// `E[(p_hat - 1[correct])^2]`
    pub reasoning_error: f64,
    /// `(p - 1[correct])^2`
    pub model_error: f64,
    pub estimation_error: f64,
    pub cross_term: f64,
}

impl OutcomeEnumeration {
    pub fn total_prob(&self) -> f64 {
        self.outcomes.iter().map(|o| o.prob).sum()
    }
}

/// Number of ordered outcomes `M^n`, or `None` past the cap.
fn outcome_count(paths: usize, n: usize) -> Option<u64> {
    let mut count: u64 = 1;
    for _ in 0..n {
        count = count.checked_mul(paths as u64)?;
        if count > ENUMERATION_CAP {
            return None;
        }
    }
    Some(count)
}

/// Enumerate every ordered outcome of `n` draws and collect exact moments of
/// `estimator`, the estimated confidence of `target` on a batch.
pub fn exact_estimator_moments<F>(
    oracle: &OracleSpec,
    n: usize,
    estimator: F,
    target: &Target,
) -> Result<OutcomeEnumeration>
where
    F: Fn(&SampleBatch) -> Result<f64>,
{
    if n == 0 {
        return Err(Error::InvalidSampleSize);
    }
    let m = oracle.num_paths();
    let count = outcome_count(m, n).ok_or(Error::EnumerationTooLarge {
        paths: m,
        n,
        cap: ENUMERATION_CAP,
    })?;

    let mut indices = vec![0usize; n];
    let mut batch = oracle.batch_from_indices("enumeration", &indices);
    let mut outcomes = Vec::with_capacity(count as usize);
    loop {
        let prob: f64 = indices.iter().map(|&i| oracle.path_probs[i]).product();
        outcomes.push(Outcome {
            prob,
            value: estimator(&batch)?,
        });
        // Odometer increment, last position fastest.
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(summarize(oracle, target, outcomes));
            }
            pos -= 1;
            indices[pos] += 1;
            if indices[pos] < m {
                batch.paths[pos] = oracle.paths[indices[pos]].clone();
                break;
            }
            indices[pos] = 0;
            batch.paths[pos] = oracle.paths[0].clone();
        }
    }
}

fn summarize(oracle: &OracleSpec, target: &Target, outcomes: Vec<Outcome>) -> OutcomeEnumeration {
    let p = target.true_prob(oracle);
    let ind = target.indicator(oracle);
    let (mut mean, mut second, mut mse, mut reasoning) = (0.0, 0.0, 0.0, 0.0);
    for o in &outcomes {
        mean += o.prob * o.value;
        second += o.prob * o.value * o.value;
        mse += o.prob * (o.value - p).powi(2);
        reasoning += o.prob * (o.value - ind).powi(2);
    }
    let model = (p - ind).powi(2);
    OutcomeEnumeration {
        outcomes,
        true_value: p,
        indicator: ind,
        mean,
        second_moment: second,
        mse,
        reasoning_error: reasoning,
        model_error: model,
        estimation_error: reasoning - model,
        cross_term: reasoning - mse - model,
    }
}
