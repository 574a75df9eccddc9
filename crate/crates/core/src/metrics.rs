//! Accuracy, expected calibration error, reliability bins and sample budgets.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::paths::AnswerLabel;

pub const DEFAULT_BINS: usize = 10;

/// Fraction of `(selected, truth)` pairs that agree.
pub fn accuracy<'a, I>(selections: I) -> Result<f64>
where
    I: IntoIterator<Item = (&'a AnswerLabel, &'a AnswerLabel)>,
{
    let (mut hits, mut total) = (0usize, 0usize);
    for (selected, truth) in selections {
        total += 1;
        if selected == truth {
            hits += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(hits as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Mean confidence; 0 for an empty bin.
    pub confidence: f64,
    /// Empirical accuracy; 0 for an empty bin.
    pub accuracy: f64,
    #[serde(skip)]
    conf_sum: f64,
    #[serde(skip)]
    correct_sum: f64,
}

/// Equal-width, right-closed bins over `[0, 1]`; confidence 0 joins the first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationBins {
    pub edges: Vec<f64>,
    pub bins: Vec<Bin>,
    pub total: usize,
}

impl CalibrationBins {
    /// Expected calibration error of the binned items.
    pub fn ece(&self) -> f64 {
        let gap: f64 = self.bins.iter().map(|b| (b.conf_sum - b.correct_sum).abs()).sum();
        gap / self.total as f64
    }
}

fn bin_index(confidence: f64, bins: usize) -> usize {
    // Right-closed: (j/B, (j+1)/B] maps to j. Edges are compared as j/B so
    // that values such as 0.3 land where a reader expects.
    let mut j = ((confidence * bins as f64).ceil() as usize).clamp(1, bins) - 1;
    while j > 0 && confidence <= j as f64 / bins as f64 {
        j -= 1;
    }
    while j + 1 < bins && confidence > (j + 1) as f64 / bins as f64 {
        j += 1;
    }
    j
}

pub fn reliability_bins(scored: &[(f64, bool)], bins: usize) -> Result<CalibrationBins> {
    if scored.is_empty() {
        return Err(Error::EmptyInput);
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("need at least one bin".into()));
    }
    if let Some((c, _)) = scored.iter().find(|(c, _)| !(0.0..=1.0).contains(c)) {
        return Err(Error::Domain(format!("confidence {c} outside [0, 1]")));
    }
    let edges: Vec<f64> = (0..=bins).map(|j| j as f64 / bins as f64).collect();
    let mut out: Vec<Bin> = edges
        .windows(2)
        .map(|w| Bin {
            lower: w[0],
            upper: w[1],
            count: 0,
            confidence: 0.0,
            accuracy: 0.0,
            conf_sum: 0.0,
            correct_sum: 0.0,
        })
        .collect();
    for &(c, correct) in scored {
        let b = &mut out[bin_index(c, bins)];
        b.count += 1;
        b.conf_sum += c;
        if correct {
            b.correct_sum += 1.0;
        }
    }
    for b in out.iter_mut().filter(|b| b.count > 0) {
        b.confidence = b.conf_sum / b.count as f64;
        b.accuracy = b.correct_sum / b.count as f64;
    }
    Ok(CalibrationBins {
        edges,
        bins: out,
        total: scored.len(),
    })
}

/// `sum_b (|b|/N) |acc(b) - conf(b)|`
pub fn ece(scored: &[(f64, bool)], bins: usize) -> Result<f64> {
    Ok(reliability_bins(scored, bins)?.ece())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetPoint {
    pub n: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

/// Accuracy of one method as a function of the sample budget `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetCurve {
    pub method: String,
    pub repeats: usize,
    pub points: Vec<BudgetPoint>,
}

impl BudgetCurve {
    /// Build from per-`n` accuracies, one per repeat.
    pub fn from_runs(method: impl Into<String>, runs: &[(usize, Vec<f64>)]) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::EmptyInput);
        }
        if runs.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidArgument("n values must be strictly increasing".into()));
        }
        let repeats = runs[0].1.len();
        if repeats == 0 || runs.iter().any(|(_, a)| a.len() != repeats) {
            return Err(Error::InvalidArgument("every n needs the same positive number of repeats".into()));
        }
        let points = runs
            .iter()
            .map(|(n, accs)| {
                let r = accs.len() as f64;
                let mean = accs.iter().sum::<f64>() / r;
                let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / r;
                BudgetPoint {
                    n: *n,
                    mean_accuracy: mean,
                    std_accuracy: var.sqrt(),
                }
            })
            .collect();
        Ok(BudgetCurve {
            method: method.into(),
            repeats,
            points,
        })
    }

    pub fn accuracy_at(&self, n: usize) -> Option<f64> {
        self.points.iter().find(|p| p.n == n).map(|p| p.mean_accuracy)
    }
}

/// Smallest `n` whose mean accuracy reaches `reference_accuracy`.
pub fn budget_to_match(curve: &BudgetCurve, reference_accuracy: f64) -> Option<usize> {
    curve
        .points
        .iter()
        .find(|p| p.mean_accuracy >= reference_accuracy)
        .map(|p| p.n)
}
