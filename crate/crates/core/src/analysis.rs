//! Reasoning-error analysis: closed forms, their exact and Monte Carlo
//! counterparts, the degeneration diagnostic, the pruning guarantee and the
//! idealized model-error comparison.
//!
//! Throughout, the estimation error of a method is its reasoning error
//! `E[(p_hat - 1[correct])^2]` minus the model error `(p - 1[correct])^2`.
//! For unbiased SC this equals the mean squared error `E[(p_hat - p)^2]`;
//! for PPL and PC it differs by a cross term and may be negative.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorKind};
use crate::oracle::{derive_seed, rng_from_seed, OracleSpec, Target};
use crate::paths::{group_by_answer, AnswerLabel, ReasoningPath};
use crate::pruning::FitConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorBreakdown {
    /// Signed: the PPL and PC closed forms go negative for incorrect targets.
    pub estimation_error: f64,
    pub model_error: f64,
    pub total: f64,
}

impl ErrorBreakdown {
    pub fn new(estimation_error: f64, model_error: f64) -> Self {
        ErrorBreakdown {
            estimation_error,
            model_error,
            total: estimation_error + model_error,
        }
    }
}

fn check_prob(p: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must lie in [0, 1], got {p}")))
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidSampleSize)
    } else {
        Ok(())
    }
}

fn indicator(is_correct: bool) -> f64 {
    if is_correct {
        1.0
    } else {
        0.0
    }
}

/// Self-consistency: estimation `p(1-p)/n`, model `(p - 1)^2` or `p^2`.
pub fn sc_closed_form(p: f64, n: usize, is_correct: bool) -> Result<ErrorBreakdown> {
    check_prob(p, "answer probability")?;
    check_n(n)?;
    let ind = indicator(is_correct);
    Ok(ErrorBreakdown::new(p * (1.0 - p) / n as f64, (p - ind).powi(2)))
}

/// Perplexity: estimation `(1-p)^n p (2 1[correct] - p)`.
pub fn ppl_closed_form(p_path: f64, n: usize, is_correct: bool) -> Result<ErrorBreakdown> {
    check_prob(p_path, "path probability")?;
    check_n(n)?;
    let ind = indicator(is_correct);
    let miss = (1.0 - p_path).powi(n as i32);
    Ok(ErrorBreakdown::new(miss * p_path * (2.0 * ind - p_path), (p_path - ind).powi(2)))
}

fn pc_alpha(p_answer: f64, k: usize) -> Result<f64> {
    check_prob(p_answer, "answer probability")?;
    if k == 0 {
        return Err(Error::Domain("an answer needs at least one path (k >= 1)".into()));
    }
    let per_path = p_answer / k as f64;
    if per_path > 1.0 {
        return Err(Error::Domain(format!("p/k = {per_path} exceeds 1")));
    }
    Ok(1.0 - per_path)
}

/// Perplexity consistency, published form: with `alpha = 1 - p/k`,
/// estimation `alpha^n p (2 1[correct] - (1 + alpha^n) p)`.
///
/// This form treats `(1 - alpha^n) alpha^n p^2` as the mean squared error
/// of the estimate, which is its variance only when `k = 1`. It therefore
/// omits the squared bias `alpha^(2n) p^2` and, for `k > 1`, the correlation
/// between paths. [`pc_exact_form`] gives the exact value.
pub fn pc_closed_form(p_answer: f64, k: usize, n: usize, is_correct: bool) -> Result<ErrorBreakdown> {
    let alpha = pc_alpha(p_answer, k)?;
    check_n(n)?;
    let ind = indicator(is_correct);
    let an = alpha.powi(n as i32);
    Ok(ErrorBreakdown::new(
        an * p_answer * (2.0 * ind - (1.0 + an) * p_answer),
        (p_answer - ind).powi(2),
    ))
}

/// Exact perplexity-consistency error when the answer's mass is split over
/// `k` equally likely paths (each `q = p/k`).
///
/// The estimate is `q D` with `D` the number of distinct answer paths drawn:
/// `E[D] = k(1 - (1-q)^n)` and
/// `E[D^2] = E[D] + k(k-1)(1 - 2(1-q)^n + (1-2q)^n)`.
pub fn pc_exact_form(p_answer: f64, k: usize, n: usize, is_correct: bool) -> Result<ErrorBreakdown> {
    let alpha = pc_alpha(p_answer, k)?;
    check_n(n)?;
    let ind = indicator(is_correct);
    let q = p_answer / k as f64;
    let kf = k as f64;
    let miss_one = alpha.powi(n as i32);
    let miss_two = (1.0 - 2.0 * q).powi(n as i32);
    let mean_d = kf * (1.0 - miss_one);
    let second_d = mean_d + kf * (kf - 1.0) * (1.0 - 2.0 * miss_one + miss_two);
    let reasoning = q * q * second_d - 2.0 * ind * q * mean_d + ind;
    let model = (p_answer - ind).powi(2);
    Ok(ErrorBreakdown::new(reasoning - model, model))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Exponential,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Degeneration {
    /// `(1 - p)^n`
    pub alpha_n: f64,
    /// `1 / (1 + n p)`
    pub linear_approx: f64,
    pub ratio: f64,
    pub regime: Regime,
}

/// Compare `(1-p)^n` with its small-`np` approximation `1/(1+np)` (`k = 1`).
///
/// The regime is linear when the two agree within 5%.
pub fn degeneration_diagnostic(p: f64, n: usize) -> Result<Degeneration> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("p must lie in (0, 1), got {p}")));
    }
    let alpha_n = (1.0 - p).powi(n as i32);
    let linear_approx = 1.0 / (1.0 + n as f64 * p);
    let ratio = alpha_n / linear_approx;
    let regime = if (0.95..=1.05).contains(&ratio) {
        Regime::Linear
    } else {
        Regime::Exponential
    };
    Ok(Degeneration {
        alpha_n,
        linear_approx,
        ratio,
        regime,
    })
}

/// Probability lower bound that pruning at threshold `tau` is optimal:
/// `1 - exp(-2 k_hat k^2 (1 - tau/(1-alpha))^2)`.
///
/// Returns 0 (vacuous) when `tau > 1 - alpha`.
pub fn hoeffding_bound(k: usize, k_hat: usize, alpha: f64, tau: f64) -> f64 {
    1.0 - hoeffding_failure_bound(k, k_hat, alpha, tau)
}

/// The complementary failure probability, `exp(...)`, or 1 when vacuous.
pub fn hoeffding_failure_bound(k: usize, k_hat: usize, alpha: f64, tau: f64) -> f64 {
    let per_path = 1.0 - alpha;
    if !(per_path > 0.0) || tau > per_path {
        return 1.0;
    }
    let gap = 1.0 - tau / per_path;
    let kf = k as f64;
    (-2.0 * k_hat as f64 * kf * kf * gap * gap).exp().clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PruneFailureReport {
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
    /// Binomial standard error of `failure_rate`.
    pub stderr: f64,
    /// Failure bound averaged over the per-trial `k_hat`.
    pub mean_bound: f64,
    pub k: usize,
    pub alpha: f64,
    pub tau: f64,
}

impl PruneFailureReport {
    /// `failure_rate <= mean_bound + 3 stderr`
    pub fn within_bound(&self) -> bool {
        self.failure_rate <= self.mean_bound + 3.0 * self.stderr
    }
}

/// Monte Carlo counterpart of the pruning guarantee.
///
/// Each trial draws `n` paths. `k_hat` counts draws whose answer is correct;
/// the trial fails when none is drawn or when the mean probability of those
/// draws falls below `tau`. `k` is the number of correct oracle paths and
/// `alpha = 1 - p(y)/k`.
pub fn empirical_prune_failure_rate(
    oracle: &OracleSpec,
    n: usize,
    trials: usize,
    seed: u64,
    tau: f64,
) -> Result<PruneFailureReport> {
    check_n(n)?;
    if trials < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 trials, got {trials}")));
    }
    let truth = oracle.truth();
    let k = oracle.paths_for(truth);
    if k == 0 {
        return Err(Error::InvalidArgument("the correct answer has no oracle paths".into()));
    }
    let correct: Vec<bool> = oracle.path_answers().iter().map(|a| a == truth).collect();
    let alpha = 1.0 - crate::oracle::true_answer_prob(oracle, truth) / k as f64;

    let mut failures = 0usize;
    let mut bound_sum = 0.0;
    for t in 0..trials {
        let mut rng = rng_from_seed(derive_seed(seed, t as u64));
        let (mut k_hat, mut mass) = (0usize, 0.0);
        for _ in 0..n {
            let i = oracle.draw_index(&mut rng);
            if correct[i] {
                k_hat += 1;
                mass += oracle.path_probs()[i];
            }
        }
        if k_hat == 0 || mass / (k_hat as f64) < tau {
            failures += 1;
        }
        bound_sum += hoeffding_failure_bound(k, k_hat, alpha, tau);
    }
    let rate = failures as f64 / trials as f64;
    Ok(PruneFailureReport {
        trials,
        failures,
        failure_rate: rate,
        stderr: (rate * (1.0 - rate) / trials as f64).sqrt(),
        mean_bound: bound_sum / trials as f64,
        k,
        alpha,
        tau,
    })
}

/// An infinite-sample instance: unique paths with probabilities and answers.
#[derive(Debug, Clone)]
pub struct IdealInstance {
    pub paths: Vec<(f64, AnswerLabel)>,
    pub truth: AnswerLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelErrorComparison {
    pub sc_model_error: f64,
    pub ppl_model_error: f64,
}

/// Model errors of SC (answer-level) and PPL (path-level) with infinite
/// sampling, where SC's confidence equals the summed path probability.
///
/// Requires every incorrect path to carry its own answer.
pub fn model_error_comparison(instance: &IdealInstance) -> Result<ModelErrorComparison> {
    if instance.paths.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some((p, _)) = instance.paths.iter().find(|(p, _)| !(0.0..=1.0).contains(p)) {
        return Err(Error::Assumption(format!("path probability {p} outside [0, 1]")));
    }
    let total: f64 = instance.paths.iter().map(|(p, _)| p).sum();
    if total > 1.0 + 1e-12 {
        return Err(Error::Assumption(format!("path probabilities sum to {total} > 1")));
    }
    let paths: Vec<ReasoningPath> = instance
        .paths
        .iter()
        .enumerate()
        .map(|(i, (p, a))| ReasoningPath {
            text: format!("path-{i}"),
            token_logprobs: Vec::new(),
            answer: a.clone(),
            ext_score: None,
            path_prob: *p,
        })
        .collect();

    let mut sc = 0.0;
    for group in group_by_answer(&paths) {
        let correct = *group.answer == instance.truth;
        if !correct && group.paths.len() > 1 {
            return Err(Error::Assumption(format!(
                "incorrect answer '{}' is shared by {} paths",
                group.answer,
                group.paths.len()
            )));
        }
        let mass: f64 = group.paths.iter().map(|p| p.path_prob).sum();
        sc += (mass - indicator(correct)).powi(2);
    }
    let ppl = paths
        .iter()
        .map(|p| (p.path_prob - indicator(p.answer == instance.truth)).powi(2))
        .sum();
    Ok(ModelErrorComparison {
        sc_model_error: sc,
        ppl_model_error: ppl,
    })
}

/// Monte Carlo estimate of an estimator's error on one target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloError {
    pub trials: usize,
    /// Mean of `(p_hat - p)^2`.
    pub mse: f64,
    pub mse_stderr: f64,
    /// Mean of `(p_hat - 1[correct])^2 - (p - 1[correct])^2`.
    pub estimation_error: f64,
    pub estimation_stderr: f64,
    pub mean_estimate: f64,
}

/// Estimated confidence of `target` from drawn path indices.
///
/// Matches `estimate(kind, batch)` on the batch those indices denote; the
/// index form avoids building batches inside hot Monte Carlo loops.
pub fn index_estimate(
    oracle: &OracleSpec,
    kind: EstimatorKind,
    target: &Target,
    indices: &[usize],
    config: &FitConfig,
) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let target_answer = match target {
        Target::Answer(a) => a,
        Target::Path(i) => &oracle.path_answers()[*i],
    };
    let probs = oracle.path_probs();
    let answers = oracle.path_answers();
    match kind {
        EstimatorKind::Sc => {
            let hits = indices.iter().filter(|&&i| answers[i] == *target_answer).count();
            Ok(hits as f64 / indices.len() as f64)
        }
        EstimatorKind::Ppl => match target {
            Target::Path(t) => Ok(if indices.contains(t) { probs[*t] } else { 0.0 }),
            Target::Answer(_) => Err(Error::InvalidArgument("PPL scores paths, not answers".into())),
        },
        EstimatorKind::Pc => {
            let mut seen = vec![false; oracle.num_paths()];
            let mut sum = 0.0;
            for &i in indices {
                if !seen[i] {
                    seen[i] = true;
                    if answers[i] == *target_answer {
                        sum += probs[i];
                    }
                }
            }
            Ok(sum)
        }
        EstimatorKind::Rpc => {
            let batch = oracle.batch_from_indices("mc", indices);
            Ok(estimate(kind, &batch, config)?.get(target_answer))
        }
    }
}

/// Build an estimator functional for [`crate::oracle::exact_estimator_moments`].
pub fn estimator_functional<'a>(
    kind: EstimatorKind,
    target: &'a Target,
    oracle: &'a OracleSpec,
    config: &'a FitConfig,
) -> impl Fn(&crate::paths::SampleBatch) -> Result<f64> + 'a {
    move |batch| {
        let map = estimate(kind, batch, config)?;
        Ok(match (kind, target) {
            (EstimatorKind::Ppl, Target::Path(i)) => map.get_path(&oracle.path(*i).text),
            (EstimatorKind::Ppl, Target::Answer(_)) => {
                return Err(Error::InvalidArgument("PPL scores paths, not answers".into()))
            }
            (_, Target::Answer(a)) => map.get(a),
            (_, Target::Path(i)) => map.get(&oracle.path_answers()[*i]),
        })
    }
}

/// Monte Carlo reasoning-error estimate over `trials` independent batches.
///
/// Trial `t` uses seed `derive_seed(seed, t)`, so results do not depend on
/// evaluation order.
pub fn monte_carlo_error(
    oracle: &OracleSpec,
    kind: EstimatorKind,
    target: &Target,
    n: usize,
    trials: usize,
    seed: u64,
    config: &FitConfig,
) -> Result<MonteCarloError> {
    check_n(n)?;
    if trials < 2 {
        return Err(Error::InvalidArgument("need at least 2 trials".into()));
    }
    let p = target.true_prob(oracle);
    let ind = target.indicator(oracle);
    let model = (p - ind).powi(2);
    let (mut s_mse, mut ss_mse, mut s_est, mut ss_est, mut s_val) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut indices = vec![0usize; n];
    for t in 0..trials {
        let mut rng = rng_from_seed(derive_seed(seed, t as u64));
        for slot in indices.iter_mut() {
            *slot = oracle.draw_index(&mut rng);
        }
        let v = index_estimate(oracle, kind, target, &indices, config)?;
        let sq = (v - p).powi(2);
        let est = (v - ind).powi(2) - model;
        s_mse += sq;
        ss_mse += sq * sq;
        s_est += est;
        ss_est += est * est;
        s_val += v;
    }
    let tf = trials as f64;
    let stderr = |s: f64, ss: f64| {
        let mean = s / tf;
        ((ss / tf - mean * mean).max(0.0) / (tf - 1.0) * tf / tf).sqrt()
    };
    Ok(MonteCarloError {
        trials,
        mse: s_mse / tf,
        mse_stderr: stderr(s_mse, ss_mse),
        estimation_error: s_est / tf,
        estimation_stderr: stderr(s_est, ss_est),
        mean_estimate: s_val / tf,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RateScale {
    /// `ln err` against `ln n`: slope is the polynomial order.
    LogLog,
    /// `ln err` against `n`: slope is the log of the geometric rate.
    SemiLog,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub scale: RateScale,
    pub ns: Vec<usize>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the regression in log space.
    pub residual: f64,
}

/// Least-squares convergence-rate fit of positive errors over increasing `n`.
pub fn fit_rate(ns: &[usize], errors: &[f64], scale: RateScale) -> Result<RateFit> {
    if ns.len() != errors.len() {
        return Err(Error::InvalidArgument("ns and errors differ in length".into()));
    }
    if ns.len() < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 points, got {}", ns.len())));
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) || ns[0] == 0 {
        return Err(Error::InvalidArgument("n values must be positive and strictly increasing".into()));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidArgument(format!("error {e} is not positive; cannot take logs")));
    }
    let xs: Vec<f64> = ns
        .iter()
        .map(|&n| match scale {
            RateScale::LogLog => (n as f64).ln(),
            RateScale::SemiLog => n as f64,
        })
        .collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(RateFit {
        scale,
        ns: ns.to_vec(),
        errors: errors.to_vec(),
        slope,
        intercept,
        residual,
    })
}
