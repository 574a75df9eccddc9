//! Experiment drivers behind the `conflab` subcommands.
//!
//! Each command computes its full output in memory and returns it as bytes;
//! the binary writes files only after a command succeeds. Seeds for repeat
//! `r` are `derive_seed(seed, r)`, and cells iterate in configuration order,
//! so output bytes depend only on the configuration and the inputs.

use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use serde::Serialize;

use crate::analysis::{
    estimator_functional, fit_rate, monte_carlo_error, pc_closed_form, pc_exact_form, ppl_closed_form,
    sc_closed_form, RateScale,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::estimators::{estimate, rpc_confidence, EstimatorKind};
use crate::ingest::{load_jsonl, write_rows, OutputFormat, ResultRow};
use crate::metrics::{reliability_bins, CalibrationBins};
use crate::oracle::{derive_seed, exact_estimator_moments, sample_batch, OracleSpec, Target};
use crate::paths::{select_answer, unique_paths, ConfidenceMap, SampleBatch};
use crate::pruning::fit_mixture;

/// Bytes for the primary output and, when requested, the side report.
#[derive(Debug, Default)]
pub struct CommandOutput {
    pub main: Vec<u8>,
    pub report: Option<Vec<u8>>,
}

fn ser_err(e: impl std::fmt::Display) -> Error {
    Error::Serialize(e.to_string())
}

fn to_csv<T: Serialize>(rows: &[T], header: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).map_err(ser_err)?;
    for r in rows {
        w.serialize(r).map_err(ser_err)?;
    }
    w.into_inner().map_err(ser_err)
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value).map_err(ser_err)?;
    out.push(b'\n');
    Ok(out)
}

fn require<'a>(path: &'a Option<std::path::PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::InvalidArgument(format!("{flag} is required for this command")))
}

fn load_oracles(config: &RunConfig) -> Result<Vec<OracleSpec>> {
    let oracles = OracleSpec::load_json(require(&config.oracle, "--oracle")?)?;
    if oracles.is_empty() {
        return Err(Error::InvalidOracle("oracle file holds no oracles".into()));
    }
    Ok(oracles)
}

/// Confidence used for scoring: the selected entry's value, optionally
/// divided by the map total.
fn scored_confidence(map: &ConfidenceMap, value: f64, normalize: bool) -> f64 {
    let total = map.total();
    if normalize && total > 0.0 {
        value / total
    } else {
        value
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateRow {
    pub method: String,
    pub n: usize,
    pub repeat: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub ece: f64,
}

const SIMULATE_HEADER: [&str; 6] = ["method", "n", "repeat", "seed", "accuracy", "ece"];

/// Sample every oracle at every budget and repeat, and score each method.
///
/// One row per (method, n, repeat) with accuracy and ECE over oracles. The
/// report lists every selection in export format.
pub fn cmd_simulate(config: &RunConfig, with_report: bool) -> Result<CommandOutput> {
    let oracles = load_oracles(config)?;
    let methods = &config.estimators;
    // selections[(method, n, repeat)] = one (row) per oracle
    let mut cells: IndexMap<(usize, usize, usize), Vec<ResultRow>> = IndexMap::new();
    for (mi, _) in methods.iter().enumerate() {
        for &n in &config.n_grid {
            for r in 0..config.repeats {
                cells.insert((mi, n, r), Vec::with_capacity(oracles.len()));
            }
        }
    }
    for r in 0..config.repeats {
        let repeat_seed = derive_seed(config.seed, r as u64);
        for &n in &config.n_grid {
            let n_seed = derive_seed(repeat_seed, n as u64);
            for (oi, oracle) in oracles.iter().enumerate() {
                // Every method sees the same batch.
                let batch = sample_batch(oracle, n, derive_seed(n_seed, oi as u64))?;
                for (mi, &kind) in methods.iter().enumerate() {
                    let map = estimate(kind, &batch, &config.fit)?;
                    let (answer, value) = select_answer(&map)?;
                    cells.get_mut(&(mi, n, r)).expect("cell").push(ResultRow {
                        problem_id: format!("oracle-{oi}/r{r}"),
                        method: kind.name().to_string(),
                        n,
                        selected_answer: answer.raw().to_string(),
                        confidence: scored_confidence(&map, value, config.normalize_confidence),
                        correct: Some(answer == oracle.truth()),
                    });
                }
            }
        }
    }

    let mut rows = Vec::with_capacity(cells.len());
    for (&(mi, n, r), sel) in &cells {
        let scored: Vec<(f64, bool)> = sel.iter().map(|s| (s.confidence.clamp(0.0, 1.0), s.correct == Some(true))).collect();
        let hits = scored.iter().filter(|(_, c)| *c).count();
        rows.push(SimulateRow {
            method: methods[mi].name().to_string(),
            n,
            repeat: r,
            seed: derive_seed(config.seed, r as u64),
            accuracy: hits as f64 / scored.len() as f64,
            ece: reliability_bins(&scored, config.bins)?.ece(),
        });
    }
    let main = match config.format {
        OutputFormat::Csv => to_csv(&rows, &SIMULATE_HEADER)?,
        OutputFormat::Json => to_json(&rows)?,
    };
    let report = if with_report {
        let all: Vec<ResultRow> = cells.into_values().flatten().collect();
        let mut buf = Vec::new();
        write_rows(&all, &mut buf, config.format)?;
        Some(buf)
    } else {
        None
    };
    Ok(CommandOutput { main, report })
}

/// The scored target for `kind` on `oracle`: the correct answer, or for PPL
/// the most probable path that yields it.
fn target_for(kind: EstimatorKind, oracle: &OracleSpec) -> Option<Target> {
    if kind != EstimatorKind::Ppl {
        return Some(Target::Answer(oracle.truth().clone()));
    }
    let mut best: Option<usize> = None;
    for (i, a) in oracle.path_answers().iter().enumerate() {
        if a == oracle.truth() && best.is_none_or(|b| oracle.path_probs()[i] > oracle.path_probs()[b]) {
            best = Some(i);
        }
    }
    best.map(Target::Path)
}

/// Closed-form and exact-form estimation errors where they exist.
fn analytic_errors(kind: EstimatorKind, oracle: &OracleSpec, target: &Target, n: usize) -> Result<(Option<f64>, Option<f64>)> {
    let p = target.true_prob(oracle);
    let correct = target.indicator(oracle) == 1.0;
    Ok(match kind {
        EstimatorKind::Sc => {
            let e = sc_closed_form(p, n, correct)?.estimation_error;
            (Some(e), Some(e))
        }
        EstimatorKind::Ppl => {
            let e = ppl_closed_form(p, n, correct)?.estimation_error;
            (Some(e), Some(e))
        }
        EstimatorKind::Pc => {
            let truth = oracle.truth();
            let k = oracle.paths_for(truth);
            if k == 0 {
                return Ok((None, None));
            }
            let closed = pc_closed_form(p, k, n, correct)?.estimation_error;
            let probs: Vec<f64> = oracle
                .path_answers()
                .iter()
                .zip(oracle.path_probs())
                .filter(|(a, _)| *a == truth)
                .map(|(_, &q)| q)
                .collect();
            let equal = probs.iter().all(|q| (q - probs[0]).abs() <= 1e-12);
            let exact = if equal {
                Some(pc_exact_form(p, k, n, correct)?.estimation_error)
            } else {
                None
            };
            (Some(closed), exact)
        }
        EstimatorKind::Rpc => (None, None),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub oracle: usize,
    pub method: String,
    pub n: usize,
    pub mc_est_err: f64,
    pub mc_stderr: f64,
    pub closed_form_est_err: Option<f64>,
    pub exact_est_err: Option<f64>,
}

const CONVERGENCE_HEADER: [&str; 7] = [
    "oracle",
    "method",
    "n",
    "mc_est_err",
    "mc_stderr",
    "closed_form_est_err",
    "exact_est_err",
];

#[derive(Debug, Clone, Serialize)]
pub struct RateSummary {
    pub oracle: usize,
    pub method: String,
    pub scale: RateScale,
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    pub points: usize,
}

/// Monte Carlo estimation error per budget against the matching closed form,
/// followed by a convergence-rate fit per method.
pub fn cmd_convergence(config: &RunConfig) -> Result<CommandOutput> {
    let oracles = load_oracles(config)?;
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for (oi, oracle) in oracles.iter().enumerate() {
        let oracle_seed = derive_seed(config.seed, oi as u64);
        for &kind in &config.estimators {
            let Some(target) = target_for(kind, oracle) else {
                log::warn!("oracle {oi}: no correct path to score {kind} against, skipping");
                continue;
            };
            let mut ns = Vec::new();
            let mut errs = Vec::new();
            for &n in &config.n_grid {
                let mc = monte_carlo_error(oracle, kind, &target, n, config.trials, derive_seed(oracle_seed, n as u64), &config.fit)?;
                let (closed, exact) = analytic_errors(kind, oracle, &target, n)?;
                if mc.estimation_error > 0.0 {
                    ns.push(n);
                    errs.push(mc.estimation_error);
                }
                rows.push(ConvergenceRow {
                    oracle: oi,
                    method: kind.name().to_string(),
                    n,
                    mc_est_err: mc.estimation_error,
                    mc_stderr: mc.estimation_stderr,
                    closed_form_est_err: closed,
                    exact_est_err: exact,
                });
            }
            let scale = if kind == EstimatorKind::Sc { RateScale::LogLog } else { RateScale::SemiLog };
            match fit_rate(&ns, &errs, scale) {
                Ok(f) => fits.push(RateSummary {
                    oracle: oi,
                    method: kind.name().to_string(),
                    scale,
                    slope: f.slope,
                    intercept: f.intercept,
                    residual: f.residual,
                    points: ns.len(),
                }),
                Err(e) => log::info!("oracle {oi} {kind}: no rate fit ({e})"),
            }
        }
    }
    let main = match config.format {
        OutputFormat::Csv => {
            let mut out = to_csv(&rows, &CONVERGENCE_HEADER)?;
            for f in &fits {
                let scale = match f.scale {
                    RateScale::LogLog => "loglog",
                    RateScale::SemiLog => "semilog",
                };
                writeln!(
                    out,
                    "# rate oracle={} method={} scale={} slope={} intercept={} residual={} points={}",
                    f.oracle, f.method, scale, f.slope, f.intercept, f.residual, f.points
                )
                .map_err(ser_err)?;
            }
            out
        }
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                rows: &'a [ConvergenceRow],
                rate_fits: &'a [RateSummary],
            }
            to_json(&Doc { rows: &rows, rate_fits: &fits })?
        }
    };
    Ok(CommandOutput { main, report: None })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecomposeRow {
    pub oracle: usize,
    pub method: String,
    pub n: usize,
    /// `exact` (enumeration) or `monte_carlo`.
    pub source: &'static str,
    pub estimation_error: f64,
    pub model_error: f64,
    pub total: f64,
    pub mse: f64,
    pub cross_term: f64,
}

const DECOMPOSE_HEADER: [&str; 9] = [
    "oracle",
    "method",
    "n",
    "source",
    "estimation_error",
    "model_error",
    "total",
    "mse",
    "cross_term",
];

fn within_limit(paths: usize, n: usize, limit: u64) -> bool {
    let mut count: u64 = 1;
    for _ in 0..n {
        match count.checked_mul(paths as u64) {
            Some(c) if c <= limit => count = c,
            _ => return false,
        }
    }
    true
}

/// Reasoning error split into estimation and model error, exactly where the
/// enumeration fits under `enumeration_limit`, by Monte Carlo otherwise.
///
/// For SC the split is checked against the mean squared error: the cross
/// term must vanish to 1e-12 under enumeration.
pub fn cmd_decompose(config: &RunConfig) -> Result<CommandOutput> {
    let oracles = load_oracles(config)?;
    let mut rows = Vec::new();
    for (oi, oracle) in oracles.iter().enumerate() {
        let oracle_seed = derive_seed(config.seed, oi as u64);
        for &kind in &config.estimators {
            let Some(target) = target_for(kind, oracle) else {
                log::warn!("oracle {oi}: no correct path to score {kind} against, skipping");
                continue;
            };
            for &n in &config.n_grid {
                let row = if within_limit(oracle.num_paths(), n, config.enumeration_limit) {
                    let e = exact_estimator_moments(oracle, n, estimator_functional(kind, &target, oracle, &config.fit), &target)?;
                    if kind == EstimatorKind::Sc && e.cross_term.abs() > 1e-12 {
                        return Err(Error::Assumption(format!(
                            "oracle {oi}, n={n}: SC reasoning error differs from mse + model error by {}",
                            e.cross_term
                        )));
                    }
                    DecomposeRow {
                        oracle: oi,
                        method: kind.name().to_string(),
                        n,
                        source: "exact",
                        estimation_error: e.estimation_error,
                        model_error: e.model_error,
                        total: e.reasoning_error,
                        mse: e.mse,
                        cross_term: e.cross_term,
                    }
                } else {
                    let mc = monte_carlo_error(oracle, kind, &target, n, config.trials, derive_seed(oracle_seed, n as u64), &config.fit)?;
                    let p = target.true_prob(oracle);
                    let model = (p - target.indicator(oracle)).powi(2);
                    let total = mc.estimation_error + model;
                    DecomposeRow {
                        oracle: oi,
                        method: kind.name().to_string(),
                        n,
                        source: "monte_carlo",
                        estimation_error: mc.estimation_error,
                        model_error: model,
                        total,
                        mse: mc.mse,
                        cross_term: total - mc.mse - model,
                    }
                };
                rows.push(row);
            }
        }
    }
    let main = match config.format {
        OutputFormat::Csv => to_csv(&rows, &DECOMPOSE_HEADER)?,
        OutputFormat::Json => to_json(&rows)?,
    };
    Ok(CommandOutput { main, report: None })
}

fn load_batches(config: &RunConfig, lenient: bool) -> Result<IndexMap<String, SampleBatch>> {
    load_jsonl(require(&config.input, "--input")?, config.prob_mode, lenient)
}

#[derive(Debug, Clone, Serialize)]
pub struct PruningSummary {
    pub problem_id: String,
    pub fallback_used: bool,
    pub mean_threshold: f64,
    pub retained: Vec<String>,
    pub removed: Vec<String>,
    pub fit: Option<crate::pruning::MixtureFit>,
}

/// Run the configured estimators on real sampled paths: one row per
/// (problem, method). The report records RPC's pruning per problem.
pub fn cmd_estimate(config: &RunConfig, lenient: bool, with_report: bool) -> Result<CommandOutput> {
    let batches = load_batches(config, lenient)?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (id, batch) in &batches {
        for &kind in &config.estimators {
            let map = estimate(kind, batch, &config.fit)?;
            let (answer, value) = select_answer(&map)?;
            rows.push(ResultRow {
                problem_id: id.clone(),
                method: kind.name().to_string(),
                n: batch.len(),
                selected_answer: answer.raw().to_string(),
                confidence: scored_confidence(&map, value, config.normalize_confidence),
                correct: None,
            });
        }
        if with_report {
            let (_, report) = rpc_confidence(batch, &config.fit)?;
            let unique = unique_paths(batch);
            reports.push(PruningSummary {
                problem_id: id.clone(),
                fallback_used: report.fallback_used,
                mean_threshold: report.mean_threshold,
                retained: report.retained_indices.iter().map(|&i| unique[i].text.clone()).collect(),
                removed: report.removed_indices.iter().map(|&i| unique[i].text.clone()).collect(),
                fit: report.fit,
            });
        }
    }
    let mut main = Vec::new();
    write_rows(&rows, &mut main, config.format)?;
    let report = if with_report { Some(to_json(&reports)?) } else { None };
    Ok(CommandOutput { main, report })
}

#[derive(Debug, Clone, Serialize)]
pub struct FitRow {
    pub problem_id: String,
    pub unique_paths: usize,
    /// `fit` or `degenerate`.
    pub status: &'static str,
    pub w_high: Option<f64>,
    pub shape_high: Option<f64>,
    pub scale_high: Option<f64>,
    pub w_low: Option<f64>,
    pub shape_low: Option<f64>,
    pub scale_low: Option<f64>,
    pub loglik: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
}

const FIT_HEADER: [&str; 12] = [
    "problem_id",
    "unique_paths",
    "status",
    "w_high",
    "shape_high",
    "scale_high",
    "w_low",
    "shape_low",
    "scale_low",
    "loglik",
    "iterations",
    "converged",
];

/// Fit the Weibull mixture to each problem's unique path probabilities.
pub fn cmd_fit_mixture(config: &RunConfig, lenient: bool) -> Result<CommandOutput> {
    let batches = load_batches(config, lenient)?;
    let mut rows = Vec::new();
    for (id, batch) in &batches {
        let probs: Vec<f64> = unique_paths(batch).iter().map(|p| p.path_prob).collect();
        let mut row = FitRow {
            problem_id: id.clone(),
            unique_paths: probs.len(),
            status: "degenerate",
            w_high: None,
            shape_high: None,
            scale_high: None,
            w_low: None,
            shape_low: None,
            scale_low: None,
            loglik: None,
            iterations: None,
            converged: None,
        };
        match fit_mixture(&probs, &config.fit) {
            Ok(fit) => {
                let (wh, high) = fit.high();
                let (wl, low) = fit.low();
                row.status = "fit";
                row.w_high = Some(wh);
                row.shape_high = Some(high.shape);
                row.scale_high = Some(high.scale);
                row.w_low = Some(wl);
                row.shape_low = Some(low.shape);
                row.scale_low = Some(low.scale);
                row.loglik = Some(fit.loglik);
                row.iterations = Some(fit.iterations);
                row.converged = Some(fit.converged);
            }
            Err(Error::FitDegenerate(reason)) => log::info!("{id}: {reason}"),
            Err(e) => return Err(e),
        }
        rows.push(row);
    }
    let main = match config.format {
        OutputFormat::Csv => to_csv(&rows, &FIT_HEADER)?,
        OutputFormat::Json => to_json(&rows)?,
    };
    Ok(CommandOutput { main, report: None })
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub method: String,
    pub n: usize,
    pub items: usize,
    pub accuracy: f64,
    pub ece: f64,
}

const METRICS_HEADER: [&str; 5] = ["method", "n", "items", "accuracy", "ece"];

#[derive(Debug, Clone, Serialize)]
pub struct BinsReport {
    pub method: String,
    pub n: usize,
    pub bins: CalibrationBins,
}

fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    // Either export format is accepted; JSON exports are arrays.
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())));
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, r) in reader.deserialize().enumerate() {
        rows.push(r.map_err(|e| {
            Error::Parse(vec![crate::error::LineError {
                line: i + 2,
                message: e.to_string(),
            }])
        })?);
    }
    Ok(rows)
}

/// Accuracy and ECE per (method, n) of an exported results file; rows with
/// unknown correctness are skipped. The report holds the reliability bins.
pub fn cmd_metrics(config: &RunConfig, with_report: bool) -> Result<CommandOutput> {
    let rows = read_results(require(&config.input, "--input")?)?;
    let mut groups: IndexMap<(String, usize), Vec<(f64, bool)>> = IndexMap::new();
    let mut skipped = 0usize;
    for r in &rows {
        match r.correct {
            Some(c) => groups
                .entry((r.method.clone(), r.n))
                .or_default()
                .push((r.confidence.clamp(0.0, 1.0), c)),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} row(s) without a correctness flag");
    }
    if groups.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut out = Vec::new();
    let mut bins = Vec::new();
    for ((method, n), scored) in &groups {
        let b = reliability_bins(scored, config.bins)?;
        out.push(MetricsRow {
            method: method.clone(),
            n: *n,
            items: scored.len(),
            accuracy: scored.iter().filter(|(_, c)| *c).count() as f64 / scored.len() as f64,
            ece: b.ece(),
        });
        bins.push(BinsReport {
            method: method.clone(),
            n: *n,
            bins: b,
        });
    }
    let main = match config.format {
        OutputFormat::Csv => to_csv(&out, &METRICS_HEADER)?,
        OutputFormat::Json => to_json(&out)?,
    };
    let report = if with_report { Some(to_json(&bins)?) } else { None };
    Ok(CommandOutput { main, report })
}
