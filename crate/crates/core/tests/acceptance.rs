//! Acceptance checks, one test per criterion. Each prints a single line:
//! `criterion NN <name>: PASS|FAIL (<details>) [<seconds>s / limit <s>s]`.
//!
//! Criteria run one at a time so that their wall-clock budgets are measured
//! without interference from each other.

use std::path::Path;
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use confidence_lab::analysis::{
    degeneration_diagnostic, empirical_prune_failure_rate, estimator_functional, fit_rate, hoeffding_bound,
    model_error_comparison, monte_carlo_error, pc_closed_form, pc_exact_form, ppl_closed_form, sc_closed_form,
    IdealInstance, RateScale, Regime,
};
use confidence_lab::metrics::{budget_to_match, ece, reliability_bins, BudgetCurve};
use confidence_lab::oracle::{derive_seed, exact_estimator_moments, rng_from_seed, sample_batch, uniform};
use confidence_lab::pruning::{fit_mixture, p_high, prune, MixtureFit, WeibullParams};
use confidence_lab::{
    estimate, pc_confidence, rpc_confidence, select_answer, AnswerLabel, EstimatorKind, FitConfig, OracleSpec,
    ReasoningPath, SampleBatch, Target,
};

static SERIAL: Mutex<()> = Mutex::new(());

fn report(id: u32, name: &str, ok: bool, details: String, elapsed: Duration, limit: Option<f64>) {
    let secs = elapsed.as_secs_f64();
    let in_time = limit.is_none_or(|l| secs < l);
    let verdict = if ok && in_time { "PASS" } else { "FAIL" };
    let limit = limit.map(|l| format!(" / limit {l}s")).unwrap_or_default();
    println!("criterion {id:02} {name}: {verdict} ({details}) [{secs:.2}s{limit}]");
    assert!(ok, "criterion {id} failed: {details}");
    assert!(in_time, "criterion {id} exceeded its time budget");
}

fn run<F: FnOnce() -> (bool, String)>(id: u32, name: &str, limit: Option<f64>, body: F) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let (ok, details) = body();
    report(id, name, ok, details, start.elapsed(), limit);
}

fn label(s: &str) -> AnswerLabel {
    AnswerLabel::new(s)
}

/// All probability vectors of length `m` on a 0.1 grid with positive entries.
fn simplex_grid(m: usize) -> Vec<Vec<f64>> {
    fn rec(m: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<f64>>) {
        if m == 1 {
            prefix.push(left);
            out.push(prefix.iter().map(|&t| t as f64 / 10.0).collect());
            prefix.pop();
            return;
        }
        for t in 1..left {
            prefix.push(t);
            rec(m - 1, left - t, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, 10, &mut Vec::new(), &mut out);
    // Float sums of tenths may miss 1 by an ulp; renormalize the last entry.
    for v in &mut out {
        let head: f64 = v[..m - 1].iter().sum();
        v[m - 1] = 1.0 - head;
    }
    out
}

#[test]
fn criterion_01_decomposition_identity() {
    run(1, "SC decomposition identity", Some(5.0), || {
        let labelings: &[&[&str]] = &[&["A"], &["A", "B"], &["A", "A"], &["A", "B", "C"], &["A", "A", "B"], &["A", "B", "B"], &["B", "A", "A"]];
        let cfg = FitConfig::default();
        let (mut cases, mut worst) = (0usize, 0.0f64);
        for answers in labelings {
            let grid = if answers.len() == 1 { vec![vec![1.0]] } else { simplex_grid(answers.len()) };
            for probs in grid {
                let oracle = OracleSpec::from_strs(&probs, answers, "A").unwrap();
                for truth_target in ["A", "B"] {
                    let target = Target::Answer(label(truth_target));
                    for n in 1..=6 {
                        let f = estimator_functional(EstimatorKind::Sc, &target, &oracle, &cfg);
                        let e = exact_estimator_moments(&oracle, n, f, &target).unwrap();
                        let gap = (e.reasoning_error - (e.mse + e.model_error)).abs();
                        worst = worst.max(gap);
                        cases += 1;
                    }
                }
            }
        }
        (worst <= 1e-12, format!("{cases} (oracle, target, n) cases, max |total - (est + model)| = {worst:.2e}"))
    });
}

fn enumerate(oracle: &OracleSpec, kind: EstimatorKind, target: &Target, n: usize) -> f64 {
    let cfg = FitConfig::default();
    exact_estimator_moments(oracle, n, estimator_functional(kind, target, oracle, &cfg), target)
        .unwrap()
        .estimation_error
}

#[test]
fn criterion_02_closed_form_equivalence() {
    run(2, "closed forms vs enumeration", Some(30.0), || {
        let ps = [0.1, 0.3, 0.5, 0.7, 0.9];
        // SC: answer A with mass p, scored as the correct or an incorrect answer.
        let (mut sc_pts, mut sc_worst) = (0, 0.0f64);
        for &p in &ps {
            for n in 1..=4 {
                for correct in [true, false] {
                    let truth = if correct { "A" } else { "B" };
                    let o = OracleSpec::from_strs(&[p * 0.5, p * 0.5, 1.0 - p], &["A", "A", "B"], truth).unwrap();
                    let got = enumerate(&o, EstimatorKind::Sc, &Target::Answer(label("A")), n);
                    sc_worst = sc_worst.max((got - sc_closed_form(p, n, correct).unwrap().estimation_error).abs());
                    sc_pts += 1;
                }
            }
        }
        // PPL: path 0 with probability p; the rest of the mass on two paths.
        let (mut ppl_pts, mut ppl_worst) = (0, 0.0f64);
        for &p in &ps {
            for n in 1..=4 {
                for correct in [true, false] {
                    let truth = if correct { "A" } else { "B" };
                    let rest = (1.0 - p) / 2.0;
                    let o = OracleSpec::from_strs(&[p, rest, 1.0 - p - rest], &["A", "B", "C"], truth).unwrap();
                    let got = enumerate(&o, EstimatorKind::Ppl, &Target::Path(0), n);
                    ppl_worst = ppl_worst.max((got - ppl_closed_form(p, n, correct).unwrap().estimation_error).abs());
                    ppl_pts += 1;
                }
            }
        }
        // PC: answer A spread over k equal paths, the rest on one path of B.
        let (mut pc_pts, mut pc_worst, mut exact_worst) = (0, 0.0f64, 0.0f64);
        for &p in &[0.3, 0.6, 0.9] {
            for k in 1..=3usize {
                for n in 1..=4 {
                    for correct in [true, false] {
                        let truth = if correct { "A" } else { "B" };
                        let mut probs = vec![p / k as f64; k];
                        probs.push(1.0 - p);
                        let mut answers = vec!["A"; k];
                        answers.push("B");
                        let o = OracleSpec::from_strs(&probs, &answers, truth).unwrap();
                        let got = enumerate(&o, EstimatorKind::Pc, &Target::Answer(label("A")), n);
                        pc_worst = pc_worst.max((got - pc_closed_form(p, k, n, correct).unwrap().estimation_error).abs());
                        exact_worst = exact_worst.max((got - pc_exact_form(p, k, n, correct).unwrap().estimation_error).abs());
                        pc_pts += 1;
                    }
                }
            }
        }
        let ok = sc_worst <= 1e-9 && ppl_worst <= 1e-9 && pc_worst <= 1e-9 && sc_pts >= 20 && ppl_pts >= 20 && pc_pts >= 20;
        (
            ok,
            format!(
                "SC {sc_pts} pts max dev {sc_worst:.1e}; PPL {ppl_pts} pts max dev {ppl_worst:.1e}; \
                 PC published form {pc_pts} pts max dev {pc_worst:.1e}; PC exact form max dev {exact_worst:.1e}"
            ),
        )
    });
}

#[test]
fn criterion_03_convergence_rates() {
    run(3, "convergence rates", Some(120.0), || {
        let cfg = FitConfig::default();
        let trials = 100_000;
        let sc_oracle = OracleSpec::from_strs(&[0.6, 0.4], &["A", "B"], "A").unwrap();
        let target = Target::Answer(label("A"));
        let ns: Vec<usize> = (2..=9).map(|e| 1usize << e).collect();
        let mut mse = Vec::new();
        let mut decomposed = Vec::new();
        for (i, &n) in ns.iter().enumerate() {
            let mc = monte_carlo_error(&sc_oracle, EstimatorKind::Sc, &target, n, trials, derive_seed(31, i as u64), &cfg).unwrap();
            mse.push(mc.mse);
            decomposed.push(mc.estimation_error);
        }
        let sc_fit = fit_rate(&ns, &mse, RateScale::LogLog).unwrap();
        let sc_fit_decomposed = fit_rate(&ns, &decomposed, RateScale::LogLog).unwrap();

        let pc_oracle = OracleSpec::from_strs(&[0.3, 0.3, 0.4], &["A", "A", "B"], "A").unwrap();
        let pc_ns: Vec<usize> = (2..=10).map(|h| 2 * h).collect();
        let mut pc_err = Vec::new();
        for (i, &n) in pc_ns.iter().enumerate() {
            let mc = monte_carlo_error(&pc_oracle, EstimatorKind::Pc, &target, n, trials, derive_seed(37, i as u64), &cfg).unwrap();
            pc_err.push(mc.estimation_error);
        }
        let pc_fit = fit_rate(&pc_ns, &pc_err, RateScale::SemiLog).unwrap();
        let want = 0.7f64.ln();
        let sc_ok = (sc_fit.slope + 1.0).abs() <= 0.1;
        let pc_ok = ((pc_fit.slope - want) / want).abs() <= 0.1;
        (
            sc_ok && pc_ok,
            format!(
                "SC log-log slope {:.4} (decomposed {:.4}) over n 4..512; PC semilog slope {:.4} vs ln 0.7 = {:.4} over n 4..20",
                sc_fit.slope, sc_fit_decomposed.slope, pc_fit.slope, want
            ),
        )
    });
}

#[test]
fn criterion_04_degeneration() {
    run(4, "degeneration to linear regime", Some(1.0), || {
        let mut worst = 0.0f64;
        let mut all_linear = true;
        for n in 0..=100 {
            let d = degeneration_diagnostic(0.001, n).unwrap();
            worst = worst.max((d.ratio - 1.0).abs());
            all_linear &= d.regime == Regime::Linear;
        }
        (worst <= 0.05 && all_linear, format!("max |ratio - 1| = {worst:.5} over n 0..100, regime linear throughout: {all_linear}"))
    });
}

#[test]
fn criterion_05_hoeffding_guarantee() {
    run(5, "pruning guarantee", Some(60.0), || {
        let spot = hoeffding_bound(2, 3, 0.7, 0.2);
        let exact = 1.0 - (-8.0f64 / 3.0).exp();
        let spot_ok = (spot - exact).abs() <= 1e-6;
        let cases = [
            ("k=1", OracleSpec::from_strs(&[0.5, 0.3, 0.2], &["A", "B", "C"], "A").unwrap(), 0.4, 3),
            ("k=2", OracleSpec::from_strs(&[0.45, 0.15, 0.4], &["A", "A", "B"], "A").unwrap(), 0.2, 4),
            ("k=3", OracleSpec::from_strs(&[0.2, 0.15, 0.15, 0.5], &["A", "A", "A", "B"], "A").unwrap(), 0.155, 4),
        ];
        let mut ok = spot_ok;
        let mut parts = vec![format!("spot {spot:.7} vs 1-exp(-8/3) = {exact:.7}")];
        for (i, (name, oracle, tau, n)) in cases.iter().enumerate() {
            let r = empirical_prune_failure_rate(oracle, *n, 1000, derive_seed(5, i as u64), *tau).unwrap();
            ok &= r.within_bound();
            parts.push(format!("{name}: rate {:.3} <= bound {:.3} + 3*{:.3}", r.failure_rate, r.mean_bound, r.stderr));
        }
        (ok, parts.join("; "))
    });
}

fn draw_mixture(seed: u64, n: usize) -> (Vec<f64>, Vec<bool>) {
    let high = WeibullParams::new(2.0, 0.8).unwrap();
    let low = WeibullParams::new(1.5, 0.1).unwrap();
    let mut rng = rng_from_seed(seed);
    let mut xs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let is_high = uniform(&mut rng) < 0.5;
        xs.push(if is_high { high } else { low }.quantile(uniform(&mut rng)));
        labels.push(is_high);
    }
    (xs, labels)
}

#[test]
fn criterion_06_mixture_recovery() {
    run(6, "Weibull mixture recovery", Some(5.0), || {
        let (xs, labels) = draw_mixture(2024, 128);
        let fit = fit_mixture(&xs, &FitConfig::default()).unwrap();
        let agree = xs
            .iter()
            .zip(&labels)
            .filter(|(x, l)| (p_high(**x, &fit).unwrap() >= 0.5) == **l)
            .count();
        let truth = MixtureFit::from_parts(WeibullParams::new(2.0, 0.8).unwrap(), WeibullParams::new(1.5, 0.1).unwrap(), 0.5);
        let true_ll = truth.loglik_of(&xs);
        let ok = agree * 10 >= 128 * 9 && fit.loglik >= true_ll - 0.01 * 128.0;
        (ok, format!("agreement {agree}/128, fit loglik {:.3} vs true {:.3}", fit.loglik, true_ll))
    });
}

#[test]
fn criterion_07_pruning_safety() {
    run(7, "pruning safety", Some(30.0), || {
        let cfg = FitConfig::default();
        let answers = ["A", "B", "C", "D"];
        let mut rng = rng_from_seed(7);
        let (mut empty, mut violations, mut fallback) = (0usize, 0usize, 0usize);
        for b in 0..10_000 {
            let size = 1 + (uniform(&mut rng) * 128.0) as usize;
            // A pool of distinct paths; duplicates arise by drawing from it.
            let pool_size = 1 + (uniform(&mut rng) * size as f64) as usize;
            let pool: Vec<ReasoningPath> = (0..pool_size)
                .map(|i| {
                    let p = 10f64.powf(-6.0 * uniform(&mut rng));
                    let a = answers[(uniform(&mut rng) * 4.0) as usize];
                    ReasoningPath::with_prob(format!("b{b}-p{i}"), label(a), p).unwrap()
                })
                .collect();
            let paths = (0..size).map(|_| pool[(uniform(&mut rng) * pool_size as f64) as usize].clone()).collect();
            let batch = SampleBatch::new(format!("b{b}"), paths);
            let probs: Vec<f64> = batch.unique_paths().iter().map(|p| p.path_prob).collect();
            let report = prune(&probs, &cfg).unwrap();
            if report.retained_indices.is_empty() {
                empty += 1;
            }
            fallback += report.fallback_used as usize;
            let pc = pc_confidence(&batch).unwrap();
            let (rpc, _) = rpc_confidence(&batch, &cfg).unwrap();
            for e in &pc.entries {
                if rpc.get(&e.answer) > e.value {
                    violations += 1;
                }
            }
        }
        (
            empty == 0 && violations == 0,
            format!("10000 batches ({fallback} mean-rule only): {empty} empty retained sets, {violations} RPC > PC entries"),
        )
    });
}

#[test]
fn criterion_08_model_error_ordering() {
    run(8, "model-error ordering", Some(5.0), || {
        let hand = IdealInstance {
            paths: vec![(0.3, label("A")), (0.3, label("A"))],
            truth: label("A"),
        };
        let h = model_error_comparison(&hand).unwrap();
        let hand_ok = (h.sc_model_error - 0.16).abs() < 1e-12 && (h.ppl_model_error - 0.98).abs() < 1e-12;

        let mut rng = rng_from_seed(8);
        let (mut ordered, mut strict_needed, mut strict_seen) = (0, 0, 0);
        for _ in 0..100 {
            let correct = 1 + (uniform(&mut rng) * 4.0) as usize;
            let wrong = (uniform(&mut rng) * 5.0) as usize;
            let raw: Vec<f64> = (0..correct + wrong).map(|_| 0.05 + uniform(&mut rng)).collect();
            let scale = (0.5 + 0.5 * uniform(&mut rng)) / raw.iter().sum::<f64>();
            let paths = raw
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let a = if i < correct { "A".to_string() } else { format!("W{i}") };
                    (r * scale, label(&a))
                })
                .collect();
            let c = model_error_comparison(&IdealInstance { paths, truth: label("A") }).unwrap();
            if c.sc_model_error <= c.ppl_model_error + 1e-15 {
                ordered += 1;
            }
            if correct >= 2 {
                strict_needed += 1;
                if c.sc_model_error < c.ppl_model_error {
                    strict_seen += 1;
                }
            }
        }
        (
            hand_ok && ordered == 100 && strict_seen == strict_needed,
            format!(
                "hand case {:.2} vs {:.2}; SC <= PPL on {ordered}/100; strict on {strict_seen}/{strict_needed} multi-path instances",
                h.sc_model_error, h.ppl_model_error
            ),
        )
    });
}

#[test]
fn criterion_09_calibration() {
    run(9, "calibration error", None, || {
        let hand = ece(&[(0.9, true), (0.9, false), (0.1, false)], 10).unwrap();
        let calibrated: Vec<(f64, bool)> = [(0.25, true), (0.25, false), (0.25, false), (0.25, false), (0.75, true), (0.75, true), (0.75, true), (0.75, false)].to_vec();
        let zero = ece(&calibrated, 10).unwrap();
        let mut rng = rng_from_seed(9);
        let mut worst = 0.0f64;
        for _ in 0..200 {
            let n = 1 + (uniform(&mut rng) * 300.0) as usize;
            let items: Vec<(f64, bool)> = (0..n).map(|_| (uniform(&mut rng), uniform(&mut rng) < 0.6)).collect();
            let bins = reliability_bins(&items, 10).unwrap();
            let recomputed: f64 = bins
                .bins
                .iter()
                .map(|b| b.count as f64 / n as f64 * (b.accuracy - b.confidence).abs())
                .sum();
            worst = worst.max((recomputed - ece(&items, 10).unwrap()).abs());
        }
        (
            hand == 0.3 && zero == 0.0 && worst <= 1e-12,
            format!("hand case {hand:?}, calibrated set {zero:?}, max recompute gap {worst:.1e}"),
        )
    });
}

/// Correct answer on a few likely paths; wrong answers on many unlikely ones.
fn concentrated_oracle(correct: &[f64], wrong: &[(&str, usize)], wrong_mass: &[f64]) -> OracleSpec {
    let mut probs = correct.to_vec();
    let mut answers: Vec<String> = vec!["A".into(); correct.len()];
    for ((name, count), mass) in wrong.iter().zip(wrong_mass) {
        for _ in 0..*count {
            probs.push(mass / *count as f64);
            answers.push(name.to_string());
        }
    }
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    let refs: Vec<&str> = answers.iter().map(String::as_str).collect();
    OracleSpec::from_strs(&probs, &refs, "A").unwrap()
}

fn selection_accuracy(suite: &[OracleSpec], kind: EstimatorKind, n: usize, seeds: std::ops::Range<u64>, base: u64) -> f64 {
    let cfg = FitConfig::default();
    let (mut hits, mut total) = (0usize, 0usize);
    for (oi, o) in suite.iter().enumerate() {
        for s in seeds.clone() {
            let batch = sample_batch(o, n, derive_seed(derive_seed(base, oi as u64), s)).unwrap();
            let map = estimate(kind, &batch, &cfg).unwrap();
            let (a, _) = select_answer(&map).unwrap();
            hits += (*a == *o.truth()) as usize;
            total += 1;
        }
    }
    hits as f64 / total as f64
}

#[test]
fn criterion_10_method_ordering() {
    run(10, "directional method ordering", Some(120.0), || {
        // Misaligned: the correct answer has the largest mass, but wrong
        // answers together outvote it at small n.
        let misaligned = vec![
            concentrated_oracle(&[0.2, 0.2], &[("B", 35), ("C", 25)], &[0.35, 0.25]),
            concentrated_oracle(&[0.34], &[("B", 30), ("C", 30), ("D", 20)], &[0.26, 0.24, 0.16]),
            concentrated_oracle(&[0.15, 0.12, 0.1], &[("B", 40), ("C", 40)], &[0.33, 0.30]),
        ];
        let sc16 = selection_accuracy(&misaligned, EstimatorKind::Sc, 16, 0..200, 100);
        let rpc16 = selection_accuracy(&misaligned, EstimatorKind::Rpc, 16, 0..200, 100);

        // Aligned: the correct answer also leads the vote in expectation.
        let aligned = vec![
            concentrated_oracle(&[0.25, 0.2], &[("B", 40), ("C", 30)], &[0.3, 0.25]),
            concentrated_oracle(&[0.4], &[("B", 50), ("C", 50)], &[0.32, 0.28]),
            concentrated_oracle(&[0.2, 0.15, 0.1], &[("B", 60), ("C", 20)], &[0.35, 0.2]),
        ];
        let grid = [4usize, 8, 16, 32, 64];
        let curve = |kind: EstimatorKind| {
            let runs: Vec<(usize, Vec<f64>)> = grid
                .iter()
                .map(|&n| (n, (0..10u64).map(|r| selection_accuracy(&aligned, kind, n, r * 20..(r + 1) * 20, 200)).collect()))
                .collect();
            BudgetCurve::from_runs(kind.name(), &runs).unwrap()
        };
        let sc_curve = curve(EstimatorKind::Sc);
        let rpc_curve = curve(EstimatorKind::Rpc);
        let sc64 = sc_curve.accuracy_at(64).unwrap();
        let needed = budget_to_match(&rpc_curve, sc64);
        let ok = rpc16 >= sc16 && needed.is_some_and(|n| n <= 32);
        (
            ok,
            format!("misaligned n=16: RPC {rpc16:.3} vs SC {sc16:.3}; aligned: SC@64 = {sc64:.3}, RPC reaches it at n = {needed:?}"),
        )
    });
}

fn conflab(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_conflab"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run conflab")
}

fn write_cli_inputs(d: &Path) {
    std::fs::write(
        d.join("oracle.json"),
        r#"[{"path_probs": [0.3, 0.3, 0.4], "path_answers": ["A", "A", "B"], "truth": "A"},
            {"path_probs": [0.6, 0.4], "path_answers": ["7", "8"], "truth": "7"}]"#,
    )
    .unwrap();
    std::fs::write(d.join("run.toml"), "seed = 11\nn_grid = [2, 4, 8, 16]\nrepeats = 3\ntrials = 2000\n").unwrap();
    let mut jsonl = String::new();
    for (q, rows) in [("q1", 12), ("q2", 7)] {
        for i in 0..rows {
            let answer = if i % 3 == 0 { "x" } else { "y" };
            let lps: Vec<String> = (0..4).map(|t| format!("-{}", 0.05 * (i + t + 1) as f64)).collect();
            jsonl.push_str(&format!(
                "{{\"problem_id\":\"{q}\",\"text\":\"{q} path {}\",\"token_logprobs\":[{}],\"answer\":\"{answer}\"}}\n",
                i % 5,
                lps.join(",")
            ));
        }
    }
    std::fs::write(d.join("paths.jsonl"), jsonl).unwrap();
}

#[test]
fn criterion_11_cli_determinism() {
    run(11, "CLI determinism", None, || {
        let root = tempfile::tempdir().unwrap();
        let runs = [root.path().join("a"), root.path().join("b")];
        for d in &runs {
            std::fs::create_dir(d).unwrap();
            write_cli_inputs(d);
        }
        let commands: Vec<(&str, Vec<&str>)> = vec![
            ("simulate", vec!["--oracle", "oracle.json", "--report", "sel.csv"]),
            ("convergence", vec!["--oracle", "oracle.json"]),
            ("decompose", vec!["--oracle", "oracle.json"]),
            ("estimate", vec!["--input", "paths.jsonl", "--report", "prune.json"]),
            ("fit-mixture", vec!["--input", "paths.jsonl"]),
            ("metrics", vec!["--input", "sel.csv", "--report", "bins.json"]),
            ("config", vec![]),
        ];
        let mut failures = Vec::new();
        let mut checked = 0;
        for format in ["csv", "json"] {
            for (cmd, extra) in &commands {
                let out = format!("{cmd}-{format}.out");
                let mut args = vec![*cmd, "--config", "run.toml", "--format", format, "--out", out.as_str()];
                args.extend(extra.iter().copied());
                let side = args.iter().position(|a| *a == "--report").map(|i| args[i + 1]);
                let mut outputs = Vec::new();
                for d in &runs {
                    let status = conflab(&args, d);
                    if !status.status.success() {
                        failures.push(format!("{cmd} ({format}) exited with {}: {}", status.status, String::from_utf8_lossy(&status.stderr)));
                    }
                    let mut bytes = std::fs::read(d.join(&out)).unwrap_or_default();
                    if let Some(side) = side {
                        bytes.extend(std::fs::read(d.join(side)).unwrap_or_default());
                    }
                    outputs.push(bytes);
                }
                checked += 1;
                if outputs[0] != outputs[1] || outputs[0].is_empty() {
                    failures.push(format!("{cmd} ({format}) differs between runs or is empty"));
                }
            }
        }
        (failures.is_empty(), if failures.is_empty() { format!("{checked} command/format pairs byte-identical across two runs") } else { failures.join("; ") })
    });
}
