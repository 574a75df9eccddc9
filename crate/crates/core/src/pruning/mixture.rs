//! Two-component Weibull mixture fitted by bounded maximum likelihood.
//!
//! The optimizer is EM. The E-step computes posterior responsibilities in
//! log space. The M-step clamps the mixing weight to the configured bounds
//! (the bounded maximizer of a concave 1-D objective) and refits each
//! component by weighted Weibull MLE: the shape solves the profile score
//! equation by safeguarded Newton, and the scale follows in closed form.
//!
//! Initialization is fixed: the sorted data is split at its median and each
//! half is matched by method of moments, with equal weights. Identical inputs
//! give bit-identical fits.

use serde::{Deserialize, Serialize};

use super::weibull::WeibullParams;
use crate::error::{Error, Result};

/// Shape parameters are confined to this range. Repeated data values would
/// otherwise let one component collapse into a spike with unbounded likelihood.
pub const SHAPE_MIN: f64 = 0.05;
pub const SHAPE_MAX: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub weight_min: f64,
    pub weight_max: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            weight_min: 0.2,
            weight_max: 0.8,
            max_iter: 200,
            tol: 1e-8,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.weight_min > 0.0
            && self.weight_min <= self.weight_max
            && self.weight_max < 1.0
            && self.max_iter > 0
            && self.tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid mixture fit settings: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureFit {
    pub comp1: WeibullParams,
    pub comp2: WeibullParams,
    pub w1: f64,
    pub w2: f64,
    /// 1 or 2: the component with the larger distribution mean.
    pub high_index: u8,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl MixtureFit {
    pub fn from_parts(comp1: WeibullParams, comp2: WeibullParams, w1: f64) -> Self {
        let (m1, m2) = (comp1.mean(), comp2.mean());
        let high_index = if m1 > m2 || (m1 == m2 && comp1.scale >= comp2.scale) { 1 } else { 2 };
        MixtureFit {
            comp1,
            comp2,
            w1,
            w2: 1.0 - w1,
            high_index,
            loglik: f64::NAN,
            converged: false,
            iterations: 0,
        }
    }

    /// `(weight, params)` of the high-probability component.
    pub fn high(&self) -> (f64, &WeibullParams) {
        if self.high_index == 1 {
            (self.w1, &self.comp1)
        } else {
            (self.w2, &self.comp2)
        }
    }

    pub fn low(&self) -> (f64, &WeibullParams) {
        if self.high_index == 1 {
            (self.w2, &self.comp2)
        } else {
            (self.w1, &self.comp1)
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.w1 * self.comp1.pdf(x) + self.w2 * self.comp2.pdf(x)
    }

    pub fn loglik_of(&self, data: &[f64]) -> f64 {
        data.iter()
            .map(|&x| log_sum_exp(self.w1.ln() + self.comp1.ln_pdf(x), self.w2.ln() + self.comp2.ln_pdf(x)))
            .sum()
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn check_data(data: &[f64]) -> Result<()> {
    if data.len() < 4 {
        return Err(Error::FitDegenerate(format!("need at least 4 points, got {}", data.len())));
    }
    if let Some(x) = data.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::FitDegenerate(format!("data point {x} is not positive and finite")));
    }
    if data.iter().all(|&x| x == data[0]) {
        return Err(Error::FitDegenerate("all data points are identical".into()));
    }
    Ok(())
}

/// Shape whose Weibull coefficient of variation equals `cv`.
fn shape_from_cv(cv: f64) -> f64 {
    let cv2 = |k: f64| (libm::lgamma(1.0 + 2.0 / k) - 2.0 * libm::lgamma(1.0 + 1.0 / k)).exp() - 1.0;
    let target = cv * cv;
    if !(target > cv2(SHAPE_MAX)) {
        return SHAPE_MAX;
    }
    if target >= cv2(SHAPE_MIN) {
        return SHAPE_MIN;
    }
    // cv2 is decreasing in k; bisect on log k.
    let (mut lo, mut hi) = (SHAPE_MIN.ln(), SHAPE_MAX.ln());
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if cv2(mid.exp()) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

fn method_of_moments(values: &[f64]) -> WeibullParams {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let shape = shape_from_cv(var.sqrt() / mean);
    let scale = (mean.ln() - libm::lgamma(1.0 + 1.0 / shape)).exp();
    WeibullParams { shape, scale }
}

/// Weighted Weibull MLE given `ln x` and non-negative weights.
///
/// The shape solves `sum w x^k ln x / sum w x^k - 1/k - mean_w(ln x) = 0`,
/// which is increasing in `k`.
fn weighted_mle(ln_x: &[f64], weights: &[f64], start: WeibullParams) -> WeibullParams {
    let total: f64 = weights.iter().sum();
    if !(total > 1e-12) {
        return start;
    }
    let mean_ln = ln_x.iter().zip(weights).map(|(l, w)| l * w).sum::<f64>() / total;
    let max_ln = ln_x
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);

    // Returns (score, derivative, ln sum w x^k - shift, shift).
    let eval = |k: f64| {
        let shift = k * max_ln;
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for (l, w) in ln_x.iter().zip(weights) {
            let e = w * (k * l - shift).exp();
            a += e;
            b += e * l;
            c += e * l * l;
        }
        let m1 = b / a;
        let var = (c / a - m1 * m1).max(0.0);
        (m1 - 1.0 / k - mean_ln, var + 1.0 / (k * k), a, shift)
    };

    let (mut lo, mut hi) = (SHAPE_MIN, SHAPE_MAX);
    let shape = if eval(hi).0 <= 0.0 {
        hi
    } else if eval(lo).0 >= 0.0 {
        lo
    } else {
        let mut k = start.shape.clamp(lo, hi);
        for _ in 0..200 {
            let (g, dg, _, _) = eval(k);
            if g == 0.0 {
                break;
            }
            if g > 0.0 {
                hi = k;
            } else {
                lo = k;
            }
            let newton = k - g / dg;
            let next = if newton > lo && newton < hi { newton } else { (lo * hi).sqrt() };
            let done = (next - k).abs() <= 1e-13 * k || hi / lo - 1.0 <= 1e-14;
            k = next;
            if done {
                break;
            }
        }
        k
    };
    let (_, _, a, shift) = eval(shape);
    let scale = ((shift + (a / total).ln()) / shape).exp();
    match WeibullParams::new(shape, scale) {
        Ok(p) => p,
        Err(_) => start,
    }
}

/// Fit a two-component Weibull mixture to positive data by bounded EM.
///
/// Non-convergence within `max_iter` is not an error: the best iterate is
/// returned with `converged = false`.
pub fn fit_mixture(data: &[f64], config: &FitConfig) -> Result<MixtureFit> {
    config.validate()?;
    check_data(data)?;

    let ln_x: Vec<f64> = data.iter().map(|x| x.ln()).collect();
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let half = sorted.len() / 2;
    let mut comp1 = method_of_moments(&sorted[half..]);
    let mut comp2 = method_of_moments(&sorted[..half]);
    let mut w1 = 0.5f64.clamp(config.weight_min, config.weight_max);

    let n = data.len();
    let mut resp = vec![0.0; n];
    let mut resp2 = vec![0.0; n];
    let mut best: Option<(f64, WeibullParams, WeibullParams, f64)> = None;
    let mut prev_ll = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..=config.max_iter {
        // E-step, also yielding the log-likelihood of the current parameters.
        let (lw1, lw2) = (w1.ln(), (1.0 - w1).ln());
        let mut ll = 0.0;
        for (i, &x) in data.iter().enumerate() {
            let a = lw1 + comp1.ln_pdf(x);
            let b = lw2 + comp2.ln_pdf(x);
            let lse = log_sum_exp(a, b);
            ll += lse;
            resp[i] = if lse == f64::NEG_INFINITY || lse.is_nan() { 0.5 } else { (a - lse).exp() };
            resp2[i] = 1.0 - resp[i];
        }
        if best.as_ref().is_none_or(|b| ll > b.0) {
            best = Some((ll, comp1, comp2, w1));
        }
        iterations = iter;
        if (ll - prev_ll).abs() < config.tol {
            converged = true;
            break;
        }
        if iter == config.max_iter {
            break;
        }
        prev_ll = ll;

        // M-step.
        w1 = (resp.iter().sum::<f64>() / n as f64).clamp(config.weight_min, config.weight_max);
        comp1 = weighted_mle(&ln_x, &resp, comp1);
        comp2 = weighted_mle(&ln_x, &resp2, comp2);
    }

    let (loglik, comp1, comp2, w1) = best.expect("at least one E-step runs");
    Ok(MixtureFit {
        loglik,
        converged,
        iterations,
        ..MixtureFit::from_parts(comp1, comp2, w1)
    })
}

/// Posterior probability that `x` came from the high component.
///
/// Falls back to `x >= mean(high)` when both component densities vanish.
pub fn p_high(x: f64, fit: &MixtureFit) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("P_High needs x > 0, got {x}")));
    }
    let (wh, high) = fit.high();
    let (wl, low) = fit.low();
    let lh = wh.ln() + high.ln_pdf(x);
    let ll = wl.ln() + low.ln_pdf(x);
    let lh_dead = lh.is_nan() || lh == f64::NEG_INFINITY;
    let ll_dead = ll.is_nan() || ll == f64::NEG_INFINITY;
    Ok(match (lh_dead, ll_dead) {
        (true, true) => {
            if x >= high.mean() {
                1.0
            } else {
                0.0
            }
        }
        (true, false) => 0.0,
        (false, true) => 1.0,
        (false, false) => 1.0 / (1.0 + (ll - lh).exp()),
    })
}
