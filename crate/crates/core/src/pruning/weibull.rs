use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-parameter Weibull distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    pub shape: f64,
    pub scale: f64,
}

impl WeibullParams {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape.is_finite() && shape > 0.0 && scale.is_finite() && scale > 0.0) {
            return Err(Error::Domain(format!(
                "Weibull parameters must be finite and positive, got shape {shape}, scale {scale}"
            )));
        }
        Ok(WeibullParams { shape, scale })
    }

    /// Log density for `x > 0`; `-inf` where the density underflows.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        let z = x / self.scale;
        (self.shape / self.scale).ln() + (self.shape - 1.0) * z.ln() - z.powf(self.shape)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(-(x / self.scale).powf(self.shape)).exp_m1()
        }
    }

    /// Distribution mean `scale * Gamma(1 + 1/shape)`.
    pub fn mean(&self) -> f64 {
        self.scale * libm::tgamma(1.0 + 1.0 / self.shape)
    }

    /// Inverse CDF at `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        self.scale * (-(-u).ln_1p()).powf(1.0 / self.shape)
    }
}

/// `f(x; k, λ) = (k/λ)(x/λ)^(k-1) exp(-(x/λ)^k)` for `x > 0`.
pub fn weibull_pdf(x: f64, params: &WeibullParams) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("Weibull density needs x > 0, got {x}")));
    }
    let z = x / params.scale;
    Ok(params.shape / params.scale * z.powf(params.shape - 1.0) * (-z.powf(params.shape)).exp())
}
