//! Deviance goodness-of-fit and the quasi-Poisson dispersion estimate.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::kpr::KernelFit;
use crate::error::{Error, Result};
use crate::timeseries::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub deviance: f64,
    /// Residual degrees of freedom, `n - tr(S)`; the reference chi-square
    /// has this many degrees of freedom.
    pub edf: f64,
    /// `tr(S)`, the degrees of freedom spent by the fit.
    pub model_df: f64,
    pub p_value: f64,
    /// `deviance / edf`.
    pub phi_hat: f64,
}

/// Poisson deviance `2 Σ (y log(y/μ) - (y - μ))`, with `0 log 0 = 0`.
pub fn poisson_deviance(y: &[f64], mu: &[f64]) -> f64 {
    2.0 * y
        .iter()
        .zip(mu)
        .map(|(&yi, &mi)| {
            let t = if yi > 0.0 { yi * (yi / mi).ln() } else { 0.0 };
            t - (yi - mi)
        })
        .sum::<f64>()
}

pub fn deviance_gof(fit: &KernelFit, data: &TimeSeries) -> Result<GofReport> {
    if data.n() != fit.n() {
        return Err(Error::Argument("fit was trained on a different series".into()));
    }
    let y = data.y_f64();
    let mu = fit.predict_many(&data.x);
    let deviance = poisson_deviance(&y, &mu).max(0.0);
    let edf = data.n() as f64 - fit.edf;
    if !(edf > 1e-8) {
        return Err(Error::Numerical(format!("residual degrees of freedom {edf} not positive")));
    }
    let p_value = if deviance == 0.0 {
        1.0
    } else {
        let chi = ChiSquared::new(edf).map_err(|e| Error::Numerical(e.to_string()))?;
        (1.0 - chi.cdf(deviance)).clamp(0.0, 1.0)
    };
    Ok(GofReport { deviance, edf, model_df: fit.edf, p_value, phi_hat: deviance / edf })
}
