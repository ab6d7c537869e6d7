//! Cross-validated choice of the penalty and length-scale.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::kpr::{fit_kpr_with, KernelFit, KprOptions};
use super::matern::MaternParams;
use crate::error::{Error, Result};
use crate::timeseries::TimeSeries;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvConfig {
    pub nu: f64,
    pub rhos: Vec<f64>,
    /// `None` uses [`default_kappa_grid`].
    pub kappas: Option<Vec<f64>>,
    pub folds: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { nu: 2.5, rhos: vec![0.05, 0.1, 0.2, 0.4], kappas: None, folds: 5 }
    }
}

/// Nine log-spaced penalties spanning two decades either side of
/// `n^(-2m/(2m+1))`, `m = ν + 1/2`, in increasing order.
pub fn default_kappa_grid(n: usize, nu: f64) -> Vec<f64> {
    let m = nu + 0.5;
    let centre = (n as f64).powf(-2.0 * m / (2.0 * m + 1.0));
    (-4..=4).map(|k| centre * 10f64.powf(k as f64 / 2.0)).collect()
}

fn poisson_loglik(y: f64, lam: f64) -> f64 {
    y * lam.ln() - lam - ln_gamma(y + 1.0)
}

/// Mean over folds of the held-out log-likelihood; `None` if any fold fails.
fn cv_score(x: &[f64], y: &[f64], kernel: MaternParams, kappa: f64, folds: usize) -> Option<f64> {
    let mut total = 0.0;
    for f in 0..folds {
        let (mut xt, mut yt, mut xh, mut yh) = (vec![], vec![], vec![], vec![]);
        for i in 0..x.len() {
            if i % folds == f {
                xh.push(x[i]);
                yh.push(y[i]);
            } else {
                xt.push(x[i]);
                yt.push(y[i]);
            }
        }
        let fit = fit_kpr_with(&xt, &yt, kernel, kappa, &KprOptions::default()).ok()?;
        let ll: f64 = xh.iter().zip(&yh).map(|(&u, &v)| poisson_loglik(v, fit.predict_lambda(u))).sum();
        if !ll.is_finite() {
            return None;
        }
        total += ll;
    }
    Some(total / folds as f64)
}

fn check_folds(n: usize, folds: usize) -> Result<()> {
    if folds < 2 || n < 2 * folds {
        return Err(Error::Argument(format!("{folds}-fold CV needs folds >= 2 and n >= {}, got n = {n}", 2 * folds)));
    }
    Ok(())
}

/// Best `(kernel, κ)` among candidates; ties go to the later (smoother) one.
fn best_of(x: &[f64], y: &[f64], cands: &[(MaternParams, f64)], folds: usize) -> Result<(MaternParams, f64)> {
    let scores: Vec<Option<f64>> = cands.par_iter().map(|&(k, kap)| cv_score(x, y, k, kap, folds)).collect();
    let mut best: Option<(f64, usize)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(s) = *s {
            if best.map_or(true, |(b, _)| s >= b) {
                best = Some((s, i));
            }
        }
    }
    best.map(|(_, i)| cands[i]).ok_or_else(|| Error::Numerical("every cross-validation candidate failed".into()))
}

/// Penalty maximizing the held-out Poisson log-likelihood over interleaved folds.
pub fn select_kappa_cv(data: &TimeSeries, kernel: MaternParams, grid: &[f64], folds: usize) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Argument("empty penalty grid".into()));
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    check_folds(data.n(), folds)?;
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let cands: Vec<_> = grid.iter().map(|&k| (kernel, k)).collect();
    Ok(best_of(&data.x, &data.y_f64(), &cands, folds)?.1)
}

/// Joint selection of `ρ` and `κ`.
pub fn select_kernel_cv(data: &TimeSeries, cfg: &CvConfig) -> Result<(MaternParams, f64)> {
    let kappas = match &cfg.kappas {
        Some(k) => k.clone(),
        None => default_kappa_grid(data.n(), cfg.nu),
    };
    if kappas.is_empty() || cfg.rhos.is_empty() {
        return Err(Error::Argument("empty cross-validation grid".into()));
    }
    let mut cands = Vec::new();
    for &kap in &kappas {
        for &rho in &cfg.rhos {
            cands.push((MaternParams::new(cfg.nu, rho)?, kap));
        }
    }
    // smoothing increases with κ, then with ρ
    cands.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.rho.total_cmp(&b.0.rho)));
    if cands.len() == 1 {
        return Ok(cands[0]);
    }
    check_folds(data.n(), cfg.folds)?;
    best_of(&data.x, &data.y_f64(), &cands, cfg.folds)
}

/// Select by CV, then fit on all of `data`.
pub fn fit_kpr_cv(data: &TimeSeries, cfg: &CvConfig) -> Result<KernelFit> {
    let (kernel, kappa) = select_kernel_cv(data, cfg)?;
    fit_kpr_with(&data.x, &data.y_f64(), kernel, kappa, &KprOptions::default())
}
