//! Anisotropic squared-exponential GP regression on standardized inputs.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{minimize_from, Bounds, OptimizerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub lengthscales: Vec<f64>,
    pub signal_var: f64,
    pub nugget: f64,
}

const LOG_LS: (f64, f64) = (-4.6, 2.3); // about 0.01 .. 10
const LOG_SIGNAL: (f64, f64) = (-4.6, 4.6);
const LOG_NUGGET: (f64, f64) = (-23.0, 0.0); // 1e-10 .. 1

impl GpHyper {
    fn from_log(v: &[f64]) -> Self {
        let d = v.len() - 2;
        Self { lengthscales: v[..d].iter().map(|x| x.exp()).collect(), signal_var: v[d].exp(), nugget: v[d + 1].exp() }
    }

    fn log_bounds(dims: usize) -> Bounds {
        let mut lo = vec![LOG_LS.0; dims];
        let mut hi = vec![LOG_LS.1; dims];
        lo.extend([LOG_SIGNAL.0, LOG_NUGGET.0]);
        hi.extend([LOG_SIGNAL.1, LOG_NUGGET.1]);
        Bounds { lower: lo, upper: hi }
    }

    fn default_log(dims: usize) -> Vec<f64> {
        let mut v = vec![(0.3f64).ln(); dims];
        v.extend([0.0, (1e-4f64).ln()]);
        v
    }
}

/// Correlation `exp(-Σ (a_d - b_d)² / 2ℓ_d²)`.
#[inline]
fn se_corr(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    let mut s = 0.0;
    for d in 0..a.len() {
        let t = (a[d] - b[d]) / ls[d];
        s += t * t;
    }
    (-0.5 * s).exp()
}

fn gram(inputs: &[Vec<f64>], h: &GpHyper, noise: &[f64]) -> DMatrix<f64> {
    let m = inputs.len();
    let mut k = DMatrix::zeros(m, m);
    for i in 0..m {
        k[(i, i)] = h.signal_var + h.nugget + noise[i];
        for j in 0..i {
            let v = h.signal_var * se_corr(&inputs[i], &inputs[j], &h.lengthscales);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

fn neg_log_lik(inputs: &[Vec<f64>], y: &DVector<f64>, noise: &[f64], h: &GpHyper) -> f64 {
    let Some(ch) = gram(inputs, h, noise).cholesky() else {
        return f64::INFINITY;
    };
    let alpha = ch.solve(y);
    let logdet: f64 = ch.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    0.5 * y.dot(&alpha) + logdet
}

/// Trained GP: standardized inputs, standardized targets, fixed noise.
#[derive(Debug, Clone)]
pub(crate) struct Gp {
    pub inputs: Vec<Vec<f64>>,
    pub hyper: GpHyper,
    pub alpha: DVector<f64>,
    pub chol: Cholesky<f64, Dyn>,
}

impl Gp {
    pub fn new(inputs: Vec<Vec<f64>>, y: &[f64], noise: &[f64], hyper: GpHyper) -> Result<Self> {
        let ch = gram(&inputs, &hyper, noise)
            .cholesky()
            .ok_or_else(|| Error::Numerical("emulator covariance is not positive definite".into()))?;
        let alpha = ch.solve(&DVector::from_column_slice(y));
        Ok(Self { inputs, hyper, alpha, chol: ch })
    }

    /// Maximum-likelihood hyperparameters; the flag is set when the search
    /// failed and a fallback was used.
    pub fn fit(inputs: Vec<Vec<f64>>, y: &[f64], noise: &[f64], cfg: &OptimizerConfig) -> Result<(Self, bool)> {
        let dims = inputs.first().map_or(0, Vec::len);
        let yv = DVector::from_column_slice(y);
        let bounds = GpHyper::log_bounds(dims);
        let start = GpHyper::default_log(dims);
        let found = minimize_from(
            |v| neg_log_lik(&inputs, &yv, noise, &GpHyper::from_log(v)),
            &bounds,
            cfg,
            &[start.clone()],
        );
        match found {
            Ok(r) if r.value.is_finite() => {
                // The likelihood is nearly flat in a small nugget, and the
                // simplex rarely walks it down. Profile it on a grid and keep
                // the smallest value within one log-likelihood unit of the
                // optimum so noise-free data are interpolated.
                let nll = |v: &[f64]| neg_log_lik(&inputs, &yv, noise, &GpHyper::from_log(v));
                let mut best = r.theta.clone();
                for k in 0..=10 {
                    let mut v = r.theta.clone();
                    v[dims + 1] = LOG_NUGGET.0 + k as f64 * (LOG_NUGGET.1 - LOG_NUGGET.0) / 10.0;
                    if v[dims + 1] < best[dims + 1] && nll(&v) <= r.value + 1.0 {
                        best = v;
                    }
                }
                Ok((Gp::new(inputs, y, noise, GpHyper::from_log(&best))?, false))
            }
            _ => {
                // raise the nugget until the covariance factorizes
                let mut v = start;
                let d = dims;
                for _ in 0..12 {
                    if let Ok(gp) = Gp::new(inputs.clone(), y, noise, GpHyper::from_log(&v)) {
                        return Ok((gp, true));
                    }
                    v[d + 1] += 2.3;
                }
                Err(Error::Numerical("no hyperparameters give a usable emulator".into()))
            }
        }
    }

    pub fn kvec(&self, u: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.inputs.len(),
            self.inputs.iter().map(|p| self.hyper.signal_var * se_corr(u, p, &self.hyper.lengthscales)),
        )
    }

    pub fn mean(&self, u: &[f64]) -> f64 {
        self.kvec(u).dot(&self.alpha)
    }

    /// Mean and latent (noise-free) variance.
    pub fn predict(&self, u: &[f64]) -> (f64, f64) {
        let k = self.kvec(u);
        let v = self.chol.solve(&k);
        (k.dot(&self.alpha), (self.hyper.signal_var - k.dot(&v)).max(0.0))
    }

    pub fn k_inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}
