//! Penalized kernel Poisson regression fitted by IRLS.
//!
//! Minimizes `(1/n) Σ (e^ξ_i - y_i ξ_i) + κ aᵀΦa` over `ξ = b + Σ a_i Φ(x_i, ·)`.
//! Each Newton step solves `(Φ₁ᵀWΦ₁ + 2nκΦ₀)β = Φ₁ᵀWη`. When `Φ` is
//! invertible this is equivalent to the bordered system
//! `(Φ + D)a + b1 = η, 1ᵀa = 0` with `D = 2nκ W⁻¹`, which the state-space
//! route solves in linear time.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::markov::MaternSmoother;
use super::matern::{matern, MaternParams};
use crate::error::{Error, Result};
use crate::timeseries::TimeSeries;

/// Linear solver behind each IRLS step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KprSolver {
    /// State-space smoother for large `n` when ν is 3/2 or 5/2, dense otherwise.
    #[default]
    Auto,
    /// The jittered `(n+1) × (n+1)` normal equations.
    Dense,
    /// Kalman/RTS smoothing; needs ν ∈ {3/2, 5/2}.
    StateSpace,
}

#[derive(Debug, Clone)]
pub struct KprOptions {
    pub max_iter: usize,
    /// Stop once the relative decrease of the objective is at most this.
    pub tol: f64,
    pub max_halvings: usize,
    pub solver: KprSolver,
}

impl Default for KprOptions {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-8, max_halvings: 20, solver: KprSolver::Auto }
    }
}

/// Inputs at or above this size use the state-space solver under `Auto`.
const AUTO_STATE_SPACE_MIN_N: usize = 200;
const WEIGHT_FLOOR: f64 = 1e-10;
const JITTER: f64 = 1e-8;
const REFINE_STEPS: usize = 50;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelFit {
    pub b: f64,
    pub a: Vec<f64>,
    pub x_train: Vec<f64>,
    #[serde(flatten)]
    pub kernel: MaternParams,
    pub kappa_n: f64,
    /// Trace of the smoother matrix at the final weights.
    pub edf: f64,
    #[serde(default = "yes")]
    pub converged: bool,
    #[serde(default)]
    pub iterations: usize,
    /// Penalized objective after each accepted step, starting value first.
    #[serde(skip)]
    pub objective_history: Vec<f64>,
}

fn yes() -> bool {
    true
}

impl KernelFit {
    /// `log λ̂(x)`.
    pub fn predict_log(&self, x: f64) -> f64 {
        self.b + self.x_train.iter().zip(&self.a).map(|(&xi, &ai)| ai * matern(xi, x, &self.kernel)).sum::<f64>()
    }

    pub fn predict_lambda(&self, x: f64) -> f64 {
        self.predict_log(x).exp()
    }

    pub fn predict_many(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.predict_lambda(x)).collect()
    }

    pub fn n(&self) -> usize {
        self.x_train.len()
    }
}

/// Predicted rate `exp{b + Σ a_i Φ(x_i, x)}`.
pub fn predict_lambda(fit: &KernelFit, x: f64) -> f64 {
    fit.predict_lambda(x)
}

/// Kernel Gram matrix on `x`.
pub fn gram_matrix(x: &[f64], kernel: &MaternParams) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0;
        for j in 0..i {
            let v = matern(x[i], x[j], kernel);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

pub fn fit_kpr(data: &TimeSeries, kernel: MaternParams, kappa_n: f64) -> Result<KernelFit> {
    fit_kpr_with(&data.x, &data.y_f64(), kernel, kappa_n, &KprOptions::default())
}

/// Iterate of the IRLS recursion: the coefficients and `ξ` at the inputs.
#[derive(Debug, Clone)]
struct Iterate {
    b: f64,
    a: Vec<f64>,
    xi: Vec<f64>,
}

impl Iterate {
    fn lerp(&self, other: &Iterate, t: f64) -> Iterate {
        let mix = |u: f64, v: f64| u + t * (v - u);
        Iterate {
            b: mix(self.b, other.b),
            a: self.a.iter().zip(&other.a).map(|(&u, &v)| mix(u, v)).collect(),
            xi: self.xi.iter().zip(&other.xi).map(|(&u, &v)| mix(u, v)).collect(),
        }
    }

    fn objective(&self, y: &[f64], kappa: f64) -> f64 {
        let n = y.len() as f64;
        let lik: f64 = self.xi.iter().zip(y).map(|(&xi, &yi)| xi.exp() - yi * xi).sum::<f64>() / n;
        // Φa = ξ - b, so aᵀΦa needs no kernel products
        let pen: f64 = self.a.iter().zip(&self.xi).map(|(&ai, &xi)| ai * (xi - self.b)).sum();
        lik + kappa * pen
    }
}

enum StepSolver {
    Dense { gram: DMatrix<f64> },
    StateSpace { order: usize },
}

struct Step {
    next: Iterate,
    edf: f64,
}

impl StepSolver {
    fn solve(&self, x: &[f64], kernel: &MaternParams, kappa: f64, w: &[f64], eta: &[f64], want_edf: bool) -> Result<Step> {
        match self {
            StepSolver::Dense { gram } => dense_step(gram, kappa, w, eta, want_edf),
            StepSolver::StateSpace { order } => state_space_step(*order, x, kernel.rho, kappa, w, eta, want_edf),
        }
    }
}

/// Iterative refinement toward the unjittered system, using the jittered
/// factorization as the preconditioner. Stops when the residual stalls.
fn refine(beta: &mut DVector<f64>, jittered: &DMatrix<f64>, jitter: f64, rhs: &DVector<f64>, solve: impl Fn(&DVector<f64>) -> DVector<f64>) {
    let residual = |b: &DVector<f64>| rhs - (jittered * b - b * jitter);
    let mut r = residual(beta);
    let mut norm = r.norm();
    for _ in 0..REFINE_STEPS {
        let cand = &*beta + solve(&r);
        let r_new = residual(&cand);
        let n_new = r_new.norm();
        if !(n_new < 0.999 * norm) {
            break;
        }
        *beta = cand;
        r = r_new;
        norm = n_new;
    }
}

/// `tr(Φ₁A⁻¹Φ₁ᵀW)` through the equivalent bordered form
/// `n - Σ D_i (K⁻¹)_ii + Σ D_i v_i² / 1ᵀv`, `K = Φ + D`, `v = K⁻¹1`, which
/// avoids the squared conditioning of `A`.
fn dense_edf(gram: &DMatrix<f64>, pen: f64, w: &[f64]) -> Result<f64> {
    let n = gram.nrows();
    let d: Vec<f64> = w.iter().map(|&wi| pen / wi).collect();
    let mut k = gram.clone();
    for i in 0..n {
        k[(i, i)] += d[i];
    }
    let kinv = k
        .cholesky()
        .ok_or_else(|| Error::Numerical("kernel plus noise matrix is not positive definite".into()))?
        .inverse();
    let v = kinv.column_sum();
    let sv = v.sum();
    let inner: f64 = (0..n).map(|i| d[i] * kinv[(i, i)]).sum();
    let border: f64 = (0..n).map(|i| d[i] * v[i] * v[i]).sum::<f64>() / sv;
    Ok(n as f64 - inner + border)
}

fn dense_step(gram: &DMatrix<f64>, kappa: f64, w: &[f64], eta: &[f64], want_edf: bool) -> Result<Step> {
    let n = gram.nrows();
    let mut phi1 = DMatrix::zeros(n, n + 1);
    phi1.column_mut(0).fill(1.0);
    phi1.view_mut((0, 1), (n, n)).copy_from(gram);

    let mut wphi1 = phi1.clone();
    for (i, &wi) in w.iter().enumerate() {
        wphi1.row_mut(i).scale_mut(wi);
    }
    let info = phi1.transpose() * &wphi1;
    let mut system = info.clone();
    let pen = 2.0 * n as f64 * kappa;
    {
        let mut block = system.view_mut((1, 1), (n, n));
        block += gram * pen;
    }
    let jitter = JITTER * system.diagonal().mean();
    for i in 0..=n {
        system[(i, i)] += jitter;
    }
    let rhs = wphi1.transpose() * DVector::from_column_slice(eta);

    let (beta, ()) = match system.clone().cholesky() {
        Some(ch) => {
            let mut beta = ch.solve(&rhs);
            refine(&mut beta, &system, jitter, &rhs, |r| ch.solve(r));
            (beta, ())
        }
        None => {
            let lu = system.clone().lu();
            let mut beta = lu.solve(&rhs).ok_or_else(|| Error::Numerical("penalized IRLS system is singular".into()))?;
            refine(&mut beta, &system, jitter, &rhs, |r| lu.solve(r).unwrap_or_else(|| r.clone()));
            (beta, ())
        }
    };
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite IRLS solution".into()));
    }
    let xi = &phi1 * &beta;
    let edf = if want_edf { dense_edf(gram, pen, w)? } else { f64::NAN };
    Ok(Step {
        next: Iterate { b: beta[0], a: beta.rows(1, n).iter().copied().collect(), xi: xi.iter().copied().collect() },
        edf,
    })
}

fn state_space_step(order: usize, x: &[f64], rho: f64, kappa: f64, w: &[f64], eta: &[f64], want_edf: bool) -> Result<Step> {
    let n = x.len();
    let pen = 2.0 * n as f64 * kappa;
    let d: Vec<f64> = w.iter().map(|&wi| pen / wi).collect();
    let smoother = MaternSmoother::new(order, rho, x, &d)?;

    // K⁻¹r = D⁻¹(r - Φ(Φ+D)⁻¹r) with K = Φ + D
    let solve = |r: &[f64]| -> Vec<f64> {
        let m = smoother.posterior_mean(r);
        r.iter().zip(&m).zip(&d).map(|((&ri, &mi), &di)| (ri - mi) / di).collect()
    };
    let u = solve(eta);
    let ones = vec![1.0; n];
    let v = solve(&ones);
    let sv: f64 = v.iter().sum();
    if !(sv > 0.0 && sv.is_finite()) {
        return Err(Error::Numerical("bordered kernel system is singular".into()));
    }
    let b = u.iter().sum::<f64>() / sv;
    let a: Vec<f64> = u.iter().zip(&v).map(|(&ui, &vi)| ui - b * vi).collect();
    let xi: Vec<f64> = eta.iter().zip(&a).zip(&d).map(|((&e, &ai), &di)| e - di * ai).collect();
    if !b.is_finite() || xi.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite IRLS solution".into()));
    }
    let edf = if want_edf {
        let post = smoother.posterior_var();
        let tr_inner: f64 = post.iter().zip(&d).map(|(&p, &di)| p / di).sum();
        let tr_border: f64 = v.iter().zip(&d).map(|(&vi, &di)| di * vi * vi).sum::<f64>() / sv;
        tr_inner + tr_border
    } else {
        f64::NAN
    };
    Ok(Step { next: Iterate { b, a, xi }, edf })
}

fn working_response(it: &Iterate, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w: Vec<f64> = it.xi.iter().map(|&xi| xi.exp().max(WEIGHT_FLOOR)).collect();
    let eta = it.xi.iter().zip(y).zip(&w).map(|((&xi, &yi), &wi)| xi + (yi - wi) / wi).collect();
    (w, eta)
}

/// Fit on raw inputs; `x` must be strictly increasing in `[0, 1]`.
pub fn fit_kpr_with(x: &[f64], y: &[f64], kernel: MaternParams, kappa_n: f64, opts: &KprOptions) -> Result<KernelFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::Argument(format!("kernel regression needs n >= 2 matching points, got {n}")));
    }
    if !(kappa_n > 0.0 && kappa_n.is_finite()) {
        return Err(Error::Argument(format!("penalty must be positive, got {kappa_n}")));
    }
    if y.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::Argument("counts must be non-negative".into()));
    }
    if x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument("inputs must be strictly increasing".into()));
    }
    let order = kernel.half_integer_order();
    let solver = match (opts.solver, order) {
        (KprSolver::StateSpace, None) => {
            return Err(Error::Argument(format!("no state-space form for nu = {}", kernel.nu)));
        }
        (KprSolver::StateSpace, Some(p)) => StepSolver::StateSpace { order: p },
        (KprSolver::Auto, Some(p)) if n >= AUTO_STATE_SPACE_MIN_N => StepSolver::StateSpace { order: p },
        _ => StepSolver::Dense { gram: gram_matrix(x, &kernel) },
    };

    let ybar = y.iter().sum::<f64>() / n as f64;
    let b0 = ybar.max(0.5).ln();
    let mut cur = Iterate { b: b0, a: vec![0.0; n], xi: vec![b0; n] };
    let mut obj = cur.objective(y, kappa_n);
    let mut history = vec![obj];
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iter {
        iterations += 1;
        let (w, eta) = working_response(&cur, y);
        let step = solver.solve(x, &kernel, kappa_n, &w, &eta, false)?;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand = if t == 1.0 { step.next.clone() } else { cur.lerp(&step.next, t) };
            let c_obj = cand.objective(y, kappa_n);
            if c_obj.is_finite() && c_obj <= obj {
                accepted = Some((cand, c_obj));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, c_obj)) = accepted else {
            // no descent direction left at working precision
            converged = true;
            break;
        };
        let rel = (obj - c_obj) / obj.abs().max(f64::MIN_POSITIVE);
        cur = cand;
        obj = c_obj;
        history.push(obj);
        if rel <= opts.tol {
            converged = true;
            break;
        }
    }

    let (w, eta) = working_response(&cur, y);
    let edf = solver.solve(x, &kernel, kappa_n, &w, &eta, true)?.edf;
    Ok(KernelFit {
        b: cur.b,
        a: cur.a,
        x_train: x.to_vec(),
        kernel,
        kappa_n,
        edf,
        converged,
        iterations,
        objective_history: history,
    })
}
