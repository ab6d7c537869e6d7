//! Plug-in sandwich covariances, delta-method intervals and pointwise
//! predictive bands.
//!
//! Expectations over `X ~ Uniform(Ω)` are quadrature means over the same
//! nodes used for the L2 criterion, with `λ` replaced by `λ̂_n`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::calibration::{CalibProblem, Quadrature, SeirModel, Simulator};
use crate::emulator::{Emulator, EmulatorGrid, VarianceTerm};
use crate::error::{Error, Result};
use crate::kernel::{GofReport, KernelFit};
use crate::timeseries::Domain;

/// How the dispersion multiplier of the L2 covariance is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMode {
    /// Always 1 (pure Poisson).
    One,
    /// Always the deviance estimate.
    Estimated,
    /// The estimate when the deviance test rejects at 5%, else 1.
    #[default]
    Auto,
}

impl PhiMode {
    pub fn resolve(&self, gof: &GofReport) -> f64 {
        match self {
            PhiMode::One => 1.0,
            PhiMode::Estimated => gof.phi_hat,
            PhiMode::Auto if gof.p_value < 0.05 => gof.phi_hat,
            PhiMode::Auto => 1.0,
        }
    }
}

/// Relative eigenvalue threshold below which `V` counts as singular.
pub const SINGULAR_RTOL: f64 = 1e-10;

/// Finite-difference step for coordinate `θ_j`.
pub fn fd_step(theta_j: f64) -> f64 {
    1e-4 * theta_j.abs().max(1.0)
}

/// Values, gradients and (optionally) Hessians of `f(x, ·)` at `θ` for
/// every `x` in `xs`, by central differences.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub values: Vec<f64>,
    pub grads: Vec<DVector<f64>>,
    pub hessians: Vec<DMatrix<f64>>,
}

fn shifted(theta: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut t = theta.to_vec();
    for &(j, d) in moves {
        t[j] += d;
    }
    t
}

fn derivatives_with(eval: &dyn Fn(&[f64]) -> Result<Vec<f64>>, theta: &[f64], hessian: bool) -> Result<Derivatives> {
    let q = theta.len();
    let h: Vec<f64> = theta.iter().map(|&t| fd_step(t)).collect();
    let f0 = eval(theta)?;
    let m = f0.len();
    let mut grads = vec![DVector::zeros(q); m];
    let mut hessians = if hessian { vec![DMatrix::zeros(q, q); m] } else { Vec::new() };
    for j in 0..q {
        let fp = eval(&shifted(theta, &[(j, h[j])]))?;
        let fm = eval(&shifted(theta, &[(j, -h[j])]))?;
        for i in 0..m {
            grads[i][j] = (fp[i] - fm[i]) / (2.0 * h[j]);
            if hessian {
                hessians[i][(j, j)] = (fp[i] - 2.0 * f0[i] + fm[i]) / (h[j] * h[j]);
            }
        }
        if hessian {
            for k in 0..j {
                let fpp = eval(&shifted(theta, &[(j, h[j]), (k, h[k])]))?;
                let fpm = eval(&shifted(theta, &[(j, h[j]), (k, -h[k])]))?;
                let fmp = eval(&shifted(theta, &[(j, -h[j]), (k, h[k])]))?;
                let fmm = eval(&shifted(theta, &[(j, -h[j]), (k, -h[k])]))?;
                for i in 0..m {
                    let v = (fpp[i] - fpm[i] - fmp[i] + fmm[i]) / (4.0 * h[j] * h[k]);
                    hessians[i][(j, k)] = v;
                    hessians[i][(k, j)] = v;
                }
            }
        }
    }
    Ok(Derivatives { values: f0, grads, hessians })
}

/// Derivatives of a simulator at `xs`, through its smooth view when it has one.
pub fn derivatives(sim: &dyn Simulator, xs: &[f64], theta: &[f64], hessian: bool) -> Result<Derivatives> {
    let view = sim.smooth_view(xs, theta)?;
    let s: &dyn Simulator = view.as_deref().unwrap_or(sim);
    derivatives_with(&|t| s.eval_many(xs, t), theta, hessian)
}

/// Gradient and symmetrized Hessian of `f(x, ·)` at `θ`.
pub fn grad_hess_f(sim: &dyn Simulator, x: f64, theta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let mut d = derivatives(sim, &[x], theta, true)?;
    Ok((d.grads.pop().unwrap(), d.hessians.pop().unwrap()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovMethod {
    L2,
    L2Emu,
    Ls,
    Mle,
}

/// `cov = c·V⁻¹WV⁻¹/n` with `c = 4φ̂` (L2 forms), `4` (LS) or `1` (MLE).
#[derive(Debug, Clone)]
pub struct SandwichCov {
    pub v: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub cov: DMatrix<f64>,
    pub method: CovMethod,
}

impl SandwichCov {
    pub fn cov_rows(&self) -> Vec<Vec<f64>> {
        rows(&self.cov)
    }

    pub fn std_errors(&self) -> Vec<f64> {
        self.cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Plug-in ingredients shared by all sandwich forms.
#[derive(Debug, Clone)]
pub struct PlugIn {
    pub quadrature: Quadrature,
    /// `λ̂_n` at the quadrature nodes.
    pub lambda_nodes: Vec<f64>,
    /// Sample size.
    pub n: usize,
}

impl PlugIn {
    pub fn new(lambda_hat: &KernelFit, domain: Domain, quadrature: Quadrature, n: usize) -> Self {
        let lambda_nodes = quadrature.nodes.iter().map(|&z| lambda_hat.predict_lambda(domain.to_unit(z))).collect();
        Self { quadrature, lambda_nodes, n }
    }

    pub fn from_problem(problem: &CalibProblem) -> Self {
        Self { quadrature: problem.quadrature.clone(), lambda_nodes: problem.lambda_nodes().to_vec(), n: problem.data.n() }
    }

    fn mean_weights(&self) -> Vec<f64> {
        let total = self.quadrature.total_weight();
        self.quadrature.weights.iter().map(|w| w / total).collect()
    }
}

/// `A⁻¹` for symmetric `A`, refusing near-singular input. The test runs on
/// the unit-diagonal rescaling `D⁻¹AD⁻¹`, so it does not depend on the
/// units of the parameters.
pub fn symmetric_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (a + a.transpose()) * 0.5;
    let d = sym.diagonal().map(|v| v.abs().sqrt());
    let singular = |ev: &[f64]| Error::Singular(format!("eigenvalues of the rescaled matrix {ev:?}"));
    if d.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(singular(&[]));
    }
    let b = DMatrix::from_fn(sym.nrows(), sym.ncols(), |i, j| sym[(i, j)] / (d[i] * d[j]));
    let eig = b.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(scale > 0.0) || eig.eigenvalues.iter().any(|v| v.abs() <= SINGULAR_RTOL * scale || !v.is_finite()) {
        return Err(singular(eig.eigenvalues.as_slice()));
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
    let bi = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
    Ok(DMatrix::from_fn(bi.nrows(), bi.ncols(), |i, j| bi[(i, j)] / (d[i] * d[j])))
}

fn sandwich(v: DMatrix<f64>, w: DMatrix<f64>, scale: f64, n: usize, method: CovMethod) -> Result<SandwichCov> {
    let vi = symmetric_inverse(&v)?;
    let c = &vi * &w * &vi * (scale / n as f64);
    let cov = (&c + c.transpose()) * 0.5;
    Ok(SandwichCov { v, w, cov, method })
}

fn outer(g: &DVector<f64>) -> DMatrix<f64> {
    g * g.transpose()
}

/// `V₀ = E 2[∂f∂fᵀ − (λ̂−f)∂²f]` and `E[λ̂ ∂f∂fᵀ]`, `E[(λ̂−f)² ∂f∂fᵀ]`.
fn l2_terms(p: &PlugIn, d: &Derivatives) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let q = d.grads.first().map_or(0, |g| g.len());
    let (mut v, mut w, mut r) = (DMatrix::zeros(q, q), DMatrix::zeros(q, q), DMatrix::zeros(q, q));
    for (j, w_j) in p.mean_weights().into_iter().enumerate() {
        let (lam, f) = (p.lambda_nodes[j], d.values[j]);
        let gg = outer(&d.grads[j]);
        v += (&gg - &d.hessians[j] * (lam - f)) * (2.0 * w_j);
        w += &gg * (lam * w_j);
        r += &gg * ((lam - f).powi(2) * w_j);
    }
    (v, w, r)
}

/// Covariance of the L2 estimator: `4φ̂ V₀⁻¹W₀V₀⁻¹/n`.
pub fn sandwich_l2(p: &PlugIn, sim: &dyn Simulator, theta_hat: &[f64], phi_hat: f64) -> Result<SandwichCov> {
    let d = derivatives(sim, &p.quadrature.nodes, theta_hat, true)?;
    let (v, w, _) = l2_terms(p, &d);
    sandwich(v, w, 4.0 * phi_hat, p.n, CovMethod::L2)
}

/// Core of [`sandwich_l2_emulated`] over any mean surface (at the nodes) and
/// quadrature-mean variance.
pub fn sandwich_l2_emulated_with(
    p: &PlugIn,
    means: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    mean_var: &dyn Fn(&[f64]) -> Result<f64>,
    theta: &[f64],
    phi_hat: f64,
) -> Result<SandwichCov> {
    let d = derivatives_with(means, theta, true)?;
    let dv = derivatives_with(&|t| Ok(vec![mean_var(t)?]), theta, true)?;
    emulated_from_parts(p, &d, &dv.hessians[0], phi_hat)
}

fn emulated_from_parts(p: &PlugIn, d: &Derivatives, var_hessian: &DMatrix<f64>, phi_hat: f64) -> Result<SandwichCov> {
    let (v0, w, _) = l2_terms(p, d);
    sandwich(v0 + var_hessian, w, 4.0 * phi_hat, p.n, CovMethod::L2Emu)
}

/// Covariance of the emulated L2 estimator: `V₁` adds the Hessian of the
/// integrated `v²_N`, `W₁` uses `∂m_N`. Derivatives are exact in θ.
/// `term` must match the one used by the criterion.
pub fn sandwich_l2_emulated(p: &PlugIn, emu: &Emulator, term: VarianceTerm, theta: &[f64], phi_hat: f64) -> Result<SandwichCov> {
    let grid = EmulatorGrid::new(emu, &p.quadrature.nodes, &p.mean_weights())?;
    let (values, grads, hessians) = grid.mean_derivatives(theta);
    let (_, var_hessian) = grid.weighted_var_derivatives(theta, term);
    emulated_from_parts(p, &Derivatives { values, grads, hessians }, &var_hessian, phi_hat)
}

/// Covariance of the LS estimator: `W₂ = φ·W₀ + E[(λ̂−f)²∂f∂fᵀ]`, scale 4.
/// `phi` is 1 unless overdispersion scaling is requested.
pub fn sandwich_ls(p: &PlugIn, sim: &dyn Simulator, theta_hat: &[f64], phi: f64) -> Result<SandwichCov> {
    let d = derivatives(sim, &p.quadrature.nodes, theta_hat, true)?;
    let (v, w0, r) = l2_terms(p, &d);
    sandwich(v, w0 * phi + r, 4.0, p.n, CovMethod::Ls)
}

/// Covariance of the Poisson MLE under misspecification:
/// `V₃ = E[((λ̂−f)/f)∂²f − (λ̂/f²)∂f∂fᵀ]`, `W₃ = E[((λ̂−f)² + φλ̂)/f² ∂f∂fᵀ]`.
pub fn sandwich_mle(p: &PlugIn, sim: &dyn Simulator, theta_hat: &[f64], phi: f64) -> Result<SandwichCov> {
    let d = derivatives(sim, &p.quadrature.nodes, theta_hat, true)?;
    if let Some(j) = d.values.iter().position(|&f| !(f > 0.0)) {
        return Err(Error::Domain(format!("simulator output {} is not positive at node {}", d.values[j], p.quadrature.nodes[j])));
    }
    let q = theta_hat.len();
    let (mut v, mut w) = (DMatrix::zeros(q, q), DMatrix::zeros(q, q));
    for (j, w_j) in p.mean_weights().into_iter().enumerate() {
        let (lam, f) = (p.lambda_nodes[j], d.values[j]);
        let gg = outer(&d.grads[j]);
        v += (&d.hessians[j] * ((lam - f) / f) - &gg * (lam / (f * f))) * w_j;
        w += &gg * (((lam - f).powi(2) + phi * lam) / (f * f) * w_j);
    }
    sandwich(v, w, 1.0, p.n, CovMethod::Mle)
}

/// Symmetric-matrix PSD check with slack `tol·trace`.
pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    let sym = (m + m.transpose()) * 0.5;
    let tr = sym.trace().abs().max(f64::MIN_POSITIVE);
    sym.symmetric_eigen().eigenvalues.iter().all(|&e| e >= -tol * tr)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(rename = "est")]
    pub estimate: f64,
    #[serde(rename = "lo")]
    pub lower: f64,
    #[serde(rename = "hi")]
    pub upper: f64,
    pub level: f64,
}

/// Two-sided normal quantile `z_{(1+level)/2}`.
pub fn z_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Argument(format!("confidence level must be in (0, 1), got {level}")));
    }
    Ok(Normal::standard().inverse_cdf(0.5 * (1.0 + level)))
}

/// Wald interval for `g(θ̂)` with variance `∇gᵀ cov ∇g`. The gradient is
/// taken by central differences unless given.
pub fn delta_ci(
    theta_hat: &[f64],
    cov: &DMatrix<f64>,
    g: &dyn Fn(&[f64]) -> f64,
    grad: Option<&[f64]>,
    level: f64,
) -> Result<Interval> {
    let z = z_value(level)?;
    let q = theta_hat.len();
    if cov.nrows() != q || cov.ncols() != q {
        return Err(Error::Argument("covariance does not match the parameter dimension".into()));
    }
    let gv: DVector<f64> = match grad {
        Some(gr) if gr.len() == q => DVector::from_column_slice(gr),
        Some(_) => return Err(Error::Argument("gradient length does not match theta".into())),
        None => DVector::from_iterator(
            q,
            (0..q).map(|j| {
                let h = fd_step(theta_hat[j]);
                (g(&shifted(theta_hat, &[(j, h)])) - g(&shifted(theta_hat, &[(j, -h)]))) / (2.0 * h)
            }),
        ),
    };
    let norm = gv.norm();
    if norm <= 1e-12 {
        return Err(Error::DegenerateGradient(norm));
    }
    let var = (gv.transpose() * cov * &gv)[0].max(0.0);
    let est = g(theta_hat);
    let half = z * var.sqrt();
    Ok(Interval { estimate: est, lower: est - half, upper: est + half, level })
}

/// `R0 = β/γ` with its exact gradient.
pub fn r0_ci(theta_hat: &[f64], cov: &DMatrix<f64>, beta: usize, gamma: usize, level: f64) -> Result<Interval> {
    let (b, g) = (theta_hat[beta], theta_hat[gamma]);
    let mut grad = vec![0.0; theta_hat.len()];
    grad[beta] = 1.0 / g;
    grad[gamma] = -b / (g * g);
    delta_ci(theta_hat, cov, &|t| t[beta] / t[gamma], Some(&grad), level)
}

/// Mean incubation period `1/κ` with its exact gradient.
pub fn incubation_ci(theta_hat: &[f64], cov: &DMatrix<f64>, kappa: usize, level: f64) -> Result<Interval> {
    let k = theta_hat[kappa];
    let mut grad = vec![0.0; theta_hat.len()];
    grad[kappa] = -1.0 / (k * k);
    delta_ci(theta_hat, cov, &|t| 1.0 / t[kappa], Some(&grad), level)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedIntervals {
    #[serde(rename = "R0")]
    pub r0: Interval,
    pub incubation: Interval,
}

/// Built-in derived quantities for a SEIR fit; fixed parameters contribute
/// no variance.
pub fn seir_derived(model: &SeirModel, theta_hat: &[f64], cov: &DMatrix<f64>, level: f64) -> Result<DerivedIntervals> {
    let p = model.params(theta_hat)?;
    let idx = |name: &str| model.index_of(name);
    let fixed_interval = |v: f64| Interval { estimate: v, lower: v, upper: v, level };
    let r0 = match (idx("beta"), idx("gamma")) {
        (Some(b), Some(g)) => r0_ci(theta_hat, cov, b, g, level)?,
        (Some(b), None) => delta_ci(theta_hat, cov, &|t| t[b] / p.gamma, None, level)?,
        (None, Some(g)) => delta_ci(theta_hat, cov, &|t| p.beta / t[g], None, level)?,
        (None, None) => fixed_interval(p.r0()),
    };
    let incubation = match idx("kappa") {
        Some(k) => incubation_ci(theta_hat, cov, k, level)?,
        None => fixed_interval(1.0 / p.kappa),
    };
    Ok(DerivedIntervals { r0, incubation })
}

/// Pointwise band `fit ± z·sd` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub x: Vec<f64>,
    pub fit: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
}

impl Band {
    pub fn widths(&self) -> Vec<f64> {
        self.upper.iter().zip(&self.lower).map(|(u, l)| u - l).collect()
    }
}

fn band_from(x: &[f64], fit: Vec<f64>, var: Vec<f64>, level: f64) -> Result<Band> {
    let z = z_value(level)?;
    let sd: Vec<f64> = var.iter().map(|v| v.max(0.0).sqrt()).collect();
    Ok(Band {
        x: x.to_vec(),
        lower: fit.iter().zip(&sd).map(|(f, s)| f - z * s).collect(),
        upper: fit.iter().zip(&sd).map(|(f, s)| f + z * s).collect(),
        fit,
        level,
    })
}

fn quad_form(g: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    (g.transpose() * cov * g)[0]
}

/// Deterministic-model band: variance `∇_θfᵀ cov ∇_θf` at each `x`.
pub fn predictive_band_det(sim: &dyn Simulator, theta_hat: &[f64], cov: &DMatrix<f64>, xs: &[f64], level: f64) -> Result<Band> {
    let d = derivatives(sim, xs, theta_hat, false)?;
    let var = d.grads.iter().map(|g| quad_form(g, cov)).collect();
    band_from(xs, d.values, var, level)
}

/// Emulated band around `m_N`: variance `v²_N + ∇_θm_Nᵀ cov ∇_θm_N`.
pub fn predictive_band_stoch(emu: &Emulator, theta: &[f64], cov: &DMatrix<f64>, xs: &[f64], level: f64) -> Result<Band> {
    let grid = EmulatorGrid::new(emu, xs, &vec![1.0; xs.len()])?;
    let (fit, grads, _) = grid.mean_derivatives(theta);
    let var = xs.iter().zip(&grads).map(|(&x, g)| emu.variance(x, theta, VarianceTerm::Total) + quad_form(g, cov)).collect();
    band_from(xs, fit, var, level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{FnSimulator, Toy};
    use crate::seir::THETA_NAMES;

    fn plugin_const(c: f64, n: usize) -> PlugIn {
        let quadrature = Quadrature::midpoint(Domain::UNIT, 64);
        PlugIn { lambda_nodes: vec![c; 64], quadrature, n }
    }

    fn constant() -> FnSimulator<fn(f64, &[f64]) -> f64> {
        FnSimulator::new(1, |_, t| t[0])
    }

    #[test]
    fn polynomial_derivatives_are_exact() {
        let sim = Toy::ThreeD.simulator();
        let (g, h) = grad_hess_f(&sim, 1.5, &[1.0, 2.0, 3.0]).unwrap();
        for (a, b) in g.iter().zip([1.0, 1.5, 2.25]) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(h.iter().all(|v| v.abs() < 1e-8 * 100.0), "{h}");
        let lin = Toy::MleInconsistency.simulator();
        let (g, h) = grad_hess_f(&lin, 0.3, &[0.7]).unwrap();
        assert!((g[0] - 0.3).abs() < 1e-8 && h[(0, 0)].abs() < 1e-6);
    }

    #[test]
    fn constant_model_anchors() {
        let (c, n) = (12.0, 40);
        let p = plugin_const(c, n);
        let sim = constant();
        let l2 = sandwich_l2(&p, &sim, &[c], 1.0).unwrap();
        assert!((l2.v[(0, 0)] - 2.0).abs() < 1e-6);
        assert!((l2.w[(0, 0)] - c).abs() < 1e-6);
        assert!((l2.cov[(0, 0)] - c / n as f64).abs() < 1e-6);
        let mle = sandwich_mle(&p, &sim, &[c], 1.0).unwrap();
        assert!((mle.cov[(0, 0)] - c / n as f64).abs() < 1e-6);
        // LS at θ̂ ≠ c adds the squared bias to W
        let ls = sandwich_ls(&p, &sim, &[c + 2.0], 1.0).unwrap();
        assert!((ls.w[(0, 0)] - (c + 4.0)).abs() < 1e-6);
    }

    #[test]
    fn emulated_reduces_to_direct() {
        let toy = Toy::OneD;
        let sim = toy.simulator();
        let quad = Quadrature::midpoint(toy.domain(), 256);
        let lambda_nodes = quad.nodes.iter().map(|&z| toy.lambda(z)).collect();
        let p = PlugIn { quadrature: quad, lambda_nodes, n: 50 };
        let theta = [-0.2];
        let direct = sandwich_l2(&p, &sim, &theta, 1.0).unwrap();
        let means = |t: &[f64]| sim.eval_many(&p.quadrature.nodes, t);
        let zero = sandwich_l2_emulated_with(&p, &means, &|_| Ok(0.0), &theta, 1.0).unwrap();
        assert!((zero.cov[(0, 0)] - direct.cov[(0, 0)]).abs() <= 1e-6 * direct.cov[(0, 0)]);
        let flat = sandwich_l2_emulated_with(&p, &means, &|_| Ok(3.7), &theta, 1.0).unwrap();
        assert!((flat.v[(0, 0)] - direct.v[(0, 0)]).abs() <= 1e-8 * direct.v[(0, 0)].abs());
    }

    #[test]
    fn ls_dominates_l2_on_the_imperfect_toy() {
        let toy = Toy::OneD;
        let sim = toy.simulator();
        let quad = Quadrature::midpoint(toy.domain(), 1024);
        let lambda_nodes = quad.nodes.iter().map(|&z| toy.lambda(z)).collect();
        let p = PlugIn { quadrature: quad, lambda_nodes, n: 50 };
        let t = [-0.1789];
        let l2 = sandwich_l2(&p, &sim, &t, 1.0).unwrap();
        let ls = sandwich_ls(&p, &sim, &t, 1.0).unwrap();
        assert!(is_psd(&(&ls.cov - &l2.cov), 1e-8));
        assert!(ls.cov[(0, 0)] > l2.cov[(0, 0)]);
    }

    #[test]
    fn singular_v_is_reported() {
        let sim = FnSimulator::new(2, |_, t: &[f64]| t[0] + t[1]);
        let p = plugin_const(3.0, 10);
        assert!(matches!(sandwich_l2(&p, &sim, &[1.0, 2.0], 1.0), Err(Error::Singular(_))));
    }

    #[test]
    fn delta_method_hand_formula() {
        let theta = [0.4, 0.2, 0.1];
        let (s1, s2) = (0.03, 0.01);
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![s1 * s1, 0.02, s2 * s2]));
        let iv = r0_ci(&theta, &cov, 0, 2, 0.95).unwrap();
        let var = s1 * s1 / 0.01 + 0.16 * s2 * s2 / 1e-4;
        let z = z_value(0.95).unwrap();
        assert!(((iv.upper - iv.estimate) / z - var.sqrt()).abs() <= 1e-10);
        assert!((iv.estimate - 4.0).abs() < 1e-15);
        // identity gives the marginal Wald interval
        let id = delta_ci(&theta, &cov, &|t| t[1], None, 0.95).unwrap();
        assert!((id.upper - (0.2 + z * 0.02f64.sqrt())).abs() < 1e-10);
        assert!(matches!(delta_ci(&theta, &cov, &|_| 1.0, None, 0.95), Err(Error::DegenerateGradient(_))));
    }

    #[test]
    fn bands() {
        let sim = Toy::MleInconsistency.simulator();
        let xs = [0.0, 0.5, 1.0];
        let zero = predictive_band_det(&sim, &[0.7], &DMatrix::zeros(1, 1), &xs, 0.95).unwrap();
        assert_eq!(zero.lower, zero.fit);
        let b = predictive_band_det(&sim, &[0.7], &DMatrix::from_element(1, 1, 0.01), &xs, 0.95).unwrap();
        // ∂f/∂θ = x vanishes at x = 0
        assert_eq!(b.widths()[0], 0.0);
        assert!(b.widths()[2] > b.widths()[1]);
    }

    #[test]
    fn seir_richardson_consistency() {
        let mut m = SeirModel::new(1e5).unwrap();
        for name in &THETA_NAMES[3..] {
            m = m.fix(name, if *name == "r0_init" { 0.0 } else { 20.0 }).unwrap();
        }
        let theta = [0.35, 0.25, 0.12];
        let xs = [10.0, 30.0, 50.0, 70.0];
        let view = m.smooth_view(&xs, &theta).unwrap().unwrap();
        let g1 = derivatives(&m, &xs, &theta, false).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            for j in 0..3 {
                let h = fd_step(theta[j]) / 2.0;
                let half = (view.eval(x, &shifted(&theta, &[(j, h)])).unwrap() - view.eval(x, &shifted(&theta, &[(j, -h)])).unwrap()) / (2.0 * h);
                let full = g1.grads[i][j];
                assert!((full - half).abs() <= 0.01 * full.abs().max(1e-6), "x={x} j={j}: {full} vs {half}");
            }
        }
    }
}
