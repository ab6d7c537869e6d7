//! Heteroscedastic GP emulator over `(x, θ)`.
//!
//! The mean surface is a GP on replicate means with per-point noise equal to
//! the sample variance over the replicate count. Replicate noise is
//! predicted by a second GP on log sample variances. The predictive
//! variance `v²` is the mean-surface variance plus the predicted noise.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::gp::{Gp, GpHyper};
use super::lhd;
use crate::error::{Error, Result};
use crate::optim::OptimizerConfig;

/// Design points in physical `(x, θ)` coordinates plus the box they span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// Nominal replicates per point.
    pub replicates: usize,
}

impl Design {
    pub fn new(points: Vec<Vec<f64>>, lower: Vec<f64>, upper: Vec<f64>, replicates: usize) -> Result<Self> {
        if points.is_empty() || lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Design("design needs points and a matching box".into()));
        }
        if points.iter().any(|p| p.len() != lower.len()) {
            return Err(Error::Design("design point has the wrong dimension".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::Design("design box has an empty side".into()));
        }
        Ok(Self { lower, upper, points, replicates })
    }

    /// Joint Latin hypercube over the box.
    pub fn lhd(m: usize, lower: Vec<f64>, upper: Vec<f64>, replicates: usize, seed: u64) -> Result<Self> {
        let unit = lhd(m, lower.len(), seed);
        let points = unit
            .iter()
            .map(|u| u.iter().enumerate().map(|(d, &v)| lower[d] + v * (upper[d] - lower[d])).collect())
            .collect();
        Self::new(points, lower, upper, replicates)
    }

    /// Every `x` in `xs` crossed with an `m_theta`-run Latin hypercube over
    /// the θ box. Points are ordered θ-major.
    pub fn crossed(xs: &[f64], m_theta: usize, theta_lower: &[f64], theta_upper: &[f64], replicates: usize, seed: u64) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::Design("crossed design needs x values".into()));
        }
        let (xlo, xhi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let unit = lhd(m_theta, theta_lower.len(), seed);
        let mut points = Vec::with_capacity(xs.len() * m_theta);
        for u in &unit {
            let theta: Vec<f64> = u.iter().enumerate().map(|(d, &v)| theta_lower[d] + v * (theta_upper[d] - theta_lower[d])).collect();
            for &x in xs {
                let mut p = vec![x];
                p.extend(&theta);
                points.push(p);
            }
        }
        let mut lower = vec![xlo];
        lower.extend(theta_lower);
        let mut upper = vec![if xhi > xlo { xhi } else { xlo + 1.0 }];
        upper.extend(theta_upper);
        Self::new(points, lower, upper, replicates)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    fn to_unit(&self, z: &[f64]) -> Vec<f64> {
        z.iter().enumerate().map(|(d, &v)| (v - self.lower[d]) / (self.upper[d] - self.lower[d])).collect()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter().enumerate().all(|(d, &v)| v >= self.lower[d] - 1e-12 && v <= self.upper[d] + 1e-12)
    }
}

/// Which part of `v²_N` a variance term uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceTerm {
    /// Predictive variance of the mean surface only; vanishes as the
    /// design grows.
    #[default]
    MeanSurface,
    /// Mean-surface variance plus predicted replicate noise.
    Total,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmulatorConfig {
    /// Hyperparameter search: starts and evaluation budget per start.
    pub optimizer: OptimizerConfig,
}

impl Default for EmulatorConfig {
    fn default() -> Self {
        Self { optimizer: OptimizerConfig { starts: 5, max_evals: 200, tol: 1e-6, seed: 0 } }
    }
}

/// How replicate noise is represented.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// All replicate variances are zero.
    Zero,
    /// Single replicates everywhere: the nugget is the noise.
    Homoscedastic,
    /// GP on standardized log sample variances.
    LogVariance { hyper: GpHyper, centre: f64, scale: f64, targets: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct Emulator {
    pub design: Design,
    pub point_mean: Vec<f64>,
    pub point_var: Vec<f64>,
    pub point_reps: Vec<usize>,
    pub y_centre: f64,
    pub y_scale: f64,
    pub noise_model: NoiseModel,
    /// Hyperparameter search fell back to defaults somewhere.
    pub warning: bool,
    mean_gp: Gp,
    var_gp: Option<Gp>,
}

fn sample_stats(row: &[f64]) -> (f64, f64) {
    let a = row.len() as f64;
    let mean = row.iter().sum::<f64>() / a;
    let var = if row.len() > 1 { row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (a - 1.0) } else { 0.0 };
    (mean, var)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn centre_scale(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let c = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - c).powi(2)).sum::<f64>() / n).sqrt();
    (c, if sd > 1e-12 * c.abs().max(1e-300) { sd } else { 1.0 })
}

/// Train on `outputs[k]`, the replicate values at design point `k`.
pub fn fit_emulator(design: &Design, outputs: &[Vec<f64>]) -> Result<Emulator> {
    fit_emulator_with(design, outputs, &EmulatorConfig::default())
}

pub fn fit_emulator_with(design: &Design, outputs: &[Vec<f64>], cfg: &EmulatorConfig) -> Result<Emulator> {
    if outputs.len() != design.len() {
        return Err(Error::Argument(format!("{} output rows for {} design points", outputs.len(), design.len())));
    }
    if outputs.iter().any(|r| r.is_empty() || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Argument("every design point needs finite replicate outputs".into()));
    }
    let inputs: Vec<Vec<f64>> = design.points.iter().map(|p| design.to_unit(p)).collect();
    for i in 0..inputs.len() {
        for j in 0..i {
            if inputs[i].iter().zip(&inputs[j]).all(|(a, b)| (a - b).abs() < 1e-12) {
                return Err(Error::Design(format!("design points {j} and {i} coincide")));
            }
        }
    }

    let stats: Vec<(f64, f64)> = outputs.iter().map(|r| sample_stats(r)).collect();
    let point_mean: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let mut point_var: Vec<f64> = stats.iter().map(|s| s.1).collect();
    let point_reps: Vec<usize> = outputs.iter().map(Vec::len).collect();
    let replicated: Vec<f64> = point_var.iter().zip(&point_reps).filter(|(_, &a)| a > 1).map(|(&v, _)| v).collect();
    let homoscedastic = replicated.is_empty();
    if !homoscedastic && replicated.len() < point_var.len() {
        let fill = median(replicated.clone());
        for (v, &a) in point_var.iter_mut().zip(&point_reps) {
            if a == 1 {
                *v = fill;
            }
        }
    }

    let (y_centre, y_scale) = centre_scale(&point_mean);
    let y_std: Vec<f64> = point_mean.iter().map(|v| (v - y_centre) / y_scale).collect();
    let noise: Vec<f64> = if homoscedastic {
        vec![0.0; point_mean.len()]
    } else {
        point_var.iter().zip(&point_reps).map(|(&v, &a)| v / a as f64 / (y_scale * y_scale)).collect()
    };
    let (mean_gp, mut warning) = Gp::fit(inputs.clone(), &y_std, &noise, &cfg.optimizer)?;

    let (noise_model, var_gp) = if homoscedastic {
        (NoiseModel::Homoscedastic, None)
    } else if point_var.iter().all(|&v| v <= 0.0) {
        (NoiseModel::Zero, None)
    } else {
        let floor = 1e-10 * point_var.iter().cloned().fold(0.0, f64::max);
        let logs: Vec<f64> = point_var.iter().map(|&v| v.max(floor).ln()).collect();
        let (centre, scale) = centre_scale(&logs);
        let targets: Vec<f64> = logs.iter().map(|v| (v - centre) / scale).collect();
        let mut vcfg = cfg.optimizer.clone();
        vcfg.seed = vcfg.seed.wrapping_add(1);
        let (gp, w) = Gp::fit(inputs, &targets, &vec![0.0; targets.len()], &vcfg)?;
        warning |= w;
        (NoiseModel::LogVariance { hyper: gp.hyper.clone(), centre, scale, targets }, Some(gp))
    };

    Ok(Emulator {
        design: design.clone(),
        point_mean,
        point_var,
        point_reps,
        y_centre,
        y_scale,
        noise_model,
        warning,
        mean_gp,
        var_gp,
    })
}

impl Emulator {
    fn input(&self, x: f64, theta: &[f64]) -> Vec<f64> {
        let mut z = Vec::with_capacity(1 + theta.len());
        z.push(x);
        z.extend_from_slice(theta);
        self.design.to_unit(&z)
    }

    pub fn theta_dim(&self) -> usize {
        self.design.dims() - 1
    }

    pub fn mean_hyper(&self) -> &GpHyper {
        &self.mean_gp.hyper
    }

    /// Whether `(x, θ)` lies inside the design box (outside is extrapolation).
    pub fn in_domain(&self, x: f64, theta: &[f64]) -> bool {
        let mut z = vec![x];
        z.extend_from_slice(theta);
        self.design.contains(&z)
    }

    fn noise_at(&self, u: &[f64]) -> f64 {
        match (&self.noise_model, &self.var_gp) {
            (NoiseModel::Zero, _) => 0.0,
            (NoiseModel::Homoscedastic, _) => self.mean_gp.hyper.nugget * self.y_scale * self.y_scale,
            (NoiseModel::LogVariance { centre, scale, .. }, Some(gp)) => (centre + scale * gp.mean(u)).exp(),
            (NoiseModel::LogVariance { .. }, None) => unreachable!("variance GP missing"),
        }
    }

    /// Mean `m_N(x, θ)`.
    pub fn mean(&self, x: f64, theta: &[f64]) -> f64 {
        self.y_centre + self.y_scale * self.mean_gp.mean(&self.input(x, theta))
    }

    /// `(m_N, v²_N)` at physical `(x, θ)`, `v²_N` including replicate noise.
    pub fn emulate(&self, x: f64, theta: &[f64]) -> (f64, f64) {
        let (m, latent, noise) = self.emulate_parts(x, theta);
        (m, latent + noise)
    }

    /// Mean, mean-surface variance and replicate noise.
    pub fn emulate_parts(&self, x: f64, theta: &[f64]) -> (f64, f64, f64) {
        let u = self.input(x, theta);
        let (m, v) = self.mean_gp.predict(&u);
        (self.y_centre + self.y_scale * m, self.y_scale * self.y_scale * v, self.noise_at(&u))
    }

    /// `v²_N` restricted to `term`.
    pub fn variance(&self, x: f64, theta: &[f64], term: VarianceTerm) -> f64 {
        let (_, latent, noise) = self.emulate_parts(x, theta);
        match term {
            VarianceTerm::MeanSurface => latent,
            VarianceTerm::Total => latent + noise,
        }
    }

    /// Predicted replicate noise alone.
    pub fn replicate_noise(&self, x: f64, theta: &[f64]) -> f64 {
        self.noise_at(&self.input(x, theta))
    }

    pub fn means(&self, xs: &[f64], theta: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.mean(x, theta)).collect()
    }

    /// RMSPE of the mean against `truth` at `inputs` (each `(x, θ)` flattened).
    pub fn rmspe(&self, inputs: &[Vec<f64>], truth: &[f64]) -> Result<f64> {
        if inputs.len() != truth.len() {
            return Err(Error::Argument(format!("{} inputs but {} truth values", inputs.len(), truth.len())));
        }
        let pred: Vec<f64> = inputs.iter().map(|z| self.mean(z[0], &z[1..])).collect();
        rmspe(&pred, truth)
    }

    pub fn to_document(&self) -> EmulatorDocument {
        EmulatorDocument {
            design: self.design.clone(),
            point_mean: self.point_mean.clone(),
            point_var: self.point_var.clone(),
            point_reps: self.point_reps.clone(),
            y_centre: self.y_centre,
            y_scale: self.y_scale,
            mean_hyper: self.mean_gp.hyper.clone(),
            noise_model: self.noise_model.clone(),
            warning: self.warning,
        }
    }

    /// Rebuilds from a document; factorizations are recomputed.
    pub fn from_document(doc: EmulatorDocument) -> Result<Self> {
        let inputs: Vec<Vec<f64>> = doc.design.points.iter().map(|p| doc.design.to_unit(p)).collect();
        let y_std: Vec<f64> = doc.point_mean.iter().map(|v| (v - doc.y_centre) / doc.y_scale).collect();
        let noise: Vec<f64> = match doc.noise_model {
            NoiseModel::Homoscedastic => vec![0.0; y_std.len()],
            _ => doc
                .point_var
                .iter()
                .zip(&doc.point_reps)
                .map(|(&v, &a)| v / a as f64 / (doc.y_scale * doc.y_scale))
                .collect(),
        };
        let mean_gp = Gp::new(inputs.clone(), &y_std, &noise, doc.mean_hyper)?;
        let var_gp = match &doc.noise_model {
            NoiseModel::LogVariance { hyper, targets, .. } => {
                Some(Gp::new(inputs, targets, &vec![0.0; targets.len()], hyper.clone())?)
            }
            _ => None,
        };
        Ok(Self {
            design: doc.design,
            point_mean: doc.point_mean,
            point_var: doc.point_var,
            point_reps: doc.point_reps,
            y_centre: doc.y_centre,
            y_scale: doc.y_scale,
            noise_model: doc.noise_model,
            warning: doc.warning,
            mean_gp,
            var_gp,
        })
    }
}

/// Serialized emulator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmulatorDocument {
    pub design: Design,
    pub point_mean: Vec<f64>,
    pub point_var: Vec<f64>,
    pub point_reps: Vec<usize>,
    pub y_centre: f64,
    pub y_scale: f64,
    pub mean_hyper: GpHyper,
    pub noise_model: NoiseModel,
    pub warning: bool,
}

pub fn emulate(e: &Emulator, x: f64, theta: &[f64]) -> (f64, f64) {
    e.emulate(x, theta)
}

pub fn rmspe(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Argument("prediction and truth lengths differ or are empty".into()));
    }
    let ss: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

/// Emulator evaluations at a fixed set of `x` nodes, exploiting the product
/// form `k = k_x · k_θ` so each new θ costs `O(nodes·m + m²)`.
#[derive(Debug, Clone)]
pub struct EmulatorGrid<'a> {
    emu: &'a Emulator,
    xs: Vec<f64>,
    weights: Vec<f64>,
    kx: DMatrix<f64>,
    /// `K⁻¹ ∘ (Kxᵀ diag(w) Kx)`.
    kinv_g: DMatrix<f64>,
    kx_var: Option<DMatrix<f64>>,
}

fn x_corr(nodes_u: &[f64], inputs: &[Vec<f64>], ls0: f64) -> DMatrix<f64> {
    DMatrix::from_fn(nodes_u.len(), inputs.len(), |j, k| {
        let t = (nodes_u[j] - inputs[k][0]) / ls0;
        (-0.5 * t * t).exp()
    })
}

impl<'a> EmulatorGrid<'a> {
    /// `xs` are physical inputs, `weights` the quadrature weights for
    /// [`EmulatorGrid::weighted_var`].
    pub fn new(emu: &'a Emulator, xs: &[f64], weights: &[f64]) -> Result<Self> {
        if xs.len() != weights.len() {
            return Err(Error::Argument("grid nodes and weights differ in length".into()));
        }
        let span = emu.design.upper[0] - emu.design.lower[0];
        let nodes_u: Vec<f64> = xs.iter().map(|&x| (x - emu.design.lower[0]) / span).collect();
        let gp = &emu.mean_gp;
        let kx = x_corr(&nodes_u, &gp.inputs, gp.hyper.lengthscales[0]);
        let mut wkx = kx.clone();
        for (j, &w) in weights.iter().enumerate() {
            wkx.row_mut(j).scale_mut(w);
        }
        let g = kx.transpose() * wkx;
        let kinv_g = gp.k_inverse().component_mul(&g);
        let kx_var = emu.var_gp.as_ref().map(|v| x_corr(&nodes_u, &v.inputs, v.hyper.lengthscales[0]));
        Ok(Self { emu, xs: xs.to_vec(), weights: weights.to_vec(), kx, kinv_g, kx_var })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    fn theta_factor(gp: &Gp, theta_u: &[f64]) -> DVector<f64> {
        let dims = gp.inputs.first().map_or(0, Vec::len);
        DVector::from_iterator(
            gp.inputs.len(),
            gp.inputs.iter().map(|p| {
                let mut s = 0.0;
                for d in 1..dims {
                    let t = (theta_u[d - 1] - p[d]) / gp.hyper.lengthscales[d];
                    s += t * t;
                }
                gp.hyper.signal_var * (-0.5 * s).exp()
            }),
        )
    }

    fn theta_unit(&self, theta: &[f64]) -> Vec<f64> {
        let d = &self.emu.design;
        theta.iter().enumerate().map(|(i, &t)| (t - d.lower[i + 1]) / (d.upper[i + 1] - d.lower[i + 1])).collect()
    }

    /// The θ-factors `t_i` of a GP's training points with their first and
    /// second derivatives in physical θ. `hess[a * q + b]` holds `∂²t/∂θ_a∂θ_b`.
    fn theta_factor_derivs(&self, gp: &Gp, theta: &[f64]) -> (DVector<f64>, DMatrix<f64>, Vec<DVector<f64>>) {
        let d = &self.emu.design;
        let q = theta.len();
        let tu = self.theta_unit(theta);
        let t = Self::theta_factor(gp, &tu);
        let m = gp.inputs.len();
        // ∂ log t_i / ∂θ_a and the constant second-derivative term
        let scale: Vec<f64> = (0..q)
            .map(|a| {
                let span = d.upper[a + 1] - d.lower[a + 1];
                1.0 / (gp.hyper.lengthscales[a + 1].powi(2) * span)
            })
            .collect();
        let g = DMatrix::from_fn(m, q, |i, a| -(tu[a] - gp.inputs[i][a + 1]) * scale[a]);
        let grad = DMatrix::from_fn(m, q, |i, a| t[i] * g[(i, a)]);
        let mut hess = Vec::with_capacity(q * q);
        for a in 0..q {
            let span = d.upper[a + 1] - d.lower[a + 1];
            for b in 0..q {
                let diag = if a == b { scale[a] / span } else { 0.0 };
                hess.push(DVector::from_fn(m, |i, _| t[i] * (g[(i, a)] * g[(i, b)] - diag)));
            }
        }
        (t, grad, hess)
    }

    /// Values, θ-gradients and θ-Hessians of `kx · (α ∘ t(θ))` at every node.
    fn node_derivs(&self, gp: &Gp, kx: &DMatrix<f64>, theta: &[f64]) -> (Vec<f64>, Vec<DVector<f64>>, Vec<DMatrix<f64>>) {
        let q = theta.len();
        let (t, grad, hess) = self.theta_factor_derivs(gp, theta);
        let values = kx * t.component_mul(&gp.alpha);
        let mut ag = grad;
        for (i, &a) in gp.alpha.iter().enumerate() {
            ag.row_mut(i).scale_mut(a);
        }
        let gmat = kx * ag;
        let hcols: Vec<DVector<f64>> = hess.iter().map(|h| kx * h.component_mul(&gp.alpha)).collect();
        let n = kx.nrows();
        let grads = (0..n).map(|j| gmat.row(j).transpose()).collect();
        let hessians = (0..n).map(|j| DMatrix::from_fn(q, q, |a, b| hcols[a * q + b][j])).collect();
        (values.iter().copied().collect(), grads, hessians)
    }

    /// `m_N` at every node with its exact θ-gradient and θ-Hessian.
    pub fn mean_derivatives(&self, theta: &[f64]) -> (Vec<f64>, Vec<DVector<f64>>, Vec<DMatrix<f64>>) {
        let (c, s) = (self.emu.y_centre, self.emu.y_scale);
        let (v, g, h) = self.node_derivs(&self.emu.mean_gp, &self.kx, theta);
        (v.iter().map(|v| c + s * v).collect(), g.into_iter().map(|g| g * s).collect(), h.into_iter().map(|h| h * s).collect())
    }

    /// Exact θ-gradient and θ-Hessian of [`Self::weighted_var_of`].
    /// Finite differences lose most digits here: the latent variance is a
    /// difference of nearly equal terms when the nugget is tiny.
    pub fn weighted_var_derivatives(&self, theta: &[f64], term: VarianceTerm) -> (DVector<f64>, DMatrix<f64>) {
        let q = theta.len();
        let gp = &self.emu.mean_gp;
        let sd2 = self.emu.y_scale * self.emu.y_scale;
        let (t, grad, hess) = self.theta_factor_derivs(gp, theta);
        // V = sd²(σ² Σw − tᵀAt), A symmetric
        let at = &self.kinv_g * &t;
        let ag = &self.kinv_g * &grad;
        let mut g = DVector::from_fn(q, |a, _| -2.0 * sd2 * grad.column(a).dot(&at));
        let mut h = DMatrix::from_fn(q, q, |a, b| -2.0 * sd2 * (grad.column(a).dot(&ag.column(b)) + hess[a * q + b].dot(&at)));
        if term == VarianceTerm::Total {
            if let (NoiseModel::LogVariance { scale, .. }, Some(vgp), Some(kx)) = (&self.emu.noise_model, &self.emu.var_gp, &self.kx_var) {
                let r = self.noise(theta);
                let (_, mg, mh) = self.node_derivs(vgp, kx, theta);
                for j in 0..r.len() {
                    let wr = self.weights[j] * r[j];
                    g += &mg[j] * (wr * scale);
                    h += (&mg[j] * mg[j].transpose() * (scale * scale) + &mh[j] * *scale) * wr;
                }
            }
        }
        (g, h)
    }

    /// `m_N` at every node.
    pub fn means(&self, theta: &[f64]) -> Vec<f64> {
        let gp = &self.emu.mean_gp;
        let c = Self::theta_factor(gp, &self.theta_unit(theta)).component_mul(&gp.alpha);
        let m = &self.kx * c;
        m.iter().map(|v| self.emu.y_centre + self.emu.y_scale * v).collect()
    }

    /// Predicted replicate noise at every node.
    pub fn noise(&self, theta: &[f64]) -> Vec<f64> {
        match (&self.emu.noise_model, &self.emu.var_gp, &self.kx_var) {
            (NoiseModel::Zero, _, _) => vec![0.0; self.xs.len()],
            (NoiseModel::Homoscedastic, _, _) => {
                vec![self.emu.mean_gp.hyper.nugget * self.emu.y_scale * self.emu.y_scale; self.xs.len()]
            }
            (NoiseModel::LogVariance { centre, scale, .. }, Some(gp), Some(kx)) => {
                let c = Self::theta_factor(gp, &self.theta_unit(theta)).component_mul(&gp.alpha);
                (kx * c).iter().map(|v| (centre + scale * v).exp()).collect()
            }
            _ => unreachable!("variance GP missing"),
        }
    }

    /// `Σ_j w_j v²_N(x_j, θ)`.
    pub fn weighted_var(&self, theta: &[f64]) -> f64 {
        self.weighted_var_of(theta, VarianceTerm::Total)
    }

    /// `Σ_j w_j` of the chosen part of `v²_N`.
    pub fn weighted_var_of(&self, theta: &[f64], term: VarianceTerm) -> f64 {
        let gp = &self.emu.mean_gp;
        let c = Self::theta_factor(gp, &self.theta_unit(theta));
        let wsum: f64 = self.weights.iter().sum();
        let latent = self.emu.y_scale * self.emu.y_scale * (gp.hyper.signal_var * wsum - c.dot(&(&self.kinv_g * &c))).max(0.0);
        match term {
            VarianceTerm::MeanSurface => latent,
            VarianceTerm::Total => latent + self.noise(theta).iter().zip(&self.weights).map(|(r, w)| r * w).sum::<f64>(),
        }
    }

    /// Pointwise `v²_N` at the nodes (direct evaluation).
    pub fn vars(&self, theta: &[f64]) -> Vec<f64> {
        self.xs.iter().map(|&x| self.emu.emulate(x, theta).1).collect()
    }
}
