//! Estimators of the calibration parameter: L2 projection onto the kernel
//! fit (directly or through an emulator), least squares and Poisson
//! maximum likelihood.

mod seir_model;
mod simulator;
pub mod toys;

use serde::{Deserialize, Serialize};

use crate::emulator::{Emulator, EmulatorGrid, VarianceTerm};
use crate::error::{Error, Result};
use crate::kernel::KernelFit;
use crate::optim::{minimize, Bounds, OptResult, OptimizerConfig};
use crate::timeseries::{Domain, TimeSeries};

pub use seir_model::{SeirModel, StochasticSeir};
pub use simulator::{FnSimulator, Simulator};
pub use toys::Toy;

/// Nodes of the L2 quadrature.
pub const QUADRATURE_NODES: usize = 1024;

/// Integration rule over `Ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    /// `k` equally spaced midpoints, weights `|Ω|/k`.
    pub fn midpoint(domain: Domain, k: usize) -> Self {
        let h = domain.length() / k as f64;
        Self { nodes: (0..k).map(|j| domain.lo + (j as f64 + 0.5) * h).collect(), weights: vec![h; k] }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Where model outputs come from. An emulated model names the part of
/// `v²_N` that enters the criteria.
#[derive(Clone, Copy)]
pub enum Model<'a> {
    Direct(&'a dyn Simulator),
    Emulated(&'a Emulator, VarianceTerm),
}

impl<'a> Model<'a> {
    /// Emulated model with the default variance term.
    pub fn emulated(e: &'a Emulator) -> Self {
        Model::Emulated(e, VarianceTerm::default())
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::Direct(s) => s.dim(),
            Model::Emulated(e, _) => e.theta_dim(),
        }
    }

    pub fn is_emulated(&self) -> bool {
        matches!(self, Model::Emulated(..))
    }

    /// Simulator view: the simulator itself or the emulator mean.
    pub fn as_simulator(&self) -> &'a dyn Simulator {
        match *self {
            Model::Direct(s) => s,
            Model::Emulated(e, _) => e,
        }
    }
}

/// Model outputs at a fixed set of inputs, with the emulator variance when
/// there is one.
enum Evaluator<'a> {
    Direct { sim: &'a dyn Simulator, xs: Vec<f64> },
    Emulated(EmulatorGrid<'a>, VarianceTerm),
}

impl<'a> Evaluator<'a> {
    fn new(model: Model<'a>, xs: &[f64], weights: &[f64]) -> Result<Self> {
        Ok(match model {
            Model::Direct(sim) => Evaluator::Direct { sim, xs: xs.to_vec() },
            Model::Emulated(e, term) => Evaluator::Emulated(EmulatorGrid::new(e, xs, weights)?, term),
        })
    }

    fn xs(&self) -> &[f64] {
        match self {
            Evaluator::Direct { xs, .. } => xs,
            Evaluator::Emulated(g, _) => g.xs(),
        }
    }

    /// `f` (or `m_N`) at every input.
    fn means(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let vals = match self {
            Evaluator::Direct { sim, xs } => sim.eval_many(xs, theta).map_err(|e| criterion_error(xs, e))?,
            Evaluator::Emulated(g, _) => g.means(theta),
        };
        if let Some(j) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::Criterion { node: self.xs()[j], reason: "non-finite model output".into() });
        }
        Ok(vals)
    }

    /// Weighted sum of `v²_N` (zero for a direct simulator).
    fn weighted_var(&self, theta: &[f64]) -> f64 {
        match self {
            Evaluator::Direct { .. } => 0.0,
            Evaluator::Emulated(g, term) => g.weighted_var_of(theta, *term),
        }
    }
}

/// Attaches the failing input to a simulator error. Solver failures carry
/// their time; other failures are reported at the first input.
fn criterion_error(xs: &[f64], e: Error) -> Error {
    let node = match &e {
        Error::Solver { t, .. } => xs.iter().copied().find(|&x| x >= *t).unwrap_or(*t),
        _ => xs.first().copied().unwrap_or(f64::NAN),
    };
    Error::Criterion { node, reason: e.to_string() }
}

fn check_theta(bounds: &Bounds, theta: &[f64]) -> Result<()> {
    if theta.len() != bounds.dim() {
        return Err(Error::Argument(format!("expected {} parameters, got {}", bounds.dim(), theta.len())));
    }
    if !bounds.contains(theta) {
        return Err(Error::Range(format!("theta {theta:?} is outside the parameter box")));
    }
    Ok(())
}

fn check_model(model: &Model, bounds: &Bounds) -> Result<()> {
    if model.dim() != bounds.dim() {
        return Err(Error::Argument(format!("model has {} parameters but the box has {}", model.dim(), bounds.dim())));
    }
    Ok(())
}

/// L2 calibration problem: data, its kernel fit, a model and a quadrature.
pub struct CalibProblem<'a> {
    pub data: &'a TimeSeries,
    pub lambda_hat: &'a KernelFit,
    pub model: Model<'a>,
    pub bounds: Bounds,
    pub quadrature: Quadrature,
    pub optimizer: OptimizerConfig,
    lambda_nodes: Vec<f64>,
    eval: Evaluator<'a>,
}

impl<'a> CalibProblem<'a> {
    /// Uses the default 1024-node midpoint rule over the data's domain.
    pub fn new(data: &'a TimeSeries, lambda_hat: &'a KernelFit, model: Model<'a>, bounds: Bounds, optimizer: OptimizerConfig) -> Result<Self> {
        let quad = Quadrature::midpoint(data.domain, QUADRATURE_NODES);
        Self::with_quadrature(data, lambda_hat, model, bounds, quad, optimizer)
    }

    pub fn with_quadrature(
        data: &'a TimeSeries,
        lambda_hat: &'a KernelFit,
        model: Model<'a>,
        bounds: Bounds,
        quadrature: Quadrature,
        optimizer: OptimizerConfig,
    ) -> Result<Self> {
        check_model(&model, &bounds)?;
        optimizer.validate()?;
        if quadrature.is_empty() || quadrature.nodes.len() != quadrature.weights.len() {
            return Err(Error::Argument("quadrature needs matching non-empty nodes and weights".into()));
        }
        let lambda_nodes = quadrature.nodes.iter().map(|&z| lambda_hat.predict_lambda(data.domain.to_unit(z))).collect();
        let eval = Evaluator::new(model, &quadrature.nodes, &quadrature.weights)?;
        Ok(Self { data, lambda_hat, model, bounds, quadrature, optimizer, lambda_nodes, eval })
    }

    /// `λ̂_n` at the quadrature nodes.
    pub fn lambda_nodes(&self) -> &[f64] {
        &self.lambda_nodes
    }

    fn criterion_unchecked(&self, theta: &[f64]) -> Result<f64> {
        let f = self.eval.means(theta)?;
        let fit: f64 = self.quadrature.weights.iter().zip(&self.lambda_nodes).zip(&f).map(|((w, l), f)| w * (l - f).powi(2)).sum();
        Ok(fit + self.eval.weighted_var(theta))
    }
}

/// `Σ_j w_j (λ̂(z_j) − f(z_j, θ))²`, plus `Σ_j w_j v²_N(z_j, θ)` with an
/// emulator (where `f` becomes `m_N`).
pub fn l2_criterion(problem: &CalibProblem, theta: &[f64]) -> Result<f64> {
    check_theta(&problem.bounds, theta)?;
    problem.criterion_unchecked(theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    L2,
    L2Emu,
    Ls,
    LsEmu,
    Mle,
    MleEmu,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::L2, Method::Ls, Method::Mle, Method::L2Emu, Method::LsEmu, Method::MleEmu];

    pub fn name(&self) -> &'static str {
        match self {
            Method::L2 => "l2",
            Method::L2Emu => "l2_emu",
            Method::Ls => "ls",
            Method::LsEmu => "ls_emu",
            Method::Mle => "mle",
            Method::MleEmu => "mle_emu",
        }
    }

    pub fn is_emulated(&self) -> bool {
        matches!(self, Method::L2Emu | Method::LsEmu | Method::MleEmu)
    }

    fn of(base: Method, emulated: bool) -> Method {
        match (base, emulated) {
            (Method::L2 | Method::L2Emu, false) => Method::L2,
            (Method::L2 | Method::L2Emu, true) => Method::L2Emu,
            (Method::Ls | Method::LsEmu, false) => Method::Ls,
            (Method::Ls | Method::LsEmu, true) => Method::LsEmu,
            (Method::Mle | Method::MleEmu, false) => Method::Mle,
            (Method::Mle | Method::MleEmu, true) => Method::MleEmu,
        }
    }
}

/// Outcome of one calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibResult {
    pub method: Method,
    pub theta_hat: Vec<f64>,
    pub criterion: f64,
    pub n_evals: usize,
    pub boundary_contact: bool,
    pub seed: u64,
    #[serde(skip)]
    pub converged: bool,
    /// Central-difference gradient norm of the criterion at `theta_hat`.
    #[serde(skip)]
    pub grad_norm: f64,
}

impl CalibResult {
    fn from_opt(method: Method, r: OptResult, seed: u64) -> Self {
        Self {
            method,
            theta_hat: r.theta,
            criterion: r.value,
            n_evals: r.n_evals,
            boundary_contact: r.boundary_contact,
            seed,
            converged: r.converged,
            grad_norm: r.grad_norm,
        }
    }
}

/// Failed evaluations are pushed out of the search rather than aborting it.
fn or_infinite(v: Result<f64>) -> f64 {
    match v {
        Ok(v) if v.is_finite() => v,
        _ => f64::INFINITY,
    }
}

/// Minimizes [`l2_criterion`]; dispatches on the problem's model.
pub fn fit_l2(problem: &CalibProblem) -> Result<CalibResult> {
    let r = minimize(|t| or_infinite(problem.criterion_unchecked(t)), &problem.bounds, &problem.optimizer)?;
    Ok(CalibResult::from_opt(Method::of(Method::L2, problem.model.is_emulated()), r, problem.optimizer.seed))
}

/// [`fit_l2`] for a problem whose model is an emulator.
pub fn fit_l2_emulated(problem: &CalibProblem) -> Result<CalibResult> {
    if !problem.model.is_emulated() {
        return Err(Error::Argument("fit_l2_emulated needs an emulated model".into()));
    }
    fit_l2(problem)
}

fn data_inputs(data: &TimeSeries) -> (Vec<f64>, Vec<f64>) {
    (data.x_physical(), data.y_f64())
}

/// `Σ_i (y_i − f(x_i, θ))²`; with an emulator `Σ_i (y_i − m_N)² + v²_N` at the data inputs.
pub fn ls_criterion(data: &TimeSeries, model: Model, theta: &[f64]) -> Result<f64> {
    let (xs, y) = data_inputs(data);
    let eval = Evaluator::new(model, &xs, &vec![1.0; xs.len()])?;
    ls_value(&eval, &y, theta)
}

fn ls_value(eval: &Evaluator, y: &[f64], theta: &[f64]) -> Result<f64> {
    let f = eval.means(theta)?;
    Ok(y.iter().zip(&f).map(|(y, f)| (y - f).powi(2)).sum::<f64>() + eval.weighted_var(theta))
}

pub fn fit_ls(data: &TimeSeries, model: Model, bounds: &Bounds, optimizer: &OptimizerConfig) -> Result<CalibResult> {
    check_model(&model, bounds)?;
    let (xs, y) = data_inputs(data);
    let eval = Evaluator::new(model, &xs, &vec![1.0; xs.len()])?;
    let r = minimize(|t| or_infinite(ls_value(&eval, &y, t)), bounds, optimizer)?;
    Ok(CalibResult::from_opt(Method::of(Method::Ls, model.is_emulated()), r, optimizer.seed))
}

/// Negative Poisson log-likelihood `Σ f − y log f` (constant dropped);
/// `+∞` when any `f(x_i, θ) ≤ 0`. With an emulator `f` is `m_N`.
pub fn mle_criterion(data: &TimeSeries, model: Model, theta: &[f64]) -> Result<f64> {
    let (xs, y) = data_inputs(data);
    let eval = Evaluator::new(model, &xs, &vec![1.0; xs.len()])?;
    nll_value(&eval, &y, theta)
}

fn nll_value(eval: &Evaluator, y: &[f64], theta: &[f64]) -> Result<f64> {
    let f = eval.means(theta)?;
    if f.iter().any(|&v| v <= 0.0) {
        return Ok(f64::INFINITY);
    }
    Ok(y.iter().zip(&f).map(|(y, f)| f - if *y > 0.0 { y * f.ln() } else { 0.0 }).sum())
}

pub fn fit_mle(data: &TimeSeries, model: Model, bounds: &Bounds, optimizer: &OptimizerConfig) -> Result<CalibResult> {
    check_model(&model, bounds)?;
    let (xs, y) = data_inputs(data);
    // the MLE uses only the emulator mean, so no variance grid is needed
    let eval = Evaluator::Direct { sim: model.as_simulator(), xs };
    let r = minimize(|t| or_infinite(nll_value(&eval, &y, t)), bounds, optimizer)?;
    Ok(CalibResult::from_opt(Method::of(Method::Mle, model.is_emulated()), r, optimizer.seed))
}

/// Minimum nodes for [`true_theta_oracle`].
pub const ORACLE_MIN_NODES: usize = 10_000;

/// `θ* = argmin ‖λ − f(·, θ)‖_{L2(Ω)}` for a known `λ`, by dense midpoint
/// quadrature and multi-start search.
pub fn true_theta_oracle(
    lambda: &(dyn Fn(f64) -> f64 + Sync),
    sim: &dyn Simulator,
    domain: Domain,
    bounds: &Bounds,
    nodes: usize,
    optimizer: &OptimizerConfig,
) -> Result<OptResult> {
    if nodes < ORACLE_MIN_NODES {
        return Err(Error::Argument(format!("the oracle needs at least {ORACLE_MIN_NODES} nodes, got {nodes}")));
    }
    if sim.dim() != bounds.dim() {
        return Err(Error::Argument("simulator and box dimensions differ".into()));
    }
    let quad = Quadrature::midpoint(domain, nodes);
    let lam: Vec<f64> = quad.nodes.iter().map(|&z| lambda(z)).collect();
    let crit = |t: &[f64]| -> f64 {
        match sim.eval_many(&quad.nodes, t) {
            Ok(f) => quad.weights.iter().zip(&lam).zip(&f).map(|((w, l), f)| w * (l - f).powi(2)).sum(),
            Err(_) => f64::INFINITY,
        }
    };
    minimize(crit, bounds, optimizer)
}

/// θ* of a toy problem.
pub fn toy_theta_star(toy: Toy) -> Result<Vec<f64>> {
    let sim = toy.simulator();
    let r = true_theta_oracle(&|x| toy.lambda(x), &sim, toy.domain(), &toy.bounds(), ORACLE_MIN_NODES, &OptimizerConfig::default())?;
    Ok(r.theta)
}
