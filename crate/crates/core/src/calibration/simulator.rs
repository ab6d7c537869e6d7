use crate::emulator::Emulator;
use crate::error::{Error, Result};

/// Evaluation contract `(x, θ) ↦ f(x, θ)` at physical inputs.
pub trait Simulator: Sync {
    /// Number of calibration parameters.
    fn dim(&self) -> usize;

    fn eval_many(&self, xs: &[f64], theta: &[f64]) -> Result<Vec<f64>>;

    fn eval(&self, x: f64, theta: &[f64]) -> Result<f64> {
        Ok(self.eval_many(&[x], theta)?[0])
    }

    fn param_names(&self) -> Vec<String> {
        (1..=self.dim()).map(|j| format!("theta{j}")).collect()
    }

    /// A version of the simulator that is a smooth function of θ near
    /// `theta` at `xs`, for finite differences. Simulators whose numerical
    /// evaluation adapts to θ (step-size control) override this.
    fn smooth_view(&self, _xs: &[f64], _theta: &[f64]) -> Result<Option<Box<dyn Simulator + '_>>> {
        Ok(None)
    }
}

/// Closed-form simulator.
#[derive(Clone)]
pub struct FnSimulator<F> {
    dim: usize,
    names: Option<Vec<String>>,
    f: F,
}

impl<F: Fn(f64, &[f64]) -> f64 + Sync> FnSimulator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, names: None, f }
    }

    pub fn with_names(mut self, names: &[&str]) -> Self {
        assert_eq!(names.len(), self.dim, "one name per parameter");
        self.names = Some(names.iter().map(|s| s.to_string()).collect());
        self
    }
}

impl<F: Fn(f64, &[f64]) -> f64 + Sync> Simulator for FnSimulator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_many(&self, xs: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.dim {
            return Err(Error::Argument(format!("expected {} parameters, got {}", self.dim, theta.len())));
        }
        Ok(xs.iter().map(|&x| (self.f)(x, theta)).collect())
    }

    fn param_names(&self) -> Vec<String> {
        self.names.clone().unwrap_or_else(|| (1..=self.dim).map(|j| format!("theta{j}")).collect())
    }
}

/// The emulator mean `m_N` viewed as a simulator.
impl Simulator for Emulator {
    fn dim(&self) -> usize {
        self.theta_dim()
    }

    fn eval_many(&self, xs: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.theta_dim() {
            return Err(Error::Argument(format!("expected {} parameters, got {}", self.theta_dim(), theta.len())));
        }
        Ok(self.means(xs, theta))
    }
}
