//! Box-constrained Nelder–Mead with Latin-hypercube multi-starts.
//!
//! The search runs in unit-cube coordinates; every trial point is clipped
//! back into the box.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emulator::lhd;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub starts: usize,
    /// Evaluation budget per start.
    pub max_evals: usize,
    /// Stop when every vertex lies within this (unit-cube, sup-norm) distance of the best.
    pub tol: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { starts: 10, max_evals: 2000, tol: 1e-8, seed: 0 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.starts == 0 || self.max_evals == 0 || !(self.tol > 0.0) {
            return Err(Error::Argument("optimizer starts, budget and tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Finite box `lower <= θ <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Argument("bounds need matching non-empty lower and upper".into()));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::Argument(format!("invalid bound [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn to_theta(&self, u: &[f64]) -> Vec<f64> {
        u.iter().enumerate().map(|(j, &v)| self.lower[j] + v * (self.upper[j] - self.lower[j])).collect()
    }

    pub fn to_unit(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().enumerate().map(|(j, &t)| (t - self.lower[j]) / (self.upper[j] - self.lower[j])).collect()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.iter().enumerate().all(|(j, &t)| t >= self.lower[j] && t <= self.upper[j])
    }

    pub fn clip(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().enumerate().map(|(j, &t)| t.clamp(self.lower[j], self.upper[j])).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptResult {
    pub theta: Vec<f64>,
    pub value: f64,
    pub n_evals: usize,
    /// Simplex-size criterion met in the final polish run.
    pub converged: bool,
    /// Some coordinate of the optimum sits on the box boundary.
    pub boundary_contact: bool,
    /// Central-difference gradient norm at the optimum (one-sided at bounds).
    pub grad_norm: f64,
    pub start_points: Vec<Vec<f64>>,
    pub start_values: Vec<f64>,
}

struct Local {
    u: Vec<f64>,
    value: f64,
    evals: usize,
    converged: bool,
}

fn clip01(u: &mut [f64]) {
    for v in u {
        *v = v.clamp(0.0, 1.0);
    }
}

/// Nelder–Mead in the unit cube from `start`, initial edge `step`.
fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, start: &[f64], step: f64, max_evals: usize, tol: f64) -> Local {
    let q = start.len();
    let eval = |u: &[f64]| {
        let v = f(u);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(q + 1);
    simplex.push(start.to_vec());
    for j in 0..q {
        let mut v = start.to_vec();
        v[j] += if v[j] + step <= 1.0 { step } else { -step };
        clip01(&mut v);
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();
    let mut evals = q + 1;
    let mut converged = false;

    while evals < max_evals {
        let mut order: Vec<usize> = (0..=q).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let size = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if size <= tol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; q];
        for v in &simplex[..q] {
            for j in 0..q {
                centroid[j] += v[j] / q as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = (0..q).map(|j| centroid[j] + t * (simplex[q][j] - centroid[j])).collect();
            clip01(&mut p);
            p
        };

        let xr = along(-1.0);
        let fr = eval(&xr);
        evals += 1;
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = eval(&xe);
            evals += 1;
            if fe < fr {
                simplex[q] = xe;
                vals[q] = fe;
            } else {
                simplex[q] = xr;
                vals[q] = fr;
            }
        } else if fr < vals[q - 1] {
            simplex[q] = xr;
            vals[q] = fr;
        } else {
            let (xc, fc) = if fr < vals[q] {
                let xc = along(-0.5);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = eval(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < vals[q].min(fr) {
                simplex[q] = xc;
                vals[q] = fc;
            } else {
                // shrink toward the best vertex
                for i in 1..=q {
                    for j in 0..q {
                        simplex[i][j] = simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]);
                    }
                    vals[i] = eval(&simplex[i]);
                }
                evals += q;
            }
        }
    }
    let best = (0..=q).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    Local { u: simplex[best].clone(), value: vals[best], evals, converged }
}

/// Central-difference gradient in parameter units, one-sided at the bounds.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, theta: &[f64], bounds: &Bounds) -> Vec<f64> {
    (0..theta.len())
        .map(|j| {
            let h = 1e-6 * (bounds.upper[j] - bounds.lower[j]);
            let mut up = theta.to_vec();
            let mut dn = theta.to_vec();
            up[j] = (theta[j] + h).min(bounds.upper[j]);
            dn[j] = (theta[j] - h).max(bounds.lower[j]);
            (f(&up) - f(&dn)) / (up[j] - dn[j])
        })
        .collect()
}

/// Multi-start minimization of `f` over `bounds`: starts from a Latin
/// hypercube, best local result polished by one restart.
pub fn minimize<F>(f: F, bounds: &Bounds, cfg: &OptimizerConfig) -> Result<OptResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    minimize_from(f, bounds, cfg, &[])
}

/// As [`minimize`], with extra user-chosen start points (in parameter units)
/// tried before the Latin-hypercube ones.
pub fn minimize_from<F>(f: F, bounds: &Bounds, cfg: &OptimizerConfig, extra: &[Vec<f64>]) -> Result<OptResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    let q = bounds.dim();
    let fu = |u: &[f64]| f(&bounds.to_theta(u));
    let mut starts: Vec<Vec<f64>> = extra.iter().map(|t| bounds.to_unit(&bounds.clip(t))).collect();
    starts.extend(lhd(cfg.starts, q, cfg.seed));

    let runs: Vec<(f64, Local)> = starts
        .par_iter()
        .map(|s| {
            let v0 = fu(s);
            (v0, nelder_mead(&fu, s, 0.1, cfg.max_evals, cfg.tol))
        })
        .collect();
    let mut n_evals: usize = runs.iter().map(|(_, l)| l.evals + 1).sum();
    let start_values: Vec<f64> = runs.iter().map(|(v, _)| *v).collect();
    let best = runs
        .iter()
        .filter(|(_, l)| l.value.is_finite())
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value))
        .ok_or_else(|| Error::Opt("objective was not finite at any start".into()))?;

    let polish = nelder_mead(&fu, &best.1.u, 0.02, cfg.max_evals, cfg.tol);
    n_evals += polish.evals;
    let (u, value, converged) = if polish.value <= best.1.value {
        (polish.u, polish.value, polish.converged)
    } else {
        (best.1.u.clone(), best.1.value, best.1.converged)
    };
    let theta = bounds.to_theta(&u);
    let boundary_contact = u.iter().any(|&v| v <= 1e-9 || v >= 1.0 - 1e-9);
    let grad = fd_gradient(&f, &theta, bounds);
    n_evals += 2 * q;
    Ok(OptResult {
        theta,
        value,
        n_evals,
        converged,
        boundary_contact,
        grad_norm: grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
        start_points: starts.iter().map(|s| bounds.to_theta(s)).collect(),
        start_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let b = Bounds::new(vec![-2.0, -1.0], vec![2.0, 3.0]).unwrap();
        let r = minimize(|t| (1.0 - t[0]).powi(2) + 100.0 * (t[1] - t[0] * t[0]).powi(2), &b, &OptimizerConfig::default()).unwrap();
        assert!((r.theta[0] - 1.0).abs() < 1e-5 && (r.theta[1] - 1.0).abs() < 1e-5, "{:?}", r.theta);
        assert!(r.converged && !r.boundary_contact);
        assert!(r.grad_norm < 1e-3);
    }

    #[test]
    fn constrained_minimum_on_boundary() {
        let b = Bounds::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let r = minimize(|t| (t[0] + 1.0).powi(2) + (t[1] - 0.3).powi(2), &b, &OptimizerConfig::default()).unwrap();
        assert_eq!(r.theta[0], 0.0);
        assert!((r.theta[1] - 0.3).abs() < 1e-6);
        assert!(r.boundary_contact);
    }

    #[test]
    fn best_of_starts() {
        let b = Bounds::new(vec![-3.0], vec![3.0]).unwrap();
        let f = |t: &[f64]| (3.0 * t[0]).sin() + 0.1 * t[0] * t[0];
        let r = minimize(f, &b, &OptimizerConfig::default()).unwrap();
        assert!(r.start_values.iter().all(|&v| r.value <= v));
    }

    #[test]
    fn infinite_everywhere_is_an_error() {
        let b = Bounds::new(vec![0.0], vec![1.0]).unwrap();
        assert!(matches!(minimize(|_| f64::INFINITY, &b, &OptimizerConfig::default()), Err(Error::Opt(_))));
    }

    #[test]
    fn same_seed_same_answer() {
        let b = Bounds::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap();
        let f = |t: &[f64]| (t[0] * t[1]).sin() + 0.05 * (t[0] * t[0] + t[1] * t[1]);
        let cfg = OptimizerConfig { seed: 4, ..Default::default() };
        assert_eq!(minimize(f, &b, &cfg).unwrap().theta, minimize(f, &b, &cfg).unwrap().theta);
    }
}
