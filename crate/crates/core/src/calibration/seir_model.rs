//! SEIR simulators in the calibration contract, with optional fixed
//! parameters so that only a subset of `θ = (β, κ, γ, I(0), E(0), R(0))` is
//! calibrated.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::simulator::Simulator;
use crate::emulator::Design;
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::seir::{gillespie_seir, seir_incidence_many, solve_adaptive, solve_fixed, with_sorted, SeirParams, StepSchedule, THETA_NAMES};

/// Deterministic SEIR, `f(x, θ) = κE(x)` with `x` in days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeirModel {
    pub population: f64,
    /// Value of each parameter that is held fixed, in canonical order.
    pub fixed: [Option<f64>; 6],
}

impl SeirModel {
    pub fn new(population: f64) -> Result<Self> {
        if !(population > 0.0 && population.is_finite()) {
            return Err(Error::Argument(format!("population must be positive, got {population}")));
        }
        Ok(Self { population, fixed: [None; 6] })
    }

    /// Holds `name` at `value` instead of calibrating it.
    pub fn fix(mut self, name: &str, value: f64) -> Result<Self> {
        let k = THETA_NAMES
            .iter()
            .position(|&n| n == name)
            .ok_or_else(|| Error::Argument(format!("unknown SEIR parameter {name:?}")))?;
        self.fixed[k] = Some(value);
        Ok(self)
    }

    pub fn free_names(&self) -> Vec<&'static str> {
        THETA_NAMES.iter().zip(&self.fixed).filter(|(_, f)| f.is_none()).map(|(&n, _)| n).collect()
    }

    /// Position of `name` in the free parameter vector.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.free_names().iter().position(|&n| n == name)
    }

    pub fn params(&self, theta: &[f64]) -> Result<SeirParams> {
        let free = self.free_names().len();
        if theta.len() != free {
            return Err(Error::Argument(format!("expected {free} SEIR parameters, got {}", theta.len())));
        }
        let mut it = theta.iter();
        let full: Vec<f64> = self.fixed.iter().map(|f| f.unwrap_or_else(|| *it.next().unwrap())).collect();
        SeirParams::from_theta(&full, self.population)
    }

    /// Free parameter vector of a full parameter set.
    pub fn free_theta(&self, p: &SeirParams) -> Vec<f64> {
        p.theta().iter().zip(&self.fixed).filter(|(_, f)| f.is_none()).map(|(&v, _)| v).collect()
    }
}

impl Simulator for SeirModel {
    fn dim(&self) -> usize {
        self.free_names().len()
    }

    fn eval_many(&self, xs: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        seir_incidence_many(&self.params(theta)?, xs)
    }

    fn param_names(&self) -> Vec<String> {
        self.free_names().iter().map(|s| s.to_string()).collect()
    }

    fn smooth_view(&self, xs: &[f64], theta: &[f64]) -> Result<Option<Box<dyn Simulator + '_>>> {
        let p = self.params(theta)?;
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (_, schedule) = solve_adaptive(&p, &sorted)?;
        Ok(Some(Box::new(FrozenSeir { model: self, schedule })))
    }
}

/// ODE solved on a fixed step sequence, smooth in θ.
struct FrozenSeir<'a> {
    model: &'a SeirModel,
    schedule: StepSchedule,
}

impl Simulator for FrozenSeir<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn eval_many(&self, xs: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        let p = self.model.params(theta)?;
        with_sorted(xs, |s| Ok(solve_fixed(&p, s, &self.schedule)?.incidence(p.kappa)))
    }
}

/// Stochastic SEIR: daily E→I event counts from exact simulation with the
/// initial counts rounded to whole persons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticSeir {
    pub model: SeirModel,
}

impl StochasticSeir {
    fn rounded(&self, theta: &[f64]) -> Result<SeirParams> {
        let mut p = self.model.params(theta)?;
        p.population = p.population.round();
        p.i0 = p.i0.round();
        p.e0 = p.e0.round();
        p.r0_init = p.r0_init.round();
        p.validate()?;
        Ok(p)
    }

    /// `a` replicate paths of daily counts over `days` days.
    pub fn replicates(&self, theta: &[f64], days: usize, a: usize, seed: u64) -> Result<Vec<Vec<u64>>> {
        let p = self.rounded(theta)?;
        Ok((0..a).into_par_iter().map(|k| gillespie_seir(&p, days, derive_seed(seed, k as u64))).collect())
    }

    /// Outputs for every point of `design`, whose first coordinate is a
    /// whole day. Points sharing θ share paths, so a crossed design costs
    /// one set of replicates per θ.
    pub fn run_design(&self, design: &Design, seed: u64) -> Result<Vec<Vec<f64>>> {
        let mut groups: Vec<(Vec<f64>, Vec<usize>)> = Vec::new();
        for (k, p) in design.points.iter().enumerate() {
            match groups.iter_mut().find(|(t, _)| t.as_slice() == &p[1..]) {
                Some((_, idx)) => idx.push(k),
                None => groups.push((p[1..].to_vec(), vec![k])),
            }
        }
        let mut out = vec![Vec::new(); design.len()];
        for (g, (theta, idx)) in groups.iter().enumerate() {
            let days = idx.iter().map(|&k| design.points[k][0]).fold(0.0, f64::max) as usize + 1;
            let paths = self.replicates(theta, days, design.replicates, derive_seed(seed, g as u64))?;
            for &k in idx {
                let day = design.points[k][0];
                if day < 0.0 || day.fract() != 0.0 {
                    return Err(Error::Design(format!("stochastic SEIR needs whole-day inputs, got {day}")));
                }
                out[k] = paths.iter().map(|row| row[day as usize] as f64).collect();
            }
        }
        Ok(out)
    }
}
