//! SEIR compartmental model: deterministic ODE and exact stochastic paths.
//!
//! The calibration output is the daily flow from E to I, `f(x, θ) = κE(x)`
//! for the ODE and the count of E→I events per day for the stochastic model.

mod gillespie;
mod ode;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gillespie::{exponential_ks_statistic, gillespie_seir, gillespie_step, replicate_gillespie, waiting_times, GillespieState};
pub use ode::{
    ode_daily_incidence, seir_incidence, seir_incidence_many, solve_adaptive, solve_fixed, solve_seir_ode, solve_seir_ode_at, StepSchedule,
    Trajectory,
};
pub(crate) use ode::with_sorted;

/// Names of the six calibration parameters in order.
pub const THETA_NAMES: [&str; 6] = ["beta", "kappa", "gamma", "i0", "e0", "r0_init"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeirParams {
    /// Contact rate, per day.
    pub beta: f64,
    /// Incubation rate, per day.
    pub kappa: f64,
    /// Recovery rate, per day.
    pub gamma: f64,
    pub i0: f64,
    pub e0: f64,
    pub r0_init: f64,
    /// Total population `N`.
    pub population: f64,
}

impl SeirParams {
    /// From `θ = (β, κ, γ, I(0), E(0), R(0))`.
    pub fn from_theta(theta: &[f64], population: f64) -> Result<Self> {
        if theta.len() != 6 {
            return Err(Error::Argument(format!("SEIR needs 6 parameters, got {}", theta.len())));
        }
        let p = Self {
            beta: theta[0],
            kappa: theta[1],
            gamma: theta[2],
            i0: theta[3],
            e0: theta[4],
            r0_init: theta[5],
            population,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn theta(&self) -> [f64; 6] {
        [self.beta, self.kappa, self.gamma, self.i0, self.e0, self.r0_init]
    }

    /// Rates may be zero (degenerate test cases) but not negative.
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !(ok(self.beta) && ok(self.kappa) && ok(self.gamma)) {
            return Err(Error::Domain(format!(
                "rates must be non-negative: beta={}, kappa={}, gamma={}",
                self.beta, self.kappa, self.gamma
            )));
        }
        if !(ok(self.i0) && ok(self.e0) && ok(self.r0_init)) {
            return Err(Error::Domain("initial counts must be non-negative".into()));
        }
        if !(self.population > 0.0 && self.population.is_finite()) {
            return Err(Error::Domain(format!("population must be positive, got {}", self.population)));
        }
        if self.i0 + self.e0 + self.r0_init > self.population {
            return Err(Error::Domain("initial I + E + R exceeds the population".into()));
        }
        Ok(())
    }

    pub fn s0(&self) -> f64 {
        self.population - self.e0 - self.i0 - self.r0_init
    }

    pub fn r0(&self) -> f64 {
        self.beta / self.gamma
    }
}
