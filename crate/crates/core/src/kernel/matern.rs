//! Matérn covariance on the line.
//!
//! Scaling convention: `Φ(d) = r^ν K_ν(r) / (Γ(ν) 2^(ν-1))` with
//! `r = 2√ν · d / ρ`, so ν = 5/2 gives `(1 + r + r²/3) e^(-r)` with
//! `r = √10 · d / ρ`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub nu: f64,
    pub rho: f64,
}

impl MaternParams {
    pub fn new(nu: f64, rho: f64) -> Result<Self> {
        if !(nu >= 1.0 && nu.is_finite()) {
            return Err(Error::Argument(format!("Matérn smoothness must be >= 1, got {nu}")));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Argument(format!("Matérn length-scale must be > 0, got {rho}")));
        }
        Ok(Self { nu, rho })
    }

    /// The default data kernel, ν = 5/2.
    pub fn default_with_rho(rho: f64) -> Self {
        Self { nu: 2.5, rho }
    }

    /// `r` at distance `d` under this parameterisation.
    #[inline]
    pub fn scaled_distance(&self, d: f64) -> f64 {
        2.0 * self.nu.sqrt() * d.abs() / self.rho
    }

    /// Half-integer order `p` with `ν = p + 1/2`, if it has a closed form here.
    pub fn half_integer_order(&self) -> Option<usize> {
        if self.nu == 1.5 {
            Some(1)
        } else if self.nu == 2.5 {
            Some(2)
        } else {
            None
        }
    }
}

/// Kernel value `Φ(x, x2)`.
#[inline]
pub fn matern(x: f64, x2: f64, p: &MaternParams) -> f64 {
    let d = (x - x2).abs();
    if d == 0.0 {
        return 1.0;
    }
    let r = p.scaled_distance(d);
    if p.nu == 2.5 {
        (1.0 + r + r * r / 3.0) * (-r).exp()
    } else if p.nu == 1.5 {
        (1.0 + r) * (-r).exp()
    } else {
        matern_general(r, p.nu)
    }
}

/// `r^ν K_ν(r) / (Γ(ν) 2^(ν-1))` for any `ν > 0`, via the Bessel function.
pub fn matern_general(r: f64, nu: f64) -> f64 {
    if r == 0.0 {
        return 1.0;
    }
    if r > 700.0 {
        return 0.0;
    }
    let log_val = nu * r.ln() + bessel_k(nu, r).ln() - gamma(nu).ln() - (nu - 1.0) * std::f64::consts::LN_2;
    log_val.exp()
}

/// Modified Bessel function of the second kind, `K_ν(r)` for `r > 0`.
///
/// Trapezoid rule on `∫_0^∞ exp(-r cosh t) cosh(νt) dt`; the integrand is
/// analytic in a strip so the rule converges geometrically in the step.
pub fn bessel_k(nu: f64, r: f64) -> f64 {
    assert!(r > 0.0, "bessel_k needs r > 0");
    const H: f64 = 0.05;
    let term = |t: f64| {
        let c = r * t.cosh();
        0.5 * ((nu * t - c).exp() + (-nu * t - c).exp())
    };
    let mut sum = 0.5 * term(0.0);
    let mut k = 1;
    loop {
        let t = k as f64 * H;
        let v = term(t);
        sum += v;
        // past the peak of the integrand and negligible
        if r * t.sinh() > nu && v < 1e-18 * sum {
            break;
        }
        k += 1;
        if k > 200_000 {
            break;
        }
    }
    sum * H
}
