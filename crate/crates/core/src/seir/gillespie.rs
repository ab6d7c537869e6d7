//! Exact stochastic SEIR paths by Gillespie's direct method.

use rand::Rng as _;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use super::SeirParams;
use crate::rng::{derive_seed, rng_from_seed, Rng};

/// Integer compartment counts plus the rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GillespieState {
    pub s: u64,
    pub e: u64,
    pub i: u64,
    pub r: u64,
    beta: f64,
    kappa: f64,
    gamma: f64,
    n: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Infection,
    Progression,
    Recovery,
}

impl GillespieState {
    /// Initial counts are rounded to the nearest integer; `S` takes the rest.
    pub fn new(p: &SeirParams) -> Self {
        let n = p.population.round();
        let (e, i, r) = (p.e0.round() as u64, p.i0.round() as u64, p.r0_init.round() as u64);
        let s = (n as u64).saturating_sub(e + i + r);
        Self { s, e, i, r, beta: p.beta, kappa: p.kappa, gamma: p.gamma, n }
    }

    pub fn population(&self) -> u64 {
        self.s + self.e + self.i + self.r
    }

    #[inline]
    fn rates(&self) -> [f64; 3] {
        [
            self.beta * self.s as f64 * self.i as f64 / self.n,
            self.kappa * self.e as f64,
            self.gamma * self.i as f64,
        ]
    }

    pub fn total_rate(&self) -> f64 {
        self.rates().iter().sum()
    }

    pub fn apply(&mut self, ev: Event) {
        match ev {
            Event::Infection => {
                self.s -= 1;
                self.e += 1;
            }
            Event::Progression => {
                self.e -= 1;
                self.i += 1;
            }
            Event::Recovery => {
                self.i -= 1;
                self.r += 1;
            }
        }
    }
}

/// Draws the waiting time and the next event without applying it.
/// `None` once no event can occur.
#[inline]
pub fn gillespie_step(state: &GillespieState, rng: &mut Rng) -> Option<(f64, Event)> {
    let [a1, a2, a3] = state.rates();
    let total = a1 + a2 + a3;
    if !(total > 0.0) {
        return None;
    }
    let e: f64 = Exp1.sample(rng);
    let dt = e / total;
    let u = rng.random::<f64>() * total;
    let ev = if u < a1 {
        Event::Infection
    } else if u < a1 + a2 || a3 == 0.0 {
        Event::Progression
    } else {
        Event::Recovery
    };
    Some((dt, ev))
}

/// Daily counts of E→I events over `horizon` whole days.
pub fn gillespie_seir(p: &SeirParams, horizon: usize, seed: u64) -> Vec<u64> {
    let mut rng = rng_from_seed(seed);
    let mut state = GillespieState::new(p);
    let mut counts = vec![0u64; horizon];
    let end = horizon as f64;
    let mut t = 0.0;
    while let Some((dt, ev)) = gillespie_step(&state, &mut rng) {
        t += dt;
        if t >= end {
            break;
        }
        if ev == Event::Progression {
            counts[t as usize] += 1;
        }
        state.apply(ev);
    }
    counts
}

/// `a` independent paths; row `k` uses seed `derive_seed(seed, k)`.
pub fn replicate_gillespie(p: &SeirParams, horizon: usize, a: usize, seed: u64) -> Vec<Vec<u64>> {
    (0..a).into_par_iter().map(|k| gillespie_seir(p, horizon, derive_seed(seed, k as u64))).collect()
}

/// `k` waiting times drawn from a fixed state.
pub fn waiting_times(state: &GillespieState, k: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..k).filter_map(|_| gillespie_step(state, &mut rng).map(|(dt, _)| dt)).collect()
}

/// Kolmogorov–Smirnov distance between `samples` and Exp(`rate`).
pub fn exponential_ks_statistic(samples: &[f64], rate: f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(k, &x)| {
            let cdf = 1.0 - (-rate * x).exp();
            (cdf - k as f64 / n).abs().max((cdf - (k + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}
