//! Dormand–Prince 5(4) integration of the SEIR equations.

use serde::{Deserialize, Serialize};

use super::SeirParams;
use crate::error::{Error, Result};

/// State `(S, E, I, R, C)` where `C` accumulates the E→I flow `∫κE`.
type State = [f64; 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub s: Vec<f64>,
    pub e: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
    /// Cumulative E→I flow since time 0.
    pub cum_incidence: Vec<f64>,
}

impl Trajectory {
    fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            s: Vec::with_capacity(n),
            e: Vec::with_capacity(n),
            i: Vec::with_capacity(n),
            r: Vec::with_capacity(n),
            cum_incidence: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, t: f64, y: &State) {
        self.times.push(t);
        self.s.push(y[0]);
        self.e.push(y[1]);
        self.i.push(y[2]);
        self.r.push(y[3]);
        self.cum_incidence.push(y[4]);
    }

    /// `κE` on the grid.
    pub fn incidence(&self, kappa: f64) -> Vec<f64> {
        self.e.iter().map(|&e| kappa * e).collect()
    }
}

/// Accepted step endpoints of an adaptive solve. Re-running with a fixed
/// schedule makes the numerical solution a smooth function of the
/// parameters, which finite differences need.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSchedule {
    knots: Vec<f64>,
}

impl StepSchedule {
    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }
}

// The system is autonomous, so the stage abscissae are not needed.
fn rhs(p: &SeirParams, y: &State) -> State {
    let inf = p.beta * y[2] * y[0] / p.population;
    let prog = p.kappa * y[1];
    let rec = p.gamma * y[2];
    [-inf, inf - prog, prog - rec, rec, prog]
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth- minus fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn lin(y: &State, terms: &[(f64, &State)], h: f64) -> State {
    let mut out = *y;
    for (c, k) in terms {
        for j in 0..5 {
            out[j] += h * c * k[j];
        }
    }
    out
}

/// One DP5 step; returns the new state, its derivative and the error estimate.
fn dp_step(p: &SeirParams, y: &State, k1: &State, h: f64) -> (State, State, State) {
    let k2 = rhs(p, &lin(y, &[(A21, k1)], h));
    let k3 = rhs(p, &lin(y, &[(A31, k1), (A32, &k2)], h));
    let k4 = rhs(p, &lin(y, &[(A41, k1), (A42, &k2), (A43, &k3)], h));
    let k5 = rhs(p, &lin(y, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)], h));
    let k6 = rhs(p, &lin(y, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], h));
    let y_new = lin(y, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], h);
    let k7 = rhs(p, &y_new);
    let mut err = [0.0; 5];
    for j in 0..5 {
        err[j] = h * (E1 * k1[j] + E3 * k3[j] + E4 * k4[j] + E5 * k5[j] + E6 * k6[j] + E7 * k7[j]);
    }
    (y_new, k7, err)
}

fn initial_state(p: &SeirParams) -> State {
    [p.s0(), p.e0, p.i0, p.r0_init, 0.0]
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::Argument("output times must be finite and >= 0".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Argument("output times must be non-decreasing".into()));
    }
    Ok(())
}

const MAX_STEPS: usize = 1_000_000;

/// Adaptive solve with `atol = 1e-8·N`, `rtol = 1e-8`, hitting each output time exactly.
pub fn solve_adaptive(p: &SeirParams, times: &[f64]) -> Result<(Trajectory, StepSchedule)> {
    p.validate()?;
    check_times(times)?;
    let atol = 1e-8 * p.population;
    let rtol = 1e-8;
    let mut y = initial_state(p);
    let mut k1 = rhs(p, &y);
    let mut t = 0.0;
    let mut h = 0.1;
    let mut traj = Trajectory::with_capacity(times.len());
    let mut knots = vec![0.0];
    let mut steps = 0;

    for &t_out in times {
        while t < t_out {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::Solver { t, reason: "step budget exhausted".into() });
            }
            let remaining = t_out - t;
            let truncated = h >= remaining;
            let step = if truncated { remaining } else { h };
            if step < 1e-14 * t.max(1.0) && !truncated {
                return Err(Error::Solver { t, reason: format!("step size underflow ({step:e})") });
            }
            let (y_new, k_new, err) = dp_step(p, &y, &k1, step);
            let mut acc = 0.0;
            for j in 0..5 {
                let sc = atol + rtol * y[j].abs().max(y_new[j].abs());
                acc += (err[j] / sc).powi(2);
            }
            let norm = (acc / 5.0).sqrt();
            if !norm.is_finite() {
                return Err(Error::Solver { t, reason: "non-finite state".into() });
            }
            if norm <= 1.0 {
                t = if truncated { t_out } else { t + step };
                y = y_new;
                k1 = k_new;
                knots.push(t);
                let fac = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
                // a truncated step says nothing new about the natural step size
                if !truncated || fac < 1.0 {
                    h = step * fac;
                }
            } else {
                h = step * (0.9 * norm.powf(-0.2)).clamp(0.2, 1.0);
            }
        }
        traj.push(t_out, &y);
    }
    Ok((traj, StepSchedule { knots }))
}

/// Fixed-step solve through the knots of `schedule` (plus any output times
/// between them).
pub fn solve_fixed(p: &SeirParams, times: &[f64], schedule: &StepSchedule) -> Result<Trajectory> {
    p.validate()?;
    check_times(times)?;
    let mut y = initial_state(p);
    let mut t = 0.0;
    let mut traj = Trajectory::with_capacity(times.len());
    let mut knot = schedule.knots.iter().copied().skip_while(|&k| k <= 0.0).peekable();
    for &t_out in times {
        while t < t_out {
            let next = match knot.peek() {
                Some(&k) if k <= t_out => {
                    knot.next();
                    k
                }
                _ => t_out,
            };
            if next <= t {
                continue;
            }
            let k1 = rhs(p, &y);
            let (y_new, _, _) = dp_step(p, &y, &k1, next - t);
            if y_new.iter().any(|v| !v.is_finite()) {
                return Err(Error::Solver { t, reason: "non-finite state".into() });
            }
            y = y_new;
            t = next;
        }
        traj.push(t_out, &y);
    }
    Ok(traj)
}

/// Solution on the grid `0, dt_out, 2 dt_out, ...` up to `horizon`.
pub fn solve_seir_ode(p: &SeirParams, horizon: f64, dt_out: f64) -> Result<Trajectory> {
    if !(horizon > 0.0 && dt_out > 0.0) {
        return Err(Error::Argument("horizon and dt_out must be positive".into()));
    }
    let steps = (horizon / dt_out + 1e-9).floor() as usize;
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt_out).collect();
    solve_seir_ode_at(p, &times)
}

pub fn solve_seir_ode_at(p: &SeirParams, times: &[f64]) -> Result<Trajectory> {
    Ok(solve_adaptive(p, times)?.0)
}

/// `f(x, θ) = κE(x)`.
pub fn seir_incidence(p: &SeirParams, x: f64) -> Result<f64> {
    Ok(seir_incidence_many(p, &[x])?[0])
}

/// `κE` at arbitrary (unsorted) times.
pub fn seir_incidence_many(p: &SeirParams, xs: &[f64]) -> Result<Vec<f64>> {
    with_sorted(xs, |sorted| Ok(solve_seir_ode_at(p, sorted)?.incidence(p.kappa)))
}

pub(crate) fn with_sorted(xs: &[f64], run: impl FnOnce(&[f64]) -> Result<Vec<f64>>) -> Result<Vec<f64>> {
    if xs.windows(2).all(|w| w[0] <= w[1]) {
        return run(xs);
    }
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
    let vals = run(&sorted)?;
    let mut out = vec![0.0; xs.len()];
    for (k, &i) in order.iter().enumerate() {
        out[i] = vals[k];
    }
    Ok(out)
}

/// Expected E→I flow in each day bin `[d, d+1)`, `d = 0..days`.
pub fn ode_daily_incidence(p: &SeirParams, days: usize) -> Result<Vec<f64>> {
    let times: Vec<f64> = (0..=days).map(|d| d as f64).collect();
    let traj = solve_seir_ode_at(p, &times)?;
    Ok(traj.cum_incidence.windows(2).map(|w| w[1] - w[0]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn params(beta: f64, kappa: f64, gamma: f64, i0: f64, e0: f64) -> SeirParams {
        SeirParams { beta, kappa, gamma, i0, e0, r0_init: 0.0, population: 1e6 }
    }

    #[test]
    fn no_transmission_gives_exponential_decay() {
        // small N so the absolute tolerance 1e-8·N does not dominate
        let p = SeirParams { population: 1000.0, ..params(0.0, 0.2, 0.1, 50.0, 300.0) };
        let traj = solve_seir_ode(&p, 60.0, 0.5).unwrap();
        for (t, e) in traj.times.iter().zip(&traj.e) {
            let want = 300.0 * (-0.2 * t).exp();
            assert!(((e - want) / want).abs() < 1e-6, "t={t}");
        }
        let f = seir_incidence(&p, 7.3).unwrap();
        let want = 0.2 * 300.0 * (-0.2f64 * 7.3).exp();
        assert!(((f - want) / want).abs() < 1e-6);
    }

    #[test]
    fn disease_free_state_is_fixed() {
        let mut p = params(0.5, 0.2, 0.1, 0.0, 0.0);
        p.r0_init = 1000.0;
        let traj = solve_seir_ode(&p, 100.0, 1.0).unwrap();
        assert!(traj.s.iter().all(|&s| s == 1e6 - 1000.0));
        assert!(traj.e.iter().chain(&traj.i).all(|&v| v == 0.0));
        assert!(traj.r.iter().all(|&r| r == 1000.0));
    }

    #[test]
    fn initial_incidence() {
        let p = params(0.4, 0.25, 0.1, 10.0, 40.0);
        assert_eq!(seir_incidence(&p, 0.0).unwrap(), 0.25 * 40.0);
    }

    #[test]
    fn population_is_conserved() {
        let mut rng = rng_from_seed(5);
        for _ in 0..100 {
            let n = 10f64.powf(rng.random_range(3.0..7.0));
            let p = SeirParams {
                beta: rng.random_range(0.05..1.5),
                kappa: rng.random_range(0.05..1.0),
                gamma: rng.random_range(0.02..0.8),
                i0: rng.random_range(0.0..0.01) * n,
                e0: rng.random_range(0.0..0.01) * n,
                r0_init: rng.random_range(0.0..0.1) * n,
                population: n,
            };
            let traj = solve_seir_ode(&p, 200.0, 1.0).unwrap();
            for k in 0..traj.times.len() {
                let total = traj.s[k] + traj.e[k] + traj.i[k] + traj.r[k];
                assert!((total - n).abs() <= 1e-6 * n);
                assert!(traj.s[k] >= -1e-6 * n && traj.e[k] >= -1e-6 * n && traj.i[k] >= -1e-6 * n);
            }
        }
    }

    #[test]
    fn flow_balance() {
        let p = params(0.45, 0.2, 0.12, 30.0, 80.0);
        let h = 120.0;
        let traj = solve_seir_ode(&p, h, 0.01).unwrap();
        // trapezoid integrals of κE and γI on a fine output grid
        let trap = |v: &[f64]| v.windows(2).map(|w| 0.5 * (w[0] + w[1]) * 0.01).sum::<f64>();
        let inflow = trap(&traj.incidence(p.kappa));
        let gi: Vec<f64> = traj.i.iter().map(|&i| p.gamma * i).collect();
        let balance = traj.i.last().unwrap() - traj.i[0] + trap(&gi);
        assert!(((inflow - balance) / inflow).abs() < 1e-4);
        assert!(((inflow - traj.cum_incidence.last().unwrap()) / inflow).abs() < 1e-4);
    }

    #[test]
    fn output_spacing_does_not_change_solution() {
        let p = params(0.5, 0.3, 0.15, 20.0, 20.0);
        let coarse = solve_seir_ode(&p, 100.0, 1.0).unwrap();
        let fine = solve_seir_ode(&p, 100.0, 0.5).unwrap();
        for k in 0..coarse.times.len() {
            let (a, b) = (coarse.e[k], fine.e[2 * k]);
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
        }
    }

    #[test]
    fn fixed_schedule_reproduces_adaptive_solution() {
        let p = params(0.5, 0.3, 0.15, 20.0, 20.0);
        let times: Vec<f64> = (0..50).map(|d| 2.0 * d as f64).collect();
        let (traj, sched) = solve_adaptive(&p, &times).unwrap();
        let again = solve_fixed(&p, &times, &sched).unwrap();
        for k in 0..times.len() {
            assert!((traj.e[k] - again.e[k]).abs() <= 1e-9 * traj.e[k].abs().max(1.0));
        }
        // and the frozen schedule still integrates a nearby parameter accurately
        let mut q = p;
        q.beta *= 1.001;
        let fresh = solve_seir_ode_at(&q, &times).unwrap();
        let frozen = solve_fixed(&q, &times, &sched).unwrap();
        for k in 0..times.len() {
            assert!((fresh.e[k] - frozen.e[k]).abs() <= 1e-6 * fresh.e[k].abs().max(1.0));
        }
    }

    #[test]
    fn unsorted_requests() {
        let p = params(0.5, 0.3, 0.15, 20.0, 20.0);
        let v = seir_incidence_many(&p, &[30.0, 5.0, 12.0]).unwrap();
        let w = seir_incidence_many(&p, &[5.0, 12.0, 30.0]).unwrap();
        assert_eq!(v, vec![w[2], w[0], w[1]]);
    }
}
