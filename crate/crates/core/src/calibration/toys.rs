//! Synthetic problems with known truth: an imperfect one-parameter
//! simulator, a quadratic fitted to a wiggly process, and the `f = θx`
//! example on which the MLE is inconsistent for the L2 projection.

use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::simulator::FnSimulator;
use crate::emulator::Design;
use crate::error::Result;
use crate::optim::Bounds;
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::timeseries::{Domain, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Toy {
    #[serde(rename = "toy-1d")]
    OneD,
    #[serde(rename = "toy-3d")]
    ThreeD,
    MleInconsistency,
}

pub type ToySimulator = FnSimulator<fn(f64, &[f64]) -> f64>;

fn lambda_1d(x: f64) -> f64 {
    (x / 2.0).exp() * (x / 2.0).sin() + 30.0
}

fn f_1d(x: f64, t: &[f64]) -> f64 {
    let th = t[0];
    lambda_1d(x) - 5.0 * (th * th - th + 1.0).sqrt() * ((th * x).sin() + (th * x).cos())
}

fn lambda_3d(x: f64) -> f64 {
    3.0 * x + 3.0 * x * (5.0 * x).sin() + 3.0
}

fn f_3d(x: f64, t: &[f64]) -> f64 {
    t[0] + t[1] * x + t[2] * x * x
}

fn f_linear(x: f64, t: &[f64]) -> f64 {
    t[0] * x
}

pub fn poisson_draw(rng: &mut Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

impl Toy {
    pub fn name(&self) -> &'static str {
        match self {
            Toy::OneD => "toy-1d",
            Toy::ThreeD => "toy-3d",
            Toy::MleInconsistency => "mle-inconsistency",
        }
    }

    /// True mean process.
    pub fn lambda(&self, x: f64) -> f64 {
        match self {
            Toy::OneD => lambda_1d(x),
            Toy::ThreeD => lambda_3d(x),
            Toy::MleInconsistency => x * x,
        }
    }

    /// `f(x, θ)` in closed form.
    pub fn function(&self) -> fn(f64, &[f64]) -> f64 {
        match self {
            Toy::OneD => f_1d,
            Toy::ThreeD => f_3d,
            Toy::MleInconsistency => f_linear,
        }
    }

    pub fn simulator(&self) -> ToySimulator {
        FnSimulator::new(self.bounds().dim(), self.function())
    }

    pub fn domain(&self) -> Domain {
        match self {
            Toy::OneD => Domain { lo: 0.0, hi: 2.0 * std::f64::consts::PI },
            Toy::ThreeD => Domain { lo: 0.0, hi: 2.0 },
            Toy::MleInconsistency => Domain::UNIT,
        }
    }

    pub fn bounds(&self) -> Bounds {
        match self {
            Toy::OneD => Bounds { lower: vec![-1.0], upper: vec![1.0] },
            Toy::ThreeD => Bounds { lower: vec![0.0; 3], upper: vec![5.0; 3] },
            Toy::MleInconsistency => Bounds { lower: vec![0.1], upper: vec![2.0] },
        }
    }

    pub fn default_n(&self) -> usize {
        match self {
            Toy::OneD | Toy::ThreeD => 50,
            Toy::MleInconsistency => 5000,
        }
    }

    /// Unit-interval input locations: equally spaced for the one-parameter
    /// example, sorted uniform draws otherwise.
    pub fn inputs(&self, n: usize, rng: &mut Rng) -> Vec<f64> {
        match self {
            Toy::OneD => (0..n).map(|i| if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 }).collect(),
            Toy::ThreeD | Toy::MleInconsistency => {
                let mut u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                u.sort_by(f64::total_cmp);
                u.dedup();
                u
            }
        }
    }

    /// Poisson counts with mean `λ(x_i)`.
    pub fn sample_data(&self, n: usize, seed: u64) -> Result<TimeSeries> {
        let mut rng = rng_from_seed(seed);
        let u = self.inputs(n, &mut rng);
        let dom = self.domain();
        let y = u.iter().map(|&v| poisson_draw(&mut rng, self.lambda(dom.to_physical(v)))).collect();
        TimeSeries::new(u, y, dom)
    }

    /// Stochastic version of the simulator: Poisson counts around `f(x, θ)`,
    /// `design.replicates` per point.
    pub fn stochastic_outputs(&self, design: &Design, seed: u64) -> Vec<Vec<f64>> {
        let f = self.function();
        design
            .points
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let mean = f(p[0], &p[1..]);
                let mut rng = rng_from_seed(derive_seed(seed, k as u64));
                (0..design.replicates).map(|_| poisson_draw(&mut rng, mean) as f64).collect()
            })
            .collect()
    }

    /// Lower and upper corners of the joint `(x, θ)` box.
    pub fn design_box(&self) -> (Vec<f64>, Vec<f64>) {
        let (d, b) = (self.domain(), self.bounds());
        let mut lo = vec![d.lo];
        lo.extend(&b.lower);
        let mut hi = vec![d.hi];
        hi.extend(&b.upper);
        (lo, hi)
    }
}

/// `∫_0^L x^p sin(ax) dx` and `∫_0^L x^p cos(ax) dx` for `p = 0..=pmax`,
/// by integration by parts.
pub fn power_trig_moments(a: f64, l: f64, pmax: usize) -> (Vec<f64>, Vec<f64>) {
    let (s, c) = ((a * l).sin(), (a * l).cos());
    let mut is = vec![(1.0 - c) / a];
    let mut js = vec![s / a];
    for p in 1..=pmax {
        let lp = l.powi(p as i32);
        let pf = p as f64;
        is.push(-lp * c / a + pf / a * js[p - 1]);
        js.push(lp * s / a - pf / a * is[p - 1]);
    }
    (is, js)
}

/// Closed-form L2 projection of `3x + 3x sin 5x + 3` onto quadratics on
/// `[0, 2]`: the 3×3 normal equations with exact moments.
pub fn toy_3d_exact_theta() -> [f64; 3] {
    let l: f64 = 2.0;
    let (is, _) = power_trig_moments(5.0, l, 3);
    let mono = |p: i32| l.powi(p + 1) / (p + 1) as f64;
    let g = nalgebra::Matrix3::from_fn(|i, j| mono((i + j) as i32));
    let r = nalgebra::Vector3::from_fn(|i, _| 3.0 * mono(i as i32 + 1) + 3.0 * is[i + 1] + 3.0 * mono(i as i32));
    let t = g.lu().solve(&r).expect("Hilbert-type moment matrix is invertible");
    [t[0], t[1], t[2]]
}
