//! Replication studies on the synthetic problems: MSE of every estimator,
//! coverage of the sandwich intervals and emulator accuracy tables.
//!
//! Replicates draw their data from seeds derived from the study seed, so
//! results do not depend on thread scheduling, and all methods in a
//! replicate see the same data.

use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    fit_l2, fit_ls, fit_mle, toy_theta_star, CalibProblem, CalibResult, Method, Model, Simulator, Toy,
};
use crate::emulator::{fit_emulator_with, Design, Emulator, EmulatorConfig};
use crate::error::{Error, Result};
use crate::inference::{sandwich_l2, sandwich_l2_emulated, z_value, PhiMode, PlugIn};
use crate::kernel::{deviance_gof, fit_kpr_cv, CvConfig};
use crate::optim::OptimizerConfig;
use crate::rng::{derive_seed, rng_from_seed, stream_seed};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study: Toy,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub with_emulator: bool,
    /// Emulator design: unique points and replicates per point.
    pub emulator_m: usize,
    pub emulator_a: usize,
    pub level: f64,
    pub phi_mode: PhiMode,
    pub cv: CvConfig,
    pub optimizer: OptimizerConfig,
    pub emulator: EmulatorConfig,
}

impl StudyConfig {
    pub fn new(study: Toy, replicates: usize, seed: u64) -> Self {
        let (m, a) = match study {
            Toy::ThreeD => (300, 100),
            _ => (100, 100),
        };
        Self {
            study,
            n: study.default_n(),
            replicates,
            seed,
            with_emulator: false,
            emulator_m: m,
            emulator_a: a,
            level: 0.95,
            phi_mode: PhiMode::Auto,
            cv: CvConfig::default(),
            optimizer: OptimizerConfig::default(),
            emulator: EmulatorConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 || self.n < 2 {
            return Err(Error::Argument("a study needs at least one replicate and two observations".into()));
        }
        if self.with_emulator && (self.emulator_m < 2 || self.emulator_a == 0) {
            return Err(Error::Argument("emulator design needs m >= 2 and a >= 1".into()));
        }
        z_value(self.level)?;
        self.optimizer.validate()
    }

    fn methods(&self) -> Vec<Method> {
        let mut m = vec![Method::L2, Method::Ls, Method::Mle];
        if self.with_emulator {
            m.extend([Method::L2Emu, Method::LsEmu, Method::MleEmu]);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    /// Mean squared error per coordinate over successful replicates.
    pub mse: Vec<f64>,
    pub successes: usize,
    /// Replicates whose interval covered θ* (L2 methods in coverage studies).
    pub covered: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub study: Toy,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub theta_star: Vec<f64>,
    pub methods: Vec<MethodSummary>,
    pub failures: usize,
    pub wall_clock_secs: f64,
    /// Per-replicate estimates, replicate-major, in `methods` order.
    #[serde(skip)]
    pub estimates: Vec<Vec<Option<Vec<f64>>>>,
}

impl StudyResult {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// MSE summed over coordinates.
    pub fn total_mse(&self, method: Method) -> Option<f64> {
        self.summary(method).map(|s| s.mse.iter().sum())
    }

    /// Rows `method,coordinate,mse,successes,covered`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,coordinate,mse,successes,covered\n");
        for m in &self.methods {
            for (j, v) in m.mse.iter().enumerate() {
                let cov = m.covered.map(|c| c.to_string()).unwrap_or_default();
                out.push_str(&format!("{},{},{:.10e},{},{}\n", m.method.name(), j + 1, v, m.successes, cov));
            }
        }
        out
    }
}

/// Emulator of the toy's stochastic simulator shared by all replicates.
pub fn toy_emulator(toy: Toy, m: usize, a: usize, seed: u64, cfg: &EmulatorConfig) -> Result<Emulator> {
    let (lo, hi) = toy.design_box();
    let design = Design::lhd(m, lo, hi, a, stream_seed(seed, "design"))?;
    let outputs = toy.stochastic_outputs(&design, stream_seed(seed, "simulate"));
    fit_emulator_with(&design, &outputs, cfg)
}

struct Replicate {
    estimates: Vec<Option<Vec<f64>>>,
    covered: Vec<Option<bool>>,
}

fn covers(theta: &[f64], star: &[f64], cov: &nalgebra::DMatrix<f64>, z: f64) -> bool {
    theta.iter().zip(star).enumerate().all(|(j, (t, s))| (t - s).abs() <= z * cov[(j, j)].max(0.0).sqrt())
}

fn run_replicate(cfg: &StudyConfig, r: usize, emu: Option<&Emulator>, star: &[f64], methods: &[Method], coverage: bool) -> Result<Replicate> {
    let toy = cfg.study;
    let data = toy.sample_data(cfg.n, derive_seed(stream_seed(cfg.seed, "data"), r as u64))?;
    let lambda_hat = fit_kpr_cv(&data, &cfg.cv)?;
    let sim = toy.simulator();
    let bounds = toy.bounds();
    let mut opt = cfg.optimizer.clone();
    opt.seed = derive_seed(stream_seed(cfg.seed, "optimizer"), r as u64);
    let z = z_value(cfg.level)?;
    let phi = if coverage { cfg.phi_mode.resolve(&deviance_gof(&lambda_hat, &data)?) } else { 1.0 };

    let mut estimates = Vec::new();
    let mut covered = Vec::new();
    for &method in methods {
        let model = match (method.is_emulated(), emu) {
            (false, _) => Model::Direct(&sim),
            (true, Some(e)) => Model::emulated(e),
            (true, None) => return Err(Error::Study("emulated method without an emulator".into())),
        };
        let mut hit = None;
        let fit: Result<CalibResult> = match method {
            Method::L2 | Method::L2Emu => CalibProblem::new(&data, &lambda_hat, model, bounds.clone(), opt.clone()).and_then(|p| {
                let res = fit_l2(&p)?;
                if coverage {
                    let plug = PlugIn::from_problem(&p);
                    let sw = match model {
                        Model::Emulated(e, term) => sandwich_l2_emulated(&plug, e, term, &res.theta_hat, phi)?,
                        Model::Direct(s) => sandwich_l2(&plug, s, &res.theta_hat, phi)?,
                    };
                    hit = Some(covers(&res.theta_hat, star, &sw.cov, z));
                }
                Ok(res)
            }),
            Method::Ls | Method::LsEmu => fit_ls(&data, model, &bounds, &opt),
            Method::Mle | Method::MleEmu => fit_mle(&data, model, &bounds, &opt),
        };
        estimates.push(fit.ok().map(|f| f.theta_hat));
        covered.push(hit);
    }
    Ok(Replicate { estimates, covered })
}

fn run(cfg: &StudyConfig, methods: Vec<Method>, coverage: bool) -> Result<StudyResult> {
    cfg.validate()?;
    let start = Instant::now();
    let star = toy_theta_star(cfg.study)?;
    let emu = if methods.iter().any(Method::is_emulated) {
        Some(toy_emulator(cfg.study, cfg.emulator_m, cfg.emulator_a, cfg.seed, &cfg.emulator)?)
    } else {
        None
    };
    let reps: Vec<Option<Replicate>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run_replicate(cfg, r, emu.as_ref(), &star, &methods, coverage).ok())
        .collect();

    // a replicate fails when its data step fails or any of its methods fails
    let failures = reps.iter().filter(|r| r.as_ref().is_none_or(|r| r.estimates.iter().any(Option::is_none))).count();
    if failures * 10 > cfg.replicates {
        return Err(Error::Study(format!("{failures} of {} replicates failed", cfg.replicates)));
    }
    let q = star.len();
    let summaries = methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let mut sse = vec![0.0; q];
            let mut ok = 0;
            let mut cov_count = 0;
            for rep in reps.iter().flatten() {
                if let Some(t) = &rep.estimates[k] {
                    ok += 1;
                    for j in 0..q {
                        sse[j] += (t[j] - star[j]).powi(2);
                    }
                }
                if rep.covered[k] == Some(true) {
                    cov_count += 1;
                }
            }
            let is_l2 = matches!(method, Method::L2 | Method::L2Emu);
            MethodSummary {
                method,
                mse: sse.iter().map(|s| s / ok.max(1) as f64).collect(),
                successes: ok,
                covered: (coverage && is_l2).then_some(cov_count),
            }
        })
        .collect();
    Ok(StudyResult {
        study: cfg.study,
        n: cfg.n,
        replicates: cfg.replicates,
        seed: cfg.seed,
        theta_star: star,
        methods: summaries,
        failures,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        estimates: reps.into_iter().map(|r| r.map(|r| r.estimates).unwrap_or_else(|| vec![None; methods.len()])).collect(),
    })
}

/// MSE of L2, LS and MLE (and their emulated forms when requested).
pub fn run_mse_study(cfg: &StudyConfig) -> Result<StudyResult> {
    run(cfg, cfg.methods(), false)
}

/// Coverage of the L2 sandwich intervals (emulated too when requested).
pub fn run_coverage_study(cfg: &StudyConfig) -> Result<StudyResult> {
    let mut methods = vec![Method::L2];
    if cfg.with_emulator {
        methods.push(Method::L2Emu);
    }
    run(cfg, methods, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmspeRow {
    pub m: usize,
    pub a: usize,
    pub rmspe: f64,
    pub fit_secs: f64,
    pub predict_secs: f64,
}

/// Number of random test inputs in [`run_rmspe_table`].
pub const RMSPE_TEST_POINTS: usize = 10_000;

/// Emulator accuracy for each `(m, a)`: RMSPE of `m_N` against the noise-free
/// `f` at random inputs. Settings with equal `m` share the design, and a
/// smaller `a` uses a prefix of the same replicate streams.
pub fn run_rmspe_table(toy: Toy, settings: &[(usize, usize)], seed: u64, cfg: &EmulatorConfig) -> Result<Vec<RmspeRow>> {
    let (lo, hi) = toy.design_box();
    let mut rng = rng_from_seed(stream_seed(seed, "test points"));
    let tests: Vec<Vec<f64>> = (0..RMSPE_TEST_POINTS)
        .map(|_| lo.iter().zip(&hi).map(|(l, h)| l + (h - l) * rng.random::<f64>()).collect())
        .collect();
    let f = toy.function();
    let truth: Vec<f64> = tests.iter().map(|z| f(z[0], &z[1..])).collect();
    settings
        .iter()
        .map(|&(m, a)| {
            let design = Design::lhd(m, lo.clone(), hi.clone(), a, derive_seed(stream_seed(seed, "design"), m as u64))?;
            let outputs = toy.stochastic_outputs(&design, stream_seed(seed, "simulate"));
            let t0 = Instant::now();
            let emu = fit_emulator_with(&design, &outputs, cfg)?;
            let fit_secs = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let rmspe = emu.rmspe(&tests, &truth)?;
            Ok(RmspeRow { m, a, rmspe, fit_secs, predict_secs: t1.elapsed().as_secs_f64() })
        })
        .collect()
}

/// Convenience: the simulator of a study's toy as a trait object.
pub fn toy_simulator(toy: Toy) -> Box<dyn Simulator> {
    Box::new(toy.simulator())
}
