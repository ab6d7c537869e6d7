//! Calibration of imperfect count-output simulators by L2 projection onto a
//! kernel Poisson regression fit, with least-squares and maximum-likelihood
//! competitors, SEIR simulators, a GP emulator and sandwich inference.

pub mod calibration;
pub mod emulator;
pub mod error;
pub mod inference;
pub mod kernel;
pub mod optim;
pub mod report;
pub mod rng;
pub mod seir;
pub mod studies;
pub mod timeseries;

pub use error::{Error, Result};
pub use kernel::{fit_kpr, predict_lambda, GofReport, KernelFit, MaternParams};
pub use timeseries::{CumulativeSeries, Domain, TimeSeries};
