//! Nonparametric estimate of the mean process by kernel Poisson regression.

mod cv;
mod gof;
mod kpr;
pub mod markov;
mod matern;

pub use cv::{default_kappa_grid, fit_kpr_cv, select_kappa_cv, select_kernel_cv, CvConfig};
pub use gof::{deviance_gof, poisson_deviance, GofReport};
pub use kpr::{fit_kpr, fit_kpr_with, gram_matrix, predict_lambda, KernelFit, KprOptions, KprSolver};
pub use matern::{bessel_k, matern, matern_general, MaternParams};
