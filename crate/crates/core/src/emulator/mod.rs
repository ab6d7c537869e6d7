//! Space-filling designs and the GP emulator of a (stochastic) simulator.

#[allow(clippy::module_inception)]
mod emulator;
mod gp;
mod lhd;

pub use emulator::{
    emulate, fit_emulator, fit_emulator_with, rmspe, Design, Emulator, EmulatorConfig, EmulatorDocument, EmulatorGrid, NoiseModel,
    VarianceTerm,
};
pub use gp::GpHyper;
pub use lhd::lhd;
