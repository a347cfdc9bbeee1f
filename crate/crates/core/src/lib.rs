//! Quantification of CEST MRI Z-spectra.
//!
//! Three physical models (multi-pool Lorentzian, analytical steady-state Z,
//! MTR_Rex) are fitted either with classical box-constrained solvers or with a
//! self-supervised network trained on the models' reconstruction error.

pub mod cli;
pub mod error;
pub mod eval;
pub mod io;
pub mod models;
pub mod neural;
pub mod presets;
pub mod solvers;
pub mod spectrum;
pub mod spline;
pub mod synth;

pub use error::{CestError, Result};
