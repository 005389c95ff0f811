//! Discretized measures on dyadic grids, their additive and multiplicative
//! convolutions, scale energies, Fourier decay profiles and discretized-set
//! combinatorics, plus the experiment pipelines that drive them.

pub mod cli;
pub mod constructions;
pub mod conv_engine;
pub mod dyadic_sets;
pub mod energy;
pub mod error;
pub mod flattening_lab;
pub mod measure_grid;
pub mod spectral;

mod numeric;

pub use conv_engine::ConvOp;
pub use dyadic_sets::DyadicGridSet;
pub use error::{Error, Result};
pub use measure_grid::{GridMeasure, Kernel};
