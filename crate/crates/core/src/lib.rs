//! Finite-difference Dean–Kawasaki simulation on periodic grids, an exact
//! Brownian particle reference and Monte Carlo moment estimation.

pub mod config;
pub mod dk;
pub mod error;
pub mod experiment;
pub mod fmt;
pub mod grid;
pub mod heat;
pub mod moments;
pub mod particles;
pub mod profiles;
pub mod report;
pub mod rng;
pub mod stats;
pub mod svg;
pub mod test_function;

pub use error::{Error, Result};
pub use grid::{Grid, GridFunction, Spectrum, Stencil, StencilKind};
pub use test_function::TestFunction;
