//! Numerical laboratory for the variable-speed φ⁴ kink.
//!
//! The model is written in the stretched coordinate `y`, where the
//! linearized operator around the stationary kink `K` reads
//! `𝓛_K = -∂² - b∂ - 1 + 3K²` and is self-adjoint in `<f, g>_p = ∫ p f g`.

pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod fredholm;
pub mod grid;
pub mod kink;
pub mod linalg;
pub mod pipeline;
pub mod profiles;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{ComplexGridFn, Grid, GridFn, Parity};
