//! Koopman distillation of two-dimensional diffusion and flow-matching teachers.
//!
//! The crate is organised bottom-up:
//!
//! * [`ndmath`]: dense matrices, SiLU MLPs with reverse-mode gradients, Adam, least squares.
//! * [`teacher`]: the checkerboard distribution, EDM / flow-matching teachers, Heun ODE
//!   sampling and noise-to-data pair harvesting.
//! * [`pairs`]: binary containers for pair sets and checkpoints, splitting, CSV export.
//! * [`kdm`]: the one-step student (encoders, Koopman operator, decoder, discriminator).
//! * [`theory`]: EDMD with monomial liftings and the semantic-proximity verifier.
//! * [`eval`]: energy distance, k-NN purity, DBSCAN outliers, perturbation sweeps, SVG plots.
//!
//! Data-parallel loops go through [`exec`], which uses rayon when the `parallel` feature
//! is enabled and the caller asks for it, and a plain sequential loop otherwise. Both paths
//! produce bitwise-identical results.

// Validation is written as `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod exec;
pub mod kdm;
pub mod ndmath;
pub mod pairs;
pub mod teacher;
pub mod theory;

pub use error::{Error, FormatError, Result};
