//! Emulation of large non-stationary Gaussian spatial fields.
//!
//! The pipeline has three stages:
//!
//! 1. **Local estimation** ([`mle`]): moving-window maximum likelihood fits
//!    of anisotropic Matérn parameters over replicate fields.
//! 2. **Translation** ([`calibrate`]): numerically calibrated maps from
//!    Matérn ranges and anisotropy to the parameters of a lattice spatial
//!    autoregression (SAR).
//! 3. **Global encoding** ([`emulator`]): a single sparse non-stationary
//!    precision matrix assembled from the per-node SAR parameters, with
//!    marginal-variance normalization, fast simulation, correlation maps
//!    and whitening diagnostics ([`diagnostics`]).
//!
//! See the crate examples for one runnable program per capability, or the
//! `nonstat` binary for the command-line pipeline.

pub mod calibrate;
pub mod cli;
pub mod diagnostics;
pub mod emulator;
pub mod error;
pub mod grid;
pub mod io;
pub mod matern;
pub mod mle;
pub mod optim;
pub mod sar;
pub mod stream;

pub use error::{Error, Result};
pub use grid::{standardize, Field, FieldEnsemble, Grid, LocalParams, ParamFields};
pub use matern::{
    aniso_distance, bessel_k, covariance_matrix, matern_correlation, AnisoTransform, MaternSpec,
    Smoothness,
};
