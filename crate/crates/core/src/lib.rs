// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision, clippy::type_complexity)]

pub mod error;
pub mod fft;
pub mod gaussian_oracle;
pub mod geometry;
pub mod hitting_lab;
pub mod kernels;
pub mod potential_theory;
pub mod quadrature;
pub mod rng;
pub mod spde_solver;
pub mod special;
pub mod spectral_noise;
pub mod stats;

pub use error::{Error, Result};
