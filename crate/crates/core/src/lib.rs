//! Numerical verification of hypergeometric solutions of the qKZ equations
//! at |q| = 1, built on the double sine function S₂.
//!
//! Everything numerical is generic over [`scalar::Real`]; the aliases below
//! fix the scalar to `f64`.

pub mod combinatorics;
pub mod contours;
pub mod error;
pub mod harness;
pub mod integration;
pub mod linalg;
pub mod qkz_operators;
pub mod scalar;
pub mod special_functions;
pub mod weights;

pub use error::{QkzError, Result};

pub type C64 = scalar::Cx<f64>;
pub type Params64 = qkz_operators::Params<f64>;
pub type Periods64 = special_functions::Periods<f64>;
pub type DoubleSine64 = special_functions::DoubleSine<f64>;
pub type QuadratureConfig64 = integration::QuadratureConfig<f64>;
pub type PairingMatrix64 = integration::PairingMatrix<f64>;
pub type CMatrix64 = linalg::CMatrix<f64>;
