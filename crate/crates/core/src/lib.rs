#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bayes;
pub mod catalogue;
pub mod cell;
pub mod coefficient;
pub mod diffusion;
pub mod error;
pub mod field;
pub mod fine_scale;
pub mod forward;
pub mod homogenized;
pub mod linalg;
pub mod mesh;
pub mod observation;
pub mod quadrature;
pub mod stats;
pub mod two_scale;
pub mod wavelet;

pub use error::{Error, Result};
