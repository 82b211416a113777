//! Reduced-basis stochastic collocation for the parameterized steady
//! convection-diffusion equation on `[-1, 1]^2`.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only numerics:
//!
//! - [`mesh`], [`sparse`] and [`fem`]: uniform Q1 discretization with
//!   streamline-diffusion blocks and Dirichlet lifting,
//! - [`affine`]: the affine parameter expansion of operator and forcing,
//! - [`collocation`]: Gauss-Legendre / Clenshaw-Curtis rules, Smolyak grids,
//!   anchored PCM-ANOVA point sets and Halton sequences,
//! - [`anova`]: anchored-ANOVA terms, indicators and moment synthesis,
//! - [`reduced_basis`]: the orthonormal basis with its offline blocks, the
//!   residual indicator and the greedy update sweep,
//! - [`driver`]: sparse-grid, fixed-order ANOVA and dimension/order adaptive
//!   runs.
//!
//! File formats, configuration and the command line live in the `rbanova`
//! companion crate.
#![no_std]
#![warn(missing_docs)]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod affine;
pub mod anova;
pub mod collocation;
pub mod dense;
pub mod driver;
mod error;
pub mod fem;
pub mod mesh;
pub mod moments;
pub mod reduced_basis;
pub mod sparse;

pub use error::{Error, Result};

/// Nodal Euclidean norm.
pub fn norm2(v: &[f64]) -> f64 {
    libm::sqrt(dot(v, v))
}

/// Plain dot product of two equally long slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
