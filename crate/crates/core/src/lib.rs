//! Numerical laboratory for the renormalized stochastic porous-medium
//! equation `∂_t u − ∇·(a(u)∇u) = σ(u)ξ − σ'(u)σ(u)C^{a(u)}` on the torus.
//!
//! The `spmlab` binary in [`cli`] drives experiments from TOML files; the
//! modules below are usable on their own.

// `!(x > 0.0)` is used on purpose to reject NaN along with the bound.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod kinetic;
pub mod model;
pub mod noise;
pub mod nonlinearity;
pub mod quad;
pub mod smooth;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};

// Book chapters double as doctests.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $file:literal) => {
            #[doc = include_str!(concat!("../../../book/src/", $file))]
            mod $name {}
        };
    }
    chapter!(introduction, "introduction.md");
    chapter!(nonlinearity, "nonlinearity.md");
    chapter!(model, "model.md");
    chapter!(solver, "solver.md");
    chapter!(kinetic, "kinetic.md");
    chapter!(seminorms, "seminorms.md");
    chapter!(energy, "energy.md");
    chapter!(cli, "cli.md");
}
