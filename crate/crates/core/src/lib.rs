//! Convex multi-view matrix completion with overlapping trace norms.
//!
//! Each view `Y_k` (a `d_k × n` matrix observed on a subset of its entries) is
//! explained by the sum of a slice of a shared low-rank matrix `X0`, a
//! view-specific low-rank matrix `X_k` and an entry-wise sparse matrix `S_k`.
//! Switching those blocks on and off gives the six model variants
//! (`I00`, `I0R`, `J00`, `J0R`, `JL0`, `JLR`), all fitted by the same ADMM solver
//! ([`admm`]) or by the accelerated proximal-gradient baseline ([`apg`]).
//!
//! ```
//! use mvmc::datagen::{gen_synthetic_problem, SynthSpec};
//! use mvmc::model::{ModelSpec, Variant};
//! use mvmc::admm::{admm_solve, AdmmConfig};
//!
//! let synth = SynthSpec { n: 20, d1: 10, d2: 10, ..SynthSpec::for_dims(20, 10, 10) };
//! let inst = gen_synthetic_problem(&synth).unwrap();
//! let spec = ModelSpec::from_variant(Variant::JLR, 2, 1.0, 1.0, 1.0);
//! let fit = admm_solve(&inst.problem, &spec, &AdmmConfig::default()).unwrap();
//! assert_eq!(fit.objective_trace.len(), fit.iterations_run);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod apg;
pub mod datagen;
pub mod error;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod prox;
pub mod tune;

pub use error::{Error, Result};
pub use loss::LossKind;
pub use model::{LatentBlocks, ModelSpec, MultiViewProblem, Variant, ViewData};

/// Dense matrix type used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;

/// A `(row, col)` position inside a view.
pub type Index = (usize, usize);
