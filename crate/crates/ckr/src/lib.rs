//! # ckr — compressed kernel regression
//!
//! Kernel ridge regression whose solution is sparsified by ridge-leverage
//! Nystrom column sampling and then truncated to a small bit budget, so the
//! learned hypothesis is a sub-sample plus a short string of fixed-point
//! coefficients. Because the hypothesis is that small, a selection-scheme
//! argument bounds its generalization error independently of the (often
//! enormous) RKHS norm of the comparator class.
//!
//! The crate is organized around the pipeline:
//!
//! 1. [`kernels`] — kernel functions and Gram matrices,
//! 2. [`spectral`] — eigenvalue decay fitting and effective dimension,
//! 3. [`nystrom`] — ridge leverage scores and the PSD column sketch,
//! 4. [`solver`] — the relaxation cascade (bounded, lagrangian, perturbed,
//!    sketched) with an exact norm-constrained oracle,
//! 5. [`compression`] — coefficient truncation, reconstruction, bit
//!    accounting and the generalization-bound calculators,
//! 6. [`learner`] — the end-to-end training algorithm and its schedule,
//! 7. [`synth`] — controlled-spectrum Gram generators, teacher networks and
//!    the norm-bound calculators for network classes,
//! 8. [`verify`] — the Monte Carlo assertion suites behind `ckr verify`.
//!
//! Every inequality the library relies on (the three cascade error bounds,
//! the total-error bound, the Nystrom sandwich, the effective-dimension
//! bounds, the bit-complexity envelope, the compression generalization
//! bound) is checked empirically by the suites in [`verify`] and by the
//! `acceptance` integration tests.
//!
//! See the `examples/` directory for one runnable walk-through per
//! capability; the thin `ckr` binary exposes the same functionality as
//! subcommands (`gen`, `spectrum`, `train`, `predict`, `verify`, `report`).

pub mod cli;
pub mod compression;
pub mod error;
pub mod io;
pub mod kernels;
pub mod learner;
pub mod nystrom;
pub mod solver;
pub mod spectral;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
