//! Unbalanced low-rank optimal transport.
//!
//! Couplings are kept in factored form `P = Q Diag(1/g) Rᵀ` and never
//! materialized by the solvers. Marginal constraints are replaced by KL
//! penalties weighted by `τ₁`, `τ₂`, so the transported mass `‖g‖₁` is free.
//!
//! Three problems share one outer loop ([`solve`]):
//!
//! - linear OT with cost `C` ([`solve::solve_ulot`]),
//! - Gromov-Wasserstein with intra-space costs `A`, `B` ([`solve::solve_ulgw`]),
//! - fused GW mixing both with weight `α` ([`solve::solve_ulfgw`]).
//!
//! Each outer step linearizes the smooth part of the objective, builds a
//! [`KernelTriple`] and solves the KL-prox subproblem with unbalanced Dykstra
//! iterations ([`dykstra`]). When costs are given as low-rank factors
//! ([`FactoredCost`]) one outer step costs `O((n + m) r d)`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupling;
pub mod cost;
pub mod dykstra;
mod error;
pub mod geometry;
pub mod io;
pub mod kernels;
pub mod kl;
pub mod measure;
pub mod metrics;
pub mod solve;

pub use coupling::{KernelTriple, LowRankCoupling};
pub use cost::FactoredCost;
pub use dykstra::{DualState, InnerParams, InnerSolution};
pub use error::{Error, Result};
pub use geometry::{InitKind, InitStrategy};
pub use kernels::{GradientMode, Gradients, GwGeometry};
pub use measure::Measure;
pub use solve::{InnerSolver, SolveReport, SolverConfig, StepRule};

/// Lower bound applied to every entry of `g` after an update.
pub const G_FLOOR: f64 = 1e-10;

/// Exponent arguments are clamped to `[-EXP_CLIP, EXP_CLIP]` before `exp`.
pub const EXP_CLIP: f64 = 100.0;

/// Default cap on `rows * cols` when a dense matrix is materialized.
pub const DEFAULT_MATERIALIZE_CAP: usize = 50_000_000;

#[inline]
pub(crate) fn clipped_exp(x: f64) -> f64 {
    x.clamp(-EXP_CLIP, EXP_CLIP).exp()
}
