//! General solutions of first-order PDEs built from an arbitrary function.
//!
//! Covered equations:
//!
//! * `F(p, q) = 0` with an explicit branch `p = f(q)`,
//! * `F(f(x) p, q) = 0` with `p = G(q) / f(x)`,
//! * `F(p, h(y) q) = 0` with `q = G(p) / h(y)`,
//! * the one-dimensional Hamilton-Jacobi equation `a(x) p^2 + V(x) - q = 0`.
//!
//! Each solution family is parameterised by a user-chosen function (`phi` or
//! `G`). At every grid point the solver finds the root of an integrability
//! constraint in `q` and assembles the solution value from it; [`verify`]
//! then checks the result against the PDE by finite differences.

// `!(a >= b)` is used on purpose so that NaN fails admissibility checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod csvio;
pub mod expr;
pub mod field;
pub mod hj;
pub mod numerics;
pub mod pq;
pub mod verify;

pub use expr::{Bindings, Expression};
pub use field::{ActionField, GridField, PointStatus, SolutionField};
pub use hj::HjProblem;
pub use numerics::SolverConfig;
pub use pq::{PqKind, PqProblem};
pub use verify::{Model, ResidualReport};
