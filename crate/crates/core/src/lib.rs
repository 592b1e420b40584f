//! Computational Poisson geometry on coordinate charts.
//!
//! The crate is organized bottom-up:
//!
//! - [`expr`]: symbolic expressions with exact differentiation.
//! - [`poisson`]: Poisson structures, brackets, Hamiltonian vector fields and
//!   the checks built on them (Jacobi, Casimirs, Poisson maps).
//! - [`submanifold`]: regular level sets, surface sampling and their
//!   classification (coisotropic, cosymplectic, Poisson submanifold).
//! - [`dirac`]: the Dirac bracket on cosymplectic level sets.
//! - [`quotient`]: reduction of canonical symmetries through invariant
//!   generators.
//! - [`flows`]: RK4 integration of ambient, constrained and reduced dynamics.
//!
//! # Sign convention
//!
//! For a chart `(x^1, ..., x^n)` the tensor entries are
//! `B^{ij} = {x^i, x^j}` and
//!
//! ```text
//! {f, g}  = Σ_ij B^{ij} ∂_i f ∂_j g
//! X_h^i   = Σ_j  B^{ij} ∂_j h          so that  X_h[f] = {f, h}
//! ```
//!
//! i.e. `X_h = B^♯ dh` with `B(α, β) = ⟨α, B^♯ β⟩`. For the canonical
//! structure `{q, p} = 1` this gives `q̇ = ∂h/∂p`, `ṗ = -∂h/∂q`.

pub mod dirac;
pub mod expr;
pub mod fixtures;
pub mod flows;
pub mod linalg;
pub mod poisson;
pub mod quotient;
pub mod report;
pub mod sampling;
pub mod submanifold;

pub use expr::{parse, simplify, Chart, EvalError, Expr, ParseError, Point};
