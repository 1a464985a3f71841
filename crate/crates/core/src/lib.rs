//! Neumann–Neumann type domain decomposition for semi- and quasilinear
//! elliptic equations on a two-subdomain split of a rectangle, discretized
//! with P1 finite elements.
//!
//! The three interface iterations share the update
//! `eta <- eta - P^{-1} S eta`, where `S` is the discrete Steklov–Poincaré
//! residual and `P^{-1}` is one of
//!
//! * [`MethodKind::Nn`]: the nonlinear Neumann solves of the standard method,
//! * [`MethodKind::Mnn1`]: Laplace Neumann solves,
//! * [`MethodKind::Mnn2`]: Neumann solves of the linearized equation.

pub mod dd_iteration;
pub mod error;
pub mod fem;
pub mod harness;
pub mod mesh;
pub mod problems;
pub mod solver;
pub mod steklov;

pub use dd_iteration::{
    monolithic_solve, relative_error, run, DdSetup, IterationParams, IterationTrace, MethodKind,
    TraceRow,
};
pub use error::{Error, Result};
pub use fem::{Discretization, QuadratureRule, SparseSystem};
pub use mesh::{
    build_rect_mesh, decompose_l_shaped, decompose_vertical, Decomposition, DofSet,
    InterfaceFunctional, InterfaceVector, Mesh, Subdomain, SubdomainField,
};
pub use problems::{ProblemDef, ProblemKind, Source};
pub use solver::{NewtonConfig, SolveCounter, SolveStats};
pub use steklov::{LaplaceOperators, PrecondKind};
