//! Numerical tools for prescribed (p,k)-curvature equations
//! `σ_k/σ_l(Λ(κ)) = f(X/|X|) |X|^b ⟨X,ν⟩^q` on closed star-shaped
//! hypersurfaces of `R^{n+1}`.
//!
//! The crate is organised bottom-up:
//!
//! * [`symfun`] — elementary symmetric functions and Gårding cones,
//! * [`exterior`] — the p-th exterior power, the `Λ` map and `F = σ_k/σ_l(Λ)`,
//! * [`geometry`] — radial graphs over a structured grid on `S^n`,
//! * [`pde`] — residual, linearization and bound audits in the gauge `u = -log ρ`,
//! * [`solver`] — damped Newton, continuation and the homogeneous `ε`-path,
//! * [`verify`] — randomized property suites and solution audits.

pub mod exterior;
pub mod geometry;
pub mod io;
pub mod linear;
pub mod pde;
pub mod solver;
pub mod symfun;
pub mod verify;

pub use exterior::{CurvaturePoint, MultiIndexTable, SymMatrix};
pub use geometry::{GeometryPoint, RadialField, SphereGrid};
pub use linear::LinearSolver;
pub use pde::{BoundReport, Discretization, Jacobian, ProblemSpec, Regime, Residual, RhsFunction};
pub use solver::{CertificateReport, JacobianMode, NewtonOutcome, ReportSummary, SolveReport, SolverConfig, TraceEntry};
pub use symfun::{ConeCheck, EigenVector};
pub use verify::{AuditSummary, PropertyReport};
