//! Exponential midpoint time integration for parabolic problems
//!
//! This crate integrates stiff semidiscrete problems u'(t) + A u(t) = f(t)
//! (or = B(t, u) in the semilinear case) with a self-adjoint positive
//! definite A, using the exponential midpoint rule
//!
//! ```text
//! U^n = U^{n-1} + k_n phi_1(-k_n A) (value(t^{n-1/2}) - A U^{n-1}),
//! ```
//!
//! and produces, alongside the numerical solution, a full set of a
//! posteriori quantities: the piecewise quadratic reconstruction of the
//! nodal values, the residuals it leaves in the equation, the norm
//! estimators est_U, est_F (or est_B) and zeta_U, and computable lower and
//! upper error bounds with their effectivity indices.
//!
//! The phi functions are applied through a spectral decomposition when the
//! operator supplies one, through a dense symmetric eigensolve, or through a
//! Lanczos Krylov projection for matrix-free use.
//!
//! # Example
//!
//! ```
//! use std::sync::Arc;
//! use expmid::{assemble_report, example1, run, PhiEvaluator, TimeGrid};
//!
//! let problem = example1(100)?;
//! let phi = Arc::new(PhiEvaluator::for_operator(problem.operator.clone()));
//! let traj = run(&problem, TimeGrid::uniform(problem.t_end, 10)?, phi)?;
//! let report = assemble_report(&traj, &problem)?;
//!
//! let e_t = report.e_t.unwrap();
//! assert!((e_t - 4.2546e-3).abs() < 1e-6);
//! assert!(report.lower <= report.upper);
//! # Ok::<(), expmid::Error>(())
//! ```

pub mod error;
pub mod estimators;
pub mod integrators;
pub mod operators;
pub mod phifun;
pub mod problems;
pub mod quadrature;

pub use error::{Error, Result};
pub use estimators::{
    accumulate_estimators, assemble_report, bounds_and_effectivity, check_semilinear,
    check_suboptimal, error_metrics, EstimatorReport,
};
pub use integrators::{
    check_update_order, exp_quadrature_weights, run, ExpQuadratureRule, SemilinearConfig,
    StepCache, TimeGrid, Trajectory,
};
pub use operators::{
    inner_h, norm_h, norm_v, norm_vstar, DiagonalOperator, DirichletLaplacian1D, EigenSystem,
    SpdOperator,
};
pub use phifun::{phi_scalar, PhiEvaluator, PhiMethod};
pub use problems::{example1, example2, example3, example4, ProblemKind, ProblemSpec};
pub use quadrature::Quadrature3;
