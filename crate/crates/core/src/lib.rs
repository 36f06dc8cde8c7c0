//! Integrable deformations of the Euler top.
//!
//! The crate builds vector fields that preserve a prescribed set of first
//! integrals `I_k = x1^2 - x_{k+1}^2 + 2 alpha_k`, integrates them, and
//! measures how well the promised identities hold numerically.
//!
//! * [`expr`]: expression parsing, evaluation, differentiation, simplification.
//! * [`field`]: deformation specs, field synthesis, built-in systems.
//! * [`integrate`]: RK4 and Dormand-Prince integration with projection.
//! * [`diagnose`]: drift, orthogonality, divergence and independence checks.
//! * [`oracle`]: quadrature reference solutions of the undeformed top.
//!
//! ```
//! use eulertop::diagnose::drift_report;
//! use eulertop::{builtin, integrate, synthesize, IntegratorConfig};
//!
//! let sys = builtin("cube_root_deform", 3, 1.0)?;
//! let v = synthesize(&sys.spec)?;
//! let cfg = IntegratorConfig::adaptive(1e-10, 0.0, 0.5);
//! let traj = integrate(&v, Some(&sys.spec), &[1.0, 2.0, 3.0], &cfg)?;
//! let report = drift_report(&traj, &sys.spec)?;
//! assert!(report.worst_drift() < 1e-8);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod diagnose;
pub mod expr;
pub mod field;
pub mod integrate;
pub mod oracle;

pub use diagnose::{DiagnoseError, InvariantReport, SampleDomain, Thresholds, Verdict};
pub use expr::{Expr, ParameterBinding};
pub use field::{
    builtin, synthesize, Builtin, BuiltinSystem, DeformationSpec, FieldError, PoleSet, Provenance,
    VectorField,
};
pub use integrate::{
    integrate, integrate_reparametrized, IntegrateError, IntegratorConfig, Method, Sample,
    Termination, Trajectory,
};
pub use oracle::{reduce, reference_solution, OracleError, QuadratureReduction};
