//! One-dimensional inverse coefficient problem for the wave equation
//! u_tt = u_xx - q(x) u on x in [0, L], driven by boundary observation
//! u(0, t) = f(t). The unknown q doubles as the initial displacement
//! (u(x,0) = q(x), u_t(x,0) = 0), the left end is reflecting (u_x(0,t) = 0)
//! and the right end pinned (u(L,t) = 0).
//!
//! The crate provides the explicit cross-scheme forward solver, the exact
//! discrete adjoint of that scheme (transpose of the marching operator, so
//! the gradient it produces satisfies a machine-precision duality identity),
//! an independently discretized continuous adjoint for comparison studies,
//! gradient-descent and Landweber inversion loops, the travel-time /
//! impedance change of variables that reduces a layered acoustic medium to
//! this potential form, and a reproducible experiment harness with
//! plain-text serialization.

pub mod adjoint;
pub mod error;
pub mod experiments;
pub mod forward;
pub mod gradient;
pub mod grid;
pub mod io;
pub mod objective;
pub mod transforms;

pub use adjoint::{residual, solve_adjoint_continuous, solve_adjoint_discrete};
pub use error::{Error, Result};
pub use experiments::{
    gradcheck_report, gradient_comparison_study, inversion_report, recovery_study,
    stability_study, synthesize_data, ExperimentReport, SynthesisMode,
};
pub use forward::{
    solve_forward, solve_perturbation, trace_at_zero, FirstLayer, InitialData, NeumannMode,
    SchemeOptions, SchemeVariant,
};
pub use gradient::{
    gradient_continuous, gradient_discrete, gradient_fd_oracle, GradientBoundary,
};
pub use grid::{CoefficientVector, Field, Grid, GridOptions, ObservedTrace, Residual};
pub use objective::{
    landweber_run, objective, run_inversion, DescentConfig, InversionState, LineSearch,
    StopReason,
};
pub use transforms::{
    impedance_profile, impedance_to_potential, travel_time_map, ImpedanceProfile, MediumProfile,
};
