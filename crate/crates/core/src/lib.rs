//! Explicit sixth-order time stepping by hybrid deferred correction.
//!
//! The central method, [`StepperKind::Dc6Rk24`], advances the explicit
//! midpoint rule and corrects it with two finite-difference stencils built
//! from five RK4 substeps of size `k/5`. One step costs 21 right-hand-side
//! evaluations and is sixth-order accurate.
//!
//! Around it the crate provides:
//!
//! - [`ivp`]: problem/trajectory model, error norms and observed orders.
//! - [`steppers`]: explicit midpoint, RK4, Luther's RK6 and DC6RK2/4, plus the
//!   uniform-step driver [`steppers::integrate`].
//! - [`stability`]: stability polynomials (the DC6RK2/4 one has degree 21),
//!   region rasters and boundary metrics.
//! - [`problems`]: stiff ODE benchmarks (Bernoulli, oscillatory, B5, E5,
//!   Robertson, van der Pol).
//! - [`oracle`]: reference trajectories by step-doubling self-convergence,
//!   with an on-disk cache.
//! - [`pde`]: sixth-order finite-difference method of lines for 1-D
//!   reaction-diffusion equations.
//! - [`report`]: convergence tables as CSV and Markdown.
//!
//! ```
//! use hdc_core::problems;
//! use hdc_core::steppers::{integrate, StepperKind};
//!
//! let problem = problems::b5(5000.0);
//! let run = integrate(&problem, StepperKind::Dc6Rk24, 100_000, 1000);
//! assert!(run.status.is_completed());
//! assert_eq!(run.rhs_evals, 21 * 100_000);
//! ```

pub mod ivp;
pub mod oracle;
pub mod pde;
pub mod problems;
pub mod rational;
pub mod report;
pub mod stability;
pub mod steppers;

pub use ivp::{ConvergenceRecord, IvpError, OdeProblem, RunStatus, TrajectoryRun};
pub use stability::StabilityPolynomial;
pub use steppers::{integrate, StepperKind};
