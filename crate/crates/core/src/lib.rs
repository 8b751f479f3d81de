//! Alternating Anderson–Picard (AAP) acceleration for fixed-point problems
//! written in residual form `T(x) = 0`, with two levels of row sketching for
//! the least-squares mixing step:
//!
//! * a static restriction to a named field (for example the pressure block
//!   of a saddle-point system), fixed for the whole run, and
//! * an optional adaptive subselection that drops further rows whenever a
//!   stability bound says the perturbation of the mixing coefficients stays
//!   controlled.
//!
//! ```
//! use aap_core::{solve, FixedPointProblem, SolverConfig};
//!
//! // x = cos(x), written as T(x) = x - cos(x).
//! let problem = FixedPointProblem::from_fn("cos", 1, |x, out| out[0] = x[0] - x[0].cos());
//! let config = SolverConfig { window: 3, rel_tolerance: 1e-10, ..SolverConfig::default() };
//! let report = solve(&problem, &config, &[1.0]).unwrap();
//! assert!(report.converged);
//! assert!((report.final_state[0] - 0.739_085_133_215).abs() < 1e-9);
//! ```

pub mod dense;
pub mod error;
pub mod fixed_point;
pub mod lsq;
pub mod problems;
pub mod sketching;
pub mod solver;

pub use dense::ColMatrix;
pub use error::{AapError, Result};
pub use fixed_point::{
    evaluate_residual, field_indices, from_fixed_point_form, FieldLayout, FixedPointProblem, FnResidual, Residual,
};
pub use lsq::{estimate_sigma_min, qr_masked_solve, QrWorkspace, TriangularFactor};
pub use problems::{
    build_problem, make_bidomain_toy, make_linear, make_p_laplacian, make_saddle_point, GridSpec, ProblemKind,
    ProblemOptions,
};
pub use sketching::{build_static_mask, Adaptivity, MaskOperator, MaskStatus, StabilityRecord};
pub use solver::{
    solve, solve_reference, SolveFailure, SolveReport, Solver, SolverConfig, StaticMask, StepStatus, TheoremRecord,
};
