//! Entropic optimal transport on dense cost matrices.

pub mod compaction;
pub mod divergence;
pub mod error;
pub mod greenkhorn;
pub mod invariants;
pub mod kernel;
pub mod numeric;
pub mod oracle;
pub mod plan;
pub mod problem;
pub mod rounding;
pub mod sinkhorn;
pub mod solver;
pub mod transforms;

pub use compaction::{compact_instance, compact_zeros, embed_plan, CompactionMap};
pub use divergence::{generalized_pinsker_check, kl_divergence, rho};
pub use error::{OtError, Result};
pub use greenkhorn::{
    greenkhorn_epsilon_setup, greenkhorn_epsilon_solve, greenkhorn_parameters, greenkhorn_solve,
    greenkhorn_solve_observed,
};
pub use invariants::{
    GreenkhornMonitor, InvariantReport, InvariantViolation, MonitorOptions, SinkhornMonitor,
};
pub use kernel::{build_kernel, GibbsKernel};
pub use oracle::{
    accuracy_bound, certify, certify_against, exact_ot, reference_dual_optimum, Certificate,
    ExactSolution, ReferenceOptimum,
};
pub use plan::{
    dual_objective, marginal_violations, plan_from_iterate, plan_from_potentials, DualPotentials,
    TransportPlan,
};
pub use problem::{Instance, Problem, MASS_TOLERANCE};
pub use rounding::{certified_cost, round_detailed, round_to_polytope, RoundingStages};
pub use sinkhorn::{
    lift_marginals, sinkhorn_epsilon_setup, sinkhorn_epsilon_solve, sinkhorn_parameters,
    sinkhorn_solve, sinkhorn_solve_observed,
};
pub use solver::{
    greenkhorn_iteration_bound, sinkhorn_iteration_bound, Algorithm, EpsilonRun, EpsilonSetup,
    IterationRecord, Iterate, Side, SinkhornConfig, SolveResult, Termination, Variant,
};
pub use transforms::{c_gamma_bar_transform, c_gamma_transform, equicontinuity_check, oscillation};
