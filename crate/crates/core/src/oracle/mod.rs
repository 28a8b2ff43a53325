//! Ground truth: exact transport costs, a tightly converged regularized optimum, and
//! accuracy certificates for rounded solver output.

mod network_simplex;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{OtError, Result};
use crate::numeric::compensated_sum;
use crate::plan::{dual_objective, DualPotentials, TransportPlan};
use crate::problem::{Instance, Problem};
use crate::rounding::{certified_cost, round_to_polytope};
use crate::sinkhorn::sinkhorn_solve;
use crate::solver::{Algorithm, SinkhornConfig, SolveResult};

/// Largest side accepted by [`exact_ot`].
pub const MAX_ORACLE_SIZE: usize = 512;
/// Reduced costs at or above this value count as dual feasible.
pub const REDUCED_COST_TOLERANCE: f64 = -1e-10;
pub const REFERENCE_DELTA: f64 = 1e-12;
pub const REFERENCE_MAX_ITERATIONS: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub plan: TransportPlan,
    pub cost: f64,
    /// Smallest `C_ij − u_i − v_j` over all cells; nonnegative up to rounding at an optimum.
    pub min_reduced_cost: f64,
    pub pivots: usize,
    /// `(u, v)` with `u_i + v_j ≤ C_ij` and `⟨u, a⟩ + ⟨v, b⟩ = cost`.
    pub potentials: DualPotentials,
}

/// Optimal vertex of the transport polytope by network simplex, certified by its duals.
pub fn exact_ot(instance: &Instance) -> Result<ExactSolution> {
    exact_ot_parts(instance.a_slice(), instance.b_slice(), instance.cost())
}

pub(crate) fn exact_ot_parts(a: &[f64], b: &[f64], cost: &Array2<f64>) -> Result<ExactSolution> {
    let (m, n) = cost.dim();
    if m.max(n) > MAX_ORACLE_SIZE {
        return Err(OtError::Oracle(format!(
            "exact solver is limited to {MAX_ORACLE_SIZE} points per side, got {m}x{n}"
        )));
    }
    let out = network_simplex::solve(a, b, cost)?;
    let scale = compensated_sum(a.iter().copied()).max(1.0);
    if out.artificial_flow > 1e-10 * scale {
        return Err(OtError::Oracle(format!(
            "{} units of mass could not be routed",
            out.artificial_flow
        )));
    }
    if out.min_reduced_cost < REDUCED_COST_TOLERANCE {
        return Err(OtError::Oracle(format!(
            "final tree is not dual feasible: reduced cost {}",
            out.min_reduced_cost
        )));
    }
    let plan = TransportPlan::from_trusted(out.flow);
    let cost = certified_cost(&plan, cost)?;
    Ok(ExactSolution {
        plan,
        cost,
        min_reduced_cost: out.min_reduced_cost,
        pivots: out.pivots,
        potentials: DualPotentials::new(Array1::from(out.u), Array1::from(out.v)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceOptimum {
    /// Normalized so that `max(f − γ log a) = ‖C‖∞`.
    pub potentials: DualPotentials,
    pub value: f64,
    pub violation: f64,
    pub iterations: usize,
}

/// Sinkhorn driven to a violation of `1e-12`, then translated into the normalization
/// under which both potentials stay within `2‖C‖∞` of the log marginals.
pub fn reference_dual_optimum(problem: &Problem) -> Result<ReferenceOptimum> {
    let config = SinkhornConfig::new(REFERENCE_DELTA).with_max_iterations(REFERENCE_MAX_ITERATIONS);
    let result = sinkhorn_solve(problem, &config, None)?;
    if !result.converged() {
        return Err(OtError::ReferenceNotConverged {
            violation: result.violation(),
            iterations: result.iterations,
        });
    }
    let (log_a, _) = problem.log_marginals();
    let top = result
        .potentials
        .f
        .iter()
        .zip(&log_a)
        .map(|(f, l)| f - l)
        .fold(f64::NEG_INFINITY, f64::max);
    let potentials = result.potentials.translated(problem.cost_inf_norm() - top);
    let value = dual_objective(problem, &potentials)?;
    Ok(ReferenceOptimum {
        potentials,
        value,
        violation: result.violation(),
        iterations: result.iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub rounded_cost: f64,
    pub exact_cost: f64,
    pub epsilon: f64,
    pub gap: f64,
    /// Right-hand side of the accuracy bound for the plan before rounding.
    pub bound: f64,
    pub satisfied: bool,
}

/// Upper bound on `⟨C, Round(P)⟩ − ⟨C, P*⟩` for a plan of the scaling form.
///
/// Sinkhorn iterates from the second on are probability matrices and get
/// `2γ log n + 4v‖C‖∞`; otherwise mass can exceed one and the bound is
/// `(2 + v)γ log n + 4v‖C‖∞`, where `v` is the total marginal violation.
pub fn accuracy_bound(
    probability_plan: bool,
    gamma: f64,
    n: usize,
    violation: f64,
    cost_norm: f64,
) -> f64 {
    let log_n = (n as f64).ln();
    let entropy = if probability_plan { 2.0 } else { 2.0 + violation };
    entropy * gamma * log_n + 4.0 * violation * cost_norm
}

/// Rounds `result.plan` onto the polytope of `instance` and compares it with the exact optimum.
pub fn certify(
    result: &SolveResult,
    instance: &Instance,
    epsilon: f64,
    algorithm: Algorithm,
) -> Result<Certificate> {
    let exact = exact_ot(instance)?;
    certify_against(result, instance, epsilon, algorithm, exact.cost)
}

/// Same as [`certify`] with a precomputed exact cost.
pub fn certify_against(
    result: &SolveResult,
    instance: &Instance,
    epsilon: f64,
    algorithm: Algorithm,
    exact_cost: f64,
) -> Result<Certificate> {
    let (a, b) = (instance.a_slice(), instance.b_slice());
    let (rv, cv) = result.plan.violations_against(a, b)?;
    let rounded = round_to_polytope(&result.plan, a, b)?;
    let rounded_cost = certified_cost(&rounded, instance.cost())?;
    let probability_plan = algorithm == Algorithm::Sinkhorn && result.iterations >= 2;
    let bound = accuracy_bound(
        probability_plan,
        result.gamma,
        instance.n(),
        rv + cv,
        instance.cost_inf_norm(),
    );
    let gap = rounded_cost - exact_cost;
    Ok(Certificate {
        rounded_cost,
        exact_cost,
        epsilon,
        gap,
        bound,
        satisfied: gap <= epsilon,
    })
}
