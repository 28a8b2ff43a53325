//! Types shared by the Sinkhorn and Greenkhorn solvers.

use serde::{Deserialize, Serialize};

use crate::compaction::CompactionMap;
use crate::error::{OtError, Result};
use crate::numeric::weighted_sum;
use crate::plan::{DualPotentials, TransportPlan};
use crate::problem::{Instance, Problem};

/// Termination threshold and safety cap. The regularization lives on [`Problem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    /// Stop once `‖P1 − a‖₁ + ‖Pᵀ1 − b‖₁ ≤ delta`.
    pub delta: f64,
    /// `None` means ten times the solver's theoretical iteration bound.
    pub max_iterations: Option<usize>,
    pub record_trace: bool,
}

impl SinkhornConfig {
    pub fn new(delta: f64) -> Self {
        Self {
            delta,
            max_iterations: None,
            record_trace: false,
        }
    }

    pub fn with_max_iterations(mut self, cap: usize) -> Self {
        self.max_iterations = Some(cap);
        self
    }

    pub fn with_trace(mut self, record: bool) -> Self {
        self.record_trace = record;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(OtError::InvalidParameter(format!(
                "delta must be positive and finite, got {}",
                self.delta
            )));
        }
        if let Some(cap) = self.max_iterations {
            if cap < 2 {
                return Err(OtError::InvalidParameter(format!(
                    "max_iterations must be at least 2, got {cap}"
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn cap(&self, bound: u64) -> usize {
        self.max_iterations
            .unwrap_or_else(|| usize::try_from(bound.saturating_mul(10)).unwrap_or(usize::MAX))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Row,
    Column,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    IterationCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    Sinkhorn,
    Greenkhorn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Vanilla,
    /// Runs on marginals mixed with the uniform vector so every entry is at least `δ/(8n)`.
    Lifted,
}

/// Telemetry for the iterate `(f_k, g_k)` and its plan `P_k`.
///
/// `updated_*` and `selected_rho` describe the step that produced iterate `k`
/// from iterate `k − 1`; they are `None` for the starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub dual_value: f64,
    pub row_violation: f64,
    pub col_violation: f64,
    pub updated_side: Option<Side>,
    pub updated_index: Option<usize>,
    pub equicontinuity_f: f64,
    pub equicontinuity_g: f64,
    /// `Σ_i ρ(a_i, (P_k 1)_i)`.
    pub rho_row_sum: f64,
    /// `Σ_j ρ(b_j, (P_kᵀ 1)_j)`.
    pub rho_col_sum: f64,
    pub selected_rho: Option<f64>,
    /// Largest relative gap between cached and recomputed marginals, when a full refresh ran.
    pub cache_drift: Option<f64>,
}

impl IterationRecord {
    pub fn violation(&self) -> f64 {
        self.row_violation + self.col_violation
    }
}

/// Borrowed view of one iterate, handed to observers.
#[derive(Debug, Clone, Copy)]
pub struct Iterate<'a> {
    pub k: usize,
    pub f: &'a [f64],
    pub g: &'a [f64],
    pub row_sums: &'a [f64],
    pub col_sums: &'a [f64],
    pub record: &'a IterationRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub plan: TransportPlan,
    pub potentials: DualPotentials,
    pub iterations: usize,
    pub trace: Vec<IterationRecord>,
    pub termination: Termination,
    pub gamma: f64,
    pub delta: f64,
    pub row_violation: f64,
    pub col_violation: f64,
    pub dual_value: f64,
}

impl SolveResult {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    pub fn violation(&self) -> f64 {
        self.row_violation + self.col_violation
    }
}

/// `2 + 2⌈2‖C‖∞/(γδ)⌉`.
pub fn sinkhorn_iteration_bound(cost_norm: f64, gamma: f64, delta: f64) -> u64 {
    2u64.saturating_add(2u64.saturating_mul(ceil_u64(2.0 * cost_norm / (gamma * delta))))
}

/// `2⌈56n‖C‖∞/(γδ)⌉ + 2⌈4n‖C‖∞/γ⌉`.
pub fn greenkhorn_iteration_bound(n: usize, cost_norm: f64, gamma: f64, delta: f64) -> u64 {
    let n = n as f64;
    let first = ceil_u64(56.0 * n * cost_norm / (gamma * delta));
    let second = ceil_u64(4.0 * n * cost_norm / gamma);
    2u64.saturating_mul(first)
        .saturating_add(2u64.saturating_mul(second))
}

fn ceil_u64(x: f64) -> u64 {
    // `as` saturates for values beyond u64::MAX.
    x.ceil() as u64
}

/// Everything decided before an ε-targeted run starts.
#[derive(Debug, Clone)]
pub struct EpsilonSetup {
    pub algorithm: Algorithm,
    pub variant: Variant,
    pub epsilon: f64,
    pub gamma: f64,
    pub delta: f64,
    /// The instance the accuracy target refers to.
    pub original: Instance,
    /// What the solver actually runs on: compacted and/or lifted.
    pub problem: Problem,
    pub map: CompactionMap,
    pub config: SinkhornConfig,
    /// `‖C‖∞ = 0`: every feasible plan is optimal and no iteration is needed.
    pub trivial: bool,
}

impl EpsilonSetup {
    /// The theoretical iteration bound for this run's parameters.
    pub fn iteration_bound(&self) -> u64 {
        let norm = self.original.cost_inf_norm();
        match self.algorithm {
            Algorithm::Sinkhorn => sinkhorn_iteration_bound(norm, self.gamma, self.delta),
            Algorithm::Greenkhorn => {
                greenkhorn_iteration_bound(self.original.n(), norm, self.gamma, self.delta)
            }
        }
    }

    pub fn run(&self) -> Result<EpsilonRun> {
        self.run_observed(&mut |_| {})
    }

    /// Runs the solver; iterates seen by `observer` are indexed like `self.problem`.
    pub fn run_observed(&self, observer: &mut dyn FnMut(&Iterate<'_>)) -> Result<EpsilonRun> {
        let n = self.original.n();
        if self.trivial {
            let plan = TransportPlan::outer(self.original.a(), self.original.b());
            let (log_a, log_b) = self.problem.log_marginals();
            let dual_value = weighted_sum(&log_a, self.problem.a_slice())
                + weighted_sum(&log_b, self.problem.b_slice())
                - self.gamma;
            return Ok(EpsilonRun {
                result: SolveResult {
                    plan,
                    potentials: DualPotentials::new(log_a.into(), log_b.into()),
                    iterations: 0,
                    trace: Vec::new(),
                    termination: Termination::Converged,
                    gamma: self.gamma,
                    delta: self.delta,
                    row_violation: 0.0,
                    col_violation: 0.0,
                    dual_value,
                },
                setup: self.clone(),
                note: Some("zero cost matrix: the independent coupling is optimal".into()),
            });
        }
        let mut result = match self.algorithm {
            Algorithm::Sinkhorn => {
                crate::sinkhorn::sinkhorn_solve_observed(&self.problem, &self.config, None, observer)?
            }
            Algorithm::Greenkhorn => {
                crate::greenkhorn::greenkhorn_solve_observed(&self.problem, &self.config, observer)?
            }
        };
        if !self.map.is_identity(n) {
            result.plan = crate::compaction::embed_plan(&result.plan, &self.map, n)?;
            result.potentials = DualPotentials::new(
                self.map.embed_rows(result.potentials.f_slice(), n, f64::NEG_INFINITY),
                self.map.embed_cols(result.potentials.g_slice(), n, f64::NEG_INFINITY),
            );
        }
        Ok(EpsilonRun {
            result,
            setup: self.clone(),
            note: None,
        })
    }
}

/// Result of an ε-targeted run, with the plan embedded back at the original size.
#[derive(Debug, Clone)]
pub struct EpsilonRun {
    pub result: SolveResult,
    pub setup: EpsilonSetup,
    pub note: Option<String>,
}

impl EpsilonRun {
    /// `(‖P1 − a‖₁, ‖Pᵀ1 − b‖₁)` against the original (unlifted) marginals.
    pub fn original_violations(&self) -> Result<(f64, f64)> {
        self.result
            .plan
            .violations_against(self.setup.original.a_slice(), self.setup.original.b_slice())
    }
}

pub(crate) fn check_epsilon(instance: &Instance, epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(OtError::InvalidParameter(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    if instance.n() < 2 {
        return Err(OtError::InvalidParameter(
            "an accuracy target needs n >= 2 so that log n > 0".into(),
        ));
    }
    Ok(())
}
