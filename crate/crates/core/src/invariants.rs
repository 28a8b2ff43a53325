//! Runtime checks of the convergence inequalities, fed one iterate at a time.
//!
//! A monitor is driven from a solver's observer callback and keeps only the previous
//! iterate, so a check never needs the full trace in memory.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::numeric::compensated_sum;
use crate::oracle::{accuracy_bound, ReferenceOptimum};
use crate::plan::{dual_objective, plan_from_iterate, DualPotentials};
use crate::problem::Problem;
use crate::rounding::{certified_cost, round_to_polytope};
use crate::solver::{
    greenkhorn_iteration_bound, sinkhorn_iteration_bound, Iterate, Side, SolveResult,
};

/// At most this many violations keep their full description.
const MAX_DETAILS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantViolation {
    pub name: String,
    pub k: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    /// Number of evaluations per invariant.
    pub checked: BTreeMap<String, usize>,
    /// Number of failures per invariant.
    pub failed: BTreeMap<String, usize>,
    pub violations: Vec<InvariantViolation>,
    pub notes: Vec<String>,
}

impl InvariantReport {
    /// Records `lhs ≤ rhs`.
    pub fn check(&mut self, name: &str, k: usize, lhs: f64, rhs: f64) -> bool {
        *self.checked.entry(name.to_string()).or_default() += 1;
        let ok = lhs <= rhs;
        if !ok {
            *self.failed.entry(name.to_string()).or_default() += 1;
            if self.violations.len() < MAX_DETAILS {
                self.violations.push(InvariantViolation {
                    name: name.to_string(),
                    k,
                    lhs,
                    rhs,
                });
            }
        }
        ok
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn total_failures(&self) -> usize {
        self.failed.values().sum()
    }

    pub fn total_checks(&self) -> usize {
        self.checked.values().sum()
    }

    pub fn is_clean(&self) -> bool {
        self.failed.is_empty()
    }

    pub fn merge(&mut self, other: &InvariantReport) {
        for (k, v) in &other.checked {
            *self.checked.entry(k.clone()).or_default() += v;
        }
        for (k, v) in &other.failed {
            *self.failed.entry(k.clone()).or_default() += v;
        }
        let room = MAX_DETAILS.saturating_sub(self.violations.len());
        self.violations.extend(other.violations.iter().take(room).cloned());
        self.notes.extend(other.notes.iter().cloned());
    }
}

/// Expensive checks that are off by default.
#[derive(Debug, Clone, Default)]
pub struct MonitorOptions {
    /// Recompute `h(f, g)` from scratch at every iterate and compare with the solver's value.
    pub recompute_dual: bool,
    /// `⟨C, P*⟩` for the monitored problem; enables the rounded-cost bound at every iterate.
    pub exact_cost: Option<f64>,
}

#[derive(Debug, Clone)]
struct Previous {
    k: usize,
    dual: f64,
    violation: f64,
    row_sums: Vec<f64>,
    col_sums: Vec<f64>,
    rho_row_sum: f64,
    rho_col_sum: f64,
    distance: Option<f64>,
}

impl Previous {
    fn from(it: &Iterate<'_>, distance: Option<f64>) -> Self {
        Self {
            k: it.k,
            dual: it.record.dual_value,
            violation: it.record.violation(),
            row_sums: it.row_sums.to_vec(),
            col_sums: it.col_sums.to_vec(),
            rho_row_sum: it.record.rho_row_sum,
            rho_col_sum: it.record.rho_col_sum,
            distance,
        }
    }
}

/// Checks shared by both solvers.
struct Common<'a> {
    problem: &'a Problem,
    reference: Option<&'a ReferenceOptimum>,
    options: MonitorOptions,
    report: InvariantReport,
    prev: Option<Previous>,
}

impl<'a> Common<'a> {
    fn new(problem: &'a Problem, reference: Option<&'a ReferenceOptimum>, options: MonitorOptions) -> Self {
        let mut report = InvariantReport::default();
        if let Some(r) = reference {
            let (log_a, log_b) = problem.log_marginals();
            let spread = sup_distance(r.potentials.f.as_slice().unwrap_or(&[]), &log_a)
                .max(sup_distance(r.potentials.g.as_slice().unwrap_or(&[]), &log_b));
            report.check(
                "reference_normalization",
                0,
                spread,
                2.0 * problem.cost_inf_norm() + 1e-7,
            );
        }
        Self {
            problem,
            reference,
            options,
            report,
            prev: None,
        }
    }

    fn basic(&mut self, it: &Iterate<'_>) {
        let rec = it.record;
        let k = it.k;
        self.report.check("nonnegative_violation", k, -rec.row_violation.min(rec.col_violation), 0.0);
        if let Some(prev) = &self.prev {
            let h = rec.dual_value;
            self.report.check("monotone_ascent", k, prev.dual - h, 1e-10);
        }
        if self.options.recompute_dual && all_finite(it.f) && all_finite(it.g) {
            let pot = DualPotentials::new(it.f.to_vec().into(), it.g.to_vec().into());
            if let Ok(h) = dual_objective(self.problem, &pot) {
                let scale = h.abs().max(1.0);
                self.report.check(
                    "dual_value_recomputation",
                    k,
                    (h - rec.dual_value).abs(),
                    1e-10 * scale,
                );
            }
        }
    }

    fn rounded_cost(&mut self, it: &Iterate<'_>, probability_plan: bool) {
        let Some(exact) = self.options.exact_cost else {
            return;
        };
        let p = self.problem;
        let outcome = plan_from_iterate(p, it.f, it.g).and_then(|plan| {
            let rounded = round_to_polytope(&plan, p.a_slice(), p.b_slice())?;
            certified_cost(&rounded, p.cost())
        });
        match outcome {
            Ok(cost) => {
                let bound = accuracy_bound(
                    probability_plan,
                    p.gamma(),
                    p.n(),
                    it.record.violation(),
                    p.cost_inf_norm(),
                );
                self.report.check("rounded_cost_bound", it.k, cost - exact, bound + 1e-8);
            }
            Err(e) => self.report.note(format!("k = {}: rounded cost unavailable: {e}", it.k)),
        }
    }

    fn suboptimality(&self, h: f64) -> Option<f64> {
        self.reference.map(|r| r.value - h)
    }

    /// `max(‖f − f*‖∞, ‖g − g*‖∞)` over coordinates where both are finite.
    fn reference_distance(&self, it: &Iterate<'_>) -> Option<f64> {
        self.reference.map(|r| {
            sup_distance(it.f, r.potentials.f.as_slice().unwrap_or(&[]))
                .max(sup_distance(it.g, r.potentials.g.as_slice().unwrap_or(&[])))
        })
    }
}

pub struct SinkhornMonitor<'a> {
    common: Common<'a>,
}

impl<'a> SinkhornMonitor<'a> {
    pub fn new(problem: &'a Problem, reference: Option<&'a ReferenceOptimum>) -> Self {
        Self::with_options(problem, reference, MonitorOptions::default())
    }

    pub fn with_options(
        problem: &'a Problem,
        reference: Option<&'a ReferenceOptimum>,
        options: MonitorOptions,
    ) -> Self {
        Self {
            common: Common::new(problem, reference, options),
        }
    }

    pub fn observe(&mut self, it: &Iterate<'_>) {
        self.common.basic(it);
        let c = &mut self.common;
        let p = c.problem;
        let gamma = p.gamma();
        let rec = it.record;
        let k = it.k;

        if let Some(prev) = &c.prev {
            let gain = rec.dual_value - prev.dual;
            if prev.k >= 2 {
                c.report.check(
                    "sinkhorn_one_step_gain",
                    k,
                    0.5 * gamma * prev.violation * prev.violation - gain,
                    1e-10,
                );
            }
            // The step rescaled one side by target/sums; its gain is γ·(KL + mass − 1).
            let (target, sums) = match rec.updated_side {
                Some(Side::Row) => (p.a_slice(), prev.row_sums.as_slice()),
                _ => (p.b_slice(), prev.col_sums.as_slice()),
            };
            let mass = compensated_sum(sums.iter().copied());
            let kl = compensated_sum(
                target
                    .iter()
                    .zip(sums)
                    .filter(|(&t, _)| t > 0.0)
                    .map(|(&t, &s)| t * (t / s).ln()),
            );
            let identity = gamma * (kl + mass - 1.0);
            c.report.check("kl_gain_identity", k, (gain - identity).abs(), 1e-10);
        }

        if k >= 2 {
            let exact_side = match rec.updated_side {
                Some(Side::Row) => rec.row_violation,
                _ => rec.col_violation,
            };
            c.report.check("alternating_exactness", k, exact_side, 1e-10);
            let range = p.cost_range() + 1e-9;
            c.report.check("equicontinuity", k, rec.equicontinuity_f, range);
            c.report.check("equicontinuity", k, rec.equicontinuity_g, range);
            if let Some(t) = c.suboptimality(rec.dual_value) {
                c.report.check(
                    "suboptimality_vs_violation",
                    k,
                    t,
                    p.cost_inf_norm() * rec.violation() + 1e-8,
                );
            }
        }
        c.rounded_cost(it, k >= 2);
        c.prev = Some(Previous::from(it, None));
    }

    pub fn finish(mut self, result: &SolveResult) -> InvariantReport {
        let p = self.common.problem;
        if result.converged() {
            let bound = sinkhorn_iteration_bound(p.cost_inf_norm(), p.gamma(), result.delta);
            self.common
                .report
                .check("iteration_bound", result.iterations, result.iterations as f64, bound as f64);
        } else {
            self.common.report.note(format!(
                "stopped at the iteration cap after {} iterations",
                result.iterations
            ));
        }
        self.common.report
    }
}

pub struct GreenkhornMonitor<'a> {
    common: Common<'a>,
}

impl<'a> GreenkhornMonitor<'a> {
    pub fn new(problem: &'a Problem, reference: Option<&'a ReferenceOptimum>) -> Self {
        Self::with_options(problem, reference, MonitorOptions::default())
    }

    pub fn with_options(
        problem: &'a Problem,
        reference: Option<&'a ReferenceOptimum>,
        options: MonitorOptions,
    ) -> Self {
        Self {
            common: Common::new(problem, reference, options),
        }
    }

    pub fn observe(&mut self, it: &Iterate<'_>) {
        self.common.basic(it);
        let distance = self.common.reference_distance(it);
        let c = &mut self.common;
        let p = c.problem;
        let gamma = p.gamma();
        let norm = p.cost_inf_norm();
        let (m, n) = p.shape();
        let size = m.max(n) as f64;
        let rec = it.record;
        let k = it.k;

        if let (Some(prev), Some(selected)) = (&c.prev, rec.selected_rho) {
            let gain = rec.dual_value - prev.dual;
            if selected.is_finite() {
                c.report.check(
                    "greedy_gain_identity",
                    k,
                    (gain - gamma * selected).abs(),
                    1e-10,
                );
            }
            let lower = if prev.rho_row_sum.max(prev.rho_col_sum) <= 1.0 {
                gamma / (28.0 * size) * prev.violation * prev.violation
            } else {
                gamma / size
            };
            c.report.check("greedy_gain_lower_bound", k, lower - gain, 1e-12);
            if let (Some(before), Some(after)) = (prev.distance, distance) {
                c.report.check("reference_distance_nonexpansion", k, after, before + 1e-7);
            }
        }

        if let Some(t) = c.suboptimality(rec.dual_value) {
            c.report.check(
                "suboptimality_vs_violation",
                k,
                t,
                2.0 * norm * rec.violation() + 1e-7,
            );
            if k == 0 {
                c.report.check("initial_gap", 0, t, 4.0 * norm + 1e-7);
                c.report.note(format!(
                    "initial gap {t} is {} the tighter bound 2‖C‖∞ = {}",
                    if t <= 2.0 * norm + 1e-7 { "within" } else { "above" },
                    2.0 * norm
                ));
            }
        }
        if let Some(drift) = rec.cache_drift {
            c.report.check("cache_coherence", k, drift, 1e-9);
        }
        c.rounded_cost(it, false);
        c.prev = Some(Previous::from(it, distance));
    }

    pub fn finish(mut self, result: &SolveResult) -> InvariantReport {
        let p = self.common.problem;
        let (m, n) = p.shape();
        if result.converged() {
            let bound =
                greenkhorn_iteration_bound(m.max(n), p.cost_inf_norm(), p.gamma(), result.delta);
            self.common
                .report
                .check("iteration_bound", result.iterations, result.iterations as f64, bound as f64);
        } else {
            self.common.report.note(format!(
                "stopped at the iteration cap after {} iterations",
                result.iterations
            ));
        }
        self.common.report
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// `max |x_i − y_i|` over coordinates where both are finite.
fn sup_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greenkhorn::greenkhorn_solve_observed;
    use crate::oracle::{exact_ot, reference_dual_optimum};
    use crate::sinkhorn::sinkhorn_solve_observed;
    use crate::solver::SinkhornConfig;
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, gamma: f64) -> Problem {
        let mut marginal = || {
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
            let s: f64 = v.iter().sum();
            Array1::from_iter(v.iter().map(|x| x / s))
        };
        let a = marginal();
        let b = marginal();
        let c = Array2::from_shape_fn((n, n), |_| rng.random::<f64>());
        Problem::new(a, b, c, gamma).unwrap()
    }

    fn options(p: &Problem) -> MonitorOptions {
        MonitorOptions {
            recompute_dual: true,
            exact_cost: Some(exact_ot(p.instance()).unwrap().cost),
        }
    }

    #[test]
    fn sinkhorn_run_is_clean() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..5 {
            let p = random_problem(&mut rng, 8, 0.1);
            let reference = reference_dual_optimum(&p).unwrap();
            let mut mon = SinkhornMonitor::with_options(&p, Some(&reference), options(&p));
            let r = sinkhorn_solve_observed(&p, &SinkhornConfig::new(1e-6), None, &mut |it| {
                mon.observe(it)
            })
            .unwrap();
            let report = mon.finish(&r);
            assert!(report.is_clean(), "{:?}", report.violations);
            for name in [
                "kl_gain_identity",
                "sinkhorn_one_step_gain",
                "alternating_exactness",
                "suboptimality_vs_violation",
                "rounded_cost_bound",
                "iteration_bound",
            ] {
                assert!(report.checked.get(name).copied().unwrap_or(0) > 0, "{name}");
            }
        }
    }

    #[test]
    fn greenkhorn_run_is_clean() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..5 {
            let p = random_problem(&mut rng, 8, 0.1);
            let reference = reference_dual_optimum(&p).unwrap();
            let mut mon = GreenkhornMonitor::with_options(&p, Some(&reference), options(&p));
            let r = greenkhorn_solve_observed(&p, &SinkhornConfig::new(1e-5), &mut |it| mon.observe(it))
                .unwrap();
            let report = mon.finish(&r);
            assert!(report.is_clean(), "{:?}", report.violations);
            for name in [
                "greedy_gain_identity",
                "greedy_gain_lower_bound",
                "reference_distance_nonexpansion",
                "initial_gap",
                "cache_coherence",
                "reference_normalization",
            ] {
                assert!(report.checked.get(name).copied().unwrap_or(0) > 0, "{name}");
            }
        }
    }

    #[test]
    fn failures_are_counted() {
        let mut report = InvariantReport::default();
        assert!(report.check("x", 0, 1.0, 2.0));
        assert!(!report.check("x", 1, 3.0, 2.0));
        assert_eq!(report.total_checks(), 2);
        assert_eq!(report.total_failures(), 1);
        assert_eq!(report.violations[0].k, 1);
        let mut other = InvariantReport::default();
        other.merge(&report);
        assert_eq!(other.failed["x"], 1);
    }
}
