//! Greedy single-coordinate rebalancing with incrementally maintained marginals.

use ndarray::Array1;

use crate::divergence::rho_unchecked;
use crate::error::{OtError, Result};
use crate::kernel::{build_kernel, GibbsKernel};
use crate::numeric::{compensated_sum, l1_distance, weighted_sum};
use crate::plan::{DualPotentials, TransportPlan};
use crate::problem::{Instance, Problem};
use crate::sinkhorn::epsilon_setup;
use crate::solver::{
    check_epsilon, greenkhorn_iteration_bound, Algorithm, EpsilonRun, EpsilonSetup,
    IterationRecord, Iterate, Side, SinkhornConfig, SolveResult, Termination, Variant,
};

/// Potentials, cached marginals of `P_k`, and the cached mismatches `ρ(a_i, (P_k 1)_i)`.
#[derive(Debug, Clone)]
pub struct GreenkhornState {
    /// `f/γ` and `g/γ`; `-inf` where the marginal is zero.
    fs: Vec<f64>,
    gs: Vec<f64>,
    row_sums: Vec<f64>,
    col_sums: Vec<f64>,
    rho_row: Vec<f64>,
    rho_col: Vec<f64>,
    /// Bounds on the rounding error accumulated by incremental updates of the cached sums.
    row_err: Vec<f64>,
    col_err: Vec<f64>,
    k: usize,
}

impl GreenkhornState {
    fn new(problem: &Problem, kernel: &GibbsKernel) -> Result<Self> {
        let (m, n) = problem.shape();
        let mut state = Self {
            fs: problem.a().iter().map(|x| x.ln()).collect(),
            gs: problem.b().iter().map(|x| x.ln()).collect(),
            row_sums: vec![0.0; m],
            col_sums: vec![0.0; n],
            rho_row: vec![0.0; m],
            rho_col: vec![0.0; n],
            row_err: vec![0.0; m],
            col_err: vec![0.0; n],
            k: 0,
        };
        state.refresh(problem, kernel)?;
        Ok(state)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row_sums(&self) -> &[f64] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[f64] {
        &self.col_sums
    }

    pub fn rho_row(&self) -> &[f64] {
        &self.rho_row
    }

    pub fn rho_col(&self) -> &[f64] {
        &self.rho_col
    }

    /// Recomputes the marginals from the potentials; returns the largest relative drift.
    fn refresh(&mut self, problem: &Problem, kernel: &GibbsKernel) -> Result<f64> {
        let mut rows = vec![0.0; self.row_sums.len()];
        let mut cols = vec![0.0; self.col_sums.len()];
        kernel.marginal_sums(&self.fs, &self.gs, &mut rows, &mut cols)?;
        let drift = relative_drift(&self.row_sums, &rows, problem.a_slice())
            .max(relative_drift(&self.col_sums, &cols, problem.b_slice()));
        self.row_sums = rows;
        self.col_sums = cols;
        self.row_err.fill(0.0);
        self.col_err.fill(0.0);
        for (r, (&a, &s)) in self.rho_row.iter_mut().zip(problem.a().iter().zip(&self.row_sums)) {
            *r = rho_unchecked(a, s);
        }
        for (r, (&b, &s)) in self.rho_col.iter_mut().zip(problem.b().iter().zip(&self.col_sums)) {
            *r = rho_unchecked(b, s);
        }
        Ok(drift)
    }

    /// Rebalances row `i` so that `(P 1)_i = a_i`, touching O(n) entries.
    fn update_row(
        &mut self,
        i: usize,
        a_i: f64,
        kernel: &GibbsKernel,
        kernel_t: &GibbsKernel,
        b: &[f64],
    ) -> Result<()> {
        let cross = Cross {
            sums: &mut self.col_sums,
            rho: &mut self.rho_col,
            err: &mut self.col_err,
            targets: b,
        };
        let (new, cancelled) = rebalance(i, self.fs[i], a_i, kernel.row(i), &self.gs, cross)?;
        self.fs[i] = new;
        self.row_sums[i] = a_i;
        self.rho_row[i] = 0.0;
        for j in cancelled {
            self.col_sums[j] = line_sum(kernel_t.row(j), self.gs[j], &self.fs);
            self.col_err[j] = 0.0;
            self.rho_col[j] = rho_unchecked(b[j], self.col_sums[j]);
        }
        Ok(())
    }

    fn update_col(
        &mut self,
        j: usize,
        b_j: f64,
        kernel: &GibbsKernel,
        kernel_t: &GibbsKernel,
        a: &[f64],
    ) -> Result<()> {
        let cross = Cross {
            sums: &mut self.row_sums,
            rho: &mut self.rho_row,
            err: &mut self.row_err,
            targets: a,
        };
        let (new, cancelled) = rebalance(j, self.gs[j], b_j, kernel_t.row(j), &self.fs, cross)
            .map_err(|e| match e {
                OtError::PlanOverflow { i, j } => OtError::PlanOverflow { i: j, j: i },
                other => other,
            })?;
        self.gs[j] = new;
        self.col_sums[j] = b_j;
        self.rho_col[j] = 0.0;
        for i in cancelled {
            self.row_sums[i] = line_sum(kernel.row(i), self.fs[i], &self.gs);
            self.row_err[i] = 0.0;
            self.rho_row[i] = rho_unchecked(a[i], self.row_sums[i]);
        }
        Ok(())
    }
}

/// A cached sum whose accumulated rounding error exceeds this fraction of its value is
/// recomputed from the potentials.
const CACHE_RELATIVE_ERROR: f64 = 1e-10;

/// The cached sums crossing the line being rebalanced.
struct Cross<'a> {
    sums: &'a mut [f64],
    rho: &'a mut [f64],
    err: &'a mut [f64],
    targets: &'a [f64],
}

/// `exp(own) · Σ_k exp(log_k_line[k] + other[k])`: one marginal sum from scaled potentials.
fn line_sum(log_k_line: &[f64], own: f64, other: &[f64]) -> f64 {
    if own == f64::NEG_INFINITY {
        return 0.0;
    }
    let mut max = f64::NEG_INFINITY;
    for (&l, &o) in log_k_line.iter().zip(other) {
        max = max.max(l + o);
    }
    if max == f64::NEG_INFINITY {
        return 0.0;
    }
    let s: f64 = log_k_line
        .iter()
        .zip(other)
        .map(|(&l, &o)| (l + o - max).exp())
        .sum();
    (own + max + s.ln()).exp()
}

/// Sets one scaled potential so its line of the plan sums to `target`, and adjusts the
/// crossing sums. Returns the new scaled potential and the crossing indices whose sums
/// must be recomputed because cancellation has eaten too many of their digits.
fn rebalance(
    index: usize,
    old: f64,
    target: f64,
    log_k_line: &[f64],
    other: &[f64],
    cross: Cross<'_>,
) -> Result<(f64, Vec<usize>)> {
    let mut max = f64::NEG_INFINITY;
    for (&l, &o) in log_k_line.iter().zip(other) {
        max = max.max(l + o);
    }
    let mut e = Vec::with_capacity(other.len());
    let mut s = 0.0;
    for (&l, &o) in log_k_line.iter().zip(other) {
        let v = (l + o - max).exp();
        s += v;
        e.push(v);
    }
    let new = target.ln() - (max + s.ln());
    let old_scale = (old + max).exp();
    if !old_scale.is_finite() {
        let j = e.iter().position(|&v| v > 0.0).unwrap_or(0);
        return Err(OtError::PlanOverflow { i: index, j });
    }
    let mut cancelled = Vec::new();
    for (j, &ej) in e.iter().enumerate() {
        let before = old_scale * ej;
        let after = target * ej / s;
        let change = after - before;
        let updated = cross.sums[j] + change;
        cross.err[j] += f64::EPSILON * (cross.sums[j].abs() + change.abs());
        if cross.err[j] > CACHE_RELATIVE_ERROR * updated {
            cancelled.push(j);
        }
        cross.sums[j] = updated.max(0.0);
        cross.rho[j] = rho_unchecked(cross.targets[j], cross.sums[j]);
    }
    Ok((new, cancelled))
}

fn relative_drift(cached: &[f64], fresh: &[f64], targets: &[f64]) -> f64 {
    cached
        .iter()
        .zip(fresh)
        .zip(targets)
        .map(|((&c, &f), &t)| {
            let scale = f.abs().max(t);
            if scale == 0.0 {
                0.0
            } else {
                (c - f).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Lowest index attaining the maximum.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn greenkhorn_solve(problem: &Problem, config: &SinkhornConfig) -> Result<SolveResult> {
    greenkhorn_solve_observed(problem, config, &mut |_| {})
}

/// Starts from `(γ log a, γ log b)` and at each step rebalances the single row or column with
/// the largest mismatch `ρ`; rows win only on a strictly larger mismatch. Zero marginal
/// entries keep a `-inf` potential and are never selected.
///
/// Termination is tested before every step, including the first.
pub fn greenkhorn_solve_observed(
    problem: &Problem,
    config: &SinkhornConfig,
    observer: &mut dyn FnMut(&Iterate<'_>),
) -> Result<SolveResult> {
    config.validate()?;
    let (m, n) = problem.shape();
    let gamma = problem.gamma();
    let kernel = build_kernel(problem)?;
    let kernel_t = kernel.transposed();
    let a = problem.a_slice();
    let b = problem.b_slice();
    let (log_a, log_b) = problem.log_marginals();
    let size = m.max(n);
    let bound = greenkhorn_iteration_bound(size, problem.cost_inf_norm(), gamma, config.delta);
    let cap = config.cap(bound);

    let mut state = GreenkhornState::new(problem, &kernel)?;
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let mut trace = Vec::new();
    let mut last: Option<(Side, usize, f64)> = None;
    let mut drift = None;

    let termination = loop {
        for (x, s) in f.iter_mut().zip(&state.fs) {
            *x = gamma * s;
        }
        for (x, s) in g.iter_mut().zip(&state.gs) {
            *x = gamma * s;
        }
        let record = IterationRecord {
            k: state.k,
            dual_value: weighted_sum(&f, a) + weighted_sum(&g, b)
                - gamma * compensated_sum(state.row_sums.iter().copied()),
            row_violation: l1_distance(&state.row_sums, a),
            col_violation: l1_distance(&state.col_sums, b),
            updated_side: last.map(|l| l.0),
            updated_index: last.map(|l| l.1),
            equicontinuity_f: supported_oscillation(&f, &log_a),
            equicontinuity_g: supported_oscillation(&g, &log_b),
            rho_row_sum: compensated_sum(state.rho_row.iter().copied()),
            rho_col_sum: compensated_sum(state.rho_col.iter().copied()),
            selected_rho: last.map(|l| l.2),
            cache_drift: drift.take(),
        };
        if !record.dual_value.is_finite() {
            return Err(OtError::DualOverflow);
        }
        observer(&Iterate {
            k: state.k,
            f: &f,
            g: &g,
            row_sums: &state.row_sums,
            col_sums: &state.col_sums,
            record: &record,
        });
        let done = record.violation() <= config.delta;
        if config.record_trace {
            trace.push(record);
        }
        if done {
            break Termination::Converged;
        }
        if state.k >= cap {
            break Termination::IterationCap;
        }

        let i = argmax(&state.rho_row);
        let j = argmax(&state.rho_col);
        if state.rho_row[i] > state.rho_col[j] {
            last = Some((Side::Row, i, state.rho_row[i]));
            state.update_row(i, a[i], &kernel, &kernel_t, b)?;
        } else {
            last = Some((Side::Column, j, state.rho_col[j]));
            state.update_col(j, b[j], &kernel, &kernel_t, a)?;
        }
        state.k += 1;
        if state.k % size == 0 {
            drift = Some(state.refresh(problem, &kernel)?);
        }
    };

    let plan = TransportPlan::from_trusted(kernel.plan_matrix(&state.fs, &state.gs)?);
    let (row_violation, col_violation) = plan.violations_against(a, b)?;
    let dual_value = weighted_sum(&f, a) + weighted_sum(&g, b) - gamma * plan.total();
    Ok(SolveResult {
        plan,
        potentials: DualPotentials::new(Array1::from(f), Array1::from(g)),
        iterations: state.k,
        trace,
        termination,
        gamma,
        delta: config.delta,
        row_violation,
        col_violation,
        dual_value,
    })
}

/// Oscillation of `x − reference` over coordinates where the reference is finite.
fn supported_oscillation(x: &[f64], reference: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    for (&xi, &ri) in x.iter().zip(reference) {
        if ri.is_finite() {
            let d = xi - ri;
            max = max.max(d);
            min = min.min(d);
        }
    }
    if max >= min {
        max - min
    } else {
        0.0
    }
}

/// `γ = ε/(6 log n)` and `δ = min(1, ε/(8‖C‖∞))`.
pub fn greenkhorn_parameters(instance: &Instance, epsilon: f64) -> Result<(f64, f64)> {
    check_epsilon(instance, epsilon)?;
    let n = instance.n() as f64;
    Ok((
        epsilon / (6.0 * n.ln()),
        (epsilon / (8.0 * instance.cost_inf_norm())).min(1.0),
    ))
}

pub fn greenkhorn_epsilon_setup(
    instance: &Instance,
    epsilon: f64,
    variant: Variant,
) -> Result<EpsilonSetup> {
    let (gamma, delta) = greenkhorn_parameters(instance, epsilon)?;
    epsilon_setup(Algorithm::Greenkhorn, instance, epsilon, variant, gamma, delta)
}

/// Runs Greenkhorn tuned for accuracy `epsilon`; the plan is returned unrounded.
pub fn greenkhorn_epsilon_solve(
    instance: &Instance,
    epsilon: f64,
    variant: Variant,
) -> Result<EpsilonRun> {
    greenkhorn_epsilon_setup(instance, epsilon, variant)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{dual_objective, plan_from_iterate, plan_from_potentials};
    use crate::sinkhorn::sinkhorn_solve;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn feasible_start_takes_no_steps() {
        let u = array![0.25, 0.25, 0.25, 0.25];
        let p = Problem::new(u.clone(), u, Array2::zeros((4, 4)), 0.5).unwrap();
        let r = greenkhorn_solve(&p, &SinkhornConfig::new(1e-12)).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.converged());

        let p = Problem::new(array![0.7, 0.3], array![0.5, 0.5], Array2::zeros((2, 2)), 1.0).unwrap();
        let r = greenkhorn_solve(&p, &SinkhornConfig::new(1e-12)).unwrap();
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn cached_sums_stay_accurate_for_tiny_marginals() {
        // Mostly-background histograms on an 8x8 grid with a small gamma: some plan rows
        // shrink by many orders of magnitude in a single column update.
        let side = 8;
        let n = side * side;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut hist = || {
            let v: Vec<f64> = (0..n)
                .map(|_| if rng.random::<f64>() < 0.2 { rng.random::<f64>() } else { 0.0 } + 1e-6)
                .collect();
            let s: f64 = v.iter().sum();
            Array1::from_iter(v.into_iter().map(|x| x / s))
        };
        let (a, b) = (hist(), hist());
        let c = Array2::from_shape_fn((n, n), |(p, q)| {
            let (dr, dc) = ((p / side) as f64 - (q / side) as f64, (p % side) as f64 - (q % side) as f64);
            (dr * dr + dc * dc).sqrt()
        });
        let p = Problem::new(a, b, c, 0.02).unwrap();
        let mut steps = 0;
        greenkhorn_solve_observed(&p, &SinkhornConfig::new(1e-2).with_max_iterations(20_000), &mut |it| {
            steps += 1;
            assert!(it.record.rho_row_sum.is_finite() && it.record.rho_col_sum.is_finite(), "k = {}", it.k);
            if let Some(rho) = it.record.selected_rho {
                assert!(rho.is_finite(), "k = {}", it.k);
            }
            if it.k % 97 == 0 {
                let plan = plan_from_iterate(&p, it.f, it.g).unwrap();
                for (cached, fresh) in it.row_sums.iter().zip(plan.row_sums()).chain(it.col_sums.iter().zip(plan.col_sums())) {
                    assert!((cached - fresh).abs() <= 1e-8 * fresh, "k = {}: {cached} vs {fresh}", it.k);
                }
            }
        })
        .unwrap();
        assert!(steps > 1000);
    }

    #[test]
    fn agrees_with_sinkhorn_on_symmetric_instance() {
        let p = Problem::new(array![0.5, 0.5], array![0.5, 0.5], array![[0.0, 1.0], [1.0, 0.0]], 1.0)
            .unwrap();
        let gk = greenkhorn_solve(&p, &SinkhornConfig::new(1e-8)).unwrap();
        let sk = sinkhorn_solve(&p, &SinkhornConfig::new(1e-10), None).unwrap();
        assert!(gk.converged());
        for (x, y) in gk.plan.matrix().iter().zip(sk.plan.matrix().iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-6);
        }
    }

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, gamma: f64) -> Problem {
        let mut marginal = || {
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.01).collect();
            let s: f64 = v.iter().sum();
            Array1::from_iter(v.iter().map(|x| x / s))
        };
        let a = marginal();
        let b = marginal();
        let c = Array2::from_shape_fn((n, n), |_| rng.random::<f64>());
        Problem::new(a, b, c, gamma).unwrap()
    }

    #[test]
    fn gain_equals_gamma_rho_and_caches_stay_coherent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_problem(&mut rng, 7, 0.1);
        let mut prev: Option<f64> = None;
        let mut checked = 0;
        greenkhorn_solve_observed(&p, &SinkhornConfig::new(1e-6), &mut |it| {
            let pot = DualPotentials::new(it.f.to_vec().into(), it.g.to_vec().into());
            let h = dual_objective(&p, &pot).unwrap();
            assert!((h - it.record.dual_value).abs() <= 1e-12);
            if let (Some(h0), Some(r)) = (prev, it.record.selected_rho) {
                assert!((h - h0 - p.gamma() * r).abs() <= 1e-12);
            }
            let plan = plan_from_potentials(&p, &pot).unwrap();
            for (x, y) in plan.row_sums().iter().zip(it.row_sums) {
                assert!((x - y).abs() <= 1e-12);
            }
            for (x, y) in plan.col_sums().iter().zip(it.col_sums) {
                assert!((x - y).abs() <= 1e-12);
            }
            if let Some(d) = it.record.cache_drift {
                assert!(d <= 1e-9);
                checked += 1;
            }
            prev = Some(h);
        })
        .unwrap();
        assert!(checked > 0);
    }

    #[test]
    fn zero_marginals_are_never_selected() {
        let c = array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]];
        let p = Problem::new(array![0.5, 0.0, 0.5], array![0.0, 0.6, 0.4], c, 0.2).unwrap();
        let r = greenkhorn_solve(&p, &SinkhornConfig::new(1e-9).with_trace(true)).unwrap();
        assert!(r.converged());
        for rec in &r.trace[1..] {
            let idx = rec.updated_index.unwrap();
            match rec.updated_side.unwrap() {
                Side::Row => assert_ne!(idx, 1),
                Side::Column => assert_ne!(idx, 0),
            }
        }
        assert!(r.plan.matrix().row(1).iter().all(|&x| x == 0.0));
        assert!(r.plan.matrix().column(0).iter().all(|&x| x == 0.0));
        assert_eq!(r.potentials.f[1], f64::NEG_INFINITY);
    }

    #[test]
    fn ties_prefer_lowest_index_and_columns() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[f64::INFINITY, f64::INFINITY]), 0);
        // Symmetric instance: equal row and column mismatch, so the first step is a column.
        let p = Problem::new(array![0.5, 0.5], array![0.5, 0.5], array![[0.0, 1.0], [1.0, 0.0]], 1.0)
            .unwrap();
        let r = greenkhorn_solve(&p, &SinkhornConfig::new(1e-8).with_trace(true)).unwrap();
        assert_eq!(r.trace[1].updated_side, Some(Side::Column));
        assert_eq!(r.trace[1].updated_index, Some(0));
    }

    #[test]
    fn epsilon_parameters() {
        let n = 100;
        let mut c = Array2::zeros((n, n));
        c[[3, 4]] = 1.0;
        let u = Array1::from_elem(n, 1.0 / n as f64);
        let inst = Instance::new(u.clone(), u, c).unwrap();
        let (gamma, delta) = greenkhorn_parameters(&inst, 0.1).unwrap();
        assert_abs_diff_eq!(gamma, 0.003619, epsilon = 1e-6);
        assert_abs_diff_eq!(delta, 0.0125, epsilon = 1e-15);
        let (_, delta) = greenkhorn_parameters(&inst, 100.0).unwrap();
        assert_eq!(delta, 1.0);
    }

    #[test]
    fn respects_iteration_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_problem(&mut rng, 5, 0.01);
        let r = greenkhorn_solve(&p, &SinkhornConfig::new(1e-15).with_max_iterations(10)).unwrap();
        assert_eq!(r.termination, Termination::IterationCap);
        assert_eq!(r.iterations, 10);
    }
}
