//! Alternating full-row / full-column rebalancing in the log domain.

use ndarray::Array1;

use crate::compaction::{compact_instance, CompactionMap};
use crate::error::{OtError, Result};
use crate::kernel::{build_kernel, GibbsKernel};
use crate::numeric::{compensated_sum, l1_distance, weighted_sum};
use crate::plan::{DualPotentials, TransportPlan};
use crate::problem::{Instance, Problem};
use crate::solver::{
    check_epsilon, sinkhorn_iteration_bound, Algorithm, EpsilonRun, EpsilonSetup, IterationRecord,
    Iterate, Side, SinkhornConfig, SolveResult, Termination, Variant,
};
use crate::divergence::rho_unchecked;
use crate::transforms::oscillation;

pub fn sinkhorn_solve(
    problem: &Problem,
    config: &SinkhornConfig,
    init: Option<&DualPotentials>,
) -> Result<SolveResult> {
    sinkhorn_solve_observed(problem, config, init, &mut |_| {})
}

/// Runs the iteration, calling `observer` on the starting point and after every update.
///
/// Even steps replace `f` by `γ log a − γ log(K e^{g/γ})`, odd steps do the same for `g`.
/// Termination is tested after each update against marginals recomputed from the plan.
/// Both marginals must be strictly positive; see [`crate::compact_zeros`].
pub fn sinkhorn_solve_observed(
    problem: &Problem,
    config: &SinkhornConfig,
    init: Option<&DualPotentials>,
    observer: &mut dyn FnMut(&Iterate<'_>),
) -> Result<SolveResult> {
    config.validate()?;
    reject_zeros("a", problem.a_slice())?;
    reject_zeros("b", problem.b_slice())?;
    let (m, n) = problem.shape();
    let gamma = problem.gamma();
    let kernel = build_kernel(problem)?;
    let kernel_t = kernel.transposed();
    let (log_a, log_b) = problem.log_marginals();
    let ln_a: Vec<f64> = problem.a().iter().map(|x| x.ln()).collect();
    let ln_b: Vec<f64> = problem.b().iter().map(|x| x.ln()).collect();

    let (mut f, mut g) = match init {
        Some(p) => {
            if p.f.len() != m || p.g.len() != n {
                return Err(OtError::DimensionMismatch(format!(
                    "initial potentials have lengths {} and {}, problem is {m}x{n}",
                    p.f.len(),
                    p.g.len()
                )));
            }
            p.ensure_finite()?;
            (p.f.to_vec(), p.g.to_vec())
        }
        None => (log_a.clone(), log_b.clone()),
    };

    let bound = sinkhorn_iteration_bound(problem.cost_inf_norm(), gamma, config.delta);
    let cap = config.cap(bound);

    let mut fs = vec![0.0; m];
    let mut gs = vec![0.0; n];
    let mut lse_rows = vec![0.0; m];
    let mut lse_cols = vec![0.0; n];
    let mut rows = vec![0.0; m];
    let mut cols = vec![0.0; n];
    let mut terms = vec![0.0; m.max(n)];
    let mut trace = Vec::new();

    let mut k = 0usize;
    let mut side = None;
    let termination = loop {
        scale(&f, gamma, &mut fs);
        scale(&g, gamma, &mut gs);
        // The pass that yields this iterate's marginals also prepares the next update.
        if k.is_multiple_of(2) {
            kernel.row_lse_and_sums(&fs, &gs, &mut lse_rows, &mut rows, &mut cols, &mut terms)?;
        } else {
            kernel_t
                .row_lse_and_sums(&gs, &fs, &mut lse_cols, &mut cols, &mut rows, &mut terms)
                .map_err(|e| match e {
                    OtError::PlanOverflow { i, j } => OtError::PlanOverflow { i: j, j: i },
                    other => other,
                })?;
        }
        let record = IterationRecord {
            k,
            dual_value: weighted_sum(&f, problem.a_slice()) + weighted_sum(&g, problem.b_slice())
                - gamma * compensated_sum(rows.iter().copied()),
            row_violation: l1_distance(&rows, problem.a_slice()),
            col_violation: l1_distance(&cols, problem.b_slice()),
            updated_side: side,
            updated_index: None,
            equicontinuity_f: oscillation(&f, &log_a)?,
            equicontinuity_g: oscillation(&g, &log_b)?,
            rho_row_sum: rho_sum(problem.a_slice(), &rows),
            rho_col_sum: rho_sum(problem.b_slice(), &cols),
            selected_rho: None,
            cache_drift: None,
        };
        if !record.dual_value.is_finite() {
            return Err(OtError::DualOverflow);
        }
        observer(&Iterate {
            k,
            f: &f,
            g: &g,
            row_sums: &rows,
            col_sums: &cols,
            record: &record,
        });
        let done = k > 0 && record.violation() <= config.delta;
        if config.record_trace {
            trace.push(record);
        }
        if done {
            break Termination::Converged;
        }
        if k >= cap {
            break Termination::IterationCap;
        }
        if k.is_multiple_of(2) {
            for i in 0..m {
                f[i] = gamma * ln_a[i] - gamma * lse_rows[i];
            }
            side = Some(Side::Row);
        } else {
            for j in 0..n {
                g[j] = gamma * ln_b[j] - gamma * lse_cols[j];
            }
            side = Some(Side::Column);
        }
        check_finite("f", &f)?;
        check_finite("g", &g)?;
        k += 1;
    };

    finish(problem, &kernel, f, g, k, trace, termination, config.delta)
}

fn finish(
    problem: &Problem,
    kernel: &GibbsKernel,
    f: Vec<f64>,
    g: Vec<f64>,
    iterations: usize,
    trace: Vec<IterationRecord>,
    termination: Termination,
    delta: f64,
) -> Result<SolveResult> {
    let gamma = problem.gamma();
    let fs: Vec<f64> = f.iter().map(|x| x / gamma).collect();
    let gs: Vec<f64> = g.iter().map(|x| x / gamma).collect();
    let plan = TransportPlan::from_trusted(kernel.plan_matrix(&fs, &gs)?);
    let (row_violation, col_violation) = plan.violations_against(problem.a_slice(), problem.b_slice())?;
    let dual_value = weighted_sum(&f, problem.a_slice()) + weighted_sum(&g, problem.b_slice())
        - gamma * plan.total();
    Ok(SolveResult {
        plan,
        potentials: DualPotentials::new(Array1::from(f), Array1::from(g)),
        iterations,
        trace,
        termination,
        gamma,
        delta,
        row_violation,
        col_violation,
        dual_value,
    })
}

fn scale(x: &[f64], gamma: f64, out: &mut [f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o = v / gamma;
    }
}

pub(crate) fn rho_sum(target: &[f64], sums: &[f64]) -> f64 {
    compensated_sum(target.iter().zip(sums).map(|(&t, &s)| rho_unchecked(t, s)))
}

fn reject_zeros(which: &'static str, v: &[f64]) -> Result<()> {
    match v.iter().position(|&x| x == 0.0) {
        Some(index) => Err(OtError::ZeroMarginal { which, index }),
        None => Ok(()),
    }
}

fn check_finite(which: &'static str, v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(OtError::NonFinitePotential { which, index }),
        None => Ok(()),
    }
}

/// `(1 − δ/8)(a + δ/(n(8 − δ))·1)`, renormalized to sum to one.
///
/// The result is within `δ/4` of `a` in ℓ1 and has every entry at least `δ/(8n)`.
pub fn lift_marginals(
    a: &Array1<f64>,
    b: &Array1<f64>,
    delta: f64,
) -> Result<(Array1<f64>, Array1<f64>)> {
    if !(delta > 0.0 && delta < 2.0) {
        return Err(OtError::InvalidParameter(format!(
            "lifting needs delta in (0, 2), got {delta}"
        )));
    }
    if a.len() != b.len() {
        return Err(OtError::DimensionMismatch(format!(
            "marginals have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let lift = |v: &Array1<f64>| -> Result<Array1<f64>> {
        if let Some(&x) = v.iter().find(|x| !(**x >= 0.0) || x.is_infinite()) {
            return Err(OtError::NegativeInput(x));
        }
        let shift = delta / (n * (8.0 - delta));
        let raw: Array1<f64> = v.mapv(|x| (1.0 - delta / 8.0) * (x + shift));
        let total = compensated_sum(raw.iter().copied());
        Ok(raw / total)
    };
    Ok((lift(a)?, lift(b)?))
}

/// `γ = ε/(4 log n)` and `δ = ε/(8‖C‖∞)`.
pub fn sinkhorn_parameters(instance: &Instance, epsilon: f64) -> Result<(f64, f64)> {
    check_epsilon(instance, epsilon)?;
    let n = instance.n() as f64;
    Ok((
        epsilon / (4.0 * n.ln()),
        epsilon / (8.0 * instance.cost_inf_norm()),
    ))
}

/// Chooses the regularization and threshold for accuracy `epsilon` and prepares the
/// instance: zero marginal entries are compacted away for the vanilla variant, and the
/// lifted variant mixes in the uniform vector first.
pub fn sinkhorn_epsilon_setup(
    instance: &Instance,
    epsilon: f64,
    variant: Variant,
) -> Result<EpsilonSetup> {
    let (gamma, delta) = sinkhorn_parameters(instance, epsilon)?;
    epsilon_setup(Algorithm::Sinkhorn, instance, epsilon, variant, gamma, delta)
}

pub(crate) fn epsilon_setup(
    algorithm: Algorithm,
    instance: &Instance,
    epsilon: f64,
    variant: Variant,
    gamma: f64,
    delta: f64,
) -> Result<EpsilonSetup> {
    let n = instance.n();
    let trivial = instance.cost_inf_norm() == 0.0;
    let mut config = SinkhornConfig::new(if trivial { 1.0 } else { delta });
    config.record_trace = false;
    let (solved, map) = if trivial {
        (instance.clone(), CompactionMap::identity(n, n))
    } else {
        match variant {
            Variant::Vanilla if algorithm == Algorithm::Sinkhorn => compact_instance(instance)?,
            Variant::Vanilla => (instance.clone(), CompactionMap::identity(n, n)),
            Variant::Lifted => {
                // The lifting formula needs δ < 2; larger thresholds are already vacuous.
                let (a, b) = lift_marginals(instance.a(), instance.b(), delta.min(1.0))?;
                (
                    instance.with_marginals(a, b)?,
                    CompactionMap::identity(n, n),
                )
            }
        }
    };
    Ok(EpsilonSetup {
        algorithm,
        variant,
        epsilon,
        gamma,
        delta,
        original: instance.clone(),
        problem: solved.with_gamma(gamma)?,
        map,
        config,
        trivial,
    })
}

/// Runs Sinkhorn tuned for accuracy `epsilon`; the plan is returned unrounded.
pub fn sinkhorn_epsilon_solve(
    instance: &Instance,
    epsilon: f64,
    variant: Variant,
) -> Result<EpsilonRun> {
    sinkhorn_epsilon_setup(instance, epsilon, variant)?.run()
}
