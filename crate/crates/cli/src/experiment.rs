//! Benchmark orchestration: pairs of image histograms, one exact solve per pair, and a
//! solver run for every (trial, algorithm, ε) cell.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use entropot_core::{
    certify_against, certified_cost, embed_plan, exact_ot, greenkhorn_epsilon_setup,
    plan_from_iterate, reference_dual_optimum, round_to_polytope, sinkhorn_epsilon_setup,
    Algorithm, Certificate, EpsilonSetup, GreenkhornMonitor, Instance, InvariantReport, Iterate,
    SinkhornMonitor, Variant,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{load_mnist, pixel_cost, synthetic_images, ImageHistogram};
use crate::error::{BenchError, Result};

/// Default largest problem size for which monitors get a high-accuracy reference optimum.
pub const REFERENCE_MAX_N: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Mnist,
    Synthetic,
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dataset::Mnist => "mnist",
            Dataset::Synthetic => "synthetic",
        })
    }
}

impl FromStr for Dataset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mnist" => Ok(Dataset::Mnist),
            "synthetic" => Ok(Dataset::Synthetic),
            other => Err(format!("unknown dataset '{other}' (expected mnist or synthetic)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AlgoChoice {
    #[serde(rename = "sinkhorn")]
    SinkhornVanilla,
    #[serde(rename = "sinkhorn-lifted")]
    SinkhornLifted,
    #[serde(rename = "greenkhorn")]
    GreenkhornVanilla,
    #[serde(rename = "greenkhorn-lifted")]
    GreenkhornLifted,
}

impl AlgoChoice {
    pub const ALL: [AlgoChoice; 4] = [
        AlgoChoice::SinkhornVanilla,
        AlgoChoice::SinkhornLifted,
        AlgoChoice::GreenkhornVanilla,
        AlgoChoice::GreenkhornLifted,
    ];

    pub fn algorithm(self) -> Algorithm {
        match self {
            AlgoChoice::SinkhornVanilla | AlgoChoice::SinkhornLifted => Algorithm::Sinkhorn,
            AlgoChoice::GreenkhornVanilla | AlgoChoice::GreenkhornLifted => Algorithm::Greenkhorn,
        }
    }

    pub fn variant(self) -> Variant {
        match self {
            AlgoChoice::SinkhornVanilla | AlgoChoice::GreenkhornVanilla => Variant::Vanilla,
            AlgoChoice::SinkhornLifted | AlgoChoice::GreenkhornLifted => Variant::Lifted,
        }
    }

    pub fn setup(self, instance: &Instance, epsilon: f64) -> Result<EpsilonSetup> {
        Ok(match self.algorithm() {
            Algorithm::Sinkhorn => sinkhorn_epsilon_setup(instance, epsilon, self.variant())?,
            Algorithm::Greenkhorn => greenkhorn_epsilon_setup(instance, epsilon, self.variant())?,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            AlgoChoice::SinkhornVanilla => "sinkhorn",
            AlgoChoice::SinkhornLifted => "sinkhorn-lifted",
            AlgoChoice::GreenkhornVanilla => "greenkhorn",
            AlgoChoice::GreenkhornLifted => "greenkhorn-lifted",
        }
    }
}

impl fmt::Display for AlgoChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgoChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        AlgoChoice::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                format!(
                    "unknown algorithm '{s}' (expected sinkhorn, sinkhorn-lifted, greenkhorn or greenkhorn-lifted)"
                )
            })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub dataset: Dataset,
    pub algorithms: Vec<AlgoChoice>,
    pub epsilons: Vec<f64>,
    /// Multiply each ε by `‖C‖∞` before use.
    pub relative_eps: bool,
    pub trials: usize,
    pub seed: u64,
    /// Side length of the (downsampled) images; `n = side²`.
    pub side: usize,
    pub mnist_path: Option<PathBuf>,
    pub foreground_fraction: f64,
    pub invariants: bool,
    pub oracle: bool,
    /// Record rounded-cost curves (requires the oracle).
    pub curves: bool,
    /// Monitors get a high-accuracy reference optimum only up to this problem size.
    pub reference_max_n: usize,
}

impl ExperimentSpec {
    pub fn synthetic(algorithms: Vec<AlgoChoice>, epsilons: Vec<f64>, trials: usize, seed: u64, side: usize) -> Self {
        Self {
            dataset: Dataset::Synthetic,
            algorithms,
            epsilons,
            relative_eps: false,
            trials,
            seed,
            side,
            mnist_path: None,
            foreground_fraction: 0.2,
            invariants: true,
            oracle: true,
            curves: true,
            reference_max_n: REFERENCE_MAX_N,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(BenchError::Usage("trials must be at least 1".into()));
        }
        if self.epsilons.is_empty() {
            return Err(BenchError::Usage("at least one epsilon is required".into()));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(BenchError::Usage(format!("epsilons must be positive, got {e}")));
        }
        if self.algorithms.is_empty() {
            return Err(BenchError::Usage("at least one algorithm is required".into()));
        }
        if self.side == 0 {
            return Err(BenchError::Usage("side must be positive".into()));
        }
        if self.dataset == Dataset::Mnist && self.mnist_path.is_none() {
            return Err(BenchError::Usage("--mnist-path is required for the mnist dataset".into()));
        }
        Ok(())
    }

    /// Two histograms per trial.
    pub fn images(&self) -> Result<Vec<ImageHistogram>> {
        let count = 2 * self.trials;
        match self.dataset {
            Dataset::Synthetic => synthetic_images(count, self.side, self.foreground_fraction, self.seed),
            Dataset::Mnist => {
                let path = self.mnist_path.as_ref().expect("validated");
                load_mnist(path, count, self.seed, self.side)
            }
        }
    }
}

/// One row of the summary table. `None` fields are written as `NA`.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub dataset: Dataset,
    pub algo: AlgoChoice,
    pub trial: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub delta: f64,
    pub n: usize,
    pub iterations: usize,
    pub rounded_cost: f64,
    pub exact_cost: Option<f64>,
    pub gap: Option<f64>,
    /// Worst-case iteration count guaranteed for this run's parameters.
    pub theorem_bound: u64,
    pub invariant_violations: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellReport {
    pub trial: usize,
    pub algo: AlgoChoice,
    pub epsilon: f64,
    pub converged: bool,
    pub certificate: Option<Certificate>,
    pub invariants: Option<InvariantReport>,
}

/// Rounded-cost gap at sampled iterations of one run.
#[derive(Debug, Clone)]
pub struct Curve {
    pub points: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub row: SummaryRow,
    pub report: CellReport,
    pub curve: Option<Curve>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub spec: ExperimentSpec,
    /// Ordered by trial, then algorithm, then ε as given.
    pub cells: Vec<CellOutcome>,
    pub cost_norm: f64,
}

impl ExperimentOutcome {
    pub fn total_violations(&self) -> usize {
        self.cells
            .iter()
            .filter_map(|c| c.report.invariants.as_ref())
            .map(InvariantReport::total_failures)
            .sum()
    }

    pub fn rows(&self) -> impl Iterator<Item = &SummaryRow> {
        self.cells.iter().map(|c| &c.row)
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let images = spec.images()?;
    let cost = pixel_cost(spec.side);
    let instances: Vec<Instance> = images
        .chunks(2)
        .map(|pair| Instance::new(pair[0].pixels.clone(), pair[1].pixels.clone(), cost.clone()))
        .collect::<std::result::Result<_, _>>()?;
    let cost_norm = instances[0].cost_inf_norm();

    let exact: Vec<Option<f64>> = if spec.oracle {
        instances
            .par_iter()
            .map(|inst| exact_ot(inst).map(|s| Some(s.cost)).map_err(BenchError::from))
            .collect::<Result<_>>()?
    } else {
        vec![None; instances.len()]
    };

    let mut jobs = Vec::new();
    for trial in 0..spec.trials {
        for &algo in &spec.algorithms {
            for &eps in &spec.epsilons {
                let epsilon = if spec.relative_eps { eps * cost_norm } else { eps };
                jobs.push((trial, algo, epsilon));
            }
        }
    }
    let cells = jobs
        .par_iter()
        .map(|&(trial, algo, epsilon)| {
            run_cell(spec, &instances[trial], exact[trial], trial, algo, epsilon)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentOutcome {
        spec: spec.clone(),
        cells,
        cost_norm,
    })
}

fn run_cell(
    spec: &ExperimentSpec,
    instance: &Instance,
    exact: Option<f64>,
    trial: usize,
    algo: AlgoChoice,
    epsilon: f64,
) -> Result<CellOutcome> {
    let setup = algo.setup(instance, epsilon)?;
    let n = instance.n();
    let stride = match algo.algorithm() {
        Algorithm::Sinkhorn => 1,
        Algorithm::Greenkhorn => n,
    };
    let reference = if spec.invariants && n <= spec.reference_max_n && !setup.trivial {
        Some(reference_dual_optimum(&setup.problem)?)
    } else {
        None
    };

    let mut points = Vec::new();
    let mut sample_error = None;
    let mut sample = |it: &Iterate<'_>| {
        if exact.is_none() || !spec.curves || !is_sample(it.k, stride) || sample_error.is_some() {
            return;
        }
        match iterate_gap(&setup, it, exact.unwrap_or_default()) {
            Ok(gap) => points.push((it.k, gap)),
            Err(e) => sample_error = Some(e),
        }
    };

    let (result, mut report) = if spec.invariants && !setup.trivial {
        match algo.algorithm() {
            Algorithm::Sinkhorn => {
                let mut monitor = SinkhornMonitor::new(&setup.problem, reference.as_ref());
                let run = setup.run_observed(&mut |it| {
                    monitor.observe(it);
                    sample(it);
                })?;
                let report = monitor.finish(&run.result);
                (run.result, Some(report))
            }
            Algorithm::Greenkhorn => {
                let mut monitor = GreenkhornMonitor::new(&setup.problem, reference.as_ref());
                let run = setup.run_observed(&mut |it| {
                    monitor.observe(it);
                    sample(it);
                })?;
                let report = monitor.finish(&run.result);
                (run.result, Some(report))
            }
        }
    } else {
        let run = setup.run_observed(&mut sample)?;
        (run.result, spec.invariants.then(InvariantReport::default))
    };
    if let Some(e) = sample_error {
        return Err(e);
    }

    let certificate = match exact {
        Some(cost) => Some(certify_against(&result, instance, epsilon, algo.algorithm(), cost)?),
        None => None,
    };
    let rounded_cost = match &certificate {
        Some(c) => c.rounded_cost,
        None => {
            let rounded = round_to_polytope(&result.plan, instance.a_slice(), instance.b_slice())?;
            certified_cost(&rounded, instance.cost())?
        }
    };
    if let (Some(r), Some(c)) = (report.as_mut(), &certificate) {
        if result.converged() {
            r.check("accuracy_certificate", result.iterations, c.gap, c.bound + 1e-9);
            r.check("epsilon_guarantee", result.iterations, c.gap, epsilon);
        } else {
            r.note("iteration cap reached; accuracy certificate not asserted");
        }
    }
    let curve = certificate.as_ref().filter(|_| spec.curves).map(|c| {
        if points.last().map(|p| p.0) != Some(result.iterations) {
            points.push((result.iterations, c.gap));
        }
        Curve { points }
    });

    Ok(CellOutcome {
        row: SummaryRow {
            dataset: spec.dataset,
            algo,
            trial,
            epsilon,
            gamma: setup.gamma,
            delta: setup.delta,
            n,
            iterations: result.iterations,
            rounded_cost,
            exact_cost: exact,
            gap: certificate.as_ref().map(|c| c.gap),
            theorem_bound: setup.iteration_bound(),
            invariant_violations: report.as_ref().map(InvariantReport::total_failures),
        },
        report: CellReport {
            trial,
            algo,
            epsilon,
            converged: result.converged(),
            certificate,
            invariants: report,
        },
        curve,
    })
}

/// Curve sampling: every `stride`-th iteration for the first 200 samples, then thinned so
/// that each doubling of the iteration count adds about 100 samples.
pub fn is_sample(k: usize, stride: usize) -> bool {
    if !k.is_multiple_of(stride) {
        return false;
    }
    let m = k / stride;
    if m < 200 {
        return true;
    }
    let thinning = 1usize << (usize::BITS - 1 - (m / 100).leading_zeros());
    m.is_multiple_of(thinning)
}

/// `⟨C, Round(P_k)⟩ − ⟨C, P*⟩` for an observed iterate, rounded onto the original marginals.
fn iterate_gap(setup: &EpsilonSetup, it: &Iterate<'_>, exact: f64) -> Result<f64> {
    let original = &setup.original;
    let mut plan = plan_from_iterate(&setup.problem, it.f, it.g)?;
    if !setup.map.is_identity(original.n()) {
        plan = embed_plan(&plan, &setup.map, original.n())?;
    }
    let rounded = round_to_polytope(&plan, original.a_slice(), original.b_slice())?;
    Ok(certified_cost(&rounded, original.cost())? - exact)
}
