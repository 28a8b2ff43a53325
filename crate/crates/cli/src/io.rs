//! JSON problem files for the `solve` and `oracle` subcommands.

use std::path::Path;

use entropot_core::{
    certified_cost, compact_zeros, embed_plan, exact_ot, greenkhorn_solve, lift_marginals,
    round_to_polytope, sinkhorn_solve, Instance, Problem, SinkhornConfig, SolveResult,
};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::experiment::AlgoChoice;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemFile {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(rename = "C")]
    pub cost: Vec<Vec<f64>>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
}

impl ProblemFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| BenchError::Format(format!("{}: {e}", path.display())))
    }

    pub fn instance(&self) -> Result<Instance> {
        let cols = self.cost.first().map_or(0, Vec::len);
        if self.cost.iter().any(|row| row.len() != cols) {
            return Err(BenchError::Format("cost matrix rows have different lengths".into()));
        }
        let flat: Vec<f64> = self.cost.iter().flatten().copied().collect();
        let cost = Array2::from_shape_vec((self.cost.len(), cols), flat)
            .map_err(|e| BenchError::Format(e.to_string()))?;
        Instance::new(Array1::from(self.a.clone()), Array1::from(self.b.clone()), cost)
            .map_err(|e| BenchError::Format(e.to_string()))
    }

    fn require(&self, value: Option<f64>, name: &str) -> Result<f64> {
        value.ok_or_else(|| BenchError::Format(format!("the problem file needs \"{name}\" for solve")))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveOutput {
    pub algo: AlgoChoice,
    pub gamma: f64,
    pub delta: f64,
    pub iterations: usize,
    pub converged: bool,
    pub row_violation: f64,
    pub col_violation: f64,
    pub dual_value: f64,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub plan: Vec<Vec<f64>>,
    /// The plan rounded onto the transport polytope of the input marginals.
    pub rounded_plan: Vec<Vec<f64>>,
    pub rounded_cost: f64,
}

/// Runs the chosen solver with the file's `gamma` and `delta`.
///
/// Vanilla Sinkhorn drops zero marginal entries and solves the reduced problem; lifted
/// variants solve with marginals mixed toward uniform by `min(delta, 1)`.
pub fn solve_file(file: &ProblemFile, algo: AlgoChoice, max_iterations: Option<usize>) -> Result<SolveOutput> {
    let instance = file.instance()?;
    let gamma = file.require(file.gamma, "gamma")?;
    let delta = file.require(file.delta, "delta")?;
    let mut config = SinkhornConfig::new(delta);
    if let Some(cap) = max_iterations {
        config = config.with_max_iterations(cap);
    }
    let n = instance.n();
    let lifted = matches!(algo, AlgoChoice::SinkhornLifted | AlgoChoice::GreenkhornLifted);
    let problem = if lifted {
        let (a, b) = lift_marginals(instance.a(), instance.b(), delta.min(1.0))?;
        Problem::from_instance(instance.with_marginals(a, b)?, gamma)?
    } else {
        Problem::from_instance(instance.clone(), gamma)?
    };
    let result: SolveResult = match algo {
        AlgoChoice::SinkhornVanilla => {
            let (compact, map) = compact_zeros(&problem)?;
            let mut r = sinkhorn_solve(&compact, &config, None)?;
            if !map.is_identity(n) {
                r.plan = embed_plan(&r.plan, &map, n)?;
                r.potentials.f = map.embed_rows(&r.potentials.f.to_vec(), n, f64::NEG_INFINITY);
                r.potentials.g = map.embed_cols(&r.potentials.g.to_vec(), n, f64::NEG_INFINITY);
            }
            r
        }
        AlgoChoice::SinkhornLifted => sinkhorn_solve(&problem, &config, None)?,
        AlgoChoice::GreenkhornVanilla | AlgoChoice::GreenkhornLifted => greenkhorn_solve(&problem, &config)?,
    };
    let (row_violation, col_violation) = result.plan.violations_against(instance.a_slice(), instance.b_slice())?;
    let rounded = round_to_polytope(&result.plan, instance.a_slice(), instance.b_slice())?;
    let rounded_cost = certified_cost(&rounded, instance.cost())?;
    Ok(SolveOutput {
        algo,
        gamma,
        delta,
        iterations: result.iterations,
        converged: result.converged(),
        row_violation,
        col_violation,
        dual_value: result.dual_value,
        f: result.potentials.f.to_vec(),
        g: result.potentials.g.to_vec(),
        plan: rows(result.plan.matrix()),
        rounded_plan: rows(rounded.matrix()),
        rounded_cost,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleOutput {
    pub cost: f64,
    pub plan: Vec<Vec<f64>>,
    /// Dual potentials with `u_i + v_j ≤ C_ij` and `⟨u, a⟩ + ⟨v, b⟩ = cost`.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub min_reduced_cost: f64,
    pub pivots: usize,
}

pub fn oracle_file(file: &ProblemFile) -> Result<OracleOutput> {
    let instance = file.instance()?;
    let exact = exact_ot(&instance)?;
    Ok(OracleOutput {
        cost: exact.cost,
        plan: rows(exact.plan.matrix()),
        u: exact.potentials.f.to_vec(),
        v: exact.potentials.g.to_vec(),
        min_reduced_cost: exact.min_reduced_cost,
        pivots: exact.pivots,
    })
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

/// Writes pretty JSON to `path`, or to stdout when `path` is `None`.
pub fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| BenchError::Format(e.to_string()))?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| BenchError::io(p, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}
