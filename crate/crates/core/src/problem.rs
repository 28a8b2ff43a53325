//! Problem instances.
//!
//! An [`Instance`] is the unregularized transport problem: two marginals and a
//! cost matrix. A [`Problem`] pairs an instance with the entropic
//! regularization strength `gamma`. Both are immutable once built, and the
//! marginal sums are validated here once; solvers never re-normalize.

use ndarray::{Array1, Array2};

use crate::error::{OtError, Result};
use crate::numeric::compensated_sum;

/// Tolerance on `|Σa − 1|` accepted at construction.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    a: Array1<f64>,
    b: Array1<f64>,
    cost: Array2<f64>,
}

impl Instance {
    /// Builds a square instance. Both marginals must be probability vectors and
    /// the cost must be finite and nonnegative.
    pub fn new(a: Array1<f64>, b: Array1<f64>, cost: Array2<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(OtError::DimensionMismatch(format!(
                "marginals have lengths {} and {}",
                a.len(),
                b.len()
            )));
        }
        Self::new_rectangular(a, b, cost)
    }

    /// Rectangular instances only arise from zero compaction.
    pub(crate) fn new_rectangular(
        a: Array1<f64>,
        b: Array1<f64>,
        cost: Array2<f64>,
    ) -> Result<Self> {
        if a.is_empty() || b.is_empty() {
            return Err(OtError::DimensionMismatch("empty marginal".into()));
        }
        if cost.dim() != (a.len(), b.len()) {
            return Err(OtError::DimensionMismatch(format!(
                "cost is {:?}, marginals are {} and {}",
                cost.dim(),
                a.len(),
                b.len()
            )));
        }
        validate_probability("a", a.as_slice().expect("contiguous"))?;
        validate_probability("b", b.as_slice().expect("contiguous"))?;
        for ((i, j), &c) in cost.indexed_iter() {
            if !c.is_finite() || c < 0.0 {
                return Err(OtError::InvalidCost { i, j, value: c });
            }
        }
        Ok(Self {
            a: a.as_standard_layout().to_owned(),
            b: b.as_standard_layout().to_owned(),
            cost: cost.as_standard_layout().to_owned(),
        })
    }

    pub fn a(&self) -> &Array1<f64> {
        &self.a
    }

    pub fn b(&self) -> &Array1<f64> {
        &self.b
    }

    pub fn cost(&self) -> &Array2<f64> {
        &self.cost
    }

    pub fn a_slice(&self) -> &[f64] {
        self.a.as_slice().expect("standard layout")
    }

    pub fn b_slice(&self) -> &[f64] {
        self.b.as_slice().expect("standard layout")
    }

    /// `(rows, cols)`; equal for every public instance.
    pub fn shape(&self) -> (usize, usize) {
        self.cost.dim()
    }

    /// Row count; the `n` of an `n × n` instance.
    pub fn n(&self) -> usize {
        self.a.len()
    }

    /// `‖C‖∞`, the largest entry since `C ≥ 0`.
    pub fn cost_inf_norm(&self) -> f64 {
        self.cost.iter().copied().fold(0.0, f64::max)
    }

    /// `max(C) − min(C)`.
    pub fn cost_range(&self) -> f64 {
        let max = self.cost.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.cost.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }

    pub fn has_zero_marginal(&self) -> bool {
        self.a.iter().chain(self.b.iter()).any(|&x| x == 0.0)
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Problem> {
        Problem::from_instance(self.clone(), gamma)
    }

    /// Same cost, different marginals (used by the lifted variants).
    pub fn with_marginals(&self, a: Array1<f64>, b: Array1<f64>) -> Result<Self> {
        Self::new_rectangular(a, b, self.cost.clone())
    }
}

/// An entropic-regularized instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    instance: Instance,
    gamma: f64,
}

impl Problem {
    pub fn new(a: Array1<f64>, b: Array1<f64>, cost: Array2<f64>, gamma: f64) -> Result<Self> {
        Self::from_instance(Instance::new(a, b, cost)?, gamma)
    }

    pub fn from_instance(instance: Instance, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(OtError::InvalidGamma(gamma));
        }
        Ok(Self { instance, gamma })
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn a(&self) -> &Array1<f64> {
        self.instance.a()
    }

    pub fn b(&self) -> &Array1<f64> {
        self.instance.b()
    }

    pub fn cost(&self) -> &Array2<f64> {
        self.instance.cost()
    }

    pub fn a_slice(&self) -> &[f64] {
        self.instance.a_slice()
    }

    pub fn b_slice(&self) -> &[f64] {
        self.instance.b_slice()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.instance.shape()
    }

    pub fn n(&self) -> usize {
        self.instance.n()
    }

    pub fn cost_inf_norm(&self) -> f64 {
        self.instance.cost_inf_norm()
    }

    pub fn cost_range(&self) -> f64 {
        self.instance.cost_range()
    }

    /// `γ log a` and `γ log b`, with `-inf` at zero entries.
    pub fn log_marginals(&self) -> (Vec<f64>, Vec<f64>) {
        let g = self.gamma;
        (
            self.a().iter().map(|&x| g * x.ln()).collect(),
            self.b().iter().map(|&x| g * x.ln()).collect(),
        )
    }
}

fn validate_probability(which: &'static str, v: &[f64]) -> Result<()> {
    for (index, &value) in v.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(OtError::InvalidMarginal {
                which,
                index,
                value,
            });
        }
    }
    let sum = compensated_sum(v.iter().copied());
    if sum == 0.0 {
        return Err(OtError::AllZeroMarginal { which });
    }
    if (sum - 1.0).abs() > MASS_TOLERANCE {
        return Err(OtError::MarginalMass { which, sum });
    }
    Ok(())
}
