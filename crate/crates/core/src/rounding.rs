//! Projection of an approximately feasible plan onto the transport polytope.

use ndarray::{Array1, Array2, Axis};

use crate::error::{OtError, Result};
use crate::numeric::{compensated_sum, NeumaierSum};
use crate::plan::TransportPlan;
use crate::problem::MASS_TOLERANCE;

/// Below this ℓ1 norm of the residual the rank-one patch is skipped.
pub const PATCH_THRESHOLD: f64 = 1e-15;

/// Every intermediate of one rounding pass.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundingStages {
    pub row_scaling: Array1<f64>,
    /// `diag(x) P`.
    pub row_scaled: Array2<f64>,
    pub col_scaling: Array1<f64>,
    /// `diag(x) P diag(y)`.
    pub truncated: Array2<f64>,
    pub delta_a: Array1<f64>,
    pub delta_b: Array1<f64>,
    pub patched: bool,
    pub rounded: TransportPlan,
}

/// Scales rows then columns down to at most their targets, then adds
/// `Δ_a Δ_bᵀ / ‖Δ_a‖₁` so both marginals match.
pub fn round_to_polytope(plan: &TransportPlan, a: &[f64], b: &[f64]) -> Result<TransportPlan> {
    round_detailed(plan, a, b).map(|s| s.rounded)
}

pub fn round_detailed(plan: &TransportPlan, a: &[f64], b: &[f64]) -> Result<RoundingStages> {
    check_inputs(plan, a, b)?;
    let p = plan.matrix();

    let row_scaling = Array1::from_iter(
        a.iter()
            .zip(plan.row_sums())
            .map(|(&t, &r)| if r > t { t / r } else { 1.0 }),
    );
    let mut row_scaled = p.clone();
    for (mut row, &x) in row_scaled.axis_iter_mut(Axis(0)).zip(&row_scaling) {
        if x != 1.0 {
            row.mapv_inplace(|v| v * x);
        }
    }

    let col_sums = column_sums(&row_scaled);
    let col_scaling = Array1::from_iter(
        b.iter()
            .zip(&col_sums)
            .map(|(&t, &c)| if c > t { t / c } else { 1.0 }),
    );
    let mut truncated = row_scaled.clone();
    for mut row in truncated.axis_iter_mut(Axis(0)) {
        for (v, &y) in row.iter_mut().zip(&col_scaling) {
            if y != 1.0 {
                *v *= y;
            }
        }
    }

    let rows = row_sums(&truncated);
    let cols = column_sums(&truncated);
    let delta_a = Array1::from_iter(a.iter().zip(&rows).map(|(&t, &r)| (t - r).max(0.0)));
    let delta_b = Array1::from_iter(b.iter().zip(&cols).map(|(&t, &c)| (t - c).max(0.0)));
    let norm_a = compensated_sum(delta_a.iter().copied());

    let mut rounded = truncated.clone();
    let patched = norm_a >= PATCH_THRESHOLD;
    if patched {
        for (mut row, &da) in rounded.axis_iter_mut(Axis(0)).zip(&delta_a) {
            if da == 0.0 {
                continue;
            }
            let w = da / norm_a;
            for (v, &db) in row.iter_mut().zip(&delta_b) {
                *v += w * db;
            }
        }
    }

    Ok(RoundingStages {
        row_scaling,
        row_scaled,
        col_scaling,
        truncated,
        delta_a,
        delta_b,
        patched,
        rounded: TransportPlan::from_trusted(rounded),
    })
}

/// `⟨C, P⟩` with compensated summation.
pub fn certified_cost(plan: &TransportPlan, cost: &Array2<f64>) -> Result<f64> {
    if plan.shape() != cost.dim() {
        return Err(OtError::DimensionMismatch(format!(
            "plan is {:?}, cost is {:?}",
            plan.shape(),
            cost.dim()
        )));
    }
    Ok(compensated_sum(
        plan.matrix().iter().zip(cost.iter()).map(|(&p, &c)| p * c),
    ))
}

fn check_inputs(plan: &TransportPlan, a: &[f64], b: &[f64]) -> Result<()> {
    if plan.shape() != (a.len(), b.len()) {
        return Err(OtError::DimensionMismatch(format!(
            "plan is {:?}, marginals have lengths {} and {}",
            plan.shape(),
            a.len(),
            b.len()
        )));
    }
    for (which, v) in [("a", a), ("b", b)] {
        if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x >= 0.0)) {
            return Err(OtError::InvalidMarginal {
                which,
                index,
                value,
            });
        }
    }
    let mass_a = compensated_sum(a.iter().copied());
    let mass_b = compensated_sum(b.iter().copied());
    if (mass_a - mass_b).abs() > MASS_TOLERANCE * mass_a.max(1.0) {
        return Err(OtError::MassMismatch {
            a_mass: mass_a,
            b_mass: mass_b,
        });
    }
    Ok(())
}

fn row_sums(m: &Array2<f64>) -> Vec<f64> {
    m.axis_iter(Axis(0))
        .map(|r| compensated_sum(r.iter().copied()))
        .collect()
}

fn column_sums(m: &Array2<f64>) -> Vec<f64> {
    let mut acc = vec![NeumaierSum::new(); m.ncols()];
    for row in m.axis_iter(Axis(0)) {
        for (s, &v) in acc.iter_mut().zip(row) {
            s.add(v);
        }
    }
    acc.iter().map(NeumaierSum::value).collect()
}
