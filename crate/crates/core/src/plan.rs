//! Dual potentials, transport plans, and the dual objective.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{OtError, Result};
use crate::numeric::{compensated_sum, l1_distance, weighted_sum, NeumaierSum};
use crate::problem::Problem;

/// Log-domain scalings `f = γ log u`, `g = γ log v`.
///
/// Entries are finite, except that Greenkhorn reports `-inf` at coordinates
/// whose marginal is zero (a zero scaling it never updates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPotentials {
    pub f: Array1<f64>,
    pub g: Array1<f64>,
}

impl DualPotentials {
    pub fn new(f: Array1<f64>, g: Array1<f64>) -> Self {
        Self { f, g }
    }

    /// `(γ log a, γ log b)`, the default starting point of both solvers.
    pub fn from_marginals(problem: &Problem) -> Self {
        let (f, g) = problem.log_marginals();
        Self::new(Array1::from(f), Array1::from(g))
    }

    /// `(f + η·1, g − η·1)`; leaves the dual objective unchanged.
    pub fn translated(&self, eta: f64) -> Self {
        Self::new(&self.f + eta, &self.g - eta)
    }

    pub fn ensure_finite(&self) -> Result<()> {
        for (which, v) in [("f", &self.f), ("g", &self.g)] {
            if let Some(index) = v.iter().position(|x| !x.is_finite()) {
                return Err(OtError::NonFinitePotential { which, index });
            }
        }
        Ok(())
    }

    pub(crate) fn f_slice(&self) -> &[f64] {
        self.f.as_slice().expect("standard layout")
    }

    pub(crate) fn g_slice(&self) -> &[f64] {
        self.g.as_slice().expect("standard layout")
    }
}

/// A nonnegative matrix with cached marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    matrix: Array2<f64>,
    row_sums: Array1<f64>,
    col_sums: Array1<f64>,
    total: f64,
}

impl TransportPlan {
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        for ((i, j), &p) in matrix.indexed_iter() {
            if !p.is_finite() || p < 0.0 {
                return Err(OtError::InvalidParameter(format!(
                    "plan entry ({i}, {j}) = {p} is not a nonnegative number"
                )));
            }
        }
        Ok(Self::from_trusted(matrix.as_standard_layout().to_owned()))
    }

    pub(crate) fn from_trusted(matrix: Array2<f64>) -> Self {
        let row_sums: Array1<f64> = matrix
            .axis_iter(Axis(0))
            .map(|r| compensated_sum(r.iter().copied()))
            .collect();
        let col_sums: Array1<f64> = matrix
            .axis_iter(Axis(1))
            .map(|c| compensated_sum(c.iter().copied()))
            .collect();
        let total = compensated_sum(row_sums.iter().copied());
        Self {
            matrix,
            row_sums,
            col_sums,
            total,
        }
    }

    /// `a bᵀ`.
    pub fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Self {
        let m = a.view().insert_axis(Axis(1)).dot(&b.view().insert_axis(Axis(0)));
        Self::from_trusted(m)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.matrix
    }

    pub fn row_sums(&self) -> &Array1<f64> {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &Array1<f64> {
        &self.col_sums
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn shape(&self) -> (usize, usize) {
        self.matrix.dim()
    }

    /// `(‖P1 − a‖₁, ‖Pᵀ1 − b‖₁)` against arbitrary targets.
    pub fn violations_against(&self, a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
        let (m, n) = self.shape();
        if a.len() != m || b.len() != n {
            return Err(OtError::DimensionMismatch(format!(
                "plan is {m}x{n}, targets have lengths {} and {}",
                a.len(),
                b.len()
            )));
        }
        Ok((
            l1_distance(self.row_sums.as_slice().expect("contiguous"), a),
            l1_distance(self.col_sums.as_slice().expect("contiguous"), b),
        ))
    }
}

/// `P[i][j] = exp((f_i + g_j − C_ij)/γ)`; entries that underflow are flushed to zero.
pub fn plan_from_potentials(problem: &Problem, pot: &DualPotentials) -> Result<TransportPlan> {
    check_shape(problem, pot)?;
    pot.ensure_finite()?;
    let gamma = problem.gamma();
    let mut p = Array2::zeros(problem.shape());
    for ((i, j), out) in p.indexed_iter_mut() {
        let v = ((pot.f[i] + pot.g[j] - problem.cost()[[i, j]]) / gamma).exp();
        if !v.is_finite() {
            return Err(OtError::PlanOverflow { i, j });
        }
        *out = v;
    }
    Ok(TransportPlan::from_trusted(p))
}

/// Like [`plan_from_potentials`] on raw slices, but `-inf` potentials (zero marginal
/// entries) are allowed and give zero rows or columns.
pub fn plan_from_iterate(problem: &Problem, f: &[f64], g: &[f64]) -> Result<TransportPlan> {
    let (m, n) = problem.shape();
    if f.len() != m || g.len() != n {
        return Err(OtError::DimensionMismatch(format!(
            "potentials have lengths {} and {}, problem is {m}x{n}",
            f.len(),
            g.len()
        )));
    }
    for (which, v) in [("f", f), ("g", g)] {
        if let Some(index) = v.iter().position(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(OtError::NonFinitePotential { which, index });
        }
    }
    let gamma = problem.gamma();
    let mut p = Array2::zeros((m, n));
    for ((i, j), out) in p.indexed_iter_mut() {
        let v = ((f[i] + g[j] - problem.cost()[[i, j]]) / gamma).exp();
        if !v.is_finite() {
            return Err(OtError::PlanOverflow { i, j });
        }
        *out = v;
    }
    Ok(TransportPlan::from_trusted(p))
}

/// `h(f, g) = ⟨f, a⟩ + ⟨g, b⟩ − γ Σ_ij exp((f_i + g_j − C_ij)/γ)`.
///
/// The double sum is reduced with a global log-sum-exp and exponentiated once.
pub fn dual_objective(problem: &Problem, pot: &DualPotentials) -> Result<f64> {
    check_shape(problem, pot)?;
    pot.ensure_finite()?;
    let gamma = problem.gamma();
    let c = problem.cost();
    let exponent = |i: usize, j: usize| (pot.f[i] + pot.g[j] - c[[i, j]]) / gamma;
    let (m, n) = problem.shape();
    let mut max = f64::NEG_INFINITY;
    for i in 0..m {
        for j in 0..n {
            max = max.max(exponent(i, j));
        }
    }
    let mut acc = NeumaierSum::new();
    for i in 0..m {
        for j in 0..n {
            acc.add((exponent(i, j) - max).exp());
        }
    }
    let mass = (max + acc.value().ln()).exp();
    if !mass.is_finite() {
        return Err(OtError::DualOverflow);
    }
    let linear = weighted_sum(pot.f_slice(), problem.a_slice())
        + weighted_sum(pot.g_slice(), problem.b_slice());
    Ok(linear - gamma * mass)
}

/// `(‖P1 − a‖₁, ‖Pᵀ1 − b‖₁)`, which are the ℓ1 norms of `∇_f h` and `∇_g h`
/// at the potentials that generated `P`.
pub fn marginal_violations(plan: &TransportPlan, problem: &Problem) -> Result<(f64, f64)> {
    plan.violations_against(problem.a_slice(), problem.b_slice())
}

fn check_shape(problem: &Problem, pot: &DualPotentials) -> Result<()> {
    let (m, n) = problem.shape();
    if pot.f.len() != m || pot.g.len() != n {
        return Err(OtError::DimensionMismatch(format!(
            "potentials have lengths {} and {}, problem is {m}x{n}",
            pot.f.len(),
            pot.g.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn symmetric_2x2() -> Problem {
        Problem::new(
            array![0.5, 0.5],
            array![0.5, 0.5],
            array![[0.0, 1.0], [1.0, 0.0]],
            1.0,
        )
        .unwrap()
    }

    /// Closed form of the symmetric 2×2 optimum: `f = g = log t`, `t² = 0.5/(1 + e⁻¹)`.
    fn symmetric_optimum() -> DualPotentials {
        let t = (0.5 / (1.0 + (-1.0f64).exp())).sqrt();
        DualPotentials::new(array![t.ln(), t.ln()], array![t.ln(), t.ln()])
    }

    #[test]
    fn zero_cost_plan_is_product() {
        let a = array![0.2, 0.3, 0.5];
        let b = array![0.6, 0.1, 0.3];
        let p = Problem::new(a.clone(), b.clone(), Array2::zeros((3, 3)), 0.7).unwrap();
        let plan = plan_from_potentials(&p, &DualPotentials::from_marginals(&p)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(plan.matrix()[[i, j]], a[i] * b[j], epsilon = 1e-15);
            }
        }
        assert_eq!(marginal_violations(&plan, &p).unwrap().0 < 1e-15, true);
    }

    #[test]
    fn symmetric_closed_form_plan() {
        let plan = plan_from_potentials(&symmetric_2x2(), &symmetric_optimum()).unwrap();
        let expected = array![[0.365529, 0.134471], [0.134471, 0.365529]];
        for (x, y) in plan.matrix().iter().zip(expected.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-6);
        }
    }

    #[test]
    fn single_cell_plan() {
        let p = Problem::new(array![1.0], array![1.0], array![[0.0]], 1.0).unwrap();
        let plan = plan_from_potentials(&p, &DualPotentials::new(array![0.0], array![0.0])).unwrap();
        assert_eq!(plan.matrix(), &array![[1.0]]);
    }

    #[test]
    fn plan_overflow_names_entry() {
        let p = symmetric_2x2();
        let pot = DualPotentials::new(array![0.0, 800.0], array![0.0, 0.0]);
        assert_eq!(
            plan_from_potentials(&p, &pot).unwrap_err(),
            OtError::PlanOverflow { i: 1, j: 0 }
        );
    }

    #[test]
    fn dual_objective_hand_values() {
        let p = Problem::new(array![0.5, 0.5], array![0.5, 0.5], Array2::zeros((2, 2)), 1.0).unwrap();
        let h = dual_objective(&p, &DualPotentials::from_marginals(&p)).unwrap();
        assert_abs_diff_eq!(h, -2.0 * 2f64.ln() - 1.0, epsilon = 1e-9);

        let h = dual_objective(&symmetric_2x2(), &symmetric_optimum()).unwrap();
        let closed_form = (0.5 / (1.0 + (-1.0f64).exp())).ln() - 1.0;
        assert_abs_diff_eq!(h, closed_form, epsilon = 1e-12);
    }

    #[test]
    fn dual_objective_is_translation_invariant() {
        let p = Problem::new(
            array![0.2, 0.3, 0.5],
            array![0.6, 0.1, 0.3],
            array![[0.0, 1.5, 2.0], [0.7, 0.0, 1.1], [3.0, 0.4, 0.0]],
            0.4,
        )
        .unwrap();
        let pot = DualPotentials::new(array![0.1, -0.3, 0.2], array![-0.5, 0.05, 0.4]);
        let h = dual_objective(&p, &pot).unwrap();
        let h2 = dual_objective(&p, &pot.translated(3.7)).unwrap();
        assert!((h - h2).abs() <= 1e-10 * h.abs().max(1.0));
    }

    #[test]
    fn dual_objective_rejects_infinite_potentials() {
        let pot = DualPotentials::new(array![f64::NEG_INFINITY, 0.0], array![0.0, 0.0]);
        assert!(matches!(
            dual_objective(&symmetric_2x2(), &pot),
            Err(OtError::NonFinitePotential { which: "f", index: 0 })
        ));
    }

    #[test]
    fn violation_hand_values() {
        let p = Problem::new(array![0.5, 0.5], array![0.5, 0.5], Array2::zeros((2, 2)), 1.0).unwrap();
        let plan = TransportPlan::new(array![[0.5, 0.0], [0.0, 0.25]]).unwrap();
        assert_eq!(marginal_violations(&plan, &p).unwrap(), (0.25, 0.25));
        let doubled = TransportPlan::new(array![[0.5, 0.5], [0.5, 0.5]]).unwrap();
        assert_eq!(marginal_violations(&doubled, &p).unwrap(), (1.0, 1.0));
        let outer = TransportPlan::outer(p.a(), p.b());
        assert_eq!(marginal_violations(&outer, &p).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn violation_dimension_mismatch() {
        let p = symmetric_2x2();
        let plan = TransportPlan::new(array![[1.0]]).unwrap();
        assert!(matches!(
            marginal_violations(&plan, &p),
            Err(OtError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn plan_rejects_negative_entries() {
        assert!(TransportPlan::new(array![[0.5, -0.1]]).is_err());
    }
}
