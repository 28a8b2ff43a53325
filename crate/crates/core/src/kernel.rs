//! The Gibbs kernel in log domain and the reductions every solver shares.

use ndarray::Array2;

use crate::error::{OtError, Result};
use crate::problem::Problem;

/// `logK = −C/γ`, stored row-major. `K` itself is never materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsKernel {
    log_k: Array2<f64>,
}

/// Computes `logK[i][j] = −C[i][j]/γ`.
pub fn build_kernel(problem: &Problem) -> Result<GibbsKernel> {
    let gamma = problem.gamma();
    let mut log_k = Array2::zeros(problem.shape());
    for ((i, j), out) in log_k.indexed_iter_mut() {
        let v = -(problem.cost()[[i, j]] / gamma);
        if !v.is_finite() {
            return Err(OtError::KernelOverflow { i, j });
        }
        *out = v;
    }
    Ok(GibbsKernel { log_k })
}

impl GibbsKernel {
    pub fn log_kernel(&self) -> &Array2<f64> {
        &self.log_k
    }

    pub fn shape(&self) -> (usize, usize) {
        self.log_k.dim()
    }

    #[inline]
    pub(crate) fn row(&self, i: usize) -> &[f64] {
        let cols = self.log_k.ncols();
        &self.log_k.as_slice().expect("standard layout")[i * cols..(i + 1) * cols]
    }

    pub(crate) fn transposed(&self) -> GibbsKernel {
        GibbsKernel {
            log_k: self.log_k.t().as_standard_layout().to_owned(),
        }
    }

    /// `out[i] = log Σ_j exp(col_scaled[j] + logK[i][j])`.
    pub(crate) fn row_lse(&self, col_scaled: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = lse_shifted(self.row(i), col_scaled);
        }
    }

    /// `out[j] = log Σ_i exp(row_scaled[i] + logK[i][j])`, with an exact per-column max shift.
    pub(crate) fn col_lse(&self, row_scaled: &[f64], out: &mut [f64]) {
        let (rows, cols) = self.shape();
        let mut max = vec![f64::NEG_INFINITY; cols];
        for i in 0..rows {
            let s = row_scaled[i];
            for (m, &l) in max.iter_mut().zip(self.row(i)) {
                *m = m.max(s + l);
            }
        }
        let mut sum = vec![0.0; cols];
        for i in 0..rows {
            let s = row_scaled[i];
            if s == f64::NEG_INFINITY {
                continue;
            }
            for ((acc, &l), &m) in sum.iter_mut().zip(self.row(i)).zip(&max) {
                if m.is_finite() {
                    *acc += (s + l - m).exp();
                }
            }
        }
        for ((o, m), s) in out.iter_mut().zip(max).zip(sum) {
            *o = if m.is_finite() { m + s.ln() } else { m };
        }
    }

    /// Row and column sums of `P = diag(e^{f/γ}) K diag(e^{g/γ})`, one exponential per entry.
    /// Underflowed entries flush to zero.
    pub(crate) fn marginal_sums(
        &self,
        row_scaled: &[f64],
        col_scaled: &[f64],
        rows_out: &mut [f64],
        cols_out: &mut [f64],
    ) -> Result<()> {
        cols_out.iter_mut().for_each(|c| *c = 0.0);
        for (i, r) in rows_out.iter_mut().enumerate() {
            let s = row_scaled[i];
            let mut acc = 0.0;
            if s != f64::NEG_INFINITY {
                for ((c, &l), &t) in cols_out.iter_mut().zip(self.row(i)).zip(col_scaled) {
                    let p = (s + t + l).exp();
                    acc += p;
                    *c += p;
                }
            }
            if !acc.is_finite() {
                let j = self.overflow_column(i, s, col_scaled);
                return Err(OtError::PlanOverflow { i, j });
            }
            *r = acc;
        }
        Ok(())
    }

    /// [`Self::row_lse`] and [`Self::marginal_sums`] in a single exponential pass: each plan
    /// entry is recovered as `exp(row_lse shift) · exp(col_scaled[j] + logK[i][j] − max_i)`.
    pub(crate) fn row_lse_and_sums(
        &self,
        row_scaled: &[f64],
        col_scaled: &[f64],
        lse_out: &mut [f64],
        rows_out: &mut [f64],
        cols_out: &mut [f64],
        terms: &mut [f64],
    ) -> Result<()> {
        cols_out.iter_mut().for_each(|c| *c = 0.0);
        for i in 0..rows_out.len() {
            let line = self.row(i);
            let max = line
                .iter()
                .zip(col_scaled)
                .map(|(&l, &t)| l + t)
                .fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                lse_out[i] = max;
                rows_out[i] = 0.0;
                continue;
            }
            let mut sum = 0.0;
            for ((e, &l), &t) in terms.iter_mut().zip(line).zip(col_scaled) {
                *e = (l + t - max).exp();
                sum += *e;
            }
            lse_out[i] = max + sum.ln();
            let s = row_scaled[i];
            if s == f64::NEG_INFINITY {
                rows_out[i] = 0.0;
                continue;
            }
            let scale = (s + max).exp();
            let mut acc = 0.0;
            for (c, &e) in cols_out.iter_mut().zip(terms.iter()) {
                let p = scale * e;
                acc += p;
                *c += p;
            }
            if !acc.is_finite() {
                let j = self.overflow_column(i, s, col_scaled);
                return Err(OtError::PlanOverflow { i, j });
            }
            rows_out[i] = acc;
        }
        Ok(())
    }

    /// Dense plan entries.
    pub(crate) fn plan_matrix(&self, row_scaled: &[f64], col_scaled: &[f64]) -> Result<Array2<f64>> {
        let mut p = Array2::zeros(self.shape());
        for (i, mut row) in p.rows_mut().into_iter().enumerate() {
            let s = row_scaled[i];
            if s == f64::NEG_INFINITY {
                continue;
            }
            for (j, (out, (&l, &t))) in row.iter_mut().zip(self.row(i).iter().zip(col_scaled)).enumerate() {
                let v = (s + t + l).exp();
                if !v.is_finite() {
                    return Err(OtError::PlanOverflow { i, j });
                }
                *out = v;
            }
        }
        Ok(p)
    }

    fn overflow_column(&self, i: usize, s: f64, col_scaled: &[f64]) -> usize {
        self.row(i)
            .iter()
            .zip(col_scaled)
            .position(|(&l, &t)| !(s + t + l).exp().is_finite())
            .unwrap_or(0)
    }
}

#[inline]
fn lse_shifted(log_row: &[f64], shift: &[f64]) -> f64 {
    let max = log_row
        .iter()
        .zip(shift)
        .map(|(&l, &t)| l + t)
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = log_row
        .iter()
        .zip(shift)
        .map(|(&l, &t)| (l + t - max).exp())
        .sum();
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn problem(c: Array2<f64>, gamma: f64) -> Problem {
        let n = c.nrows();
        let u = ndarray::Array1::from_elem(n, 1.0 / n as f64);
        Problem::new(u.clone(), u, c, gamma).unwrap()
    }

    #[test]
    fn kernel_is_negated_scaled_cost() {
        let k = build_kernel(&problem(array![[0.0, 1.0], [1.0, 0.0]], 1.0)).unwrap();
        assert_eq!(k.log_kernel(), &array![[0.0, -1.0], [-1.0, 0.0]]);
        let k = build_kernel(&problem(array![[2.0, 0.0], [0.0, 2.0]], 0.5)).unwrap();
        assert_eq!(k.log_kernel(), &array![[-4.0, 0.0], [0.0, -4.0]]);
        let k = build_kernel(&problem(Array2::zeros((3, 3)), 0.3)).unwrap();
        assert!(k.log_kernel().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn kernel_max_is_minus_min_cost_over_gamma() {
        let c = array![[0.5, 1.0, 3.0], [2.0, 0.25, 1.0], [4.0, 1.0, 0.75]];
        let k = build_kernel(&problem(c, 0.2)).unwrap();
        let max = k.log_kernel().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(max, -0.25 / 0.2);
        assert!(k.log_kernel().iter().all(|&x| x <= 0.0));
    }

    #[test]
    fn fused_pass_matches_separate_reductions() {
        let c = array![[0.5, 1.0, 3.0], [2.0, 0.25, 1.0], [4.0, 1.0, 0.75]];
        let k = build_kernel(&problem(c, 0.3)).unwrap();
        let (fs, gs) = ([0.3, -1.0, 2.0], [-0.5, 1.5, 0.0]);
        let (mut lse, mut rows, mut cols) = ([0.0; 3], [0.0; 3], [0.0; 3]);
        k.row_lse(&gs, &mut lse);
        k.marginal_sums(&fs, &gs, &mut rows, &mut cols).unwrap();
        let (mut lse2, mut rows2, mut cols2, mut terms) = ([0.0; 3], [0.0; 3], [0.0; 3], [0.0; 3]);
        k.row_lse_and_sums(&fs, &gs, &mut lse2, &mut rows2, &mut cols2, &mut terms).unwrap();
        assert_eq!(lse, lse2);
        for (x, y) in rows.iter().chain(&cols).zip(rows2.iter().chain(&cols2)) {
            assert!((x - y).abs() <= 1e-14 * x.abs());
        }
    }

    #[test]
    fn kernel_overflow_names_entry() {
        let c = array![[0.0, 1e300], [1.0, 0.0]];
        let err = build_kernel(&problem(c, 1e-10)).unwrap_err();
        assert_eq!(err, OtError::KernelOverflow { i: 0, j: 1 });
    }

    #[test]
    fn column_and_row_reductions_agree_with_transpose() {
        let c = array![[0.5, 1.0, 3.0], [2.0, 0.25, 1.0], [4.0, 1.0, 0.75]];
        let k = build_kernel(&problem(c, 0.3)).unwrap();
        let s = [0.3, -1.0, 2.0];
        let mut via_cols = [0.0; 3];
        let mut via_rows = [0.0; 3];
        k.col_lse(&s, &mut via_cols);
        k.transposed().row_lse(&s, &mut via_rows);
        for (x, y) in via_cols.iter().zip(&via_rows) {
            assert!((x - y).abs() < 1e-13);
        }
    }
}
