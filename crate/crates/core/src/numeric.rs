//! Small numerical kernels shared by the solvers.

/// `log Σ exp(x_i)` with the exact max shift.
///
/// Returns `-inf` for an empty slice or when every entry is `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// An infinite running sum is returned as is; the compensation would be NaN.
    pub fn value(&self) -> f64 {
        if self.sum.is_infinite() {
            self.sum
        } else {
            self.sum + self.compensation
        }
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = NeumaierSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// `‖x − y‖₁` with compensated accumulation.
pub fn l1_distance(x: &[f64], y: &[f64]) -> f64 {
    compensated_sum(x.iter().zip(y).map(|(a, b)| (a - b).abs()))
}

/// `⟨x, w⟩` skipping terms whose weight is exactly zero, so `-inf · 0` contributes nothing.
pub(crate) fn weighted_sum(x: &[f64], w: &[f64]) -> f64 {
    compensated_sum(
        x.iter()
            .zip(w)
            .filter(|(_, &wi)| wi != 0.0)
            .map(|(xi, wi)| xi * wi),
    )
}
