//! KL divergence and the scalar mismatch `ρ(x, y) = y − x + x log(x/y)`.

use crate::error::{OtError, Result};
use crate::numeric::{compensated_sum, l1_distance};

/// `KL(x‖y) = Σ x_i log(x_i/y_i)` with `0·log 0 = 0`.
///
/// Returns `+inf` when some `y_i = 0` while `x_i > 0`.
pub fn kl_divergence(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let mut terms = Vec::with_capacity(x.len());
    for (&xi, &yi) in x.iter().zip(y) {
        if xi == 0.0 {
            continue;
        }
        if yi == 0.0 {
            return Ok(f64::INFINITY);
        }
        terms.push(xi * (xi / yi).ln());
    }
    Ok(compensated_sum(terms))
}

/// `ρ(x, y) = y − x + x log(x/y)`, with `ρ(0, y) = y` and `ρ(x > 0, 0) = +inf`.
pub fn rho(x: f64, y: f64) -> Result<f64> {
    for v in [x, y] {
        if !(v >= 0.0) || v.is_infinite() {
            return Err(OtError::NegativeInput(v));
        }
    }
    Ok(rho_unchecked(x, y))
}

#[inline]
pub(crate) fn rho_unchecked(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        return y;
    }
    if y == 0.0 || y.is_infinite() {
        return f64::INFINITY;
    }
    let ratio = y / x;
    if (0.5..=2.0).contains(&ratio) {
        // Near x = y the direct form cancels catastrophically.
        let d = (y - x) / x;
        (x * (d - d.ln_1p())).max(0.0)
    } else {
        (y - x + x * (x.ln() - y.ln())).max(0.0)
    }
}

/// `(‖x − y‖₁², 7·Σρ(x_i, y_i))`; the first never exceeds the second while `Σρ ≤ 1`.
pub fn generalized_pinsker_check(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    check_pair(x, y)?;
    let l1 = l1_distance(x, y);
    let rho_sum = compensated_sum(x.iter().zip(y).map(|(&xi, &yi)| rho_unchecked(xi, yi)));
    Ok((l1 * l1, 7.0 * rho_sum))
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(OtError::DimensionMismatch(format!(
            "vectors have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if let Some(&v) = x.iter().chain(y).find(|v| !(**v >= 0.0) || v.is_infinite()) {
        return Err(OtError::NegativeInput(v));
    }
    Ok(())
}
