//! Partial maximizers of the dual objective and the oscillation diagnostics built on them.

use ndarray::Array1;

use crate::error::{OtError, Result};
use crate::kernel::build_kernel;
use crate::plan::DualPotentials;
use crate::problem::Problem;

/// `argmax_g h(f, g)`: `g_j = γ log b_j − γ log Σ_i exp((f_i − C_ij)/γ)`.
///
/// Coordinates with `b_j = 0` come back as `-inf`.
pub fn c_gamma_transform(problem: &Problem, f: &[f64]) -> Result<Array1<f64>> {
    let (m, n) = problem.shape();
    check_input("f", f, m)?;
    let gamma = problem.gamma();
    let kernel = build_kernel(problem)?;
    let scaled: Vec<f64> = f.iter().map(|x| x / gamma).collect();
    let mut lse = vec![0.0; n];
    kernel.col_lse(&scaled, &mut lse);
    Ok(Array1::from_iter(
        problem.b().iter().zip(&lse).map(|(&b, &l)| gamma * b.ln() - gamma * l),
    ))
}

/// `argmax_f h(f, g)`: `f_i = γ log a_i − γ log Σ_j exp((g_j − C_ij)/γ)`.
pub fn c_gamma_bar_transform(problem: &Problem, g: &[f64]) -> Result<Array1<f64>> {
    let (m, n) = problem.shape();
    check_input("g", g, n)?;
    let gamma = problem.gamma();
    let kernel = build_kernel(problem)?;
    let scaled: Vec<f64> = g.iter().map(|x| x / gamma).collect();
    let mut lse = vec![0.0; m];
    kernel.row_lse(&scaled, &mut lse);
    Ok(Array1::from_iter(
        problem.a().iter().zip(&lse).map(|(&a, &l)| gamma * a.ln() - gamma * l),
    ))
}

/// `max(x − reference) − min(x − reference)`.
pub fn oscillation(x: &[f64], reference: &[f64]) -> Result<f64> {
    if x.len() != reference.len() {
        return Err(OtError::DimensionMismatch(format!(
            "oscillation of lengths {} and {}",
            x.len(),
            reference.len()
        )));
    }
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    for (&xi, &ri) in x.iter().zip(reference) {
        let d = xi - ri;
        max = max.max(d);
        min = min.min(d);
    }
    Ok(if x.is_empty() { 0.0 } else { max - min })
}

/// `(osc(f − γ log a), osc(g − γ log b))`; both are at most `max(C) − min(C)` for transforms
/// and for Sinkhorn iterates from the second one on.
pub fn equicontinuity_check(problem: &Problem, pot: &DualPotentials) -> Result<(f64, f64)> {
    let (log_a, log_b) = problem.log_marginals();
    Ok((
        oscillation(pot.f_slice(), &log_a)?,
        oscillation(pot.g_slice(), &log_b)?,
    ))
}

fn check_input(which: &'static str, v: &[f64], len: usize) -> Result<()> {
    if v.len() != len {
        return Err(OtError::DimensionMismatch(format!(
            "`{which}` has length {}, expected {len}",
            v.len()
        )));
    }
    if let Some(index) = v.iter().position(|x| !x.is_finite()) {
        return Err(OtError::NonFinitePotential { which, index });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::dual_objective;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, gamma: f64) -> Problem {
        let mut marginal = || {
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
            let s: f64 = v.iter().sum();
            Array1::from_iter(v.iter().map(|x| x / s))
        };
        let a = marginal();
        let b = marginal();
        let c = Array2::from_shape_fn((n, n), |_| rng.random::<f64>() * 2.0);
        Problem::new(a, b, c, gamma).unwrap()
    }

    #[test]
    fn zero_cost_transform_returns_log_marginals() {
        let p = Problem::new(array![0.2, 0.8], array![0.6, 0.4], Array2::zeros((2, 2)), 0.3).unwrap();
        let (fa, gb) = p.log_marginals();
        let g = c_gamma_transform(&p, &fa).unwrap();
        let f = c_gamma_bar_transform(&p, &gb).unwrap();
        for j in 0..2 {
            assert!((g[j] - gb[j]).abs() < 1e-14);
            assert!((f[j] - fa[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn tightness_instance_reaches_cost_range() {
        let m = 3.0;
        for gamma in [0.05, 1.0, 7.0] {
            let p = Problem::new(array![0.5, 0.5], array![0.5, 0.5], array![[m, 0.0], [m, 0.0]], gamma)
                .unwrap();
            let g = c_gamma_transform(&p, &[0.0, 0.0]).unwrap();
            let (_, gb) = p.log_marginals();
            assert!((g[0] - gb[0] - (m - gamma * 2f64.ln())).abs() < 1e-12);
            assert!((g[1] - gb[1] + gamma * 2f64.ln()).abs() < 1e-12);
            assert!((oscillation(g.as_slice().unwrap(), &gb).unwrap() - m).abs() < 1e-10);
        }
    }

    #[test]
    fn transform_maximizes_partial_dual() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_problem(&mut rng, 5, 0.4);
        let f: Vec<f64> = (0..5).map(|_| rng.random::<f64>() - 0.5).collect();
        let g_star = c_gamma_transform(&p, &f).unwrap();
        let pot = DualPotentials::new(Array1::from(f.clone()), g_star);
        let best = dual_objective(&p, &pot).unwrap();
        for _ in 0..100 {
            let g: Array1<f64> = (0..5).map(|_| rng.random::<f64>() * 4.0 - 3.0).collect();
            let h = dual_objective(&p, &DualPotentials::new(Array1::from(f.clone()), g)).unwrap();
            assert!(h < best);
        }
    }

    #[test]
    fn bar_transform_is_transpose_of_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = random_problem(&mut rng, 4, 0.3);
        let pt = Problem::new(p.b().clone(), p.a().clone(), p.cost().t().to_owned(), 0.3).unwrap();
        let g = [0.1, -0.4, 0.7, 0.0];
        let x = c_gamma_bar_transform(&p, &g).unwrap();
        let y = c_gamma_transform(&pt, &g).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn symmetric_optimum_is_a_fixed_point() {
        let p = Problem::new(array![0.5, 0.5], array![0.5, 0.5], array![[0.0, 1.0], [1.0, 0.0]], 1.0)
            .unwrap();
        let t = (0.5 / (1.0 + (-1.0f64).exp())).sqrt().ln();
        let f = c_gamma_bar_transform(&p, &[t, t]).unwrap();
        assert!((f[0] - t).abs() < 1e-9 && (f[1] - t).abs() < 1e-9);
    }

    #[test]
    fn oscillation_hand_values() {
        assert_eq!(oscillation(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(oscillation(&[3.0, 1.0, 2.0], &[0.0, 0.0, 0.0]).unwrap(), 2.0);
        assert_eq!(oscillation(&[8.0, 6.0, 7.0], &[0.0, 0.0, 0.0]).unwrap(), 2.0);
        assert!(oscillation(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn constant_cost_transforms_have_zero_oscillation() {
        let p = Problem::new(array![0.3, 0.7], array![0.4, 0.6], Array2::from_elem((2, 2), 2.5), 0.2)
            .unwrap();
        let g = c_gamma_transform(&p, &[0.3, -1.2]).unwrap();
        let f = c_gamma_bar_transform(&p, g.as_slice().unwrap()).unwrap();
        let pot = DualPotentials::new(f, g);
        let (of, og) = equicontinuity_check(&p, &pot).unwrap();
        assert!(of < 1e-12 && og < 1e-12);
    }

    #[test]
    fn transform_bound_and_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let gamma = 0.02 + rng.random::<f64>();
            let p = random_problem(&mut rng, 6, gamma);
            let f: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
            let g = c_gamma_transform(&p, &f).unwrap();
            let (log_a, log_b) = p.log_marginals();
            let range = p.cost_range();
            assert!(oscillation(g.as_slice().unwrap(), &log_b).unwrap() <= range + 1e-9);
            let fb = c_gamma_bar_transform(&p, g.as_slice().unwrap()).unwrap();
            assert!(oscillation(fb.as_slice().unwrap(), &log_a).unwrap() <= range + 1e-9);

            let shifted: Vec<f64> = f.iter().map(|x| x + 1.7).collect();
            let g2 = c_gamma_transform(&p, &shifted).unwrap();
            for (x, y) in g.iter().zip(&g2) {
                assert!((x - 1.7 - y).abs() <= 1e-10 * x.abs().max(1.0));
            }

            let before = dual_objective(&p, &DualPotentials::new(Array1::from(f.clone()), g.clone())).unwrap();
            let after = dual_objective(&p, &DualPotentials::new(fb, g)).unwrap();
            assert!(after >= before - 1e-12 * before.abs().max(1.0));
        }
    }
}
