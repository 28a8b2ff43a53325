//! Removing zero marginal entries before solving, and putting them back afterwards.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{OtError, Result};
use crate::plan::TransportPlan;
use crate::problem::{Instance, Problem};

/// Rows with `a_i > 0` and columns with `b_j > 0`, in increasing order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompactionMap {
    kept_rows: Vec<usize>,
    kept_cols: Vec<usize>,
}

impl CompactionMap {
    pub fn new(kept_rows: Vec<usize>, kept_cols: Vec<usize>) -> Result<Self> {
        for (name, v) in [("rows", &kept_rows), ("cols", &kept_cols)] {
            if v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(OtError::InvalidParameter(format!(
                    "kept {name} must be strictly increasing"
                )));
            }
        }
        Ok(Self {
            kept_rows,
            kept_cols,
        })
    }

    pub fn identity(rows: usize, cols: usize) -> Self {
        Self {
            kept_rows: (0..rows).collect(),
            kept_cols: (0..cols).collect(),
        }
    }

    pub fn kept_rows(&self) -> &[usize] {
        &self.kept_rows
    }

    pub fn kept_cols(&self) -> &[usize] {
        &self.kept_cols
    }

    pub fn is_identity(&self, n: usize) -> bool {
        self.kept_rows.len() == n
            && self.kept_cols.len() == n
            && self.kept_rows.iter().enumerate().all(|(k, &i)| k == i)
            && self.kept_cols.iter().enumerate().all(|(k, &j)| k == j)
    }

    /// Scatters a compact vector back to length `n`, filling dropped slots with `fill`.
    pub fn embed_rows(&self, compact: &[f64], n: usize, fill: f64) -> Array1<f64> {
        scatter(&self.kept_rows, compact, n, fill)
    }

    pub fn embed_cols(&self, compact: &[f64], n: usize, fill: f64) -> Array1<f64> {
        scatter(&self.kept_cols, compact, n, fill)
    }
}

fn scatter(kept: &[usize], compact: &[f64], n: usize, fill: f64) -> Array1<f64> {
    let mut out = Array1::from_elem(n, fill);
    for (&k, &v) in kept.iter().zip(compact) {
        out[k] = v;
    }
    out
}

/// Drops zero entries of `a` and `b` together with the matching cost rows and columns.
pub fn compact_zeros(problem: &Problem) -> Result<(Problem, CompactionMap)> {
    let (inst, map) = compact_instance(problem.instance())?;
    Ok((Problem::from_instance(inst, problem.gamma())?, map))
}

pub fn compact_instance(instance: &Instance) -> Result<(Instance, CompactionMap)> {
    let kept_rows: Vec<usize> = positive_indices(instance.a());
    let kept_cols: Vec<usize> = positive_indices(instance.b());
    if kept_rows.is_empty() {
        return Err(OtError::AllZeroMarginal { which: "a" });
    }
    if kept_cols.is_empty() {
        return Err(OtError::AllZeroMarginal { which: "b" });
    }
    let map = CompactionMap {
        kept_rows,
        kept_cols,
    };
    if map.is_identity(instance.n()) {
        return Ok((instance.clone(), map));
    }
    let a = Array1::from_iter(map.kept_rows.iter().map(|&i| instance.a()[i]));
    let b = Array1::from_iter(map.kept_cols.iter().map(|&j| instance.b()[j]));
    let cost = Array2::from_shape_fn((map.kept_rows.len(), map.kept_cols.len()), |(r, c)| {
        instance.cost()[[map.kept_rows[r], map.kept_cols[c]]]
    });
    Ok((Instance::new_rectangular(a, b, cost)?, map))
}

fn positive_indices(v: &Array1<f64>) -> Vec<usize> {
    v.iter()
        .enumerate()
        .filter(|(_, &x)| x > 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Places a compact plan into an `n × n` matrix of zeros.
pub fn embed_plan(compact: &TransportPlan, map: &CompactionMap, n: usize) -> Result<TransportPlan> {
    if compact.shape() != (map.kept_rows.len(), map.kept_cols.len()) {
        return Err(OtError::DimensionMismatch(format!(
            "compact plan is {:?}, map keeps {} rows and {} columns",
            compact.shape(),
            map.kept_rows.len(),
            map.kept_cols.len()
        )));
    }
    if let Some(&bad) = map
        .kept_rows
        .iter()
        .chain(&map.kept_cols)
        .find(|&&k| k >= n)
    {
        return Err(OtError::InvalidParameter(format!(
            "kept index {bad} is out of range for n = {n}"
        )));
    }
    let mut full = Array2::zeros((n, n));
    for (r, &i) in map.kept_rows.iter().enumerate() {
        for (c, &j) in map.kept_cols.iter().enumerate() {
            full[[i, j]] = compact.matrix()[[r, c]];
        }
    }
    Ok(TransportPlan::from_trusted(full))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::marginal_violations;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn drops_zero_rows_and_columns() {
        let c = Array2::from_shape_fn((3, 3), |(i, j)| (i * 3 + j) as f64);
        let p = Problem::new(array![0.5, 0.0, 0.5], array![1.0, 0.0, 0.0], c, 1.0).unwrap();
        let (cp, map) = compact_zeros(&p).unwrap();
        assert_eq!(map.kept_rows(), &[0, 2]);
        assert_eq!(map.kept_cols(), &[0]);
        assert_eq!(cp.cost(), &array![[0.0], [6.0]]);
        assert_eq!(cp.a(), &array![0.5, 0.5]);
    }

    #[test]
    fn positive_marginals_are_untouched() {
        let p = Problem::new(array![0.5, 0.5], array![0.3, 0.7], array![[0.0, 1.0], [1.0, 0.0]], 1.0)
            .unwrap();
        let (cp, map) = compact_zeros(&p).unwrap();
        assert!(map.is_identity(2));
        assert_eq!(cp, p);
    }

    #[test]
    fn embed_places_entries() {
        let map = CompactionMap::new(vec![0], vec![1]).unwrap();
        let plan = embed_plan(&TransportPlan::new(array![[1.0]]).unwrap(), &map, 2).unwrap();
        assert_eq!(plan.matrix(), &array![[0.0, 1.0], [0.0, 0.0]]);

        let id = CompactionMap::identity(2, 2);
        let p = TransportPlan::new(array![[0.1, 0.2], [0.3, 0.4]]).unwrap();
        assert_eq!(embed_plan(&p, &id, 2).unwrap(), p);
    }

    #[test]
    fn embed_rejects_out_of_range() {
        let map = CompactionMap::new(vec![3], vec![0]).unwrap();
        assert!(embed_plan(&TransportPlan::new(array![[1.0]]).unwrap(), &map, 2).is_err());
        assert!(CompactionMap::new(vec![1, 1], vec![0]).is_err());
    }

    #[test]
    fn embedding_preserves_violations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = 6;
            let mut a: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let mut b: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            a[rng.random_range(0..n)] = 0.0;
            b[rng.random_range(0..n)] = 0.0;
            b[rng.random_range(0..n)] = 0.0;
            let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
            let a = Array1::from_iter(a.iter().map(|x| x / sa));
            let b = Array1::from_iter(b.iter().map(|x| x / sb));
            let c = Array2::from_shape_fn((n, n), |_| rng.random::<f64>());
            let p = Problem::new(a, b, c, 0.5).unwrap();
            let (cp, map) = compact_zeros(&p).unwrap();
            let (m1, m2) = cp.shape();
            let compact =
                TransportPlan::new(Array2::from_shape_fn((m1, m2), |_| rng.random::<f64>() * 0.1))
                    .unwrap();
            let full = embed_plan(&compact, &map, n).unwrap();
            let (r1, c1) = marginal_violations(&compact, &cp).unwrap();
            let (r2, c2) = marginal_violations(&full, &p).unwrap();
            assert!((r1 - r2).abs() <= 1e-12 && (c1 - c2).abs() <= 1e-12);
            for i in 0..n {
                if p.a()[i] == 0.0 {
                    assert!(full.matrix().row(i).iter().all(|&x| x == 0.0));
                }
                if p.b()[i] == 0.0 {
                    assert!(full.matrix().column(i).iter().all(|&x| x == 0.0));
                }
            }
        }
    }
}
