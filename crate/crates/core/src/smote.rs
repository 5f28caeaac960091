//! SMOTE: synthetic minority rows interpolated toward k-nearest minority
//! neighbours.
//!
//! Each synthetic row is `x_i + (x_j − x_i) ⊙ r` where `x_j` is a uniformly
//! chosen member of the k-neighbour set of `x_i` and `r` is a fresh vector of
//! independent uniform(0,1) draws, one per coordinate. Minority rows are
//! visited round-robin until the requested number of rows exists, so targets
//! that are not a multiple of the minority size are handled exactly.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::write_rows;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng;

pub const DEFAULT_K: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoteConfig {
    pub k: usize,
    /// Synthetic rows to produce (majority − minority when balancing).
    pub target_count: usize,
    pub seed: u64,
}

impl SmoteConfig {
    pub fn new(target_count: usize, seed: u64) -> Self {
        SmoteConfig {
            k: DEFAULT_K,
            target_count,
            seed,
        }
    }
}

/// Synthetic rows with the `(row, neighbour)` pair each one came from.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticBatch {
    pub samples: Matrix,
    pub parents: Vec<(usize, usize)>,
}

impl SyntheticBatch {
    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn write_csv(&self, path: &Path, feature_names: &[String]) -> Result<()> {
        let mut header = feature_names.to_vec();
        header.push("parent".into());
        header.push("neighbor".into());
        let rows = self
            .samples
            .iter_rows()
            .zip(&self.parents)
            .map(|(r, (i, j))| {
                let mut cells: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
                cells.push(i.to_string());
                cells.push(j.to_string());
                cells
            });
        write_rows(path, &header, rows)
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` rows of `x` closest to row `query` (Euclidean), the
/// query itself excluded. Ties go to the lower row index. With fewer than
/// `k + 1` rows every other row is returned.
pub fn knn(query: usize, x: &Matrix, k: usize) -> Result<Vec<usize>> {
    if x.rows() < 2 {
        return Err(Error::TooFewRows {
            context: "knn",
            needed: 2,
            found: x.rows(),
        });
    }
    if query >= x.rows() {
        return Err(Error::shape("knn (query index)", format!("< {}", x.rows()), query));
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let q = x.row(query);
    let mut candidates: Vec<(f64, usize)> = (0..x.rows())
        .filter(|&i| i != query)
        .map(|i| (squared_distance(q, x.row(i)), i))
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    candidates.truncate(k);
    Ok(candidates.into_iter().map(|(_, i)| i).collect())
}

/// `x_i + (x_j − x_i) ⊙ r` for a given gap vector `r`.
pub fn interpolate_with(x_i: &[f64], x_j: &[f64], r: &[f64]) -> Vec<f64> {
    x_i.iter()
        .zip(x_j)
        .zip(r)
        .map(|((a, b), t)| a + (b - a) * t)
        .collect()
}

/// Draws one synthetic row toward a random neighbour; returns the chosen
/// neighbour's position in `neighbors` and the row.
fn draw_one<R: Rng + ?Sized>(x_i: &[f64], neighbors: &[&[f64]], rng: &mut R) -> (usize, Vec<f64>) {
    let a = rng.random_range(0..neighbors.len());
    let r: Vec<f64> = (0..x_i.len()).map(|_| rng.random::<f64>()).collect();
    (a, interpolate_with(x_i, neighbors[a], &r))
}

/// `count` synthetic rows around `x_i`, each toward a uniformly chosen
/// member of `neighbors`.
pub fn interpolate<R: Rng + ?Sized>(
    x_i: &[f64],
    neighbors: &[&[f64]],
    count: usize,
    rng: &mut R,
) -> Result<Vec<(usize, Vec<f64>)>> {
    if neighbors.is_empty() {
        return Err(Error::Config("interpolate needs at least one neighbour".into()));
    }
    if let Some(bad) = neighbors.iter().find(|n| n.len() != x_i.len()) {
        return Err(Error::shape("interpolate (neighbour width)", x_i.len(), bad.len()));
    }
    Ok((0..count).map(|_| draw_one(x_i, neighbors, rng)).collect())
}

/// Generates exactly `cfg.target_count` synthetic rows from `minority`.
pub fn smote_oversample(minority: &Matrix, cfg: &SmoteConfig) -> Result<SyntheticBatch> {
    let d = minority.cols();
    if cfg.target_count == 0 {
        return Ok(SyntheticBatch {
            samples: Matrix::zeros(0, d),
            parents: Vec::new(),
        });
    }
    let n = minority.rows();
    if n < 2 {
        return Err(Error::TooFewRows {
            context: "SMOTE minority class",
            needed: 2,
            found: n,
        });
    }
    let neighbour_sets: Vec<Vec<usize>> = (0..n)
        .map(|i| knn(i, minority, cfg.k))
        .collect::<Result<_>>()?;
    let mut rng = rng::stream(cfg.seed);
    let mut data = Vec::with_capacity(cfg.target_count * d);
    let mut parents = Vec::with_capacity(cfg.target_count);
    for s in 0..cfg.target_count {
        let i = s % n;
        let set = &neighbour_sets[i];
        let rows: Vec<&[f64]> = set.iter().map(|&j| minority.row(j)).collect();
        let (a, sample) = draw_one(minority.row(i), &rows, &mut rng);
        data.extend_from_slice(&sample);
        parents.push((i, set[a]));
    }
    Ok(SyntheticBatch {
        samples: Matrix::from_vec(cfg.target_count, d, data)?,
        parents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line() -> Matrix {
        Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]]).unwrap()
    }

    #[test]
    fn nearest_by_inspection() {
        assert_eq!(knn(0, &line(), 1).unwrap(), vec![1]);
        assert_eq!(knn(2, &line(), 2).unwrap(), vec![1, 0]);
    }

    #[test]
    fn small_class_reduces_k() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [5.0]]).unwrap();
        assert_eq!(knn(0, &x, 5).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let x = Matrix::from_rows(&[[0.0], [-1.0], [1.0], [1.0]]).unwrap();
        assert_eq!(knn(0, &x, 2).unwrap(), vec![1, 2]);
    }

    #[test]
    fn single_row_rejected() {
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(knn(0, &x, 1).is_err());
        assert!(smote_oversample(&x, &SmoteConfig::new(3, 0)).is_err());
    }

    #[test]
    fn forced_gap_formula() {
        assert_eq!(interpolate_with(&[0.0, 0.0], &[1.0, 2.0], &[0.5, 0.5]), vec![0.5, 1.0]);
    }

    #[test]
    fn duplicate_parents_reproduce_the_point() {
        let mut r = rng::stream(3);
        let p = [0.25, 0.75];
        let out = interpolate(&p, &[&p], 20, &mut r).unwrap();
        assert!(out.iter().all(|(_, s)| s.as_slice() == p));
        assert!(interpolate(&p, &[], 1, &mut r).is_err());
    }

    #[test]
    fn unit_segment_mean_is_one_half() {
        let mut r = rng::stream(99);
        let out = interpolate(&[0.0], &[&[1.0]], 1000, &mut r).unwrap();
        let mean = out.iter().map(|(_, s)| s[0]).sum::<f64>() / 1000.0;
        assert!((0.45..=0.55).contains(&mean), "{mean}");
    }

    #[test]
    fn zero_target_is_empty() {
        let b = smote_oversample(&line(), &SmoteConfig::new(0, 1)).unwrap();
        assert!(b.is_empty());
        assert_eq!(b.samples.cols(), 2);
    }

    #[test]
    fn identical_minority_rows() {
        let x = Matrix::from_rows(&[[0.4, 0.1], [0.4, 0.1]]).unwrap();
        let b = smote_oversample(&x, &SmoteConfig::new(7, 5)).unwrap();
        assert_eq!(b.len(), 7);
        assert!(b.samples.iter_rows().all(|r| r == [0.4, 0.1]));
    }

    #[test]
    fn round_robin_parents() {
        let b = smote_oversample(&line(), &SmoteConfig::new(7, 2)).unwrap();
        let firsts: Vec<usize> = b.parents.iter().map(|p| p.0).collect();
        assert_eq!(firsts, vec![0, 1, 2, 0, 1, 2, 0]);
    }

    fn minority_strategy() -> impl Strategy<Value = Matrix> {
        (2usize..12, 1usize..5).prop_flat_map(|(n, d)| {
            prop::collection::vec(-5.0f64..5.0, n * d)
                .prop_map(move |v| Matrix::from_vec(n, d, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn smote_invariants(x in minority_strategy(), k in 1usize..7, mult in 0usize..4, seed in 0u64..500) {
            let target = mult * x.rows();
            let cfg = SmoteConfig { k, target_count: target, seed };
            let b = smote_oversample(&x, &cfg).unwrap();
            prop_assert_eq!(b.samples.rows(), target);
            prop_assert_eq!(b.parents.len(), target);
            for (s, &(i, j)) in b.samples.iter_rows().zip(&b.parents) {
                prop_assert!(knn(i, &x, k).unwrap().contains(&j));
                for (c, v) in s.iter().enumerate() {
                    let (a, bb) = (x[(i, c)], x[(j, c)]);
                    prop_assert!(*v >= a.min(bb) - 1e-9 && *v <= a.max(bb) + 1e-9);
                }
            }
            prop_assert_eq!(smote_oversample(&x, &cfg).unwrap(), b);
        }
    }
}
