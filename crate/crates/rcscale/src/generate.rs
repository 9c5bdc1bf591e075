//! Test-instance generators for the CLI and benchmark harness.

use crate::error::Result;
use crate::mm::read_matrix_market_path;
use crate::problem::ScalingInstance;
use crate::sparse::CsrMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

#[derive(Debug, Clone)]
pub enum InstanceKind {
    /// Dense entries drawn uniformly from [lo, hi], then row-normalized.
    UniformPositive { lo: f64, hi: f64 },
    /// Planted permutation support plus random extras at the given
    /// density; always asymptotically scalable.
    SparseScalable { density: f64 },
    /// The diameter-tight square upper-triangular instance with unit
    /// diagonal and unit marginals.
    UpperTriangularHard,
    /// Load the support from a MatrixMarket file.
    Pattern(PathBuf),
}

/// Marginals: unit vectors when square, otherwise r = n, c = d so the
/// masses match.
fn default_marginals(d: usize, n: usize) -> (Vec<u64>, Vec<u64>) {
    if d == n {
        (vec![1; d], vec![1; n])
    } else {
        (vec![n as u64; d], vec![d as u64; n])
    }
}

pub fn generate(kind: &InstanceKind, n: usize, d: usize, seed: u64) -> Result<ScalingInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        InstanceKind::UniformPositive { lo, hi } => {
            let rows: Vec<Vec<f64>> =
                (0..d).map(|_| (0..n).map(|_| rng.gen_range(*lo..=*hi)).collect()).collect();
            let (r, c) = default_marginals(d, n);
            let a = CsrMatrix::from_dense(&rows)?;
            Ok(ScalingInstance::from_raw(a, r, c)?.0)
        }
        InstanceKind::SparseScalable { density } => {
            assert_eq!(d, n, "planted-permutation support needs a square matrix");
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let mut triplets: Vec<(usize, usize, f64)> =
                (0..n).map(|i| (i, perm[i], rng.gen_range(0.5..1.0))).collect();
            for i in 0..n {
                for j in 0..n {
                    if j != perm[i] && rng.gen_bool(*density) {
                        triplets.push((i, j, rng.gen_range(0.1..1.0)));
                    }
                }
            }
            let (r, c) = default_marginals(d, n);
            let a = CsrMatrix::from_triplets(d, n, triplets)?;
            Ok(ScalingInstance::from_raw(a, r, c)?.0)
        }
        InstanceKind::UpperTriangularHard => {
            assert_eq!(d, n);
            let mut triplets = Vec::new();
            for i in 0..n {
                for j in i..n {
                    triplets.push((i, j, 1.0));
                }
            }
            let a = CsrMatrix::from_triplets(n, n, triplets)?;
            Ok(ScalingInstance::from_raw(a, vec![1; n], vec![1; n])?.0)
        }
        InstanceKind::Pattern(path) => {
            let a = read_matrix_market_path(path)?;
            let (r, c) = default_marginals(a.nrows(), a.ncols());
            Ok(ScalingInstance::from_raw(a, r, c)?.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{check_asymptotic_scalability, Feasibility};

    #[test]
    fn upper_triangular_2_matches_reference_shape() {
        let inst = generate(&InstanceKind::UpperTriangularHard, 2, 2, 0).unwrap();
        assert_eq!(inst.a().to_dense(), vec![vec![1.0, 1.0], vec![0.0, 1.0]]);
        assert_eq!(inst.r(), &[1.0, 1.0]);
    }

    #[test]
    fn uniform_all_ones_normalizes_to_ones() {
        let inst =
            generate(&InstanceKind::UniformPositive { lo: 1.0, hi: 1.0 }, 2, 2, 7).unwrap();
        assert_eq!(inst.a().to_dense(), vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
    }

    #[test]
    fn sparse_scalable_is_always_feasible() {
        for seed in 0..100 {
            let inst =
                generate(&InstanceKind::SparseScalable { density: 0.1 }, 12, 12, seed).unwrap();
            let verdict = check_asymptotic_scalability(&inst);
            assert_eq!(verdict.status, Feasibility::AsymptoticallyScalable, "seed {seed}");
        }
    }
}
