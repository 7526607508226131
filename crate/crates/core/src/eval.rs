//! Misclassification error minimized over label permutations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CubtError, Result};
use crate::ClusterResult;

/// Largest padded size solved by enumerating permutations.
pub const EXHAUSTIVE_MAX: usize = 8;

/// Counts of (true group, predicted cluster) pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// Sorted distinct true labels (rows).
    pub true_labels: Vec<usize>,
    /// Sorted distinct predicted labels (columns).
    pub pred_labels: Vec<usize>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(truth: &[usize], pred: &[usize]) -> Result<ConfusionMatrix> {
        if truth.len() != pred.len() {
            return Err(CubtError::LengthMismatch(truth.len(), pred.len()));
        }
        if truth.is_empty() {
            return Err(CubtError::EmptyLabels);
        }
        let index = |labels: &[usize]| -> BTreeMap<usize, usize> {
            let mut m: BTreeMap<usize, usize> = labels.iter().map(|&l| (l, 0)).collect();
            for (k, v) in m.values_mut().enumerate() {
                *v = k;
            }
            m
        };
        let (ri, ci) = (index(truth), index(pred));
        let mut counts = vec![vec![0u64; ci.len()]; ri.len()];
        for (t, p) in truth.iter().zip(pred) {
            counts[ri[t]][ci[p]] += 1;
        }
        Ok(ConfusionMatrix {
            true_labels: ri.into_keys().collect(),
            pred_labels: ci.into_keys().collect(),
            counts,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Square matrix of side `max(R, K)` padded with zeros.
    pub fn padded(&self) -> Vec<Vec<u64>> {
        let s = self.true_labels.len().max(self.pred_labels.len());
        let mut m = vec![vec![0u64; s]; s];
        for (r, row) in self.counts.iter().enumerate() {
            m[r][..row.len()].copy_from_slice(row);
        }
        m
    }
}

/// Maximum of `sum_i m[i][perm(i)]` by enumerating every permutation
/// (Heap's algorithm).
pub fn max_agreement_exhaustive(m: &[Vec<u64>]) -> u64 {
    let s = m.len();
    let mut perm: Vec<usize> = (0..s).collect();
    let score = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| m[i][j]).sum::<u64>();
    let mut best = score(&perm);
    let mut c = vec![0usize; s];
    let mut i = 1;
    while i < s {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.max(score(&perm));
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// Maximum-weight perfect matching on a square matrix with the Hungarian
/// method (shortest augmenting paths with potentials, O(s^3)).
pub fn max_agreement_hungarian(m: &[Vec<u64>]) -> u64 {
    let s = m.len();
    if s == 0 {
        return 0;
    }
    let top = m.iter().flatten().copied().max().unwrap_or(0) as i64;
    // Minimize top - m[i][j]; 1-based with a virtual column 0.
    let cost = |i: usize, j: usize| top - m[i - 1][j - 1] as i64;
    let mut u = vec![0i64; s + 1];
    let mut v = vec![0i64; s + 1];
    let mut row_of = vec![0usize; s + 1];
    let mut way = vec![0usize; s + 1];
    for i in 1..=s {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; s + 1];
        let mut used = vec![false; s + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=s {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=s {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=s).map(|j| m[row_of[j] - 1][j - 1]).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    /// Exhaustive up to [`EXHAUSTIVE_MAX`] classes, Hungarian above.
    Auto,
    Exhaustive,
    Hungarian,
}

/// Misclassification error: one minus the best agreement over all
/// one-to-one matchings of predicted clusters to true groups, divided by n.
/// Unequal label counts are handled by zero padding.
pub fn mce(truth: &[usize], pred: &[usize]) -> Result<f64> {
    mce_with(truth, pred, Solver::Auto)
}

pub fn mce_with(truth: &[usize], pred: &[usize], solver: Solver) -> Result<f64> {
    let cm = ConfusionMatrix::new(truth, pred)?;
    let m = cm.padded();
    let agree = match solver {
        Solver::Auto if m.len() <= EXHAUSTIVE_MAX => max_agreement_exhaustive(&m),
        Solver::Exhaustive => max_agreement_exhaustive(&m),
        _ => max_agreement_hungarian(&m),
    };
    let n = cm.total();
    Ok((n - agree) as f64 / n as f64)
}

/// Number of results whose cluster count equals `true_k`.
pub fn recovered_k_tally(results: &[ClusterResult], true_k: usize) -> usize {
    count_recovered(results.iter().map(|r| r.k_found), true_k)
}

pub fn count_recovered(k_found: impl IntoIterator<Item = usize>, true_k: usize) -> usize {
    k_found.into_iter().filter(|&k| k == true_k).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_relabeling() {
        let t = [1, 1, 2, 3, 3, 3];
        assert_eq!(mce(&t, &t).unwrap(), 0.0);
        let relabeled = [7, 7, 1, 4, 4, 4];
        assert_eq!(mce(&t, &relabeled).unwrap(), 0.0);
    }

    #[test]
    fn one_of_four_wrong() {
        assert_eq!(mce(&[1, 1, 2, 2], &[1, 2, 2, 2]).unwrap(), 0.25);
    }

    #[test]
    fn unequal_counts_are_padded() {
        // Everything in one cluster: best match keeps the biggest group.
        assert_eq!(mce(&[1, 1, 1, 2, 3], &[1, 1, 1, 1, 1]).unwrap(), 0.4);
        // More clusters than groups.
        assert_eq!(mce(&[1, 1, 1, 1], &[1, 2, 3, 3]).unwrap(), 0.5);
    }

    #[test]
    fn errors() {
        assert!(matches!(mce(&[1], &[1, 2]), Err(CubtError::LengthMismatch(1, 2))));
        assert!(matches!(mce(&[], &[]), Err(CubtError::EmptyLabels)));
    }

    #[test]
    fn hungarian_handles_ten_classes() {
        let truth: Vec<usize> = (0..100).map(|i| i % 10 + 1).collect();
        let pred: Vec<usize> = truth.iter().map(|&l| (l * 3) % 10 + 1).collect();
        assert_eq!(mce(&truth, &pred).unwrap(), 0.0);
        let mut noisy = pred.clone();
        noisy[0] = noisy[1];
        noisy[50] = noisy[51];
        assert!((mce(&truth, &noisy).unwrap() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn solvers_agree_on_a_fixed_matrix() {
        let m = vec![
            vec![3, 9, 2, 0],
            vec![7, 1, 8, 4],
            vec![0, 6, 6, 5],
            vec![2, 2, 9, 1],
        ];
        assert_eq!(max_agreement_exhaustive(&m), 30);
        assert_eq!(max_agreement_hungarian(&m), 30);
    }

    #[test]
    fn tally() {
        assert_eq!(count_recovered([3, 3, 3], 3), 3);
        assert_eq!(count_recovered([1, 2], 3), 0);
    }
}
