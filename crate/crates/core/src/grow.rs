//! Forward stage: deviance, best axis-aligned split, maximal tree.

use std::collections::{BTreeMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CubtError, Result};
use crate::params::Params;
use crate::tree::{ClusterTree, SplitRule, Stage, TreeNode};

/// mindev values tried, in order, when a tree has too few leaves.
pub const MINDEV_FALLBACK: [f64; 8] = [0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.01];

/// Nodes smaller than this are grown on the calling thread.
const PARALLEL_MIN_ROWS: usize = 64;

/// A scored candidate split of one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    /// 0-based column index.
    pub variable: usize,
    pub threshold: f64,
    /// Deviance reduction `R(t) - R(t_l) - R(t_r)`.
    pub delta_r: f64,
    pub left_count: usize,
    pub right_count: usize,
}

impl SplitCandidate {
    pub fn rule(&self) -> SplitRule {
        SplitRule {
            variable: self.variable,
            threshold: self.threshold,
        }
    }
}

/// Deviance of a node: `(1/n) * sum ||x_i - mean||^2` over its rows, where
/// `n` is the size of the whole sample.
pub fn node_deviance(data: &Dataset, indices: &[usize]) -> Result<f64> {
    check_indices(data, indices)?;
    Ok(deviance_unchecked(data, indices))
}

fn check_indices(data: &Dataset, indices: &[usize]) -> Result<()> {
    if indices.is_empty() {
        return Err(CubtError::EmptyNode);
    }
    if let Some(&index) = indices.iter().find(|&&i| i >= data.n()) {
        return Err(CubtError::IndexOutOfRange { index, n: data.n() });
    }
    Ok(())
}

pub(crate) fn deviance_unchecked(data: &Dataset, indices: &[usize]) -> f64 {
    let mean = mean_of(data, indices);
    let ss: f64 = indices
        .iter()
        .map(|&i| squared_distance(data.row(i), &mean))
        .sum();
    ss / data.n() as f64
}

pub(crate) fn mean_of(data: &Dataset, indices: &[usize]) -> Vec<f64> {
    let mut mean = vec![0.0; data.p()];
    for &i in indices {
        for (m, v) in mean.iter_mut().zip(data.row(i)) {
            *m += v;
        }
    }
    let nt = indices.len() as f64;
    mean.iter_mut().for_each(|m| *m /= nt);
    mean
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sweeps the candidate thresholds of one variable in increasing order,
/// calling `visit` for each. Thresholds are midpoints between consecutive
/// distinct values; the reduction uses the between-children form
/// `n_l n_r / (n n_t) * ||mean_l - mean_r||^2`, which is never negative.
fn sweep_variable(
    data: &Dataset,
    indices: &[usize],
    variable: usize,
    mut visit: impl FnMut(SplitCandidate),
) {
    let p = data.p();
    let n = data.n() as f64;
    let nt = indices.len();
    let mut order = indices.to_vec();
    order.sort_by(|&a, &b| {
        data.value(a, variable)
            .total_cmp(&data.value(b, variable))
            .then(a.cmp(&b))
    });
    let mut total = vec![0.0; p];
    for &i in &order {
        for (t, v) in total.iter_mut().zip(data.row(i)) {
            *t += v;
        }
    }
    let mut left = vec![0.0; p];
    for k in 1..nt {
        for (s, v) in left.iter_mut().zip(data.row(order[k - 1])) {
            *s += v;
        }
        let lo = data.value(order[k - 1], variable);
        let hi = data.value(order[k], variable);
        if lo >= hi {
            continue;
        }
        let mut threshold = (lo + hi) / 2.0;
        if threshold >= hi {
            threshold = lo;
        }
        let (nl, nr) = (k as f64, (nt - k) as f64);
        let gap: f64 = (0..p)
            .map(|j| {
                let d = left[j] / nl - (total[j] - left[j]) / nr;
                d * d
            })
            .sum();
        visit(SplitCandidate {
            variable,
            threshold,
            delta_r: nl * nr / (n * nt as f64) * gap,
            left_count: k,
            right_count: nt - k,
        });
    }
}

/// Every candidate split of the node, by variable then threshold.
pub fn split_candidates(data: &Dataset, indices: &[usize]) -> Result<Vec<SplitCandidate>> {
    check_indices(data, indices)?;
    if indices.len() < 2 {
        return Err(CubtError::SingletonNode);
    }
    let mut out = Vec::new();
    for j in 0..data.p() {
        sweep_variable(data, indices, j, |c| out.push(c));
    }
    Ok(out)
}

/// Split maximizing the deviance reduction, ties going to the smallest
/// variable and then the smallest threshold. `None` when no split reduces
/// deviance (all rows identical).
pub fn best_split(data: &Dataset, indices: &[usize]) -> Result<Option<SplitCandidate>> {
    check_indices(data, indices)?;
    if indices.len() < 2 {
        return Err(CubtError::SingletonNode);
    }
    Ok(best_split_unchecked(data, indices, 1))
}

fn best_split_unchecked(
    data: &Dataset,
    indices: &[usize],
    min_child: usize,
) -> Option<SplitCandidate> {
    let per_variable = |j: usize| {
        let mut best: Option<SplitCandidate> = None;
        sweep_variable(data, indices, j, |c| {
            if c.left_count < min_child || c.right_count < min_child {
                return;
            }
            if best.is_none_or(|b| c.delta_r > b.delta_r) {
                best = Some(c);
            }
        });
        best
    };
    let bests: Vec<Option<SplitCandidate>> = if indices.len() * data.p() >= 4096 {
        (0..data.p()).into_par_iter().map(per_variable).collect()
    } else {
        (0..data.p()).map(per_variable).collect()
    };
    // Reduced in variable order, so the smallest index wins exact ties.
    bests
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<SplitCandidate>, c| match acc {
            Some(b) if c.delta_r <= b.delta_r => Some(b),
            _ => Some(c),
        })
        .filter(|c| c.delta_r > 0.0)
}

struct GrownNode {
    indices: Vec<usize>,
    deviance: f64,
    split: Option<(SplitRule, Box<GrownNode>, Box<GrownNode>)>,
}

struct Grower<'a> {
    data: &'a Dataset,
    minsize: usize,
    min_child: usize,
    min_reduction: f64,
}

impl Grower<'_> {
    fn grow(&self, indices: Vec<usize>) -> GrownNode {
        let deviance = deviance_unchecked(self.data, &indices);
        let leaf = |indices| GrownNode {
            indices,
            deviance,
            split: None,
        };
        if indices.len() < self.minsize || indices.len() < 2 {
            return leaf(indices);
        }
        let Some(cand) = best_split_unchecked(self.data, &indices, self.min_child) else {
            return leaf(indices);
        };
        if cand.delta_r < self.min_reduction {
            return leaf(indices);
        }
        let rule = cand.rule();
        let (l, r): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| rule.goes_left(self.data.row(i)));
        let (left, right) = if indices.len() >= PARALLEL_MIN_ROWS {
            rayon::join(|| self.grow(l), || self.grow(r))
        } else {
            (self.grow(l), self.grow(r))
        };
        GrownNode {
            indices,
            deviance,
            split: Some((rule, Box::new(left), Box::new(right))),
        }
    }
}

/// Grows the maximal tree. A node is terminal when it holds fewer than
/// `minsize` rows, when no split reduces its deviance, or when the best
/// reduction is below `mindev * R(root)`.
pub fn grow_maximal_tree(data: &Dataset, params: &Params) -> Result<ClusterTree> {
    params.validate_growth()?;
    let all: Vec<usize> = (0..data.n()).collect();
    let root_deviance = deviance_unchecked(data, &all);
    let grower = Grower {
        data,
        minsize: params.minsize,
        min_child: if params.min_child_size {
            params.minsize
        } else {
            1
        },
        min_reduction: params.mindev * root_deviance,
    };
    let grown = grower.grow(all);
    Ok(flatten(grown, data))
}

/// Assigns ids breadth-first, left before right.
fn flatten(root: GrownNode, data: &Dataset) -> ClusterTree {
    let mut nodes = BTreeMap::new();
    let mut queue = VecDeque::from([(root, None, 0usize)]);
    let mut next_id = 0usize;
    while let Some((g, parent, depth)) = queue.pop_front() {
        let id = next_id;
        next_id += 1;
        let (split, children) = match g.split {
            Some((rule, l, r)) => {
                let left_id = next_id + queue.len();
                queue.push_back((*l, Some(id), depth + 1));
                queue.push_back((*r, Some(id), depth + 1));
                (Some(rule), Some((left_id, left_id + 1)))
            }
            None => (None, None),
        };
        nodes.insert(
            id,
            TreeNode {
                id,
                parent,
                depth,
                indices: g.indices,
                deviance: g.deviance,
                split,
                left: children.map(|c| c.0),
                right: children.map(|c| c.1),
            },
        );
    }
    ClusterTree::from_parts(nodes, 0, Stage::Maximal, data)
}

/// Raised when no mindev in the fallback sequence reaches the leaf target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallbackExhausted {
    pub target: usize,
    pub leaves: usize,
    pub mindev: f64,
}

#[derive(Debug, Clone)]
pub struct GrowOutcome {
    pub tree: ClusterTree,
    pub mindev: f64,
    pub warning: Option<FallbackExhausted>,
}

/// Grows with `params.mindev`; while the tree has fewer than `k` leaves,
/// regrows with the smaller values of [`MINDEV_FALLBACK`].
pub fn mindev_fallback(data: &Dataset, params: &Params, k: usize) -> Result<GrowOutcome> {
    if k == 0 {
        return Err(CubtError::InvalidParams("k must be at least 1".into()));
    }
    let mut mindev = params.mindev;
    let mut tree = grow_maximal_tree(data, params)?;
    for &next in MINDEV_FALLBACK.iter().filter(|&&m| m < params.mindev) {
        if tree.n_leaves() >= k {
            break;
        }
        log::debug!(
            "{} leaves < {k} with mindev {mindev}; retrying with {next}",
            tree.n_leaves()
        );
        mindev = next;
        tree = grow_maximal_tree(
            data,
            &Params {
                mindev,
                ..params.clone()
            },
        )?;
    }
    let warning = (tree.n_leaves() < k).then(|| {
        log::warn!(
            "mindev fallback exhausted: {} leaves for a target of {k}",
            tree.n_leaves()
        );
        FallbackExhausted {
            target: k,
            leaves: tree.n_leaves(),
            mindev,
        }
    });
    Ok(GrowOutcome {
        tree,
        mindev,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Dataset {
        Dataset::from_rows(&xs.iter().map(|&x| [x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn deviance_examples() {
        let d = Dataset::from_rows(&[[0.0, 0.0], [2.0, 0.0]]).unwrap();
        assert_eq!(node_deviance(&d, &[0]).unwrap(), 0.0);
        assert_eq!(node_deviance(&d, &[0, 1]).unwrap(), 1.0);
        assert!(matches!(node_deviance(&d, &[]), Err(CubtError::EmptyNode)));
        assert!(matches!(
            node_deviance(&d, &[2]),
            Err(CubtError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn best_split_on_two_pairs() {
        // Midpoints 0.05, 2.55, 5.05; reductions (n=4):
        //   a=0.05: 1*3/(4*4) * (0 - 10.1/3)^2 ~ 2.125
        //   a=2.55: 2*2/(4*4) * (0.05 - 5.05)^2 = 6.25
        //   a=5.05: symmetric to the first ~ 2.125
        let d = line(&[0.0, 0.1, 5.0, 5.1]);
        let c = best_split(&d, &[0, 1, 2, 3]).unwrap().unwrap();
        assert_eq!(c.variable, 0);
        assert_eq!(c.threshold, 2.55);
        assert_eq!((c.left_count, c.right_count), (2, 2));
        assert!((c.delta_r - 6.25).abs() < 1e-12);
    }

    #[test]
    fn symmetric_data_prefers_first_variable() {
        let d = Dataset::from_rows(&[[0.0, 1.0], [1.0, 0.0], [5.0, 6.0], [6.0, 5.0]]).unwrap();
        let c = best_split(&d, &[0, 1, 2, 3]).unwrap().unwrap();
        assert_eq!(c.variable, 0);
        let all = split_candidates(&d, &[0, 1, 2, 3]).unwrap();
        let best_x = all.iter().filter(|c| c.variable == 0).map(|c| c.delta_r);
        let best_y = all.iter().filter(|c| c.variable == 1).map(|c| c.delta_r);
        assert_eq!(
            best_x.fold(0.0, f64::max),
            best_y.fold(0.0, f64::max),
            "the example needs an exact tie"
        );
    }

    #[test]
    fn identical_points_do_not_split() {
        let d = line(&[3.0, 3.0, 3.0]);
        assert_eq!(best_split(&d, &[0, 1, 2]).unwrap(), None);
        assert!(matches!(best_split(&d, &[0]), Err(CubtError::SingletonNode)));
    }

    #[test]
    fn minsize_above_n_gives_single_leaf() {
        let d = line(&[0.0, 1.0, 5.0, 9.0]);
        let params = Params {
            minsize: 5,
            mindev: 0.01,
            ..Params::default()
        };
        let t = grow_maximal_tree(&d, &params).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.n_leaves(), 1);
    }

    #[test]
    fn two_points_split_once_at_high_mindev() {
        // R(S) = 1 and the only split recovers all of it.
        let d = line(&[-1.0, 1.0]);
        let params = Params {
            mindev: 1.0 - 1e-12,
            ..Params::default()
        };
        let t = grow_maximal_tree(&d, &params).unwrap();
        assert_eq!(t.len(), 3);
        let root = t.node(0).unwrap();
        assert_eq!(root.split.unwrap().threshold, 0.0);
        t.validate().unwrap();
    }

    #[test]
    fn child_size_flag_limits_splits() {
        let d = line(&[0.0, 10.0, 10.1, 10.2, 10.3]);
        let loose = Params {
            minsize: 2,
            mindev: 0.001,
            ..Params::default()
        };
        let t = grow_maximal_tree(&d, &loose).unwrap();
        assert_eq!(t.node(0).unwrap().split.unwrap().threshold, 5.0);
        let strict = Params {
            min_child_size: true,
            ..loose
        };
        let t = grow_maximal_tree(&d, &strict).unwrap();
        for n in t.nodes().filter(|n| n.parent.is_some()) {
            assert!(n.len() >= 2);
        }
    }

    #[test]
    fn fallback_keeps_tree_with_enough_leaves() {
        let d = line(&[0.0, 0.1, 5.0, 5.1]);
        let params = Params {
            mindev: 0.1,
            ..Params::default()
        };
        let out = mindev_fallback(&d, &params, 2).unwrap();
        assert_eq!(out.mindev, 0.1);
        assert!(out.warning.is_none());
        assert_eq!(out.tree, grow_maximal_tree(&d, &params).unwrap());
    }

    #[test]
    fn fallback_exhausts_when_k_exceeds_n() {
        let d = line(&[0.0, 1.0, 2.0]);
        let out = mindev_fallback(&d, &Params::default(), 5).unwrap();
        let w = out.warning.expect("cannot reach 5 leaves with 3 rows");
        assert_eq!(w.target, 5);
        assert!(w.leaves <= 3);
        assert_eq!(out.mindev, 0.01);
    }
}
