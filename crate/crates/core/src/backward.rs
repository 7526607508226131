//! Backward stages: pruning sibling leaves and joining arbitrary leaves,
//! both driven by the trimmed nearest-neighbour dissimilarity.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CubtError, Result};
use crate::grow::squared_distance;
use crate::params::{JoinRule, Params};
use crate::tree::{ClusterTree, Stage};

/// Number of smallest distances averaged for a set of `len` points.
pub fn trim_count(delta: f64, len: usize) -> usize {
    // The epsilon absorbs products such as 0.29 * 100 = 28.999999999999996.
    ((delta * len as f64 + 1e-9).floor() as usize).clamp(1, len)
}

/// Mean of the `trim_count(delta, |from|)` smallest distances from points of
/// `from` to their nearest neighbour in `to`.
fn directed_trimmed_mean(data: &Dataset, from: &[usize], to: &[usize], delta: f64) -> f64 {
    let mut nearest: Vec<f64> = from
        .iter()
        .map(|&i| {
            let x = data.row(i);
            to.iter()
                .map(|&j| squared_distance(x, data.row(j)))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    nearest.sort_by(f64::total_cmp);
    let m = trim_count(delta, nearest.len());
    // Running mean: each step adds a non-negative increment, so the result
    // is nondecreasing in m even under rounding.
    let mut mean = 0.0;
    for (k, d) in nearest[..m].iter().enumerate() {
        mean += (d - mean) / (k + 1) as f64;
    }
    mean
}

/// Trimmed dissimilarity between two disjoint point sets: the larger of the
/// two directed means of nearest-neighbour distances.
pub fn leaf_dissimilarity(
    data: &Dataset,
    left: &[usize],
    right: &[usize],
    delta: f64,
) -> Result<f64> {
    if left.is_empty() || right.is_empty() {
        return Err(CubtError::EmptyNode);
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(CubtError::InvalidParams(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    let n = data.n();
    if let Some(&index) = left.iter().chain(right).find(|&&i| i >= n) {
        return Err(CubtError::IndexOutOfRange { index, n });
    }
    let mut mark = vec![false; n];
    for &i in left {
        mark[i] = true;
    }
    if let Some(&i) = right.iter().find(|&&i| mark[i]) {
        return Err(CubtError::Overlap(i));
    }
    Ok(dissimilarity_unchecked(data, left, right, delta))
}

pub(crate) fn dissimilarity_unchecked(
    data: &Dataset,
    left: &[usize],
    right: &[usize],
    delta: f64,
) -> f64 {
    let l = directed_trimmed_mean(data, left, right, delta);
    let r = directed_trimmed_mean(data, right, left, delta);
    l.max(r)
}

/// Pairwise dissimilarities keyed by `(smaller id, larger id)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DissimilarityTable {
    entries: BTreeMap<(usize, usize), f64>,
}

impl DissimilarityTable {
    /// Table over every pair of leaves of `tree`.
    pub fn for_leaves(tree: &ClusterTree, data: &Dataset, delta: f64) -> DissimilarityTable {
        let leaves: Vec<(usize, &[usize])> = tree
            .leaves()
            .map(|n| (n.id, n.indices.as_slice()))
            .collect();
        let pairs: Vec<(usize, usize)> = (0..leaves.len())
            .flat_map(|a| (a + 1..leaves.len()).map(move |b| (a, b)))
            .collect();
        let entries = pairs
            .par_iter()
            .map(|&(a, b)| {
                let d = dissimilarity_unchecked(data, leaves[a].1, leaves[b].1, delta);
                ((leaves[a].0, leaves[b].0), d)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .collect();
        DissimilarityTable { entries }
    }

    pub fn insert(&mut self, a: usize, b: usize, d: f64) {
        self.entries.insert(key(a, b), d);
    }

    /// Dissimilarity of a pair; 0 on the diagonal.
    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        if a == b {
            return Some(0.0);
        }
        self.entries.get(&key(a, b)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.values().copied().collect()
    }

    /// Writes `leaf_i,leaf_j,d` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["leaf_i", "leaf_j", "d"])?;
        for ((a, b), d) in self.iter() {
            w.write_record([a.to_string(), b.to_string(), d.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Empirical `q`-quantile of the table values, interpolating linearly
/// between order statistics.
pub fn eta_from_quantile(table: &DissimilarityTable, q: f64) -> Result<f64> {
    if table.is_empty() {
        return Err(CubtError::EmptyTable);
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(CubtError::InvalidParams(format!(
            "quantile must lie in (0, 1), got {q}"
        )));
    }
    let mut v = table.values();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

/// Collapses sibling leaves whose dissimilarity is at most `mindist`,
/// deepest pair first (ties to the smallest parent id), until no such pair
/// remains. `mindist == 0` skips pruning.
pub fn prune(tree: &ClusterTree, data: &Dataset, params: &Params) -> Result<ClusterTree> {
    if tree.stage() != Stage::Maximal {
        return Err(CubtError::Stage {
            expected: Stage::Maximal.name(),
            found: tree.stage().name(),
        });
    }
    params.validate_growth()?;
    let mut out = tree.clone();
    out.stage = Stage::Pruned;
    if params.mindist <= 0.0 {
        return Ok(out);
    }
    // Sibling dissimilarities keyed by parent id; a collapse only creates
    // one new candidate parent, so the rest of the cache stays valid.
    let mut cache: BTreeMap<usize, f64> = BTreeMap::new();
    loop {
        let mut best: Option<(usize, usize)> = None;
        for node in out.nodes.values() {
            let (Some(l), Some(r)) = (node.left, node.right) else {
                continue;
            };
            let (ln, rn) = (&out.nodes[&l], &out.nodes[&r]);
            if !ln.is_leaf() || !rn.is_leaf() {
                continue;
            }
            let d = *cache.entry(node.id).or_insert_with(|| {
                dissimilarity_unchecked(data, &ln.indices, &rn.indices, params.delta)
            });
            if d > params.mindist {
                continue;
            }
            // Ids ascend, so the first node seen at a depth has the smallest id.
            if best.is_none_or(|(depth, _)| node.depth > depth) {
                best = Some((node.depth, node.id));
            }
        }
        let Some((_, id)) = best else { break };
        log::debug!("pruning node {id}");
        out.collapse(id);
        cache.remove(&id);
    }
    out.label_leaves_individually();
    Ok(out)
}

/// One merge of the joining stage: the two groups (named by their smallest
/// leaf id) and their dissimilarity at the time of merging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub a: usize,
    pub b: usize,
    pub d: f64,
}

#[derive(Debug, Clone)]
pub struct JoinOutcome {
    pub tree: ClusterTree,
    /// Table over the leaves of the input tree.
    pub initial_table: DissimilarityTable,
    /// Threshold used when joining by quantile.
    pub eta: Option<f64>,
    pub merges: Vec<MergeStep>,
}

struct Group {
    key: usize,
    leaves: Vec<usize>,
    indices: Vec<usize>,
}

/// Joins leaves, closest pair first, until `k` groups remain or (without
/// `k`) no pair is closer than the quantile threshold of the initial table.
/// Leaves keep their place in the tree; they only come to share labels.
pub fn join(tree: &ClusterTree, data: &Dataset, params: &Params) -> Result<JoinOutcome> {
    if tree.stage() != Stage::Pruned {
        return Err(CubtError::Stage {
            expected: Stage::Pruned.name(),
            found: tree.stage().name(),
        });
    }
    let rule = params.join_rule()?;
    let delta = params.delta;
    let mut groups: Vec<Group> = tree
        .leaves()
        .map(|n| Group {
            key: n.id,
            leaves: vec![n.id],
            indices: n.indices.clone(),
        })
        .collect();
    if let JoinRule::KnownK(k) = rule {
        if groups.len() < k {
            return Err(CubtError::KTooLarge {
                k,
                leaves: groups.len(),
            });
        }
    }
    let initial_table = DissimilarityTable::for_leaves(tree, data, delta);
    let eta = match rule {
        JoinRule::EtaQuantile(q) if !initial_table.is_empty() => {
            Some(eta_from_quantile(&initial_table, q)?)
        }
        _ => None,
    };
    let mut table = initial_table.clone();
    let mut merges = Vec::new();

    loop {
        let target_reached = match rule {
            JoinRule::KnownK(k) => groups.len() <= k,
            JoinRule::EtaQuantile(_) => groups.len() < 2,
        };
        if target_reached {
            break;
        }
        // Keys are unique and the table iterates in key order, so strict `<`
        // keeps the lexicographically smallest pair among ties.
        let Some(((a, b), d)) = table
            .iter()
            .fold(None, |best: Option<((usize, usize), f64)>, e| match best {
                Some(b) if e.1 >= b.1 => Some(b),
                _ => Some(e),
            })
        else {
            break;
        };
        if let Some(eta) = eta {
            if d >= eta {
                break;
            }
        }
        merges.push(MergeStep { a, b, d });
        let bi = groups.iter().position(|g| g.key == b).expect("group b");
        let absorbed = groups.remove(bi);
        let ai = groups.iter().position(|g| g.key == a).expect("group a");
        {
            let g = &mut groups[ai];
            g.leaves.extend(absorbed.leaves);
            g.leaves.sort_unstable();
            g.indices.extend(absorbed.indices);
            g.indices.sort_unstable();
        }
        table.entries.retain(|&(x, y), _| x != b && y != b);
        let merged = &groups[ai];
        let refreshed: Vec<(usize, f64)> = groups
            .par_iter()
            .filter(|g| g.key != a)
            .map(|g| {
                (
                    g.key,
                    dissimilarity_unchecked(data, &merged.indices, &g.indices, delta),
                )
            })
            .collect();
        for (other, d) in refreshed {
            table.insert(a, other, d);
        }
    }

    let mut out = tree.clone();
    out.stage = Stage::Joined;
    // Groups are kept in order of their smallest leaf id.
    out.cluster_map = groups
        .iter()
        .enumerate()
        .flat_map(|(label, g)| g.leaves.iter().map(move |&leaf| (leaf, label + 1)))
        .collect();
    Ok(JoinOutcome {
        tree: out,
        initial_table,
        eta,
        merges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grow::grow_maximal_tree;

    fn line(xs: &[f64]) -> Dataset {
        Dataset::from_rows(&xs.iter().map(|&x| [x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn trim_counts() {
        assert_eq!(trim_count(0.2, 5), 1);
        assert_eq!(trim_count(0.2, 4), 1);
        assert_eq!(trim_count(0.29, 100), 29);
        assert_eq!(trim_count(0.6, 5), 3);
        assert_eq!(trim_count(1.0, 7), 7);
    }

    #[test]
    fn singleton_sets() {
        let d = Dataset::from_rows(&[[0.0, 0.0], [3.0, 0.0]]).unwrap();
        for delta in [0.1, 0.5, 1.0] {
            assert_eq!(leaf_dissimilarity(&d, &[0], &[1], delta).unwrap(), 3.0);
        }
    }

    #[test]
    fn hand_enumerated_example() {
        // left {0}: nearest in right is 1 -> 1.
        // right {1, 2}: distances to 0 are 1 and 2 -> mean 1.5.
        let d = line(&[0.0, 1.0, 2.0]);
        assert_eq!(leaf_dissimilarity(&d, &[0], &[1, 2], 1.0).unwrap(), 1.5);
    }

    #[test]
    fn interleaved_sets_are_close() {
        let d = line(&[0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 10.0]);
        // Evens vs odds plus a far point on the right.
        let left = [0, 2, 4];
        let right = [1, 3, 5, 6];
        let v = leaf_dissimilarity(&d, &left, &right, 0.25).unwrap();
        assert!(v <= 0.1 + 1e-12, "{v}");
    }

    #[test]
    fn errors() {
        let d = line(&[0.0, 1.0]);
        assert!(matches!(
            leaf_dissimilarity(&d, &[], &[1], 0.2),
            Err(CubtError::EmptyNode)
        ));
        assert!(matches!(
            leaf_dissimilarity(&d, &[0, 1], &[1], 0.2),
            Err(CubtError::Overlap(1))
        ));
    }

    #[test]
    fn quantile_examples() {
        let mut t = DissimilarityTable::default();
        for (i, v) in [1.0, 2.0, 3.0, 4.0].into_iter().enumerate() {
            t.insert(i, 10, v);
        }
        assert_eq!(eta_from_quantile(&t, 0.25).unwrap(), 1.75);
        let mut c = DissimilarityTable::default();
        for i in 0..5 {
            c.insert(i, 9, 0.7);
        }
        for q in [0.01, 0.5, 0.99] {
            assert_eq!(eta_from_quantile(&c, q).unwrap(), 0.7);
        }
        assert!(matches!(
            eta_from_quantile(&DissimilarityTable::default(), 0.5),
            Err(CubtError::EmptyTable)
        ));
    }

    fn fine_tree(d: &Dataset) -> ClusterTree {
        let params = Params {
            mindev: 1e-9,
            ..Params::default()
        };
        grow_maximal_tree(d, &params).unwrap()
    }

    #[test]
    fn prune_with_zero_mindist_is_identity() {
        let d = line(&[0.0, 1.0, 3.0, 6.0]);
        let t = fine_tree(&d);
        let p = prune(&t, &d, &Params::default()).unwrap();
        assert_eq!(p.stage(), Stage::Pruned);
        assert_eq!(p.nodes, t.nodes);
    }

    #[test]
    fn prune_chains_up_the_tree() {
        // Nested close groups: {0, 0.1} splits from {0.25}, all far from 50.
        let d = line(&[0.0, 0.1, 0.25, 50.0]);
        let t = fine_tree(&d);
        assert_eq!(t.n_leaves(), 4);
        let params = Params {
            mindist: 0.5,
            delta: 1.0,
            ..Params::default()
        };
        let p = prune(&t, &d, &params).unwrap();
        assert_eq!(p.n_leaves(), 2);
        p.validate().unwrap();
        let sizes: Vec<usize> = p.leaves().map(|l| l.len()).collect();
        assert_eq!(sizes, vec![3, 1]);
    }

    #[test]
    fn prune_rejects_wrong_stage() {
        let d = line(&[0.0, 1.0]);
        let t = fine_tree(&d);
        let p = prune(&t, &d, &Params::default()).unwrap();
        assert!(matches!(
            prune(&p, &d, &Params::default()),
            Err(CubtError::Stage { .. })
        ));
    }

    #[test]
    fn join_merges_closest_groups() {
        // Three groups near 0, 0.1 and 10: only the first two merge.
        let d = line(&[0.0, 0.01, 0.1, 0.11, 10.0, 10.01]);
        let t = fine_tree(&d);
        // Hand-build a pruned tree with exactly three leaves.
        let coarse = Params {
            mindist: 0.05,
            delta: 1.0,
            ..Params::default()
        };
        let p = prune(&t, &d, &coarse).unwrap();
        assert_eq!(p.n_leaves(), 3);
        let out = join(&p, &d, &Params::default().with_k(2)).unwrap();
        assert_eq!(out.merges.len(), 1);
        assert_eq!(out.tree.n_clusters(), 2);
        // Labels follow the smallest leaf id: the far pair sits in leaf 2.
        assert_eq!(out.tree.assignments(), vec![2, 2, 2, 2, 1, 1]);
        assert_eq!((out.merges[0].a, out.merges[0].b), (3, 4));
        assert!(matches!(
            join(&p, &d, &Params::default().with_k(4)),
            Err(CubtError::KTooLarge { k: 4, leaves: 3 })
        ));
        let same = join(&p, &d, &Params::default().with_k(3)).unwrap();
        assert!(same.merges.is_empty());
        assert_eq!(same.tree.assignments(), p.assignments());
    }
}
