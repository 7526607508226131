/*!
Interpretable clustering with unsupervised binary trees.

A clustering is built in three stages:

1. **grow**: recursive axis-aligned splits, each chosen to maximize the
   reduction in deviance (mass-weighted within-node variance), until nodes are
   small or splits stop paying off ([`grow`]);
2. **prune**: sibling leaves whose trimmed nearest-neighbour dissimilarity is
   at most `mindist` are collapsed into their parent ([`backward::prune`]);
3. **join**: remaining leaves are merged pairwise, closest first, until `k`
   clusters remain or no pair is closer than a quantile threshold
   ([`backward::join`]).

The result is a partition described by a small set of `x[j] <= a` rules that
can route new observations. The crate also ships a k-means baseline, a
permutation-minimized misclassification error, and seeded generators for the
benchmark models.

```
use cubt::{datagen, fit, Params};

let data = datagen::generate(&datagen::ModelSpec::new(datagen::Model::M1, Some(0.11), 7)).unwrap();
let params = Params { minsize: 10, mindev: 0.01, delta: 0.2, ..Params::default() }.with_k(4);
let result = fit(&data.without_labels(), &params).unwrap();
assert_eq!(result.k_found, 4);
let err = cubt::eval::mce(data.labels().unwrap(), &result.assignments).unwrap();
assert!(err < 0.01);
```
*/

pub mod backward;
pub mod baseline;
pub mod commands;
pub mod data;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod grow;
pub mod params;
pub mod tree;

use serde::{Deserialize, Serialize};

pub use crate::backward::{DissimilarityTable, MergeStep};
pub use crate::data::{Dataset, Scaling};
pub use crate::error::{CubtError, Result};
pub use crate::params::{JoinRule, Params};
pub use crate::tree::{ClusterTree, SplitRule, Stage, TreeModel};

/// Output of [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// 1-based cluster of every observation.
    pub assignments: Vec<usize>,
    /// The joined tree.
    pub tree: ClusterTree,
    /// The maximal and pruned trees, in that order.
    pub snapshots: Vec<ClusterTree>,
    pub k_found: usize,
    /// Merges of the joining stage in the order they happened.
    pub dissimilarity_trace: Vec<MergeStep>,
    /// Joining threshold, when the cluster count was not given.
    pub eta: Option<f64>,
    /// mindev the maximal tree was finally grown with.
    pub mindev_used: f64,
    pub warnings: Vec<String>,
    /// Present when the tree was fit on standardized columns.
    pub scaling: Option<Scaling>,
}

impl ClusterResult {
    /// Smallest tree with the same routing labels, ready for export.
    pub fn tree_model(&self) -> TreeModel {
        let mut model = self.tree.simplified().to_model();
        model.scaling = self.scaling.clone();
        model
    }
}

/// Runs grow, prune and join on `data`.
///
/// With a known `k` (or `min_leaves`), the maximal tree is grown through
/// [`grow::mindev_fallback`] so it has enough leaves to join from.
pub fn fit(data: &Dataset, params: &Params) -> Result<ClusterResult> {
    params.join_rule()?;
    let scaling = if params.standardize {
        Some(Scaling::fit(data)?)
    } else {
        None
    };
    let scaled;
    let work = match &scaling {
        Some(s) => {
            scaled = s.apply(data);
            &scaled
        }
        None => data,
    };

    let mut warnings = Vec::new();
    let (maximal, mindev_used) = match params.fallback_target() {
        Some(target) => {
            let grown = grow::mindev_fallback(work, params, target)?;
            if let Some(w) = grown.warning {
                warnings.push(format!(
                    "mindev fallback exhausted: {} leaves for a target of {} (last mindev {})",
                    w.leaves, w.target, w.mindev
                ));
            }
            (grown.tree, grown.mindev)
        }
        None => (grow::grow_maximal_tree(work, params)?, params.mindev),
    };
    let pruned = backward::prune(&maximal, work, params)?;
    let joined = backward::join(&pruned, work, params)?;
    let tree = joined.tree;
    Ok(ClusterResult {
        assignments: tree.assignments(),
        k_found: tree.n_clusters(),
        tree,
        snapshots: vec![maximal, pruned],
        dissimilarity_trace: joined.merges,
        eta: joined.eta,
        mindev_used,
        warnings,
        scaling,
    })
}
