//! Tree topology shared by every stage, its JSON schema, and DOT rendering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Scaling};
use crate::error::{CubtError, Result};

/// Axis-aligned rule: an observation goes left iff `x[variable] <= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    /// 0-based column index.
    pub variable: usize,
    pub threshold: f64,
}

impl SplitRule {
    #[inline]
    pub fn goes_left(&self, x: &[f64]) -> bool {
        x[self.variable] <= self.threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Maximal,
    Pruned,
    Joined,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Maximal => "maximal",
            Stage::Pruned => "pruned",
            Stage::Joined => "joined",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    /// Sorted row indices of the observations in this node.
    pub indices: Vec<usize>,
    pub deviance: f64,
    pub split: Option<SplitRule>,
    pub left: Option<usize>,
    pub right: Option<usize>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Binary partition tree over a sample.
///
/// Node ids are assigned breadth-first with the left child before the right
/// one, so a left child always has a smaller id than its sibling. Every leaf
/// carries a cluster label in `cluster_map`; before joining each leaf is its
/// own cluster, numbered in leaf-id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTree {
    pub(crate) nodes: BTreeMap<usize, TreeNode>,
    pub(crate) root: usize,
    pub(crate) stage: Stage,
    pub(crate) cluster_map: BTreeMap<usize, usize>,
    pub(crate) n_samples: usize,
    pub(crate) n_features: usize,
    pub(crate) column_names: Option<Vec<String>>,
}

impl ClusterTree {
    pub(crate) fn from_parts(
        nodes: BTreeMap<usize, TreeNode>,
        root: usize,
        stage: Stage,
        data: &Dataset,
    ) -> ClusterTree {
        let mut tree = ClusterTree {
            nodes,
            root,
            stage,
            cluster_map: BTreeMap::new(),
            n_samples: data.n(),
            n_features: data.p(),
            column_names: data.column_names().map(<[String]>::to_vec),
        };
        tree.label_leaves_individually();
        tree
    }

    pub(crate) fn label_leaves_individually(&mut self) {
        self.cluster_map = self
            .leaf_ids()
            .into_iter()
            .enumerate()
            .map(|(k, id)| (id, k + 1))
            .collect();
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn node(&self, id: usize) -> Option<&TreeNode> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.values()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn cluster_map(&self) -> &BTreeMap<usize, usize> {
        &self.cluster_map
    }

    pub fn leaf_ids(&self) -> Vec<usize> {
        self.nodes
            .values()
            .filter(|n| n.is_leaf())
            .map(|n| n.id)
            .collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.values().filter(|n| n.is_leaf()).count()
    }

    pub fn n_clusters(&self) -> usize {
        self.cluster_map.values().collect::<BTreeSet<_>>().len()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.values().filter(|n| n.is_leaf())
    }

    /// Leaf reached by routing `x` from the root.
    pub fn route(&self, x: &[f64]) -> usize {
        let mut id = self.root;
        loop {
            let node = &self.nodes[&id];
            match node.split {
                None => return id,
                Some(rule) => {
                    id = if rule.goes_left(x) {
                        node.left.expect("split node has a left child")
                    } else {
                        node.right.expect("split node has a right child")
                    }
                }
            }
        }
    }

    /// Cluster label of the leaf `x` falls into.
    pub fn predict(&self, x: &[f64]) -> usize {
        self.cluster_map[&self.route(x)]
    }

    /// Per-observation cluster labels read off the leaves.
    pub fn assignments(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_samples];
        for leaf in self.leaves() {
            let label = self.cluster_map[&leaf.id];
            for &i in &leaf.indices {
                out[i] = label;
            }
        }
        out
    }

    /// Turns an internal node into a leaf, dropping its whole subtree.
    pub(crate) fn collapse(&mut self, id: usize) {
        let mut stack = Vec::new();
        {
            let node = self.nodes.get_mut(&id).expect("node exists");
            stack.extend(node.left.take());
            stack.extend(node.right.take());
            node.split = None;
        }
        while let Some(c) = stack.pop() {
            if let Some(child) = self.nodes.remove(&c) {
                stack.extend(child.left);
                stack.extend(child.right);
                self.cluster_map.remove(&c);
            }
        }
    }

    /// Collapses every subtree whose leaves all carry the same cluster label,
    /// giving the smallest tree with the same routing labels.
    pub fn simplified(&self) -> ClusterTree {
        let mut out = self.clone();
        // Node ids grow with depth, so visiting in reverse id order sees
        // children before parents.
        let internal: Vec<usize> = self
            .nodes
            .values()
            .rev()
            .filter(|n| !n.is_leaf())
            .map(|n| n.id)
            .collect();
        for id in internal {
            let node = &out.nodes[&id];
            let (Some(l), Some(r)) = (node.left, node.right) else {
                continue;
            };
            let (ll, rl) = (out.cluster_map.get(&l), out.cluster_map.get(&r));
            if let (Some(&a), Some(&b)) = (ll, rl) {
                if a == b {
                    out.collapse(id);
                    out.cluster_map.insert(id, a);
                }
            }
        }
        out
    }

    /// Checks the structural invariants: binary, connected, leaf sets
    /// partition `0..n`, children partition their parent.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CubtError::InvalidData(m));
        let mut covered = vec![false; self.n_samples];
        let mut seen = 0usize;
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            seen += 1;
            let Some(node) = self.nodes.get(&id) else {
                return bad(format!("missing node {id}"));
            };
            match (node.split, node.left, node.right) {
                (None, None, None) => {
                    if !self.cluster_map.contains_key(&id) {
                        return bad(format!("leaf {id} has no cluster label"));
                    }
                    for &i in &node.indices {
                        if covered[i] {
                            return bad(format!("row {i} is in two leaves"));
                        }
                        covered[i] = true;
                    }
                }
                (Some(_), Some(l), Some(r)) => {
                    let (ln, rn) = (&self.nodes[&l], &self.nodes[&r]);
                    if ln.is_empty() || rn.is_empty() {
                        return bad(format!("node {id} has an empty child"));
                    }
                    let mut merged: Vec<usize> =
                        ln.indices.iter().chain(&rn.indices).copied().collect();
                    merged.sort_unstable();
                    if merged != node.indices {
                        return bad(format!("children of {id} do not partition it"));
                    }
                    stack.push(l);
                    stack.push(r);
                }
                _ => return bad(format!("node {id} is half split")),
            }
        }
        if seen != self.nodes.len() {
            return bad("tree is not connected".into());
        }
        if covered.iter().any(|c| !c) {
            return bad("leaves do not cover every row".into());
        }
        Ok(())
    }

    /// Serializable routing model (the tree JSON schema).
    pub fn to_model(&self) -> TreeModel {
        let nodes = self
            .nodes
            .values()
            .map(|n| NodeRecord {
                id: n.id,
                parent: n.parent,
                split: n.split.map(|s| SplitRecord {
                    var: s.variable + 1,
                    threshold: s.threshold,
                }),
                n: n.indices.len(),
                deviance: n.deviance,
                cluster: if n.is_leaf() {
                    self.cluster_map.get(&n.id).copied()
                } else {
                    None
                },
            })
            .collect();
        TreeModel {
            stage: self.stage,
            n_features: self.n_features,
            column_names: self.column_names.clone(),
            scaling: None,
            nodes,
        }
    }

    pub fn to_dot(&self) -> String {
        self.to_model().to_dot()
    }
}

/// `split` entry of the tree JSON schema; `var` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub var: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub split: Option<SplitRecord>,
    pub n: usize,
    pub deviance: f64,
    pub cluster: Option<usize>,
}

/// Flat tree description written as `tree.json`. Children are recovered from
/// `parent` links; of two siblings the one with the smaller id is the left
/// (`<=`) branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub stage: Stage,
    pub n_features: usize,
    #[serde(default)]
    pub column_names: Option<Vec<String>>,
    /// Applied to raw observations before routing when the tree was fit on
    /// standardized data.
    #[serde(default)]
    pub scaling: Option<Scaling>,
    pub nodes: Vec<NodeRecord>,
}

/// A [`TreeModel`] with child links resolved, ready to route observations.
#[derive(Debug, Clone)]
pub struct Router {
    model: TreeModel,
    root: usize,
    children: BTreeMap<usize, (usize, usize)>,
    position: BTreeMap<usize, usize>,
}

impl TreeModel {
    pub fn router(self) -> Result<Router> {
        let position: BTreeMap<usize, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(k, n)| (n.id, k))
            .collect();
        if position.len() != self.nodes.len() {
            return Err(CubtError::InvalidData("duplicate node ids".into()));
        }
        let roots: Vec<usize> = self
            .nodes
            .iter()
            .filter(|n| n.parent.is_none())
            .map(|n| n.id)
            .collect();
        let [root] = roots[..] else {
            return Err(CubtError::InvalidData(format!(
                "tree must have exactly one root, found {}",
                roots.len()
            )));
        };
        let mut kids: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for n in &self.nodes {
            if let Some(p) = n.parent {
                if !position.contains_key(&p) {
                    return Err(CubtError::InvalidData(format!(
                        "node {} has unknown parent {p}",
                        n.id
                    )));
                }
                kids.entry(p).or_default().push(n.id);
            }
        }
        let mut children = BTreeMap::new();
        for n in &self.nodes {
            let c = kids.remove(&n.id).unwrap_or_default();
            match (&n.split, c.as_slice()) {
                (Some(s), &[a, b]) => {
                    if s.var == 0 || s.var > self.n_features {
                        return Err(CubtError::InvalidData(format!(
                            "node {} splits on variable {} of {}",
                            n.id, s.var, self.n_features
                        )));
                    }
                    children.insert(n.id, (a.min(b), a.max(b)));
                }
                (None, &[]) => {
                    if n.cluster.is_none() {
                        return Err(CubtError::InvalidData(format!(
                            "leaf {} has no cluster label",
                            n.id
                        )));
                    }
                }
                _ => {
                    return Err(CubtError::InvalidData(format!(
                        "node {} has {} children but split = {:?}",
                        n.id,
                        c.len(),
                        n.split
                    )))
                }
            }
        }
        Ok(Router {
            model: self,
            root,
            children,
            position,
        })
    }

    /// Graphviz rendering. Internal nodes read `X(j) ≤ a` (or the column
    /// name); the left edge is the branch where the condition holds.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph cubt {\n    node [fontname=\"Helvetica\"];\n");
        for n in &self.nodes {
            match &n.split {
                Some(s) => {
                    let var = match &self.column_names {
                        Some(names) => names[s.var - 1].clone(),
                        None => format!("X({})", s.var),
                    };
                    let _ = writeln!(
                        out,
                        "    n{} [shape=box, label=\"{} ≤ {}\"];",
                        n.id,
                        escape(&var),
                        significant(s.threshold, 4)
                    );
                }
                None => {
                    let cluster = n
                        .cluster
                        .map_or_else(|| "?".to_string(), |c| c.to_string());
                    let _ = writeln!(
                        out,
                        "    n{} [shape=ellipse, label=\"cluster {}\\nn = {}\"];",
                        n.id, cluster, n.n
                    );
                }
            }
        }
        let mut by_parent: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for n in &self.nodes {
            if let Some(p) = n.parent {
                by_parent.entry(p).or_default().push(n.id);
            }
        }
        for (p, mut kids) in by_parent {
            kids.sort_unstable();
            for (k, c) in kids.into_iter().enumerate() {
                let label = if k == 0 { "true" } else { "false" };
                let _ = writeln!(out, "    n{p} -> n{c} [label=\"{label}\"];");
            }
        }
        out.push_str("}\n");
        out
    }
}

impl Router {
    pub fn model(&self) -> &TreeModel {
        &self.model
    }

    pub fn n_features(&self) -> usize {
        self.model.n_features
    }

    /// Cluster label for a raw observation.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.model.n_features {
            return Err(CubtError::Dimension {
                expected: self.model.n_features,
                found: x.len(),
            });
        }
        let scaled;
        let x = match &self.model.scaling {
            Some(s) => {
                scaled = s.transform_row(x);
                &scaled[..]
            }
            None => x,
        };
        let mut id = self.root;
        loop {
            let node = &self.model.nodes[self.position[&id]];
            match (&node.split, self.children.get(&id)) {
                (Some(s), Some(&(l, r))) => {
                    id = if x[s.var - 1] <= s.threshold { l } else { r };
                }
                _ => {
                    return node.cluster.ok_or_else(|| {
                        CubtError::InvalidData(format!("leaf {id} has no cluster label"))
                    })
                }
            }
        }
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<usize>> {
        data.rows().map(|r| self.predict(r)).collect()
    }
}

/// Formats `x` with `digits` significant digits.
pub(crate) fn significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = digits as i32 - 1 - magnitude;
    if decimals >= 0 {
        format!("{:.*}", decimals as usize, x)
    } else {
        let factor = 10f64.powi(-decimals);
        format!("{}", (x / factor).round() * factor)
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(significant(2.55, 4), "2.550");
        assert_eq!(significant(29.45, 4), "29.45");
        assert_eq!(significant(0.0012345, 4), "0.001234");
        assert_eq!(significant(-123456.0, 4), "-123500");
        assert_eq!(significant(0.0, 4), "0");
    }

    #[test]
    fn boundary_point_goes_left() {
        let rule = SplitRule {
            variable: 1,
            threshold: 0.5,
        };
        assert!(rule.goes_left(&[9.0, 0.5]));
        assert!(!rule.goes_left(&[9.0, 0.5000001]));
    }
}
