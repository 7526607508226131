use serde::{Deserialize, Serialize};

use crate::error::{CubtError, Result};

/// Tuning knobs for the three stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Params {
    /// Nodes with fewer observations than this are not split.
    pub minsize: usize,
    /// A split must reduce deviance by at least `mindev * R(root)`.
    pub mindev: f64,
    /// Sibling leaves with dissimilarity `<= mindist` are pruned; 0 skips pruning.
    pub mindist: f64,
    /// Fraction of nearest-neighbour distances averaged by the dissimilarity.
    pub delta: f64,
    /// Known number of clusters.
    pub k: Option<usize>,
    /// Quantile of the pruned tree's dissimilarities used as joining threshold.
    pub eta_quantile: Option<f64>,
    pub seed: u64,
    pub standardize: bool,
    /// Also require both children of a split to hold at least `minsize` rows.
    pub min_child_size: bool,
    /// Grow with the mindev fallback until at least this many leaves exist.
    /// Implied by `k` when joining with a known cluster count.
    pub min_leaves: Option<usize>,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            minsize: 1,
            mindev: 0.8,
            mindist: 0.0,
            delta: 0.2,
            k: None,
            eta_quantile: None,
            seed: 0,
            standardize: false,
            min_child_size: false,
            min_leaves: None,
        }
    }
}

/// Stopping rule of the joining stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JoinRule {
    KnownK(usize),
    EtaQuantile(f64),
}

impl Params {
    pub fn with_k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self.eta_quantile = None;
        self
    }

    pub fn with_eta_quantile(mut self, q: f64) -> Self {
        self.eta_quantile = Some(q);
        self.k = None;
        self
    }

    /// Checks ranges of the growing and pruning knobs.
    pub fn validate_growth(&self) -> Result<()> {
        let bad = |m: String| Err(CubtError::InvalidParams(m));
        if self.minsize == 0 {
            return bad("minsize must be at least 1".into());
        }
        if !(self.mindev > 0.0 && self.mindev < 1.0) {
            return bad(format!("mindev must lie in (0, 1), got {}", self.mindev));
        }
        if !(self.mindist >= 0.0 && self.mindist.is_finite()) {
            return bad(format!("mindist must be >= 0, got {}", self.mindist));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return bad(format!("delta must lie in (0, 1], got {}", self.delta));
        }
        if self.min_leaves == Some(0) {
            return bad("min_leaves must be at least 1".into());
        }
        Ok(())
    }

    /// Full validation; exactly one of `k` and `eta_quantile` must be set.
    pub fn join_rule(&self) -> Result<JoinRule> {
        self.validate_growth()?;
        match (self.k, self.eta_quantile) {
            (Some(0), _) => Err(CubtError::InvalidParams("k must be at least 1".into())),
            (Some(k), None) => Ok(JoinRule::KnownK(k)),
            (None, Some(q)) if q > 0.0 && q < 1.0 => Ok(JoinRule::EtaQuantile(q)),
            (None, Some(q)) => Err(CubtError::InvalidParams(format!(
                "eta_quantile must lie in (0, 1), got {q}"
            ))),
            (Some(_), Some(_)) => Err(CubtError::InvalidParams(
                "set either k or eta_quantile, not both".into(),
            )),
            (None, None) => Err(CubtError::InvalidParams(
                "one of k or eta_quantile is required for joining".into(),
            )),
        }
    }

    /// Leaf count the grower should reach through the mindev fallback.
    pub fn fallback_target(&self) -> Option<usize> {
        match (self.k, self.min_leaves) {
            (Some(k), Some(m)) => Some(k.max(m)),
            (k, m) => k.or(m),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exactly_one_join_rule() {
        let p = Params::default();
        assert!(p.join_rule().is_err());
        assert_eq!(p.clone().with_k(3).join_rule().unwrap(), JoinRule::KnownK(3));
        assert_eq!(
            p.clone().with_eta_quantile(0.2).join_rule().unwrap(),
            JoinRule::EtaQuantile(0.2)
        );
        let both = Params {
            k: Some(2),
            eta_quantile: Some(0.1),
            ..Params::default()
        };
        assert!(both.join_rule().is_err());
    }

    #[test]
    fn range_checks() {
        let base = Params::default().with_k(2);
        for bad in [
            Params { minsize: 0, ..base.clone() },
            Params { mindev: 1.0, ..base.clone() },
            Params { delta: 0.0, ..base.clone() },
            Params { mindist: -1.0, ..base.clone() },
            Params { eta_quantile: Some(1.0), k: None, ..base.clone() },
        ] {
            assert!(bad.join_rule().is_err(), "{bad:?}");
        }
        assert!(Params { delta: 1.0, ..base }.join_rule().is_ok());
    }
}
