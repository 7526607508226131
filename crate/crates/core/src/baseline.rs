//! Lloyd's k-means, single start and best-of-restarts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CubtError, Result};
use crate::grow::squared_distance;

pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    /// `k` rows of `p` coordinates.
    pub centers: Vec<Vec<f64>>,
    /// 1-based cluster of each observation.
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares against `centers`.
    pub wcss: f64,
    pub iterations: usize,
    /// wcss after every assignment step.
    pub wcss_history: Vec<f64>,
}

/// Index of the nearest center, ties to the smallest index.
fn nearest(x: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = squared_distance(x, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(data: &Dataset, centers: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut wcss = 0.0;
    let labels = data
        .rows()
        .map(|x| {
            let (c, d) = nearest(x, centers);
            wcss += d;
            c
        })
        .collect();
    (labels, wcss)
}

/// Recomputes centers as cluster means. An empty cluster gets the point
/// farthest from its current center.
fn update(data: &Dataset, labels: &[usize], centers: &mut [Vec<f64>]) {
    let k = centers.len();
    let p = data.p();
    let mut sums = vec![vec![0.0; p]; k];
    let mut counts = vec![0usize; k];
    for (x, &l) in data.rows().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(x) {
            *s += v;
        }
    }
    let mut taken = vec![false; data.n()];
    for c in 0..k {
        if counts[c] > 0 {
            centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
    }
    for c in (0..k).filter(|&c| counts[c] == 0) {
        let far = (0..data.n())
            .filter(|&i| !taken[i])
            .map(|i| (i, squared_distance(data.row(i), &centers[labels[i]])))
            .fold((usize::MAX, -1.0), |b, e| if e.1 > b.1 { e } else { b });
        if far.0 != usize::MAX {
            taken[far.0] = true;
            centers[c] = data.row(far.0).to_vec();
        }
    }
}

/// Lloyd iterations from `k` distinct rows drawn uniformly with `seed`,
/// until the assignment is stable or [`MAX_ITERATIONS`] is reached.
pub fn kmeans(data: &Dataset, k: usize, seed: u64) -> Result<KMeansModel> {
    if k == 0 || k > data.n() {
        return Err(CubtError::KOutOfRange { k, n: data.n() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = rand::seq::index::sample(&mut rng, data.n(), k)
        .into_iter()
        .map(|i| data.row(i).to_vec())
        .collect();
    let (mut labels, mut wcss) = assign(data, &centers);
    let mut history = vec![wcss];
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        update(data, &labels, &mut centers);
        let (next, next_wcss) = assign(data, &centers);
        history.push(next_wcss);
        wcss = next_wcss;
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(KMeansModel {
        centers,
        assignments: labels.into_iter().map(|l| l + 1).collect(),
        wcss,
        iterations,
        wcss_history: history,
    })
}

/// Best of `restarts` runs seeded `seed, seed + 1, ...`: smallest wcss,
/// ties to the earliest seed.
pub fn kmeans_multi(data: &Dataset, k: usize, restarts: usize, seed: u64) -> Result<KMeansModel> {
    if restarts == 0 {
        return Err(CubtError::InvalidParams("restarts must be at least 1".into()));
    }
    let runs: Vec<KMeansModel> = (0..restarts as u64)
        .into_par_iter()
        .map(|r| kmeans(data, k, seed.wrapping_add(r)))
        .collect::<Result<_>>()?;
    Ok(runs
        .into_iter()
        .reduce(|best, m| if m.wcss < best.wcss { m } else { best })
        .expect("at least one restart"))
}
