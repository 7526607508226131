//! Property tests for the invariants of each stage.

use std::collections::{BTreeMap, BTreeSet};

use cubt::backward::{self, leaf_dissimilarity};
use cubt::commands::{run_benchmark, summarize, BenchmarkConfig, Grid, Method, Scenario};
use cubt::datagen::Model;
use cubt::eval::{self, max_agreement_exhaustive, max_agreement_hungarian, Solver};
use cubt::grow::{self, node_deviance, split_candidates};
use cubt::{baseline, fit, Dataset, Params};
use proptest::prelude::*;

fn dataset(max_n: usize, max_p: usize) -> impl Strategy<Value = Dataset> {
    (2..=max_n, 1..=max_p).prop_flat_map(|(n, p)| {
        prop::collection::vec(-10.0f64..10.0, n * p)
            .prop_map(move |v| Dataset::from_flat(n, p, v).unwrap())
    })
}

/// Values on a coarse lattice so ties and duplicate points are common.
fn lattice_dataset(max_n: usize, max_p: usize) -> impl Strategy<Value = Dataset> {
    (2..=max_n, 1..=max_p).prop_flat_map(|(n, p)| {
        prop::collection::vec((-4i32..=4).prop_map(f64::from), n * p)
            .prop_map(move |v| Dataset::from_flat(n, p, v).unwrap())
    })
}

fn sse(data: &Dataset, rows: &[usize]) -> f64 {
    let p = data.p();
    let mut total = 0.0;
    for j in 0..p {
        let mean = rows.iter().map(|&i| data.value(i, j)).sum::<f64>() / rows.len() as f64;
        total += rows.iter().map(|&i| (data.value(i, j) - mean).powi(2)).sum::<f64>();
    }
    total
}

fn labels(max_n: usize, max_k: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1..=max_n).prop_flat_map(move |n| {
        (
            prop::collection::vec(1..=max_k, n),
            prop::collection::vec(1..=max_k, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn split_gain_matches_child_deviances(data in dataset(30, 3)) {
        let rows: Vec<usize> = (0..data.n()).collect();
        let n = data.n() as f64;
        let parent = node_deviance(&data, &rows).unwrap();
        for c in split_candidates(&data, &rows).unwrap() {
            let (l, r): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&i| data.value(i, c.variable) <= c.threshold);
            prop_assert_eq!(l.len(), c.left_count);
            prop_assert_eq!(r.len(), c.right_count);
            let direct = parent - sse(&data, &l) / n - sse(&data, &r) / n;
            prop_assert!(c.delta_r >= 0.0);
            prop_assert!((c.delta_r - direct).abs() <= 1e-9 * (1.0 + parent.abs()));
        }
    }

    #[test]
    fn deviance_is_mass_weighted(data in dataset(30, 4)) {
        let rows: Vec<usize> = (0..data.n()).collect();
        let d = node_deviance(&data, &rows).unwrap();
        let oracle = sse(&data, &rows) / data.n() as f64;
        prop_assert!((d - oracle).abs() <= 1e-9 * (1.0 + oracle));
    }

    #[test]
    fn leaves_partition_the_rows(data in lattice_dataset(60, 3), minsize in 1usize..8) {
        let params = Params { minsize, mindev: 0.01, ..Params::default() };
        let tree = grow::grow_maximal_tree(&data, &params).unwrap();
        tree.validate().unwrap();
        let mut seen = vec![0usize; data.n()];
        for leaf in tree.leaves() {
            for &i in &leaf.indices {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        for i in 0..data.n() {
            let leaf = tree.route(data.row(i));
            prop_assert!(tree.node(leaf).unwrap().indices.contains(&i));
        }
    }

    #[test]
    fn known_k_yields_exactly_k_clusters(data in dataset(50, 2), k in 1usize..5) {
        prop_assume!(data.n() >= 2 * k);
        let params = Params { minsize: 1, mindev: 0.01, ..Params::default() }.with_k(k);
        match fit(&data, &params) {
            Ok(res) => {
                let distinct: BTreeSet<usize> = res.assignments.iter().copied().collect();
                prop_assert_eq!(res.k_found, k);
                prop_assert_eq!(distinct, (1..=k).collect::<BTreeSet<_>>());
            }
            Err(e) => prop_assert!(e.is_data_error(), "unexpected error {e}"),
        }
    }

    #[test]
    fn pruning_never_adds_leaves(data in lattice_dataset(50, 2), mindist in 0.0f64..3.0) {
        let params = Params { minsize: 2, mindev: 0.01, mindist, ..Params::default() };
        let maximal = grow::grow_maximal_tree(&data, &params).unwrap();
        let pruned = backward::prune(&maximal, &data, &params).unwrap();
        prop_assert!(pruned.n_leaves() <= maximal.n_leaves());
        if mindist == 0.0 {
            prop_assert_eq!(pruned.n_leaves(), maximal.n_leaves());
        }
        pruned.validate().unwrap();
    }

    #[test]
    fn dissimilarity_symmetric_and_monotone(
        data in dataset(24, 3),
        cut in 1usize..23,
        d1 in 0.05f64..1.0,
        d2 in 0.05f64..1.0,
    ) {
        prop_assume!(cut < data.n());
        let a: Vec<usize> = (0..cut).collect();
        let b: Vec<usize> = (cut..data.n()).collect();
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let ab = leaf_dissimilarity(&data, &a, &b, lo).unwrap();
        let ba = leaf_dissimilarity(&data, &b, &a, lo).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!(ab >= 0.0);
        prop_assert!(leaf_dissimilarity(&data, &a, &b, hi).unwrap() >= ab);
    }

    #[test]
    fn dissimilarity_zero_for_identical_supports(data in dataset(12, 3), delta in 0.05f64..1.0) {
        // Duplicate every point: the two halves share their support.
        let n = data.n();
        let mut values = data.values().to_vec();
        values.extend_from_slice(data.values());
        let doubled = Dataset::from_flat(2 * n, data.p(), values).unwrap();
        let a: Vec<usize> = (0..n).collect();
        let b: Vec<usize> = (n..2 * n).collect();
        prop_assert_eq!(leaf_dissimilarity(&doubled, &a, &b, delta).unwrap(), 0.0);
    }

    #[test]
    fn mce_is_a_relabel_invariant_rate((truth, pred) in labels(40, 5), shift in 1usize..5) {
        let m = eval::mce(&truth, &pred).unwrap();
        prop_assert!((0.0..=1.0).contains(&m));
        prop_assert_eq!(eval::mce(&truth, &truth).unwrap(), 0.0);
        // Cyclic relabeling of the prediction leaves the error unchanged.
        let relabeled: Vec<usize> = pred.iter().map(|&c| (c - 1 + shift) % 5 + 1).collect();
        prop_assert_eq!(eval::mce(&truth, &relabeled).unwrap(), m);
    }

    #[test]
    fn hungarian_agrees_with_exhaustive((truth, pred) in labels(60, 7)) {
        let a = eval::mce_with(&truth, &pred, Solver::Exhaustive).unwrap();
        let b = eval::mce_with(&truth, &pred, Solver::Hungarian).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn assignment_solvers_agree_on_raw_matrices(
        m in (1usize..7).prop_flat_map(|s| prop::collection::vec(prop::collection::vec(0u64..50, s), s))
    ) {
        prop_assert_eq!(max_agreement_exhaustive(&m), max_agreement_hungarian(&m));
    }

    #[test]
    fn lloyd_wcss_never_increases(data in dataset(40, 3), k in 1usize..5, seed in any::<u64>()) {
        prop_assume!(data.n() >= k);
        let model = baseline::kmeans(&data, k, seed).unwrap();
        for w in model.wcss_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
        }
        let used: BTreeSet<usize> = model.assignments.iter().copied().collect();
        prop_assert!(used.iter().all(|&c| (1..=k).contains(&c)));
    }
}

#[test]
fn benchmark_summary_recomputes_from_runs() {
    let config = BenchmarkConfig {
        scenarios: vec![Scenario::new(Model::M1, Some(0.11)), Scenario::new(Model::M3, None)],
        replicates: 3,
        seed: 5,
        grid: Grid {
            minsize: vec![5, 15],
            mindev: vec![0.7],
            mindist: vec![0.0],
            delta: vec![0.2],
        },
        methods: Method::ALL.to_vec(),
        per_group: Some(25),
        ..BenchmarkConfig::default()
    };
    let report = run_benchmark(&config).unwrap();
    assert_eq!(report.summary, summarize(&report.rows));

    // Independent aggregation straight from the rows.
    let mut groups: BTreeMap<(String, Option<usize>, String), Vec<f64>> = BTreeMap::new();
    for r in &report.rows {
        let key = (
            format!("{}:{:?}", r.model.name(), r.sigma),
            r.config,
            r.method.name().to_string(),
        );
        if let Some(m) = r.mce {
            groups.entry(key).or_default().push(m);
        }
    }
    for s in &report.summary {
        let key = (
            format!("{}:{:?}", s.model.name(), s.sigma),
            s.config,
            s.method.name().to_string(),
        );
        let vals = &groups[&key];
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!((s.mean_mce.unwrap() - mean).abs() < 1e-12);
        assert_eq!(s.runs, 3);
    }
    for row in &report.mce_table {
        let cubt: Vec<f64> = report
            .summary
            .iter()
            .filter(|s| s.model == row.model && s.sigma == row.sigma && s.method == Method::CubtK)
            .filter_map(|s| s.mean_mce)
            .collect();
        let best = cubt.iter().copied().fold(f64::INFINITY, f64::min);
        let worst = cubt.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(row.cubt_best, Some(best));
        assert_eq!(row.cubt_worst, Some(worst));
    }
}
