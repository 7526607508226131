//! Runs every cargo example so they stay in working order.

macro_rules! example {
    ($name:ident) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", stringify!($name), ".rs"));
        }
    };
}

example!(grow_tree);
example!(prune_and_join);
example!(kmeans_baseline);
example!(misclassification);
example!(simulation_models);
example!(european_jobs);
example!(predict_new_points);
example!(benchmark_smoke);
example!(dot_export);

#[test]
fn grow_tree_has_several_leaves() {
    assert!(grow_tree::run_example().unwrap().n_leaves() >= 4);
}

#[test]
fn prune_and_join_finds_the_three_groups() {
    assert_eq!(prune_and_join::run_example().unwrap(), 3);
}

#[test]
fn restarts_do_not_hurt_kmeans() {
    let (_, e10) = kmeans_baseline::run_example().unwrap();
    assert!((0.0..=0.5).contains(&e10));
}

#[test]
fn misclassification_counts_two_misplaced_points() {
    assert_eq!(misclassification::run_example().unwrap(), 0.2);
}

#[test]
fn simulation_models_all_fit() {
    let errs = simulation_models::run_example().unwrap();
    assert_eq!(errs.len(), 5);
    assert!(errs.iter().all(|(_, e)| (0.0..=1.0).contains(e)));
}

#[test]
fn european_jobs_gives_four_nonempty_groups() {
    let groups = european_jobs::run_example().unwrap();
    assert_eq!(groups.len(), 4);
    assert_eq!(groups.iter().map(Vec::len).sum::<usize>(), 26);
}

#[test]
fn predict_new_points_is_accurate() {
    assert!(predict_new_points::run_example().unwrap() <= 0.02);
}

#[test]
fn benchmark_smoke_fills_both_tables() {
    let report = benchmark_smoke::run_example().unwrap();
    assert_eq!(report.mce_table.len(), 2);
    assert_eq!(report.recovery_table.len(), 2);
}

#[test]
fn dot_export_is_a_digraph() {
    let dot = dot_export::run_example().unwrap();
    assert!(dot.starts_with("digraph"));
    assert!(dot.trim_end().ends_with('}'));
}
