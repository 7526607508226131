// Walk through the three stages by hand: grow deep, prune close siblings,
// then join leaves by the quantile rule.

use cubt::backward::{self, DissimilarityTable};
use cubt::datagen::{generate, Model, ModelSpec};
use cubt::{grow, Params};

pub fn run_example() -> cubt::Result<usize> {
    let data = generate(&ModelSpec::new(Model::M4, Some(0.03), 2))?.without_labels();
    let params = Params { minsize: 25, mindev: 1e-3, delta: 0.2, ..Params::default() }
        .with_eta_quantile(Model::M4.eta_quantile());

    let maximal = grow::grow_maximal_tree(&data, &params)?;
    let pruned = backward::prune(&maximal, &data, &params)?;
    let table = DissimilarityTable::for_leaves(&pruned, &data, params.delta);
    println!(
        "{} leaves grown, {} after pruning, {} leaf pairs",
        maximal.n_leaves(),
        pruned.n_leaves(),
        table.len()
    );

    let joined = backward::join(&pruned, &data, &params)?;
    println!("eta = {:.4}", joined.eta.unwrap_or(f64::NAN));
    for step in &joined.merges {
        println!("merge {} + {} at d = {:.4}", step.a, step.b, step.d);
    }
    let k = joined.tree.n_clusters();
    println!("{k} clusters");
    Ok(k)
}

fn main() -> cubt::Result<()> {
    run_example().map(|_| ())
}
