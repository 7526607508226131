// Grow a maximal tree on four Gaussian groups and list its splits.

use cubt::datagen::{generate, Model, ModelSpec};
use cubt::{grow, ClusterTree, Params};

pub fn run_example() -> cubt::Result<ClusterTree> {
    let data = generate(&ModelSpec::new(Model::M1, Some(0.11), 1))?.without_labels();
    let params = Params { minsize: 10, mindev: 0.05, ..Params::default() };
    let tree = grow::grow_maximal_tree(&data, &params)?;
    println!("{} rows, {} leaves", data.n(), tree.n_leaves());
    for node in tree.nodes() {
        if let Some(rule) = node.split {
            println!(
                "node {:>3}: x{} <= {:.3}  (n = {})",
                node.id,
                rule.variable + 1,
                rule.threshold,
                node.len()
            );
        }
    }
    Ok(tree)
}

fn main() -> cubt::Result<()> {
    run_example().map(|_| ())
}
