// Render the joined tree of a standardized fit as Graphviz DOT.
//
// Pipe the output into `dot -Tsvg` to draw it.

use cubt::datagen::{generate, Model, ModelSpec};
use cubt::{fit, Params};

pub fn run_example() -> cubt::Result<String> {
    let data = generate(&ModelSpec::new(Model::CartCmp, None, 8))?.without_labels();
    let params = Params { minsize: 5, mindev: 0.05, standardize: true, ..Params::default() }.with_k(3);
    let dot = fit(&data, &params)?.tree_model().to_dot();
    print!("{dot}");
    Ok(dot)
}

fn main() -> cubt::Result<()> {
    run_example().map(|_| ())
}
