// Fit on one sample, then route a fresh sample through the saved rules.

use cubt::datagen::{generate, Model, ModelSpec};
use cubt::{eval, fit, Params, TreeModel};

pub fn run_example() -> cubt::Result<f64> {
    let train = generate(&ModelSpec::new(Model::M1, Some(0.13), 5))?;
    let test = generate(&ModelSpec::new(Model::M1, Some(0.13), 6))?;
    let params = Params { minsize: 10, mindev: 0.01, ..Params::default() }.with_k(4);
    let res = fit(&train.without_labels(), &params)?;

    // Round-trip through JSON, as the CLI does with tree.json.
    let json = serde_json::to_string(&res.tree_model())?;
    let model: TreeModel = serde_json::from_str(&json)?;
    let router = model.router()?;
    let pred = router.predict_dataset(&test)?;
    let err = eval::mce(test.labels().expect("labeled"), &pred)?;
    println!("holdout error {err:.4} over {} points", test.n());
    Ok(err)
}

fn main() -> cubt::Result<()> {
    run_example().map(|_| ())
}
