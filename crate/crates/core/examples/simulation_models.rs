// Draw one sample from every simulation model and fit it with known k.

use cubt::datagen::{generate, Model, ModelSpec};
use cubt::{eval, fit, Params};

pub fn run_example() -> cubt::Result<Vec<(Model, f64)>> {
    let mut out = Vec::new();
    for model in Model::ALL {
        let sigma = model.sigma_grid().first().copied();
        let data = generate(&ModelSpec::new(model, sigma, 11))?;
        let params = Params { minsize: 5, mindev: 0.01, ..Params::default() }
            .with_k(model.n_groups());
        let res = fit(&data.without_labels(), &params)?;
        let err = eval::mce(data.labels().expect("labeled"), &res.assignments)?;
        println!(
            "{:<8} n = {:>4}  k = {:>2}  error {err:.3}",
            model.name(),
            data.n(),
            res.k_found
        );
        out.push((model, err));
    }
    Ok(out)
}

fn main() -> cubt::Result<()> {
    run_example().map(|_| ())
}
