// Compare a single k-means run with the best of ten restarts on the
// two-ring model, where centroid methods struggle.

use cubt::baseline::{kmeans, kmeans_multi};
use cubt::datagen::{generate, Model, ModelSpec};
use cubt::eval::mce;

pub fn run_example() -> cubt::Result<(f64, f64)> {
    let data = generate(&ModelSpec::new(Model::M3, None, 3))?;
    let truth = data.labels().expect("generated data is labeled");
    let x = data.without_labels();
    let once = kmeans(&x, 2, 3)?;
    let best = kmeans_multi(&x, 2, 10, 3)?;
    let (e1, e10) = (mce(truth, &once.assignments)?, mce(truth, &best.assignments)?);
    println!("k-means      wcss {:>9.3}  error {e1:.3}", once.wcss);
    println!("k-means x10  wcss {:>9.3}  error {e10:.3}", best.wcss);
    Ok((e1, e10))
}

fn main() -> cubt::Result<()> {
    run_example().map(|_| ())
}
