// Misclassification error ignores how clusters are numbered.

use cubt::eval::{mce, mce_with, ConfusionMatrix, Solver};

pub fn run_example() -> cubt::Result<f64> {
    let truth = [1, 1, 1, 2, 2, 2, 3, 3, 3, 3];
    let pred = [5, 5, 2, 9, 9, 9, 2, 2, 2, 5];
    let cm = ConfusionMatrix::new(&truth, &pred)?;
    println!("predicted labels {:?}", cm.pred_labels);
    for (t, row) in cm.true_labels.iter().zip(&cm.counts) {
        println!("group {t}: {row:?}");
    }
    let err = mce(&truth, &pred)?;
    assert_eq!(err, mce_with(&truth, &pred, Solver::Hungarian)?);
    println!("error = {err}");
    Ok(err)
}

fn main() -> cubt::Result<()> {
    run_example().map(|_| ())
}
