// A small benchmark: two scenarios, a two-point grid, three replicates.

use cubt::commands::{run_benchmark, BenchmarkConfig, BenchmarkReport, Grid, Scenario};
use cubt::datagen::Model;

pub fn run_example() -> cubt::Result<BenchmarkReport> {
    let config = BenchmarkConfig {
        scenarios: vec![Scenario::new(Model::M1, Some(0.11)), Scenario::new(Model::M4, Some(0.03))],
        replicates: 3,
        grid: Grid {
            minsize: vec![10, 25],
            mindev: vec![1e-3],
            mindist: vec![0.0],
            delta: vec![0.2],
        },
        ..BenchmarkConfig::default()
    };
    let report = run_benchmark(&config)?;
    print!("{}", report.render_tables());
    Ok(report)
}

fn main() -> cubt::Result<()> {
    run_example().map(|_| ())
}
