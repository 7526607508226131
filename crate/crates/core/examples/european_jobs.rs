// Cluster 26 countries by their employment shares and print the groups.

use cubt::datagen::european_jobs;
use cubt::{fit, Params};

pub fn run_example() -> cubt::Result<Vec<Vec<String>>> {
    let data = european_jobs();
    let res = fit(&data, &Params::default().with_k(4))?;
    let names = data.row_names().expect("countries");
    let mut groups = vec![Vec::new(); res.k_found];
    for (name, &c) in names.iter().zip(&res.assignments) {
        groups[c - 1].push(name.clone());
    }
    for (c, members) in groups.iter().enumerate() {
        println!("cluster {}: {}", c + 1, members.join(", "));
    }
    print!("{}", res.tree_model().to_dot());
    Ok(groups)
}

fn main() -> cubt::Result<()> {
    run_example().map(|_| ())
}
