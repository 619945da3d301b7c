//! The four query methods side by side: naive scan, early-abandoning scan,
//! an index over pre-transformed data, and the transformed index.

use tsquery::bench::{run_bench, Method, Workload};
use tsquery::feature::SpaceMode;
use tsquery::index::RTree;
use tsquery::io::generate_synthetic;
use tsquery::transform::make_moving_average;

fn main() -> tsquery::error::Result<()> {
    let rel = generate_synthetic(5000, 128, 11, false)?;
    let tree = RTree::build(&rel, SpaceMode::NormalForm(2), 16)?;
    let t = make_moving_average(20, 128, 128, None)?;

    let queries = tree.records().iter().step_by(100).map(|r| r.clone_prepared()).collect();
    let range = Workload::Range { queries, epsilon: 0.5, transform: t.clone() };
    let join = Workload::Join { epsilon: 0.5, transform: t };

    for w in [range, join] {
        let report = run_bench(&tree, &w, &Method::ALL)?;
        report.write_csv(std::io::stdout().lock()).unwrap();
        println!("answers agree: {}\n", report.answers_agree());
    }
    Ok(())
}
