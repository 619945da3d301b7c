//! Range search under a 20-day moving average on a synthetic corpus, checked
//! against a sequential scan.

use tsquery::feature::SpaceMode;
use tsquery::index::{sequential_scan, RTree, RangeQuery};
use tsquery::io::generate_synthetic;
use tsquery::transform::make_moving_average;

fn main() -> tsquery::error::Result<()> {
    let rel = generate_synthetic(2000, 128, 42, false)?;
    // Mean, std and the first two coefficients of the normal form: 6 dims.
    let tree = RTree::build(&rel, SpaceMode::NormalForm(2), 16)?;
    println!("{} series, height {}, {} nodes", tree.len(), tree.height(), tree.node_count());

    let smooth = make_moving_average(20, 128, 128, None)?;
    let query = tree.record("s0007").unwrap().clone_prepared();
    let q = RangeQuery::new(query, 2.0, smooth)?.transform_query(tree.mode())?;

    let (hits, stats) = tree.transformed_range_search(&q)?;
    for h in &hits {
        println!("{:>8}  {:.4}", h.id, h.distance);
    }
    println!(
        "visited {} nodes, {} candidates, {} coefficients read",
        stats.nodes_visited, stats.candidates, stats.coefficients_touched
    );

    let (scan, scan_stats) = sequential_scan(tree.records(), tree.mode(), &q, true)?;
    assert_eq!(scan, hits);
    println!("scan agrees; it read {} coefficients", scan_stats.coefficients_touched);
    Ok(())
}
