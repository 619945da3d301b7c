//! k nearest neighbours, with and without smoothing the data first.

use tsquery::feature::SpaceMode;
use tsquery::index::{transform_prepared, KnnQuery, RTree};
use tsquery::io::generate_synthetic;
use tsquery::transform::{make_moving_average, Transformation};

fn main() -> tsquery::error::Result<()> {
    let rel = generate_synthetic(1000, 64, 7, false)?;
    let tree = RTree::build(&rel, SpaceMode::NormalForm(3), 16)?;
    let query = tree.record("s0123").unwrap().clone_prepared();

    let plain = KnnQuery::new(query.clone(), 5, Transformation::identity(64)?)?;
    let (hits, stats) = tree.transformed_knn(&plain)?;
    println!("raw shape ({} of {} nodes visited):", stats.nodes_visited, tree.node_count());
    for h in &hits {
        println!("  {:>6}  {:.4}", h.id, h.distance);
    }

    let t = make_moving_average(10, 64, 64, None)?;
    let smoothed = transform_prepared(&t, &query, tree.mode())?;
    let (hits, stats) = tree.transformed_knn(&KnnQuery::new(smoothed, 5, t)?)?;
    println!("10-day averages ({} nodes visited):", stats.nodes_visited);
    for h in &hits {
        println!("  {:>6}  {:.4}", h.id, h.distance);
    }
    Ok(())
}
