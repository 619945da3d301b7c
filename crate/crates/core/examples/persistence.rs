//! Save an index, load it back, and show that damage is caught.

use tsquery::error::Error;
use tsquery::feature::SpaceMode;
use tsquery::index::{RTree, RangeQuery};
use tsquery::io::{generate_synthetic, load_index, save_index};
use tsquery::transform::make_moving_average;

fn main() -> tsquery::error::Result<()> {
    let dir = std::env::temp_dir().join(format!("tsquery-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
    let path = dir.join("stocks.tsrt");

    let rel = generate_synthetic(500, 64, 1, false)?;
    let tree = RTree::build(&rel, SpaceMode::NormalForm(2), 16)?;
    save_index(&tree, &path)?;
    let loaded = load_index(&path)?;

    let q = RangeQuery::new(tree.records()[0].clone_prepared(), 2.5, make_moving_average(5, 64, 64, None)?)?;
    let before = tree.transformed_range_search(&q)?.0;
    let after = loaded.transformed_range_search(&q)?.0;
    println!("{} answers before, {} after, identical: {}", before.len(), after.len(), before == after);

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[200] ^= 0xff;
    std::fs::write(&path, &bytes).unwrap();
    match load_index(&path) {
        Err(e) => println!("corrupted snapshot rejected: {e}"),
        Ok(_) => println!("corruption went unnoticed"),
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}
