//! Finds anti-correlated series by joining the relation with its reversed
//! (negated) self.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsquery::feature::SpaceMode;
use tsquery::index::{JoinQuery, RTree};
use tsquery::io::generate_synthetic;
use tsquery::series::{Relation, TimeSeries};
use tsquery::transform::make_reverse;

fn main() -> tsquery::error::Result<()> {
    let n = 64;
    let base = generate_synthetic(200, n, 3, false)?;
    let mut series: Vec<TimeSeries> = base.iter().cloned().collect();

    // Three mirror images with a little noise: up when the original goes down.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for src in ["s0010", "s0050", "s0150"] {
        let x = base.get(src).unwrap().values.values();
        let mean = x.iter().sum::<f64>() / n as f64;
        let mirror = x.iter().map(|v| 2.0 * mean - v + rng.gen_range(-0.3..0.3)).collect();
        series.push(TimeSeries::new(format!("mirror-{src}"), mirror)?);
    }
    let rel = Relation::new(series)?;
    let tree = RTree::build(&rel, SpaceMode::NormalForm(2), 16)?;

    // One side reversed: pairs (a, b) with D(-a, b) small in normal form.
    let t = make_reverse(n)?;
    let (pairs, stats) = tree.transformed_join(&JoinQuery::new(1.0, t)?.one_sided())?;
    println!("{} pairs ({} nodes visited over all probes)", pairs.len(), stats.nodes_visited);
    for p in &pairs {
        println!("  {:>14} ~ {:<14} {:.4}", p.id_a, p.id_b, p.distance);
    }
    Ok(())
}
