//! Distance that may pay for transformations: the cheapest combination of
//! plain distance and transformation costs.

use tsquery::samples::{S1, S2};
use tsquery::spectral::Signal;
use tsquery::transform::{cost_distance, make_moving_average, make_reverse, TransformSet};

fn main() -> tsquery::error::Result<()> {
    let s1 = Signal::new(S1.to_vec())?;
    let s2 = Signal::new(S2.to_vec())?;
    for cost in [0.0, 2.0, 5.0, 20.0] {
        let ts = TransformSet::new(vec![
            make_moving_average(3, 15, 15, None)?.with_cost(cost)?,
            make_reverse(15)?.with_cost(cost)?,
        ]);
        println!("transformation cost {cost:>4}: distance {:.4}", cost_distance(&s1, &s2, &ts)?);
    }
    let capped = TransformSet::new(vec![make_moving_average(3, 15, 15, None)?.with_cost(2.0)?]).with_budget(3.0)?;
    println!("budget 3, one side only:    {:.4}", cost_distance(&s1, &s2, &capped)?);
    Ok(())
}
