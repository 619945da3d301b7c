//! Two closing-price series that look far apart until both are smoothed
//! with a 3-day moving average.

use tsquery::samples::{S1, S2};
use tsquery::series::moving_average_time;
use tsquery::spectral::{dft, Signal};
use tsquery::transform::{cost_distance, make_moving_average, TransformSet};

fn main() -> tsquery::error::Result<()> {
    let s1 = Signal::new(S1.to_vec())?;
    let s2 = Signal::new(S2.to_vec())?;
    println!("raw distance:          {:.4}", s1.distance(&s2)?);

    // Time domain: circular trailing window.
    let a1 = moving_average_time(&s1, 3, None)?;
    let a2 = moving_average_time(&s2, 3, None)?;
    println!("mavg3, time domain:    {:.4}", a1.distance(&a2)?);

    // Frequency domain: one complex multiplier per coefficient.
    let t = make_moving_average(3, 15, 15, None)?;
    let f1 = t.apply_to_spectrum(&dft(&s1))?;
    let f2 = t.apply_to_spectrum(&dft(&s2))?;
    println!("mavg3, frequency:      {:.4}", f1.distance(&f2)?);

    // The same thing phrased as a transformation-aware distance.
    let ts = TransformSet::new(vec![t]);
    println!("cost distance (free):  {:.4}", cost_distance(&s1, &s2, &ts)?);
    Ok(())
}
