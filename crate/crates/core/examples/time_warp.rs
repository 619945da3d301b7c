//! A short pattern matched against a series that runs at half speed.
//! No window of the slow series is close to the pattern, but stretching the
//! pattern's spectrum by 2 reproduces the slow series exactly.

use tsquery::samples::{WARP_P, WARP_S};
use tsquery::spectral::{dft, Signal};
use tsquery::transform::make_time_warp;

fn main() -> tsquery::error::Result<()> {
    let p = Signal::new(WARP_P.to_vec())?;
    let s = Signal::new(WARP_S.to_vec())?;

    let best = WARP_S
        .windows(WARP_P.len())
        .map(|w| p.distance(&Signal::new(w.to_vec()).unwrap()).unwrap())
        .fold(f64::INFINITY, f64::min);
    println!("closest window of s to p: {best:.4}");

    // The stretched coefficients keep the 1/sqrt(4) scale of p's grid,
    // while dft(s) uses 1/sqrt(8); rescale s to match.
    let warp = make_time_warp(2, p.len(), p.len())?;
    let stretched = warp.apply_to_spectrum(&dft(&p))?;
    let scale = (s.len() as f64 / p.len() as f64).sqrt();
    let target = dft(&s);
    for (f, (a, b)) in stretched.coeffs().iter().zip(target.coeffs()).enumerate() {
        println!("coefficient {f}: warped p = {a:.4}   s = {:.4}", b * scale);
    }
    Ok(())
}
