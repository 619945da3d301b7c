//! Discrete Fourier transform with symmetric `1/sqrt(n)` normalization.
//!
//! Both directions carry the same `1/sqrt(n)` factor, so the transform is
//! unitary: energy and Euclidean distance are preserved exactly (up to
//! rounding). The price is a `sqrt(n)` factor in the convolution theorem:
//!
//! ```text
//! dft(conv(x, y)) = sqrt(n) * dft(x) * dft(y)
//! ```
//!
//! Power-of-two lengths go through an iterative radix-2 FFT; every other
//! length falls back to direct evaluation.

use std::f64::consts::{PI, TAU};
use std::ops::Index;

pub use num_complex::Complex64 as Complex;

use crate::error::{Error, Result};

/// A finite, non-empty, real-valued sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal(Vec<f64>);

impl Signal {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("signal must have at least one sample"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "signal sample {pos} is not finite ({})",
                values[pos]
            )));
        }
        Ok(Signal(values))
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Signal::new(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn energy(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    /// Euclidean distance between two signals of equal length.
    pub fn distance(&self, other: &Signal) -> Result<f64> {
        check_len(self.len(), other.len())?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// `a * self + b * other`, sample by sample.
    pub fn linear_combination(&self, a: f64, other: &Signal, b: f64) -> Result<Signal> {
        check_len(self.len(), other.len())?;
        Signal::new(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        )
    }
}

impl Index<usize> for Signal {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Complex DFT coefficients `X_0 .. X_{n-1}`, or a prefix of them.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum(Vec<Complex>);

impl Spectrum {
    pub fn new(coeffs: Vec<Complex>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::invalid("spectrum must have at least one coefficient"));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::invalid("spectrum coefficients must be finite"));
        }
        Ok(Spectrum(coeffs))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn coeffs(&self) -> &[Complex] {
        &self.0
    }

    pub fn into_coeffs(self) -> Vec<Complex> {
        self.0
    }

    pub fn energy(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn distance(&self, other: &Spectrum) -> Result<f64> {
        check_len(self.len(), other.len())?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    /// The first `k` coefficients.
    pub fn prefix(&self, k: usize) -> Result<Spectrum> {
        if k == 0 || k > self.len() {
            return Err(Error::invalid(format!(
                "prefix length {k} outside 1..={}",
                self.len()
            )));
        }
        Ok(Spectrum(self.0[..k].to_vec()))
    }
}

impl Index<usize> for Spectrum {
    type Output = Complex;

    fn index(&self, i: usize) -> &Complex {
        &self.0[i]
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    if (-PI..PI).contains(&theta) {
        return theta;
    }
    let mut r = (theta + PI).rem_euclid(TAU) - PI;
    if r >= PI {
        r -= TAU;
    }
    if r < -PI {
        r = -PI;
    }
    r
}

/// Phase angle in `[-pi, pi)`. The angle of zero is zero.
pub fn angle(c: Complex) -> f64 {
    if c.re == 0.0 && c.im == 0.0 {
        return 0.0;
    }
    wrap_angle(c.im.atan2(c.re))
}

pub fn from_polar(magnitude: f64, angle: f64) -> Complex {
    Complex::from_polar(magnitude, angle)
}

/// Forward transform, `X_f = 1/sqrt(n) * sum_t x_t e^{-j 2 pi t f / n}`.
pub fn dft(x: &Signal) -> Spectrum {
    let mut buf: Vec<Complex> = x.values().iter().map(|&v| Complex::new(v, 0.0)).collect();
    transform_in_place(&mut buf, Direction::Forward);
    Spectrum(buf)
}

/// Forward transform of complex input.
pub fn dft_complex(x: &[Complex]) -> Result<Spectrum> {
    if x.is_empty() {
        return Err(Error::invalid("cannot transform an empty sequence"));
    }
    let mut buf = x.to_vec();
    transform_in_place(&mut buf, Direction::Forward);
    Ok(Spectrum(buf))
}

/// Inverse transform keeping the complex result.
pub fn idft_complex(spectrum: &Spectrum) -> Vec<Complex> {
    let mut buf = spectrum.0.clone();
    transform_in_place(&mut buf, Direction::Inverse);
    buf
}

/// Inverse transform back to a real signal.
///
/// Fails if any sample keeps an imaginary part above `1e-9 * (1 + ||X||)`,
/// which means the spectrum was not conjugate symmetric.
pub fn idft(spectrum: &Spectrum) -> Result<Signal> {
    let tol = 1e-9 * (1.0 + spectrum.energy().sqrt());
    let buf = idft_complex(spectrum);
    if let Some((t, c)) = buf.iter().enumerate().find(|(_, c)| c.im.abs() >= tol) {
        return Err(Error::NumericConsistency(format!(
            "inverse transform sample {t} has imaginary residue {:e} (tolerance {tol:e})",
            c.im
        )));
    }
    Signal::new(buf.into_iter().map(|c| c.re).collect())
}

/// `conv_i = sum_k x_k y_{(i - k) mod n}`.
pub fn circular_convolution(x: &Signal, y: &Signal) -> Result<Signal> {
    check_len(x.len(), y.len())?;
    let n = x.len();
    let out = (0..n)
        .map(|i| {
            (0..n)
                .map(|k| x[k] * y[(i + n - k) % n])
                .sum::<f64>()
        })
        .collect();
    Signal::new(out)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => -1.0,
            Direction::Inverse => 1.0,
        }
    }
}

fn transform_in_place(buf: &mut [Complex], dir: Direction) {
    let n = buf.len();
    if n.is_power_of_two() {
        fft_radix2(buf, dir);
    } else {
        direct(buf, dir);
    }
    let scale = 1.0 / (n as f64).sqrt();
    for c in buf.iter_mut() {
        *c *= scale;
    }
}

/// Unnormalized `sum_t x_t e^{sign j 2 pi t f / n}` by direct summation.
fn direct(buf: &mut [Complex], dir: Direction) {
    let n = buf.len();
    let twiddles = twiddle_table(n, dir);
    let out: Vec<Complex> = (0..n)
        .map(|f| {
            buf.iter()
                .enumerate()
                .map(|(t, &x)| x * twiddles[(t * f) % n])
                .sum()
        })
        .collect();
    buf.copy_from_slice(&out);
}

fn twiddle_table(n: usize, dir: Direction) -> Vec<Complex> {
    (0..n)
        .map(|i| {
            let theta = dir.sign() * TAU * i as f64 / n as f64;
            Complex::new(theta.cos(), theta.sin())
        })
        .collect()
}

/// Iterative Cooley-Tukey, decimation in time. `buf.len()` must be a power of two.
fn fft_radix2(buf: &mut [Complex], dir: Direction) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            buf.swap(i, j);
        }
    }
    let twiddles = twiddle_table(n, dir);
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = twiddles[k * stride];
                let u = buf[start + k];
                let v = buf[start + k + half] * w;
                buf[start + k] = u + v;
                buf[start + k + half] = u - v;
            }
        }
        len <<= 1;
    }
}
