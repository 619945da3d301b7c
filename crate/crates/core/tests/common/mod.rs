//! Reference implementations used as oracles. Nothing here calls into the
//! library's transform or search code: spectra come from a naive O(n^2)
//! DFT, transformations are applied in the time domain where possible, and
//! searches are brute force.

#![allow(dead_code)]

use std::f64::consts::TAU;

use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn naive_dft(x: &[f64]) -> Vec<C> {
    let n = x.len();
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|f| {
            x.iter()
                .enumerate()
                .map(|(t, &v)| C::from_polar(v, -TAU * ((t * f) % n) as f64 / n as f64))
                .sum::<C>()
                * scale
        })
        .collect()
}

pub fn naive_idft(x: &[C]) -> Vec<C> {
    let n = x.len();
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|t| {
            x.iter()
                .enumerate()
                .map(|(f, &v)| v * C::from_polar(1.0, TAU * ((t * f) % n) as f64 / n as f64))
                .sum::<C>()
                * scale
        })
        .collect()
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn spec_dist(a: &[C], b: &[C]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// Zero mean, unit population standard deviation.
pub fn normalize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let std = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    x.iter().map(|v| (v - mean) / std).collect()
}

/// Circular trailing moving average: `y_t = mean(x_{t-m+1..=t})`.
pub fn trailing_mavg(x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|t| (0..m).map(|j| x[(t + n - j) % n]).sum::<f64>() / m as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleT {
    Identity,
    Mavg(usize),
    Rev,
    Warp(usize),
}

impl OracleT {
    pub fn cli_name(self) -> String {
        match self {
            OracleT::Identity => "identity".into(),
            OracleT::Mavg(m) => format!("mavg:{m}"),
            OracleT::Rev => "rev".into(),
            OracleT::Warp(m) => format!("warp:{m}"),
        }
    }
}

pub const BUILT_INS: [OracleT; 5] = [
    OracleT::Identity,
    OracleT::Mavg(3),
    OracleT::Mavg(20),
    OracleT::Rev,
    OracleT::Warp(2),
];

/// The spectrum of `T(x)` computed without the library: smoothing and
/// negation in the time domain, warping by summing over the stretched
/// series with the original `1/sqrt(n)` scale.
pub fn oracle_transformed(t: OracleT, x: &[f64]) -> Vec<C> {
    match t {
        OracleT::Identity => naive_dft(x),
        OracleT::Mavg(m) => naive_dft(&trailing_mavg(x, m)),
        OracleT::Rev => naive_dft(&x.iter().map(|v| -v).collect::<Vec<_>>()),
        OracleT::Warp(m) => {
            let n = x.len();
            let mn = m * n;
            (0..n)
                .map(|f| {
                    (0..mn)
                        .map(|t| C::from_polar(x[t / m], -TAU * ((t * f) % mn) as f64 / mn as f64))
                        .sum::<C>()
                        / (n as f64).sqrt()
                })
                .collect()
        }
    }
}

pub fn random_walks(seed: u64, count: usize, n: usize) -> Vec<(String, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let mut x = rng.gen_range(20.0..99.0);
            let v = (0..n)
                .map(|_| {
                    x += rng.gen_range(-4.0..4.0);
                    x
                })
                .collect();
            (format!("w{i:04}"), v)
        })
        .collect()
}

/// `(id, distance)` for every object with `D(T(o), q) < eps`, sorted by
/// distance then id.
pub fn brute_range(data: &[(String, Vec<C>)], q: &[C], eps: f64) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = data
        .iter()
        .map(|(id, s)| (id.clone(), spec_dist(s, q)))
        .filter(|(_, d)| *d < eps)
        .collect();
    sort_hits(&mut out);
    out
}

pub fn brute_knn(data: &[(String, Vec<C>)], q: &[C], k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = data.iter().map(|(id, s)| (id.clone(), spec_dist(s, q))).collect();
    sort_hits(&mut all);
    all.truncate(k);
    all
}

/// Unordered pairs `(a, b)`, `a < b`, with `D(T(a), T(b)) < eps`.
pub fn brute_join(data: &[(String, Vec<C>)], eps: f64) -> Vec<(String, String, f64)> {
    let mut out = Vec::new();
    for i in 0..data.len() {
        for j in i + 1..data.len() {
            let d = spec_dist(&data[i].1, &data[j].1);
            if d < eps {
                let (a, b) = if data[i].0 < data[j].0 { (i, j) } else { (j, i) };
                out.push((data[a].0.clone(), data[b].0.clone(), d));
            }
        }
    }
    out.sort_by(|x, y| x.2.total_cmp(&y.2).then_with(|| x.0.cmp(&y.0)).then_with(|| x.1.cmp(&y.1)));
    out
}

pub fn sort_hits(v: &mut [(String, f64)]) {
    v.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
}
