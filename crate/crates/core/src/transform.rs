//! Linear transformations `(a, b)` acting coefficient-wise on spectra as
//! `Y_f = a_f * X_f + b_f`.
//!
//! A transformation can be pushed through an R-tree built over polar
//! features only when `b = 0` (multiplying by `a_f` scales magnitudes and
//! rotates angles, both of which map boxes to boxes). With a real `a` and
//! arbitrary `b` it is safe for a rectangular (real, imaginary) layout
//! instead. Anything else is usable by the sequential scan only.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::series::resolve_weights;
use crate::spectral::{Complex, Signal, Spectrum};

/// Real affine map `x -> scale * x + offset`, used on the mean and std
/// dimensions of normal-form features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub scale: f64,
    pub offset: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine {
        scale: 1.0,
        offset: 0.0,
    };

    pub fn new(scale: f64, offset: f64) -> Self {
        Affine { scale, offset }
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.scale * x + self.offset
    }

    /// Image of a closed interval, swapping endpoints for negative scales.
    pub fn apply_interval(&self, lo: f64, hi: f64) -> (f64, f64) {
        let (a, b) = (self.apply(lo), self.apply(hi));
        if self.scale < 0.0 {
            (b, a)
        } else {
            (a, b)
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Affine::IDENTITY
    }
}

impl Default for Affine {
    fn default() -> Self {
        Affine::IDENTITY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transformation {
    name: String,
    a: Vec<Complex>,
    b: Vec<Complex>,
    mean_action: Affine,
    std_action: Affine,
    cost: f64,
}

impl Transformation {
    /// General constructor. Construction never fails on safety grounds; the
    /// flags are recorded and checked when the transformation is used on an
    /// index.
    pub fn new(
        name: impl Into<String>,
        a: Vec<Complex>,
        b: Vec<Complex>,
        mean_action: Affine,
        std_action: Affine,
    ) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::invalid(format!(
                "multiplier and addend lengths must match and be non-zero ({} vs {})",
                a.len(),
                b.len()
            )));
        }
        if a.iter().chain(&b).any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::invalid("transformation coefficients must be finite"));
        }
        Ok(Transformation {
            name: name.into(),
            a,
            b,
            mean_action,
            std_action,
            cost: 0.0,
        })
    }

    pub fn with_cost(mut self, cost: f64) -> Result<Self> {
        if !(cost >= 0.0) {
            return Err(Error::invalid(format!("cost must be non-negative, got {cost}")));
        }
        self.cost = cost;
        Ok(self)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn identity(len: usize) -> Result<Self> {
        Transformation::new(
            "identity",
            vec![Complex::new(1.0, 0.0); len],
            vec![Complex::new(0.0, 0.0); len],
            Affine::IDENTITY,
            Affine::IDENTITY,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn multipliers(&self) -> &[Complex] {
        &self.a
    }

    pub fn addends(&self) -> &[Complex] {
        &self.b
    }

    pub fn mean_action(&self) -> Affine {
        self.mean_action
    }

    pub fn std_action(&self) -> Affine {
        self.std_action
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    /// Safe for the polar (magnitude, angle) feature space: `b = 0`.
    pub fn is_polar_safe(&self) -> bool {
        self.b.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    /// Safe for the rectangular (real, imaginary) feature space: `a` real.
    pub fn is_rect_safe(&self) -> bool {
        self.a.iter().all(|c| c.im == 0.0)
    }

    pub fn is_identity(&self) -> bool {
        self.is_polar_safe()
            && self.a.iter().all(|c| *c == Complex::new(1.0, 0.0))
            && self.mean_action.is_identity()
            && self.std_action.is_identity()
    }

    pub fn require_polar_safe(&self) -> Result<()> {
        if self.is_polar_safe() {
            Ok(())
        } else {
            Err(Error::UnsafeTransformation {
                name: self.name.clone(),
            })
        }
    }

    /// `a_f * x + b_f` for a single coefficient.
    #[inline]
    pub fn apply_coeff(&self, f: usize, x: Complex) -> Complex {
        self.a[f] * x + self.b[f]
    }

    /// `Y_f = a_f X_f + b_f`; the spectrum (or prefix) must match the
    /// transformation length.
    pub fn apply_to_spectrum(&self, x: &Spectrum) -> Result<Spectrum> {
        if x.len() != self.len() {
            return Err(Error::invalid(format!(
                "transformation '{}' has {} coefficients, spectrum has {}",
                self.name,
                self.len(),
                x.len()
            )));
        }
        Spectrum::new(
            x.coeffs()
                .iter()
                .enumerate()
                .map(|(f, &c)| self.apply_coeff(f, c))
                .collect(),
        )
    }

    /// Applies to the first `x.len()` coefficients; the transformation may
    /// be longer than the input.
    pub fn apply_to_prefix(&self, x: &[Complex]) -> Result<Vec<Complex>> {
        if x.len() > self.len() {
            return Err(Error::invalid(format!(
                "transformation '{}' covers {} coefficients, input has {}",
                self.name,
                self.len(),
                x.len()
            )));
        }
        Ok(x.iter().enumerate().map(|(f, &c)| self.apply_coeff(f, c)).collect())
    }
}

/// `m`-window moving average as a spectral multiplier.
///
/// `a_f = sum_{t<m} w_t e^{-j 2 pi t f / n}`, i.e. the weight vector's
/// transform scaled by `sqrt(n)`; with the unitary DFT this reproduces the
/// trailing circular moving average exactly. Only the first `k`
/// coefficients are kept.
pub fn make_moving_average(
    m: usize,
    n: usize,
    k: usize,
    weights: Option<&[f64]>,
) -> Result<Transformation> {
    let w = resolve_weights(m, n, weights)?;
    check_prefix(k, n)?;
    let a = (0..k)
        .map(|f| {
            w.iter()
                .enumerate()
                .map(|(t, &wt)| {
                    let th = -TAU * ((t * f) % n) as f64 / n as f64;
                    Complex::new(wt * th.cos(), wt * th.sin())
                })
                .sum()
        })
        .collect();
    Transformation::new(
        format!("mavg{m}"),
        a,
        vec![Complex::new(0.0, 0.0); k],
        Affine::IDENTITY,
        Affine::IDENTITY,
    )
}

/// Negation of the series, `a = -1`. Flips the sign of the mean as well.
pub fn make_reverse(k: usize) -> Result<Transformation> {
    if k == 0 {
        return Err(Error::invalid("reverse needs at least one coefficient"));
    }
    Transformation::new(
        "rev",
        vec![Complex::new(-1.0, 0.0); k],
        vec![Complex::new(0.0, 0.0); k],
        Affine::new(-1.0, 0.0),
        Affine::IDENTITY,
    )
}

/// Uniform time stretch by an integer factor `m` (each sample repeated `m`
/// times), `a_f = sum_{t<m} e^{-j 2 pi t f / (m n)}`.
///
/// The stretched coefficients keep the `1/sqrt(n)` factor of the original
/// length, so energy grows by a factor of `m`.
pub fn make_time_warp(m: usize, n: usize, k: usize) -> Result<Transformation> {
    if m == 0 {
        return Err(Error::invalid("warp factor must be at least 1"));
    }
    check_prefix(k, n)?;
    let mn = m * n;
    let a = (0..k)
        .map(|f| {
            (0..m)
                .map(|t| {
                    let th = -TAU * ((t * f) % mn) as f64 / mn as f64;
                    Complex::new(th.cos(), th.sin())
                })
                .sum()
        })
        .collect();
    Transformation::new(
        format!("warp{m}"),
        a,
        vec![Complex::new(0.0, 0.0); k],
        Affine::IDENTITY,
        Affine::IDENTITY,
    )
}

/// General per-coefficient stretch and translation.
pub fn make_scale_shift(
    scale: Vec<Complex>,
    shift: Vec<Complex>,
    mean_action: Affine,
    std_action: Affine,
) -> Result<Transformation> {
    Transformation::new("affine", scale, shift, mean_action, std_action)
}

/// Time-domain affine map `s -> scale * s + shift` expressed on length-`n`
/// spectra: a uniform multiplier, plus `shift * sqrt(n)` on the DC term.
pub fn make_time_affine(scale: f64, shift: f64, n: usize) -> Result<Transformation> {
    if n == 0 {
        return Err(Error::invalid("length must be at least 1"));
    }
    let mut b = vec![Complex::new(0.0, 0.0); n];
    b[0] = Complex::new(shift * (n as f64).sqrt(), 0.0);
    make_scale_shift(
        vec![Complex::new(scale, 0.0); n],
        b,
        Affine::new(scale, shift),
        Affine::new(scale.abs(), 0.0),
    )
}

fn check_prefix(k: usize, n: usize) -> Result<()> {
    if k < 1 || k > n {
        return Err(Error::invalid(format!("coefficient count {k} outside 1..={n}")));
    }
    Ok(())
}

/// Candidate transformations with a total cost budget and recursion depth
/// for [`cost_distance`].
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSet {
    pub transforms: Vec<Transformation>,
    pub budget: f64,
    pub depth: usize,
}

impl TransformSet {
    pub fn new(transforms: Vec<Transformation>) -> Self {
        TransformSet {
            transforms,
            budget: f64::INFINITY,
            depth: 1,
        }
    }

    pub fn with_budget(mut self, budget: f64) -> Result<Self> {
        if !(budget >= 0.0) {
            return Err(Error::invalid(format!("budget must be non-negative, got {budget}")));
        }
        self.budget = budget;
        Ok(self)
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }
}

/// Cost-bounded transformed distance.
///
/// The minimum of the plain Euclidean distance and, for every candidate
/// transformation (or pair), its cost plus the distance after applying it to
/// the left side, the right side, or both, recursing `depth` times. Branches
/// whose accumulated cost exceeds the budget are dropped. Applying one
/// transformation to both sides charges its cost twice.
pub fn cost_distance(x: &Signal, y: &Signal, ts: &TransformSet) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if let Some(t) = ts.transforms.iter().find(|t| t.len() != x.len()) {
        return Err(Error::invalid(format!(
            "transformation '{}' has {} coefficients, series length is {}",
            t.name(),
            t.len(),
            x.len()
        )));
    }
    let xs = crate::spectral::dft(x).into_coeffs();
    let ys = crate::spectral::dft(y).into_coeffs();
    Ok(cost_distance_rec(&xs, &ys, ts, ts.depth, 0.0))
}

fn cost_distance_rec(x: &[Complex], y: &[Complex], ts: &TransformSet, depth: usize, spent: f64) -> f64 {
    let mut best = spectral_distance(x, y);
    if depth == 0 {
        return best;
    }
    let apply = |t: &Transformation, v: &[Complex]| -> Vec<Complex> {
        v.iter().enumerate().map(|(f, &c)| t.apply_coeff(f, c)).collect()
    };
    for t in &ts.transforms {
        let c = spent + t.cost();
        if c > ts.budget {
            continue;
        }
        let tx = apply(t, x);
        let ty = apply(t, y);
        best = best.min(t.cost() + cost_distance_rec(&tx, y, ts, depth - 1, c));
        best = best.min(t.cost() + cost_distance_rec(x, &ty, ts, depth - 1, c));
    }
    for t1 in &ts.transforms {
        for t2 in &ts.transforms {
            let c = spent + t1.cost() + t2.cost();
            if c > ts.budget {
                continue;
            }
            let tx = apply(t1, x);
            let ty = apply(t2, y);
            best = best.min(t1.cost() + t2.cost() + cost_distance_rec(&tx, &ty, ts, depth - 1, c));
        }
    }
    best
}

pub(crate) fn spectral_distance(x: &[Complex], y: &[Complex]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
}

/// Transformation named on the command line or in a registry file, resolved
/// lazily once the series length is known.
///
/// Command-line syntax: `identity`, `rev`, `mavg:M`, `mavg:M:W1,W2,...`,
/// `warp:M`, `affine:SCALE[:SHIFT]`.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformSpec {
    Identity,
    Reverse,
    MovingAverage { m: usize, weights: Option<Vec<f64>> },
    TimeWarp { m: usize },
    Affine {
        scale: Complex,
        shift: Complex,
        mean: Affine,
        std: Affine,
    },
}

impl TransformSpec {
    /// Builds the transformation over all `n` coefficients.
    pub fn build(&self, n: usize) -> Result<Transformation> {
        match self {
            TransformSpec::Identity => Transformation::identity(n),
            TransformSpec::Reverse => make_reverse(n),
            TransformSpec::MovingAverage { m, weights } => {
                make_moving_average(*m, n, n, weights.as_deref())
            }
            TransformSpec::TimeWarp { m } => make_time_warp(*m, n, n),
            TransformSpec::Affine {
                scale,
                shift,
                mean,
                std,
            } => {
                let mut b = vec![Complex::new(0.0, 0.0); n];
                b[0] = shift * (n as f64).sqrt();
                make_scale_shift(vec![*scale; n], b, *mean, *std)
            }
        }
    }
}

impl fmt::Display for TransformSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformSpec::Identity => write!(f, "identity"),
            TransformSpec::Reverse => write!(f, "rev"),
            TransformSpec::MovingAverage { m, weights: None } => write!(f, "mavg:{m}"),
            TransformSpec::MovingAverage {
                m,
                weights: Some(w),
            } => {
                let w: Vec<String> = w.iter().map(|v| v.to_string()).collect();
                write!(f, "mavg:{m}:{}", w.join(","))
            }
            TransformSpec::TimeWarp { m } => write!(f, "warp:{m}"),
            TransformSpec::Affine { scale, shift, .. } => {
                write!(f, "affine:{}:{}", scale.re, shift.re)
            }
        }
    }
}

impl FromStr for TransformSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownTransform(s.to_string());
        let mut parts = s.trim().split(':');
        let kind = parts.next().ok_or_else(unknown)?;
        let rest: Vec<&str> = parts.collect();
        let spec = match (kind, rest.as_slice()) {
            ("identity", []) => TransformSpec::Identity,
            ("rev", []) => TransformSpec::Reverse,
            ("mavg", [m]) => TransformSpec::MovingAverage {
                m: parse_num(m, s)?,
                weights: None,
            },
            ("mavg", [m, w]) => TransformSpec::MovingAverage {
                m: parse_num(m, s)?,
                weights: Some(w.split(',').map(|v| parse_num(v, s)).collect::<Result<_>>()?),
            },
            ("warp", [m]) => TransformSpec::TimeWarp { m: parse_num(m, s)? },
            ("affine", [scale]) => time_affine_spec(parse_num(scale, s)?, 0.0),
            ("affine", [scale, shift]) => {
                time_affine_spec(parse_num(scale, s)?, parse_num(shift, s)?)
            }
            _ => return Err(unknown()),
        };
        Ok(spec)
    }
}

fn time_affine_spec(scale: f64, shift: f64) -> TransformSpec {
    TransformSpec::Affine {
        scale: Complex::new(scale, 0.0),
        shift: Complex::new(shift, 0.0),
        mean: Affine::new(scale, shift),
        std: Affine::new(scale.abs(), 0.0),
    }
}

fn parse_num<T: FromStr>(v: &str, whole: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::invalid(format!("bad number '{v}' in transformation '{whole}'")))
}

fn parse_complex(v: &str) -> Result<Complex> {
    let v = v.trim();
    v.parse::<f64>()
        .map(|re| Complex::new(re, 0.0))
        .or_else(|_| v.parse::<Complex>())
        .map_err(|_| Error::invalid(format!("bad complex number '{v}'")))
}

/// One named entry of a transformation registry.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistryEntry {
    pub name: String,
    pub spec: TransformSpec,
    pub cost: f64,
}

impl RegistryEntry {
    pub fn build(&self, n: usize) -> Result<Transformation> {
        self.spec.build(n)?.with_name(&self.name).with_cost(self.cost)
    }
}

/// Parses registry text, one entry per line:
///
/// ```text
/// # name, kind, params, cost
/// smooth, mavg, m=20, 0
/// weighted, mavg, m=3; weights=0.2:0.3:0.5, 0.5
/// flip, rev, , 0
/// stretch, warp, m=2, 1
/// lift, affine, scale=1; shift=0; mean=1:5; std=2:0, 0
/// plain, identity, , 0
/// ```
///
/// Blank lines and lines starting with `#` are ignored.
pub fn parse_registry(text: &str) -> Result<Vec<RegistryEntry>> {
    let mut out: Vec<RegistryEntry> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let row = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                row,
                column: fields.len().min(4),
                message: "expected 4 fields: name, kind, params, cost".into(),
            });
        }
        let at = |column: usize, e: Error| Error::Parse {
            row,
            column,
            message: e.to_string(),
        };
        let name = fields[0];
        if name.is_empty() {
            return Err(at(1, Error::invalid("empty name")));
        }
        if out.iter().any(|e| e.name == name) {
            return Err(at(1, Error::invalid(format!("duplicate name '{name}'"))));
        }
        let params = parse_params(fields[2]).map_err(|e| at(3, e))?;
        let spec = spec_from_params(fields[1], &params).map_err(|e| at(2, e))?;
        let cost: f64 = fields[3]
            .parse()
            .map_err(|_| at(4, Error::invalid(format!("bad cost '{}'", fields[3]))))?;
        if !(cost >= 0.0) {
            return Err(at(4, Error::invalid("cost must be non-negative")));
        }
        out.push(RegistryEntry {
            name: name.to_string(),
            spec,
            cost,
        });
    }
    Ok(out)
}

fn parse_params(field: &str) -> Result<Vec<(String, String)>> {
    field
        .split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::invalid(format!("parameter '{p}' is not key=value")))
        })
        .collect()
}

fn spec_from_params(kind: &str, params: &[(String, String)]) -> Result<TransformSpec> {
    let get = |key: &str| params.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
    let allow = |keys: &[&str]| -> Result<()> {
        match params.iter().find(|(k, _)| !keys.contains(&k.as_str())) {
            Some((k, _)) => Err(Error::invalid(format!("unexpected parameter '{k}' for {kind}"))),
            None => Ok(()),
        }
    };
    let need_m = || -> Result<usize> {
        get("m")
            .ok_or_else(|| Error::invalid(format!("{kind} needs m=")))?
            .parse()
            .map_err(|_| Error::invalid("m must be a positive integer"))
    };
    let affine = |key: &str| -> Result<Affine> {
        match get(key) {
            None => Ok(Affine::IDENTITY),
            Some(v) => {
                let (a, b) = v
                    .split_once(':')
                    .ok_or_else(|| Error::invalid(format!("{key} must be SCALE:OFFSET")))?;
                let p = |x: &str| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::invalid(format!("bad number '{x}' in {key}")))
                };
                Ok(Affine::new(p(a)?, p(b)?))
            }
        }
    };
    match kind {
        "identity" => {
            allow(&[])?;
            Ok(TransformSpec::Identity)
        }
        "rev" => {
            allow(&[])?;
            Ok(TransformSpec::Reverse)
        }
        "mavg" => {
            allow(&["m", "weights"])?;
            let weights = get("weights")
                .map(|w| {
                    w.split(':')
                        .map(|v| {
                            v.trim()
                                .parse::<f64>()
                                .map_err(|_| Error::invalid(format!("bad weight '{v}'")))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .transpose()?;
            Ok(TransformSpec::MovingAverage {
                m: need_m()?,
                weights,
            })
        }
        "warp" => {
            allow(&["m"])?;
            Ok(TransformSpec::TimeWarp { m: need_m()? })
        }
        "affine" => {
            allow(&["scale", "shift", "mean", "std"])?;
            Ok(TransformSpec::Affine {
                scale: get("scale").map(parse_complex).transpose()?.unwrap_or(Complex::new(1.0, 0.0)),
                shift: get("shift").map(parse_complex).transpose()?.unwrap_or_default(),
                mean: affine("mean")?,
                std: affine("std")?,
            })
        }
        other => Err(Error::UnknownTransform(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples::{S1, S2, WARP_P, WARP_S};
    use crate::series::moving_average_time;
    use crate::spectral::{dft, idft};

    fn sig(v: &[f64]) -> Signal {
        Signal::new(v.to_vec()).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    /// Appendix-style oracle: transform of the stretched series, keeping the
    /// `1/sqrt(n)` factor of the original length.
    fn stretched_coeff(s: &[f64], m: usize, f: usize) -> Complex {
        let n = s.len();
        let mn = m * n;
        (0..mn)
            .map(|t| {
                let v = s[t / m];
                let th = -TAU * (t * f) as f64 / mn as f64;
                c(v * th.cos(), v * th.sin())
            })
            .sum::<Complex>()
            / (n as f64).sqrt()
    }

    #[test]
    fn identity_leaves_spectrum_unchanged() {
        let x = dft(&sig(&S1));
        let t = Transformation::identity(x.len()).unwrap();
        assert_eq!(t.apply_to_spectrum(&x).unwrap(), x);
        assert!(t.is_identity());
    }

    #[test]
    fn reverse_negates() {
        let s = sig(&S2);
        let t = make_reverse(s.len()).unwrap();
        let y = t.apply_to_spectrum(&dft(&s)).unwrap();
        let back = idft(&y).unwrap();
        for (a, b) in back.values().iter().zip(s.values()) {
            assert!((a + b).abs() < 1e-9);
        }
        let twice = t.apply_to_spectrum(&y).unwrap();
        assert_eq!(twice, dft(&s));
        assert!(t.is_polar_safe() && t.is_rect_safe());
    }

    #[test]
    fn constant_map_ignores_input() {
        let target = vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.0, 0.0)];
        let t = make_scale_shift(vec![c(0.0, 0.0); 3], target.clone(), Affine::IDENTITY, Affine::IDENTITY)
            .unwrap();
        let x = dft(&sig(&[4.0, 1.0, 7.0]));
        assert_eq!(t.apply_to_spectrum(&x).unwrap().coeffs(), target.as_slice());
    }

    #[test]
    fn apply_length_mismatch() {
        let t = make_reverse(3).unwrap();
        assert!(t.apply_to_spectrum(&dft(&sig(&[1.0, 2.0]))).is_err());
    }

    #[test]
    fn window_of_one_is_identity_multiplier() {
        let t = make_moving_average(1, 10, 10, None).unwrap();
        for a in t.multipliers() {
            assert!((a - c(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn frequency_moving_average_matches_time_domain() {
        let s = sig(&S1);
        let t = make_moving_average(3, 15, 15, None).unwrap();
        let freq = idft(&t.apply_to_spectrum(&dft(&s)).unwrap()).unwrap();
        let time = moving_average_time(&s, 3, None).unwrap();
        assert!(freq.distance(&time).unwrap() < 1e-9);
    }

    #[test]
    fn three_day_average_distance_in_frequency_domain() {
        let t = make_moving_average(3, 15, 15, None).unwrap();
        let a = t.apply_to_spectrum(&dft(&sig(&S1))).unwrap();
        let b = t.apply_to_spectrum(&dft(&sig(&S2))).unwrap();
        assert!((a.distance(&b).unwrap() - 0.47).abs() < 0.01);
    }

    #[test]
    fn weighted_average_matches_time_domain() {
        let s = sig(&S2);
        let w = [0.5, 0.3, 0.2];
        let t = make_moving_average(3, 15, 15, Some(&w)).unwrap();
        let freq = idft(&t.apply_to_spectrum(&dft(&s)).unwrap()).unwrap();
        let time = moving_average_time(&s, 3, Some(&w)).unwrap();
        assert!(freq.distance(&time).unwrap() < 1e-9);
    }

    #[test]
    fn warp_of_one_is_identity() {
        let t = make_time_warp(1, 8, 8).unwrap();
        assert!(t.multipliers().iter().all(|a| (a - c(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn doubling_p_lands_on_s() {
        let t = make_time_warp(2, 4, 4).unwrap();
        let p = dft(&sig(&WARP_P));
        for f in 0..4 {
            let lhs = t.apply_coeff(f, p[f]);
            // The stretched p is s itself, so the oracle over s agrees too.
            let direct = stretched_coeff(&WARP_P, 2, f);
            let via_s: Complex = WARP_S
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let th = -TAU * (i * f) as f64 / 8.0;
                    c(v * th.cos(), v * th.sin())
                })
                .sum::<Complex>()
                / 2.0;
            assert!((lhs - direct).norm() < 1e-9);
            assert!((lhs - via_s).norm() < 1e-9);
        }
    }

    #[test]
    fn triple_warp_matches_direct_summation() {
        let s = [3.0, -1.5, 2.25, 8.0, 0.0, 4.5, -6.0, 1.0];
        let t = make_time_warp(3, 8, 8).unwrap();
        let spec = dft(&sig(&s));
        for f in 0..8 {
            assert!((t.apply_coeff(f, spec[f]) - stretched_coeff(&s, 3, f)).norm() < 1e-9);
        }
    }

    #[test]
    fn safety_flags() {
        let real_a = make_scale_shift(vec![c(2.0, 0.0)], vec![c(1.0, -1.0)], Affine::IDENTITY, Affine::IDENTITY)
            .unwrap();
        assert!(real_a.is_rect_safe() && !real_a.is_polar_safe());
        let complex_a = make_scale_shift(vec![c(1.0, 1.0)], vec![c(0.0, 0.0)], Affine::IDENTITY, Affine::IDENTITY)
            .unwrap();
        assert!(complex_a.is_polar_safe() && !complex_a.is_rect_safe());
        let neither = make_scale_shift(vec![c(2.0, -3.0)], vec![c(1.0, 0.0)], Affine::IDENTITY, Affine::IDENTITY)
            .unwrap();
        assert!(!neither.is_polar_safe() && !neither.is_rect_safe());
        assert!(matches!(
            neither.require_polar_safe(),
            Err(Error::UnsafeTransformation { .. })
        ));
    }

    #[test]
    fn complex_multiplication_breaks_rectangles() {
        let (p, q, r) = (c(-5.0, -5.0), c(5.0, 5.0), c(-2.0, 2.0));
        let s = c(2.0, -3.0);
        let (ps, qs, rs) = (p * s, q * s, r * s);
        assert_eq!(ps, c(-25.0, 5.0));
        assert_eq!(qs, c(25.0, -5.0));
        assert_eq!(rs, c(2.0, 10.0));
        let inside = |z: Complex, lo: Complex, hi: Complex| {
            z.re >= lo.re.min(hi.re)
                && z.re <= lo.re.max(hi.re)
                && z.im >= lo.im.min(hi.im)
                && z.im <= lo.im.max(hi.im)
        };
        assert!(inside(r, p, q));
        assert!(!inside(rs, ps, qs));
    }

    #[test]
    fn real_stretch_keeps_rectangles() {
        // Per-axis real stretch plus complex translation: interior stays
        // interior, exterior stays exterior.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let (x0, x1) = (rng.gen_range(-10.0..0.0), rng.gen_range(0.0..10.0));
            let (y0, y1) = (rng.gen_range(-10.0..0.0), rng.gen_range(0.0..10.0));
            let a: f64 = rng.gen_range(0.1..3.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let b = c(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let map = |z: Complex| a * z + b;
            let (lo, hi) = (map(c(x0, y0)), map(c(x1, y1)));
            let inside = |z: Complex| {
                z.re >= lo.re.min(hi.re) - 1e-12
                    && z.re <= lo.re.max(hi.re) + 1e-12
                    && z.im >= lo.im.min(hi.im) - 1e-12
                    && z.im <= lo.im.max(hi.im) + 1e-12
            };
            let interior = c(rng.gen_range(x0..x1), rng.gen_range(y0..y1));
            assert!(inside(map(interior)));
            let exterior = c(x1 + rng.gen_range(1e-3..5.0), rng.gen_range(y0..y1));
            assert!(!inside(map(exterior)));
        }
    }

    #[test]
    fn cost_distance_without_transformations_is_euclidean() {
        let (x, y) = (sig(&S1), sig(&S2));
        let d = cost_distance(&x, &y, &TransformSet::new(vec![])).unwrap();
        assert!((d - x.distance(&y).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn cost_distance_finds_the_averaged_pair() {
        let (x, y) = (sig(&S1), sig(&S2));
        let ts = TransformSet::new(vec![make_moving_average(3, 15, 15, None).unwrap()]);
        let d = cost_distance(&x, &y, &ts).unwrap();
        assert!((d - 0.47).abs() < 0.01);
    }

    #[test]
    fn expensive_transformations_never_help() {
        // Exhaustive oracle over the depth-1 candidates: every candidate pays
        // more than the plain distance, so the plain distance wins.
        let (x, y) = (sig(&S1), sig(&S2));
        let d0 = x.distance(&y).unwrap();
        let ts = TransformSet::new(vec![
            make_moving_average(3, 15, 15, None).unwrap().with_cost(d0 + 1.0).unwrap(),
            make_reverse(15).unwrap().with_cost(d0 + 0.5).unwrap(),
        ]);
        let d = cost_distance(&x, &y, &ts).unwrap();
        assert!((d - d0).abs() < 1e-9);
    }

    #[test]
    fn budget_prunes_branches() {
        let (x, y) = (sig(&S1), sig(&S2));
        let t = make_moving_average(3, 15, 15, None).unwrap().with_cost(1.0).unwrap();
        let open = TransformSet::new(vec![t.clone()]);
        let tight = TransformSet::new(vec![t]).with_budget(1.5).unwrap();
        let d_open = cost_distance(&x, &y, &open).unwrap();
        let d_tight = cost_distance(&x, &y, &tight).unwrap();
        // Both sides cost 2 > 1.5, so only one-sided averaging remains.
        assert!(d_open <= d_tight);
        assert!((d_open - (2.0 + 0.4714)).abs() < 1e-3);
    }

    #[test]
    fn negative_cost_rejected() {
        assert!(make_reverse(3).unwrap().with_cost(-1.0).is_err());
        assert!(TransformSet::new(vec![]).with_budget(-0.1).is_err());
    }

    #[test]
    fn parses_command_line_names() {
        assert_eq!("identity".parse::<TransformSpec>().unwrap(), TransformSpec::Identity);
        assert_eq!("rev".parse::<TransformSpec>().unwrap(), TransformSpec::Reverse);
        assert_eq!(
            "mavg:20".parse::<TransformSpec>().unwrap(),
            TransformSpec::MovingAverage { m: 20, weights: None }
        );
        assert_eq!(
            "mavg:3:0.2,0.3,0.5".parse::<TransformSpec>().unwrap(),
            TransformSpec::MovingAverage {
                m: 3,
                weights: Some(vec![0.2, 0.3, 0.5])
            }
        );
        assert_eq!("warp:2".parse::<TransformSpec>().unwrap(), TransformSpec::TimeWarp { m: 2 });
        assert!(matches!("affine:2:1".parse::<TransformSpec>().unwrap(), TransformSpec::Affine { .. }));
        assert!(matches!("bogus".parse::<TransformSpec>(), Err(Error::UnknownTransform(_))));
        assert!(matches!("mavg".parse::<TransformSpec>(), Err(Error::UnknownTransform(_))));
        assert!(matches!("mavg:x".parse::<TransformSpec>(), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn time_affine_is_rect_safe_only_with_shift() {
        let t = "affine:2:5".parse::<TransformSpec>().unwrap().build(8).unwrap();
        assert!(t.is_rect_safe() && !t.is_polar_safe());
        let s = sig(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let out = idft(&t.apply_to_spectrum(&dft(&s)).unwrap()).unwrap();
        for (o, v) in out.values().iter().zip(s.values()) {
            assert!((o - (2.0 * v + 5.0)).abs() < 1e-9);
        }
        let scale_only = "affine:2".parse::<TransformSpec>().unwrap().build(8).unwrap();
        assert!(scale_only.is_polar_safe());
    }

    #[test]
    fn registry_round_trip() {
        let text = "\
# name, kind, params, cost
smooth, mavg, m=20, 0
weighted, mavg, m=3; weights=0.2:0.3:0.5, 0.5
flip, rev, , 0
stretch, warp, m=2, 1
lift, affine, scale=1; shift=0; mean=1:5; std=2:0, 0

plain, identity, , 0
";
        let reg = parse_registry(text).unwrap();
        assert_eq!(reg.len(), 6);
        assert_eq!(reg[1].cost, 0.5);
        let t = reg[1].build(32).unwrap();
        assert_eq!(t.name(), "weighted");
        assert_eq!(t.cost(), 0.5);
        let lift = reg[4].build(32).unwrap();
        assert_eq!(lift.mean_action(), Affine::new(1.0, 5.0));
        assert_eq!(lift.std_action(), Affine::new(2.0, 0.0));
        assert!(lift.is_polar_safe());
    }

    #[test]
    fn registry_errors_name_the_row() {
        let err = parse_registry("a, mavg, m=3, 0\nb, spin, , 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, column: 2, .. }), "{err}");
        let err = parse_registry("a, mavg, m=3, -1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, column: 4, .. }));
        let err = parse_registry("a, mavg, m=3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, .. }));
        assert!(parse_registry("a, rev, , 0\na, rev, , 0\n").is_err());
    }
}
