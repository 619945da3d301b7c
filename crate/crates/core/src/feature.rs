//! Polar feature space: points, boxes, and how transformations act on them.
//!
//! A retained DFT coefficient occupies two dimensions, its magnitude and its
//! phase angle in `[-pi, pi)`. In [`SpaceMode::NormalForm`] two leading
//! dimensions hold the mean and standard deviation of the raw series, and the
//! coefficients come from the normalized series starting at index 1 (index 0
//! of a zero-mean series is always zero).
//!
//! Angle dimensions are circular. Boxes keep them as `(center, half_width)`
//! arcs, and every overlap or containment test splits an arc that crosses
//! `+-pi` into at most two plain intervals first.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::series::NormalForm;
use crate::spectral::{angle, dft, from_polar, wrap_angle, Complex, Signal};
use crate::transform::{Affine, Transformation};

/// Slack on angle comparisons. Shifting a center and a point by the same
/// rotation can move them apart by a few ulps after wrapping.
pub const ANGLE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceMode {
    /// Coefficients `X_0 .. X_{k-1}` of the raw series; `2k` dimensions.
    Raw(usize),
    /// Mean, std, then coefficients `X_1 .. X_k` of the normal form;
    /// `2k + 2` dimensions.
    NormalForm(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimKind {
    Mean,
    Std,
    Magnitude,
    Angle,
}

impl SpaceMode {
    pub fn k(&self) -> usize {
        match *self {
            SpaceMode::Raw(k) | SpaceMode::NormalForm(k) => k,
        }
    }

    pub fn has_stats(&self) -> bool {
        matches!(self, SpaceMode::NormalForm(_))
    }

    pub fn dims(&self) -> usize {
        2 * self.k() + self.coeff_offset()
    }

    /// Dimension of the magnitude of retained coefficient `i` (angle follows).
    pub fn coeff_offset(&self) -> usize {
        if self.has_stats() {
            2
        } else {
            0
        }
    }

    /// Spectrum index of retained coefficient `i`.
    pub fn spectrum_index(&self, i: usize) -> usize {
        match self {
            SpaceMode::Raw(_) => i,
            SpaceMode::NormalForm(_) => i + 1,
        }
    }

    pub fn dim_kind(&self, d: usize) -> DimKind {
        let off = self.coeff_offset();
        match (self.has_stats(), d) {
            (true, 0) => DimKind::Mean,
            (true, 1) => DimKind::Std,
            _ if (d - off) % 2 == 0 => DimKind::Magnitude,
            _ => DimKind::Angle,
        }
    }

    /// Shortest series that can produce these features.
    pub fn min_series_len(&self) -> usize {
        match *self {
            SpaceMode::Raw(k) => k,
            SpaceMode::NormalForm(k) => (k + 1).max(2),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k() == 0 {
            return Err(Error::invalid("feature space needs k >= 1"));
        }
        Ok(())
    }

    /// Checks that `t` is polar-safe and long enough for this layout.
    pub fn check_transformation(&self, t: &Transformation) -> Result<()> {
        t.require_polar_safe()?;
        let need = self.spectrum_index(self.k() - 1) + 1;
        if t.len() < need {
            return Err(Error::invalid(format!(
                "transformation '{}' covers {} coefficients, feature space needs {need}",
                t.name(),
                t.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePoint {
    pub dims: Vec<f64>,
}

impl FeaturePoint {
    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    /// Retained coefficient `i` as a complex number.
    pub fn coeff(&self, mode: SpaceMode, i: usize) -> Complex {
        let d = mode.coeff_offset() + 2 * i;
        from_polar(self.dims[d], self.dims[d + 1])
    }
}

/// Features plus the full spectrum they were cut from (used to verify
/// candidates).
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub point: FeaturePoint,
    pub spectrum: Vec<Complex>,
}

/// Full spectrum the features of `s` are drawn from: the raw spectrum, or
/// the spectrum of the normal form, with mean and std.
fn source_spectrum(s: &Signal, mode: SpaceMode) -> Result<(Vec<Complex>, Option<(f64, f64)>)> {
    mode.validate()?;
    if s.len() < mode.min_series_len() {
        return Err(Error::invalid(format!(
            "series of length {} too short for {mode:?}",
            s.len()
        )));
    }
    match mode {
        SpaceMode::Raw(_) => Ok((dft(s).into_coeffs(), None)),
        SpaceMode::NormalForm(_) => {
            let nf = NormalForm::of_signal(s)?;
            Ok((dft(&nf.normalized).into_coeffs(), Some((nf.mean, nf.std))))
        }
    }
}

pub fn prepare(s: &Signal, mode: SpaceMode) -> Result<Prepared> {
    let (spectrum, stats) = source_spectrum(s, mode)?;
    let mut dims = Vec::with_capacity(mode.dims());
    if let Some((mean, std)) = stats {
        dims.push(mean);
        dims.push(std);
    }
    for i in 0..mode.k() {
        let c = spectrum[mode.spectrum_index(i)];
        dims.push(c.norm());
        dims.push(angle(c));
    }
    Ok(Prepared {
        point: FeaturePoint { dims },
        spectrum,
    })
}

pub fn extract_features(s: &Signal, mode: SpaceMode) -> Result<FeaturePoint> {
    Ok(prepare(s, mode)?.point)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DimInterval {
    /// Closed interval; bounds may be infinite.
    Linear { lo: f64, hi: f64 },
    /// Closed arc of angles; `half_width >= pi` is the whole circle.
    Angle { center: f64, half_width: f64 },
}

impl DimInterval {
    pub fn full_circle() -> Self {
        DimInterval::Angle {
            center: 0.0,
            half_width: PI,
        }
    }

    pub fn unbounded() -> Self {
        DimInterval::Linear {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    fn contains(&self, x: f64) -> bool {
        match *self {
            DimInterval::Linear { lo, hi } => lo <= x && x <= hi,
            DimInterval::Angle { center, half_width } => arc_pieces(center, half_width)
                .iter()
                .flatten()
                .any(|&(lo, hi)| lo - ANGLE_TOLERANCE <= x && x <= hi + ANGLE_TOLERANCE),
        }
    }

    fn overlaps(&self, other: &DimInterval) -> Option<bool> {
        match (*self, *other) {
            (DimInterval::Linear { lo: a0, hi: a1 }, DimInterval::Linear { lo: b0, hi: b1 }) => {
                Some(a0 <= b1 && b0 <= a1)
            }
            (
                DimInterval::Angle {
                    center: c1,
                    half_width: h1,
                },
                DimInterval::Angle {
                    center: c2,
                    half_width: h2,
                },
            ) => {
                let pa = arc_pieces(c1, h1);
                let pb = arc_pieces(c2, h2);
                Some(pa.iter().flatten().any(|&(a0, a1)| {
                    pb.iter().flatten().any(|&(b0, b1)| {
                        a0 - ANGLE_TOLERANCE <= b1 && b0 - ANGLE_TOLERANCE <= a1
                    })
                }))
            }
            _ => None,
        }
    }
}

/// Splits an arc into at most two non-wrapping intervals inside `[-pi, pi]`.
fn arc_pieces(center: f64, half_width: f64) -> [Option<(f64, f64)>; 2] {
    if half_width >= PI {
        return [Some((-PI, PI)), None];
    }
    let lo = center - half_width;
    let hi = center + half_width;
    if lo < -PI {
        [Some((lo + 2.0 * PI, PI)), Some((-PI, hi))]
    } else if hi >= PI {
        [Some((lo, PI)), Some((-PI, hi - 2.0 * PI))]
    } else {
        [Some((lo, hi)), None]
    }
}

/// Axis-aligned box in the feature space (arcs on angle dimensions).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRect {
    pub dims: Vec<DimInterval>,
}

impl FeatureRect {
    pub fn from_point(p: &FeaturePoint, mode: SpaceMode) -> Self {
        FeatureRect::from_bounds(&p.dims, &p.dims, mode)
    }

    /// Box from per-dimension bounds as stored in index nodes. An angle
    /// bound `[lo, hi]` starts in `[-pi, pi)` and may run past `pi` (an arc
    /// that wraps), but never spans more than a full turn.
    pub fn from_bounds(lo: &[f64], hi: &[f64], mode: SpaceMode) -> Self {
        let dims = lo
            .iter()
            .zip(hi)
            .enumerate()
            .map(|(d, (&l, &h))| match mode.dim_kind(d) {
                DimKind::Angle => DimInterval::Angle {
                    center: wrap_angle(0.5 * (l + h)),
                    half_width: 0.5 * (h - l),
                },
                DimKind::Magnitude => DimInterval::Linear { lo: l.max(0.0), hi: h },
                _ => DimInterval::Linear { lo: l, hi: h },
            })
            .collect();
        FeatureRect { dims }
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    /// Replaces the mean and std dimensions with the given bounds
    /// (unbounded when `None`).
    pub fn with_stats_bounds(
        mut self,
        mode: SpaceMode,
        mean: Option<(f64, f64)>,
        std: Option<(f64, f64)>,
    ) -> Self {
        if mode.has_stats() {
            let iv = |b: Option<(f64, f64)>| match b {
                Some((lo, hi)) => DimInterval::Linear { lo, hi },
                None => DimInterval::unbounded(),
            };
            self.dims[0] = iv(mean);
            self.dims[1] = iv(std);
        }
        self
    }

    /// Widens every bound by a relative `slack`; used to keep float rounding
    /// from turning a boundary hit into a false dismissal.
    pub fn inflate(mut self, slack: f64) -> Self {
        for d in &mut self.dims {
            match d {
                DimInterval::Linear { lo, hi } => {
                    *lo -= slack * (1.0 + lo.abs());
                    *hi += slack * (1.0 + hi.abs());
                }
                DimInterval::Angle { half_width, .. } => {
                    *half_width += slack * (1.0 + *half_width);
                }
            }
        }
        self
    }
}

/// Box covering every point within Euclidean distance `epsilon` of `q`.
///
/// Magnitude `m` gets `[max(0, m - eps), m + eps]`; its angle gets
/// `+- asin(eps / m)`, or the whole circle once `eps >= m` (the disk then
/// contains the origin). Mean and std get `+- eps`.
pub fn search_rectangle(q: &FeaturePoint, epsilon: f64, mode: SpaceMode) -> Result<FeatureRect> {
    if !(epsilon >= 0.0) {
        return Err(Error::invalid(format!("epsilon must be non-negative, got {epsilon}")));
    }
    check_dims(q.len(), mode)?;
    let mut dims = Vec::with_capacity(q.len());
    for d in 0..q.len() {
        let x = q.dims[d];
        dims.push(match mode.dim_kind(d) {
            DimKind::Mean | DimKind::Std => DimInterval::Linear {
                lo: x - epsilon,
                hi: x + epsilon,
            },
            DimKind::Magnitude => DimInterval::Linear {
                lo: (x - epsilon).max(0.0),
                hi: x + epsilon,
            },
            DimKind::Angle => {
                let m = q.dims[d - 1];
                let half_width = if epsilon < m { (epsilon / m).asin() } else { PI };
                DimInterval::Angle {
                    center: x,
                    half_width,
                }
            }
        });
    }
    Ok(FeatureRect { dims })
}

fn check_dims(got: usize, mode: SpaceMode) -> Result<()> {
    if got != mode.dims() {
        return Err(Error::invalid(format!(
            "feature has {got} dimensions, {mode:?} expects {}",
            mode.dims()
        )));
    }
    Ok(())
}

fn stats_action(t: &Transformation, kind: DimKind) -> Affine {
    match kind {
        DimKind::Mean => t.mean_action(),
        _ => t.std_action(),
    }
}

fn map_linear(action: Affine, lo: f64, hi: f64) -> (f64, f64) {
    if action.scale == 0.0 {
        return (action.offset, action.offset);
    }
    action.apply_interval(lo, hi)
}

/// Moves a point by a polar-safe transformation: magnitudes scale by
/// `|a_f|`, angles rotate by `arg(a_f)`, mean and std go through their
/// affine actions.
pub fn transform_point(t: &Transformation, p: &FeaturePoint, mode: SpaceMode) -> Result<FeaturePoint> {
    mode.check_transformation(t)?;
    check_dims(p.len(), mode)?;
    let mut dims = p.dims.clone();
    if mode.has_stats() {
        dims[0] = t.mean_action().apply(dims[0]);
        dims[1] = t.std_action().apply(dims[1]);
    }
    let off = mode.coeff_offset();
    for i in 0..mode.k() {
        let a = t.multipliers()[mode.spectrum_index(i)];
        dims[off + 2 * i] *= a.norm();
        dims[off + 2 * i + 1] = wrap_angle(dims[off + 2 * i + 1] + angle(a));
    }
    Ok(FeaturePoint { dims })
}

pub fn transform_rect(t: &Transformation, r: &FeatureRect, mode: SpaceMode) -> Result<FeatureRect> {
    mode.check_transformation(t)?;
    check_dims(r.len(), mode)?;
    let off = mode.coeff_offset();
    let dims = r
        .dims
        .iter()
        .enumerate()
        .map(|(d, iv)| {
            let kind = mode.dim_kind(d);
            match (*iv, kind) {
                (DimInterval::Linear { lo, hi }, DimKind::Mean | DimKind::Std) => {
                    let (lo, hi) = map_linear(stats_action(t, kind), lo, hi);
                    DimInterval::Linear { lo, hi }
                }
                (DimInterval::Linear { lo, hi }, _) => {
                    let s = t.multipliers()[mode.spectrum_index((d - off) / 2)].norm();
                    DimInterval::Linear {
                        lo: lo * s,
                        hi: hi * s,
                    }
                }
                (DimInterval::Angle { center, half_width }, _) => {
                    let a = t.multipliers()[mode.spectrum_index((d - off) / 2)];
                    DimInterval::Angle {
                        center: wrap_angle(center + angle(a)),
                        half_width,
                    }
                }
            }
        })
        .collect();
    Ok(FeatureRect { dims })
}

pub fn rect_overlap(a: &FeatureRect, b: &FeatureRect) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    for (x, y) in a.dims.iter().zip(&b.dims) {
        match x.overlaps(y) {
            Some(true) => {}
            Some(false) => return Ok(false),
            None => return Err(Error::invalid("cannot compare a linear and a circular dimension")),
        }
    }
    Ok(true)
}

pub fn point_in_rect(p: &FeaturePoint, r: &FeatureRect) -> Result<bool> {
    if p.len() != r.len() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            p.len(),
            r.len()
        )));
    }
    Ok(p.dims.iter().zip(&r.dims).all(|(&x, iv)| iv.contains(x)))
}

/// Lower bound on the distance from `p` to any point of `r`.
///
/// Mean and std contribute their plain gaps. Each (magnitude, angle) pair is
/// measured in the complex plane, as the distance from `m e^{j theta}` to the
/// annular sector the box describes.
pub fn mindist(p: &FeaturePoint, r: &FeatureRect, mode: SpaceMode) -> Result<f64> {
    mindist_impl(p, r, mode, true)
}

/// Like [`mindist`] but over the coefficient dimensions only.
pub fn mindist_coefficients(p: &FeaturePoint, r: &FeatureRect, mode: SpaceMode) -> Result<f64> {
    mindist_impl(p, r, mode, false)
}

fn mindist_impl(p: &FeaturePoint, r: &FeatureRect, mode: SpaceMode, stats: bool) -> Result<f64> {
    check_dims(p.len(), mode)?;
    check_dims(r.len(), mode)?;
    let mut sum = 0.0;
    if mode.has_stats() && stats {
        for d in 0..2 {
            if let DimInterval::Linear { lo, hi } = r.dims[d] {
                let x = p.dims[d];
                let gap = (lo - x).max(x - hi).max(0.0);
                sum += gap * gap;
            }
        }
    }
    let off = mode.coeff_offset();
    for i in 0..mode.k() {
        let (m, th) = (p.dims[off + 2 * i], p.dims[off + 2 * i + 1]);
        let (r1, r2) = match r.dims[off + 2 * i] {
            DimInterval::Linear { lo, hi } => (lo.max(0.0), hi),
            _ => return Err(Error::invalid("magnitude dimension must be linear")),
        };
        let arc = r.dims[off + 2 * i + 1];
        let d = sector_distance(m, th, r1, r2, arc);
        sum += d * d;
    }
    Ok(sum.sqrt())
}

fn sector_distance(m: f64, th: f64, r1: f64, r2: f64, arc: DimInterval) -> f64 {
    if arc.contains(th) {
        return (r1 - m).max(m - r2).max(0.0);
    }
    let DimInterval::Angle { center, half_width } = arc else {
        unreachable!("angle dims are always arcs")
    };
    let z = from_polar(m, th);
    [center - half_width, center + half_width]
        .iter()
        .map(|&phi| {
            let u = from_polar(1.0, phi);
            let t = (z * u.conj()).re.clamp(r1, r2);
            (z - u * t).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Euclidean distance over the retained coefficients, in the complex plane.
pub fn coefficient_distance(p: &FeaturePoint, q: &FeaturePoint, mode: SpaceMode) -> f64 {
    (0..mode.k())
        .map(|i| (p.coeff(mode, i) - q.coeff(mode, i)).norm_sqr())
        .sum::<f64>()
        .sqrt()
}
