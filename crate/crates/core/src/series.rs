//! Time-series records, relations, normal forms and circular moving averages.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::spectral::Signal;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub id: String,
    pub values: Signal,
    pub source: Option<String>,
    /// ISO-8601 start date, when known.
    pub start_date: Option<String>,
}

impl TimeSeries {
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::invalid("series id must be non-empty"));
        }
        Ok(TimeSeries {
            id,
            values: Signal::new(values)?,
            source: None,
            start_date: None,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// An ordered set of equal-length series with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Relation {
    series: Vec<TimeSeries>,
}

impl Relation {
    pub fn new(series: Vec<TimeSeries>) -> Result<Self> {
        let mut rel = Relation::default();
        for s in series {
            rel.push(s)?;
        }
        Ok(rel)
    }

    pub fn push(&mut self, s: TimeSeries) -> Result<()> {
        if let Some(n) = self.series_len() {
            if s.len() != n {
                return Err(Error::invalid(format!(
                    "series '{}' has length {}, relation length is {n}",
                    s.id,
                    s.len()
                )));
            }
        }
        if self.series.iter().any(|x| x.id == s.id) {
            return Err(Error::DuplicateId(s.id));
        }
        self.series.push(s);
        Ok(())
    }

    /// Common length of member series, `None` when empty.
    pub fn series_len(&self) -> Option<usize> {
        self.series.first().map(TimeSeries::len)
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TimeSeries> {
        self.series.iter()
    }

    pub fn get(&self, id: &str) -> Option<&TimeSeries> {
        self.series.iter().find(|s| s.id == id)
    }

    pub fn as_slice(&self) -> &[TimeSeries] {
        &self.series
    }

    pub(crate) fn from_unchecked(series: Vec<TimeSeries>) -> Self {
        debug_assert_eq!(
            series.iter().map(|s| s.id.as_str()).collect::<HashSet<_>>().len(),
            series.len()
        );
        Relation { series }
    }
}

impl<'a> IntoIterator for &'a Relation {
    type Item = &'a TimeSeries;
    type IntoIter = std::slice::Iter<'a, TimeSeries>;

    fn into_iter(self) -> Self::IntoIter {
        self.series.iter()
    }
}

/// A series shifted to zero mean and scaled to unit (population) standard
/// deviation, together with the pair needed to undo it.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalForm {
    pub normalized: Signal,
    pub mean: f64,
    pub std: f64,
}

impl NormalForm {
    pub fn of_signal(s: &Signal) -> Result<Self> {
        if s.len() < 2 {
            return Err(Error::invalid("normal form needs at least two samples"));
        }
        let (mean, std) = mean_std(s.values());
        // Relative threshold: a float constant series can leave ~1 ulp of spread.
        if std <= 1e-12 * mean.abs().max(1.0) {
            return Err(Error::DegenerateSeries { id: None, mean });
        }
        let normalized = Signal::new(s.values().iter().map(|v| (v - mean) / std).collect())?;
        Ok(NormalForm {
            normalized,
            mean,
            std,
        })
    }

    /// `mean + std * normalized`.
    pub fn denormalize(&self) -> Signal {
        Signal::new(
            self.normalized
                .values()
                .iter()
                .map(|v| self.mean + self.std * v)
                .collect(),
        )
        .expect("finite inputs give finite output")
    }
}

/// Normal form of a series. Constant series are rejected with
/// [`Error::DegenerateSeries`] carrying their id and mean.
pub fn normal_form(s: &TimeSeries) -> Result<NormalForm> {
    NormalForm::of_signal(&s.values).map_err(|e| match e {
        Error::DegenerateSeries { mean, .. } => Error::DegenerateSeries {
            id: Some(s.id.clone()),
            mean,
        },
        other => other,
    })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Validates (or defaults to uniform) moving-average weights for window `m`
/// over series of length `n`.
pub(crate) fn resolve_weights(m: usize, n: usize, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    if m < 1 || m > n {
        return Err(Error::invalid(format!(
            "moving-average window {m} outside 1..={n}"
        )));
    }
    match weights {
        None => Ok(vec![1.0 / m as f64; m]),
        Some(w) => {
            if w.len() != m {
                return Err(Error::invalid(format!(
                    "expected {m} weights, got {}",
                    w.len()
                )));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("weights must be finite"));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("weights sum to {sum}, expected 1")));
            }
            Ok(w.to_vec())
        }
    }
}

/// Trailing circular moving average:
/// `out_i = sum_{t < m} w_t * s_{(i - t) mod n}`.
///
/// The window wraps past the start of the series, so the output keeps
/// length `n`. `weights[0]` applies to the current sample.
pub fn moving_average_time(s: &Signal, m: usize, weights: Option<&[f64]>) -> Result<Signal> {
    let n = s.len();
    let w = resolve_weights(m, n, weights)?;
    let out = (0..n)
        .map(|i| {
            w.iter()
                .enumerate()
                .map(|(t, wt)| wt * s[(i + n - t) % n])
                .sum()
        })
        .collect();
    Signal::new(out)
}
