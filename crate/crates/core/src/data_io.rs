//! Observed QoI data: loading, jitter augmentation and Beta fitting.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random::{check_shapes, sample_beta, shift_scale, RandomStream};
use crate::special::{digamma, ln_beta, trigamma};
use crate::sum::neumaier_sum;

/// Observations `q_1..q_K` in the data box, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedData {
    values: Vec<f64>,
    m: usize,
    d_bounds: Vec<(f64, f64)>,
    /// Rows discarded for lying outside `d_bounds`.
    pub dropped: usize,
    /// Values clamped onto `d_bounds` during augmentation.
    pub clipped: usize,
}

fn check_bounds(d_bounds: &[(f64, f64)]) -> Result<()> {
    if d_bounds.is_empty() {
        return Err(Error::domain("data bounds need at least one dimension"));
    }
    for (d, &(lo, hi)) in d_bounds.iter().enumerate() {
        if !(lo < hi) {
            return Err(Error::domain(format!("data bounds dimension {d}: need lo < hi, got [{lo}, {hi}]")));
        }
    }
    Ok(())
}

fn inside(row: &[f64], d_bounds: &[(f64, f64)]) -> bool {
    row.iter().zip(d_bounds).all(|(&q, &(lo, hi))| q >= lo && q <= hi)
}

impl ObservedData {
    /// Keep the rows of `values` that lie in `d_bounds`, warning about the rest.
    pub fn new(values: Vec<f64>, d_bounds: Vec<(f64, f64)>) -> Result<Self> {
        check_bounds(&d_bounds)?;
        let m = d_bounds.len();
        if values.len() % m != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} values do not form rows of length {m}",
                values.len()
            )));
        }
        let mut kept = Vec::with_capacity(values.len());
        let mut dropped = 0;
        for (row_idx, row) in values.chunks(m).enumerate() {
            if inside(row, &d_bounds) {
                kept.extend_from_slice(row);
            } else {
                if dropped < 5 {
                    warn!("observation {row_idx} = {row:?} lies outside the data bounds; dropped");
                }
                dropped += 1;
            }
        }
        if dropped > 5 {
            warn!("{dropped} observations outside the data bounds dropped in total");
        }
        if kept.is_empty() {
            return Err(Error::EmptyData { dropped });
        }
        Ok(Self {
            values: kept,
            m,
            d_bounds,
            dropped,
            clipped: 0,
        })
    }

    /// Scalar observations on `[lo, hi]`.
    pub fn scalar(values: Vec<f64>, lo: f64, hi: f64) -> Result<Self> {
        Self::new(values, vec![(lo, hi)])
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn output_dim(&self) -> usize {
        self.m
    }

    pub fn d_bounds(&self) -> &[(f64, f64)] {
        &self.d_bounds
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.m..(k + 1) * self.m]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.m)
    }
}

/// Read observations from CSV with header `q_1[,q_2,...]`.
pub fn load_observations(path: impl AsRef<Path>, d_bounds: &[(f64, f64)]) -> Result<ObservedData> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_observations(file, path, d_bounds)
}

/// Like [`load_observations`] but from any reader; `path` labels errors.
pub fn read_observations<R: Read>(reader: R, path: &Path, d_bounds: &[(f64, f64)]) -> Result<ObservedData> {
    check_bounds(d_bounds)?;
    let m = d_bounds.len();
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| parse_err(0, e.to_string()))?.clone();
    let expected: Vec<String> = (1..=m).map(|i| format!("q_{i}")).collect();
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(parse_err(
            0,
            format!("expected header {}, found {}", expected.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut values = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| parse_err(row, e.to_string()))?;
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(row, format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(row, format!("non-finite value {field:?}")));
            }
            values.push(v);
        }
    }
    ObservedData::new(values, d_bounds.to_vec())
}

/// Write scalar or vector observations in the same CSV layout.
pub fn write_observations<W: std::io::Write>(data: &ObservedData, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<String> = (1..=data.m).map(|i| format!("q_{i}")).collect();
    let to_num = |e: csv::Error| Error::Numeric(e.to_string());
    w.write_record(&header).map_err(to_num)?;
    for row in data.rows() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(to_num)?;
    }
    w.flush().map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Jitter augmentation

/// Replace each datum by `r_per_datum` draws of Beta(α, β) noise scaled to
/// `[q - w, q + w]`, clipped to the data bounds. Output is datum-major.
pub fn jitter_augment(
    data: &ObservedData,
    half_width: f64,
    alpha: f64,
    beta: f64,
    r_per_datum: usize,
    stream: RandomStream,
) -> Result<ObservedData> {
    jitter_augment_range(data, half_width, alpha, beta, 0, r_per_datum, stream)
}

/// Draws `start..start + count` of every datum's jitter sequence.
///
/// Draw `r` of datum `i` uses `stream.substream(i).substream(r)`, so any
/// split of the draw range concatenates back to the full sequence.
pub fn jitter_augment_range(
    data: &ObservedData,
    half_width: f64,
    alpha: f64,
    beta: f64,
    start: usize,
    count: usize,
    stream: RandomStream,
) -> Result<ObservedData> {
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::domain(format!("jitter half-width must be positive (got {half_width})")));
    }
    check_shapes([&alpha, &beta])?;
    let m = data.m;
    let bounds = &data.d_bounds;
    let mut values = vec![0.0; data.len() * count * m];
    if count == 0 {
        return Err(Error::EmptyData { dropped: 0 });
    }
    let clipped: usize = values
        .par_chunks_mut(count * m)
        .enumerate()
        .map(|(i, block)| {
            let center = data.row(i);
            let datum_stream = stream.substream(i as u64);
            let mut clipped = 0;
            for (r, out) in block.chunks_mut(m).enumerate() {
                let mut rng = datum_stream.substream((start + r) as u64).rng();
                for d in 0..m {
                    let noise = rng.beta(alpha, beta);
                    let v = center[d] - half_width + 2.0 * half_width * noise;
                    let (lo, hi) = bounds[d];
                    out[d] = if v < lo {
                        clipped += 1;
                        lo
                    } else if v > hi {
                        clipped += 1;
                        hi
                    } else {
                        v
                    };
                }
            }
            clipped
        })
        .sum();
    Ok(ObservedData {
        values,
        m,
        d_bounds: bounds.clone(),
        dropped: 0,
        clipped,
    })
}

// ---------------------------------------------------------------------------
// Beta maximum likelihood

/// Beta(α, β) shifted and scaled onto `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    pub alpha: f64,
    pub beta: f64,
    pub lo: f64,
    pub hi: f64,
}

impl BetaFit {
    pub fn new(alpha: f64, beta: f64, lo: f64, hi: f64) -> Result<Self> {
        check_shapes([&alpha, &beta])?;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::domain(format!("Beta support needs lo < hi (got [{lo}, {hi}])")));
        }
        Ok(Self { alpha, beta, lo, hi })
    }

    pub fn mean(&self) -> f64 {
        self.lo + (self.hi - self.lo) * self.alpha / (self.alpha + self.beta)
    }

    /// Density on `[lo, hi]`.
    pub fn pdf(&self, q: f64) -> f64 {
        let w = self.hi - self.lo;
        crate::special::beta_pdf((q - self.lo) / w, self.alpha, self.beta) / w
    }
}

/// How the support interval of a Beta fit is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportRule {
    /// The data bounds of the observations.
    DataBounds,
    /// A fixed interval.
    Fixed { lo: f64, hi: f64 },
    /// `[min - f·r, max + f·r]` where `r = max - min` of the fitted data.
    PaddedRange { fraction: f64 },
}

/// Padding used by the falling-ball studies.
pub const BALL_SUPPORT: SupportRule = SupportRule::PaddedRange { fraction: 0.1 };

const MAX_NEWTON: usize = 200;
const GRAD_TOL: f64 = 1e-8;
const ENDPOINT_NUDGE: f64 = 1e-9;

/// Fit Beta(α, β) by maximum likelihood after mapping the data bounds onto (0, 1).
pub fn fit_beta_mle(data: &ObservedData) -> Result<BetaFit> {
    fit_beta_mle_with(data, SupportRule::DataBounds)
}

pub fn fit_beta_mle_with(data: &ObservedData, rule: SupportRule) -> Result<BetaFit> {
    if data.output_dim() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "Beta fit needs scalar data (m = {})",
            data.output_dim()
        )));
    }
    let values = data.values();
    let (lo, hi) = match rule {
        SupportRule::DataBounds => data.d_bounds()[0],
        SupportRule::Fixed { lo, hi } => (lo, hi),
        SupportRule::PaddedRange { fraction } => {
            if !(fraction > 0.0) {
                return Err(Error::domain(format!("padding fraction must be positive (got {fraction})")));
            }
            let (min, max) = values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let pad = fraction * (max - min);
            (min - pad, max + pad)
        }
    };
    fit_beta_on(values, lo, hi)
}

/// Fit on an explicit support interval; values must lie in `[lo, hi]`.
pub fn fit_beta_on(values: &[f64], lo: f64, hi: f64) -> Result<BetaFit> {
    if values.len() < 2 {
        return Err(Error::domain(format!("Beta fit needs at least 2 values (got {})", values.len())));
    }
    if !(lo < hi) {
        return Err(Error::domain(format!(
            "Beta fit support needs lo < hi (got [{lo}, {hi}]); are all values equal?"
        )));
    }
    let mut unit = Vec::with_capacity(values.len());
    for &v in values {
        if !(v >= lo && v <= hi) {
            return Err(Error::domain(format!("value {v} outside the fit support [{lo}, {hi}]")));
        }
        unit.push(((v - lo) / (hi - lo)).clamp(ENDPOINT_NUDGE, 1.0 - ENDPOINT_NUDGE));
    }
    let (alpha, beta) = beta_mle_unit(&unit)?;
    BetaFit::new(alpha, beta, lo, hi)
}

/// Log-likelihood of Beta(a, b) given the sufficient statistics.
fn loglik(a: f64, b: f64, k: f64, s1: f64, s2: f64) -> f64 {
    k * ((a - 1.0) * s1 + (b - 1.0) * s2 - ln_beta(a, b))
}

/// Newton iteration on the log-likelihood for data strictly inside (0, 1).
fn beta_mle_unit(x: &[f64]) -> Result<(f64, f64)> {
    let k = x.len() as f64;
    let s1 = neumaier_sum(x.iter().map(|v| v.ln())) / k;
    let s2 = neumaier_sum(x.iter().map(|v| (-v).ln_1p())) / k;

    // method of moments start
    let mean = neumaier_sum(x.iter().copied()) / k;
    let var = neumaier_sum(x.iter().map(|v| (v - mean) * (v - mean))) / k;
    let common = mean * (1.0 - mean) / var - 1.0;
    if !(var > 0.0) {
        return Err(Error::DegenerateData("Beta fit needs at least two distinct values".into()));
    }
    let (mut a, mut b) = if common > 0.0 && common.is_finite() {
        (mean * common, (1.0 - mean) * common)
    } else {
        (1.0, 1.0)
    };

    let grad = |a: f64, b: f64| {
        let ab = digamma(a + b);
        (k * (s1 - digamma(a) + ab), k * (s2 - digamma(b) + ab))
    };
    let mut g = grad(a, b);
    for iter in 0..MAX_NEWTON {
        if g.0.hypot(g.1) < GRAD_TOL {
            return Ok((a, b));
        }
        let tab = trigamma(a + b);
        let (h11, h12, h22) = (k * (tab - trigamma(a)), k * tab, k * (tab - trigamma(b)));
        let det = h11 * h22 - h12 * h12;
        // H is negative definite for a, b > 0, so det > 0
        let (da, db) = if det > 0.0 && det.is_finite() {
            (-(h22 * g.0 - h12 * g.1) / det, -(h11 * g.1 - h12 * g.0) / det)
        } else {
            (g.0 / k, g.1 / k)
        };
        let current = loglik(a, b, k, s1, s2);
        let mut step = 1.0;
        loop {
            let (na, nb) = (a + step * da, b + step * db);
            if na > 0.0 && nb > 0.0 && loglik(na, nb, k, s1, s2) >= current - 1e-12 * current.abs() {
                a = na;
                b = nb;
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                let gn = g.0.hypot(g.1);
                return Err(Error::Optimization {
                    iterations: iter + 1,
                    alpha: a,
                    beta: b,
                    grad_norm: gn,
                });
            }
        }
        g = grad(a, b);
    }
    let gn = g.0.hypot(g.1);
    if gn < GRAD_TOL {
        return Ok((a, b));
    }
    Err(Error::Optimization {
        iterations: MAX_NEWTON,
        alpha: a,
        beta: b,
        grad_norm: gn,
    })
}

/// `n_samples` draws from the shifted and scaled Beta of `fit`.
pub fn resample_parametric(fit: &BetaFit, n_samples: usize, stream: RandomStream) -> Result<Vec<f64>> {
    let unit = sample_beta(fit.alpha, fit.beta, n_samples, stream)?;
    shift_scale(&unit, fit.lo, fit.hi)
}

// ---------------------------------------------------------------------------
// Bundled falling-ball data

/// Data window for the falling-ball flight times.
pub const BALL_D_BOUNDS: (f64, f64) = (2.55, 3.19);

/// Flight times in seconds, labelled by ball type.
pub const BALL_FLIGHT_TIMES: [(&str, f64); 17] = [
    ("baseball", 2.8367),
    ("baseball", 2.8383),
    ("basketball", 2.9033),
    ("basketball", 3.0050),
    ("basketball", 2.8383),
    ("basketball", 2.9033),
    ("basketball", 2.8700),
    ("volleyball", 2.6033),
    ("volleyball", 3.0700),
    ("volleyball", 3.1383),
    ("bowling", 2.7383),
    ("bowling", 2.7717),
    ("bowling", 2.7367),
    ("golf", 2.7700),
    ("golf", 2.8367),
    ("tennis", 3.0367),
    ("tennis", 3.0717),
];

/// The bundled CSV copy of [`BALL_FLIGHT_TIMES`].
pub const BALL_FLIGHT_TIMES_CSV: &str = include_str!("../data/ball_flight_times.csv");

/// Which balls to keep from the bundled data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallSubset {
    All,
    /// Everything except the volleyball and tennis ball.
    Reduced,
    Bowling,
}

impl BallSubset {
    fn keeps(self, label: &str) -> bool {
        match self {
            BallSubset::All => true,
            BallSubset::Reduced => label != "volleyball" && label != "tennis",
            BallSubset::Bowling => label == "bowling",
        }
    }
}

pub fn ball_flight_times(subset: BallSubset) -> Vec<f64> {
    BALL_FLIGHT_TIMES
        .iter()
        .filter(|(label, _)| subset.keeps(label))
        .map(|&(_, t)| t)
        .collect()
}

pub fn ball_observations(subset: BallSubset) -> Result<ObservedData> {
    ObservedData::scalar(ball_flight_times(subset), BALL_D_BOUNDS.0, BALL_D_BOUNDS.1)
}
