//! Partitions of the data space and estimated cell probabilities.
//!
//! Cells are half-open boxes `[e_k, e_{k+1})` except that the last cell in
//! each dimension is closed, so every point of the bounds has exactly one
//! cell. Multi-dimensional cells are numbered row-major (first dimension
//! slowest).
//!
//! KDE cell masses carry a boundary bias: the kernel mass that falls outside
//! the bounds is dropped and the remainder renormalized, rather than
//! reflected back in.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_io::{BetaFit, ObservedData};
use crate::error::{Error, Result};
use crate::quadrature::{adaptive_simpson, DEFAULT_ABS_TOL};
use crate::special::{beta_pdf, ln_beta, normal_cdf};
use crate::sum::{neumaier_sum, NeumaierSum};

/// Rows per partial sum when accumulating over data; fixed so results do not
/// depend on the thread count.
const ACC_BLOCK: usize = 4096;

/// Axis-aligned grid partition of a box.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionD {
    bounds: Vec<(f64, f64)>,
    edges: Vec<Vec<f64>>,
}

/// Equal-width grid over `d_bounds` with `cells_per_dim[d]` cells in dimension `d`.
pub fn build_uniform_partition(d_bounds: &[(f64, f64)], cells_per_dim: &[usize]) -> Result<PartitionD> {
    PartitionD::uniform(d_bounds, cells_per_dim)
}

impl PartitionD {
    pub fn uniform(d_bounds: &[(f64, f64)], cells_per_dim: &[usize]) -> Result<Self> {
        if d_bounds.is_empty() || d_bounds.len() != cells_per_dim.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} bounds but {} cell counts",
                d_bounds.len(),
                cells_per_dim.len()
            )));
        }
        let mut edges = Vec::with_capacity(d_bounds.len());
        for (d, (&(lo, hi), &n)) in d_bounds.iter().zip(cells_per_dim).enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::domain(format!("partition dimension {d} has zero width [{lo}, {hi}]")));
            }
            if n == 0 {
                return Err(Error::domain(format!("partition dimension {d} needs at least one cell")));
            }
            let w = (hi - lo) / n as f64;
            let mut e: Vec<f64> = (0..n).map(|k| lo + k as f64 * w).collect();
            e.push(hi);
            edges.push(e);
        }
        Ok(Self {
            bounds: d_bounds.to_vec(),
            edges,
        })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn edges(&self, d: usize) -> &[f64] {
        &self.edges[d]
    }

    pub fn cells_per_dim(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.len() - 1).collect()
    }

    /// Total number of cells `M`.
    pub fn len(&self) -> usize {
        self.edges.iter().map(|e| e.len() - 1).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell index along dimension `d`, or `None` outside the bounds.
    pub fn axis_index(&self, d: usize, x: f64) -> Option<usize> {
        let e = &self.edges[d];
        let n = e.len() - 1;
        let (lo, hi) = self.bounds[d];
        if !(x >= lo && x <= hi) {
            return None;
        }
        let guess = (((x - lo) / (hi - lo)) * n as f64) as usize;
        let mut k = guess.min(n - 1);
        // rounding in the guess can be off by one near an edge
        while k > 0 && x < e[k] {
            k -= 1;
        }
        while k + 1 < n && x >= e[k + 1] {
            k += 1;
        }
        Some(k)
    }

    /// Row-major cell index of `q`, or `None` outside the bounds.
    pub fn cell_index(&self, q: &[f64]) -> Option<usize> {
        debug_assert_eq!(q.len(), self.dim());
        let mut idx = 0;
        for (d, &x) in q.iter().enumerate() {
            let k = self.axis_index(d, x)?;
            idx = idx * (self.edges[d].len() - 1) + k;
        }
        Some(idx)
    }

    /// Per-dimension indices of cell `i`.
    pub fn unravel(&self, mut i: usize) -> Vec<usize> {
        let mut ks = vec![0; self.dim()];
        for d in (0..self.dim()).rev() {
            let n = self.edges[d].len() - 1;
            ks[d] = i % n;
            i /= n;
        }
        ks
    }

    pub fn cell_bounds(&self, i: usize) -> Vec<(f64, f64)> {
        self.unravel(i)
            .into_iter()
            .enumerate()
            .map(|(d, k)| (self.edges[d][k], self.edges[d][k + 1]))
            .collect()
    }

    pub fn cell_midpoint(&self, i: usize) -> Vec<f64> {
        self.cell_bounds(i).into_iter().map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn cell_volume(&self, i: usize) -> f64 {
        self.cell_bounds(i).into_iter().map(|(a, b)| b - a).product()
    }
}

/// Which estimator produced a set of cell probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbSource {
    Histogram,
    Kde,
    Parametric,
    Exact,
}

/// Estimated probabilities of the cells of a partition, summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct CellProbabilities {
    probs: Vec<f64>,
    partition: PartitionD,
    source: ProbSource,
    /// Estimated mass that fell outside the partition bounds before
    /// renormalization.
    pub outside_mass: f64,
}

impl CellProbabilities {
    /// Normalize nonnegative cell masses. `outside_mass` is recorded as given.
    pub fn from_masses(
        partition: PartitionD,
        masses: Vec<f64>,
        source: ProbSource,
        outside_mass: f64,
    ) -> Result<Self> {
        if masses.len() != partition.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} masses for a partition of {} cells",
                masses.len(),
                partition.len()
            )));
        }
        if let Some(bad) = masses.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
            return Err(Error::domain(format!("cell masses must be finite and nonnegative (got {bad})")));
        }
        let total = neumaier_sum(masses.iter().copied());
        if !(total > 0.0) {
            return Err(Error::DegenerateData("all cell masses are zero".into()));
        }
        let probs = masses.into_iter().map(|p| p / total).collect();
        Ok(Self {
            probs,
            partition,
            source,
            outside_mass,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn partition(&self) -> &PartitionD {
        &self.partition
    }

    pub fn source(&self) -> ProbSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Export as CSV `cell_index,lo_1..lo_m,hi_1..hi_m,prob`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let m = self.partition.dim();
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["cell_index".to_string()];
        header.extend((1..=m).map(|d| format!("lo_{d}")));
        header.extend((1..=m).map(|d| format!("hi_{d}")));
        header.push("prob".into());
        let csv_err = |e: csv::Error| Error::Numeric(e.to_string());
        w.write_record(&header).map_err(csv_err)?;
        for (i, p) in self.probs.iter().enumerate() {
            let cb = self.partition.cell_bounds(i);
            let mut rec = vec![i.to_string()];
            rec.extend(cb.iter().map(|b| b.0.to_string()));
            rec.extend(cb.iter().map(|b| b.1.to_string()));
            rec.push(p.to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Numeric(e.to_string()))?;
        Ok(())
    }
}

/// Count rows of `values` (row length `partition.dim()`) per cell.
/// Returns the counts and the number of rows outside the bounds.
pub fn cell_counts(values: &[f64], partition: &PartitionD) -> (Vec<u64>, u64) {
    let m = partition.dim();
    let ncells = partition.len();
    values
        .par_chunks(ACC_BLOCK * m)
        .map(|block| {
            let mut counts = vec![0u64; ncells];
            let mut outside = 0u64;
            for q in block.chunks_exact(m) {
                match partition.cell_index(q) {
                    Some(i) => counts[i] += 1,
                    None => outside += 1,
                }
            }
            (counts, outside)
        })
        .reduce(
            || (vec![0u64; ncells], 0),
            |(mut a, oa), (b, ob)| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                (a, oa + ob)
            },
        )
}

/// Histogram estimate `p̂_i = #{q_k ∈ I_i} / K`.
pub fn histogram_probs(data: &ObservedData, partition: &PartitionD) -> Result<CellProbabilities> {
    if data.output_dim() != partition.dim() {
        return Err(Error::ShapeMismatch(format!(
            "data has dimension {}, partition {}",
            data.output_dim(),
            partition.dim()
        )));
    }
    histogram_of_values(data.values(), partition)
}

/// Histogram of raw row-major values; rows outside the bounds are excluded
/// and their fraction reported as `outside_mass`.
pub fn histogram_of_values(values: &[f64], partition: &PartitionD) -> Result<CellProbabilities> {
    let (counts, outside) = cell_counts(values, partition);
    let inside: u64 = counts.iter().sum();
    if inside == 0 {
        return Err(Error::EmptyData {
            dropped: outside as usize,
        });
    }
    let total = (inside + outside) as f64;
    let probs = counts.iter().map(|&c| c as f64 / inside as f64).collect();
    Ok(CellProbabilities {
        probs,
        partition: partition.clone(),
        source: ProbSource::Histogram,
        outside_mass: outside as f64 / total,
    })
}

/// Scaling length `h_K = c · K^{-1/(m+4)}`.
pub fn default_bandwidth(k: usize, m: usize, c: f64) -> Result<f64> {
    if k < 2 {
        return Err(Error::domain(format!("bandwidth rule needs K >= 2 (got {k})")));
    }
    if !(c > 0.0 && c.is_finite()) || m == 0 {
        return Err(Error::domain(format!("bandwidth rule needs c > 0 and m >= 1 (got c={c}, m={m})")));
    }
    Ok(c * (k as f64).powf(-1.0 / (m as f64 + 4.0)))
}

/// Geometric mean of the per-dimension sample standard deviations; the
/// default scale `c` for [`default_bandwidth`].
pub fn data_scale(data: &ObservedData) -> f64 {
    let m = data.output_dim();
    let k = data.len() as f64;
    let mut log_sd = 0.0;
    for d in 0..m {
        let mean = neumaier_sum(data.rows().map(|r| r[d])) / k;
        let var = neumaier_sum(data.rows().map(|r| (r[d] - mean) * (r[d] - mean))) / k;
        log_sd += var.sqrt().ln();
    }
    (log_sd / m as f64).exp()
}

/// `default_bandwidth` with `c` set to [`data_scale`].
pub fn default_kde_bandwidth(data: &ObservedData) -> Result<f64> {
    let c = data_scale(data);
    if !(c > 0.0) {
        return Err(Error::DegenerateData("KDE bandwidth needs data with nonzero spread".into()));
    }
    default_bandwidth(data.len(), data.output_dim(), c)
}

/// Default number of cells when none is configured: `clamp(round(√K), 10, 200)`.
pub fn default_cell_count(k: usize) -> usize {
    ((k as f64).sqrt().round() as usize).clamp(10, 200)
}

/// Cell probabilities of the Gaussian-kernel density estimate with scalar
/// bandwidth `h`.
///
/// Each kernel is a product of 1-D normals, so its mass over a box is the
/// product of normal CDF differences; these are exact up to `erfc` rounding.
pub fn kde_cell_probs(data: &ObservedData, partition: &PartitionD, h: f64) -> Result<CellProbabilities> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::domain(format!("KDE bandwidth must be positive (got {h})")));
    }
    let m = partition.dim();
    if data.output_dim() != m {
        return Err(Error::ShapeMismatch(format!(
            "data has dimension {}, partition {m}",
            data.output_dim()
        )));
    }
    let ncells = partition.len();
    let counts = partition.cells_per_dim();
    let k = data.len() as f64;

    let partials: Vec<Vec<f64>> = data
        .values()
        .par_chunks(ACC_BLOCK * m)
        .map(|block| {
            let mut acc = vec![0.0; ncells];
            let mut axis: Vec<Vec<f64>> = counts.iter().map(|&n| vec![0.0; n]).collect();
            for q in block.chunks_exact(m) {
                for d in 0..m {
                    let e = partition.edges(d);
                    let mut prev = normal_cdf((e[0] - q[d]) / h);
                    for (j, slot) in axis[d].iter_mut().enumerate() {
                        let next = normal_cdf((e[j + 1] - q[d]) / h);
                        *slot = next - prev;
                        prev = next;
                    }
                }
                if m == 1 {
                    acc.iter_mut().zip(&axis[0]).for_each(|(a, p)| *a += p);
                } else {
                    for (i, a) in acc.iter_mut().enumerate() {
                        let mut rest = i;
                        let mut p = 1.0;
                        for d in (0..m).rev() {
                            p *= axis[d][rest % counts[d]];
                            rest /= counts[d];
                        }
                        *a += p;
                    }
                }
            }
            acc
        })
        .collect();

    let mut masses = vec![NeumaierSum::default(); ncells];
    for part in &partials {
        masses.iter_mut().zip(part).for_each(|(s, &p)| s.add(p));
    }
    let masses: Vec<f64> = masses.iter().map(|s| (s.value() / k).max(0.0)).collect();
    let inside = neumaier_sum(masses.iter().copied());
    CellProbabilities::from_masses(partition.clone(), masses, ProbSource::Kde, (1.0 - inside).max(0.0))
}

/// Mass of Beta(a, b) on `[x0, x1] ⊂ [0, 1]` by adaptive Simpson.
///
/// For a shape below one the density is unbounded at that endpoint; the
/// substitution `x = t^{1/a}` (or its mirror) makes the integrand bounded.
fn beta_mass(a: f64, b: f64, x0: f64, x1: f64, tol: f64) -> Result<f64> {
    if x1 <= x0 {
        return Ok(0.0);
    }
    let lb = ln_beta(a, b);
    let mut mass = 0.0;
    let (mut lo, mut hi) = (x0, x1);
    if a < 1.0 && lo == 0.0 {
        let cut = hi.min(0.5);
        // ∫_0^cut x^{a-1}(1-x)^{b-1}/B dx = (1/a)∫_0^{cut^a} (1 - t^{1/a})^{b-1}/B dt
        let g = |t: f64| ((b - 1.0) * (-t.powf(1.0 / a)).ln_1p() - lb).exp() / a;
        mass += adaptive_simpson(g, 0.0, cut.powf(a), tol / 3.0)?;
        lo = cut;
    }
    if b < 1.0 && hi == 1.0 && hi > lo {
        let cut = lo.max(0.5);
        let g = |t: f64| ((a - 1.0) * (-t.powf(1.0 / b)).ln_1p() - lb).exp() / b;
        mass += adaptive_simpson(g, 0.0, (1.0 - cut).powf(b), tol / 3.0)?;
        hi = cut;
    }
    if hi > lo {
        mass += adaptive_simpson(|x| beta_pdf(x, a, b), lo, hi, tol / 3.0)?;
    }
    Ok(mass)
}

/// Cell probabilities of a fitted Beta density, one adaptive Simpson
/// integral per cell at absolute tolerance 1e-10.
///
/// Fitted mass outside the partition bounds (when the fit's support is wider)
/// is reported in `outside_mass`; the in-bounds masses are renormalized.
pub fn parametric_cell_probs(fit: &BetaFit, partition: &PartitionD) -> Result<CellProbabilities> {
    if partition.dim() != 1 {
        return Err(Error::ShapeMismatch("parametric cell probabilities need a 1-D partition".into()));
    }
    let e = partition.edges(0);
    let w = fit.hi - fit.lo;
    let to_unit = |x: f64| ((x - fit.lo) / w).clamp(0.0, 1.0);
    let masses: Vec<f64> = (0..partition.len())
        .into_par_iter()
        .map(|i| beta_mass(fit.alpha, fit.beta, to_unit(e[i]), to_unit(e[i + 1]), DEFAULT_ABS_TOL))
        .collect::<Result<_>>()?;
    let inside = neumaier_sum(masses.iter().copied());
    CellProbabilities::from_masses(partition.clone(), masses, ProbSource::Parametric, 1.0 - inside)
}

/// Cell probabilities of an arbitrary 1-D density by per-cell adaptive Simpson.
pub fn density_cell_probs<F>(density: F, partition: &PartitionD) -> Result<CellProbabilities>
where
    F: Fn(f64) -> f64 + Sync,
{
    if partition.dim() != 1 {
        return Err(Error::ShapeMismatch("density cell probabilities need a 1-D partition".into()));
    }
    let e = partition.edges(0);
    let masses: Vec<f64> = (0..partition.len())
        .into_par_iter()
        .map(|i| adaptive_simpson(&density, e[i], e[i + 1], DEFAULT_ABS_TOL))
        .collect::<Result<_>>()?;
    let inside = neumaier_sum(masses.iter().copied());
    CellProbabilities::from_masses(partition.clone(), masses, ProbSource::Exact, 1.0 - inside)
}
