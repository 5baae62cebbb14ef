//! The counting/reweighting posterior estimator and the queries it answers.
//!
//! A prior sample `λ_j` whose image falls in data cell `I_i` gets weight
//! `p̂_i / n_i`, where `n_i` counts the prior samples in that cell. Data mass
//! in cells that no prior sample reaches (`n_i = 0`) is dropped and the
//! remaining weights renormalized; the dropped amount is kept as
//! `empty_cell_mass`. Samples whose image lies outside the data bounds get
//! weight zero and are tallied in `out_of_range`.

use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{ParameterSpace, QoiModel};
use crate::output_measure::{CellProbabilities, PartitionD, ProbSource};
use crate::random::SampleSet;
use crate::sum::{neumaier_sum, NeumaierSum};

/// Cell marker for samples whose image lies outside the data partition.
pub const OUTSIDE: usize = usize::MAX;

/// Default bound on `empty_cell_mass` before [`compute_weights`] fails.
pub const DEFAULT_EMPTY_MASS_THRESHOLD: f64 = 0.05;

const BLOCK: usize = 4096;

/// Prior samples with estimator weights summing to one.
#[derive(Clone, Debug)]
pub struct WeightedPosterior {
    samples: Arc<SampleSet>,
    cell_of: Vec<usize>,
    weights: Vec<f64>,
    counts: Vec<u64>,
    data_probs: CellProbabilities,
    /// `Σ p̂_i` over the cells that share the weight; the renormalization constant.
    reached_mass: f64,
    pub empty_cell_mass: f64,
    pub out_of_range: usize,
}

/// [`compute_weights_with`] at the default empty-mass threshold.
pub fn compute_weights(prior: impl Into<Arc<SampleSet>>, data_probs: &CellProbabilities) -> Result<WeightedPosterior> {
    compute_weights_with(prior, data_probs, DEFAULT_EMPTY_MASS_THRESHOLD)
}

/// Build the reweighting posterior; fails if more than `threshold` of the
/// data mass falls in cells with no prior sample.
pub fn compute_weights_with(
    prior: impl Into<Arc<SampleSet>>,
    data_probs: &CellProbabilities,
    threshold: f64,
) -> Result<WeightedPosterior> {
    let samples: Arc<SampleSet> = prior.into();
    let partition = data_probs.partition();
    let m = partition.dim();
    let qvals = samples
        .qvals()
        .ok_or_else(|| Error::domain("prior samples must be evaluated before reweighting"))?;
    if samples.output_dim() != m {
        return Err(Error::ShapeMismatch(format!(
            "samples have output dimension {}, partition {m}",
            samples.output_dim()
        )));
    }
    if samples.is_empty() {
        return Err(Error::domain("prior sample is empty"));
    }
    let cell_of: Vec<usize> = qvals
        .par_chunks(m)
        .map(|q| partition.cell_index(q).unwrap_or(OUTSIDE))
        .collect();
    let ncells = partition.len();
    let mut counts = vec![0u64; ncells];
    let mut out_of_range = 0;
    for &c in &cell_of {
        if c == OUTSIDE {
            out_of_range += 1;
        } else {
            counts[c] += 1;
        }
    }
    if out_of_range == cell_of.len() {
        return Err(Error::DegenerateData(
            "no prior sample maps inside the data bounds; check d_bounds".into(),
        ));
    }
    let p = data_probs.probs();
    let empty_cell_mass = neumaier_sum((0..ncells).filter(|&i| counts[i] == 0).map(|i| p[i]));
    let reached_mass = neumaier_sum((0..ncells).filter(|&i| counts[i] > 0).map(|i| p[i]));
    if empty_cell_mass > threshold {
        return Err(Error::UnderResolvedPrior {
            empty_mass: empty_cell_mass,
            threshold,
        });
    }
    if !(reached_mass > 0.0) {
        return Err(Error::DegenerateData("no data mass in any cell reached by the prior".into()));
    }
    let per_cell: Vec<f64> = (0..ncells)
        .map(|i| if counts[i] > 0 { p[i] / counts[i] as f64 / reached_mass } else { 0.0 })
        .collect();
    let weights = cell_of
        .par_iter()
        .map(|&c| if c == OUTSIDE { 0.0 } else { per_cell[c] })
        .collect();
    Ok(WeightedPosterior {
        samples,
        cell_of,
        weights,
        counts,
        data_probs: data_probs.clone(),
        reached_mass,
        empty_cell_mass,
        out_of_range,
    })
}

impl WeightedPosterior {
    pub fn samples(&self) -> &SampleSet {
        &self.samples
    }

    pub fn samples_arc(&self) -> Arc<SampleSet> {
        Arc::clone(&self.samples)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cell_of(&self) -> &[usize] {
        &self.cell_of
    }

    /// Prior samples per data cell.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn data_probs(&self) -> &CellProbabilities {
        &self.data_probs
    }

    pub fn partition(&self) -> &PartitionD {
        self.data_probs.partition()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Weights before renormalization, `p̂_i / n_i`.
    pub fn unnormalized_weight(&self, j: usize) -> f64 {
        self.weights[j] * self.reached_mass
    }

    /// Export as CSV `lam_1..lam_n,q_1..q_m,cell,weight` (cell −1 = outside).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let s = &*self.samples;
        let (n, m) = (s.dim(), s.output_dim());
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=n).map(|d| format!("lam_{d}")).collect();
        header.extend((1..=m).map(|d| format!("q_{d}")));
        header.push("cell".into());
        header.push("weight".into());
        w.write_record(&header).map_err(csv_err)?;
        let q = s.qvals().unwrap_or(&[]);
        for j in 0..self.len() {
            let mut rec: Vec<String> = s.point(j).iter().map(|v| v.to_string()).collect();
            rec.extend(q[j * m..(j + 1) * m].iter().map(|v| v.to_string()));
            rec.push(if self.cell_of[j] == OUTSIDE {
                "-1".into()
            } else {
                self.cell_of[j].to_string()
            });
            rec.push(self.weights[j].to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Numeric(e.to_string()))?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Numeric(e.to_string())
}

/// A posterior read back from CSV: points, images, cells and weights.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorTable {
    pub n: usize,
    pub m: usize,
    pub points: Vec<f64>,
    pub qvals: Vec<f64>,
    pub cells: Vec<Option<usize>>,
    pub weights: Vec<f64>,
}

/// Parse the CSV written by [`WeightedPosterior::write_csv`].
pub fn read_posterior_csv<R: Read>(reader: R, label: &std::path::Path) -> Result<PosteriorTable> {
    let parse_err = |row: usize, message: String| Error::Parse {
        path: label.to_path_buf(),
        row,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| parse_err(0, e.to_string()))?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    let n = cols.iter().filter(|c| c.starts_with("lam_")).count();
    let m = cols.iter().filter(|c| c.starts_with("q_")).count();
    let mut expected: Vec<String> = (1..=n).map(|d| format!("lam_{d}")).collect();
    expected.extend((1..=m).map(|d| format!("q_{d}")));
    expected.push("cell".into());
    expected.push("weight".into());
    if n == 0 || cols != expected {
        return Err(parse_err(0, format!("expected header {}", expected.join(","))));
    }
    let mut t = PosteriorTable {
        n,
        m,
        points: Vec::new(),
        qvals: Vec::new(),
        cells: Vec::new(),
        weights: Vec::new(),
    };
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| parse_err(row, e.to_string()))?;
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(row, format!("bad number {:?} in column {}", &rec[k], cols[k])))
        };
        for k in 0..n {
            t.points.push(num(k)?);
        }
        for k in n..n + m {
            t.qvals.push(num(k)?);
        }
        let cell: i64 = rec[n + m]
            .parse()
            .map_err(|_| parse_err(row, format!("bad cell {:?}", &rec[n + m])))?;
        t.cells.push(usize::try_from(cell).ok());
        let w = num(n + m + 1)?;
        if w < 0.0 {
            return Err(parse_err(row, format!("negative weight {w}")));
        }
        t.weights.push(w);
    }
    if t.weights.is_empty() {
        return Err(Error::EmptyData { dropped: 0 });
    }
    Ok(t)
}

// ---------------------------------------------------------------------------
// Events

/// Closed axis-aligned box in `Λ`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxEvent(pub Vec<(f64, f64)>);

impl BoxEvent {
    pub fn contains(&self, lam: &[f64]) -> bool {
        lam.iter().zip(&self.0).all(|(&x, &(lo, hi))| x >= lo && x <= hi)
    }

    /// The whole parameter space.
    pub fn everything(space: &ParameterSpace) -> Self {
        Self(space.bounds().to_vec())
    }
}

fn weighted_sum<F>(points: &[f64], n: usize, weights: &[f64], pred: F) -> f64
where
    F: Fn(&[f64]) -> bool + Sync,
{
    let partials: Vec<f64> = points
        .par_chunks(BLOCK * n)
        .zip(weights.par_chunks(BLOCK))
        .map(|(pts, ws)| {
            let mut acc = NeumaierSum::default();
            for (lam, &w) in pts.chunks_exact(n).zip(ws) {
                if w > 0.0 && pred(lam) {
                    acc.add(w);
                }
            }
            acc.value()
        })
        .collect();
    neumaier_sum(partials)
}

/// Posterior probability of a box.
pub fn event_probability(post: &WeightedPosterior, event: &BoxEvent) -> f64 {
    event_probability_where(post, |lam| event.contains(lam))
}

/// Posterior probability of `{λ : pred(λ)}`.
pub fn event_probability_where<F>(post: &WeightedPosterior, pred: F) -> f64
where
    F: Fn(&[f64]) -> bool + Sync,
{
    let s = post.samples();
    weighted_sum(s.points(), s.dim(), post.weights(), pred).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// Heatmaps

/// Probability masses on a grid over some coordinates of `Λ`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridHeatmap {
    grid: PartitionD,
    /// Which parameter dimensions the grid axes refer to.
    pub dims: Vec<usize>,
    probs: Vec<f64>,
    /// Weight of samples outside the grid box.
    pub outside_mass: f64,
}

/// Accumulate `weights` of `points` (row length `n`) into a grid over `dims`.
pub fn weighted_heatmap(points: &[f64], n: usize, weights: &[f64], dims: &[usize], grid: PartitionD) -> Result<GridHeatmap> {
    if dims.len() != grid.dim() || dims.iter().any(|&d| d >= n) {
        return Err(Error::domain(format!("invalid heatmap dimensions {dims:?} for {n}-D samples")));
    }
    for (a, d) in dims.iter().enumerate() {
        if dims[..a].contains(d) {
            return Err(Error::domain(format!("heatmap dimensions must be distinct (got {dims:?})")));
        }
    }
    if points.len() != weights.len() * n {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} points",
            weights.len(),
            points.len() / n.max(1)
        )));
    }
    let ncells = grid.len();
    let partials: Vec<(Vec<f64>, f64)> = points
        .par_chunks(BLOCK * n)
        .zip(weights.par_chunks(BLOCK))
        .map(|(pts, ws)| {
            let mut acc = vec![0.0; ncells];
            let mut outside = 0.0;
            let mut coord = vec![0.0; dims.len()];
            for (lam, &w) in pts.chunks_exact(n).zip(ws) {
                if w == 0.0 {
                    continue;
                }
                for (c, &d) in coord.iter_mut().zip(dims) {
                    *c = lam[d];
                }
                match grid.cell_index(&coord) {
                    Some(i) => acc[i] += w,
                    None => outside += w,
                }
            }
            (acc, outside)
        })
        .collect();
    let mut probs = vec![NeumaierSum::default(); ncells];
    let mut outside = NeumaierSum::default();
    for (part, o) in &partials {
        probs.iter_mut().zip(part).for_each(|(s, &v)| s.add(v));
        outside.add(*o);
    }
    Ok(GridHeatmap {
        grid,
        dims: dims.to_vec(),
        probs: probs.iter().map(NeumaierSum::value).collect(),
        outside_mass: outside.value(),
    })
}

/// Heatmap of the posterior over `dims` with a grid spanning `Λ` in those dimensions.
pub fn marginal_heatmap(post: &WeightedPosterior, dims: &[usize], cells_per_dim: &[usize]) -> Result<GridHeatmap> {
    let s = post.samples();
    let bounds: Vec<(f64, f64)> = dims
        .iter()
        .map(|&d| s.space().bounds().get(d).copied())
        .collect::<Option<_>>()
        .ok_or_else(|| Error::domain(format!("invalid heatmap dimensions {dims:?}")))?;
    let grid = PartitionD::uniform(&bounds, cells_per_dim)?;
    weighted_heatmap(s.points(), s.dim(), post.weights(), dims, grid)
}

/// Equal-weight heatmap of a sample set (for example the output of accept-reject).
pub fn sample_heatmap(samples: &SampleSet, dims: &[usize], grid: PartitionD) -> Result<GridHeatmap> {
    if samples.is_empty() {
        return Err(Error::EmptyData { dropped: 0 });
    }
    let w = vec![1.0 / samples.len() as f64; samples.len()];
    weighted_heatmap(samples.points(), samples.dim(), &w, dims, grid)
}

impl GridHeatmap {
    /// Wrap precomputed masses (for example from an oracle).
    pub fn from_probs(grid: PartitionD, dims: Vec<usize>, probs: Vec<f64>, outside_mass: f64) -> Result<Self> {
        if probs.len() != grid.len() || dims.len() != grid.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{} masses for a grid of {} cells",
                probs.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            dims,
            probs,
            outside_mass,
        })
    }

    pub fn grid(&self) -> &PartitionD {
        &self.grid
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total(&self) -> f64 {
        neumaier_sum(self.probs.iter().copied())
    }

    /// Index and mass of the most probable cell (lowest index on ties).
    pub fn modal_cell(&self) -> (usize, f64) {
        self.probs
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, p)| if p > best.1 { (i, p) } else { best })
    }

    /// Cells whose mass is at least `fraction` of the modal mass.
    pub fn cells_above(&self, fraction: f64) -> Vec<usize> {
        let (_, max) = self.modal_cell();
        (0..self.probs.len()).filter(|&i| self.probs[i] >= fraction * max && self.probs[i] > 0.0).collect()
    }

    /// Plug-in differential entropy `-Σ P_c ln(P_c / vol_c)` in nats.
    pub fn entropy(&self) -> f64 {
        neumaier_sum(
            self.probs
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(i, &p)| -p * (p / self.grid.cell_volume(i)).ln()),
        )
    }

    /// CSV export. 2-D grids use `i,j,lo_1,hi_1,lo_2,hi_2,prob`; other
    /// dimensions follow the same pattern with one index per axis.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let k = self.grid.dim();
        const AXES: [&str; 6] = ["i", "j", "k", "l", "m", "n"];
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..k)
            .map(|a| AXES.get(a).map_or_else(|| format!("idx_{}", a + 1), |s| s.to_string()))
            .collect();
        for d in 1..=k {
            header.push(format!("lo_{d}"));
            header.push(format!("hi_{d}"));
        }
        header.push("prob".into());
        w.write_record(&header).map_err(csv_err)?;
        for (c, p) in self.probs.iter().enumerate() {
            let mut rec: Vec<String> = self.grid.unravel(c).iter().map(|x| x.to_string()).collect();
            for (lo, hi) in self.grid.cell_bounds(c) {
                rec.push(lo.to_string());
                rec.push(hi.to_string());
            }
            rec.push(p.to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Numeric(e.to_string()))?;
        Ok(())
    }

    /// Portable graymap of a 2-D heatmap: one pixel per cell, rows are the
    /// first axis, scaled so the modal cell is white. `binary` selects P5
    /// over P2.
    pub fn write_pgm<W: Write>(&self, mut writer: W, binary: bool) -> Result<()> {
        let counts = self.grid.cells_per_dim();
        if counts.len() != 2 {
            return Err(Error::ShapeMismatch("graymap export needs a 2-D heatmap".into()));
        }
        let (rows, cols) = (counts[0], counts[1]);
        let max = self.modal_cell().1;
        let pix: Vec<u8> = self
            .probs
            .iter()
            .map(|&p| if max > 0.0 { (255.0 * p / max).round() as u8 } else { 0 })
            .collect();
        let io = |e: std::io::Error| Error::Numeric(e.to_string());
        if binary {
            write!(writer, "P5\n{cols} {rows}\n255\n").map_err(io)?;
            writer.write_all(&pix).map_err(io)?;
        } else {
            write!(writer, "P2\n{cols} {rows}\n255\n").map_err(io)?;
            for row in pix.chunks(cols) {
                let line: Vec<String> = row.iter().map(u8::to_string).collect();
                writeln!(writer, "{}", line.join(" ")).map_err(io)?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Pushforward, forecast, entropy, distances

/// Per-cell pushforward discrepancies of a posterior.
#[derive(Clone, Debug, PartialEq)]
pub struct PushforwardReport {
    /// `|Σ_{j in cell} w_j − target_i|`, `None` for cells outside the support.
    pub per_cell: Vec<Option<f64>>,
    pub max_discrepancy: f64,
}

/// Compare the weight in each reached cell with `p̂_i / (1 − empty_cell_mass)`.
pub fn pushforward_check(post: &WeightedPosterior) -> PushforwardReport {
    let ncells = post.partition().len();
    let mut sums = vec![NeumaierSum::default(); ncells];
    for (&c, &w) in post.cell_of.iter().zip(&post.weights) {
        if c != OUTSIDE {
            sums[c].add(w);
        }
    }
    let p = post.data_probs.probs();
    let per_cell: Vec<Option<f64>> = (0..ncells)
        .map(|i| (post.counts[i] > 0).then(|| (sums[i].value() - p[i] / post.reached_mass).abs()))
        .collect();
    let max_discrepancy = per_cell.iter().flatten().copied().fold(0.0, f64::max);
    PushforwardReport {
        per_cell,
        max_discrepancy,
    }
}

/// Pushforward discrepancy of arbitrary samples (uniform weights when `weights`
/// is `None`) against `target`, restricted to cells where `support` holds and
/// with the target renormalized over them.
pub fn pushforward_check_samples(
    qvals: &[f64],
    weights: Option<&[f64]>,
    target: &CellProbabilities,
    support: &[bool],
) -> Result<PushforwardReport> {
    let part = target.partition();
    let m = part.dim();
    let count = qvals.len() / m;
    if count == 0 {
        return Err(Error::EmptyData { dropped: 0 });
    }
    if support.len() != part.len() {
        return Err(Error::ShapeMismatch("support mask does not match the partition".into()));
    }
    let mut sums = vec![NeumaierSum::default(); part.len()];
    for (j, q) in qvals.chunks_exact(m).enumerate() {
        if let Some(c) = part.cell_index(q) {
            sums[c].add(weights.map_or(1.0 / count as f64, |w| w[j]));
        }
    }
    let p = target.probs();
    let mass = neumaier_sum((0..p.len()).filter(|&i| support[i]).map(|i| p[i]));
    let per_cell: Vec<Option<f64>> = (0..p.len())
        .map(|i| support[i].then(|| (sums[i].value() - p[i] / mass).abs()))
        .collect();
    let max_discrepancy = per_cell.iter().flatten().copied().fold(0.0, f64::max);
    Ok(PushforwardReport {
        per_cell,
        max_discrepancy,
    })
}

/// Push weighted points through `model` into `partition`; weight landing
/// outside is reported in `outside_mass` before renormalization.
pub fn forecast_weighted(
    points: &[f64],
    weights: &[f64],
    model: &QoiModel,
    partition: &PartitionD,
) -> Result<CellProbabilities> {
    let n = model.input_dim();
    let m = model.output_dim();
    if partition.dim() != m || points.len() != weights.len() * n {
        return Err(Error::ShapeMismatch(format!(
            "forecast model '{}' maps {n} -> {m} dimensions; partition has {}",
            model.name(),
            partition.dim()
        )));
    }
    let ncells = partition.len();
    let partials: Vec<(Vec<f64>, f64)> = points
        .par_chunks(BLOCK * n)
        .zip(weights.par_chunks(BLOCK))
        .map(|(pts, ws)| {
            let mut acc = vec![0.0; ncells];
            let mut over = 0.0;
            let mut q = vec![0.0; m];
            for (lam, &w) in pts.chunks_exact(n).zip(ws) {
                if w == 0.0 {
                    continue;
                }
                model.eval_into(lam, &mut q);
                match partition.cell_index(&q) {
                    Some(i) => acc[i] += w,
                    None => over += w,
                }
            }
            (acc, over)
        })
        .collect();
    let mut sums = vec![NeumaierSum::default(); ncells];
    let mut over = NeumaierSum::default();
    let mut total = NeumaierSum::default();
    for (part, o) in &partials {
        sums.iter_mut().zip(part).for_each(|(s, &v)| {
            s.add(v);
            total.add(v);
        });
        over.add(*o);
        total.add(*o);
    }
    let total = total.value();
    let masses = sums.iter().map(NeumaierSum::value).collect();
    let overflow = if total > 0.0 { over.value() / total } else { 0.0 };
    CellProbabilities::from_masses(partition.clone(), masses, ProbSource::Histogram, overflow).map_err(|e| match e {
        Error::DegenerateData(_) => Error::DegenerateData("all forecast mass falls outside the forecast partition".into()),
        other => other,
    })
}

/// Forecast cell probabilities of a new QoI under the posterior.
pub fn forecast_pushforward(post: &WeightedPosterior, new_model: &QoiModel, partition: &PartitionD) -> Result<CellProbabilities> {
    if new_model.input_dim() != post.samples().dim() {
        return Err(Error::ShapeMismatch(format!(
            "forecast model '{}' takes {} inputs, posterior lives in {} dimensions",
            new_model.name(),
            new_model.input_dim(),
            post.samples().dim()
        )));
    }
    forecast_weighted(post.samples().points(), post.weights(), new_model, partition)
}

/// Plug-in differential entropy of the posterior on a grid spanning `Λ`.
pub fn entropy_estimate(post: &WeightedPosterior, cells_per_dim: &[usize]) -> Result<f64> {
    let n = post.samples().dim();
    let dims: Vec<usize> = (0..n).collect();
    Ok(marginal_heatmap(post, &dims, cells_per_dim)?.entropy())
}

/// Anything with masses on a fixed grid.
pub trait CellMasses {
    fn masses(&self) -> &[f64];
    fn cells(&self) -> &PartitionD;
}

impl CellMasses for GridHeatmap {
    fn masses(&self) -> &[f64] {
        &self.probs
    }
    fn cells(&self) -> &PartitionD {
        &self.grid
    }
}

impl CellMasses for CellProbabilities {
    fn masses(&self) -> &[f64] {
        self.probs()
    }
    fn cells(&self) -> &PartitionD {
        self.partition()
    }
}

/// Total variation `½ Σ |a_c − b_c|` between two distributions on the same grid.
pub fn tv_distance<A: CellMasses, B: CellMasses>(a: &A, b: &B) -> Result<f64> {
    if a.cells() != b.cells() {
        return Err(Error::domain("total variation needs identical grids"));
    }
    tv_distance_slices(a.masses(), b.masses())
}

pub fn tv_distance_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::domain(format!("total variation of {} vs {} cells", a.len(), b.len())));
    }
    Ok(0.5 * neumaier_sum(a.iter().zip(b).map(|(x, y)| (x - y).abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::QoiModel;
    use crate::output_measure::build_uniform_partition;
    use crate::random::{sample_uniform_box, RandomStream};

    fn parity_prior() -> SampleSet {
        let model = QoiModel::discrete_parity();
        let pts: Vec<f64> = (1..=3).flat_map(|a| (1..=3).flat_map(move |b| [a as f64, b as f64])).collect();
        SampleSet::from_points(model.domain().clone(), pts).unwrap().evaluated(&model).unwrap()
    }

    fn parity_probs() -> CellProbabilities {
        let p = build_uniform_partition(&[(0.0, 1.0)], &[2]).unwrap();
        CellProbabilities::from_masses(p, vec![0.34, 0.66], ProbSource::Exact, 0.0).unwrap()
    }

    #[test]
    fn discrete_parity_weights() {
        let post = compute_weights(parity_prior(), &parity_probs()).unwrap();
        for j in 0..9 {
            let expect = if post.cell_of()[j] == 0 { 0.085 } else { 0.132 };
            assert!((post.weights()[j] - expect).abs() < 1e-15, "{j}");
        }
        assert_eq!(post.counts(), &[4, 5]);
        assert!(pushforward_check(&post).max_discrepancy < 1e-15);
        assert!((neumaier_sum(post.weights().iter().copied()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uninformative_data_recovers_prior() {
        let space = ParameterSpace::unit_cube(2);
        let model = QoiModel::exp_decay(2.0);
        let prior = sample_uniform_box(&space, 10_000, RandomStream::new(1, 2)).evaluated(&model).unwrap();
        let part = build_uniform_partition(&[(0.0, 1.0)], &[20]).unwrap();
        let push = crate::output_measure::histogram_of_values(prior.qvals().unwrap(), &part).unwrap();
        let post = compute_weights(prior, &push).unwrap();
        assert!(post.weights().iter().all(|w| (w - 1e-4).abs() < 1e-16));
        assert_eq!(event_probability(&post, &BoxEvent::everything(&space)), 1.0);
        assert_eq!(event_probability(&post, &BoxEvent(vec![(0.2, 0.1), (0.0, 1.0)])), 0.0);
    }

    #[test]
    fn empty_cells_and_out_of_range() {
        let space = ParameterSpace::unit_cube(1);
        let model = QoiModel::new("id", space.clone(), vec![(0.0, 1.0)], Arc::new(|l: &[f64], q: &mut [f64]| q[0] = l[0])).unwrap();
        let prior = SampleSet::from_points(space, vec![0.1, 0.15, 0.9]).unwrap().evaluated(&model).unwrap();
        let part = build_uniform_partition(&[(0.0, 0.8)], &[4]).unwrap();
        let probs = CellProbabilities::from_masses(part, vec![0.5, 0.02, 0.0, 0.48], ProbSource::Exact, 0.0).unwrap();
        let err = compute_weights(prior.clone(), &probs).unwrap_err();
        assert!(matches!(err, Error::UnderResolvedPrior { .. }));
        let probs2 = CellProbabilities::from_masses(probs.partition().clone(), vec![0.97, 0.03, 0.0, 0.0], ProbSource::Exact, 0.0).unwrap();
        let post = compute_weights(prior, &probs2).unwrap();
        assert_eq!(post.out_of_range, 1);
        assert!((post.empty_cell_mass - 0.03).abs() < 1e-15);
        assert_eq!(post.weights()[2], 0.0);
        assert!((post.weights()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn heatmap_and_entropy_of_uniform() {
        let space = ParameterSpace::unit_cube(2);
        let model = QoiModel::exp_decay(2.0);
        let prior = sample_uniform_box(&space, 1_000_000, RandomStream::new(9, 2)).evaluated(&model).unwrap();
        let part = build_uniform_partition(&[(0.0, 1.0)], &[50]).unwrap();
        let push = crate::output_measure::histogram_of_values(prior.qvals().unwrap(), &part).unwrap();
        let post = compute_weights(prior, &push).unwrap();
        let h = marginal_heatmap(&post, &[0, 1], &[10, 10]).unwrap();
        let sd = (0.01f64 * 0.99 / 1e6).sqrt();
        assert!(h.probs().iter().all(|p| (p - 0.01).abs() < 4.5 * sd));
        assert!((h.total() - 1.0).abs() < 1e-12);
        let ent = entropy_estimate(&post, &[40, 40]).unwrap();
        assert!(ent.abs() < 0.02, "{ent}");
    }

    #[test]
    fn entropy_of_half_box() {
        let space = ParameterSpace::unit_cube(2);
        let pts = sample_uniform_box(&ParameterSpace::new(vec![(0.0, 0.5), (0.0, 1.0)]).unwrap(), 1_000_000, RandomStream::new(4, 4));
        let w = vec![1e-6; 1_000_000];
        let grid = PartitionD::uniform(space.bounds(), &[40, 40]).unwrap();
        let h = weighted_heatmap(pts.points(), 2, &w, &[0, 1], grid).unwrap();
        assert!((h.entropy() + std::f64::consts::LN_2).abs() < 0.02, "{}", h.entropy());
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance_slices(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert_eq!(tv_distance_slices(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        let tv = tv_distance_slices(&[0.34, 0.66], &[29.0 / 90.0, 61.0 / 90.0]).unwrap();
        assert!((tv - 0.01778).abs() < 1e-5);
        assert!(tv_distance_slices(&[1.0], &[0.5, 0.5]).is_err());
        let g1 = GridHeatmap::from_probs(PartitionD::uniform(&[(0.0, 1.0)], &[2]).unwrap(), vec![0], vec![0.5, 0.5], 0.0).unwrap();
        let g2 = GridHeatmap::from_probs(PartitionD::uniform(&[(0.0, 2.0)], &[2]).unwrap(), vec![0], vec![0.5, 0.5], 0.0).unwrap();
        assert!(tv_distance(&g1, &g2).is_err());
    }

    #[test]
    fn forecast_identity_and_uniform() {
        let post = compute_weights(parity_prior(), &parity_probs()).unwrap();
        let f = forecast_pushforward(&post, &QoiModel::discrete_parity(), post.partition()).unwrap();
        assert!((f.probs()[0] - 0.34).abs() < 1e-15 && (f.probs()[1] - 0.66).abs() < 1e-15);
        assert_eq!(f.outside_mass, 0.0);

        let prior = parity_prior();
        let flat = vec![1.0 / 9.0; 9];
        let f = forecast_weighted(prior.points(), &flat, &QoiModel::discrete_parity(), post.partition()).unwrap();
        assert!((f.probs()[0] - 4.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn forecast_point_mass() {
        let prior = parity_prior();
        let mut w = vec![0.0; 9];
        w[4] = 1.0; // (2,2) → even
        let part = build_uniform_partition(&[(0.0, 1.0)], &[2]).unwrap();
        let f = forecast_weighted(prior.points(), &w, &QoiModel::discrete_parity(), &part).unwrap();
        assert_eq!(f.probs(), &[0.0, 1.0]);
    }

    #[test]
    fn csv_round_trip_and_pgm() {
        let post = compute_weights(parity_prior(), &parity_probs()).unwrap();
        let mut buf = Vec::new();
        post.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("lam_1,lam_2,q_1,cell,weight\n1,1,1,1,0.132"));
        let t = read_posterior_csv(buf.as_slice(), std::path::Path::new("mem")).unwrap();
        assert_eq!(t.weights, post.weights());
        assert_eq!(t.cells[1], Some(0));

        let h = marginal_heatmap(&post, &[0, 1], &[3, 3]).unwrap();
        let mut csvb = Vec::new();
        h.write_csv(&mut csvb).unwrap();
        assert!(String::from_utf8(csvb).unwrap().starts_with("i,j,lo_1,hi_1,lo_2,hi_2,prob\n0,0,"));
        let mut pgm = Vec::new();
        h.write_pgm(&mut pgm, false).unwrap();
        let s = String::from_utf8(pgm).unwrap();
        assert!(s.starts_with("P2\n3 3\n255\n"));
        assert_eq!(s.lines().nth(3).unwrap(), "255 164 255");
        let mut p5 = Vec::new();
        h.write_pgm(&mut p5, true).unwrap();
        assert_eq!(p5.len(), "P5\n3 3\n255\n".len() + 9);
    }
}
