//! Accept-reject sampling from the posterior using the update ratio
//! `ρ̂_D / ρ̂_{p,D}` on the data partition.
//!
//! As in the original algorithm, the prior pushforward and the bound `C` are
//! computed from the same batch that is being filtered. This makes `C` the
//! exact maximum over the batch but introduces a small finite-sample bias;
//! [`run_accept_reject_with_table`] accepts a table built elsewhere.
//!
//! The uniform `ξ_k` of sample `k` is drawn from `(0, 1]` and the sample is
//! kept iff `ξ_k ≤ ratio / C`, so a zero ratio always rejects and the
//! largest ratio always accepts.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::output_measure::{histogram_of_values, CellProbabilities, PartitionD};
use crate::random::{RandomStream, SampleSet};
use crate::sum::neumaier_sum;

/// Update ratios per data cell and their maximum.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioTable {
    /// `data_i / prior_i`, or `None` where the prior pushforward is zero.
    pub ratios: Vec<Option<f64>>,
    pub c: f64,
    /// Data mass in cells the prior pushforward does not reach.
    pub unreachable_mass: f64,
}

impl RatioTable {
    pub fn ratio(&self, cell: usize) -> f64 {
        self.ratios[cell].unwrap_or(0.0)
    }
}

/// Ratio table from per-cell masses on a shared partition (normalization is
/// irrelevant: a common scale cancels in `ratio / C`).
pub fn cell_ratio_table_masses(data: &[f64], prior: &[f64]) -> Result<RatioTable> {
    if data.len() != prior.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} data cells vs {} prior cells",
            data.len(),
            prior.len()
        )));
    }
    let ratios: Vec<Option<f64>> = data
        .iter()
        .zip(prior)
        .map(|(&d, &p)| (p > 0.0).then(|| d / p))
        .collect();
    let unreachable_mass = neumaier_sum(
        data.iter()
            .zip(prior)
            .filter(|(_, &p)| p <= 0.0)
            .map(|(&d, _)| d),
    );
    let c = ratios.iter().flatten().copied().fold(0.0, f64::max);
    if !(c > 0.0) {
        return Err(Error::DegenerateData(
            "every update ratio is zero: no data mass where the prior pushes forward".into(),
        ));
    }
    Ok(RatioTable {
        ratios,
        c,
        unreachable_mass,
    })
}

pub fn cell_ratio_table(data_probs: &CellProbabilities, prior_push: &CellProbabilities) -> Result<RatioTable> {
    if data_probs.partition() != prior_push.partition() {
        return Err(Error::domain("update ratio needs both measures on the same partition"));
    }
    cell_ratio_table_masses(data_probs.probs(), prior_push.probs())
}

/// Outcome of one accept-reject pass.
#[derive(Clone, Debug)]
pub struct AcceptRejectResult {
    pub accepted: SampleSet,
    /// Positions of the accepted samples in the input, increasing.
    pub accepted_indices: Vec<usize>,
    pub accept_count: usize,
    pub proposals: usize,
    pub table: RatioTable,
    /// `Σ_i prior_i · ratio_i / C` for the prior masses the table was built from.
    pub expected_rate: f64,
}

impl AcceptRejectResult {
    pub fn c(&self) -> f64 {
        self.table.c
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accept_count as f64 / self.proposals as f64
    }

    /// Export as CSV `lam_1..lam_n,q_1..q_m`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_samples_csv(&self.accepted, writer)
    }
}

/// Write a sample set as CSV `lam_1..lam_n[,q_1..q_m]`.
pub fn write_samples_csv<W: Write>(samples: &SampleSet, writer: W) -> Result<()> {
    let (n, m) = (samples.dim(), samples.output_dim());
    let csv_err = |e: csv::Error| Error::Numeric(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=n).map(|d| format!("lam_{d}")).collect();
    header.extend((1..=m).map(|d| format!("q_{d}")));
    w.write_record(&header).map_err(csv_err)?;
    for j in 0..samples.len() {
        let mut rec: Vec<String> = samples.point(j).iter().map(|v| v.to_string()).collect();
        if let Some(q) = samples.qval(j) {
            rec.extend(q.iter().map(|v| v.to_string()));
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(())
}

fn sample_cells(prior: &SampleSet, partition: &PartitionD) -> Result<Vec<Option<usize>>> {
    let q = prior
        .qvals()
        .ok_or_else(|| Error::domain("prior samples must be evaluated before accept-reject"))?;
    if prior.output_dim() != partition.dim() {
        return Err(Error::ShapeMismatch(format!(
            "samples have output dimension {}, partition {}",
            prior.output_dim(),
            partition.dim()
        )));
    }
    Ok(q.par_chunks(partition.dim()).map(|q| partition.cell_index(q)).collect())
}

/// Accept-reject with the prior pushforward estimated from `prior` itself.
pub fn run_accept_reject(prior: &SampleSet, data_probs: &CellProbabilities, stream: RandomStream) -> Result<AcceptRejectResult> {
    if prior.is_empty() {
        return Err(Error::domain("accept-reject needs a nonempty prior sample"));
    }
    let q = prior
        .qvals()
        .ok_or_else(|| Error::domain("prior samples must be evaluated before accept-reject"))?;
    let push = histogram_of_values(q, data_probs.partition())?;
    let table = cell_ratio_table(data_probs, &push)?;
    let expected_rate = expected_rate(&table, push.probs());
    filter(prior, data_probs.partition(), table, expected_rate, stream)
}

/// Accept-reject with a ratio table computed elsewhere on `partition`.
/// `prior_masses` (if given) is used only for `expected_rate`.
pub fn run_accept_reject_with_table(
    prior: &SampleSet,
    partition: &PartitionD,
    table: RatioTable,
    prior_masses: Option<&[f64]>,
    stream: RandomStream,
) -> Result<AcceptRejectResult> {
    if table.ratios.len() != partition.len() {
        return Err(Error::ShapeMismatch("ratio table does not match the partition".into()));
    }
    let rate = prior_masses.map_or(f64::NAN, |p| expected_rate(&table, p));
    filter(prior, partition, table, rate, stream)
}

fn expected_rate(table: &RatioTable, prior: &[f64]) -> f64 {
    let total = neumaier_sum(prior.iter().copied());
    neumaier_sum(prior.iter().enumerate().map(|(i, &p)| p * table.ratio(i))) / (total * table.c)
}

fn filter(
    prior: &SampleSet,
    partition: &PartitionD,
    table: RatioTable,
    expected_rate: f64,
    stream: RandomStream,
) -> Result<AcceptRejectResult> {
    if !(table.c > 0.0) {
        return Err(Error::DegenerateData("accept-reject bound C is zero".into()));
    }
    let cells = sample_cells(prior, partition)?;
    let c = table.c;
    let accepted_indices: Vec<usize> = cells
        .par_iter()
        .enumerate()
        .filter_map(|(k, cell)| {
            let ratio = cell.map_or(0.0, |i| table.ratio(i));
            let xi = 1.0 - stream.uniform_at(k as u64);
            (xi <= ratio / c).then_some(k)
        })
        .collect();
    Ok(AcceptRejectResult {
        accepted: prior.subset(&accepted_indices),
        accept_count: accepted_indices.len(),
        accepted_indices,
        proposals: prior.len(),
        table,
        expected_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ParameterSpace, QoiModel};
    use crate::output_measure::{build_uniform_partition, ProbSource};

    #[test]
    fn ratio_examples() {
        let t = cell_ratio_table_masses(&[0.3, 0.7], &[0.3, 0.7]).unwrap();
        assert_eq!(t.ratios, vec![Some(1.0), Some(1.0)]);
        assert_eq!(t.c, 1.0);
        let t = cell_ratio_table_masses(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
        assert_eq!(t.ratios[0], Some(2.0));
        assert!((t.ratios[1].unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(t.c, 2.0);
        let t = cell_ratio_table_masses(&[0.34, 0.66], &[4.0 / 9.0, 5.0 / 9.0]).unwrap();
        assert!((t.ratios[0].unwrap() - 0.765).abs() < 1e-12);
        assert!((t.ratios[1].unwrap() - 1.188).abs() < 1e-12);
        assert!((t.c - 1.188).abs() < 1e-12);
        let t = cell_ratio_table_masses(&[0.2, 0.8], &[1.0, 0.0]).unwrap();
        assert!((t.unreachable_mass - 0.8).abs() < 1e-15);
        assert!(cell_ratio_table_masses(&[0.0, 1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn all_ones_accepts_everything() {
        let model = QoiModel::discrete_parity();
        let pts: Vec<f64> = (1..=3).flat_map(|a| (1..=3).flat_map(move |b| [a as f64, b as f64])).collect();
        let prior = SampleSet::from_points(model.domain().clone(), pts).unwrap().evaluated(&model).unwrap();
        let part = build_uniform_partition(&[(0.0, 1.0)], &[2]).unwrap();
        let data = CellProbabilities::from_masses(part, vec![4.0, 5.0], ProbSource::Exact, 0.0).unwrap();
        let r = run_accept_reject(&prior, &data, RandomStream::new(1, 4)).unwrap();
        assert_eq!(r.accept_count, 9);
        assert!((r.expected_rate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conditional_acceptance_matches_ratio() {
        let space = ParameterSpace::unit_cube(1);
        let model = QoiModel::new("id", space.clone(), vec![(0.0, 1.0)], std::sync::Arc::new(|l: &[f64], q: &mut [f64]| q[0] = l[0])).unwrap();
        let n = 200_000;
        let pts: Vec<f64> = (0..n).map(|k| if k % 2 == 0 { 0.25 } else { 0.75 }).collect();
        let prior = SampleSet::from_points(space, pts).unwrap().evaluated(&model).unwrap();
        let part = build_uniform_partition(&[(0.0, 1.0)], &[2]).unwrap();
        let data = CellProbabilities::from_masses(part, vec![0.3, 0.7], ProbSource::Exact, 0.0).unwrap();
        let r = run_accept_reject(&prior, &data, RandomStream::new(7, 4)).unwrap();
        let target = 0.6 / 1.4;
        let hits = r.accepted_indices.iter().filter(|&&k| k % 2 == 0).count() as f64;
        let per = (n / 2) as f64;
        let sd = (target * (1.0 - target) / per).sqrt();
        assert!((hits / per - target).abs() < 3.0 * sd, "{}", hits / per);
        assert_eq!(r.accept_count - hits as usize, n / 2);
    }

    #[test]
    fn common_scale_leaves_decisions_unchanged() {
        let space = ParameterSpace::unit_cube(2);
        let model = QoiModel::exp_decay(2.0);
        let prior = crate::random::sample_uniform_box(&space, 50_000, RandomStream::new(3, 2)).evaluated(&model).unwrap();
        let part = build_uniform_partition(&[(0.0, 1.0)], &[20]).unwrap();
        let push = histogram_of_values(prior.qvals().unwrap(), &part).unwrap();
        let data: Vec<f64> = (0..20).map(|i| (i as f64 + 1.0).sqrt()).collect();
        let s = RandomStream::new(3, 4);
        let a = cell_ratio_table_masses(&data, push.probs()).unwrap();
        let scaled_d: Vec<f64> = data.iter().map(|x| x * 8.0).collect();
        let scaled_p: Vec<f64> = push.probs().iter().map(|x| x * 8.0).collect();
        let b = cell_ratio_table_masses(&scaled_d, &scaled_p).unwrap();
        let ra = run_accept_reject_with_table(&prior, &part, a, Some(push.probs()), s).unwrap();
        let rb = run_accept_reject_with_table(&prior, &part, b, Some(&scaled_p), s).unwrap();
        assert_eq!(ra.accepted_indices, rb.accepted_indices);
    }
}
