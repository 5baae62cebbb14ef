//! Config-driven calibration runs and the scripted studies built on them.
//!
//! A [`StudyConfig`] fully determines a run: every random draw comes from the
//! config seed through the named stage substreams, so re-running a config
//! reproduces its outputs bit for bit.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accept_reject::{cell_ratio_table, run_accept_reject, run_accept_reject_with_table, AcceptRejectResult};
use crate::data_io::{
    ball_observations, fit_beta_mle_with, jitter_augment, load_observations, resample_parametric, BallSubset,
    BetaFit, ObservedData, SupportRule, BALL_SUPPORT,
};
use crate::error::{Error, Result};
use crate::models::{ModelRegistry, ParameterSpace, QoiModel};
use crate::oracles::ExpDecayOracle;
use crate::output_measure::{
    default_kde_bandwidth, histogram_of_values, histogram_probs, kde_cell_probs, parametric_cell_probs,
    CellProbabilities, PartitionD, ProbSource,
};
use crate::posterior::{
    compute_weights_with, entropy_estimate, event_probability, forecast_weighted, marginal_heatmap, pushforward_check,
    read_posterior_csv, tv_distance,
    BoxEvent, GridHeatmap, WeightedPosterior, DEFAULT_EMPTY_MASS_THRESHOLD,
};
use crate::random::{
    mix64, sample_beta_product, sample_normal_product, sample_uniform_box, RandomStream, SampleSet,
    STAGE_ACCEPT_REJECT, STAGE_DATA_GEN, STAGE_NOISE, STAGE_PRIOR,
};

/// Schema version accepted by [`StudyConfig::validate`].
pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl ModelSpec {
    pub fn build(&self) -> Result<QoiModel> {
        ModelRegistry.build(&self.name, &self.params)
    }
}

/// Distribution on `Λ`, used both for priors and for synthetic data generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    Uniform,
    BetaProduct { alpha: Vec<f64>, beta: Vec<f64> },
    /// Independent normals truncated to `Λ`.
    NormalProduct { mean: Vec<f64>, sd: Vec<f64> },
    /// An explicit, equally weighted point set.
    Points { points: Vec<Vec<f64>> },
}

impl PriorSpec {
    pub fn sample(&self, space: &ParameterSpace, n: usize, stream: RandomStream) -> Result<SampleSet> {
        match self {
            PriorSpec::Uniform => Ok(sample_uniform_box(space, n, stream)),
            PriorSpec::BetaProduct { alpha, beta } => sample_beta_product(space, alpha, beta, n, stream),
            PriorSpec::NormalProduct { mean, sd } => sample_normal_product(mean, sd, space, n, stream),
            PriorSpec::Points { points } => {
                let dim = space.dim();
                if let Some(p) = points.iter().find(|p| p.len() != dim) {
                    return Err(Error::Config(format!("prior point {p:?} is not {dim}-dimensional")));
                }
                SampleSet::from_points(space.clone(), points.concat())
            }
        }
    }

    fn fixed_size(&self) -> Option<usize> {
        match self {
            PriorSpec::Points { points } => Some(points.len()),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// CSV with header `q_1..q_m`; relative paths resolve against the config file.
    File { path: PathBuf },
    /// `count` draws from `distribution` pushed through the model.
    Synthetic { distribution: PriorSpec, count: usize },
    /// The bundled flight times.
    Ball { subset: BallSubset },
    /// Literal observation rows.
    Values { values: Vec<Vec<f64>> },
    /// Cell probabilities given directly on the partition.
    CellProbs { probs: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataPrep {
    /// Fit a scaled Beta by maximum likelihood and replace the data by `count` draws.
    FitResample {
        count: usize,
        #[serde(default = "default_support")]
        support: SupportRule,
    },
    /// Replace each datum by `per_datum` Beta(α, β) draws on `[q − w, q + w]`.
    Jitter {
        half_width: f64,
        alpha: f64,
        beta: f64,
        per_datum: usize,
    },
}

fn default_support() -> SupportRule {
    BALL_SUPPORT
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    #[default]
    Histogram,
    /// Gaussian KDE; the default bandwidth rule is used when `bandwidth` is absent.
    Kde {
        #[serde(default)]
        bandwidth: Option<f64>,
    },
    /// Cell integrals of a 1-D scaled Beta fitted by maximum likelihood.
    Parametric {
        #[serde(default = "default_support")]
        support: SupportRule,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dims: Vec<usize>,
    pub cells: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptRejectSpec {
    /// Fresh prior draws to filter. When absent the calibration prior sample
    /// is filtered and also supplies the pushforward estimate.
    #[serde(default)]
    pub proposals: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub version: u32,
    pub model: ModelSpec,
    pub data: DataSpec,
    #[serde(default)]
    pub data_prep: Option<DataPrep>,
    /// Defaults to the model's range bounds.
    #[serde(default)]
    pub d_bounds: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub density: DensitySpec,
    /// Cells per output dimension of the data partition.
    pub cells: Vec<usize>,
    pub prior: PriorSpec,
    /// Prior sample size; ignored for point-set priors.
    #[serde(default)]
    pub n_samples: Option<usize>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub empty_mass_threshold: f64,
    #[serde(default)]
    pub accept_reject: Option<AcceptRejectSpec>,
    /// Directory relative file paths resolve against; set by [`StudyConfig::load`].
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_threshold() -> f64 {
    DEFAULT_EMPTY_MASS_THRESHOLD
}

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Schema checks that do not need to touch the filesystem.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let model = self.model.build()?;
        if self.cells.len() != model.output_dim() || self.cells.contains(&0) {
            return Err(Error::Config(format!(
                "cells must give a positive count for each of the {} output dimensions",
                model.output_dim()
            )));
        }
        if let Some(b) = &self.d_bounds {
            if b.len() != model.output_dim() {
                return Err(Error::Config("d_bounds does not match the model output dimension".into()));
            }
        }
        if self.prior.fixed_size().is_none() && self.n_samples.unwrap_or(0) == 0 {
            return Err(Error::Config("n_samples is required for a random prior".into()));
        }
        if let Some(g) = &self.grid {
            if g.dims.len() != g.cells.len() || g.dims.iter().any(|&d| d >= model.input_dim()) {
                return Err(Error::Config(format!("grid {g:?} does not fit a {}-D parameter space", model.input_dim())));
            }
        }
        if !(self.empty_mass_threshold >= 0.0) {
            return Err(Error::Config("empty_mass_threshold must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// Paths of input files the run reads.
    pub fn input_files(&self) -> Vec<PathBuf> {
        match &self.data {
            DataSpec::File { path } => vec![self.resolve(path)],
            _ => Vec::new(),
        }
    }

    pub fn root_stream(&self) -> RandomStream {
        RandomStream::new(self.seed, 0)
    }

    pub fn d_bounds_for(&self, model: &QoiModel) -> Vec<(f64, f64)> {
        self.d_bounds.clone().unwrap_or_else(|| model.range_bounds().to_vec())
    }
}

/// Run diagnostics reported alongside every calibration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    pub pushforward_max_discrepancy: f64,
    pub empty_cell_mass: f64,
    pub out_of_range: usize,
    pub entropy: Option<f64>,
    pub data_count: usize,
    pub data_dropped: usize,
    pub data_clipped: usize,
    pub data_outside_mass: f64,
    pub prior_samples: usize,
}

pub struct Calibration {
    pub model: QoiModel,
    pub data_probs: CellProbabilities,
    pub fit: Option<BetaFit>,
    pub posterior: WeightedPosterior,
    pub heatmap: Option<GridHeatmap>,
    pub diagnostics: Diagnostics,
}

/// Observed data after loading/generation and any configured preparation.
pub struct PreparedData {
    pub data: Option<ObservedData>,
    pub fit: Option<BetaFit>,
}

fn load_data(cfg: &StudyConfig, model: &QoiModel, d_bounds: &[(f64, f64)]) -> Result<Option<ObservedData>> {
    let stream = cfg.root_stream().stage(STAGE_DATA_GEN);
    Ok(Some(match &cfg.data {
        DataSpec::File { path } => load_observations(cfg.resolve(path), d_bounds)?,
        DataSpec::Synthetic { distribution, count } => synthetic_data(model, distribution, *count, d_bounds, stream)?,
        DataSpec::Ball { subset } => {
            let d = ball_observations(*subset)?;
            ObservedData::new(d.values().to_vec(), d_bounds.to_vec())?
        }
        DataSpec::Values { values } => {
            let m = d_bounds.len();
            if let Some(r) = values.iter().find(|r| r.len() != m) {
                return Err(Error::Config(format!("data row {r:?} is not {m}-dimensional")));
            }
            ObservedData::new(values.concat(), d_bounds.to_vec())?
        }
        DataSpec::CellProbs { .. } => return Ok(None),
    }))
}

/// Push `count` draws of `distribution` through `model`.
pub fn synthetic_data(
    model: &QoiModel,
    distribution: &PriorSpec,
    count: usize,
    d_bounds: &[(f64, f64)],
    stream: RandomStream,
) -> Result<ObservedData> {
    let s = distribution.sample(model.domain(), count, stream)?.evaluated(model)?;
    ObservedData::new(s.qvals().unwrap_or_default().to_vec(), d_bounds.to_vec())
}

pub fn prepare_data(cfg: &StudyConfig, model: &QoiModel) -> Result<PreparedData> {
    let d_bounds = cfg.d_bounds_for(model);
    let Some(raw) = load_data(cfg, model, &d_bounds)? else {
        if cfg.data_prep.is_some() {
            return Err(Error::Config("data_prep needs observations, not cell probabilities".into()));
        }
        return Ok(PreparedData { data: None, fit: None });
    };
    let noise = cfg.root_stream().stage(STAGE_NOISE);
    Ok(match &cfg.data_prep {
        None => PreparedData { data: Some(raw), fit: None },
        Some(DataPrep::FitResample { count, support }) => {
            let fit = fit_beta_mle_with(&raw, *support)?;
            let values = resample_parametric(&fit, *count, noise)?;
            PreparedData {
                data: Some(ObservedData::new(values, d_bounds)?),
                fit: Some(fit),
            }
        }
        Some(DataPrep::Jitter {
            half_width,
            alpha,
            beta,
            per_datum,
        }) => PreparedData {
            data: Some(jitter_augment(&raw, *half_width, *alpha, *beta, *per_datum, noise)?),
            fit: None,
        },
    })
}

/// Data cell probabilities on the configured partition.
pub fn data_cell_probs(cfg: &StudyConfig, model: &QoiModel, prepared: &PreparedData) -> Result<(CellProbabilities, Option<BetaFit>)> {
    let partition = PartitionD::uniform(&cfg.d_bounds_for(model), &cfg.cells)?;
    if let DataSpec::CellProbs { probs } = &cfg.data {
        if probs.len() != partition.len() {
            return Err(Error::Config(format!(
                "{} cell probabilities for a partition of {} cells",
                probs.len(),
                partition.len()
            )));
        }
        return Ok((CellProbabilities::from_masses(partition, probs.clone(), ProbSource::Exact, 0.0)?, None));
    }
    let data = prepared.data.as_ref().expect("observations loaded");
    Ok(match &cfg.density {
        DensitySpec::Histogram => (histogram_probs(data, &partition)?, prepared.fit.clone()),
        DensitySpec::Kde { bandwidth } => {
            let h = match bandwidth {
                Some(h) => *h,
                None => default_kde_bandwidth(data)?,
            };
            (kde_cell_probs(data, &partition, h)?, prepared.fit.clone())
        }
        DensitySpec::Parametric { support } => {
            let fit = fit_beta_mle_with(data, *support)?;
            (parametric_cell_probs(&fit, &partition)?, Some(fit))
        }
    })
}

pub fn prior_sample(cfg: &StudyConfig, model: &QoiModel) -> Result<SampleSet> {
    let n = cfg.prior.fixed_size().or(cfg.n_samples).unwrap_or(0);
    cfg.prior
        .sample(model.domain(), n, cfg.root_stream().stage(STAGE_PRIOR))?
        .evaluated(model)
}

/// Reweight a prior sample against already computed data probabilities.
pub fn calibrate_with(
    cfg: &StudyConfig,
    model: QoiModel,
    data_probs: CellProbabilities,
    fit: Option<BetaFit>,
    prior: impl Into<Arc<SampleSet>>,
    data_stats: (usize, usize, usize),
) -> Result<Calibration> {
    let posterior = compute_weights_with(prior, &data_probs, cfg.empty_mass_threshold)?;
    let heatmap = cfg
        .grid
        .as_ref()
        .map(|g| marginal_heatmap(&posterior, &g.dims, &g.cells))
        .transpose()?;
    let entropy = heatmap.as_ref().filter(|h| h.dims.len() == model.input_dim()).map(GridHeatmap::entropy);
    let diagnostics = Diagnostics {
        pushforward_max_discrepancy: pushforward_check(&posterior).max_discrepancy,
        empty_cell_mass: posterior.empty_cell_mass,
        out_of_range: posterior.out_of_range,
        entropy,
        data_count: data_stats.0,
        data_dropped: data_stats.1,
        data_clipped: data_stats.2,
        data_outside_mass: data_probs.outside_mass,
        prior_samples: posterior.len(),
    };
    Ok(Calibration {
        model,
        data_probs,
        fit,
        posterior,
        heatmap,
        diagnostics,
    })
}

/// The full pipeline: data, cell probabilities, prior sample, weights, heatmap.
pub fn run_calibration(cfg: &StudyConfig) -> Result<Calibration> {
    cfg.validate()?;
    let model = cfg.model.build()?;
    let prepared = prepare_data(cfg, &model)?;
    let (probs, fit) = data_cell_probs(cfg, &model, &prepared)?;
    let stats = prepared
        .data
        .as_ref()
        .map_or((0, 0, 0), |d| (d.len(), d.dropped, d.clipped));
    let prior = prior_sample(cfg, &model)?;
    calibrate_with(cfg, model, probs, fit, prior, stats)
}

/// Accept-reject on the configured problem.
pub fn run_accept_reject_study(cfg: &StudyConfig) -> Result<(CellProbabilities, AcceptRejectResult)> {
    cfg.validate()?;
    let model = cfg.model.build()?;
    let prepared = prepare_data(cfg, &model)?;
    let (probs, _) = data_cell_probs(cfg, &model, &prepared)?;
    let prior = prior_sample(cfg, &model)?;
    let ar_stream = cfg.root_stream().stage(STAGE_ACCEPT_REJECT);
    let proposals = cfg.accept_reject.as_ref().and_then(|a| a.proposals);
    let result = match proposals {
        None => run_accept_reject(&prior, &probs, ar_stream)?,
        Some(n) => {
            let push = histogram_of_values(prior.qvals().unwrap_or_default(), probs.partition())?;
            let table = cell_ratio_table(&probs, &push)?;
            let fresh = cfg
                .prior
                .sample(model.domain(), n, ar_stream.substream(1))?
                .evaluated(&model)?;
            run_accept_reject_with_table(&fresh, probs.partition(), table, Some(push.probs()), ar_stream.substream(0))?
        }
    };
    Ok((probs, result))
}

/// Push a saved posterior through a new model onto a new partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastConfig {
    pub version: u32,
    /// Posterior CSV written by a calibration; relative to the config file.
    pub posterior: PathBuf,
    pub model: ModelSpec,
    pub cells: Vec<usize>,
    /// Defaults to the model's range bounds.
    #[serde(default)]
    pub d_bounds: Option<Vec<(f64, f64)>>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ForecastConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        let model = cfg.model.build()?;
        if cfg.cells.len() != model.output_dim() || cfg.cells.contains(&0) {
            return Err(Error::Config("forecast cells do not match the model output dimension".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn posterior_path(&self) -> PathBuf {
        match &self.base_dir {
            Some(dir) if self.posterior.is_relative() => dir.join(&self.posterior),
            _ => self.posterior.clone(),
        }
    }
}

/// Forecast cell probabilities of the configured model under a saved posterior.
pub fn run_forecast(cfg: &ForecastConfig) -> Result<CellProbabilities> {
    let model = cfg.model.build()?;
    let path = cfg.posterior_path();
    let file = std::fs::File::open(&path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    let table = read_posterior_csv(std::io::BufReader::new(file), &path)?;
    if table.n != model.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "posterior has {}-D parameters, model '{}' takes {}",
            table.n,
            model.name(),
            model.input_dim()
        )));
    }
    let bounds = cfg.d_bounds.clone().unwrap_or_else(|| model.range_bounds().to_vec());
    let partition = PartitionD::uniform(&bounds, &cfg.cells)?;
    forecast_weighted(&table.points, &table.weights, &model, &partition)
}

// ---------------------------------------------------------------------------
// Studies

/// A study seed derived from a base seed and integer coordinates.
pub fn derive_seed(base: u64, coords: &[u64]) -> u64 {
    coords.iter().fold(mix64(base), |acc, &c| mix64(acc ^ mix64(c.wrapping_add(0x5851_F42D_4C95_7F2D))))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub m: usize,
    /// Mean TV to the reference over seeds.
    pub tv: f64,
    pub tv_per_seed: Vec<f64>,
    pub empty_cell_mass: f64,
}

/// Heatmap of one run of `base` with the prior size and cell count replaced.
pub fn sweep_point_heatmap(base: &StudyConfig, n: usize, m: usize, seed: u64) -> Result<(GridHeatmap, f64)> {
    let mut cfg = base.clone();
    cfg.n_samples = Some(n);
    cfg.cells = vec![m; cfg.cells.len()];
    cfg.seed = seed;
    if cfg.grid.is_none() {
        return Err(Error::Config("a sweep needs a heatmap grid".into()));
    }
    let cal = run_calibration(&cfg)?;
    let empty = cal.diagnostics.empty_cell_mass;
    Ok((cal.heatmap.expect("grid configured"), empty))
}

/// TV to `reference` over the product of `ns` and `ms`, averaged across `seeds`.
/// Without a reference the largest-budget point of each seed is used.
pub fn convergence_sweep(
    base: &StudyConfig,
    ns: &[usize],
    ms: &[usize],
    seeds: &[u64],
    reference: Option<&GridHeatmap>,
) -> Result<Vec<SweepRow>> {
    if ns.is_empty() || ms.is_empty() || seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one N, one M and one seed".into()));
    }
    let own_refs: Vec<GridHeatmap> = match reference {
        Some(_) => Vec::new(),
        None => {
            let (n, m) = (*ns.iter().max().unwrap(), *ms.iter().max().unwrap());
            seeds
                .iter()
                .map(|&s| sweep_point_heatmap(base, n, m, s).map(|h| h.0))
                .collect::<Result<_>>()?
        }
    };
    let mut rows = Vec::new();
    for &n in ns {
        for &m in ms {
            let mut tvs = Vec::with_capacity(seeds.len());
            let mut empty = 0.0;
            for (si, &s) in seeds.iter().enumerate() {
                let (h, e) = sweep_point_heatmap(base, n, m, s)?;
                let r = reference.unwrap_or_else(|| &own_refs[si]);
                tvs.push(tv_distance(&h, r)?);
                empty += e;
            }
            rows.push(SweepRow {
                n,
                m,
                tv: tvs.iter().sum::<f64>() / tvs.len() as f64,
                tv_per_seed: tvs,
                empty_cell_mass: empty / seeds.len() as f64,
            });
        }
    }
    Ok(rows)
}

/// Oracle reference heatmap for exp-decay sweeps with Beta(a, b)² data.
pub fn expdecay_reference(t: f64, a: f64, b: f64, cells: [usize; 2]) -> Result<GridHeatmap> {
    ExpDecayOracle::new(t, a, b)?.heatmap(cells)
}

/// Shape of the Beta(a, a)² data-generating distribution in the exp-decay studies.
pub const EXPDECAY_DATA_SHAPE: f64 = 12.0;
/// Heatmap resolution on the unit square in the exp-decay studies.
pub const EXPDECAY_GRID: usize = 80;

/// Exp-decay calibration with `k` synthetic Beta(12, 12)² data, `m` data
/// cells, `n` uniform prior samples and an 80×80 heatmap.
pub fn expdecay_study_config(t: f64, k: usize, m: usize, n: usize, seed: u64) -> StudyConfig {
    let shape = vec![EXPDECAY_DATA_SHAPE; 2];
    StudyConfig {
        version: CONFIG_VERSION,
        model: ModelSpec {
            name: "exp_decay".into(),
            params: BTreeMap::from([("T".to_string(), t)]),
        },
        data: DataSpec::Synthetic {
            distribution: PriorSpec::BetaProduct {
                alpha: shape.clone(),
                beta: shape,
            },
            count: k,
        },
        data_prep: None,
        d_bounds: None,
        density: DensitySpec::Histogram,
        cells: vec![m],
        prior: PriorSpec::Uniform,
        n_samples: Some(n),
        grid: Some(GridSpec {
            dims: vec![0, 1],
            cells: vec![EXPDECAY_GRID, EXPDECAY_GRID],
        }),
        seed,
        empty_mass_threshold: DEFAULT_EMPTY_MASS_THRESHOLD,
        accept_reject: None,
        base_dir: None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarianceSlope {
    pub ks: Vec<usize>,
    pub variances: Vec<f64>,
    pub means: Vec<f64>,
    /// `None` when some variance is zero and no log-log fit exists.
    pub slope: Option<f64>,
}

/// Minimum repeats for a variance estimate.
pub const MIN_REPEATS: usize = 30;

/// Variance of `P̂(event)` over independent synthetic data sets of size `K`.
///
/// The prior sample is drawn once from `base` and shared by every repeat, so
/// the variance is over the data alone. `base.data` must be synthetic.
pub fn variance_slope_study(base: &StudyConfig, event: &BoxEvent, ks: &[usize], repeats: usize) -> Result<VarianceSlope> {
    if repeats < MIN_REPEATS {
        return Err(Error::Config(format!("variance study needs at least {MIN_REPEATS} repeats (got {repeats})")));
    }
    let DataSpec::Synthetic { distribution, .. } = &base.data else {
        return Err(Error::Config("variance study needs synthetic data".into()));
    };
    base.validate()?;
    let model = base.model.build()?;
    let prior = Arc::new(prior_sample(base, &model)?);
    let d_bounds = base.d_bounds_for(&model);
    let partition = PartitionD::uniform(&d_bounds, &base.cells)?;
    let mut variances = Vec::new();
    let mut means = Vec::new();
    for (ki, &k) in ks.iter().enumerate() {
        let estimates: Vec<f64> = (0..repeats)
            .into_par_iter()
            .map(|r| {
                let seed = derive_seed(base.seed, &[ki as u64, r as u64]);
                let stream = RandomStream::new(seed, 0).stage(STAGE_DATA_GEN);
                let data = synthetic_data(&model, distribution, k, &d_bounds, stream)?;
                let probs = histogram_probs(&data, &partition)?;
                let post = compute_weights_with(prior.clone(), &probs, base.empty_mass_threshold)?;
                Ok(event_probability(&post, event))
            })
            .collect::<Result<_>>()?;
        let mean = estimates.iter().sum::<f64>() / repeats as f64;
        let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64;
        means.push(mean);
        variances.push(var);
    }
    let slope = if variances.iter().all(|&v| v > 0.0) && ks.len() >= 2 {
        let x: Vec<f64> = ks.iter().map(|&k| (k as f64).ln()).collect();
        let y: Vec<f64> = variances.iter().map(|v| v.ln()).collect();
        Some(least_squares_slope(&x, &y))
    } else {
        log::warn!("variance is zero for some K; skipping the log-log fit");
        None
    };
    Ok(VarianceSlope {
        ks: ks.to_vec(),
        variances,
        means,
        slope,
    })
}

pub fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

// ---------------------------------------------------------------------------
// Falling ball

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BallVariant {
    FitAll,
    NoisyAll,
    FitReduced,
    NoisyReduced,
    BowlingInformed,
}

impl BallVariant {
    pub const ALL: [BallVariant; 5] = [
        BallVariant::FitAll,
        BallVariant::NoisyAll,
        BallVariant::FitReduced,
        BallVariant::NoisyReduced,
        BallVariant::BowlingInformed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BallVariant::FitAll => "fit-all",
            BallVariant::NoisyAll => "noisy-all",
            BallVariant::FitReduced => "fit-reduced",
            BallVariant::NoisyReduced => "noisy-reduced",
            BallVariant::BowlingInformed => "bowling-informed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown falling-ball variant '{s}'")))
    }
}

/// Default prior sample size for the falling-ball studies.
pub const BALL_PRIOR_SAMPLES: usize = 1_000_000;
pub const BALL_CELLS: usize = 80;
pub const BALL_RESAMPLE: usize = 1_000_000;
/// Realistic range of `g` near sea level.
pub const G_EVENT: (f64, f64) = (9.78, 9.82);
/// Heatmap resolution of the pairwise marginals.
pub const BALL_GRID: usize = 40;

/// The study's calibration config for a variant.
pub fn falling_ball_config(variant: BallVariant, n_samples: usize, seed: u64) -> StudyConfig {
    let jitter = |half_width, per_datum| DataPrep::Jitter {
        half_width,
        alpha: 8.0,
        beta: 8.0,
        per_datum,
    };
    let fit = DataPrep::FitResample {
        count: BALL_RESAMPLE,
        support: BALL_SUPPORT,
    };
    let (subset, prep, prior) = match variant {
        BallVariant::FitAll => (BallSubset::All, fit, PriorSpec::Uniform),
        BallVariant::NoisyAll => (BallSubset::All, jitter(0.35, 50_000), PriorSpec::Uniform),
        BallVariant::FitReduced => (BallSubset::Reduced, fit, PriorSpec::Uniform),
        BallVariant::NoisyReduced => (BallSubset::Reduced, jitter(0.35, 70_000), PriorSpec::Uniform),
        BallVariant::BowlingInformed => (
            BallSubset::Bowling,
            jitter(0.03, 350_000),
            // N(35, .1) × N(0, .1) × N(9.81, .01), second arguments are variances.
            PriorSpec::NormalProduct {
                mean: vec![35.0, 0.0, 9.81],
                sd: vec![0.1f64.sqrt(), 0.1f64.sqrt(), 0.1],
            },
        ),
    };
    StudyConfig {
        version: CONFIG_VERSION,
        model: ModelSpec {
            name: "free_fall".into(),
            params: BTreeMap::new(),
        },
        data: DataSpec::Ball { subset },
        data_prep: Some(prep),
        d_bounds: None,
        density: DensitySpec::Histogram,
        cells: vec![BALL_CELLS],
        prior,
        n_samples: Some(n_samples),
        grid: None,
        seed,
        empty_mass_threshold: DEFAULT_EMPTY_MASS_THRESHOLD,
        accept_reject: None,
        base_dir: None,
    }
}

pub struct BallStudy {
    pub variant: BallVariant,
    pub calibration: Calibration,
    /// Marginals over (H0, V0), (H0, g), (V0, g).
    pub marginals: [GridHeatmap; 3],
    pub g_event_probability: f64,
}

impl BallStudy {
    /// Center of the modal cell of the (H0, g) marginal.
    pub fn modal_h0_g(&self) -> (f64, f64) {
        let h = &self.marginals[1];
        let c = h.grid().cell_midpoint(h.modal_cell().0);
        (c[0], c[1])
    }
}

pub fn falling_ball_study(variant: BallVariant, n_samples: usize, seed: u64) -> Result<BallStudy> {
    let cfg = falling_ball_config(variant, n_samples, seed);
    let calibration = run_calibration(&cfg)?;
    let post = &calibration.posterior;
    let marginals = [
        marginal_heatmap(post, &[0, 1], &[BALL_GRID, BALL_GRID])?,
        marginal_heatmap(post, &[0, 2], &[BALL_GRID, BALL_GRID])?,
        marginal_heatmap(post, &[1, 2], &[BALL_GRID, BALL_GRID])?,
    ];
    let mut event = BoxEvent::everything(post.samples().space());
    event.0[2] = G_EVENT;
    let g_event_probability = event_probability(post, &event);
    Ok(BallStudy {
        variant,
        calibration,
        marginals,
        g_event_probability,
    })
}

/// Estimator entropy on a grid spanning `Λ`, for the entropy comparisons.
pub fn posterior_entropy(cal: &Calibration, cells: &[usize]) -> Result<f64> {
    entropy_estimate(&cal.posterior, cells)
}
