//! Shared fixtures for the benchmarks in `benches/`.

use std::sync::Arc;

use esip_core::experiments::{data_cell_probs, expdecay_study_config, prepare_data, prior_sample};
use esip_core::{CellProbabilities, ObservedData, QoiModel, Result, SampleSet, StudyConfig};

/// A prepared exp-decay problem at `T = 2` with `n` prior samples,
/// `k` observations and `m` cells.
pub struct Fixture {
    pub config: StudyConfig,
    pub model: QoiModel,
    pub prior: Arc<SampleSet>,
    pub data: ObservedData,
    pub data_probs: CellProbabilities,
}

impl Fixture {
    pub fn expdecay(n: usize, k: usize, m: usize) -> Result<Self> {
        let config = expdecay_study_config(2.0, k, m, n, 11);
        let model = config.model.build()?;
        let prepared = prepare_data(&config, &model)?;
        let (data_probs, _) = data_cell_probs(&config, &model, &prepared)?;
        let prior = Arc::new(prior_sample(&config, &model)?);
        Ok(Self {
            data: prepared.data.expect("synthetic data"),
            config,
            model,
            prior,
            data_probs,
        })
    }
}
