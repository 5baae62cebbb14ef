//! Estimation of posteriors for stochastic inverse problems by reweighting
//! prior samples against an estimate of the observed data distribution.

pub mod accept_reject;
pub mod data_io;
pub mod error;
pub mod experiments;
pub mod models;
pub mod oracles;
pub mod output_measure;
pub mod posterior;
pub mod quadrature;
pub mod random;
pub mod special;
pub mod sum;

pub use accept_reject::{run_accept_reject, AcceptRejectResult, RatioTable};
pub use data_io::{BetaFit, ObservedData, SupportRule};
pub use error::{Error, Result};
pub use experiments::{run_calibration, Calibration, Diagnostics, StudyConfig};
pub use models::{ModelRegistry, ParameterSpace, QoiModel};
pub use output_measure::{CellProbabilities, PartitionD, ProbSource};
pub use posterior::{compute_weights, BoxEvent, GridHeatmap, WeightedPosterior};
pub use random::{RandomStream, SampleSet};
