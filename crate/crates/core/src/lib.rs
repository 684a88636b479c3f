//! Bayesian overlap detection between pairs of shotgun reads.
//!
//! The numeric core is generic over [`num::Real`]; the aliases below fix the
//! scalar to `f64` (or `f32`) for the common cases.

pub mod detectors;
pub mod error;
pub mod montecarlo;
pub mod num;
pub mod oracle;
pub mod reading_channel;
pub mod sampler;
pub mod seed;
pub mod source_models;

pub use detectors::{
    detect_noiseless, detect_noisy, min_detectable_overlap, tie_rule_argmax, Decision, DetectorConfig, Mdo, MdoSetting,
    NoiselessDetector, NoisyDetector, ScoreVector,
};
pub use error::{Error, Result};
pub use montecarlo::{
    estimate_stratum, run_experiment, run_experiments, sweep, DetectorKind, ExperimentConfig, ExperimentReport,
    StratumEstimate, SweepReport,
};
pub use num::Real;
pub use oracle::{
    check_detectors, enumerated_posterior, exact_posterior, partial_power_sum, repetition_probability, OracleCheckConfig,
    OracleCheckReport, PosteriorTable,
};
pub use reading_channel::{
    chernoff_exponents, pair_statistics, renyi_divergence, theta_star, type1_mgf_bound, Channel, ChernoffExponents,
    Exponent, Lambda, PairStats,
};
pub use sampler::{overlap_prior, sample_pair, sample_pair_given_t, OverlapPrior, PairSampler, ReadPair};
pub use source_models::{MarkovKernel, Pmf, RenyiOrder, SourceModel, Symbol};

pub type Pmf64 = Pmf<f64>;
pub type SourceModel64 = SourceModel<f64>;
pub type MarkovKernel64 = MarkovKernel<f64>;
pub type Channel64 = Channel<f64>;
pub type PairStats64 = PairStats<f64>;
pub type PosteriorTable64 = PosteriorTable<f64>;

pub type Pmf32 = Pmf<f32>;
pub type SourceModel32 = SourceModel<f32>;
pub type Channel32 = Channel<f32>;
pub type PairStats32 = PairStats<f32>;
