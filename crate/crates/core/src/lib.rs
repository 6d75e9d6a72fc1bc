//! Rate-distortion computations for complementary delivery networks.
//!
//! All information quantities are in nats.

pub mod baselines;
pub mod cd;
pub mod channel;
pub mod error;
pub mod gcd;
pub mod prob;
pub mod sim;
pub mod solver;

pub use baselines::{
    conditional_rd, lossless_cd_rate, sandwich_check, wyner_ziv, wyner_ziv_curve, wyner_ziv_raw, SandwichReport,
};
pub use cd::{
    achieved_distortions, brute_force_cd_rate, cardinality_saturation_check, cd_information_terms, cd_objective,
    optimal_decoders, optimize_cd_rate, CdProblem, CdSolution, SaturationReport,
};
pub use channel::AuxiliaryChannel;
pub use error::{Error, Result};
pub use gcd::{gcd_objective, optimize_gcd_rate, three_source_example, DecoderSpec, GcdProblem, GcdSolution};
pub use prob::{
    conditional_entropy, conditional_mutual_information, entropy, expected_distortion, mutual_information,
    validate_joint, DecoderRule, DistortionBudget, DistortionMeasure, JointSource,
};
pub use sim::{
    channel_information, is_typical, run_trials, simulate, success_distortion_bound, CodebookConfig, SimConfig,
    SimulationRecord, SimulationReport, TypicalityParams,
};
pub use solver::{OptimizerOptions, Smoothing};
