//! Experiment orchestration.

pub mod config;
pub mod experiment;
pub mod fill;
pub mod pipeline;
pub mod synthetic;

pub use config::{ConfigError, ExperimentConfig, ScorerKind, Task};
pub use experiment::{run_experiment, ExperimentOutcome, RepetitionResult};
pub use fill::{fill_transcript, GapPrediction, MaskScorer, GAP_TOKEN};
pub use synthetic::{run_synthetic_study, run_synthetic_validity, SyntheticReport, SyntheticScorer, SyntheticSpec};
