//! Inductive conformal prediction (ICP) for part-of-speech tagging and
//! masked-word infilling.
//!
//! The crate is scorer-agnostic: any model that emits a probability row over
//! a label vocabulary can be wrapped into finite-sample-valid prediction sets.
//! Two lightweight built-in scorers are provided in [`models`], and external
//! scorers plug in through the binary score-file format in [`scorefile`].
//!
//! Module map:
//!
//! - [`corpus`]: tagged-corpus ingestion, tag normalization, seeded splits
//!   and single-word masking.
//! - [`scorefile`]: the `CPSF` score-matrix format and its vocabulary sidecar.
//! - [`models`]: the lexical tagger and n-gram infiller baselines.
//! - [`icp`]: nonconformity, calibration, p-values, prediction sets and the
//!   transductive reference procedure.
//! - [`metrics`]: evaluation criteria, coverage curves and histograms.
//! - [`harness`]: experiment orchestration, the synthetic validity study and
//!   transcript gap filling.

pub mod corpus;
pub mod harness;
pub mod icp;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod scorefile;

pub use corpus::{
    mask_one_word, normalize_tag, parse_tagged_corpus, split_corpus, CorpusError, CorpusSplit,
    MaskedInstance, SplitSpec, TaggedCorpus, TaggedSentence, TaggedToken,
};
pub use icp::{
    calibrate, nonconformity, p_value, p_vector, prediction_set, tcp_prediction_set,
    CalibrationModel, IcpError, PValue, PValueVector, PredictionSet,
};
pub use metrics::{EpsilonStats, MetricsError, MetricsReport};
pub use models::{LexicalTagger, NGramInfiller};
pub use scorefile::{LabelVocabulary, ScoreFileError, ScoredExample};
