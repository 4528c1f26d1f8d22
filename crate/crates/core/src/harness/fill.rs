//! Filling `<UNK>` gaps in a transcript with conformal word sets.

use crate::icp::{p_vector, prediction_set, CalibrationModel, IcpError, PredictionSet};
use crate::models::NGramInfiller;
use crate::scorefile::LabelVocabulary;

pub const GAP_TOKEN: &str = "<UNK>";

/// A model that scores a single masked position from its neighbours.
pub trait MaskScorer {
    fn vocab(&self) -> &LabelVocabulary;
    fn score_mask(&self, left: Option<&str>, right: Option<&str>) -> Vec<f64>;
}

impl MaskScorer for NGramInfiller {
    fn vocab(&self) -> &LabelVocabulary {
        NGramInfiller::vocab(self)
    }

    fn score_mask(&self, left: Option<&str>, right: Option<&str>) -> Vec<f64> {
        NGramInfiller::score_mask(self, left, right)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapPrediction {
    /// Token position of the gap in the whitespace-split text.
    pub position: usize,
    pub set: PredictionSet,
    pub words: Vec<String>,
}

/// Predicts every gap on its own, one pass per gap. Other gaps stay in the
/// context verbatim, so adjacent gaps see each other as `<UNK>`.
pub fn fill_transcript<S: MaskScorer + ?Sized>(
    text: &str,
    scorer: &S,
    cal: &CalibrationModel,
    epsilon: f64,
) -> Result<Vec<GapPrediction>, IcpError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| **t == GAP_TOKEN)
        .map(|(position, _)| {
            let left = position.checked_sub(1).map(|i| tokens[i]);
            let right = tokens.get(position + 1).copied();
            let row = scorer.score_mask(left, right);
            let set = prediction_set(&p_vector(cal, &row), epsilon)?;
            let words = set
                .members
                .iter()
                .map(|&i| scorer.vocab().label(i).unwrap_or_default().to_string())
                .collect();
            Ok(GapPrediction { position, set, words })
        })
        .collect()
}
