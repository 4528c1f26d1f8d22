//! Turning corpus units into labeled score rows, and rows into calibration
//! scores and metrics.

use rayon::prelude::*;

use crate::corpus::{mask_one_word, CorpusError, TaggedCorpus};
use crate::icp::{nonconformity, p_vector, CalibrationModel, IcpError};
use crate::metrics::{forced_prediction, MetricsAccumulator, MetricsError};
use crate::models::{LexicalTagger, NGramInfiller};
use crate::scorefile::ScoredExample;

/// A probability row with an optional true label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRow {
    pub example_id: u64,
    pub truth: Option<usize>,
    pub scores: Vec<f64>,
}

impl LabeledRow {
    pub fn to_scored(&self) -> ScoredExample {
        ScoredExample {
            example_id: self.example_id,
            true_label: self.truth.map(|t| t as u32),
            scores: self.scores.iter().map(|&s| s as f32).collect(),
        }
    }
}

/// Example ids pack the sentence index and token position.
pub fn example_id(sentence: usize, position: usize) -> u64 {
    ((sentence as u64) << 32) | position as u64
}

/// Something that yields labeled rows for numbered units (sentences or
/// pre-scored rows).
pub enum RowProducer<'a> {
    /// One row per token of the sentence.
    Pos {
        corpus: &'a TaggedCorpus,
        tagger: &'a LexicalTagger,
    },
    /// One row per sentence, for a single seeded mask position.
    Mlm {
        corpus: &'a TaggedCorpus,
        infiller: &'a NGramInfiller,
        mask_seed: u64,
    },
    /// Unit `i` is row `i` of an external score file.
    External { rows: &'a [ScoredExample] },
}

impl RowProducer<'_> {
    pub fn rows(&self, unit: usize) -> Result<Vec<LabeledRow>, CorpusError> {
        match self {
            RowProducer::Pos { corpus, tagger } => {
                let sentence = corpus.sentences.get(unit).ok_or(CorpusError::SentenceOutOfRange {
                    index: unit,
                    len: corpus.len(),
                })?;
                Ok(sentence
                    .tokens
                    .iter()
                    .enumerate()
                    .map(|(pos, token)| LabeledRow {
                        example_id: example_id(unit, pos),
                        truth: corpus.tag_index(&token.tag),
                        scores: tagger.score_word(&token.word),
                    })
                    .collect())
            }
            RowProducer::Mlm {
                corpus,
                infiller,
                mask_seed,
            } => {
                let masked = mask_one_word(corpus, unit, *mask_seed)?;
                let (left, right) = masked.context(corpus);
                Ok(vec![LabeledRow {
                    example_id: example_id(unit, masked.mask_position),
                    truth: infiller.vocab().index_of(&masked.true_word),
                    scores: infiller.score_mask(left, right),
                }])
            }
            RowProducer::External { rows } => {
                let row = rows.get(unit).ok_or(CorpusError::SentenceOutOfRange {
                    index: unit,
                    len: rows.len(),
                })?;
                Ok(vec![LabeledRow {
                    example_id: row.example_id,
                    truth: row.true_label.map(|t| t as usize),
                    scores: row.row(),
                }])
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Icp(#[from] IcpError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("no labeled rows in the {0} set")]
    NoLabeledRows(&'static str),
}

/// Calibration scores over `units`; unlabeled rows are skipped and counted.
pub fn calibrate_units(
    producer: &RowProducer<'_>,
    units: &[usize],
) -> Result<(CalibrationModel, usize), PipelineError> {
    let per_unit: Vec<(Vec<f64>, usize)> = units
        .par_iter()
        .map(|&u| -> Result<_, PipelineError> {
            let mut alphas = Vec::new();
            let mut unlabeled = 0;
            for row in producer.rows(u)? {
                match row.truth {
                    Some(t) => alphas.push(nonconformity(&row.scores, t)?.clamp(0.0, 1.0)),
                    None => unlabeled += 1,
                }
            }
            Ok((alphas, unlabeled))
        })
        .collect::<Result<_, _>>()?;
    let unlabeled = per_unit.iter().map(|(_, u)| u).sum();
    let alphas: Vec<f64> = per_unit.into_iter().flat_map(|(a, _)| a).collect();
    if alphas.is_empty() {
        return Err(PipelineError::NoLabeledRows("calibration"));
    }
    Ok((CalibrationModel::from_scores(alphas)?, unlabeled))
}

/// Evaluation of `units` against a calibration model. Returns the accumulator
/// and the number of unlabeled rows skipped.
pub fn evaluate_units(
    producer: &RowProducer<'_>,
    units: &[usize],
    cal: &CalibrationModel,
    epsilons: &[f64],
) -> Result<(MetricsAccumulator, usize), PipelineError> {
    let empty = MetricsAccumulator::new(epsilons)?;
    let (acc, unlabeled) = units
        .par_iter()
        .map(|&u| -> Result<_, PipelineError> {
            let mut acc = empty.clone();
            let mut unlabeled = 0usize;
            for row in producer.rows(u)? {
                let Some(truth) = row.truth else {
                    unlabeled += 1;
                    continue;
                };
                let pv = p_vector(cal, &row.scores);
                acc.push(&pv, truth, forced_prediction(&row.scores))?;
            }
            Ok((acc, unlabeled))
        })
        .try_reduce(
            || (empty.clone(), 0),
            |(a, ua), (b, ub)| Ok((a.merge(b)?, ua + ub)),
        )?;
    if acc.is_empty() {
        return Err(PipelineError::NoLabeledRows("test"));
    }
    Ok((acc, unlabeled))
}
