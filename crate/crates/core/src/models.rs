//! Lightweight scorers that turn tagged text into probability rows.
//!
//! Neither model is meant to be competitive. Their job is to emit valid
//! probability vectors so the conformal layer has something to calibrate;
//! coverage does not depend on scorer quality, only set sizes do.

use std::collections::{BTreeMap, HashMap};

use crate::corpus::TaggedSentence;
use crate::scorefile::{LabelVocabulary, ScoreFileError};

pub const DEFAULT_TAGGER_K: f64 = 0.1;
pub const DEFAULT_INFILLER_K: f64 = 0.1;
pub const DEFAULT_LAMBDAS: Lambdas = Lambdas {
    unigram: 0.25,
    left: 0.375,
    right: 0.375,
};
pub const DEFAULT_VOCAB_CAP: usize = 10_000;

/// Add-k smoothed `P(tag | word)` with a global-tag-distribution fallback for
/// unseen words.
#[derive(Debug, Clone, PartialEq)]
pub struct LexicalTagger {
    counts: HashMap<String, BTreeMap<usize, u64>>,
    word_totals: HashMap<String, u64>,
    tag_totals: Vec<u64>,
    k: f64,
    case_fold: bool,
}

impl LexicalTagger {
    /// Counts `(word, tag)` pairs. `tag_index` maps a tag to its position in
    /// the label set of size `q`; tokens whose tag it does not know are
    /// skipped.
    pub fn fit<'a, I, F>(sentences: I, q: usize, tag_index: F, k: f64, case_fold: bool) -> Self
    where
        I: IntoIterator<Item = &'a TaggedSentence>,
        F: Fn(&str) -> Option<usize>,
    {
        let mut counts: HashMap<String, BTreeMap<usize, u64>> = HashMap::new();
        let mut word_totals: HashMap<String, u64> = HashMap::new();
        let mut tag_totals = vec![0u64; q];
        for token in sentences.into_iter().flat_map(|s| s.tokens.iter()) {
            let Some(tag) = tag_index(&token.tag).filter(|&t| t < q) else {
                continue;
            };
            let key = fold(&token.word, case_fold);
            *counts.entry(key.clone()).or_default().entry(tag).or_default() += 1;
            *word_totals.entry(key).or_default() += 1;
            tag_totals[tag] += 1;
        }
        Self {
            counts,
            word_totals,
            tag_totals,
            k: k.max(0.0),
            case_fold,
        }
    }

    pub fn q(&self) -> usize {
        self.tag_totals.len()
    }

    pub fn tag_totals(&self) -> &[u64] {
        &self.tag_totals
    }

    pub fn counts_for(&self, word: &str) -> Option<&BTreeMap<usize, u64>> {
        self.counts.get(&fold(word, self.case_fold))
    }

    /// `(c(word, s) + k) / (c(word) + k·q)` for a seen word, otherwise the
    /// smoothed global tag distribution.
    pub fn score_word(&self, word: &str) -> Vec<f64> {
        let q = self.q();
        let key = fold(word, self.case_fold);
        let mut row = vec![self.k; q];
        let total = match self.counts.get(&key) {
            Some(tags) => {
                for (&t, &c) in tags {
                    row[t] += c as f64;
                }
                self.word_totals[&key] as f64
            }
            None => {
                for (r, &c) in row.iter_mut().zip(&self.tag_totals) {
                    *r += c as f64;
                }
                self.tag_totals.iter().sum::<u64>() as f64
            }
        };
        let denom = total + self.k * q as f64;
        if denom > 0.0 {
            row.iter_mut().for_each(|r| *r /= denom);
        } else {
            row.fill(1.0 / q as f64);
        }
        row
    }
}

fn fold(word: &str, case_fold: bool) -> String {
    if case_fold {
        word.to_lowercase()
    } else {
        word.to_string()
    }
}

/// Mixture weights of the infiller's three component distributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lambdas {
    pub unigram: f64,
    pub left: f64,
    pub right: f64,
}

impl Lambdas {
    pub fn new(unigram: f64, left: f64, right: f64) -> Result<Self, String> {
        let l = Self { unigram, left, right };
        let parts = [unigram, left, right];
        if parts.iter().any(|x| !x.is_finite() || *x < 0.0) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(format!("mixture weights {unigram}/{left}/{right} must be >= 0 and sum to 1"));
        }
        Ok(l)
    }
}

impl Default for Lambdas {
    fn default() -> Self {
        DEFAULT_LAMBDAS
    }
}

/// Interpolated unigram / left-bigram / right-bigram model over a capped
/// vocabulary for filling a single masked word.
///
/// Candidate labels are the vocabulary words. Context words outside the
/// vocabulary share one out-of-vocabulary bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramInfiller {
    vocab: LabelVocabulary,
    unigram: Vec<u64>,
    /// `left[ctx][w]`: count of `ctx` immediately before `w`.
    left: Vec<BTreeMap<u32, u64>>,
    /// `right[ctx][w]`: count of `ctx` immediately after `w`.
    right: Vec<BTreeMap<u32, u64>>,
    lambdas: Lambdas,
    k: f64,
}

impl NGramInfiller {
    /// Fits on training sentences. The vocabulary is the `vocab_cap` most
    /// frequent words, ties broken lexicographically.
    pub fn fit<'a, I>(sentences: I, lambdas: Lambdas, k: f64, vocab_cap: usize) -> Result<Self, ScoreFileError>
    where
        I: IntoIterator<Item = &'a TaggedSentence> + Clone,
    {
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for word in sentences.clone().into_iter().flat_map(|s| s.words()) {
            *freq.entry(word).or_default() += 1;
        }
        let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(vocab_cap.max(1));
        let vocab = LabelVocabulary::new(ranked.iter().map(|(w, _)| w.to_string()).collect())?;

        let v = vocab.len();
        let oov = v as u32;
        let mut unigram = vec![0u64; v];
        let mut left = vec![BTreeMap::new(); v + 1];
        let mut right = vec![BTreeMap::new(); v + 1];
        for sentence in sentences {
            let ids: Vec<u32> = sentence
                .words()
                .map(|w| vocab.index_of(w).map_or(oov, |i| i as u32))
                .collect();
            for (i, &w) in ids.iter().enumerate() {
                if w == oov {
                    continue;
                }
                unigram[w as usize] += 1;
                if i > 0 {
                    *left[ids[i - 1] as usize].entry(w).or_insert(0) += 1;
                }
                if let Some(&next) = ids.get(i + 1) {
                    *right[next as usize].entry(w).or_insert(0) += 1;
                }
            }
        }
        Ok(Self {
            vocab,
            unigram,
            left,
            right,
            lambdas,
            k: k.max(0.0),
        })
    }

    pub fn vocab(&self) -> &LabelVocabulary {
        &self.vocab
    }

    pub fn lambdas(&self) -> Lambdas {
        self.lambdas
    }

    fn context_id(&self, word: &str) -> usize {
        self.vocab.index_of(word).unwrap_or(self.vocab.len())
    }

    fn smoothed(&self, counts: impl Iterator<Item = (usize, u64)>) -> Option<Vec<f64>> {
        let v = self.vocab.len();
        let mut row = vec![self.k; v];
        let mut total = 0u64;
        for (w, c) in counts {
            row[w] += c as f64;
            total += c;
        }
        let denom = total as f64 + self.k * v as f64;
        if denom <= 0.0 {
            return None;
        }
        row.iter_mut().for_each(|r| *r /= denom);
        Some(row)
    }

    fn unigram_row(&self) -> Vec<f64> {
        self.smoothed(self.unigram.iter().copied().enumerate())
            .unwrap_or_else(|| vec![1.0 / self.vocab.len() as f64; self.vocab.len()])
    }

    fn bigram_row(&self, table: &[BTreeMap<u32, u64>], context: &str) -> Option<Vec<f64>> {
        let counts = &table[self.context_id(context)];
        self.smoothed(counts.iter().map(|(&w, &c)| (w as usize, c)))
    }

    /// Scores every vocabulary word for a mask between `left` and `right`.
    ///
    /// A missing context word gives its weight to the remaining terms in
    /// proportion to theirs. A context seen too rarely to define a
    /// distribution (no counts and `k = 0`) falls back to the unigram row.
    pub fn score_mask(&self, left: Option<&str>, right: Option<&str>) -> Vec<f64> {
        let unigram = self.unigram_row();
        let mut terms: Vec<(f64, Vec<f64>)> = vec![(self.lambdas.unigram, unigram.clone())];
        if let Some(ctx) = left {
            let row = self.bigram_row(&self.left, ctx).unwrap_or_else(|| unigram.clone());
            terms.push((self.lambdas.left, row));
        }
        if let Some(ctx) = right {
            let row = self.bigram_row(&self.right, ctx).unwrap_or_else(|| unigram.clone());
            terms.push((self.lambdas.right, row));
        }
        let weight: f64 = terms.iter().map(|(w, _)| w).sum();
        if weight <= 0.0 {
            return unigram;
        }
        let mut out = vec![0.0; self.vocab.len()];
        for (w, row) in &terms {
            for (o, r) in out.iter_mut().zip(row) {
                *o += w / weight * r;
            }
        }
        out
    }
}
