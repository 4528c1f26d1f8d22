//! Tagged-corpus ingestion and sampling.
//!
//! The input format is one sentence per line with whitespace-separated
//! `word/TAG` tokens. Tokens are split on their last `/` so that words such as
//! `1/2` survive intact. Tags are normalized on the way in (see
//! [`normalize_tag`]).

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::rng;

/// Suffixes dropped from tags: headline, title and emphasis markers.
const STRIPPED_SUFFIXES: [&str; 3] = ["-HL", "-TL", "-NC"];
/// Prefix dropped from foreign-word tags.
const FOREIGN_PREFIX: &str = "FW-";

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("malformed tag {raw:?}: nothing left after normalization")]
    MalformedTag { raw: String },

    #[error("line {line}, column {column}: token {token:?} has no '/' separator")]
    MissingSeparator {
        line: usize,
        column: usize,
        token: String,
    },

    #[error("line {line}, column {column}: token {token:?} has an empty word")]
    EmptyWord {
        line: usize,
        column: usize,
        token: String,
    },

    #[error("line {line}, column {column}: {source}")]
    BadTag {
        line: usize,
        column: usize,
        #[source]
        source: Box<CorpusError>,
    },

    #[error("invalid split fractions {train}/{cal}/{test}: each must be >= 0 and they must sum to 1")]
    InvalidFractions { train: f64, cal: f64, test: f64 },

    #[error("degenerate split of {n} sentences: sizes {train}/{cal}/{test}")]
    DegenerateSplit {
        n: usize,
        train: usize,
        cal: usize,
        test: usize,
    },

    #[error("sentence index {index} out of range for corpus of {len} sentences")]
    SentenceOutOfRange { index: usize, len: usize },

    #[error("malformed split file: {0}")]
    MalformedSplit(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedToken {
    pub word: String,
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    pub tokens: Vec<TaggedToken>,
}

impl TaggedSentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.word.as_str())
    }
}

/// Sentences plus the induced label set and vocabulary, both ordered by first
/// appearance.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TaggedCorpus {
    pub sentences: Vec<TaggedSentence>,
    pub label_set: Vec<String>,
    pub vocab: Vec<String>,
    label_index: HashMap<String, usize>,
}

impl TaggedCorpus {
    /// Builds a corpus from already-normalized sentences.
    pub fn from_sentences(sentences: Vec<TaggedSentence>) -> Self {
        let mut label_set = Vec::new();
        let mut label_index = HashMap::new();
        let mut vocab = Vec::new();
        let mut seen_words = std::collections::HashSet::new();
        for token in sentences.iter().flat_map(|s| s.tokens.iter()) {
            if !label_index.contains_key(&token.tag) {
                label_index.insert(token.tag.clone(), label_set.len());
                label_set.push(token.tag.clone());
            }
            if seen_words.insert(token.word.as_str()) {
                vocab.push(token.word.clone());
            }
        }
        Self {
            sentences,
            label_set,
            vocab,
            label_index,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn n_tokens(&self) -> usize {
        self.sentences.iter().map(TaggedSentence::len).sum()
    }

    pub fn tag_index(&self, tag: &str) -> Option<usize> {
        self.label_index.get(tag).copied()
    }

    /// Writes the corpus back out in the ingestion format.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for sentence in &self.sentences {
            for (i, token) in sentence.tokens.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{}/{}", token.word, token.tag);
            }
            out.push('\n');
        }
        out
    }
}

/// Strips headline/title/emphasis suffixes and the foreign-word prefix.
///
/// Each `+`-joined component of a combined tag is normalized on its own and
/// the combination is kept as a single label. Stripping repeats until nothing
/// changes, so stacked markers such as `NN-TL-HL` reduce fully. Marker
/// matching ignores ASCII case (lowercase tag sets use `-hl`, `fw-`).
pub fn normalize_tag(raw: &str) -> Result<String, CorpusError> {
    let mut parts = Vec::new();
    for component in raw.split('+') {
        let stripped = strip_component(component);
        if stripped.is_empty() {
            return Err(CorpusError::MalformedTag {
                raw: raw.to_string(),
            });
        }
        parts.push(stripped);
    }
    Ok(parts.join("+"))
}

fn strip_component(mut tag: &str) -> &str {
    loop {
        let before = tag.len();
        for suffix in STRIPPED_SUFFIXES {
            if tag.len() >= suffix.len()
                && tag.is_char_boundary(tag.len() - suffix.len())
                && tag[tag.len() - suffix.len()..].eq_ignore_ascii_case(suffix)
            {
                tag = &tag[..tag.len() - suffix.len()];
            }
        }
        if tag.len() >= FOREIGN_PREFIX.len()
            && tag.is_char_boundary(FOREIGN_PREFIX.len())
            && tag[..FOREIGN_PREFIX.len()].eq_ignore_ascii_case(FOREIGN_PREFIX)
        {
            tag = &tag[FOREIGN_PREFIX.len()..];
        }
        if tag.len() == before {
            return tag;
        }
    }
}

/// Parses a tagged corpus. Blank lines are skipped; columns are 1-based
/// character offsets of the offending token.
pub fn parse_tagged_corpus(text: &str) -> Result<TaggedCorpus, CorpusError> {
    let mut sentences = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line_no = line_no + 1;
        let mut tokens = Vec::new();
        for (byte_offset, raw) in split_whitespace_indices(line) {
            let column = line[..byte_offset].chars().count() + 1;
            let Some(slash) = raw.rfind('/') else {
                return Err(CorpusError::MissingSeparator {
                    line: line_no,
                    column,
                    token: raw.to_string(),
                });
            };
            let (word, raw_tag) = (&raw[..slash], &raw[slash + 1..]);
            if word.is_empty() {
                return Err(CorpusError::EmptyWord {
                    line: line_no,
                    column,
                    token: raw.to_string(),
                });
            }
            let tag = normalize_tag(raw_tag).map_err(|e| CorpusError::BadTag {
                line: line_no,
                column,
                source: Box::new(e),
            })?;
            tokens.push(TaggedToken {
                word: word.to_string(),
                tag,
            });
        }
        if !tokens.is_empty() {
            sentences.push(TaggedSentence { tokens });
        }
    }
    Ok(TaggedCorpus::from_sentences(sentences))
}

fn split_whitespace_indices(line: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut rest = line;
    let mut offset = 0;
    std::iter::from_fn(move || {
        let start = rest.find(|c: char| !c.is_whitespace())?;
        let tail = &rest[start..];
        let end = tail.find(char::is_whitespace).unwrap_or(tail.len());
        let token = &tail[..end];
        let at = offset + start;
        offset += start + end;
        rest = &tail[end..];
        Some((at, token))
    })
}

/// Train/calibration/test proportions plus the permutation seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub cal_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_frac: f64, cal_frac: f64, test_frac: f64, seed: u64) -> Result<Self, CorpusError> {
        let spec = Self {
            train_frac,
            cal_frac,
            test_frac,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let fracs = [self.train_frac, self.cal_frac, self.test_frac];
        let ok = fracs.iter().all(|f| f.is_finite() && *f >= 0.0)
            && (fracs.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(CorpusError::InvalidFractions {
                train: self.train_frac,
                cal: self.cal_frac,
                test: self.test_frac,
            })
        }
    }

    /// Partition sizes for `n` items: floor for train and calibration, the
    /// remainder to test.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // The 1e-9 slack keeps products like 10 * 0.7 from flooring to 6.
        let floor = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
        let train = floor(self.train_frac).min(n);
        let cal = floor(self.cal_frac).min(n - train);
        (train, cal, n - train - cal)
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.8,
            cal_frac: 0.1,
            test_frac: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSplit {
    pub seed: u64,
    pub train: Vec<usize>,
    pub cal: Vec<usize>,
    pub test: Vec<usize>,
}

impl CorpusSplit {
    /// Text form: the seed, then the train, calibration and test index lists,
    /// one space-separated line each.
    pub fn to_text(&self) -> String {
        let line = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        format!(
            "{}\n{}\n{}\n{}\n",
            self.seed,
            line(&self.train),
            line(&self.cal),
            line(&self.test)
        )
    }

    pub fn from_text(text: &str) -> Result<Self, CorpusError> {
        let mut lines = text.lines();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| CorpusError::MalformedSplit(format!("missing {what} line")))
        };
        let seed = next("seed")?
            .trim()
            .parse::<u64>()
            .map_err(|e| CorpusError::MalformedSplit(format!("seed: {e}")))?;
        let mut parse_list = |what: &str| -> Result<Vec<usize>, CorpusError> {
            next(what)?
                .split_whitespace()
                .map(|s| {
                    s.parse::<usize>()
                        .map_err(|e| CorpusError::MalformedSplit(format!("{what} index {s:?}: {e}")))
                })
                .collect()
        };
        let train = parse_list("train")?;
        let cal = parse_list("calibration")?;
        let test = parse_list("test")?;
        Ok(Self {
            seed,
            train,
            cal,
            test,
        })
    }
}

/// Seeded uniform permutation of sentence indices cut into three parts.
pub fn split_corpus(corpus: &TaggedCorpus, spec: &SplitSpec) -> Result<CorpusSplit, CorpusError> {
    split_indices(corpus.len(), spec)
}

/// [`split_corpus`] over `0..n` directly; also used for pools of scored rows.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<CorpusSplit, CorpusError> {
    spec.validate()?;
    let (n_train, n_cal, n_test) = spec.sizes(n);
    if n_train == 0 || n_cal == 0 || n_test == 0 {
        return Err(CorpusError::DegenerateSplit {
            n,
            train: n_train,
            cal: n_cal,
            test: n_test,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(spec.seed));
    let test = order.split_off(n_train + n_cal);
    let cal = order.split_off(n_train);
    Ok(CorpusSplit {
        seed: spec.seed,
        train: order,
        cal,
        test,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedInstance {
    pub sentence_index: usize,
    pub mask_position: usize,
    pub true_word: String,
}

impl MaskedInstance {
    /// Words immediately left and right of the mask, if any.
    pub fn context<'c>(&self, corpus: &'c TaggedCorpus) -> (Option<&'c str>, Option<&'c str>) {
        let tokens = &corpus.sentences[self.sentence_index].tokens;
        let left = self
            .mask_position
            .checked_sub(1)
            .map(|i| tokens[i].word.as_str());
        let right = tokens.get(self.mask_position + 1).map(|t| t.word.as_str());
        (left, right)
    }
}

/// Picks one token position uniformly, reproducibly per `(sentence, seed)`.
/// Punctuation tokens are eligible like any other.
pub fn mask_one_word(
    corpus: &TaggedCorpus,
    sentence_index: usize,
    seed: u64,
) -> Result<MaskedInstance, CorpusError> {
    let sentence = corpus
        .sentences
        .get(sentence_index)
        .ok_or(CorpusError::SentenceOutOfRange {
            index: sentence_index,
            len: corpus.len(),
        })?;
    let mut rng = rng::substream(seed, sentence_index as u64);
    let mask_position = rng.random_range(0..sentence.len());
    Ok(MaskedInstance {
        sentence_index,
        mask_position,
        true_word: sentence.tokens[mask_position].word.clone(),
    })
}
