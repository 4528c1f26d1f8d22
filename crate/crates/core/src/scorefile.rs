//! The `CPSF` score-matrix format.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic      4 bytes   "CPSF"
//! version    u32       1
//! n_labels   u32
//! n_rows     u64
//! rows       n_rows × { example_id u64, true_label u32, scores n_labels × f32 }
//! ```
//!
//! `true_label` is `0xFFFF_FFFF` when the row has no known label. The label
//! names live in a UTF-8 sidecar `<path>.vocab`, one label per line, where the
//! 0-based line number is the label index.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"CPSF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;
/// Sentinel stored for rows without a true label.
pub const NO_LABEL: u32 = u32::MAX;
/// Allowed deviation of a row's score sum from 1.
pub const SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ScoreFileError {
    #[error("bad magic bytes {0:?}, expected \"CPSF\"")]
    BadMagic([u8; 4]),

    #[error("unsupported version {0}, expected {VERSION}")]
    UnsupportedVersion(u32),

    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("{extra} trailing bytes after the last row")]
    TrailingBytes { extra: u64 },

    #[error("row {row}: {reason}")]
    InvalidRow { row: usize, reason: String },

    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("vocabulary has {vocab} labels but the score file declares {file}")]
    VocabularyMismatch { vocab: usize, file: usize },

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Ordered, duplicate-free label names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocabulary {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelVocabulary {
    pub fn new(labels: Vec<String>) -> Result<Self, ScoreFileError> {
        if labels.is_empty() {
            return Err(ScoreFileError::InvalidVocabulary("no labels".into()));
        }
        if labels.len() > NO_LABEL as usize {
            return Err(ScoreFileError::InvalidVocabulary(format!(
                "{} labels exceed the u32 index range",
                labels.len()
            )));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if label.contains(['\n', '\r']) {
                return Err(ScoreFileError::InvalidVocabulary(format!(
                    "label {i} contains a line break"
                )));
            }
            if index.insert(label.clone(), i).is_some() {
                return Err(ScoreFileError::InvalidVocabulary(format!(
                    "duplicate label {label:?}"
                )));
            }
        }
        Ok(Self { labels, index })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    fn to_text(&self) -> String {
        let mut out = String::new();
        for label in &self.labels {
            out.push_str(label);
            out.push('\n');
        }
        out
    }

    fn from_text(text: &str) -> Result<Self, ScoreFileError> {
        Self::new(text.lines().map(str::to_string).collect())
    }
}

/// One scored example: a probability row and, optionally, the true label.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredExample {
    pub example_id: u64,
    pub true_label: Option<u32>,
    pub scores: Vec<f32>,
}

impl ScoredExample {
    /// Checks the row against a vocabulary of `n_labels` entries.
    pub fn validate(&self, n_labels: usize) -> Result<(), String> {
        if self.scores.len() != n_labels {
            return Err(format!(
                "{} scores for {} labels",
                self.scores.len(),
                n_labels
            ));
        }
        if let Some(label) = self.true_label {
            if label == NO_LABEL || label as usize >= n_labels {
                return Err(format!("true label index {label} out of range"));
            }
        }
        let mut sum = 0.0f64;
        for (i, &s) in self.scores.iter().enumerate() {
            if !(0.0..=1.0).contains(&s) {
                return Err(format!("score {s} at label {i} outside [0, 1]"));
            }
            sum += f64::from(s);
        }
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(format!("scores sum to {sum}, not 1 within {SUM_TOLERANCE}"));
        }
        Ok(())
    }

    /// The scores widened to `f64`.
    pub fn row(&self) -> Vec<f64> {
        self.scores.iter().map(|&s| f64::from(s)).collect()
    }
}

/// Path of the vocabulary sidecar for a score file.
pub fn vocab_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".vocab");
    PathBuf::from(os)
}

fn row_len(n_labels: usize) -> usize {
    8 + 4 + 4 * n_labels
}

/// Encodes validated rows into the binary layout.
pub fn encode(vocab: &LabelVocabulary, rows: &[ScoredExample]) -> Result<Vec<u8>, ScoreFileError> {
    let n_labels = vocab.len();
    let mut buf = Vec::with_capacity(HEADER_LEN + rows.len() * row_len(n_labels));
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(n_labels as u32).to_le_bytes());
    buf.extend_from_slice(&(rows.len() as u64).to_le_bytes());
    for (i, row) in rows.iter().enumerate() {
        row.validate(n_labels)
            .map_err(|reason| ScoreFileError::InvalidRow { row: i, reason })?;
        buf.extend_from_slice(&row.example_id.to_le_bytes());
        buf.extend_from_slice(&row.true_label.unwrap_or(NO_LABEL).to_le_bytes());
        for s in &row.scores {
            buf.extend_from_slice(&s.to_le_bytes());
        }
    }
    Ok(buf)
}

/// Decodes and validates a binary score matrix, returning `(n_labels, rows)`.
///
/// The declared row count is checked against the actual byte length before
/// anything is allocated for the rows.
pub fn decode(bytes: &[u8]) -> Result<(usize, Vec<ScoredExample>), ScoreFileError> {
    if bytes.len() < HEADER_LEN {
        return Err(ScoreFileError::Truncated {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(ScoreFileError::BadMagic(magic));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(ScoreFileError::UnsupportedVersion(version));
    }
    let n_labels = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let n_rows = u64::from_le_bytes(bytes[12..20].try_into().unwrap());

    let actual = bytes.len() as u64;
    let expected = (row_len(n_labels) as u64)
        .checked_mul(n_rows)
        .and_then(|body| body.checked_add(HEADER_LEN as u64))
        .unwrap_or(u64::MAX);
    if actual < expected {
        return Err(ScoreFileError::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(ScoreFileError::TrailingBytes {
            extra: actual - expected,
        });
    }

    let mut rows = Vec::with_capacity(n_rows as usize);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(row_len(n_labels)).enumerate() {
        let example_id = u64::from_le_bytes(chunk[0..8].try_into().unwrap());
        let raw_label = u32::from_le_bytes(chunk[8..12].try_into().unwrap());
        let scores = chunk[12..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let row = ScoredExample {
            example_id,
            true_label: (raw_label != NO_LABEL).then_some(raw_label),
            scores,
        };
        if raw_label != NO_LABEL && raw_label as usize >= n_labels {
            return Err(ScoreFileError::InvalidRow {
                row: i,
                reason: format!("true label index {raw_label} out of range"),
            });
        }
        row.validate(n_labels)
            .map_err(|reason| ScoreFileError::InvalidRow { row: i, reason })?;
        rows.push(row);
    }
    Ok((n_labels, rows))
}

/// Writes `path` and its `.vocab` sidecar. Both are written to temporary
/// siblings first and renamed into place.
pub fn write_score_file(
    path: &Path,
    vocab: &LabelVocabulary,
    rows: &[ScoredExample],
) -> Result<(), ScoreFileError> {
    let bytes = encode(vocab, rows)?;
    write_atomically(&vocab_path(path), vocab.to_text().as_bytes())?;
    write_atomically(path, &bytes)?;
    Ok(())
}

pub fn read_score_file(path: &Path) -> Result<(LabelVocabulary, Vec<ScoredExample>), ScoreFileError> {
    let bytes = fs::read(path)?;
    let (n_labels, rows) = decode(&bytes)?;
    let vocab = LabelVocabulary::from_text(&fs::read_to_string(vocab_path(path))?)?;
    if vocab.len() != n_labels {
        return Err(ScoreFileError::VocabularyMismatch {
            vocab: vocab.len(),
            file: n_labels,
        });
    }
    Ok((vocab, rows))
}

pub(crate) fn write_atomically(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
