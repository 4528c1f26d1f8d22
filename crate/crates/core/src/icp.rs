//! The conformal core.
//!
//! Nonconformity of label `s` for a probability row `ŷ` is `1 − ŷ[s]`. A
//! calibration set fixes a sorted multiset of such scores, and the p-value of
//! a candidate score `α*` is
//!
//! ```text
//! p = (#{ j : α_j ≥ α* } + 1) / (n + 1)
//! ```
//!
//! A label enters the prediction set at significance `ε` iff `p > ε`.
//! P-values are kept as integer pairs so that equality checks are exact; they
//! become floating point only when compared against `ε` or reported.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum IcpError {
    #[error("label index {index} out of range for {n_labels} labels")]
    LabelOutOfRange { index: usize, n_labels: usize },

    #[error("calibration row {row} has no true label")]
    MissingTrueLabel { row: usize },

    #[error("nonconformity score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),

    #[error("significance level {0} outside [0, 1)")]
    InvalidEpsilon(f64),
}

/// `1 − row[label]`.
pub fn nonconformity(row: &[f64], label: usize) -> Result<f64, IcpError> {
    row.get(label)
        .map(|p| 1.0 - p)
        .ok_or(IcpError::LabelOutOfRange {
            index: label,
            n_labels: row.len(),
        })
}

/// Sorted calibration nonconformity scores.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CalibrationModel {
    alphas: Vec<f64>,
}

impl CalibrationModel {
    /// Builds a model from raw scores in any order.
    pub fn from_scores(mut alphas: Vec<f64>) -> Result<Self, IcpError> {
        if let Some(&bad) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(IcpError::ScoreOutOfRange(bad));
        }
        alphas.sort_by(f64::total_cmp);
        Ok(Self { alphas })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn n(&self) -> usize {
        self.alphas.len()
    }

    /// Number of calibration scores `≥ alpha_star`.
    pub fn count_at_least(&self, alpha_star: f64) -> usize {
        self.alphas.len() - self.alphas.partition_point(|&a| a < alpha_star)
    }

    /// Text form: one score per line in ascending order, shortest round-trip
    /// decimal representation.
    pub fn to_text(&self) -> String {
        self.alphas.iter().map(|a| format!("{a}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let alphas = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("line {}: {e}", i + 1))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_scores(alphas).map_err(|e| e.to_string())
    }
}

/// Calibrates from `(row, true_label)` pairs. Every row must carry a label.
pub fn calibrate<'a, I>(rows: I) -> Result<CalibrationModel, IcpError>
where
    I: IntoIterator<Item = (&'a [f64], Option<usize>)>,
{
    let mut alphas = Vec::new();
    for (i, (row, label)) in rows.into_iter().enumerate() {
        let label = label.ok_or(IcpError::MissingTrueLabel { row: i })?;
        alphas.push(nonconformity(row, label)?.clamp(0.0, 1.0));
    }
    CalibrationModel::from_scores(alphas)
}

/// A conformal p-value `numerator / denominator`, with
/// `1 ≤ numerator ≤ denominator`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PValue {
    pub numerator: u64,
    pub denominator: u64,
}

impl PValue {
    pub fn value(self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }

    /// Strict membership test `p > ε`.
    pub fn exceeds(self, epsilon: f64) -> bool {
        self.value() > epsilon
    }
}

impl PartialOrd for PValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PValue {
    fn cmp(&self, other: &Self) -> Ordering {
        let lhs = u128::from(self.numerator) * u128::from(other.denominator);
        let rhs = u128::from(other.numerator) * u128::from(self.denominator);
        lhs.cmp(&rhs)
    }
}

impl fmt::Display for PValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

/// The inductive p-value of a candidate nonconformity score.
pub fn p_value(cal: &CalibrationModel, alpha_star: f64) -> PValue {
    PValue {
        numerator: cal.count_at_least(alpha_star) as u64 + 1,
        denominator: cal.n() as u64 + 1,
    }
}

/// Per-label p-values sharing one denominator `n + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PValueVector {
    numerators: Vec<u32>,
    denominator: u64,
}

impl PValueVector {
    pub fn from_numerators(numerators: Vec<u32>, denominator: u64) -> Self {
        debug_assert!(numerators.iter().all(|&c| c >= 1 && u64::from(c) <= denominator));
        Self {
            numerators,
            denominator,
        }
    }

    pub fn len(&self) -> usize {
        self.numerators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.numerators.is_empty()
    }

    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    pub fn numerators(&self) -> &[u32] {
        &self.numerators
    }

    pub fn get(&self, label: usize) -> PValue {
        PValue {
            numerator: u64::from(self.numerators[label]),
            denominator: self.denominator,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = PValue> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.iter().map(PValue::value).collect()
    }

    /// Largest numerator across labels.
    pub fn max_numerator(&self) -> u32 {
        self.numerators.iter().copied().max().unwrap_or(0)
    }

    /// Number of labels with `p > ε`.
    pub fn count_exceeding(&self, epsilon: f64) -> usize {
        self.iter().filter(|p| p.exceeds(epsilon)).count()
    }
}

/// p-values for every label of `row`; `O(|labels| · log n)`.
pub fn p_vector(cal: &CalibrationModel, row: &[f64]) -> PValueVector {
    let numerators = row
        .iter()
        .map(|&y| (cal.count_at_least(1.0 - y) + 1) as u32)
        .collect();
    PValueVector {
        numerators,
        denominator: cal.n() as u64 + 1,
    }
}

/// Labels whose p-value exceeds `epsilon`, in ascending index order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub epsilon: f64,
    pub members: Vec<usize>,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, label: usize) -> bool {
        self.members.binary_search(&label).is_ok()
    }
}

pub fn check_epsilon(epsilon: f64) -> Result<(), IcpError> {
    if (0.0..1.0).contains(&epsilon) {
        Ok(())
    } else {
        Err(IcpError::InvalidEpsilon(epsilon))
    }
}

/// `{ s : p_s > ε }`. May be empty.
pub fn prediction_set(pv: &PValueVector, epsilon: f64) -> Result<PredictionSet, IcpError> {
    check_epsilon(epsilon)?;
    let members = pv
        .iter()
        .enumerate()
        .filter(|(_, p)| p.exceeds(epsilon))
        .map(|(i, _)| i)
        .collect();
    Ok(PredictionSet { epsilon, members })
}

/// Outcome of the transductive procedure: one p-value per candidate label and
/// the resulting set (indices into the candidate list).
#[derive(Debug, Clone, PartialEq)]
pub struct TransductiveOutcome {
    pub p_values: Vec<PValue>,
    pub set: PredictionSet,
}

/// Transductive conformal prediction, literally: for each candidate label the
/// test object is appended to the bag with that label, every element is
/// scored against the bag without it, and
/// `p = #{ i : α_i ≥ α_{n+1} } / (n + 1)`.
///
/// `measure(rest, z)` must be a pure function of the bag without `z` and `z`
/// itself. The cost is quadratic in the bag size per candidate, so this is
/// meant for small instances and as a reference for the inductive path.
pub fn tcp_prediction_set<X, Y, A>(
    bag: &[(X, Y)],
    test: &X,
    candidates: &[Y],
    measure: A,
    epsilon: f64,
) -> Result<TransductiveOutcome, IcpError>
where
    X: Clone,
    Y: Clone,
    A: Fn(&[(X, Y)], &(X, Y)) -> f64,
{
    check_epsilon(epsilon)?;
    let mut extended: Vec<(X, Y)> = bag.to_vec();
    let mut rest: Vec<(X, Y)> = Vec::with_capacity(bag.len());
    let mut p_values = Vec::with_capacity(candidates.len());
    let mut members = Vec::new();

    for (c, label) in candidates.iter().enumerate() {
        extended.truncate(bag.len());
        extended.push((test.clone(), label.clone()));
        let alphas: Vec<f64> = (0..extended.len())
            .map(|i| {
                rest.clear();
                rest.extend(
                    extended
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, z)| z.clone()),
                );
                measure(&rest, &extended[i])
            })
            .collect();
        let test_alpha = alphas[alphas.len() - 1];
        let p = PValue {
            numerator: alphas.iter().filter(|&&a| a >= test_alpha).count() as u64,
            denominator: alphas.len() as u64,
        };
        if p.exceeds(epsilon) {
            members.push(c);
        }
        p_values.push(p);
    }

    Ok(TransductiveOutcome {
        p_values,
        set: PredictionSet { epsilon, members },
    })
}
