//! Evaluation criteria for forced predictions and conformal prediction sets.
//!
//! All p-value averages are accumulated as exact integer sums over the shared
//! `n + 1` denominator, so results do not depend on summation order.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::icp::{check_epsilon, IcpError, PValue, PValueVector, PredictionSet};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("no rows to evaluate")]
    Empty,

    #[error("prediction sets mix significance levels {0} and {1}")]
    MixedEpsilon(f64, f64),

    #[error("rows have different p-value denominators")]
    MixedDenominators,

    #[error("true label {label} out of range for {n_labels} labels")]
    LabelOutOfRange { label: usize, n_labels: usize },

    #[error(transparent)]
    Icp(#[from] IcpError),
}

fn same_len(left: usize, right: usize) -> Result<(), MetricsError> {
    if left != right {
        return Err(MetricsError::LengthMismatch { left, right });
    }
    if left == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Argmax of a score row; the lowest index wins ties.
pub fn forced_prediction(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of forced predictions equal to the truth.
pub fn classification_accuracy<T: PartialEq>(preds: &[T], truths: &[T]) -> Result<f64, MetricsError> {
    same_len(preds.len(), truths.len())?;
    let hits = preds.iter().zip(truths).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / preds.len() as f64)
}

fn common_denominator(p_matrix: &[PValueVector]) -> Result<u64, MetricsError> {
    let first = p_matrix.first().ok_or(MetricsError::Empty)?.denominator();
    if p_matrix.iter().any(|pv| pv.denominator() != first) {
        return Err(MetricsError::MixedDenominators);
    }
    Ok(first)
}

fn check_truths(p_matrix: &[PValueVector], truths: &[usize]) -> Result<u64, MetricsError> {
    same_len(p_matrix.len(), truths.len())?;
    for (pv, &t) in p_matrix.iter().zip(truths) {
        if t >= pv.len() {
            return Err(MetricsError::LabelOutOfRange {
                label: t,
                n_labels: pv.len(),
            });
        }
    }
    common_denominator(p_matrix)
}

/// Returns `(cred_paper, cred_conventional)`: the mean of `1 − max p` (the
/// smallest confidence at which the set is non-empty) and the mean of `max p`.
pub fn credibility(p_matrix: &[PValueVector]) -> Result<(f64, f64), MetricsError> {
    let denom = common_denominator(p_matrix)?;
    let total: u128 = p_matrix.iter().map(|pv| u128::from(pv.max_numerator())).sum();
    let conventional = total as f64 / (p_matrix.len() as f64 * denom as f64);
    let inverted_total = u128::from(denom) * p_matrix.len() as u128 - total;
    let inverted = inverted_total as f64 / (p_matrix.len() as f64 * denom as f64);
    Ok((inverted, conventional))
}

/// Mean true-label p-value.
pub fn observed_perceptiveness(p_matrix: &[PValueVector], truths: &[usize]) -> Result<f64, MetricsError> {
    let denom = check_truths(p_matrix, truths)?;
    let total: u128 = p_matrix
        .iter()
        .zip(truths)
        .map(|(pv, &t)| u128::from(pv.numerators()[t]))
        .sum();
    Ok(total as f64 / (p_matrix.len() as f64 * denom as f64))
}

/// Mean over rows of the summed p-values of all incorrect labels.
pub fn observed_fuzziness(p_matrix: &[PValueVector], truths: &[usize]) -> Result<f64, MetricsError> {
    let denom = check_truths(p_matrix, truths)?;
    let total: u128 = p_matrix
        .iter()
        .zip(truths)
        .map(|(pv, &t)| {
            let all: u128 = pv.numerators().iter().map(|&c| u128::from(c)).sum();
            all - u128::from(pv.numerators()[t])
        })
        .sum();
    Ok(total as f64 / (p_matrix.len() as f64 * denom as f64))
}

/// Set-valued criteria at one significance level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonStats {
    pub epsilon: f64,
    pub coverage: f64,
    /// Proportion of indecisive (size > 1) sets.
    pub pis: f64,
    /// Accuracy among singleton sets; `None` when there are none.
    pub acds: Option<f64>,
    /// Mean set size.
    pub n_eps: f64,
}

/// Coverage, PIS, ACDS and mean set size for sets built at a single `ε`.
pub fn per_epsilon_stats(sets: &[PredictionSet], truths: &[usize]) -> Result<EpsilonStats, MetricsError> {
    same_len(sets.len(), truths.len())?;
    let epsilon = sets[0].epsilon;
    if let Some(other) = sets.iter().find(|s| s.epsilon != epsilon) {
        return Err(MetricsError::MixedEpsilon(epsilon, other.epsilon));
    }
    let mut covered = 0usize;
    let mut indecisive = 0usize;
    let mut singletons = 0usize;
    let mut singleton_hits = 0usize;
    let mut total_size = 0usize;
    for (set, &t) in sets.iter().zip(truths) {
        let hit = set.contains(t);
        covered += usize::from(hit);
        indecisive += usize::from(set.len() > 1);
        if set.len() == 1 {
            singletons += 1;
            singleton_hits += usize::from(hit);
        }
        total_size += set.len();
    }
    let n = sets.len() as f64;
    Ok(EpsilonStats {
        epsilon,
        coverage: covered as f64 / n,
        pis: indecisive as f64 / n,
        acds: (singletons > 0).then(|| singleton_hits as f64 / singletons as f64),
        n_eps: total_size as f64 / n,
    })
}

/// The same statistics computed straight from the p-matrix, without
/// materializing sets.
pub fn per_epsilon_stats_from_p(
    p_matrix: &[PValueVector],
    truths: &[usize],
    epsilon: f64,
) -> Result<EpsilonStats, MetricsError> {
    check_epsilon(epsilon)?;
    check_truths(p_matrix, truths)?;
    let mut covered = 0usize;
    let mut indecisive = 0usize;
    let mut singletons = 0usize;
    let mut singleton_hits = 0usize;
    let mut total_size = 0usize;
    for (pv, &t) in p_matrix.iter().zip(truths) {
        let size = pv.count_exceeding(epsilon);
        let hit = pv.get(t).exceeds(epsilon);
        covered += usize::from(hit);
        indecisive += usize::from(size > 1);
        if size == 1 {
            singletons += 1;
            singleton_hits += usize::from(hit);
        }
        total_size += size;
    }
    let n = p_matrix.len() as f64;
    Ok(EpsilonStats {
        epsilon,
        coverage: covered as f64 / n,
        pis: indecisive as f64 / n,
        acds: (singletons > 0).then(|| singleton_hits as f64 / singletons as f64),
        n_eps: total_size as f64 / n,
    })
}

/// Empirical coverage `mean(p_{y_i} > ε)` at each nominal level `1 − ε`.
/// Returns `(nominal, empirical)` pairs in grid order.
pub fn coverage_curve(
    p_matrix: &[PValueVector],
    truths: &[usize],
    epsilon_grid: &[f64],
) -> Result<Vec<(f64, f64)>, MetricsError> {
    check_truths(p_matrix, truths)?;
    let true_p: Vec<_> = p_matrix.iter().zip(truths).map(|(pv, &t)| pv.get(t)).collect();
    epsilon_grid
        .iter()
        .map(|&eps| {
            check_epsilon(eps)?;
            let hits = true_p.iter().filter(|p| p.exceeds(eps)).count();
            Ok((1.0 - eps, hits as f64 / true_p.len() as f64))
        })
        .collect()
}

/// `k` evenly spaced significance levels strictly inside `(0, 1)`:
/// `1/(k+1), …, k/(k+1)`.
pub fn epsilon_grid(k: usize) -> Vec<f64> {
    (1..=k).map(|i| i as f64 / (k + 1) as f64).collect()
}

/// Every criterion for one evaluated test set.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub n_test: usize,
    pub ca: f64,
    pub cred_paper: f64,
    pub cred_conventional: f64,
    pub op: f64,
    pub of: f64,
    pub per_epsilon: Vec<EpsilonStats>,
}

impl MetricsReport {
    pub fn compute(
        p_matrix: &[PValueVector],
        forced: &[usize],
        truths: &[usize],
        epsilons: &[f64],
    ) -> Result<Self, MetricsError> {
        let ca = classification_accuracy(forced, truths)?;
        let (cred_paper, cred_conventional) = credibility(p_matrix)?;
        let op = observed_perceptiveness(p_matrix, truths)?;
        let of = observed_fuzziness(p_matrix, truths)?;
        let per_epsilon = epsilons
            .iter()
            .map(|&e| per_epsilon_stats_from_p(p_matrix, truths, e))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            n_test: truths.len(),
            ca,
            cred_paper,
            cred_conventional,
            op,
            of,
            per_epsilon,
        })
    }

    /// Arithmetic mean of several reports computed at the same levels. ACDS is
    /// averaged over the reports where it is defined.
    pub fn mean(reports: &[MetricsReport]) -> Option<MetricsReport> {
        let first = reports.first()?;
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let per_epsilon = (0..first.per_epsilon.len())
            .map(|i| {
                let at = |r: &MetricsReport| r.per_epsilon[i];
                let avg_e = |f: fn(&EpsilonStats) -> f64| reports.iter().map(|r| f(&at(r))).sum::<f64>() / n;
                let acds: Vec<f64> = reports.iter().filter_map(|r| at(r).acds).collect();
                EpsilonStats {
                    epsilon: first.per_epsilon[i].epsilon,
                    coverage: avg_e(|s| s.coverage),
                    pis: avg_e(|s| s.pis),
                    acds: (!acds.is_empty()).then(|| acds.iter().sum::<f64>() / acds.len() as f64),
                    n_eps: avg_e(|s| s.n_eps),
                }
            })
            .collect();
        Some(MetricsReport {
            n_test: reports.iter().map(|r| r.n_test).sum::<usize>() / reports.len(),
            ca: avg(|r| r.ca),
            cred_paper: avg(|r| r.cred_paper),
            cred_conventional: avg(|r| r.cred_conventional),
            op: avg(|r| r.op),
            of: avg(|r| r.of),
            per_epsilon,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct EpsilonCounts {
    covered: u64,
    indecisive: u64,
    singletons: u64,
    singleton_hits: u64,
    total_size: u64,
    size_histogram: BTreeMap<usize, u64>,
}

/// Streaming form of [`MetricsReport::compute`].
///
/// Rows are pushed one at a time and partial accumulators can be merged in any
/// order; every counter is an integer, so the final report does not depend on
/// how rows were partitioned across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsAccumulator {
    epsilons: Vec<f64>,
    denominator: Option<u64>,
    n: u64,
    forced_hits: u64,
    max_sum: u128,
    true_sum: u128,
    all_sum: u128,
    per_epsilon: Vec<EpsilonCounts>,
    /// Count of rows by true-label numerator, for coverage curves.
    true_numerators: BTreeMap<u32, u64>,
}

impl MetricsAccumulator {
    pub fn new(epsilons: &[f64]) -> Result<Self, MetricsError> {
        for &e in epsilons {
            check_epsilon(e)?;
        }
        Ok(Self {
            epsilons: epsilons.to_vec(),
            denominator: None,
            n: 0,
            forced_hits: 0,
            max_sum: 0,
            true_sum: 0,
            all_sum: 0,
            per_epsilon: vec![EpsilonCounts::default(); epsilons.len()],
            true_numerators: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn check_denominator(&mut self, d: u64) -> Result<(), MetricsError> {
        match self.denominator {
            Some(existing) if existing != d => Err(MetricsError::MixedDenominators),
            _ => {
                self.denominator = Some(d);
                Ok(())
            }
        }
    }

    pub fn push(&mut self, pv: &PValueVector, truth: usize, forced: usize) -> Result<(), MetricsError> {
        if truth >= pv.len() {
            return Err(MetricsError::LabelOutOfRange {
                label: truth,
                n_labels: pv.len(),
            });
        }
        self.check_denominator(pv.denominator())?;
        let true_p = pv.get(truth);
        self.n += 1;
        self.forced_hits += u64::from(forced == truth);
        self.max_sum += u128::from(pv.max_numerator());
        self.true_sum += u128::from(true_p.numerator);
        self.all_sum += pv.numerators().iter().map(|&c| u128::from(c)).sum::<u128>();
        *self.true_numerators.entry(true_p.numerator as u32).or_default() += 1;
        for (&eps, counts) in self.epsilons.iter().zip(&mut self.per_epsilon) {
            let size = pv.count_exceeding(eps);
            let hit = true_p.exceeds(eps);
            counts.covered += u64::from(hit);
            counts.indecisive += u64::from(size > 1);
            if size == 1 {
                counts.singletons += 1;
                counts.singleton_hits += u64::from(hit);
            }
            counts.total_size += size as u64;
            *counts.size_histogram.entry(size).or_default() += 1;
        }
        Ok(())
    }

    pub fn merge(mut self, other: Self) -> Result<Self, MetricsError> {
        if other.n == 0 {
            return Ok(self);
        }
        if self.n == 0 {
            return Ok(other);
        }
        if let Some(d) = other.denominator {
            self.check_denominator(d)?;
        }
        self.n += other.n;
        self.forced_hits += other.forced_hits;
        self.max_sum += other.max_sum;
        self.true_sum += other.true_sum;
        self.all_sum += other.all_sum;
        for (mine, theirs) in self.per_epsilon.iter_mut().zip(other.per_epsilon) {
            mine.covered += theirs.covered;
            mine.indecisive += theirs.indecisive;
            mine.singletons += theirs.singletons;
            mine.singleton_hits += theirs.singleton_hits;
            mine.total_size += theirs.total_size;
            for (size, count) in theirs.size_histogram {
                *mine.size_histogram.entry(size).or_default() += count;
            }
        }
        for (num, count) in other.true_numerators {
            *self.true_numerators.entry(num).or_default() += count;
        }
        Ok(self)
    }

    pub fn report(&self) -> Result<MetricsReport, MetricsError> {
        let denom = self.denominator.ok_or(MetricsError::Empty)?;
        let n = self.n as f64;
        let scale = n * denom as f64;
        let per_epsilon = self
            .epsilons
            .iter()
            .zip(&self.per_epsilon)
            .map(|(&epsilon, c)| EpsilonStats {
                epsilon,
                coverage: c.covered as f64 / n,
                pis: c.indecisive as f64 / n,
                acds: (c.singletons > 0).then(|| c.singleton_hits as f64 / c.singletons as f64),
                n_eps: c.total_size as f64 / n,
            })
            .collect();
        Ok(MetricsReport {
            n_test: self.n as usize,
            ca: self.forced_hits as f64 / n,
            cred_paper: (u128::from(denom) * u128::from(self.n) - self.max_sum) as f64 / scale,
            cred_conventional: self.max_sum as f64 / scale,
            op: self.true_sum as f64 / scale,
            of: (self.all_sum - self.true_sum) as f64 / scale,
            per_epsilon,
        })
    }

    /// `(nominal, empirical)` coverage at each grid level.
    pub fn coverage_curve(&self, grid: &[f64]) -> Result<Vec<(f64, f64)>, MetricsError> {
        let denom = self.denominator.ok_or(MetricsError::Empty)?;
        grid.iter()
            .map(|&eps| {
                check_epsilon(eps)?;
                let hits: u64 = self
                    .true_numerators
                    .iter()
                    .filter(|(&num, _)| PValue { numerator: u64::from(num), denominator: denom }.exceeds(eps))
                    .map(|(_, &c)| c)
                    .sum();
                Ok((1.0 - eps, hits as f64 / self.n as f64))
            })
            .collect()
    }

    /// Set-size counts at the `i`-th configured significance level.
    pub fn set_size_histogram(&self, i: usize) -> &BTreeMap<usize, u64> {
        &self.per_epsilon[i].size_histogram
    }
}

/// An optional proportion that prints as `NA` when absent.
pub struct OrNa(pub Option<f64>);

impl fmt::Display for OrNa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v:.6}"),
            None => f.write_str("NA"),
        }
    }
}

/// Equal-width histogram over `[lo, hi)`; values equal to `hi` land in the
/// last bin, values outside are ignored. Returns `(bin_lo, bin_hi, count)`.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<(f64, f64, usize)> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v < lo || v > hi {
            continue;
        }
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c))
        .collect()
}
