//! Synthetic exchangeable data for checking coverage empirically.
//!
//! Each example draws a class uniformly and a score row
//! `softmax(signal · onehot(class) + N(0, noise²))`. Scores are continuous, so
//! calibration ties have probability zero. The generator stream is consumed
//! as `n_train` examples (unused by the fixed scorer), then `n_cal`, then
//! `n_test`, so the three parts are consecutive pieces of one i.i.d. sequence.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::icp::{calibrate, p_vector, IcpError};
use crate::metrics::{forced_prediction, MetricsAccumulator, MetricsError, MetricsReport};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticScorer {
    /// Rows lean toward the true class.
    Informative,
    /// Rows are independent of the class.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub signal: f64,
    pub noise_scale: f64,
    pub n_train: usize,
    pub n_cal: usize,
    pub n_test: usize,
    pub seed: u64,
    pub scorer: SyntheticScorer,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_classes: 10,
            signal: 2.0,
            noise_scale: 1.0,
            n_train: 1000,
            n_cal: 1000,
            n_test: 5000,
            seed: 0,
            scorer: SyntheticScorer::Informative,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_classes == 0 || self.n_train == 0 || self.n_cal == 0 || self.n_test == 0 {
            return Err("class and example counts must be >= 1".into());
        }
        if !(self.noise_scale.is_finite() && self.noise_scale > 0.0) || !self.signal.is_finite() {
            return Err("noise scale must be positive and signal finite".into());
        }
        Ok(())
    }
}

/// Draws `n` `(row, class)` examples from the stream.
fn draw<R: Rng>(spec: &SyntheticSpec, rng: &mut R, n: usize) -> Vec<(Vec<f64>, usize)> {
    let noise = Normal::new(0.0, spec.noise_scale).expect("validated scale");
    (0..n)
        .map(|_| {
            let class = rng.random_range(0..spec.n_classes);
            let logits: Vec<f64> = (0..spec.n_classes)
                .map(|c| {
                    let bump = if spec.scorer == SyntheticScorer::Informative && c == class {
                        spec.signal
                    } else {
                        0.0
                    };
                    bump + noise.sample(rng)
                })
                .collect();
            (softmax(&logits), class)
        })
        .collect()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticReport {
    pub seed: u64,
    pub n_test: usize,
    pub metrics: MetricsReport,
}

impl SyntheticReport {
    /// Binomial standard error of the coverage at the `i`-th level.
    pub fn coverage_std_error(&self, i: usize) -> f64 {
        let c = self.metrics.per_epsilon[i].coverage;
        (c * (1.0 - c) / self.n_test as f64).sqrt()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SyntheticError {
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Icp(#[from] IcpError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// One synthetic run: generate, calibrate, evaluate at each `ε`.
pub fn run_synthetic_validity(spec: &SyntheticSpec, epsilons: &[f64]) -> Result<SyntheticReport, SyntheticError> {
    spec.validate().map_err(SyntheticError::Spec)?;
    let mut rng = rng::stream(spec.seed);
    let _train = draw(spec, &mut rng, spec.n_train);
    let cal_rows = draw(spec, &mut rng, spec.n_cal);
    let test_rows = draw(spec, &mut rng, spec.n_test);

    let cal = calibrate(cal_rows.iter().map(|(row, y)| (row.as_slice(), Some(*y))))?;
    let mut acc = MetricsAccumulator::new(epsilons)?;
    for (row, y) in &test_rows {
        acc.push(&p_vector(&cal, row), *y, forced_prediction(row))?;
    }
    Ok(SyntheticReport {
        seed: spec.seed,
        n_test: spec.n_test,
        metrics: acc.report()?,
    })
}

/// Runs `seeds` repetitions with seeds `spec.seed, spec.seed + 1, …` and
/// returns each report plus their mean.
pub fn run_synthetic_study(
    spec: &SyntheticSpec,
    epsilons: &[f64],
    seeds: usize,
) -> Result<(Vec<SyntheticReport>, MetricsReport), SyntheticError> {
    use rayon::prelude::*;
    let reports = (0..seeds as u64)
        .into_par_iter()
        .map(|s| {
            let spec = SyntheticSpec {
                seed: spec.seed.wrapping_add(s),
                ..*spec
            };
            run_synthetic_validity(&spec, epsilons)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let metrics: Vec<MetricsReport> = reports.iter().map(|r| r.metrics.clone()).collect();
    let mean = MetricsReport::mean(&metrics).ok_or(SyntheticError::Spec("no seeds".into()))?;
    Ok((reports, mean))
}
