//! The repeated split / calibrate / evaluate protocol.
//!
//! Repetition `r` splits with seed `seed + r`, fits the built-in scorer on the
//! training part (or reuses external rows), calibrates, evaluates the test
//! part and records metrics. Repetitions run in parallel; everything they
//! produce is merged and written in repetition order, so output bytes do not
//! depend on the thread count.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::corpus::{parse_tagged_corpus, split_corpus, TaggedCorpus};
use crate::harness::config::{ExperimentConfig, ScorerKind, Task};
use crate::harness::pipeline::{calibrate_units, evaluate_units, RowProducer};
use crate::metrics::{epsilon_grid, histogram, MetricsReport, OrNa};
use crate::models::{LexicalTagger, NGramInfiller};
use crate::rng;
use crate::scorefile::{read_score_file, ScoredExample};

/// Bins of the full-range nonconformity histogram.
pub const HISTOGRAM_BINS: usize = 50;
/// Upper edge of the zoomed nonconformity histogram.
pub const ZOOM_LIMIT: f64 = 0.0002;

#[derive(Debug, Clone, PartialEq)]
pub struct RepetitionResult {
    pub repetition: usize,
    pub seed: u64,
    pub n_cal: usize,
    pub n_unlabeled: usize,
    pub report: MetricsReport,
    pub curve: Vec<(f64, f64)>,
    pub alpha_histogram: Vec<(f64, f64, usize)>,
    pub alpha_zoom_histogram: Vec<(f64, f64, usize)>,
    /// One `(size, count)` list per configured significance level.
    pub set_sizes: Vec<Vec<(usize, u64)>>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub model: String,
    pub repetitions: Vec<RepetitionResult>,
    pub failures: Vec<(usize, String)>,
    pub summary: MetricsReport,
    pub files: Vec<PathBuf>,
}

enum Data {
    Corpus(TaggedCorpus),
    Rows(Vec<ScoredExample>),
}

/// Runs the configured experiment and writes its CSV files.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let data = match &config.scorer {
        ScorerKind::External(path) => {
            let (_, rows) = read_score_file(path).with_context(|| format!("reading {}", path.display()))?;
            Data::Rows(rows)
        }
        _ => {
            let path = config.corpus.as_ref().context("no corpus configured")?;
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Data::Corpus(parse_tagged_corpus(&text).with_context(|| format!("parsing {}", path.display()))?)
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .context("building thread pool")?;
    let results: Vec<Result<RepetitionResult>> = pool.install(|| {
        (0..config.repetitions)
            .into_par_iter()
            .map(|r| run_repetition(config, &data, r))
            .collect()
    });

    let mut repetitions = Vec::new();
    let mut failures = Vec::new();
    for (r, result) in results.into_iter().enumerate() {
        match result {
            Ok(rep) => repetitions.push(rep),
            Err(e) => {
                eprintln!("repetition {r} (seed {}) failed: {e:#}", config.repetition_seed(r));
                failures.push((r, format!("{e:#}")));
            }
        }
    }
    if repetitions.is_empty() {
        bail!("all {} repetitions failed", config.repetitions);
    }
    let reports: Vec<MetricsReport> = repetitions.iter().map(|r| r.report.clone()).collect();
    let summary = MetricsReport::mean(&reports).expect("non-empty");
    let model = config.scorer.name().to_string();

    let files = write_outputs(&config.output_dir, &model, &repetitions, &summary)?;
    Ok(ExperimentOutcome {
        model,
        repetitions,
        failures,
        summary,
        files,
    })
}

fn run_repetition(config: &ExperimentConfig, data: &Data, r: usize) -> Result<RepetitionResult> {
    let seed = config.repetition_seed(r);
    let epsilons = config.epsilons();
    let k = config.smoothing();

    let run = |producer: &RowProducer<'_>, cal_units: &[usize], test_units: &[usize]| -> Result<_> {
        let (cal, cal_unlabeled) = calibrate_units(producer, cal_units)?;
        let (acc, test_unlabeled) = evaluate_units(producer, test_units, &cal, &epsilons)?;
        Ok((cal, acc, cal_unlabeled + test_unlabeled))
    };

    let (cal, acc, n_unlabeled) = match data {
        Data::Corpus(corpus) => {
            let split = split_corpus(corpus, &config.split_spec(r))?;
            match config.task {
                Task::Pos => {
                    let tagger = LexicalTagger::fit(
                        split.train.iter().map(|&i| &corpus.sentences[i]),
                        corpus.label_set.len(),
                        |t| corpus.tag_index(t),
                        k,
                        config.case_fold,
                    );
                    let producer = RowProducer::Pos { corpus, tagger: &tagger };
                    run(&producer, &split.cal, &split.test)?
                }
                Task::Mlm => {
                    let infiller = NGramInfiller::fit(
                        split.train.iter().map(|&i| &corpus.sentences[i]),
                        config.lambdas,
                        k,
                        config.vocab_cap,
                    )?;
                    let producer = RowProducer::Mlm {
                        corpus,
                        infiller: &infiller,
                        mask_seed: seed,
                    };
                    let cal_units = cap(&split.cal, config.cal_sentence_cap);
                    let test_units = cap(&split.test, config.test_sentence_cap);
                    run(&producer, cal_units, test_units)?
                }
            }
        }
        Data::Rows(rows) => {
            let (cal_units, test_units) = split_rows(rows.len(), config, seed)?;
            let (cal_units, test_units) = match config.task {
                Task::Mlm => (
                    cap(&cal_units, config.cal_sentence_cap).to_vec(),
                    cap(&test_units, config.test_sentence_cap).to_vec(),
                ),
                Task::Pos => (cal_units, test_units),
            };
            run(&RowProducer::External { rows }, &cal_units, &test_units)?
        }
    };

    let report = acc.report()?;
    let curve = acc.coverage_curve(&epsilon_grid(config.grid_points))?;
    let alphas = cal.alphas();
    let zoomed: Vec<f64> = alphas.iter().copied().filter(|&a| a < ZOOM_LIMIT).collect();
    let set_sizes = (0..epsilons.len())
        .map(|i| acc.set_size_histogram(i).iter().map(|(&s, &c)| (s, c)).collect())
        .collect();
    Ok(RepetitionResult {
        repetition: r,
        seed,
        n_cal: cal.n(),
        n_unlabeled,
        report,
        curve,
        alpha_histogram: histogram(alphas, 0.0, 1.0, HISTOGRAM_BINS),
        alpha_zoom_histogram: histogram(&zoomed, 0.0, ZOOM_LIMIT, HISTOGRAM_BINS),
        set_sizes,
    })
}

fn cap(units: &[usize], limit: usize) -> &[usize] {
    &units[..units.len().min(limit)]
}

/// Splits a pool of externally scored rows into calibration and test parts
/// in the ratio `cal_frac : test_frac` (the training part happened upstream).
fn split_rows(n: usize, config: &ExperimentConfig, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let held_out = config.cal_frac + config.test_frac;
    if held_out <= 0.0 {
        bail!("cal_frac + test_frac must be positive for external scores");
    }
    let n_cal = ((n as f64) * config.cal_frac / held_out + 1e-9).floor() as usize;
    if n_cal == 0 || n_cal >= n {
        bail!("degenerate split of {n} scored rows into {n_cal} calibration rows");
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed));
    let test = order.split_off(n_cal);
    Ok((order, test))
}

fn f(v: f64) -> String {
    format!("{v:.6}")
}

fn write_outputs(
    dir: &Path,
    model: &str,
    reps: &[RepetitionResult],
    summary: &MetricsReport,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let mut metrics = String::from(
        "model,split_seed,epsilon,n_cal,n_test,n_unlabeled,ca,cred_paper,cred_conventional,op,of,coverage,pis,acds,n_eps\n",
    );
    let mut metric_rows = |seed: &str, n_cal: String, n_unlabeled: String, rep: &MetricsReport| {
        for e in &rep.per_epsilon {
            let _ = writeln!(
                metrics,
                "{model},{seed},{},{n_cal},{},{n_unlabeled},{},{},{},{},{},{},{},{},{}",
                e.epsilon,
                rep.n_test,
                f(rep.ca),
                f(rep.cred_paper),
                f(rep.cred_conventional),
                f(rep.op),
                f(rep.of),
                f(e.coverage),
                f(e.pis),
                OrNa(e.acds),
                f(e.n_eps),
            );
        }
    };
    for rep in reps {
        metric_rows(&rep.seed.to_string(), rep.n_cal.to_string(), rep.n_unlabeled.to_string(), &rep.report);
    }
    let mean_cal = reps.iter().map(|r| r.n_cal).sum::<usize>() / reps.len();
    let mean_unlabeled = reps.iter().map(|r| r.n_unlabeled).sum::<usize>() / reps.len();
    metric_rows("summary", mean_cal.to_string(), mean_unlabeled.to_string(), summary);

    let mut curve = String::from("model,split_seed,nominal,empirical\n");
    for rep in reps {
        for (nominal, empirical) in &rep.curve {
            let _ = writeln!(curve, "{model},{},{},{}", rep.seed, f(*nominal), f(*empirical));
        }
    }
    if let Some(first) = reps.first() {
        for (i, (nominal, _)) in first.curve.iter().enumerate() {
            let mean = reps.iter().map(|r| r.curve[i].1).sum::<f64>() / reps.len() as f64;
            let _ = writeln!(curve, "{model},summary,{},{}", f(*nominal), f(mean));
        }
    }

    let mut alphas = String::from("model,split_seed,range,bin_lo,bin_hi,count\n");
    for rep in reps {
        for (range, hist) in [("full", &rep.alpha_histogram), ("zoom", &rep.alpha_zoom_histogram)] {
            for (lo, hi, count) in hist {
                let _ = writeln!(alphas, "{model},{},{range},{lo:.8},{hi:.8},{count}", rep.seed);
            }
        }
    }

    let mut sizes = String::from("model,split_seed,epsilon,set_size,count\n");
    for rep in reps {
        for (e, hist) in rep.report.per_epsilon.iter().zip(&rep.set_sizes) {
            for (size, count) in hist {
                let _ = writeln!(sizes, "{model},{},{},{size},{count}", rep.seed, e.epsilon);
            }
        }
    }

    let mut written = Vec::new();
    for (name, body) in [
        ("metrics.csv", metrics),
        ("coverage_curve.csv", curve),
        ("nonconformity_hist.csv", alphas),
        ("set_size_hist.csv", sizes),
    ] {
        let path = dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}
