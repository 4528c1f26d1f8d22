//! Acceptance suite. Each test checks one criterion and prints a single
//! `[PASS]` / `[FAIL]` line; run with `-- --nocapture --test-threads=1` to see
//! them in order.

mod common;

use std::fs;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::Rng;

use cptag::corpus::{parse_tagged_corpus, split_corpus, SplitSpec};
use cptag::harness::config::{ExperimentConfig, ScorerKind, Task};
use cptag::harness::pipeline::{calibrate_units, evaluate_units, RowProducer};
use cptag::harness::synthetic::{run_synthetic_study, SyntheticScorer, SyntheticSpec};
use cptag::harness::run_experiment;
use cptag::icp::{p_value, prediction_set, tcp_prediction_set, CalibrationModel, PValue, PValueVector, PredictionSet};
use cptag::metrics::{
    coverage_curve, credibility, forced_prediction, observed_fuzziness, observed_perceptiveness, per_epsilon_stats,
    per_epsilon_stats_from_p, classification_accuracy, OrNa,
};
use cptag::models::LexicalTagger;
use cptag::scorefile::{self, read_score_file, write_score_file, LabelVocabulary, ScoreFileError, ScoredExample};

type Check = Result<String, String>;

fn report(name: &str, started: Instant, limit: Option<Duration>, result: Check) {
    let elapsed = started.elapsed();
    let result = match (result, limit) {
        (Ok(_), Some(limit)) if elapsed > limit => Err(format!("took {elapsed:.1?}, limit {limit:?}")),
        (r, _) => r,
    };
    match result {
        Ok(detail) => println!("[PASS] {name}: {detail} ({elapsed:.2?})"),
        Err(detail) => {
            println!("[FAIL] {name}: {detail} ({elapsed:.2?})");
            panic!("acceptance criterion failed: {name}: {detail}");
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// P-value oracle equality
// ---------------------------------------------------------------------------

fn naive_p_value(alphas: &[f64], alpha_star: f64) -> (u64, u64) {
    let mut count = 0u64;
    for &a in alphas {
        if a >= alpha_star {
            count += 1;
        }
    }
    (count + 1, alphas.len() as u64 + 1)
}

#[test]
fn p_value_oracle_equality() {
    let started = Instant::now();
    let mut rng = cptag::rng::stream(0xA11CE);
    let mut result = Ok(());
    let mut tied = 0;
    for case in 0..100_000 {
        let n = rng.random_range(0..=120);
        let discrete = rng.random_bool(0.5);
        let draw = |rng: &mut cptag::rng::StreamRng| {
            if discrete {
                rng.random_range(0..=10) as f64 / 10.0
            } else {
                rng.random::<f64>()
            }
        };
        let alphas: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let alpha_star = match rng.random_range(0..4) {
            0 if n > 0 => {
                tied += 1;
                alphas[rng.random_range(0..n)]
            }
            1 => 0.0,
            2 => 1.0,
            _ => draw(&mut rng),
        };
        let model = CalibrationModel::from_scores(alphas.clone()).unwrap();
        let fast = p_value(&model, alpha_star);
        let (num, den) = naive_p_value(&alphas, alpha_star);
        if (fast.numerator, fast.denominator) != (num, den) {
            result = Err(format!("case {case}: fast {fast} vs naive {num}/{den}"));
            break;
        }
    }
    report(
        "p-value oracle equality",
        started,
        Some(Duration::from_secs(30)),
        result.map(|_| format!("100000 cases, {tied} with alpha* drawn from the calibration set")),
    );
}

// ---------------------------------------------------------------------------
// Set nesting
// ---------------------------------------------------------------------------

#[test]
fn prediction_sets_are_nested() {
    let started = Instant::now();
    let mut rng = cptag::rng::stream(0xBEEF);
    let mut result = Ok(());
    for case in 0..10_000 {
        let denom: u64 = rng.random_range(1..=500);
        let len = rng.random_range(1..=40);
        let nums: Vec<u32> = (0..len).map(|_| rng.random_range(1..=denom) as u32).collect();
        let pv = PValueVector::from_numerators(nums, denom);
        let (a, b) = (rng.random::<f64>(), rng.random::<f64>());
        let (e1, e2) = if a <= b { (a, b) } else { (b, a) };
        let wide = prediction_set(&pv, e1).unwrap();
        let narrow = prediction_set(&pv, e2).unwrap();
        if !narrow.members.iter().all(|m| wide.contains(*m)) {
            result = Err(format!("case {case}: {narrow:?} not within {wide:?}"));
            break;
        }
    }
    report("set nesting", started, None, result.map(|_| "10000 random p-vectors".into()));
}

// ---------------------------------------------------------------------------
// Marginal validity and observed perceptiveness on synthetic data
// ---------------------------------------------------------------------------

fn validity_spec(scorer: SyntheticScorer) -> SyntheticSpec {
    SyntheticSpec {
        n_classes: 10,
        signal: 2.0,
        noise_scale: 1.0,
        n_train: 1000,
        n_cal: 1000,
        n_test: 5000,
        seed: 2024,
        scorer,
    }
}

#[test]
fn marginal_validity_on_synthetic_data() {
    let started = Instant::now();
    let epsilons = [0.05, 0.1, 0.25];
    let check = || -> Check {
        let mut detail = Vec::new();
        for scorer in [SyntheticScorer::Informative, SyntheticScorer::Random] {
            let (_, mean) = run_synthetic_study(&validity_spec(scorer), &epsilons, 5).map_err(|e| e.to_string())?;
            for s in &mean.per_epsilon {
                let nominal = 1.0 - s.epsilon;
                ensure((s.coverage - nominal).abs() <= 0.02, || {
                    format!("{scorer:?} eps {}: coverage {:.4} outside {nominal} ± 0.02", s.epsilon, s.coverage)
                })?;
                detail.push(format!("{:?}@{}={:.4}", scorer, s.epsilon, s.coverage));
            }
        }
        Ok(detail.join(" "))
    };
    report("marginal validity", started, Some(Duration::from_secs(120)), check());
}

#[test]
fn observed_perceptiveness_is_one_half() {
    let started = Instant::now();
    let check = || -> Check {
        let (_, mean) = run_synthetic_study(&validity_spec(SyntheticScorer::Informative), &[0.1], 5)
            .map_err(|e| e.to_string())?;
        ensure((mean.op - 0.5).abs() <= 0.03, || format!("OP {:.4}", mean.op))?;
        Ok(format!("OP {:.4}", mean.op))
    };
    report("OP calibration", started, None, check());
}

// ---------------------------------------------------------------------------
// Transductive procedure vs brute force
// ---------------------------------------------------------------------------

const NO_PEER: f64 = 1e6;

/// Distance from `x` to the mean of same-label points in `rest`.
fn centroid_distance(rest: &[(i64, usize)], z: &(i64, usize)) -> f64 {
    let peers: Vec<i64> = rest.iter().filter(|r| r.1 == z.1).map(|r| r.0).collect();
    if peers.is_empty() {
        return NO_PEER;
    }
    let count = peers.len() as i64;
    (z.0 * count - peers.iter().sum::<i64>()).abs() as f64 / count as f64
}

/// Exact rational nonconformity `|x·c − Σ| / c`, or `None` for "no peers"
/// (treated as +∞).
fn exact_alpha(bag: &[(i64, usize)], i: usize) -> Option<(i64, i64)> {
    let (x, y) = bag[i];
    let mut sum = 0;
    let mut count = 0;
    for (j, &(xj, yj)) in bag.iter().enumerate() {
        if j != i && yj == y {
            sum += xj;
            count += 1;
        }
    }
    (count > 0).then(|| ((x * count - sum).abs(), count))
}

fn exact_ge(a: Option<(i64, i64)>, b: Option<(i64, i64)>) -> bool {
    match (a, b) {
        (None, _) => true,
        (Some(_), None) => false,
        (Some((an, ad)), Some((bn, bd))) => an * bd >= bn * ad,
    }
}

#[test]
fn transductive_matches_brute_force() {
    let started = Instant::now();
    let mut rng = cptag::rng::stream(0x7C9);
    let candidates = [0usize, 1, 2];
    let mut result = Ok(());
    let mut included = 0usize;
    'cases: for case in 0..1000 {
        let size = rng.random_range(1..=8);
        let bag: Vec<(i64, usize)> = (0..size)
            .map(|_| (rng.random_range(-10..=10), rng.random_range(0..3)))
            .collect();
        let test_x: i64 = rng.random_range(-10..=10);
        let eps_percent: i64 = rng.random_range(0..100);
        let epsilon = eps_percent as f64 / 100.0;

        let out = tcp_prediction_set(&bag, &test_x, &candidates, centroid_distance, epsilon).unwrap();
        for (c, &label) in candidates.iter().enumerate() {
            let mut full = bag.clone();
            full.push((test_x, label));
            let test_alpha = exact_alpha(&full, full.len() - 1);
            let count = (0..full.len()).filter(|&i| exact_ge(exact_alpha(&full, i), test_alpha)).count() as u64;
            let denom = full.len() as u64;
            // p > ε  ⇔  count · 100 > ε% · (n + 1)
            let member = count as i64 * 100 > eps_percent * denom as i64;
            let got = out.p_values[c];
            if got != (PValue { numerator: count, denominator: denom }) || out.set.contains(c) != member {
                result = Err(format!("case {case}, label {label}: got {got} / {}, expected {count}/{denom} / {member}", out.set.contains(c)));
                break 'cases;
            }
            included += usize::from(member);
        }
    }
    report(
        "TCP oracle",
        started,
        None,
        result.map(|_| format!("1000 bags of size 1..=8, {included} inclusions")),
    );
}

// ---------------------------------------------------------------------------
// Metrics hand-computed examples
// ---------------------------------------------------------------------------

fn pv(nums: &[u32], denom: u64) -> PValueVector {
    PValueVector::from_numerators(nums.to_vec(), denom)
}

#[test]
fn metrics_unit_suite() {
    let started = Instant::now();
    let check = || -> Check {
        let mut n = 0;
        let mut eq = |what: &str, got: f64, want: f64| -> Result<(), String> {
            n += 1;
            ensure((got - want).abs() <= 1e-12, || format!("{what}: got {got}, want {want}"))
        };
        eq("CA", classification_accuracy(&["A", "B"], &["A", "A"]).unwrap(), 0.5)?;
        eq("CA all correct", classification_accuracy(&[3, 1], &[3, 1]).unwrap(), 1.0)?;
        eq("forced argmax tie", forced_prediction(&[0.3, 0.3, 0.1]) as f64, 0.0)?;

        let (inverted, conv) = credibility(&[pv(&[4, 1, 1], 4)]).unwrap();
        eq("cred_paper", inverted, 0.0)?;
        eq("cred_conventional", conv, 1.0)?;
        eq("cred_paper 0.75", credibility(&[pv(&[15, 2], 20)]).unwrap().0, 0.25)?;

        eq("OP single", observed_perceptiveness(&[pv(&[8, 1], 10)], &[0]).unwrap(), 0.8)?;
        eq("OP mean", observed_perceptiveness(&[pv(&[4, 1], 10), pv(&[1, 6], 10)], &[0, 1]).unwrap(), 0.5)?;
        eq("OF 0.15", observed_fuzziness(&[pv(&[16, 2, 1], 20)], &[0]).unwrap(), 0.15)?;
        let mut floor = vec![1u32; 190];
        floor[0] = 5700;
        eq("OF floor", observed_fuzziness(&[pv(&floor, 5700)], &[0]).unwrap(), 189.0 / 5700.0)?;

        let sets = [
            PredictionSet { epsilon: 0.05, members: vec![0] },
            PredictionSet { epsilon: 0.05, members: vec![0, 1] },
        ];
        let s = per_epsilon_stats(&sets, &[0, 1]).unwrap();
        eq("coverage", s.coverage, 1.0)?;
        eq("pis", s.pis, 0.5)?;
        eq("acds", s.acds.unwrap_or(f64::NAN), 1.0)?;
        eq("n_eps", s.n_eps, 1.5)?;

        let wide = [
            PredictionSet { epsilon: 0.05, members: vec![0, 1] },
            PredictionSet { epsilon: 0.05, members: vec![1, 2] },
        ];
        let na = per_epsilon_stats(&wide, &[0, 2]).unwrap().acds;
        ensure(OrNa(na).to_string() == "NA", || format!("ACDS {na:?} should be NA"))?;

        let curve = coverage_curve(&[pv(&[2, 9], 10), pv(&[6, 9], 10), pv(&[9, 1], 10)], &[0, 0, 0], &[0.0, 0.5]).unwrap();
        eq("coverage at eps 0", curve[0].1, 1.0)?;
        eq("coverage at eps 0.5", curve[1].1, 2.0 / 3.0)?;

        // Set path and p-value path agree.
        let rows = [pv(&[4, 1, 1], 4), pv(&[2, 2, 3], 4)];
        for eps in [0.0, 0.2, 0.25, 0.5, 0.75, 0.9] {
            let sets: Vec<_> = rows.iter().map(|r| prediction_set(r, eps).unwrap()).collect();
            ensure(
                per_epsilon_stats(&sets, &[0, 2]).unwrap() == per_epsilon_stats_from_p(&rows, &[0, 2], eps).unwrap(),
                || format!("two-path mismatch at eps {eps}"),
            )?;
        }
        Ok(format!("{n} hand-computed values, NA marker, two-path agreement"))
    };
    report("metrics unit suite", started, None, check());
}

// ---------------------------------------------------------------------------
// Brown corpus (conditional)
// ---------------------------------------------------------------------------

fn brown_path() -> PathBuf {
    std::env::var_os("CPTAG_BROWN_CORPUS")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/brown_tagged.txt"))
}

#[test]
fn brown_corpus_reference_check() {
    let started = Instant::now();
    let path = brown_path();
    if !path.exists() {
        println!(
            "[SKIP] Brown corpus check: no reference corpus at {} (set CPTAG_BROWN_CORPUS)",
            path.display()
        );
        return;
    }
    let check = || -> Check {
        let corpus = parse_tagged_corpus(&fs::read_to_string(&path).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let q = corpus.label_set.len();
        ensure(q == 190, || format!("label set size {q}, expected 190"))?;

        let split = split_corpus(&corpus, &SplitSpec::default()).map_err(|e| e.to_string())?;
        ensure(split.test.len() >= 5_700, || format!("test split has {} sentences", split.test.len()))?;
        let tagger = LexicalTagger::fit(
            split.train.iter().map(|&i| &corpus.sentences[i]),
            q,
            |t| corpus.tag_index(t),
            0.1,
            true,
        );
        let producer = RowProducer::Pos { corpus: &corpus, tagger: &tagger };
        let (cal, _) = calibrate_units(&producer, &split.cal).map_err(|e| e.to_string())?;
        let epsilons = [0.1, 0.05, 0.01];
        let (acc, _) = evaluate_units(&producer, &split.test, &cal, &epsilons).map_err(|e| e.to_string())?;
        let r = acc.report().map_err(|e| e.to_string())?;
        ensure((0.85..=0.95).contains(&r.ca), || format!("lexical CA {:.4}", r.ca))?;
        for s in &r.per_epsilon {
            ensure((s.coverage - (1.0 - s.epsilon)).abs() <= 0.015, || {
                format!("coverage {:.4} at eps {}", s.coverage, s.epsilon)
            })?;
        }
        Ok(format!(
            "q={q}, CA={:.4}, coverage {}",
            r.ca,
            r.per_epsilon.iter().map(|s| format!("{:.4}", s.coverage)).collect::<Vec<_>>().join("/")
        ))
    };
    report("Brown corpus check", started, Some(Duration::from_secs(300)), check());
}

// ---------------------------------------------------------------------------
// Experiment determinism
// ---------------------------------------------------------------------------

#[test]
fn experiment_is_deterministic() {
    let started = Instant::now();
    let check = || -> Check {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let corpus = dir.path().join("toy.txt");
        fs::write(&corpus, common::toy_corpus(400, 11)).map_err(|e| e.to_string())?;
        let mut compared = 0;
        for (task, scorer) in [(Task::Pos, ScorerKind::Lexical), (Task::Mlm, ScorerKind::NGram)] {
            let mut outputs = Vec::new();
            for (run, threads) in [(0, 1), (1, 4), (2, 0)] {
                let config = ExperimentConfig {
                    corpus: Some(corpus.clone()),
                    task,
                    scorer: scorer.clone(),
                    seed: 5,
                    repetitions: 3,
                    output_dir: dir.path().join(format!("{task}-{run}")),
                    threads,
                    ..Default::default()
                };
                let outcome = run_experiment(&config).map_err(|e| format!("{e:#}"))?;
                let bytes: Vec<Vec<u8>> = outcome.files.iter().map(|p| fs::read(p).unwrap()).collect();
                outputs.push(bytes);
            }
            for other in &outputs[1..] {
                ensure(other == &outputs[0], || format!("{task}: outputs differ across runs"))?;
                compared += other.len();
            }
        }
        Ok(format!("{compared} CSV files byte-identical across thread counts 1/4/default"))
    };
    report("experiment determinism", started, None, check());
}

// ---------------------------------------------------------------------------
// Score-file round trip
// ---------------------------------------------------------------------------

fn scored_file() -> impl Strategy<Value = (Vec<String>, Vec<ScoredExample>)> {
    (1usize..8).prop_flat_map(|n_labels| {
        let labels = prop::collection::hash_set("[a-zA-Z0-9+$.]{1,6}", n_labels)
            .prop_map(|s| s.into_iter().collect::<Vec<_>>());
        let row = (
            any::<u64>(),
            prop::option::of(0..n_labels as u32),
            prop::collection::vec(0.0f64..1.0, n_labels),
        )
            .prop_map(|(id, label, weights)| {
                let total: f64 = weights.iter().sum::<f64>() + 1e-9;
                let mut scores: Vec<f32> = weights.iter().map(|w| (w / total) as f32).collect();
                if weights.iter().sum::<f64>() < 1e-6 {
                    scores.iter_mut().for_each(|s| *s = 0.0);
                    scores[0] = 1.0;
                }
                ScoredExample { example_id: id, true_label: label, scores }
            });
        (labels, prop::collection::vec(row, 0..12))
    })
}

#[test]
fn score_file_round_trip() {
    let started = Instant::now();
    let check = || -> Check {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let path = dir.path().join("rt.cpsf");
        let mut runner = TestRunner::new(PropConfig { cases: 256, ..PropConfig::default() });
        runner
            .run(&scored_file(), |(labels, rows)| {
                let vocab = LabelVocabulary::new(labels).unwrap();
                write_score_file(&path, &vocab, &rows).unwrap();
                let (v2, rows2) = read_score_file(&path).unwrap();
                prop_assert_eq!(&v2, &vocab);
                prop_assert_eq!(rows2.len(), rows.len());
                for (a, b) in rows.iter().zip(&rows2) {
                    prop_assert_eq!(a.example_id, b.example_id);
                    prop_assert_eq!(a.true_label, b.true_label);
                    let bits = |r: &ScoredExample| r.scores.iter().map(|s| s.to_bits()).collect::<Vec<_>>();
                    prop_assert_eq!(bits(a), bits(b));
                }
                Ok(())
            })
            .map_err(|e| e.to_string())?;

        let vocab = LabelVocabulary::new(vec!["a".into(), "b".into()]).unwrap();
        let rows = vec![ScoredExample { example_id: 1, true_label: Some(1), scores: vec![0.25, 0.75] }];
        let good = scorefile::encode(&vocab, &rows).map_err(|e| e.to_string())?;

        let mut bad_magic = good.clone();
        bad_magic[..4].copy_from_slice(b"XXXX");
        ensure(matches!(scorefile::decode(&bad_magic), Err(ScoreFileError::BadMagic(_))), || "bad magic accepted".into())?;
        let mut bad_version = good.clone();
        bad_version[4..8].copy_from_slice(&9u32.to_le_bytes());
        ensure(
            matches!(scorefile::decode(&bad_version), Err(ScoreFileError::UnsupportedVersion(9))),
            || "bad version accepted".into(),
        )?;
        for cut in [0, 10, 19, good.len() - 1] {
            ensure(
                matches!(scorefile::decode(&good[..cut]), Err(ScoreFileError::Truncated { .. })),
                || format!("truncation at {cut} accepted"),
            )?;
        }
        let mut inflated = good.clone();
        inflated[12..20].copy_from_slice(&(1u64 << 60).to_le_bytes());
        ensure(
            matches!(scorefile::decode(&inflated), Err(ScoreFileError::Truncated { .. })),
            || "inflated row count accepted".into(),
        )?;
        let mut trailing = good.clone();
        trailing.push(0);
        ensure(
            matches!(scorefile::decode(&trailing), Err(ScoreFileError::TrailingBytes { extra: 1 })),
            || "trailing byte accepted".into(),
        )?;
        Ok("256 random files bit-exact; magic/version/truncation/inflated/trailing rejected".into())
    };
    report("score-file round trip", started, None, check());
}
