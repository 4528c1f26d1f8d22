use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cptag::corpus::{parse_tagged_corpus, split_corpus, CorpusSplit, SplitSpec, TaggedCorpus};
use cptag::harness::config::{parse_epsilons, ExperimentConfig, Task};
use cptag::harness::pipeline::{calibrate_units, RowProducer};
use cptag::harness::synthetic::{run_synthetic_study, SyntheticScorer, SyntheticSpec};
use cptag::harness::{fill_transcript, run_experiment};
use cptag::icp::{p_vector, prediction_set, CalibrationModel};
use cptag::metrics::{forced_prediction, MetricsAccumulator, OrNa};
use cptag::models::{Lambdas, LexicalTagger, NGramInfiller, DEFAULT_LAMBDAS, DEFAULT_VOCAB_CAP};
use cptag::scorefile::{read_score_file, write_score_file, LabelVocabulary};

/// Conformal prediction sets for POS tagging and masked-word infilling.
#[derive(Parser)]
#[command(name = "cptag", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a tagged corpus and print its statistics.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Write a seeded train/calibration/test split of a corpus.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        fractions: Fractions,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a built-in scorer on the training part and score another part into a CPSF file.
    Score(ScoreArgs),
    /// Compute calibration nonconformity scores from a CPSF file.
    Calibrate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build prediction sets for a CPSF file and compute metrics on its labeled rows.
    Evaluate {
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value = "0.01,0.05,0.1")]
        epsilons: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the full repeated-split experiment.
    Experiment(Box<ExperimentArgs>),
    /// Measure coverage on synthetic exchangeable data.
    Synthetic(SyntheticArgs),
    /// Fill `<UNK>` gaps in a transcript with conformal word sets.
    Fill(FillArgs),
}

#[derive(Args)]
struct Fractions {
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    #[arg(long, default_value_t = 0.1)]
    cal_frac: f64,
    #[arg(long, default_value_t = 0.1)]
    test_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl Fractions {
    fn spec(&self) -> Result<SplitSpec> {
        Ok(SplitSpec::new(self.train_frac, self.cal_frac, self.test_frac, self.seed)?)
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Part {
    Cal,
    Test,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Split file written by `split`.
    #[arg(long)]
    split: PathBuf,
    #[arg(long, value_parser = parse_task)]
    task: Task,
    #[arg(long, value_enum)]
    part: Part,
    #[arg(long)]
    out: PathBuf,
    /// Mask seed for the mlm task; defaults to the split seed.
    #[arg(long)]
    mask_seed: Option<u64>,
    /// Sentence cap for the mlm task.
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_VOCAB_CAP)]
    vocab_cap: usize,
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse()
}

/// Every config key is also a flag.
#[derive(Args)]
struct ExperimentArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<String>,
    #[arg(long)]
    task: Option<String>,
    /// lexical, ngram or external:<path>
    #[arg(long)]
    scorer: Option<String>,
    /// Shorthand for `--scorer external:<path>`.
    #[arg(long)]
    scores: Option<String>,
    #[arg(long)]
    train_frac: Option<String>,
    #[arg(long)]
    cal_frac: Option<String>,
    #[arg(long)]
    test_frac: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    repetitions: Option<String>,
    #[arg(long)]
    epsilons: Option<String>,
    #[arg(long)]
    grid_points: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    #[arg(long)]
    cal_sentence_cap: Option<String>,
    #[arg(long)]
    test_sentence_cap: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    case_fold: Option<String>,
    #[arg(long)]
    lambda_unigram: Option<String>,
    #[arg(long)]
    lambda_left: Option<String>,
    #[arg(long)]
    lambda_right: Option<String>,
    #[arg(long)]
    vocab_cap: Option<String>,
    #[arg(long)]
    threads: Option<String>,
}

impl ExperimentArgs {
    fn overrides(&self) -> Vec<(String, String)> {
        let flags = [
            ("corpus", &self.corpus),
            ("task", &self.task),
            ("scorer", &self.scorer),
            ("scores", &self.scores),
            ("train_frac", &self.train_frac),
            ("cal_frac", &self.cal_frac),
            ("test_frac", &self.test_frac),
            ("seed", &self.seed),
            ("repetitions", &self.repetitions),
            ("epsilons", &self.epsilons),
            ("grid_points", &self.grid_points),
            ("output_dir", &self.output_dir),
            ("cal_sentence_cap", &self.cal_sentence_cap),
            ("test_sentence_cap", &self.test_sentence_cap),
            ("k", &self.k),
            ("case_fold", &self.case_fold),
            ("lambda_unigram", &self.lambda_unigram),
            ("lambda_left", &self.lambda_left),
            ("lambda_right", &self.lambda_right),
            ("vocab_cap", &self.vocab_cap),
            ("threads", &self.threads),
        ];
        flags
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

#[derive(Args)]
struct SyntheticArgs {
    #[arg(long, default_value_t = 10)]
    n_classes: usize,
    #[arg(long, default_value_t = 2.0)]
    signal: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_scale: f64,
    #[arg(long, default_value_t = 1000)]
    n_train: usize,
    #[arg(long, default_value_t = 1000)]
    n_cal: usize,
    #[arg(long, default_value_t = 5000)]
    n_test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    #[arg(long, default_value = "0.05,0.1,0.25")]
    epsilons: String,
    /// Use class-independent random score rows.
    #[arg(long)]
    random_scorer: bool,
}

#[derive(Args)]
struct FillArgs {
    /// Training corpus for the infiller and its calibration sentences.
    #[arg(long)]
    corpus: PathBuf,
    /// Transcript text; read from --input when absent.
    #[arg(long)]
    text: Option<String>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 0.25)]
    epsilon: f64,
    #[command(flatten)]
    fractions: Fractions,
    #[arg(long, default_value_t = 1300)]
    cal_sentence_cap: usize,
    #[arg(long, default_value_t = DEFAULT_VOCAB_CAP)]
    vocab_cap: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_corpus(path: &Path) -> Result<TaggedCorpus> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_tagged_corpus(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest { corpus } => {
            let c = load_corpus(&corpus)?;
            println!("sentences\t{}", c.len());
            println!("tokens\t{}", c.n_tokens());
            println!("words\t{}", c.vocab.len());
            println!("labels\t{}", c.label_set.len());
        }
        Command::Split { corpus, fractions, out } => {
            let c = load_corpus(&corpus)?;
            let split = split_corpus(&c, &fractions.spec()?)?;
            fs::write(&out, split.to_text()).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "train {} / cal {} / test {}",
                split.train.len(),
                split.cal.len(),
                split.test.len()
            );
        }
        Command::Score(args) => score(args)?,
        Command::Calibrate { scores, out } => {
            let (vocab, rows) = read_score_file(&scores)?;
            let labeled: Vec<_> = rows.iter().filter(|r| r.true_label.is_some()).collect();
            let skipped = rows.len() - labeled.len();
            let widened: Vec<Vec<f64>> = labeled.iter().map(|r| r.row()).collect();
            let cal = cptag::icp::calibrate(
                widened
                    .iter()
                    .zip(&labeled)
                    .map(|(row, r)| (row.as_slice(), r.true_label.map(|t| t as usize))),
            )?;
            fs::write(&out, cal.to_text()).with_context(|| format!("writing {}", out.display()))?;
            println!("{} calibration scores over {} labels ({skipped} unlabeled rows skipped)", cal.n(), vocab.len());
        }
        Command::Evaluate {
            calibration,
            scores,
            epsilons,
            out_dir,
        } => evaluate(&calibration, &scores, &epsilons, &out_dir)?,
        Command::Experiment(args) => {
            let config = ExperimentConfig::load(args.config.as_deref(), &args.overrides())?;
            let outcome = run_experiment(&config)?;
            for path in &outcome.files {
                println!("wrote {}", path.display());
            }
            if !outcome.failures.is_empty() {
                eprintln!("{} repetition(s) failed", outcome.failures.len());
            }
        }
        Command::Synthetic(args) => synthetic(args)?,
        Command::Fill(args) => fill(args)?,
    }
    Ok(())
}

fn score(args: ScoreArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    let split = CorpusSplit::from_text(&fs::read_to_string(&args.split)?)?;
    let units = match args.part {
        Part::Cal => &split.cal,
        Part::Test => &split.test,
    };
    let train = split.train.iter().map(|&i| &corpus.sentences[i]);
    let rows: Vec<_> = match args.task {
        Task::Pos => {
            let tagger = LexicalTagger::fit(
                train,
                corpus.label_set.len(),
                |t| corpus.tag_index(t),
                args.k.unwrap_or(cptag::models::DEFAULT_TAGGER_K),
                true,
            );
            let producer = RowProducer::Pos { corpus: &corpus, tagger: &tagger };
            let vocab = LabelVocabulary::new(corpus.label_set.clone())?;
            let rows = collect_rows(&producer, units)?;
            write_score_file(&args.out, &vocab, &rows)?;
            rows
        }
        Task::Mlm => {
            let infiller = NGramInfiller::fit(
                train,
                DEFAULT_LAMBDAS,
                args.k.unwrap_or(cptag::models::DEFAULT_INFILLER_K),
                args.vocab_cap,
            )?;
            let producer = RowProducer::Mlm {
                corpus: &corpus,
                infiller: &infiller,
                mask_seed: args.mask_seed.unwrap_or(split.seed),
            };
            let limit = args.cap.unwrap_or(usize::MAX).min(units.len());
            let rows = collect_rows(&producer, &units[..limit])?;
            write_score_file(&args.out, infiller.vocab(), &rows)?;
            rows
        }
    };
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn collect_rows(producer: &RowProducer<'_>, units: &[usize]) -> Result<Vec<cptag::ScoredExample>> {
    let mut rows = Vec::new();
    for &u in units {
        rows.extend(producer.rows(u)?.iter().map(|r| r.to_scored()));
    }
    Ok(rows)
}

fn evaluate(calibration: &Path, scores: &Path, epsilons: &str, out_dir: &Path) -> Result<()> {
    let cal = CalibrationModel::from_text(&fs::read_to_string(calibration)?).map_err(anyhow::Error::msg)?;
    let epsilons = parse_epsilons(epsilons).map_err(anyhow::Error::msg)?;
    let (vocab, rows) = read_score_file(scores)?;
    fs::create_dir_all(out_dir)?;

    let mut sets_out = String::new();
    let mut acc = MetricsAccumulator::new(&epsilons)?;
    for row in &rows {
        let scores = row.row();
        let pv = p_vector(&cal, &scores);
        for &eps in &epsilons {
            let set = prediction_set(&pv, eps)?;
            let labels: Vec<&str> = set.members.iter().filter_map(|&i| vocab.label(i)).collect();
            let _ = writeln!(sets_out, "{}\t{}\t{}", row.example_id, eps, labels.join(","));
        }
        if let Some(t) = row.true_label {
            acc.push(&pv, t as usize, forced_prediction(&scores))?;
        }
    }
    fs::write(out_dir.join("prediction_sets.tsv"), sets_out)?;

    if acc.is_empty() {
        println!("no labeled rows; metrics skipped");
        return Ok(());
    }
    let report = acc.report()?;
    let mut csv = String::from("epsilon,n_test,ca,cred_paper,cred_conventional,op,of,coverage,pis,acds,n_eps\n");
    for e in &report.per_epsilon {
        let _ = writeln!(
            csv,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.6}",
            e.epsilon,
            report.n_test,
            report.ca,
            report.cred_paper,
            report.cred_conventional,
            report.op,
            report.of,
            e.coverage,
            e.pis,
            OrNa(e.acds),
            e.n_eps
        );
    }
    fs::write(out_dir.join("metrics.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn synthetic(args: SyntheticArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n_classes: args.n_classes,
        signal: args.signal,
        noise_scale: args.noise_scale,
        n_train: args.n_train,
        n_cal: args.n_cal,
        n_test: args.n_test,
        seed: args.seed,
        scorer: if args.random_scorer {
            SyntheticScorer::Random
        } else {
            SyntheticScorer::Informative
        },
    };
    let epsilons = parse_epsilons(&args.epsilons).map_err(anyhow::Error::msg)?;
    let (reports, mean) = run_synthetic_study(&spec, &epsilons, args.seeds)?;
    println!("seed,epsilon,coverage,std_error,n_eps,op");
    for r in &reports {
        for (i, e) in r.metrics.per_epsilon.iter().enumerate() {
            println!(
                "{},{},{:.6},{:.6},{:.6},{:.6}",
                r.seed,
                e.epsilon,
                e.coverage,
                r.coverage_std_error(i),
                e.n_eps,
                r.metrics.op
            );
        }
    }
    for e in &mean.per_epsilon {
        let se = (e.coverage * (1.0 - e.coverage) / (args.n_test * reports.len()) as f64).sqrt();
        println!("mean,{},{:.6},{:.6},{:.6},{:.6}", e.epsilon, e.coverage, se, e.n_eps, mean.op);
    }
    Ok(())
}

fn fill(args: FillArgs) -> Result<()> {
    let text = match (&args.text, &args.input) {
        (Some(t), _) => t.clone(),
        (None, Some(p)) => fs::read_to_string(p)?,
        (None, None) => bail!("pass --text or --input"),
    };
    let corpus = load_corpus(&args.corpus)?;
    let spec = args.fractions.spec()?;
    let split = split_corpus(&corpus, &spec)?;
    let infiller = NGramInfiller::fit(
        split.train.iter().map(|&i| &corpus.sentences[i]),
        Lambdas::default(),
        cptag::models::DEFAULT_INFILLER_K,
        args.vocab_cap,
    )?;
    let producer = RowProducer::Mlm {
        corpus: &corpus,
        infiller: &infiller,
        mask_seed: spec.seed,
    };
    let limit = args.cal_sentence_cap.min(split.cal.len());
    let (cal, _) = calibrate_units(&producer, &split.cal[..limit])?;
    for gap in fill_transcript(&text, &infiller, &cal, args.epsilon)? {
        println!("{}\t{}\t{}", gap.position, args.epsilon, gap.words.join(","));
    }
    Ok(())
}
