use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pine::eval::{
    check_score_bounds, cluster_positional_features, context_word_importance, evaluate_analogies,
    parse_masked, position_importance, rank_masked_predictions, read_questions, DEFAULT_ANALOGY_VOCAB,
};
use pine::init::{estimate_product_moments, InitVariant, DEFAULT_TRUNCATION};
use pine::io::{export_text_vectors, load_model, save_model};
use pine::trainer::{train_file, TrainingLog};
use pine::{Error, InitScheme, Model, ModelKind, TrainConfig, WindowMode};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "pine", version, about = "Subword and positional word embeddings")]
struct Cli {
    /// Worker threads for training and parallel evaluation.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Model file to read (or to write, for `train`).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a text file, one document per line.
    Train(TrainArgs),
    /// Word-analogy accuracy on a question file.
    Analogy {
        #[arg(long)]
        questions: PathBuf,
        /// Candidates are the most frequent words only.
        #[arg(long, default_value_t = DEFAULT_ANALOGY_VOCAB)]
        restrict_vocab: usize,
    },
    /// Rank every word as the filler of `<mask>` in a sentence.
    Predict {
        #[arg(long)]
        sentence: String,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Importance of every context position and clustered feature curves.
    Positions {
        #[arg(long, default_value_t = 3)]
        clusters: usize,
    },
    /// Importance of context words for each feature cluster.
    Words {
        /// Words to score; defaults to the whole vocabulary.
        #[arg(long, value_delimiter = ',')]
        words: Vec<String>,
        #[arg(long, default_value_t = 3)]
        clusters: usize,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Check the score bounds on random windows.
    Bounds {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 3)]
        clusters: usize,
    },
    /// Monte-Carlo moments of the initialization schemes.
    InitStats {
        #[arg(long, value_enum, default_value_t = InitArg::SqrtNormal)]
        scheme: InitArg,
        #[arg(long, default_value_t = 300)]
        dim: usize,
        #[arg(long, default_value_t = DEFAULT_TRUNCATION)]
        k: usize,
        #[arg(long, default_value_t = 10_000_000)]
        samples: u64,
    },
    /// Train over a grid of window sizes and positional dimensions.
    Sweep {
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        windows: Vec<usize>,
        /// Only used by the constrained model.
        #[arg(long, value_delimiter = ',')]
        positional_dims: Vec<usize>,
        /// Also report analogy accuracy on this question file.
        #[arg(long)]
        questions: Option<PathBuf>,
    },
    /// Write word vectors in the plain text format.
    Export {
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Subword,
    Positional,
    Constrained,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WindowArg {
    Fixed,
    UniformShrink,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InitArg {
    SqrtNormal,
    UniformBoth,
    IdentityPositions,
}

impl From<InitArg> for InitVariant {
    fn from(a: InitArg) -> Self {
        match a {
            InitArg::SqrtNormal => InitVariant::SqrtNormal,
            InitArg::UniformBoth => InitVariant::UniformBoth,
            InitArg::IdentityPositions => InitVariant::IdentityPositions,
        }
    }
}

#[derive(Args, Clone)]
struct TrainArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = KindArg::Subword)]
    kind: KindArg,
    #[arg(long, default_value_t = 300)]
    dim: usize,
    /// Position-dependent features of the constrained model.
    #[arg(long, default_value_t = 60)]
    positional_dim: usize,
    /// Context half-width; 5 for the subword model, 15 otherwise.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, value_enum)]
    window_mode: Option<WindowArg>,
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 10)]
    negatives: usize,
    #[arg(long, default_value_t = 5)]
    min_count: u64,
    #[arg(long, default_value_t = 1e-5)]
    sample: f64,
    #[arg(long, default_value_t = 2_000_000)]
    buckets: usize,
    #[arg(long, default_value_t = 3)]
    minn: usize,
    #[arg(long, default_value_t = 6)]
    maxn: usize,
    #[arg(long, value_enum, default_value_t = InitArg::SqrtNormal)]
    init: InitArg,
    #[arg(long, default_value_t = DEFAULT_TRUNCATION)]
    init_k: usize,
    /// Serialize updates of the positional vectors across threads.
    #[arg(long)]
    positional_lock: bool,
}

impl TrainArgs {
    fn config(&self, threads: usize, seed: u64) -> TrainConfig {
        let kind = match self.kind {
            KindArg::Subword => ModelKind::Subword,
            KindArg::Positional => ModelKind::Positional,
            KindArg::Constrained => ModelKind::Constrained {
                positional_dim: self.positional_dim,
            },
        };
        let defaults = TrainConfig::for_kind(kind);
        TrainConfig {
            kind,
            window: self.window.unwrap_or(defaults.window),
            dim: self.dim,
            epochs: self.epochs,
            lr: self.lr,
            negatives: self.negatives,
            min_count: self.min_count,
            sample: self.sample,
            buckets: self.buckets,
            minn: self.minn,
            maxn: self.maxn,
            threads,
            seed,
            window_mode: match self.window_mode {
                Some(WindowArg::Fixed) => WindowMode::Fixed,
                Some(WindowArg::UniformShrink) => WindowMode::UniformShrink,
                None => defaults.window_mode,
            },
            init: InitScheme {
                variant: self.init.into(),
                k: self.init_k,
            },
            positional_lock: self.positional_lock,
        }
    }
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::NumericFailure(_) => EXIT_NUMERIC,
                _ => EXIT_DATA,
            })
        }
    }
}

fn run(cli: Cli) -> CliResult {
    if cli.threads == 0 {
        return Err(Failure::Usage("--threads must be positive".into()));
    }
    // ignore a pool that is already configured
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global();
    let out = Output { format: cli.format };
    match &cli.command {
        Command::Train(args) => {
            let path = cli
                .model
                .as_deref()
                .ok_or_else(|| Failure::Usage("train needs --model to write the model to".into()))?;
            let log = train_to(args.config(cli.threads, cli.seed), &args.input, path)?;
            out.training_log(&log)
        }
        Command::Analogy {
            questions,
            restrict_vocab,
        } => {
            let model = open_model(&cli)?;
            let qs = read_questions(questions)?;
            let r = evaluate_analogies(&model, &qs, *restrict_vocab)?;
            out.emit(&r, &["section", "evaluated", "correct", "accuracy"], || {
                let mut rows: Vec<Vec<String>> = r
                    .sections
                    .iter()
                    .map(|s| vec![s.section.clone(), s.evaluated.to_string(), s.correct.to_string(), s.accuracy.to_string()])
                    .collect();
                rows.push(vec!["total".into(), r.evaluated.to_string(), r.correct.to_string(), r.accuracy.to_string()]);
                rows
            })
        }
        Command::Predict { sentence, top } => {
            let model = open_model(&cli)?;
            let (left, right) = parse_masked(sentence)?;
            let mut r = rank_masked_predictions(&model, &left, &right)?;
            r.predictions.truncate(*top);
            out.emit(&r, &["rank", "word", "score", "probability"], || {
                r.predictions
                    .iter()
                    .map(|p| vec![p.rank.to_string(), p.word.clone(), p.score.to_string(), p.probability.to_string()])
                    .collect()
            })
        }
        Command::Positions { clusters } => {
            let model = open_model(&cli)?;
            let importance = position_importance(&model.params)?;
            let clustering = cluster_positional_features(&model.params, *clusters, cli.seed)?;
            #[derive(Serialize)]
            struct Report<'a> {
                task: &'static str,
                positions: &'a [pine::eval::PositionImportance],
                clustering: &'a pine::eval::FeatureClustering,
            }
            let report = Report {
                task: "position_importance",
                positions: &importance,
                clustering: &clustering,
            };
            let mut header = vec!["position".to_string(), "norm".into(), "scaled".into()];
            header.extend((0..clustering.k).map(|c| format!("cluster_{c}")));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            out.emit(&report, &header, || {
                importance
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        let mut row = vec![p.position.to_string(), p.norm.to_string(), p.scaled.to_string()];
                        row.extend(clustering.curves.iter().map(|c| c[i].to_string()));
                        row
                    })
                    .collect()
            })
        }
        Command::Words { words, clusters, top } => {
            let model = open_model(&cli)?;
            let clustering = cluster_positional_features(&model.params, *clusters, cli.seed)?;
            let words: Vec<String> = if words.is_empty() {
                model.vocab.words().map(str::to_owned).collect()
            } else {
                words.iter().map(|w| w.to_lowercase()).collect()
            };
            let r = context_word_importance(&model, &clustering, &words, *top)?;
            let mut header = vec!["word".to_string(), "cluster".into()];
            header.extend((0..clustering.k).map(|c| format!("importance_{c}")));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            out.emit(&r, &header, || {
                r.words
                    .iter()
                    .map(|w| {
                        let mut row = vec![w.word.clone(), w.cluster.to_string()];
                        row.extend(w.importance.iter().map(f64::to_string));
                        row
                    })
                    .collect()
            })
        }
        Command::Bounds { trials, clusters } => {
            let model = open_model(&cli)?;
            let clustering = cluster_positional_features(&model.params, *clusters, cli.seed)?;
            let r = check_score_bounds(&model, *trials, cli.seed, Some(&clustering))?;
            out.emit(&r, &["check", "violations", "measured", "bound"], || {
                vec![
                    vec!["score".into(), r.tight_violations.to_string(), r.mean_abs_score.to_string(), r.mean_tight_bound.to_string()],
                    vec!["score_product".into(), r.product_violations.to_string(), r.mean_abs_score.to_string(), r.mean_product_bound.to_string()],
                    vec!["clusters".into(), r.cluster_violations.to_string(), String::new(), String::new()],
                    vec!["position_swap".into(), r.swap_violations.to_string(), r.mean_swap_difference.to_string(), r.mean_swap_bound.to_string()],
                ]
            })
        }
        Command::InitStats {
            scheme,
            dim,
            k,
            samples,
        } => {
            let scheme = InitScheme {
                variant: (*scheme).into(),
                k: *k,
            };
            let r = estimate_product_moments(scheme, *dim, *samples, cli.seed)?;
            out.emit(&r, &["dim", "k", "samples", "mean", "mean_std_error", "variance", "variance_ratio"], || {
                vec![vec![
                    r.dim.to_string(),
                    r.k.to_string(),
                    r.samples.to_string(),
                    r.mean.to_string(),
                    r.mean_std_error.to_string(),
                    r.variance.to_string(),
                    r.variance_ratio.to_string(),
                ]]
            })
        }
        Command::Sweep {
            train,
            windows,
            positional_dims,
            questions,
        } => sweep(&cli, &out, train, windows, positional_dims, questions.as_deref()),
        Command::Export { output } => {
            let model = open_model(&cli)?;
            export_text_vectors(&model, output)?;
            Ok(())
        }
    }
}

fn open_model(cli: &Cli) -> CliResult<Model> {
    let path = cli
        .model
        .as_deref()
        .ok_or_else(|| Failure::Usage("this command needs --model".into()))?;
    Ok(load_model(path)?)
}

fn train_to(config: TrainConfig, input: &Path, output: &Path) -> CliResult<TrainingLog> {
    let trained = train_file(input, &config)?;
    let log = trained.log.clone();
    save_model(&Model::from(trained), output)?;
    Ok(log)
}

#[derive(Serialize)]
struct SweepPoint {
    window: usize,
    positional_dim: usize,
    mean_loss: f64,
    last_decile_loss: Option<f64>,
    wall_clock_seconds: f64,
    analogy_accuracy: Option<f64>,
}

fn sweep(
    cli: &Cli,
    out: &Output,
    args: &TrainArgs,
    windows: &[usize],
    positional_dims: &[usize],
    questions: Option<&Path>,
) -> CliResult {
    let dims: Vec<usize> = if args.kind == KindArg::Constrained && !positional_dims.is_empty() {
        positional_dims.to_vec()
    } else {
        vec![args.positional_dim]
    };
    let questions = questions.map(read_questions).transpose()?;
    let mut points = Vec::new();
    for &window in windows {
        for &dp in &dims {
            let mut a = args.clone();
            a.window = Some(window);
            a.positional_dim = dp;
            let trained = train_file(&args.input, &a.config(cli.threads, cli.seed))?;
            let positional_dim = trained.params.positional_dim();
            let log = trained.log.clone();
            let model = Model::from(trained);
            let analogy_accuracy = match &questions {
                Some(qs) => Some(evaluate_analogies(&model, qs, DEFAULT_ANALOGY_VOCAB)?.accuracy),
                None => None,
            };
            points.push(SweepPoint {
                window,
                positional_dim,
                mean_loss: log.mean_loss,
                last_decile_loss: log.decile_mean(9),
                wall_clock_seconds: log.wall_clock_seconds,
                analogy_accuracy,
            });
        }
    }
    let header = [
        "window",
        "positional_dim",
        "mean_loss",
        "last_decile_loss",
        "wall_clock_seconds",
        "analogy_accuracy",
    ];
    out.emit(&points, &header, || {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        points
            .iter()
            .map(|p| {
                vec![
                    p.window.to_string(),
                    p.positional_dim.to_string(),
                    p.mean_loss.to_string(),
                    opt(p.last_decile_loss),
                    p.wall_clock_seconds.to_string(),
                    opt(p.analogy_accuracy),
                ]
            })
            .collect()
    })
}

struct Output {
    format: Format,
}

impl Output {
    fn emit<T: Serialize>(&self, value: &T, header: &[&str], rows: impl FnOnce() -> Vec<Vec<String>>) -> CliResult {
        let stdout = std::io::stdout();
        let mut w = stdout.lock();
        let io = |e: std::io::Error| Failure::Lib(Error::Io {
            context: "stdout".into(),
            source: e,
        });
        match self.format {
            Format::Json => {
                serde_json::to_writer_pretty(&mut w, value).map_err(|e| io(e.into()))?;
                writeln!(w).map_err(io)?;
            }
            Format::Csv => {
                let mut csv = csv::Writer::from_writer(w);
                csv.write_record(header).map_err(|e| io(e.into()))?;
                for row in rows() {
                    csv.write_record(&row).map_err(|e| io(e.into()))?;
                }
                csv.flush().map_err(io)?;
            }
        }
        Ok(())
    }

    fn training_log(&self, log: &TrainingLog) -> CliResult {
        self.emit(log, &["percent", "mean_loss"], || {
            log.progress_loss
                .iter()
                .enumerate()
                .map(|(i, l)| vec![i.to_string(), l.map(|x| x.to_string()).unwrap_or_default()])
                .collect()
        })
    }
}
