//! `qlm` — train, evaluate, and analyze density-matrix word embeddings, and
//! verify their quantum-circuit encoding.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 domain/validation failure,
//! 3 numeric failure. Reports go to stdout as TSV/CSV; diagnostics to stderr
//! (`QLM_LOG` or `--log-level` control verbosity).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qlm_core::corpus::{tokenize_file, CorpusError, PeriodManifest, TokenizeMode};
use qlm_core::embed::{
    build_vocab, load_model, save_model, vocab_only_store, EmbeddingStore, ModelError,
};
use qlm_core::ensemble::{period_entropy_series, EnsembleError, SeriesMode};
use qlm_core::eval::{evaluate, load_similarity_dataset, nearest_neighbors, EvalError, SimKind};
use qlm_core::linalg::{hs_similarity, LogBase};
use qlm_core::qcirc::{
    purification_qubits, purify, recover_principal, swap_test_exact, swap_test_sample, QcircError,
};
use qlm_core::trainer::{train, TrainConfig, TrainError};

#[derive(Parser)]
#[command(
    name = "qlm",
    version,
    about = "Density-matrix word embeddings: vocabulary, training, similarity evaluation, ensemble entropy, and swap-test simulation"
)]
struct Cli {
    /// Threads for parallel sections (0 = library default)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Log level: error|warn|info|debug|trace (overrides QLM_LOG)
    #[arg(long, global = true)]
    log_level: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Whitespace,
    Char,
}

impl From<ModeArg> for TokenizeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Whitespace => TokenizeMode::Whitespace,
            ModeArg::Char => TokenizeMode::Char,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SimArg {
    Hs,
    Uhlmann,
}

impl From<SimArg> for SimKind {
    fn from(s: SimArg) -> Self {
        match s {
            SimArg::Hs => SimKind::Hs,
            SimArg::Uhlmann => SimKind::Uhlmann,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BaseArg {
    E,
    #[value(name = "2")]
    Two,
}

impl From<BaseArg> for LogBase {
    fn from(b: BaseArg) -> Self {
        match b {
            BaseArg::E => LogBase::Natural,
            BaseArg::Two => LogBase::Two,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// State dimension d (d = 8 is the 3-qubit, 36-parameter setup)
    #[arg(long, default_value_t = 8)]
    dim: usize,
    /// Context window radius
    #[arg(long, default_value_t = 5)]
    window: usize,
    /// Negative samples per pair
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    /// Initial learning rate (decays linearly to 1% of this)
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    /// Drop words seen fewer times than this
    #[arg(long, default_value_t = 5)]
    min_count: u64,
    /// Frequency subsampling threshold (0 disables)
    #[arg(long, default_value_t = 1e-4)]
    subsample: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Training workers; 1 is deterministic, more are lock-free
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

impl TrainArgs {
    fn to_config(&self) -> TrainConfig {
        TrainConfig {
            dim: self.dim,
            window: self.window,
            negatives: self.negatives,
            epochs: self.epochs,
            learning_rate: self.lr,
            subsample_t: self.subsample,
            seed: self.seed,
            min_count: self.min_count,
            workers: self.workers,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Count a corpus into a vocabulary file
    BuildVocab {
        /// Corpus text file(s), concatenated in order
        #[arg(long = "corpus", required = true, num_args = 1..)]
        corpus: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        min_count: u64,
        #[arg(long, value_enum, default_value_t = ModeArg::Whitespace)]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train density-matrix embeddings on a corpus
    Train {
        #[arg(long = "corpus", required = true, num_args = 1..)]
        corpus: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = ModeArg::Whitespace)]
        mode: ModeArg,
        #[command(flatten)]
        train: TrainArgs,
        /// Output model path (QLM1 format)
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a word-similarity dataset against a model
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = SimArg::Hs)]
        sim: SimArg,
    },
    /// Nearest vocabulary neighbors of a word
    Neighbors {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        word: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, value_enum, default_value_t = SimArg::Hs)]
        sim: SimArg,
    },
    /// Von Neumann entropy of period ensembles from a manifest
    Entropy {
        /// Existing model to use for every period
        #[arg(long, required_unless_present = "train_per_period", conflicts_with = "train_per_period")]
        model: Option<PathBuf>,
        /// Train one model per period instead (same config and seed each)
        #[arg(long)]
        train_per_period: bool,
        /// TSV manifest: period<TAB>path per line
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = BaseArg::E)]
        base: BaseArg,
        #[arg(long, value_enum, default_value_t = ModeArg::Whitespace)]
        mode: ModeArg,
        #[command(flatten)]
        train: TrainArgs,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the swap-test fidelity circuit between two words
    SwapTest {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        w1: String,
        #[arg(long)]
        w2: String,
        #[arg(long, default_value_t = 100_000)]
        shots: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Purify a word state and verify partial-trace recovery
    PurifyCheck {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        word: String,
    },
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        let code = match &e {
            CorpusError::Io { .. } | CorpusError::MissingFile(_) => 1,
            _ => 2,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let code = match &e {
            ModelError::Io { .. } | ModelError::Stream(_) => 1,
            _ => 2,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NanLoss { .. } => CliError::new(3, e.to_string()),
            TrainError::Model(inner) => inner.into(),
            other => CliError::new(2, other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io { .. } => CliError::new(1, e.to_string()),
            EvalError::Model(inner) => inner.into(),
            other => CliError::new(2, other.to_string()),
        }
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::Corpus(inner) => inner.into(),
            EnsembleError::Model(inner) => inner.into(),
            EnsembleError::Train(inner) => inner.into(),
            other => CliError::new(2, other.to_string()),
        }
    }
}

impl From<QcircError> for CliError {
    fn from(e: QcircError) -> Self {
        match &e {
            QcircError::PowerOfTwoRequired(d) => CliError::new(
                2,
                format!(
                    "model dimension {d} is not a power of two; circuit encoding needs d = 2, 4, 8, … (retrain with --dim)"
                ),
            ),
            _ => CliError::new(2, e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(1, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let mut builder =
        env_logger::Builder::from_env(env_logger::Env::default().filter_or("QLM_LOG", "warn"));
    if let Some(level) = &cli.log_level {
        builder.parse_filters(level);
    }
    builder.init();

    qlm_core::par::configure_thread_pool(cli.threads);

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn read_corpus(paths: &[PathBuf], mode: TokenizeMode) -> Result<Vec<String>, CliError> {
    let mut tokens = Vec::new();
    for path in paths {
        tokens.extend(tokenize_file(path, mode)?);
    }
    Ok(tokens)
}

fn load(path: &Path) -> Result<EmbeddingStore, CliError> {
    Ok(load_model(path)?)
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::BuildVocab { corpus, min_count, mode, out } => {
            let tokens = read_corpus(&corpus, mode.into())?;
            let token_count = tokens.len();
            let vocab = build_vocab(tokens, min_count)?;
            println!("vocab_size\t{}", vocab.len());
            println!("tokens\t{token_count}");
            save_model(&vocab_only_store(vocab), &out)?;
            Ok(())
        }
        Command::Train { corpus, mode, train: args, out } => {
            let tokens = read_corpus(&corpus, mode.into())?;
            let config = args.to_config();
            let (store, stats) = train(&tokens, &config)?;
            for (i, loss) in stats.epoch_losses.iter().enumerate() {
                println!("{}\t{loss:.6}", i + 1);
            }
            log::info!(
                "trained {} words in {:.1?} ({} pairs)",
                store.vocab().len(),
                stats.wall_time,
                stats.pairs_processed
            );
            save_model(&store, &out)?;
            Ok(())
        }
        Command::Eval { model, dataset, sim } => {
            let store = load(&model)?;
            let data = load_similarity_dataset(&dataset)?;
            let report = evaluate(&store, &data, sim.into())?;
            println!(
                "{:.6}\t{:.6}\t{}/{}",
                report.pearson, report.spearman, report.pairs_covered, report.pairs_total
            );
            println!(
                "# {} similarity: Pearson {:.4}, Spearman {:.4} over {} of {} pairs",
                report.sim_kind,
                report.pearson,
                report.spearman,
                report.pairs_covered,
                report.pairs_total
            );
            Ok(())
        }
        Command::Neighbors { model, word, k, sim } => {
            let store = load(&model)?;
            for (neighbor, score) in nearest_neighbors(&store, &word, k, sim.into())? {
                println!("{neighbor}\t{score:.6}");
            }
            Ok(())
        }
        Command::Entropy { model, train_per_period, manifest, base, mode, train: args, out } => {
            let manifest = PeriodManifest::load(&manifest)?;
            let config = args.to_config();
            let series = if train_per_period {
                period_entropy_series(
                    &manifest,
                    SeriesMode::PerPeriodModel(&config),
                    mode.into(),
                    base.into(),
                )?
            } else {
                let store = load(model.as_ref().expect("clap enforces --model"))?;
                period_entropy_series(
                    &manifest,
                    SeriesMode::GlobalModel(&store),
                    mode.into(),
                    base.into(),
                )?
            };
            let mut writer = BufWriter::new(File::create(&out)?);
            series.write_csv(&mut writer)?;
            writer.flush()?;
            log::info!("wrote {} period rows to {}", series.rows.len(), out.display());
            Ok(())
        }
        Command::SwapTest { model, w1, w2, shots, seed } => {
            let store = load(&model)?;
            let rho = store.get_density(&w1)?;
            let sigma = store.get_density(&w2)?;
            let qubits = purification_qubits(store.dim())?;
            let exact = swap_test_exact(&rho, &sigma)?;
            let sample = swap_test_sample(&rho, &sigma, shots, seed)?;
            println!("w1\t{w1}");
            println!("w2\t{w2}");
            println!("dim\t{}", store.dim());
            println!("qubits_per_state\t{qubits}");
            println!("control_qubits\t1");
            println!("total_qubits\t{}", 2 * qubits + 1);
            println!("tr_similarity\t{:.12}", hs_similarity(&rho, &sigma).map_err(ModelError::Linalg)?);
            println!("exact_p0\t{exact:.12}");
            println!("shots\t{shots}");
            println!("zeros\t{}", sample.zeros);
            println!("estimate_p0\t{:.6}", sample.estimate());
            Ok(())
        }
        Command::PurifyCheck { model, word } => {
            let store = load(&model)?;
            let rho = store.get_density(&word)?;
            let state = purify(&rho)?;
            let recovered = recover_principal(&state)?;
            println!("word\t{word}");
            println!("dim\t{}", store.dim());
            println!("qubits\t{}", state.num_qubits());
            println!("recovery_max_abs_err\t{:.3e}", rho.max_abs_diff(&recovered));
            Ok(())
        }
    }
}
