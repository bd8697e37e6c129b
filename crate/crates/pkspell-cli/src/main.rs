//! Command-line interface: train, infer, eval, augment, quantize.
//!
//! Results go to standard output (or `-o FILE`); diagnostics go to standard
//! error. Exit codes: 0 success, 1 input error, 2 internal error.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use pkspell::corpus::{read_corpus, write_corpus, write_predictions, LabeledPiece};
use pkspell::eval::{
    evaluate, global_key_signature, global_key_signature_weighted, EvalOptions, GroupBy,
};
use pkspell::midi::read_midi;
use pkspell::neural::{predict, ModelParams, PredictOptions};
use pkspell::quant::quantize_durations;
use pkspell::train::{train, TrainConfig};

#[derive(Parser)]
#[command(
    name = "pkspell",
    about = "Pitch spelling and key signature estimation for MIDI note sequences",
    version
)]
struct Cli {
    /// Random seed (overrides PKSPELL_SEED and any config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of duration classes.
    #[arg(long, global = true)]
    k: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a labeled corpus and write a weight file.
    Train(TrainArgs),
    /// Spell a MIDI file with a trained model.
    Infer(InferArgs),
    /// Evaluate a trained model on a labeled corpus.
    Eval(EvalArgs),
    /// Write a corpus extended with its transposed variants.
    Augment(AugmentArgs),
    /// Show the duration classes and centroids of a MIDI file.
    Quantize(QuantizeArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Labeled corpus (one JSON piece per line).
    corpus: PathBuf,
    /// Optional key=value config file; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output weight file.
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    split_fraction: Option<f64>,
    /// Hidden units per direction.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Optional global-norm gradient clip.
    #[arg(long)]
    grad_clip: Option<f64>,
    /// Disable transposition augmentation of the training split.
    #[arg(long)]
    no_augment: bool,
    /// One shared recurrent stage for both heads.
    #[arg(long)]
    single_rnn: bool,
    /// Independent per-task recurrent stages.
    #[arg(long)]
    separate: bool,
    /// Drop duration features from the input encoding.
    #[arg(long)]
    no_durations: bool,
    /// Left-to-right only (per-direction hidden size is doubled).
    #[arg(long)]
    unidirectional: bool,
}

#[derive(Args)]
struct InferArgs {
    /// Input MIDI file (format 0 or 1).
    midi: PathBuf,
    /// Trained weight file.
    #[arg(long)]
    weights: PathBuf,
    /// Output file (default: standard output).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Restrict spellings to enharmonics of each sounding pitch class.
    #[arg(long)]
    constrain: bool,
    /// Weight the global key signature vote by note durations.
    #[arg(long)]
    duration_weighted_ks: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Labeled corpus (one JSON piece per line).
    corpus: PathBuf,
    /// Trained weight file.
    #[arg(long)]
    weights: PathBuf,
    /// Piece attribute used for the per-group table.
    #[arg(long, value_enum, default_value_t = GroupKey::Composer)]
    group_by: GroupKey,
    /// Weight global key signature votes by note durations.
    #[arg(long)]
    duration_weighted_ks: bool,
}

#[derive(Args)]
struct AugmentArgs {
    /// Labeled corpus (one JSON piece per line).
    corpus: PathBuf,
    /// Output file (default: standard output).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct QuantizeArgs {
    /// Input MIDI file (format 0 or 1).
    midi: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupKey {
    Composer,
    Id,
}

/// Failures split by who caused them: bad input exits 1, anything else 2.
enum AppError {
    Input(String),
    Internal(String),
}

impl AppError {
    fn input(e: impl std::fmt::Display) -> Self {
        AppError::Input(e.to_string())
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        AppError::Internal(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            _ => {
                eprint!("{e}");
                return ExitCode::from(1);
            }
        },
    };

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(AppError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Train(args) => cmd_train(args, cli.seed, cli.k),
        Command::Infer(args) => cmd_infer(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Augment(args) => cmd_augment(args),
        Command::Quantize(args) => cmd_quantize(args, cli.k),
    }
}

fn load_corpus(path: &Path) -> Result<Vec<LabeledPiece>, AppError> {
    let file =
        File::open(path).map_err(|e| AppError::Input(format!("{}: {e}", path.display())))?;
    read_corpus(BufReader::new(file)).map_err(AppError::input)
}

fn load_weights(path: &Path) -> Result<ModelParams, AppError> {
    let bytes =
        std::fs::read(path).map_err(|e| AppError::Input(format!("{}: {e}", path.display())))?;
    ModelParams::from_bytes(&bytes).map_err(AppError::input)
}

fn load_midi(path: &Path) -> Result<pkspell::Piece, AppError> {
    let bytes =
        std::fs::read(path).map_err(|e| AppError::Input(format!("{}: {e}", path.display())))?;
    let mut piece = read_midi(&bytes).map_err(AppError::input)?;
    piece.id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(piece)
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), AppError> {
    match path {
        Some(path) => std::fs::write(path, bytes)
            .map_err(|e| AppError::Input(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|()| stdout.flush())
                .map_err(AppError::internal)
        }
    }
}

fn cmd_train(args: TrainArgs, seed: Option<u64>, k: Option<usize>) -> Result<(), AppError> {
    let mut config = TrainConfig::default();
    if let Some(path) = &args.config {
        apply_config_file(&mut config, path)?;
    }
    if let Ok(value) = std::env::var("PKSPELL_SEED") {
        config.seed = value
            .parse()
            .map_err(|_| AppError::Input(format!("PKSPELL_SEED={value:?} is not a number")))?;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(k) = k {
        config.k = k;
    }
    for (flag, slot) in [
        (args.epochs, &mut config.epochs),
        (args.batch_size, &mut config.batch_size),
        (args.hidden, &mut config.hidden_per_dir),
    ] {
        if let Some(v) = flag {
            *slot = v;
        }
    }
    if let Some(v) = args.lr {
        config.lr = v;
    }
    if let Some(v) = args.split_fraction {
        config.split_fraction = v;
    }
    if let Some(v) = args.dropout {
        config.dropout = v;
    }
    if args.grad_clip.is_some() {
        config.grad_clip = args.grad_clip;
    }
    if args.no_augment {
        config.augment = false;
    }
    config.single_rnn |= args.single_rnn;
    config.separate |= args.separate;
    config.no_durations |= args.no_durations;
    config.unidirectional |= args.unidirectional;

    validate_train_config(&config)?;
    let corpus = load_corpus(&args.corpus)?;
    let outcome = train(&corpus, &config).map_err(AppError::input)?;
    std::fs::write(&args.output, outcome.params.to_bytes())
        .map_err(|e| AppError::Input(format!("{}: {e}", args.output.display())))?;
    if let Some(last) = outcome.history.last() {
        log::info!(
            "final epoch: train acc {:.4}/{:.4}, val acc {}/{}",
            last.train_tpc_accuracy,
            last.train_ks_accuracy,
            last.val_tpc_accuracy
                .map_or("-".to_string(), |v| format!("{v:.4}")),
            last.val_ks_accuracy
                .map_or("-".to_string(), |v| format!("{v:.4}")),
        );
    }
    log::info!("wrote weights to {}", args.output.display());
    Ok(())
}

fn validate_train_config(config: &TrainConfig) -> Result<(), AppError> {
    if config.epochs == 0 {
        return Err(AppError::Input("epochs must be at least 1".into()));
    }
    if config.lr.is_nan() || config.lr <= 0.0 {
        return Err(AppError::Input("lr must be positive".into()));
    }
    if config.batch_size == 0 {
        return Err(AppError::Input("batch_size must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&config.split_fraction) {
        return Err(AppError::Input("split_fraction must be in [0, 1]".into()));
    }
    if !(0.0..1.0).contains(&config.dropout) {
        return Err(AppError::Input("dropout must be in [0, 1)".into()));
    }
    if config.k == 0 && !config.no_durations {
        return Err(AppError::Input(
            "k must be at least 1 (or pass --no-durations)".into(),
        ));
    }
    if config.hidden_per_dir == 0 {
        return Err(AppError::Input("hidden must be at least 1".into()));
    }
    Ok(())
}

/// Plain key=value overlay for TrainConfig; `#` starts a comment.
fn apply_config_file(config: &mut TrainConfig, path: &Path) -> Result<(), AppError> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| AppError::Input(format!("{}: {e}", path.display())))?;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad =
            |msg: &str| AppError::Input(format!("{}:{}: {msg}", path.display(), lineno + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad("expected key=value"))?;
        let (key, value) = (key.trim(), value.trim());
        macro_rules! set {
            ($field:ident) => {
                config.$field = value.parse().map_err(|_| bad("invalid value"))?
            };
        }
        match key {
            "epochs" => set!(epochs),
            "lr" => set!(lr),
            "lr_drop_epoch" => set!(lr_drop_epoch),
            "lr_drop_factor" => set!(lr_drop_factor),
            "batch_size" => set!(batch_size),
            "seed" => set!(seed),
            "split_fraction" => set!(split_fraction),
            "augment" => set!(augment),
            "k" => set!(k),
            "hidden" => set!(hidden_per_dir),
            "dropout" => set!(dropout),
            "grad_clip" => {
                config.grad_clip = Some(value.parse().map_err(|_| bad("invalid value"))?)
            }
            "single_rnn" => set!(single_rnn),
            "separate" => set!(separate),
            "no_durations" => set!(no_durations),
            "unidirectional" => set!(unidirectional),
            _ => return Err(bad(&format!("unknown key {key:?}"))),
        }
    }
    Ok(())
}

fn cmd_infer(args: InferArgs) -> Result<(), AppError> {
    let piece = load_midi(&args.midi)?;
    if piece.notes.is_empty() {
        return Err(AppError::Input(format!(
            "{}: no notes to spell",
            args.midi.display()
        )));
    }
    let params = load_weights(&args.weights)?;
    let opts = PredictOptions {
        constrain_to_enharmonics: args.constrain,
    };
    let (tpcs, keys) = predict(&piece, &params, &opts).map_err(AppError::internal)?;
    let global = if args.duration_weighted_ks {
        let weights: Vec<f64> = piece.notes.iter().map(|n| n.duration).collect();
        global_key_signature_weighted(&keys, &weights)
    } else {
        global_key_signature(&keys)
    }
    .map_err(AppError::internal)?;
    let bytes =
        write_predictions(&piece, &tpcs, &keys, Some(global)).map_err(AppError::internal)?;
    write_output(args.output.as_deref(), &bytes)
}

fn cmd_eval(args: EvalArgs) -> Result<(), AppError> {
    let corpus = load_corpus(&args.corpus)?;
    if corpus.is_empty() {
        return Err(AppError::Input(format!(
            "{}: corpus is empty",
            args.corpus.display()
        )));
    }
    let params = load_weights(&args.weights)?;
    let opts = EvalOptions {
        group_by: match args.group_by {
            GroupKey::Composer => GroupBy::Composer,
            GroupKey::Id => GroupBy::PieceId,
        },
        duration_weighted_ks: args.duration_weighted_ks,
    };
    let report = evaluate(&corpus, &params, &opts).map_err(AppError::input)?;
    write_output(None, report.render_table().as_bytes())
}

fn cmd_augment(args: AugmentArgs) -> Result<(), AppError> {
    let corpus = load_corpus(&args.corpus)?;
    let mut extended = Vec::with_capacity(corpus.len() * 12);
    for piece in &corpus {
        extended.push(piece.clone());
        extended.extend(pkspell::augment::augment(piece));
    }
    let mut bytes = Vec::new();
    write_corpus(&extended, &mut bytes).map_err(AppError::internal)?;
    log::info!("{} pieces in, {} pieces out", corpus.len(), extended.len());
    write_output(args.output.as_deref(), &bytes)
}

fn cmd_quantize(args: QuantizeArgs, k: Option<usize>) -> Result<(), AppError> {
    let piece = load_midi(&args.midi)?;
    if piece.notes.is_empty() {
        return Err(AppError::Input(format!(
            "{}: no notes to quantize",
            args.midi.display()
        )));
    }
    let k = k.unwrap_or(4);
    if k == 0 {
        return Err(AppError::Input("k must be at least 1".into()));
    }
    let durations: Vec<f64> = piece.notes.iter().map(|n| n.duration).collect();
    let clustering = quantize_durations(&durations, k).map_err(AppError::input)?;
    let mut out = String::new();
    out.push_str("centroids (seconds):");
    for c in &clustering.centroids {
        out.push_str(&format!(" {c:.6}"));
    }
    out.push('\n');
    for (note, class) in piece.notes.iter().zip(&clustering.assignment) {
        out.push_str(&format!(
            "onset {:.6} pitch {:3} duration {:.6} class {}\n",
            note.onset,
            note.pitch,
            note.duration,
            class.index()
        ));
    }
    write_output(None, out.as_bytes())
}
