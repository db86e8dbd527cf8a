//! `depscreen`: command-line front end for corpus preparation, survey
//! scoring, augmentation, feature extraction, training, evaluation and the
//! full pipeline.
//!
//! Exit status is 0 on success, 1 on a validation or runtime failure (with a
//! one-line JSON error on stderr) and 2 on a usage error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use depscreen::augment::{run_plan, AugmentError, AugmentPlan};
use depscreen::config::{ConfigError, PipelineConfig};
use depscreen::corpus::{
    load_manifest, split, summarize, synth_corpus, write_manifest, CorpusError, ManifestEntry, Split, SplitSpec, SplitUnit, SynthOptions,
};
use depscreen::eval::{export_report, EvalError, EvalReport};
use depscreen::features::{write_container, write_csv, FeatureError};
use depscreen::kv::KvError;
use depscreen::nn::{load_model, save_model, History, NnError};
use depscreen::pipeline::{entries_in, extract_features, load_features, pipeline_all, train_on_splits, FeatureSettings, PipelineError};
use depscreen::surveys::{score, Instrument, SurveyError, SurveyResponse};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "depscreen", version, about = "Speech-based depression screening toolkit")]
struct Cli {
    /// Log verbosity on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate, split and summarise corpus manifests.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Score questionnaire responses.
    #[command(subcommand)]
    Survey(SurveyCmd),
    /// Augment training clips.
    #[command(subcommand)]
    Augment(AugmentCmd),
    /// Extract 178-wide feature vectors.
    #[command(subcommand)]
    Features(FeaturesCmd),
    /// Train the CNN on the train split, validating on the val split.
    Train(TrainArgs),
    /// Evaluate a trained model and export the report.
    Eval(EvalArgs),
    /// Run every stage end to end.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
}

#[derive(Debug, Subcommand)]
enum CorpusCmd {
    /// Write a synthetic class-correlated corpus (44 clips per participant).
    Synth {
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = depscreen::audio::CANONICAL_SAMPLE_RATE)]
        sample_rate: u32,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign train/val/test splits and write `<out>/manifest.csv`.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = Unit::Utterance)]
        unit: Unit,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 0.64)]
        train: f64,
        #[arg(long, default_value_t = 0.16)]
        val: f64,
        #[arg(long, default_value_t = 0.20)]
        test: f64,
        /// Split the whole corpus at once instead of per label band.
        #[arg(long)]
        no_stratify: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the participant-level survey distribution.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Unit {
    Utterance,
    Participant,
}

#[derive(Debug, Subcommand)]
enum SurveyCmd {
    /// Score one response (`--answers`) or a CSV of responses (`--csv`), one JSON line each.
    #[command(group(ArgGroup::new("input").required(true).args(["answers", "csv"])))]
    Score {
        /// phq9, gad7, panas or stai_t.
        #[arg(long)]
        instrument: String,
        /// Comma-separated item values.
        #[arg(long)]
        answers: Option<String>,
        /// CSV with a header row; an optional `id` column is echoed, the rest are items in order.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum AugmentCmd {
    /// Augment train-split (or unsplit) clips and write `<out>/manifest.csv`.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        /// key = value plan file (noise_factor, stretch_rate, shift_max_ms, pitch_semitones, augment_ops, copies_per_clip, seed).
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum FeaturesCmd {
    /// Write `<out>/features.psdf` for every manifest row.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Also write `<out>/features.csv`.
        #[arg(long)]
        csv: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Shared configuration flags; precedence is file, then `--set`, then dedicated flags.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any configuration key.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    set: Vec<(String, String)>,
    /// Master seed for every random stream.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for audio processing (results do not depend on it).
    #[arg(long)]
    jobs: Option<usize>,
}

fn parse_override(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

impl ConfigArgs {
    fn load(&self, extra: Vec<(&str, Option<String>)>) -> Result<PipelineConfig, Failure> {
        let mut overrides = self.set.clone();
        let flags = [("seed", self.seed.map(|s| s.to_string())), ("jobs", self.jobs.map(|j| j.to_string()))];
        for (k, v) in flags.into_iter().chain(extra) {
            if let Some(v) = v {
                overrides.push((k.to_string(), v));
            }
        }
        Ok(PipelineConfig::load(self.config.as_deref(), &overrides)?)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Writes `model.psnn` and `history.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EvalSplit {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalSplit::Test)]
    split: EvalSplit,
    /// history.csv to chart alongside the matrices.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum PipelineCmd {
    /// Run every stage in order into one output directory.
    All {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for every artifact of the run.
        #[arg(long)]
        out: PathBuf,
    },
}

/// A failed command: category plus human-readable message.
#[derive(Debug)]
struct Failure {
    kind: &'static str,
    message: String,
}

impl Failure {
    fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Failure { kind, message: message.into() }
    }

    fn to_json_line(&self) -> String {
        json!({ "error": self.kind, "message": self.message }).to_string()
    }
}

macro_rules! failure_from {
    ($($ty:ty => $kind:literal),* $(,)?) => {
        $(impl From<$ty> for Failure {
            fn from(e: $ty) -> Self {
                Failure::new($kind, e.to_string())
            }
        })*
    };
}

failure_from! {
    ConfigError => "config",
    KvError => "config",
    CorpusError => "corpus",
    SurveyError => "survey",
    AugmentError => "augment",
    FeatureError => "features",
    NnError => "model",
    EvalError => "eval",
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::new(e.kind(), e.to_string())
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new("io", format!("{}: {e}", path.display()))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn manifest_dir(manifest: &Path) -> Result<PathBuf, Failure> {
    let dir = manifest.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    dir.canonicalize().map_err(|e| io_failure(dir, e))
}

/// Rewrites audio paths so the entries resolve from `to` instead of `from`.
/// Paths stay relative when both directories are the same.
fn rebase(entries: &mut [ManifestEntry], from: &Path, to: &Path) -> Result<(), Failure> {
    let to = to.canonicalize().map_err(|e| io_failure(to, e))?;
    if to != from {
        for e in entries {
            e.audio_path = e.resolve_audio(from).display().to_string();
        }
    }
    Ok(())
}

fn print_json(value: serde_json::Value) {
    emit(&format!("{value}\n"));
}

/// Writes to stdout; a reader that closed the pipe early (`| head`) ends the process quietly.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("{}", Failure { kind: "io", message: format!("stdout: {e}") }.to_json_line());
        std::process::exit(1);
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Corpus(cmd) => corpus(cmd),
        Command::Survey(SurveyCmd::Score { instrument, answers, csv }) => survey_score(&instrument, answers, csv),
        Command::Augment(AugmentCmd::Run { manifest, plan, seed, jobs, out }) => {
            let mut plan = match plan {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| io_failure(&p, e))?;
                    AugmentPlan::parse(&text).map_err(|e| Failure::new("config", format!("{}: {e}", p.display())))?
                }
                None => AugmentPlan::default(),
            };
            if let Some(s) = seed {
                plan.seed = s;
            }
            let source = manifest_dir(&manifest)?;
            let mut entries = load_manifest(&manifest)?;
            create_dir(&out)?;
            let added = run_plan(&entries, &plan, &source, &out, "audio", jobs)?;
            rebase(&mut entries, &source, &out)?;
            let n = added.len();
            entries.extend(added);
            let path = out.join("manifest.csv");
            write_manifest(&path, &entries)?;
            print_json(json!({ "augmented": n, "manifest": path.display().to_string() }));
            Ok(())
        }
        Command::Features(FeaturesCmd::Extract { manifest, config, csv, out }) => {
            let cfg = config.load(vec![])?;
            let entries = load_manifest(&manifest)?;
            let records = extract_features(&entries, &manifest_dir(&manifest)?, &FeatureSettings::from(&cfg), cfg.jobs)?;
            create_dir(&out)?;
            let path = out.join("features.psdf");
            write_container(&path, &records)?;
            if csv {
                let csv_path = out.join("features.csv");
                let file = std::fs::File::create(&csv_path).map_err(|e| io_failure(&csv_path, e))?;
                write_csv(std::io::BufWriter::new(file), &records)?;
            }
            print_json(json!({ "vectors": records.len(), "features": path.display().to_string() }));
            Ok(())
        }
        Command::Train(args) => {
            let cfg = args.config.load(vec![
                ("epochs", args.epochs.map(|v| v.to_string())),
                ("learning_rate", args.learning_rate.map(|v| v.to_string())),
                ("batch_size", args.batch_size.map(|v| v.to_string())),
            ])?;
            let entries = load_manifest(&args.manifest)?;
            if !entries.iter().any(|e| e.split == Some(Split::Train)) {
                return Err(Failure::new(
                    "corpus",
                    format!("{} has no train-split rows; run `corpus split` first", args.manifest.display()),
                ));
            }
            let features = load_features(&args.features)?;
            let (model, history) = train_on_splits(&entries, &features, cfg.n_classes, &cfg.train)?;
            create_dir(&args.out)?;
            save_model(&model, args.out.join("model.psnn"))?;
            history.write_csv(args.out.join("history.csv"))?;
            let last = history.last().expect("at least one epoch");
            print_json(json!({
                "epochs": history.epochs.len(),
                "train_accuracy": last.train_accuracy,
                "val_accuracy": last.val_accuracy,
                "model": args.out.join("model.psnn").display().to_string(),
            }));
            Ok(())
        }
        Command::Eval(args) => {
            let model = load_model(&args.model)?;
            let entries = load_manifest(&args.manifest)?;
            let selected = match args.split {
                EvalSplit::Train => entries_in(&entries, Split::Train),
                EvalSplit::Val => entries_in(&entries, Split::Val),
                EvalSplit::Test => entries_in(&entries, Split::Test),
                EvalSplit::All => entries.iter().filter(|e| !e.is_augmented()).cloned().collect(),
            };
            let features = load_features(&args.features)?;
            let report = EvalReport::build(&model, &selected, &features)?;
            let history = args.history.as_deref().map(History::read_csv).transpose()?;
            export_report(&report, history.as_ref(), &args.out)?;
            print_json(json!({
                "accuracy": report.overall.accuracy,
                "binary_accuracy": report.binary_accuracy,
                "total": report.overall.matrix.total(),
            }));
            Ok(())
        }
        Command::Pipeline(PipelineCmd::All { config, out }) => {
            let cfg = config.load(vec![])?;
            let result = pipeline_all(&cfg, &out)?;
            print_json(json!({
                "out": out.display().to_string(),
                "test_accuracy": result.report.overall.accuracy,
                "binary_accuracy": result.report.binary_accuracy,
                "artifacts": result.artifacts.len(),
            }));
            Ok(())
        }
    }
}

fn corpus(cmd: CorpusCmd) -> Result<(), Failure> {
    match cmd {
        CorpusCmd::Synth { n, seed, sample_rate, jobs, out } => {
            let opts = SynthOptions { participants: n, seed, sample_rate_hz: sample_rate, jobs };
            let entries = synth_corpus(&opts, &out)?;
            print_json(json!({
                "participants": n,
                "utterances": entries.len(),
                "manifest": out.join("manifest.csv").display().to_string(),
            }));
        }
        CorpusCmd::Split { manifest, unit, seed, train, val, test, no_stratify, out } => {
            let unit = match unit {
                Unit::Utterance => SplitUnit::Utterance,
                Unit::Participant => SplitUnit::Participant,
            };
            let spec = SplitSpec { train, val, test, unit, seed, stratify: !no_stratify };
            let source = manifest_dir(&manifest)?;
            let mut entries = split(&load_manifest(&manifest)?, &spec)?;
            create_dir(&out)?;
            rebase(&mut entries, &source, &out)?;
            let path = out.join("manifest.csv");
            write_manifest(&path, &entries)?;
            let count = |s| entries.iter().filter(|e| e.split == Some(s)).count();
            print_json(json!({
                "train": count(Split::Train),
                "val": count(Split::Val),
                "test": count(Split::Test),
                "manifest": path.display().to_string(),
            }));
        }
        CorpusCmd::Stats { manifest, json } => {
            let report = summarize(&load_manifest(&manifest)?);
            if json {
                print_json(serde_json::to_value(&report).expect("report serializes"));
            } else {
                emit(&report.to_string());
            }
        }
    }
    Ok(())
}

fn parse_items(text: &str) -> Result<Vec<i64>, String> {
    text.split(',').map(str::trim).map(|v| v.parse::<i64>().map_err(|_| format!("item `{v}` is not an integer"))).collect()
}

fn survey_score(instrument: &str, answers: Option<String>, csv_path: Option<PathBuf>) -> Result<(), Failure> {
    let instrument: Instrument = instrument.parse()?;
    let score_items = |items: &[i64]| -> Result<serde_json::Value, Failure> {
        let s = score(&SurveyResponse::new(instrument, items)?)?;
        Ok(serde_json::to_value(s).expect("score serializes"))
    };
    if let Some(answers) = answers {
        let items = parse_items(&answers).map_err(|m| Failure::new("survey", m))?;
        print_json(score_items(&items)?);
        return Ok(());
    }
    let path = csv_path.expect("clap requires --answers or --csv");
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(&path).map_err(|e| io_failure(&path, e))?;
    let has_id = reader.headers().map_err(|e| io_failure(&path, e))?.get(0) == Some("id");
    let mut lines = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| io_failure(&path, e))?;
        let at_row = |m: String| Failure::new("survey", format!("{} row {}: {m}", path.display(), row + 2));
        let skip = usize::from(has_id);
        let items = record
            .iter()
            .skip(skip)
            .map(|v| v.parse::<i64>().map_err(|_| format!("item `{v}` is not an integer")))
            .collect::<Result<Vec<_>, _>>()
            .map_err(at_row)?;
        let mut value = score_items(&items).map_err(|f| at_row(f.message))?;
        if has_id {
            value["id"] = json!(record.get(0).unwrap_or_default());
        }
        lines.push(value);
    }
    lines.into_iter().for_each(print_json);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).target(env_logger::Target::Stderr).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json_line());
            ExitCode::from(1)
        }
    }
}
