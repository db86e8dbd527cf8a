//! End-to-end orchestration: corpus, split, augmentation of the training
//! split, feature extraction, training, evaluation and report export.
//!
//! Everything is written beneath one output directory, and with a fixed seed
//! every produced file is byte-identical across runs and `jobs` settings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Serialize;
use thiserror::Error;

use crate::audio::{read_wav_resampled, AudioError};
use crate::augment::{run_plan, AugmentError};
use crate::config::{ConfigError, PipelineConfig};
use crate::corpus::{load_manifest, split, synth_corpus, write_manifest, CorpusError, ManifestEntry, Split, SynthOptions};
use crate::eval::{export_report, EvalError, EvalReport};
use crate::features::{
    aggregate, read_vectors, write_container, FeatureError, FeatureExtractor, FeatureRecord, FeatureVector, FrameConfig, MelConfig,
    FEATURE_WIDTH,
};
use crate::nn::{save_model, train, Dataset, History, Model, ModelSpec, NnError, TrainConfig};
use crate::parallel::map_ordered;
use crate::seeding::sha256_hex;

pub const AUGMENTED_DIR: &str = "augmented";
pub const REPORT_DIR: &str = "report";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error("extracting features from {path}: {source}")]
    Extraction {
        path: String,
        #[source]
        source: FeatureError,
    },
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl PipelineError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Corpus(_) => "corpus",
            PipelineError::Augment(_) => "augment",
            PipelineError::Extraction { .. } | PipelineError::Features(_) => "features",
            PipelineError::Nn(_) => "model",
            PipelineError::Eval(_) => "eval",
            PipelineError::Invalid(_) => "invalid",
            PipelineError::Io { .. } => "io",
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io { path: path.display().to_string(), message: e.to_string() }
}

/// Audio decoding and framing settings shared by every extracted clip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureSettings {
    pub sample_rate_hz: u32,
    pub frame: FrameConfig,
    pub mel: MelConfig,
}

impl From<&PipelineConfig> for FeatureSettings {
    fn from(cfg: &PipelineConfig) -> Self {
        FeatureSettings { sample_rate_hz: cfg.sample_rate_hz, frame: cfg.frame, mel: cfg.mel }
    }
}

/// Loads, resamples and summarises every entry's audio into one 178-wide vector.
pub fn extract_features(
    entries: &[ManifestEntry],
    base_dir: &Path,
    settings: &FeatureSettings,
    jobs: usize,
) -> Result<Vec<FeatureRecord>, PipelineError> {
    FeatureExtractor::<f64>::new(settings.frame, settings.mel, settings.sample_rate_hz)?;
    map_ordered(jobs, entries, |entry| {
        let path = entry.resolve_audio(base_dir);
        let fail = |source: FeatureError| PipelineError::Extraction { path: path.display().to_string(), source };
        let clip = read_wav_resampled::<f64>(&path, settings.sample_rate_hz).map_err(|e: AudioError| fail(FeatureError::Audio(e)))?;
        let mut extractor = FeatureExtractor::new(settings.frame, settings.mel, settings.sample_rate_hz).map_err(fail)?;
        let matrix = extractor.extract(&clip).map_err(fail)?;
        Ok(FeatureRecord::from_vector(entry.utterance_id(), &aggregate(&matrix).map_err(fail)?))
    })
}

/// Feature rows and band labels for `entries`, in entry order.
pub fn labelled_dataset(
    entries: &[ManifestEntry],
    features: &BTreeMap<String, FeatureVector<f64>>,
    n_classes: usize,
) -> Result<Dataset<f64>, PipelineError> {
    let mut x = Array2::zeros((entries.len(), FEATURE_WIDTH));
    let mut y = Vec::with_capacity(entries.len());
    for (i, e) in entries.iter().enumerate() {
        let id = e.utterance_id();
        let v = features.get(&id).ok_or_else(|| EvalError::MissingFeatures(id.clone()))?;
        let label = e.label_band.index();
        if label >= n_classes {
            return Err(EvalError::ClassMismatch { utterance: id, label: e.label_band.to_string(), classes: n_classes }.into());
        }
        x.row_mut(i).assign(&ndarray::ArrayView1::from(v.values()));
        y.push(label);
    }
    Ok(Dataset::new(x, y)?)
}

pub fn entries_in(entries: &[ManifestEntry], which: Split) -> Vec<ManifestEntry> {
    entries.iter().filter(|e| e.split == Some(which)).cloned().collect()
}

/// Trains a fresh model on the train split, monitoring the validation split.
pub fn train_on_splits(
    entries: &[ManifestEntry],
    features: &BTreeMap<String, FeatureVector<f64>>,
    n_classes: usize,
    cfg: &TrainConfig,
) -> Result<(Model<f64>, History), PipelineError> {
    let train_set = labelled_dataset(&entries_in(entries, Split::Train), features, n_classes)?;
    let val_set = labelled_dataset(&entries_in(entries, Split::Val), features, n_classes)?;
    log::info!("training on {} rows, validating on {}", train_set.len(), val_set.len());
    let mut model = Model::new(ModelSpec::new(n_classes)?, cfg.seed);
    let history = train(&mut model, &train_set, Some(&val_set), cfg)?;
    Ok((model, history))
}

pub fn vectors_from_records(records: &[FeatureRecord]) -> Result<BTreeMap<String, FeatureVector<f64>>, PipelineError> {
    records.iter().map(|r| Ok((r.utterance_id.clone(), r.to_vector()?))).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Artifact {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), PipelineError> {
    let mut children: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .map(|d| d.map(|d| d.path()))
        .collect::<Result<_, _>>()
        .map_err(|e| io_err(dir, e))?;
    children.sort();
    for child in children {
        if child.is_dir() {
            collect_files(&child, out)?;
        } else {
            out.push(child);
        }
    }
    Ok(())
}

/// Size and SHA-256 of every file under `root` except `artifacts.json`, sorted by path.
pub fn inventory(root: &Path) -> Result<Vec<Artifact>, PipelineError> {
    let mut files = Vec::new();
    collect_files(root, &mut files)?;
    let mut out = Vec::new();
    for f in files {
        let rel = f.strip_prefix(root).expect("under root");
        let path = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        if path == "artifacts.json" {
            continue;
        }
        let bytes = std::fs::read(&f).map_err(|e| io_err(&f, e))?;
        out.push(Artifact { path, bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) });
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub out_dir: PathBuf,
    pub report: EvalReport,
    pub history: History,
    pub artifacts: Vec<Artifact>,
}

/// Runs every stage and writes, under `out_dir`:
/// `config.cfg`, `corpus/` (when synthesised), `augmented/`, `manifest.csv`,
/// `features.psdf`, `model.psnn`, `history.csv`, `report/` and `artifacts.json`.
pub fn pipeline_all(cfg: &PipelineConfig, out_dir: &Path) -> Result<PipelineOutput, PipelineError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let write = |name: &str, contents: &str| -> Result<(), PipelineError> {
        let p = out_dir.join(name);
        std::fs::write(&p, contents).map_err(|e| io_err(&p, e))
    };
    write("config.cfg", &cfg.to_kv_string())?;

    // Every manifest path ends up relative to out_dir, or absolute for external corpora.
    let mut entries = match &cfg.manifest {
        Some(manifest) => {
            log::info!("loading manifest {}", manifest.display());
            let base = manifest.parent().unwrap_or(Path::new("."));
            let base = base.canonicalize().map_err(|e| io_err(base, e))?;
            let mut entries = load_manifest(manifest)?;
            for e in &mut entries {
                e.audio_path = e.resolve_audio(&base).display().to_string();
            }
            entries
        }
        None => {
            log::info!("synthesising {} participants", cfg.synth_participants);
            let opts =
                SynthOptions { participants: cfg.synth_participants, seed: cfg.seed, sample_rate_hz: cfg.sample_rate_hz, jobs: cfg.jobs };
            let mut entries = synth_corpus(&opts, &out_dir.join("corpus"))?;
            for e in &mut entries {
                e.audio_path = format!("corpus/{}", e.audio_path);
            }
            entries
        }
    };
    entries.retain(|e| !e.is_augmented());
    let mut entries = split(&entries, &cfg.split)?;

    if cfg.augment {
        let added = run_plan(&entries, &cfg.plan, out_dir, out_dir, AUGMENTED_DIR, cfg.jobs)?;
        log::info!("augmentation added {} training clips", added.len());
        entries.extend(added);
    }
    write_manifest(out_dir.join("manifest.csv"), &entries)?;

    log::info!("extracting features from {} clips", entries.len());
    let records = extract_features(&entries, out_dir, &FeatureSettings::from(cfg), cfg.jobs)?;
    write_container(out_dir.join("features.psdf"), &records)?;
    let features = vectors_from_records(&records)?;

    let (model, history) = train_on_splits(&entries, &features, cfg.n_classes, &cfg.train)?;
    save_model(&model, out_dir.join("model.psnn"))?;
    history.write_csv(out_dir.join("history.csv"))?;

    let test = entries_in(&entries, Split::Test);
    let report = EvalReport::build(&model, &test, &features)?;
    export_report(&report, Some(&history), &out_dir.join(REPORT_DIR))?;
    log::info!(
        "test accuracy {:.4} over {} clips (binary {:.4})",
        report.overall.accuracy,
        report.overall.matrix.total(),
        report.binary_accuracy
    );

    let artifacts = inventory(out_dir)?;
    let json = serde_json::to_string_pretty(&artifacts).expect("artifacts serialize") + "\n";
    write("artifacts.json", &json)?;
    Ok(PipelineOutput { out_dir: out_dir.to_path_buf(), report, history, artifacts })
}

/// Reads a feature container as `utterance id -> vector`.
pub fn load_features(path: &Path) -> Result<BTreeMap<String, FeatureVector<f64>>, PipelineError> {
    Ok(read_vectors(path)?)
}
