//! Pipeline configuration as a flat `key = value` file.
//!
//! Every key is optional and defaults to the value used by the owning module.
//! Unknown keys and invalid values are rejected when the file is parsed.

use std::fmt::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::audio::CANONICAL_SAMPLE_RATE;
use crate::augment::{AugmentOp, AugmentPlan};
use crate::corpus::{SplitSpec, SplitUnit, MIN_SYNTH_PARTICIPANTS};
use crate::features::{FrameConfig, MelConfig, N_MELS};
use crate::kv::{KvError, KvMap};
use crate::nn::{ModelSpec, TrainConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Syntax(#[from] KvError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Drives synthesis, splitting, augmentation, initialisation, shuffling and dropout.
    pub seed: u64,
    pub jobs: usize,
    pub sample_rate_hz: u32,
    pub frame: FrameConfig,
    pub mel: MelConfig,
    /// Existing corpus manifest; when absent a synthetic corpus is generated.
    pub manifest: Option<PathBuf>,
    pub synth_participants: usize,
    pub split: SplitSpec,
    pub augment: bool,
    pub plan: AugmentPlan,
    pub n_classes: usize,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::from_kv(KvMap::default()).expect("defaults are valid")
    }
}

fn invalid(e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_kv(KvMap::parse(text)?)
    }

    /// Reads `path` (if given), applies `overrides` on top, then validates.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut kv = match path {
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).map_err(|e| ConfigError::Io { path: p.display().to_string(), message: e.to_string() })?;
                KvMap::parse(&text)?
            }
            None => KvMap::default(),
        };
        for (k, v) in overrides {
            kv.set(k, v.clone());
        }
        let mut cfg = Self::from_kv(kv)?;
        // a relative manifest path is relative to the config file
        if let (Some(m), Some(dir)) = (&cfg.manifest, path.and_then(Path::parent)) {
            if m.is_relative() && !overrides.iter().any(|(k, _)| k == "manifest") {
                cfg.manifest = Some(dir.join(m));
            }
        }
        Ok(cfg)
    }

    pub fn from_kv(mut kv: KvMap) -> Result<Self, ConfigError> {
        let seed = kv.take_or("seed", 42u64)?;
        let jobs = kv.take_or("jobs", 1usize)?;
        let sample_rate_hz = kv.take_or("sample_rate", CANONICAL_SAMPLE_RATE)?;
        let frame_length = kv.take_or("frame_length", 2048usize)?;
        let frame = FrameConfig {
            frame_length,
            hop_length: kv.take_or("hop_length", 512usize)?,
            fft_size: kv.take_or("fft_size", frame_length)?,
            center: kv.take_or("center", true)?,
        };
        let mel = MelConfig { n_mels: kv.take_or("n_mels", N_MELS)?, fmin: kv.take_or("fmin", 0.0)?, fmax: kv.take("fmax")? };
        let manifest = kv.take::<String>("manifest")?.map(PathBuf::from);
        let synth_participants = kv.take_or("synth_participants", 32usize)?;
        let split = SplitSpec {
            train: kv.take_or("split_train", 0.64)?,
            val: kv.take_or("split_val", 0.16)?,
            test: kv.take_or("split_test", 0.20)?,
            unit: kv.take_or("split_unit", SplitUnit::Utterance)?,
            seed,
            stratify: kv.take_or("stratify", true)?,
        };
        let augment = kv.take_or("augment", true)?;
        let plan = AugmentPlan { seed, ..AugmentPlan::take_from(&mut kv).map_err(invalid)? };
        let n_classes = kv.take_or("classes", crate::nn::DEFAULT_CLASSES)?;
        let defaults = TrainConfig::default();
        let train = TrainConfig {
            batch_size: kv.take_or("batch_size", defaults.batch_size)?,
            epochs: kv.take_or("epochs", defaults.epochs)?,
            learning_rate: kv.take_or("learning_rate", defaults.learning_rate)?,
            momentum: kv.take_or("momentum", defaults.momentum)?,
            plateau_patience: kv.take_or("plateau_patience", defaults.plateau_patience)?,
            plateau_factor: kv.take_or("plateau_factor", defaults.plateau_factor)?,
            min_learning_rate: kv.take_or("min_learning_rate", defaults.min_learning_rate)?,
            seed,
            standardize: kv.take_or("standardize", defaults.standardize)?,
        };
        kv.finish()?;

        let cfg =
            PipelineConfig { seed, jobs, sample_rate_hz, frame, mel, manifest, synth_participants, split, augment, plan, n_classes, train };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.sample_rate_hz == 0 {
            return Err(invalid("sample_rate must be positive"));
        }
        if self.jobs == 0 {
            return Err(invalid("jobs must be >= 1"));
        }
        self.frame.validate().map_err(invalid)?;
        if self.mel.n_mels != N_MELS {
            return Err(invalid(format!("n_mels must be {N_MELS} for the 178-wide layout, got {}", self.mel.n_mels)));
        }
        let nyquist = self.sample_rate_hz as f64 / 2.0;
        let fmax = self.mel.fmax.unwrap_or(nyquist);
        if !(self.mel.fmin >= 0.0 && self.mel.fmin < fmax && fmax <= nyquist) {
            return Err(invalid(format!("mel range {}..{fmax} Hz must lie within 0..{nyquist}", self.mel.fmin)));
        }
        if self.manifest.is_none() && self.synth_participants < MIN_SYNTH_PARTICIPANTS {
            return Err(invalid(format!("synth_participants must be >= {MIN_SYNTH_PARTICIPANTS}, got {}", self.synth_participants)));
        }
        self.split.validate().map_err(invalid)?;
        self.plan.validate().map_err(invalid)?;
        ModelSpec::new(self.n_classes).map_err(invalid)?;
        self.train.validate().map_err(invalid)?;
        Ok(())
    }

    /// The resolved configuration in the same `key = value` grammar.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("seed", self.seed.to_string());
        put("jobs", self.jobs.to_string());
        put("sample_rate", self.sample_rate_hz.to_string());
        put("frame_length", self.frame.frame_length.to_string());
        put("hop_length", self.frame.hop_length.to_string());
        put("fft_size", self.frame.fft_size.to_string());
        put("center", self.frame.center.to_string());
        put("n_mels", self.mel.n_mels.to_string());
        put("fmin", self.mel.fmin.to_string());
        if let Some(f) = self.mel.fmax {
            put("fmax", f.to_string());
        }
        if let Some(m) = &self.manifest {
            put("manifest", m.display().to_string());
        }
        put("synth_participants", self.synth_participants.to_string());
        put("split_train", self.split.train.to_string());
        put("split_val", self.split.val.to_string());
        put("split_test", self.split.test.to_string());
        put("split_unit", self.split.unit.to_string());
        put("stratify", self.split.stratify.to_string());
        put("augment", self.augment.to_string());
        let mut seen = std::collections::BTreeSet::new();
        for op in self.plan.ops.iter().filter(|op| seen.insert(op.name())) {
            match *op {
                AugmentOp::Noise { factor } => put("noise_factor", factor.to_string()),
                AugmentOp::Stretch { rate } => put("stretch_rate", rate.to_string()),
                AugmentOp::Shift { max_ms } => put("shift_max_ms", max_ms.to_string()),
                AugmentOp::Pitch { semitones } => put("pitch_semitones", semitones.to_string()),
            }
        }
        put("augment_ops", self.plan.ops.iter().map(AugmentOp::name).collect::<Vec<_>>().join(","));
        put("copies_per_clip", self.plan.copies_per_clip.to_string());
        put("classes", self.n_classes.to_string());
        put("batch_size", self.train.batch_size.to_string());
        put("epochs", self.train.epochs.to_string());
        put("learning_rate", self.train.learning_rate.to_string());
        put("momentum", self.train.momentum.to_string());
        put("plateau_patience", self.train.plateau_patience.to_string());
        put("plateau_factor", self.train.plateau_factor.to_string());
        put("min_learning_rate", self.train.min_learning_rate.to_string());
        put("standardize", self.train.standardize.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_module_defaults() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.frame, FrameConfig::default());
        assert_eq!(cfg.mel, MelConfig::default());
        assert_eq!(cfg.train, TrainConfig { seed: 42, ..TrainConfig::default() });
        assert_eq!(cfg.plan, AugmentPlan { seed: 42, ..AugmentPlan::default() });
        assert_eq!(cfg.split, SplitSpec { seed: 42, ..SplitSpec::default() });
        assert_eq!(cfg.sample_rate_hz, 22050);
    }

    #[test]
    fn seed_propagates_and_round_trips() {
        let cfg = PipelineConfig::parse("seed = 7\nepochs = 3 # short\naugment_ops = noise\n").unwrap();
        assert_eq!((cfg.train.seed, cfg.plan.seed, cfg.split.seed), (7, 7, 7));
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(PipelineConfig::parse(&cfg.to_kv_string()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(PipelineConfig::parse("colour = red"), Err(ConfigError::Syntax(KvError::UnknownKey(_)))));
        let err = PipelineConfig::parse("split_train = 0.9\nsplit_val = 0.2\nsplit_test = 0.2").unwrap_err();
        assert!(err.to_string().contains("sum"), "{err}");
        assert!(PipelineConfig::parse("n_mels = 64").is_err());
        assert!(PipelineConfig::parse("batch_size = 0").is_err());
        assert!(PipelineConfig::parse("epochs = many").is_err());
        assert!(PipelineConfig::parse("hop_length = 4096").is_err());
        assert!(PipelineConfig::parse("classes = 1").is_err());
        assert!(PipelineConfig::parse("synth_participants = 3").is_err());
        assert!(PipelineConfig::parse("synth_participants = 3\nmanifest = m.csv").is_ok());
    }

    #[test]
    fn overrides_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        std::fs::write(&path, "seed = 1\nmanifest = data/m.csv\n").unwrap();
        let cfg = PipelineConfig::load(Some(&path), &[("seed".into(), "9".into())]).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.manifest, Some(dir.path().join("data/m.csv")));
    }
}
