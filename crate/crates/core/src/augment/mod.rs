//! Training-set augmentation: additive noise, time-scale modification,
//! time shifting and pitch shifting.
//!
//! Every operator is a pure function of its input, parameters and RNG. The
//! plan runner seeds one generator per (plan seed, utterance, copy), so
//! outputs do not depend on processing order or thread count.

mod vocoder;

use std::fmt;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

pub use vocoder::{STRETCH_FRAME, STRETCH_HOP};

use crate::audio::{read_wav, resample_to_len, write_wav, AudioClip, AudioError, ResampleMethod, WavEncoding};
use crate::corpus::{ManifestEntry, Split};
use crate::kv::{KvError, KvMap};
use crate::parallel::map_ordered;
use crate::scalar::Scalar;
use crate::seeding::rng_for;

pub const DEFAULT_NOISE_FACTOR: f64 = 0.035;
pub const DEFAULT_STRETCH_RATE: f64 = 0.8;
pub const DEFAULT_SHIFT_MAX_MS: f64 = 100.0;
pub const DEFAULT_PITCH_SEMITONES: f64 = 2.0;
pub const MAX_PITCH_SEMITONES: f64 = 24.0;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("clip of {len} samples is shorter than the {needed}-sample analysis frame")]
    ClipTooShort { len: usize, needed: usize },
    #[error("shift of {shift} samples does not fit a {len}-sample clip")]
    ShiftExceedsClip { shift: usize, len: usize },
    #[error("invalid augmentation parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Plan(#[from] KvError),
    #[error("augmenting {path}: {source}")]
    Audio {
        path: String,
        #[source]
        source: AudioError,
    },
    #[error("augmentation I/O failure: {0}")]
    Io(String),
}

/// Adds `factor * peak * U(-1, 1)` noise to every sample, clamping to `[-1, 1]`.
pub fn add_noise<T: Scalar, R: Rng>(clip: &AudioClip<T>, factor: f64, rng: &mut R) -> Result<AudioClip<T>, AugmentError> {
    if !(factor >= 0.0 && factor.is_finite()) {
        return Err(AugmentError::InvalidParameter(format!("noise factor {factor} must be >= 0")));
    }
    if factor == 0.0 {
        return Ok(clip.clone());
    }
    let amplitude = factor * clip.peak().as_f64();
    let samples = clip.samples().iter().map(|&s| s + T::of(amplitude * rng.gen_range(-1.0..1.0))).collect();
    Ok(clip.with_samples(samples).expect("length and rate unchanged"))
}

/// Phase-vocoder time-scale modification: `rate > 1` shortens, `rate < 1` lengthens,
/// pitch is preserved. Output length is `round(len / rate)`.
pub fn time_stretch<T: Scalar>(clip: &AudioClip<T>, rate: f64) -> Result<AudioClip<T>, AugmentError> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(AugmentError::InvalidParameter(format!("stretch rate {rate} must be > 0")));
    }
    if clip.len() < STRETCH_FRAME {
        return Err(AugmentError::ClipTooShort { len: clip.len(), needed: STRETCH_FRAME });
    }
    Ok(clip.with_samples(vocoder::phase_vocoder(clip.samples(), rate)).expect("non-empty output"))
}

/// Displaces content by `shift` samples (positive = later), zero-filling the vacated span.
pub fn shift_by<T: Scalar>(clip: &AudioClip<T>, shift: isize) -> Result<AudioClip<T>, AugmentError> {
    let n = clip.len();
    let magnitude = shift.unsigned_abs();
    if magnitude >= n {
        return Err(AugmentError::ShiftExceedsClip { shift: magnitude, len: n });
    }
    let x = clip.samples();
    let mut out = vec![T::zero(); n];
    if shift >= 0 {
        out[magnitude..].copy_from_slice(&x[..n - magnitude]);
    } else {
        out[..n - magnitude].copy_from_slice(&x[magnitude..]);
    }
    Ok(clip.with_samples(out).expect("length unchanged"))
}

/// Random shift drawn uniformly from `[-max_ms, +max_ms]` (rounded to whole samples).
pub fn time_shift<T: Scalar, R: Rng>(clip: &AudioClip<T>, max_ms: f64, rng: &mut R) -> Result<AudioClip<T>, AugmentError> {
    if !(max_ms >= 0.0 && max_ms.is_finite()) {
        return Err(AugmentError::InvalidParameter(format!("shift max_ms {max_ms} must be >= 0")));
    }
    let max_samples = (max_ms * clip.sample_rate_hz() as f64 / 1000.0).round() as usize;
    if max_samples >= clip.len() {
        return Err(AugmentError::ShiftExceedsClip { shift: max_samples, len: clip.len() });
    }
    let max = max_samples as isize;
    let shift = if max == 0 { 0 } else { rng.gen_range(-max..=max) };
    shift_by(clip, shift)
}

/// Moves every frequency by `2^(semitones/12)` keeping the length: the clip is
/// time-stretched to `len * 2^(semitones/12)` samples, then resampled back to `len`.
pub fn pitch_shift<T: Scalar>(clip: &AudioClip<T>, semitones: f64) -> Result<AudioClip<T>, AugmentError> {
    if !(-MAX_PITCH_SEMITONES..=MAX_PITCH_SEMITONES).contains(&semitones) {
        return Err(AugmentError::InvalidParameter(format!("pitch shift {semitones} outside +/-{MAX_PITCH_SEMITONES} semitones")));
    }
    if semitones == 0.0 {
        return Ok(clip.clone());
    }
    let ratio = 2f64.powf(semitones / 12.0);
    let stretched = time_stretch(clip, 1.0 / ratio)?;
    let samples = resample_to_len(stretched.samples(), clip.len(), ResampleMethod::Sinc);
    Ok(clip.with_samples(samples).expect("length unchanged"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentOp {
    Noise {
        factor: f64,
    },
    Stretch {
        rate: f64,
    },
    Shift {
        max_ms: f64,
    },
    /// Magnitude in semitones; the sign is drawn per copy.
    Pitch {
        semitones: f64,
    },
}

impl AugmentOp {
    pub fn name(&self) -> &'static str {
        match self {
            AugmentOp::Noise { .. } => "noise",
            AugmentOp::Stretch { .. } => "stretch",
            AugmentOp::Shift { .. } => "shift",
            AugmentOp::Pitch { .. } => "pitch",
        }
    }

    fn validate(&self) -> Result<(), AugmentError> {
        let ok = match *self {
            AugmentOp::Noise { factor } => factor >= 0.0 && factor.is_finite(),
            AugmentOp::Stretch { rate } => rate > 0.0 && rate.is_finite(),
            AugmentOp::Shift { max_ms } => max_ms >= 0.0 && max_ms.is_finite(),
            AugmentOp::Pitch { semitones } => semitones.abs() <= MAX_PITCH_SEMITONES,
        };
        if ok {
            Ok(())
        } else {
            Err(AugmentError::InvalidParameter(format!("{self:?}")))
        }
    }

    /// Applies the operator, returning the output and the filename tag `<op><param>`.
    pub fn apply<T: Scalar, R: Rng>(&self, clip: &AudioClip<T>, rng: &mut R) -> Result<(AudioClip<T>, String), AugmentError> {
        Ok(match *self {
            AugmentOp::Noise { factor } => (add_noise(clip, factor, rng)?, format!("noise{factor}")),
            AugmentOp::Stretch { rate } => (time_stretch(clip, rate)?, format!("stretch{rate}")),
            AugmentOp::Shift { max_ms } => (time_shift(clip, max_ms, rng)?, format!("shift{max_ms}")),
            AugmentOp::Pitch { semitones } => {
                let signed = if rng.gen_bool(0.5) { semitones } else { -semitones };
                (pitch_shift(clip, signed)?, format!("pitch{signed}"))
            }
        })
    }
}

impl fmt::Display for AugmentOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            AugmentOp::Noise { factor } => write!(f, "noise({factor})"),
            AugmentOp::Stretch { rate } => write!(f, "stretch({rate})"),
            AugmentOp::Shift { max_ms } => write!(f, "shift({max_ms} ms)"),
            AugmentOp::Pitch { semitones } => write!(f, "pitch(+/-{semitones} st)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPlan {
    pub ops: Vec<AugmentOp>,
    pub seed: u64,
    /// Outputs per source clip; copy `i` uses `ops[i % ops.len()]`.
    pub copies_per_clip: usize,
}

impl Default for AugmentPlan {
    fn default() -> Self {
        AugmentPlan {
            ops: vec![
                AugmentOp::Noise { factor: DEFAULT_NOISE_FACTOR },
                AugmentOp::Stretch { rate: DEFAULT_STRETCH_RATE },
                AugmentOp::Shift { max_ms: DEFAULT_SHIFT_MAX_MS },
                AugmentOp::Pitch { semitones: DEFAULT_PITCH_SEMITONES },
            ],
            seed: 0,
            copies_per_clip: 4,
        }
    }
}

impl AugmentPlan {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if self.ops.is_empty() {
            return Err(AugmentError::InvalidParameter("plan has no operators".into()));
        }
        if self.copies_per_clip == 0 {
            return Err(AugmentError::InvalidParameter("copies_per_clip must be >= 1".into()));
        }
        self.ops.iter().try_for_each(AugmentOp::validate)
    }

    /// Reads the operator keys (`noise_factor`, `stretch_rate`, `shift_max_ms`,
    /// `pitch_semitones`, `augment_ops`, `copies_per_clip`) from `kv`, leaving
    /// every other key in place. The seed is left at 0.
    pub fn take_from(kv: &mut KvMap) -> Result<Self, AugmentError> {
        let noise = kv.take_or("noise_factor", DEFAULT_NOISE_FACTOR)?;
        let stretch = kv.take_or("stretch_rate", DEFAULT_STRETCH_RATE)?;
        let shift = kv.take_or("shift_max_ms", DEFAULT_SHIFT_MAX_MS)?;
        let pitch = kv.take_or("pitch_semitones", DEFAULT_PITCH_SEMITONES)?;
        let names: String = kv.take_or("augment_ops", "noise,stretch,shift,pitch".to_string())?;
        let mut ops = Vec::new();
        for name in names.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            ops.push(match name {
                "noise" => AugmentOp::Noise { factor: noise },
                "stretch" => AugmentOp::Stretch { rate: stretch },
                "shift" => AugmentOp::Shift { max_ms: shift },
                "pitch" => AugmentOp::Pitch { semitones: pitch },
                other => return Err(AugmentError::InvalidParameter(format!("unknown operator `{other}`"))),
            });
        }
        let copies = kv.take_or("copies_per_clip", ops.len())?;
        let plan = AugmentPlan { ops, seed: 0, copies_per_clip: copies };
        plan.validate()?;
        Ok(plan)
    }

    /// Parses a standalone plan file (operator keys plus `seed`); unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self, AugmentError> {
        let mut kv = KvMap::parse(text)?;
        let seed = kv.take_or("seed", 0u64)?;
        let plan = AugmentPlan { seed, ..Self::take_from(&mut kv)? };
        kv.finish()?;
        Ok(plan)
    }

    /// `(op, file tag suffix)` used for copy `i`; a repeat of an op gets a `_<round>` suffix.
    fn op_for_copy(&self, i: usize) -> (&AugmentOp, String) {
        let round = i / self.ops.len();
        let suffix = if round == 0 { String::new() } else { format!("_{round}") };
        (&self.ops[i % self.ops.len()], suffix)
    }
}

/// Generates `copies_per_clip` augmented versions of one clip.
pub fn augment_clip<T: Scalar>(
    clip: &AudioClip<T>,
    utterance_id: &str,
    plan: &AugmentPlan,
) -> Result<Vec<(AudioClip<T>, String)>, AugmentError> {
    (0..plan.copies_per_clip)
        .map(|i| {
            let (op, suffix) = plan.op_for_copy(i);
            let mut rng = rng_for(plan.seed, &format!("augment/{utterance_id}/{i}"));
            let (out, tag) = op.apply(clip, &mut rng)?;
            Ok((out, format!("{tag}{suffix}")))
        })
        .collect()
}

/// Augments every original recording in the train split, or with no split
/// assigned. Validation and test recordings are never augmented.
///
/// Audio is read relative to `source_dir`; outputs are written as float32 WAV
/// to `out_dir/<audio_subdir>/<id>__<op><param>.wav`, and the returned rows
/// carry paths relative to `out_dir` plus the source's labels and split.
pub fn run_plan(
    entries: &[ManifestEntry],
    plan: &AugmentPlan,
    source_dir: &Path,
    out_dir: &Path,
    audio_subdir: &str,
    jobs: usize,
) -> Result<Vec<ManifestEntry>, AugmentError> {
    plan.validate()?;
    let target_dir = out_dir.join(audio_subdir);
    std::fs::create_dir_all(&target_dir).map_err(|e| AugmentError::Io(format!("{}: {e}", target_dir.display())))?;
    let sources: Vec<&ManifestEntry> =
        entries.iter().filter(|e| !e.is_augmented() && matches!(e.split, None | Some(Split::Train))).collect();

    let per_clip = map_ordered(jobs, &sources, |&entry| {
        let path = entry.resolve_audio(source_dir);
        let audio_err = |source| AugmentError::Audio { path: path.display().to_string(), source };
        let clip: AudioClip<f64> = read_wav(&path).map_err(audio_err)?;
        let id = entry.utterance_id();
        let mut rows = Vec::new();
        for (out, tag) in augment_clip(&clip, &id, plan)? {
            let rel = format!("{audio_subdir}/{id}__{tag}.wav");
            let dest = out_dir.join(&rel);
            write_wav(&out, &dest, WavEncoding::Float32)
                .map_err(|source| AugmentError::Audio { path: dest.display().to_string(), source })?;
            let mut row = entry.clone();
            row.audio_path = rel;
            row.augmented_from = Some(id.clone());
            rows.push(row);
        }
        Ok::<_, AugmentError>(rows)
    })?;
    Ok(per_clip.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sine(freq: f64, n: usize, amp: f64) -> AudioClip<f64> {
        let samples = (0..n).map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / 22050.0).sin()).collect();
        AudioClip::new(samples, 22050).unwrap()
    }

    #[test]
    fn zero_noise_is_identity_and_silence_stays_silent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let clip = sine(440.0, 3000, 0.8);
        assert_eq!(add_noise(&clip, 0.0, &mut rng).unwrap(), clip);
        let silent = AudioClip::new(vec![0.0f64; 500], 22050).unwrap();
        assert_eq!(add_noise(&silent, 0.5, &mut rng).unwrap(), silent);
        assert!(add_noise(&clip, -0.1, &mut rng).is_err());
    }

    #[test]
    fn noise_is_bounded_by_factor_times_peak() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let clip = sine(300.0, 20000, 1.0);
        let out = add_noise(&clip, 0.035, &mut rng).unwrap();
        assert_eq!(out.len(), clip.len());
        for (a, b) in out.samples().iter().zip(clip.samples()) {
            assert!((a - b).abs() <= 0.035 + 1e-15);
        }
    }

    #[test]
    fn forced_shift_zero_fills() {
        let clip = sine(200.0, 1000, 0.5);
        let out = shift_by(&clip, 37).unwrap();
        assert!(out.samples()[..37].iter().all(|&s| s == 0.0));
        assert_eq!(&out.samples()[37..], &clip.samples()[..1000 - 37]);
        let back = shift_by(&clip, -10).unwrap();
        assert_eq!(&back.samples()[..990], &clip.samples()[10..]);
        assert!(back.samples()[990..].iter().all(|&s| s == 0.0));
        assert!(matches!(shift_by(&clip, 1000), Err(AugmentError::ShiftExceedsClip { .. })));
    }

    #[test]
    fn zero_max_shift_is_identity() {
        let clip = sine(200.0, 1000, 0.5);
        assert_eq!(time_shift(&clip, 0.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap(), clip);
        assert!(time_shift(&clip, 1000.0, &mut ChaCha8Rng::seed_from_u64(3)).is_err());
    }

    #[test]
    fn stretch_lengths() {
        let clip = sine(440.0, 22050, 0.5);
        assert_eq!(time_stretch(&clip, 1.0).unwrap().len(), 22050);
        assert_eq!(time_stretch(&clip, 0.5).unwrap().len(), 44100);
        assert_eq!(time_stretch(&clip, 0.8).unwrap().len(), 27563);
        assert!(matches!(time_stretch(&sine(440.0, 1000, 0.5), 0.8), Err(AugmentError::ClipTooShort { .. })));
        assert!(time_stretch(&clip, 0.0).is_err());
    }

    #[test]
    fn pitch_shift_preserves_length() {
        let clip = sine(440.0, 9000, 0.5);
        for st in [-12.0, -2.0, 0.0, 2.0, 12.0] {
            assert_eq!(pitch_shift(&clip, st).unwrap().len(), 9000);
        }
        assert!(pitch_shift(&clip, 25.0).is_err());
    }

    #[test]
    fn plan_parsing() {
        let plan = AugmentPlan::parse("noise_factor = 0.01\nseed = 9\naugment_ops = noise, pitch\n").unwrap();
        assert_eq!(plan.seed, 9);
        assert_eq!(plan.ops, vec![AugmentOp::Noise { factor: 0.01 }, AugmentOp::Pitch { semitones: 2.0 }]);
        assert_eq!(plan.copies_per_clip, 2);
        assert_eq!(AugmentPlan::parse("").unwrap(), AugmentPlan::default());
        assert!(AugmentPlan::parse("colour = red").is_err());
        assert!(AugmentPlan::parse("stretch_rate = 0").is_err());
        assert!(AugmentPlan::parse("augment_ops = reverb").is_err());
    }

    #[test]
    fn augment_clip_is_deterministic() {
        let clip = sine(250.0, 6000, 0.4);
        let plan = AugmentPlan { seed: 5, copies_per_clip: 6, ..AugmentPlan::default() };
        let a = augment_clip(&clip, "u1", &plan).unwrap();
        let b = augment_clip(&clip, "u1", &plan).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        assert_eq!(a[0].1, "noise0.035");
        assert_eq!(a[4].1, "noise0.035_1");
        assert!(a.iter().all(|(c, _)| c.sample_rate_hz() == 22050));
    }
}
