//! Frame-level acoustic features and their fixed-length aggregate.
//!
//! Every clip is turned into a `frames x 178` matrix laid out as
//! `[zcr(1) | chroma(12) | mfcc(36) | energy(1) | mel(128)]`. All five
//! families share one [`FrameConfig`], so their row counts always agree.
//! [`aggregate`] averages the rows into the 178-long classifier input.

mod chroma;
mod container;
mod frames;
mod mel;

use std::ops::Range;

use ndarray::{s, Array2, Axis};
use thiserror::Error;

pub use chroma::{chroma, pitch_class, CHROMA_MIN_HZ, PITCH_CLASS_A, PITCH_CLASS_NAMES};
pub use container::{decode_container, encode_container, read_container, read_vectors, write_container, write_csv, FeatureRecord};
pub use frames::{frame_count, hann_window, short_time_energy, stft_power, zero_crossing_rate};
pub use mel::{dct_ii, dct_ii_inverse, dct_matrix, hz_to_mel, mel_spectrogram, mel_to_hz, mfcc, MelFilterbank, LOG_FLOOR};

use crate::audio::{AudioClip, AudioError};
use crate::scalar::Scalar;

pub const N_CHROMA: usize = 12;
pub const N_MFCC: usize = 36;
pub const N_MELS: usize = 128;
pub const FEATURE_WIDTH: usize = 1 + N_CHROMA + N_MFCC + 1 + N_MELS;

pub const ZCR_COL: usize = 0;
pub const CHROMA_COLS: Range<usize> = 1..1 + N_CHROMA;
pub const MFCC_COLS: Range<usize> = CHROMA_COLS.end..CHROMA_COLS.end + N_MFCC;
pub const ENERGY_COL: usize = MFCC_COLS.end;
pub const MEL_COLS: Range<usize> = ENERGY_COL + 1..ENERGY_COL + 1 + N_MELS;

const _: () = assert!(FEATURE_WIDTH == 178 && MEL_COLS.end == FEATURE_WIDTH);

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("clip of {len} samples is shorter than one {needed}-sample frame")]
    ClipTooShort { len: usize, needed: usize },
    #[error("invalid feature configuration: {0}")]
    InvalidConfig(String),
    #[error("spectrum width mismatch: expected {expected} columns, found {found}")]
    ConfigMismatch { expected: usize, found: usize },
    #[error("feature matrix has no frames")]
    EmptyMatrix,
    #[error("feature vector must have {FEATURE_WIDTH} finite values")]
    BadVector,
    #[error("corrupt feature container: {0}")]
    CorruptContainer(String),
    #[error("feature I/O failure: {0}")]
    Io(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameConfig {
    pub frame_length: usize,
    pub hop_length: usize,
    pub fft_size: usize,
    /// Reflect-pad half a frame on each side so frame `t` is centred on sample `t * hop`.
    pub center: bool,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig { frame_length: 2048, hop_length: 512, fft_size: 2048, center: true }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.hop_length == 0 || self.hop_length > self.frame_length {
            return Err(FeatureError::InvalidConfig(format!("hop_length {} must be in 1..={}", self.hop_length, self.frame_length)));
        }
        if self.fft_size < self.frame_length {
            return Err(FeatureError::InvalidConfig(format!("fft_size {} smaller than frame_length {}", self.fft_size, self.frame_length)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelConfig {
    pub n_mels: usize,
    pub fmin: f64,
    /// `None` means the Nyquist frequency.
    pub fmax: Option<f64>,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig { n_mels: N_MELS, fmin: 0.0, fmax: None }
    }
}

/// Per-frame features, `frames x 178`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    data: Array2<T>,
    frame_config: FrameConfig,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(data: Array2<T>, frame_config: FrameConfig) -> Result<Self, FeatureError> {
        if data.ncols() != FEATURE_WIDTH {
            return Err(FeatureError::ConfigMismatch { expected: FEATURE_WIDTH, found: data.ncols() });
        }
        Ok(FeatureMatrix { data, frame_config })
    }

    pub fn data(&self) -> &Array2<T> {
        &self.data
    }

    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn frame_config(&self) -> &FrameConfig {
        &self.frame_config
    }

    pub fn zcr(&self) -> ndarray::ArrayView2<'_, T> {
        self.data.slice(s![.., ZCR_COL..ZCR_COL + 1])
    }

    pub fn chroma(&self) -> ndarray::ArrayView2<'_, T> {
        self.data.slice(s![.., CHROMA_COLS])
    }

    pub fn mfcc(&self) -> ndarray::ArrayView2<'_, T> {
        self.data.slice(s![.., MFCC_COLS])
    }

    pub fn energy(&self) -> ndarray::ArrayView2<'_, T> {
        self.data.slice(s![.., ENERGY_COL..ENERGY_COL + 1])
    }

    pub fn mel(&self) -> ndarray::ArrayView2<'_, T> {
        self.data.slice(s![.., MEL_COLS])
    }
}

/// Time-averaged features: exactly 178 finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> FeatureVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self, FeatureError> {
        if values.len() != FEATURE_WIDTH || values.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::BadVector);
        }
        Ok(FeatureVector { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Feature pipeline with the filterbank and FFT plan built once.
pub struct FeatureExtractor<T: Scalar> {
    frame: FrameConfig,
    filterbank: MelFilterbank<T>,
    spectrum: frames::PowerSpectrum<T>,
}

impl<T: Scalar> FeatureExtractor<T> {
    pub fn new(frame: FrameConfig, mel: MelConfig, sample_rate_hz: u32) -> Result<Self, FeatureError> {
        frame.validate()?;
        if mel.n_mels != N_MELS {
            return Err(FeatureError::InvalidConfig(format!("n_mels must be {N_MELS}, got {}", mel.n_mels)));
        }
        Ok(FeatureExtractor {
            frame,
            filterbank: MelFilterbank::new(&mel, sample_rate_hz, frame.fft_size)?,
            spectrum: frames::PowerSpectrum::new(&frame),
        })
    }

    pub fn filterbank(&self) -> &MelFilterbank<T> {
        &self.filterbank
    }

    pub fn extract(&mut self, clip: &AudioClip<T>) -> Result<FeatureMatrix<T>, FeatureError> {
        if clip.sample_rate_hz() != self.filterbank.sample_rate_hz() {
            return Err(FeatureError::InvalidConfig(format!(
                "clip rate {} Hz differs from extractor rate {} Hz",
                clip.sample_rate_hz(),
                self.filterbank.sample_rate_hz()
            )));
        }
        let framed = frames::frame_signal(clip.samples(), &self.frame)?;
        let power = frames::power_from_frames(&framed, &mut self.spectrum);
        let zcr = frames::zcr_from_frames(&framed);
        let energy = frames::energy_from_frames(&framed);
        let pitch = chroma(&power, clip.sample_rate_hz(), self.frame.fft_size)?;
        let mel = mel_spectrogram(&power, &self.filterbank)?;
        let cepstra = mel::mfcc_from_mel(&mel, N_MFCC);

        let mut data = Array2::zeros((framed.frames(), FEATURE_WIDTH));
        data.slice_mut(s![.., ZCR_COL..ZCR_COL + 1]).assign(&zcr);
        data.slice_mut(s![.., CHROMA_COLS]).assign(&pitch);
        data.slice_mut(s![.., MFCC_COLS]).assign(&cepstra);
        data.slice_mut(s![.., ENERGY_COL..ENERGY_COL + 1]).assign(&energy);
        data.slice_mut(s![.., MEL_COLS]).assign(&mel);
        FeatureMatrix::new(data, self.frame)
    }
}

/// Computes the full 178-column feature sequence of a clip.
pub fn extract_178<T: Scalar>(clip: &AudioClip<T>, frame: &FrameConfig, mel: &MelConfig) -> Result<FeatureMatrix<T>, FeatureError> {
    FeatureExtractor::new(*frame, *mel, clip.sample_rate_hz())?.extract(clip)
}

/// Column-wise mean over frames.
pub fn aggregate<T: Scalar>(fm: &FeatureMatrix<T>) -> Result<FeatureVector<T>, FeatureError> {
    let mean = fm.data.mean_axis(Axis(0)).ok_or(FeatureError::EmptyMatrix)?;
    FeatureVector::new(mean.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freqs: &[f64], n: usize) -> AudioClip<f64> {
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / 22050.0;
                freqs.iter().map(|f| (2.0 * std::f64::consts::PI * f * t).sin()).sum::<f64>() * 0.4
            })
            .collect();
        AudioClip::new(samples, 22050).unwrap()
    }

    #[test]
    fn layout_ranges_are_contiguous() {
        assert_eq!(ZCR_COL, 0);
        assert_eq!(CHROMA_COLS, 1..13);
        assert_eq!(MFCC_COLS, 13..49);
        assert_eq!(ENERGY_COL, 49);
        assert_eq!(MEL_COLS, 50..178);
    }

    #[test]
    fn silence_features() {
        let clip = AudioClip::new(vec![0.0f64; 4000], 22050).unwrap();
        let fm = extract_178(&clip, &FrameConfig::default(), &MelConfig::default()).unwrap();
        assert_eq!(fm.data().ncols(), 178);
        for col in [fm.zcr(), fm.chroma(), fm.energy(), fm.mel()] {
            assert!(col.iter().all(|&v| v == 0.0));
        }
        let first = fm.mfcc().row(0).to_owned();
        for row in fm.mfcc().rows() {
            assert_eq!(row, first);
        }
        let c0 = (LOG_FLOOR.ln()) * (128f64).sqrt();
        assert!((first[0] - c0).abs() < 1e-9);
        assert!(first.iter().skip(1).all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn a440_dominates_chroma() {
        let clip = tone(&[440.0], 8192);
        let fm = extract_178(&clip, &FrameConfig::default(), &MelConfig::default()).unwrap();
        for row in fm.chroma().rows() {
            assert_eq!(row[PITCH_CLASS_A], 1.0);
            assert!(row.iter().enumerate().all(|(c, &v)| c == PITCH_CLASS_A || v < 1.0));
        }
    }

    #[test]
    fn concatenation_matches_individual_features() {
        let clip = tone(&[220.0, 1375.0], 6000);
        let frame = FrameConfig::default();
        let mel_cfg = MelConfig::default();
        let fm = extract_178(&clip, &frame, &mel_cfg).unwrap();
        let power = stft_power(&clip, &frame).unwrap();
        let fb = MelFilterbank::new(&mel_cfg, 22050, 2048).unwrap();
        assert_eq!(fm.zcr(), zero_crossing_rate(&clip, &frame).unwrap());
        assert_eq!(fm.energy(), short_time_energy(&clip, &frame).unwrap());
        assert_eq!(fm.chroma(), chroma(&power, 22050, 2048).unwrap());
        assert_eq!(fm.mel(), mel_spectrogram(&power, &fb).unwrap());
        assert_eq!(fm.mfcc(), mfcc(&power, &fb, N_MFCC).unwrap());
    }

    #[test]
    fn aggregate_edge_cases() {
        let frame = FrameConfig::default();
        let v: Vec<f64> = (0..178).map(|j| j as f64 * 0.25 - 7.0).collect();
        let single = FeatureMatrix::new(Array2::from_shape_vec((1, 178), v.clone()).unwrap(), frame).unwrap();
        assert_eq!(aggregate(&single).unwrap().values(), &v[..]);

        let mut both = v.clone();
        both.extend(v.iter().map(|x| -x));
        let pair = FeatureMatrix::new(Array2::from_shape_vec((2, 178), both).unwrap(), frame).unwrap();
        assert!(aggregate(&pair).unwrap().values().iter().all(|&x| x == 0.0));

        let empty = FeatureMatrix::new(Array2::<f64>::zeros((0, 178)), frame).unwrap();
        assert!(matches!(aggregate(&empty), Err(FeatureError::EmptyMatrix)));
    }

    #[test]
    fn rejects_wrong_widths_and_rates() {
        assert!(FeatureMatrix::new(Array2::<f64>::zeros((2, 177)), FrameConfig::default()).is_err());
        assert!(FeatureVector::new(vec![0.0f64; 10]).is_err());
        assert!(FeatureVector::new(vec![f64::NAN; 178]).is_err());
        let mut ex = FeatureExtractor::<f64>::new(FrameConfig::default(), MelConfig::default(), 16000).unwrap();
        assert!(ex.extract(&tone(&[440.0], 3000)).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let clip = AudioClip::new((0..5000).map(|i| ((i as f32) * 0.05).sin() * 0.3).collect(), 22050).unwrap();
        let fm = extract_178(&clip, &FrameConfig::default(), &MelConfig::default()).unwrap();
        assert_eq!(fm.data().ncols(), 178);
        assert!(fm.data().iter().all(|v| v.is_finite()));
    }
}
