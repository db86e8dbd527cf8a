//! Slaney-style mel filterbank, mel spectrogram and MFCC.

use ndarray::Array2;

use super::{FeatureError, MelConfig};
use crate::scalar::Scalar;

/// Floor added before taking the log of mel energies.
pub const LOG_FLOOR: f64 = 1e-10;

const F_SP: f64 = 200.0 / 3.0;
const MIN_LOG_HZ: f64 = 1000.0;
const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;

fn log_step() -> f64 {
    6.4f64.ln() / 27.0
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    if hz >= MIN_LOG_HZ {
        MIN_LOG_MEL + (hz / MIN_LOG_HZ).ln() / log_step()
    } else {
        hz / F_SP
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel >= MIN_LOG_MEL {
        MIN_LOG_HZ * (log_step() * (mel - MIN_LOG_MEL)).exp()
    } else {
        F_SP * mel
    }
}

/// Triangular, area-normalized filters: `n_mels x (fft_size/2 + 1)`.
#[derive(Debug, Clone)]
pub struct MelFilterbank<T> {
    weights: Array2<T>,
    sample_rate_hz: u32,
    fft_size: usize,
}

impl<T: Scalar> MelFilterbank<T> {
    pub fn new(cfg: &MelConfig, sample_rate_hz: u32, fft_size: usize) -> Result<Self, FeatureError> {
        let nyquist = sample_rate_hz as f64 / 2.0;
        let fmax = cfg.fmax.unwrap_or(nyquist);
        if cfg.n_mels == 0 || !(0.0..fmax).contains(&cfg.fmin) || fmax > nyquist {
            return Err(FeatureError::InvalidConfig(format!(
                "mel range {}..{} Hz with {} bands at {} Hz",
                cfg.fmin, fmax, cfg.n_mels, sample_rate_hz
            )));
        }
        let bins = fft_size / 2 + 1;
        let bin_hz: Vec<f64> = (0..bins).map(|k| k as f64 * sample_rate_hz as f64 / fft_size as f64).collect();
        let (mel_lo, mel_hi) = (hz_to_mel(cfg.fmin), hz_to_mel(fmax));
        let edges: Vec<f64> =
            (0..cfg.n_mels + 2).map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64)).collect();

        let mut weights = Array2::zeros((cfg.n_mels, bins));
        for m in 0..cfg.n_mels {
            let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
            let area_norm = 2.0 / (right - left);
            for (k, &f) in bin_hz.iter().enumerate() {
                let rising = (f - left) / (centre - left);
                let falling = (right - f) / (right - centre);
                let w = rising.min(falling).max(0.0);
                if w > 0.0 {
                    weights[[m, k]] = T::of(w * area_norm);
                }
            }
        }
        Ok(MelFilterbank { weights, sample_rate_hz, fft_size })
    }

    pub fn weights(&self) -> &Array2<T> {
        &self.weights
    }

    pub fn n_mels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn bins(&self) -> usize {
        self.weights.ncols()
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }
}

/// `power x filterbank^T`, one mel band per column.
pub fn mel_spectrogram<T: Scalar>(power: &Array2<T>, fb: &MelFilterbank<T>) -> Result<Array2<T>, FeatureError> {
    if power.ncols() != fb.bins() {
        return Err(FeatureError::ConfigMismatch { expected: fb.bins(), found: power.ncols() });
    }
    Ok(power.dot(&fb.weights.t()))
}

/// Orthonormal DCT-II basis restricted to its first `rows` coefficients: `rows x n`.
pub fn dct_matrix<T: Scalar>(rows: usize, n: usize) -> Array2<T> {
    let scale0 = (1.0 / n as f64).sqrt();
    let scale = (2.0 / n as f64).sqrt();
    Array2::from_shape_fn((rows, n), |(k, i)| {
        let s = if k == 0 { scale0 } else { scale };
        T::of(s * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos())
    })
}

/// Orthonormal DCT-II of a vector.
pub fn dct_ii<T: Scalar>(x: &[T]) -> Vec<T> {
    let basis = dct_matrix::<T>(x.len(), x.len());
    basis.dot(&ndarray::ArrayView1::from(x)).to_vec()
}

/// Inverse of [`dct_ii`] (its transpose).
pub fn dct_ii_inverse<T: Scalar>(c: &[T]) -> Vec<T> {
    let basis = dct_matrix::<T>(c.len(), c.len());
    basis.t().dot(&ndarray::ArrayView1::from(c)).to_vec()
}

/// First `n_mfcc` orthonormal DCT-II coefficients of `ln(mel + 1e-10)` per frame.
pub fn mfcc<T: Scalar>(power: &Array2<T>, fb: &MelFilterbank<T>, n_mfcc: usize) -> Result<Array2<T>, FeatureError> {
    let mel = mel_spectrogram(power, fb)?;
    Ok(mfcc_from_mel(&mel, n_mfcc))
}

pub(crate) fn mfcc_from_mel<T: Scalar>(mel: &Array2<T>, n_mfcc: usize) -> Array2<T> {
    let floor = T::of(LOG_FLOOR);
    let log_mel = mel.mapv(|v| (v + floor).ln());
    log_mel.dot(&dct_matrix::<T>(n_mfcc, mel.ncols()).t())
}
