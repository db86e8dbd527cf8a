//! Framing, power spectrogram, zero-crossing rate and short-time energy.

use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{FeatureError, FrameConfig};
use crate::audio::{reflect_index, AudioClip};
use crate::scalar::Scalar;

/// Number of frames [`frame_signal`] produces for `n` samples.
pub fn frame_count(n: usize, cfg: &FrameConfig) -> Result<usize, FeatureError> {
    if cfg.center {
        Ok(1 + n / cfg.hop_length)
    } else if n < cfg.frame_length {
        Err(FeatureError::ClipTooShort { len: n, needed: cfg.frame_length })
    } else {
        Ok(1 + (n - cfg.frame_length) / cfg.hop_length)
    }
}

/// Signal with centering pad applied plus the frame count over it.
pub(crate) struct Framed<T> {
    padded: Vec<T>,
    frames: usize,
    frame_length: usize,
    hop: usize,
}

impl<T: Scalar> Framed<T> {
    pub(crate) fn frame(&self, t: usize) -> &[T] {
        let start = t * self.hop;
        &self.padded[start..start + self.frame_length]
    }

    pub(crate) fn frames(&self) -> usize {
        self.frames
    }
}

/// Splits a signal into overlapping frames, reflect-padding by half a frame when centered.
pub(crate) fn frame_signal<T: Scalar>(x: &[T], cfg: &FrameConfig) -> Result<Framed<T>, FeatureError> {
    cfg.validate()?;
    let frames = frame_count(x.len(), cfg)?;
    let padded = if cfg.center {
        let left = cfg.frame_length / 2;
        let right = cfg.frame_length - left;
        let n = x.len();
        (-(left as isize)..(n + right) as isize).map(|i| x[reflect_index(i, n)]).collect()
    } else {
        x.to_vec()
    };
    Ok(Framed { padded, frames, frame_length: cfg.frame_length, hop: cfg.hop_length })
}

/// Periodic Hann window of length `n`.
pub fn hann_window<T: Scalar>(n: usize) -> Vec<T> {
    (0..n)
        .map(|i| {
            let phase = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            T::of(0.5 - 0.5 * phase.cos())
        })
        .collect()
}

/// Reusable forward transform for one frame configuration.
pub(crate) struct PowerSpectrum<T: Scalar> {
    fft: Arc<dyn Fft<T>>,
    window: Vec<T>,
    fft_size: usize,
    buffer: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
}

impl<T: Scalar> PowerSpectrum<T> {
    pub(crate) fn new(cfg: &FrameConfig) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        let scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
        PowerSpectrum {
            fft,
            window: hann_window(cfg.frame_length),
            fft_size: cfg.fft_size,
            buffer: vec![Complex::new(T::zero(), T::zero()); cfg.fft_size],
            scratch,
        }
    }

    pub(crate) fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Writes `|DFT(window * frame)|^2` for bins `0..=fft_size/2` into `out`.
    pub(crate) fn compute(&mut self, frame: &[T], out: &mut [T]) {
        for (slot, (s, w)) in self.buffer.iter_mut().zip(frame.iter().zip(&self.window)) {
            *slot = Complex::new(*s * *w, T::zero());
        }
        for slot in self.buffer.iter_mut().skip(frame.len()) {
            *slot = Complex::new(T::zero(), T::zero());
        }
        self.fft.process_with_scratch(&mut self.buffer, &mut self.scratch);
        for (o, c) in out.iter_mut().zip(&self.buffer) {
            *o = c.norm_sqr();
        }
    }
}

/// Power spectrogram, `frames x (fft_size/2 + 1)`.
pub fn stft_power<T: Scalar>(clip: &AudioClip<T>, cfg: &FrameConfig) -> Result<Array2<T>, FeatureError> {
    let framed = frame_signal(clip.samples(), cfg)?;
    Ok(power_from_frames(&framed, &mut PowerSpectrum::new(cfg)))
}

pub(crate) fn power_from_frames<T: Scalar>(framed: &Framed<T>, spectrum: &mut PowerSpectrum<T>) -> Array2<T> {
    let mut power = Array2::zeros((framed.frames(), spectrum.bins()));
    for (t, mut row) in power.rows_mut().into_iter().enumerate() {
        let row = row.as_slice_mut().expect("standard layout");
        spectrum.compute(framed.frame(t), row);
    }
    power
}

/// Fraction of adjacent sample pairs in each frame whose signs differ. Zero counts as positive.
pub fn zero_crossing_rate<T: Scalar>(clip: &AudioClip<T>, cfg: &FrameConfig) -> Result<Array2<T>, FeatureError> {
    let framed = frame_signal(clip.samples(), cfg)?;
    Ok(zcr_from_frames(&framed))
}

pub(crate) fn zcr_from_frames<T: Scalar>(framed: &Framed<T>) -> Array2<T> {
    Array2::from_shape_fn((framed.frames(), 1), |(t, _)| {
        let frame = framed.frame(t);
        if frame.len() < 2 {
            return T::zero();
        }
        let crossings = frame.windows(2).filter(|p| (p[0] < T::zero()) != (p[1] < T::zero())).count();
        T::of_usize(crossings) / T::of_usize(frame.len() - 1)
    })
}

/// Root-mean-square amplitude of each (unwindowed) frame.
pub fn short_time_energy<T: Scalar>(clip: &AudioClip<T>, cfg: &FrameConfig) -> Result<Array2<T>, FeatureError> {
    let framed = frame_signal(clip.samples(), cfg)?;
    Ok(energy_from_frames(&framed))
}

pub(crate) fn energy_from_frames<T: Scalar>(framed: &Framed<T>) -> Array2<T> {
    Array2::from_shape_fn((framed.frames(), 1), |(t, _)| {
        let frame = framed.frame(t);
        let sum_sq: T = frame.iter().map(|&s| s * s).sum();
        (sum_sq / T::of_usize(frame.len())).sqrt()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(samples: Vec<f64>) -> AudioClip<f64> {
        AudioClip::new(samples, 22050).unwrap()
    }

    #[test]
    fn frame_count_matches_centered_formula() {
        let cfg = FrameConfig::default();
        for n in [1usize, 511, 512, 513, 4096, 22050] {
            assert_eq!(frame_count(n, &cfg).unwrap(), 1 + n / 512);
            let framed = frame_signal(&vec![0.0f64; n], &cfg).unwrap();
            assert_eq!(framed.frames(), 1 + n / 512);
        }
        let uncentered = FrameConfig { center: false, ..FrameConfig::default() };
        assert!(matches!(frame_count(100, &uncentered), Err(FeatureError::ClipTooShort { .. })));
        assert_eq!(frame_count(2048 + 1024, &uncentered).unwrap(), 3);
    }

    #[test]
    fn silence_has_zero_power_zcr_and_energy() {
        let c = clip(vec![0.0; 3000]);
        let cfg = FrameConfig::default();
        assert!(stft_power(&c, &cfg).unwrap().iter().all(|&v| v == 0.0));
        assert!(zero_crossing_rate(&c, &cfg).unwrap().iter().all(|&v| v == 0.0));
        assert!(short_time_energy(&c, &cfg).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bin_centred_sine_peaks_at_its_bin() {
        let cfg = FrameConfig::default();
        let k = 37;
        let f = k as f64 * 22050.0 / cfg.fft_size as f64;
        let c = clip((0..8192).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / 22050.0).sin() * 0.5).collect());
        let power = stft_power(&c, &cfg).unwrap();
        // edge frames see reflected padding, so only fully interior frames are checked
        let interior = cfg.frame_length / cfg.hop_length;
        for row in power.rows().into_iter().skip(interior).take(power.nrows() - 2 * interior) {
            let argmax = row.iter().enumerate().fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b }).0;
            assert_eq!(argmax, k);
        }
    }

    #[test]
    fn constant_clip_zcr_and_energy() {
        let cfg = FrameConfig::default();
        let c = clip(vec![0.5; 5000]);
        assert!(zero_crossing_rate(&c, &cfg).unwrap().iter().all(|&v| v == 0.0));
        for &e in short_time_energy(&c, &cfg).unwrap().iter() {
            assert!((e - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn alternating_signal_crosses_every_pair() {
        let cfg = FrameConfig::default();
        let c = clip((0..6000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect());
        let zcr = zero_crossing_rate(&c, &cfg).unwrap();
        for t in 1..zcr.nrows() - 1 {
            assert_eq!(zcr[[t, 0]], 1.0);
        }
    }

    #[test]
    fn hann_is_periodic() {
        let w: Vec<f64> = hann_window(8);
        assert_eq!(w[0], 0.0);
        assert!((w[4] - 1.0).abs() < 1e-15);
        assert!((w[1] - w[7]).abs() < 1e-15);
    }
}
