//! Twelve-bin pitch-class profile with A440 equal-temperament mapping.

use ndarray::Array2;

use super::FeatureError;
use crate::scalar::Scalar;

/// Bins below this frequency are ignored (lowest piano A).
pub const CHROMA_MIN_HZ: f64 = 27.5;

/// Column index of pitch class A; columns run C, C#, ..., B.
pub const PITCH_CLASS_A: usize = 9;

pub const PITCH_CLASS_NAMES: [&str; 12] = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];

/// Pitch class (0 = C) of frequency `hz`, or `None` below [`CHROMA_MIN_HZ`].
pub fn pitch_class(hz: f64) -> Option<usize> {
    if hz < CHROMA_MIN_HZ {
        return None;
    }
    let semitones_from_a = (12.0 * (hz / 440.0).log2()).round() as i64;
    Some((semitones_from_a + PITCH_CLASS_A as i64).rem_euclid(12) as usize)
}

/// Folds a power spectrogram onto 12 pitch classes, normalized per frame by its maximum.
pub fn chroma<T: Scalar>(power: &Array2<T>, sample_rate_hz: u32, fft_size: usize) -> Result<Array2<T>, FeatureError> {
    let bins = fft_size / 2 + 1;
    if power.ncols() != bins {
        return Err(FeatureError::ConfigMismatch { expected: bins, found: power.ncols() });
    }
    let classes: Vec<Option<usize>> = (0..bins).map(|k| pitch_class(k as f64 * sample_rate_hz as f64 / fft_size as f64)).collect();

    let mut out = Array2::zeros((power.nrows(), 12));
    for (row, mut dst) in power.rows().into_iter().zip(out.rows_mut()) {
        for (&p, class) in row.iter().zip(&classes) {
            if let Some(c) = class {
                dst[*c] += p;
            }
        }
        let max = dst.iter().fold(T::zero(), |m, &v| m.max(v));
        if max > T::zero() {
            dst.mapv_inplace(|v| v / max);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_pitches_map_to_expected_classes() {
        assert_eq!(pitch_class(440.0), Some(PITCH_CLASS_A));
        assert_eq!(pitch_class(880.0), Some(PITCH_CLASS_A));
        assert_eq!(pitch_class(261.63), Some(0));
        assert_eq!(pitch_class(466.16), Some(10));
        assert_eq!(pitch_class(10.0), None);
        assert_eq!(pitch_class(0.0), None);
    }

    #[test]
    fn zero_power_gives_zero_chroma() {
        let out = chroma(&Array2::<f64>::zeros((4, 1025)), 22050, 2048).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }
}
