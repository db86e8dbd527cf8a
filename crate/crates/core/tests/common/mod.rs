//! Brute-force reference implementations and fixtures shared by the
//! integration tests and the acceptance harness. Nothing here calls the
//! library code it is used to check.

#![allow(dead_code)]

use std::f64::consts::PI;

use depscreen::audio::AudioClip;
use depscreen::corpus::{Language, ManifestEntry, StimulusCategory};
use depscreen::features::FrameConfig;
use depscreen::surveys::Band;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sine(freqs: &[f64], amplitude: f64, len: usize, rate: u32) -> AudioClip<f64> {
    let samples = (0..len)
        .map(|i| {
            let t = i as f64 / rate as f64;
            amplitude * freqs.iter().map(|f| (2.0 * PI * f * t).sin()).sum::<f64>()
        })
        .collect();
    AudioClip::new(samples, rate).unwrap()
}

/// Uniform noise plus a random tone, peak below 1.
pub fn random_clip(rng: &mut ChaCha8Rng, len: usize, rate: u32) -> AudioClip<f64> {
    let f = rng.gen_range(80.0..(rate as f64 / 4.0));
    let tone = rng.gen_range(0.0..0.5);
    let noise = rng.gen_range(0.01..0.4);
    let samples = (0..len).map(|i| tone * (2.0 * PI * f * i as f64 / rate as f64).sin() + noise * rng.gen_range(-1.0..1.0)).collect();
    AudioClip::new(samples, rate).unwrap()
}

/// `max |a - b| / max |b|`: worst deviation relative to the oracle's scale.
pub fn relative_error(actual: &Array2<f64>, oracle: &Array2<f64>) -> f64 {
    assert_eq!(actual.dim(), oracle.dim(), "shape");
    let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = actual.iter().zip(oracle).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let j = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    assert!((0..n).contains(&j), "pad wider than clip");
    j as usize
}

/// Frames with reflect padding, periodic Hann, then an `O(n^2)` DFT per frame.
pub fn naive_power_spectrogram(x: &[f64], cfg: &FrameConfig) -> Array2<f64> {
    let n = x.len();
    let (pad, frames) =
        if cfg.center { (cfg.frame_length / 2, 1 + n / cfg.hop_length) } else { (0, 1 + (n - cfg.frame_length) / cfg.hop_length) };
    let window: Vec<f64> = (0..cfg.frame_length).map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / cfg.frame_length as f64).cos())).collect();
    let big_n = cfg.fft_size;
    let cos: Vec<f64> = (0..big_n).map(|m| (2.0 * PI * m as f64 / big_n as f64).cos()).collect();
    let sin: Vec<f64> = (0..big_n).map(|m| (2.0 * PI * m as f64 / big_n as f64).sin()).collect();
    let bins = big_n / 2 + 1;
    let mut out = Array2::zeros((frames, bins));
    for t in 0..frames {
        let frame: Vec<f64> = (0..cfg.frame_length)
            .map(|i| {
                let pos = (t * cfg.hop_length + i) as isize - pad as isize;
                x[if cfg.center { mirror(pos, n) } else { pos as usize }] * window[i]
            })
            .collect();
        for k in 0..bins {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &v) in frame.iter().enumerate() {
                let m = (k * i) % big_n;
                re += v * cos[m];
                im -= v * sin[m];
            }
            out[[t, k]] = re * re + im * im;
        }
    }
    out
}

/// `c_k = s_k * sum_m ln(mel_m + 1e-10) cos(pi k (2m + 1) / 2M)` with orthonormal `s_k`.
pub fn cosine_sum_mfcc(power: &Array2<f64>, filters: &Array2<f64>, n_mfcc: usize) -> Array2<f64> {
    let (frames, bins) = power.dim();
    let m_count = filters.nrows();
    let mut out = Array2::zeros((frames, n_mfcc));
    for t in 0..frames {
        let log_mel: Vec<f64> = (0..m_count)
            .map(|m| {
                let e: f64 = (0..bins).map(|k| filters[[m, k]] * power[[t, k]]).sum();
                (e + 1e-10).ln()
            })
            .collect();
        for k in 0..n_mfcc {
            let s = if k == 0 { (1.0 / m_count as f64).sqrt() } else { (2.0 / m_count as f64).sqrt() };
            out[[t, k]] = s * log_mel
                .iter()
                .enumerate()
                .map(|(m, v)| v * (PI * k as f64 * (2 * m + 1) as f64 / (2 * m_count) as f64).cos())
                .sum::<f64>();
        }
    }
    out
}

/// Each bin at or above 27.5 Hz goes to the pitch class of the nearest equal-tempered
/// note (searched exhaustively); every frame is divided by its largest class.
pub fn bin_assignment_chroma(power: &Array2<f64>, rate: u32, fft_size: usize) -> Array2<f64> {
    let notes: Vec<(f64, usize)> = (-60i32..=72).map(|n| (440.0 * 2f64.powf(n as f64 / 12.0), (n + 9).rem_euclid(12) as usize)).collect();
    let class_of = |k: usize| -> Option<usize> {
        let f = k as f64 * rate as f64 / fft_size as f64;
        if f < 27.5 {
            return None;
        }
        notes.iter().min_by(|a, b| (f.log2() - a.0.log2()).abs().total_cmp(&(f.log2() - b.0.log2()).abs())).map(|&(_, c)| c)
    };
    let mut out = Array2::zeros((power.nrows(), 12));
    for t in 0..power.nrows() {
        for k in 0..power.ncols() {
            if let Some(c) = class_of(k) {
                out[[t, c]] += power[[t, k]];
            }
        }
        let max = (0..12).map(|c| out[[t, c]]).fold(0.0, f64::max);
        if max > 0.0 {
            for c in 0..12 {
                out[[t, c]] /= max;
            }
        }
    }
    out
}

/// Frequency in `[lo, hi]` (1 Hz grid) maximising the Hann-windowed DTFT magnitude.
pub fn dtft_peak_hz(x: &[f64], rate: u32, lo: f64, hi: f64) -> f64 {
    let n = x.len();
    let windowed: Vec<f64> = x.iter().enumerate().map(|(i, v)| v * 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos())).collect();
    let mut best = (lo, -1.0);
    let mut f = lo;
    while f <= hi {
        let w = 2.0 * PI * f / rate as f64;
        let (re, im) =
            windowed.iter().enumerate().fold((0.0, 0.0), |(re, im), (i, v)| (re + v * (w * i as f64).cos(), im - v * (w * i as f64).sin()));
        let mag = re * re + im * im;
        if mag > best.1 {
            best = (f, mag);
        }
        f += 1.0;
    }
    best.0
}

/// One manifest row per participant whose PHQ-9 total sits inside `band`.
pub fn participant_rows(counts: &[(Band, usize)]) -> Vec<ManifestEntry> {
    let mut rows = Vec::new();
    for &(band, count) in counts {
        for _ in 0..count {
            let id = format!("P{:03}", rows.len() + 1);
            rows.push(ManifestEntry {
                participant_id: id,
                language: Language::En,
                category: StimulusCategory::for_sentence(1).unwrap(),
                sentence_id: 1,
                audio_path: "a.wav".into(),
                phq9_total: band.total_range().0,
                gad7_total: 0,
                pa_total: 30,
                na_total: 20,
                stai_total: 30,
                label_band: band,
                split: None,
                augmented_from: None,
            });
        }
    }
    rows
}

/// Parses a confusion CSV (header row and label column) into integer counts.
pub fn read_confusion_csv(text: &str) -> Vec<Vec<u64>> {
    text.lines().skip(1).filter(|l| !l.is_empty()).map(|l| l.split(',').skip(1).map(|c| c.parse().unwrap()).collect()).collect()
}

/// Four well-separated classes: a random prototype per class plus small noise.
pub fn prototype_dataset(n: usize, width: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut r = rng(seed);
    let prototypes: Vec<Vec<f64>> = (0..4).map(|_| (0..width).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
    let labels: Vec<usize> = (0..n).map(|i| i % 4).collect();
    let x = Array2::from_shape_fn((n, width), |(i, j)| prototypes[labels[i]][j] + 0.3 * r.gen_range(-1.0..1.0));
    (x, labels)
}
