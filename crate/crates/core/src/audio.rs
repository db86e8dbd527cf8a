//! Audio clips, RIFF/WAVE reading and writing, and resampling.
//!
//! Only uncompressed PCM16 (format code 1) and IEEE float32 (format code 3)
//! mono or stereo files are accepted. Stereo is mixed to mono by averaging
//! the two channels. No peak normalization happens on read.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::scalar::Scalar;

/// Sample rate every clip is brought to before analysis.
pub const CANONICAL_SAMPLE_RATE: u32 = 22_050;

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed RIFF/WAVE container: {0}")]
    MalformedContainer(String),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("audio contains no frames")]
    EmptyAudio,
    #[error("invalid sample rate {0}")]
    InvalidSampleRate(u32),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Mono sample buffer at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip<T> {
    samples: Vec<T>,
    sample_rate_hz: u32,
}

impl<T: Scalar> AudioClip<T> {
    /// Builds a clip, clamping samples into `[-1, 1]`.
    pub fn new(samples: Vec<T>, sample_rate_hz: u32) -> Result<Self, AudioError> {
        if sample_rate_hz == 0 {
            return Err(AudioError::InvalidSampleRate(sample_rate_hz));
        }
        if samples.is_empty() {
            return Err(AudioError::EmptyAudio);
        }
        let one = T::one();
        let samples = samples.into_iter().map(|s| if s.is_nan() { T::zero() } else { s.max(-one).min(one) }).collect();
        Ok(AudioClip { samples, sample_rate_hz })
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Largest absolute sample value.
    pub fn peak(&self) -> T {
        self.samples.iter().fold(T::zero(), |m, s| m.max(s.abs()))
    }

    /// Same rate, new samples (clamped). Used by operators that preserve the rate.
    pub(crate) fn with_samples(&self, samples: Vec<T>) -> Result<Self, AudioError> {
        AudioClip::new(samples, self.sample_rate_hz)
    }
}

/// On-disk sample encoding for [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

impl std::str::FromStr for WavEncoding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pcm16" => Ok(WavEncoding::Pcm16),
            "float32" => Ok(WavEncoding::Float32),
            other => Err(format!("unknown wav encoding '{other}' (expected pcm16|float32)")),
        }
    }
}

pub fn read_wav<T: Scalar>(path: impl AsRef<Path>) -> Result<AudioClip<T>, AudioError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| AudioError::Io { path: path.to_path_buf(), source })?;
    decode_wav(&bytes)
}

/// Reads a file and resamples it to `target_hz` when its rate differs.
pub fn read_wav_resampled<T: Scalar>(path: impl AsRef<Path>, target_hz: u32) -> Result<AudioClip<T>, AudioError> {
    let clip = read_wav(path)?;
    resample(&clip, target_hz, ResampleMethod::Sinc)
}

pub fn write_wav<T: Scalar>(clip: &AudioClip<T>, path: impl AsRef<Path>, encoding: WavEncoding) -> Result<(), AudioError> {
    let path = path.as_ref();
    fs::write(path, encode_wav(clip, encoding)).map_err(|source| AudioError::Io { path: path.to_path_buf(), source })
}

struct Format {
    code: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decodes a complete RIFF/WAVE byte stream.
pub fn decode_wav<T: Scalar>(bytes: &[u8]) -> Result<AudioClip<T>, AudioError> {
    let malformed = |m: &str| AudioError::MalformedContainer(m.to_string());
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(malformed("missing RIFF/WAVE magic"));
    }
    let riff_len = le_u32(bytes, 4) as usize;
    if riff_len < 4 || riff_len + 8 > bytes.len() {
        return Err(malformed("RIFF size exceeds file length"));
    }
    let end = riff_len + 8;

    let mut format: Option<Format> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= end {
        let id = &bytes[pos..pos + 4];
        let size = le_u32(bytes, pos + 4) as usize;
        let body = pos + 8;
        if body + size > end {
            return Err(malformed("chunk size exceeds container"));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(malformed("fmt chunk shorter than 16 bytes"));
                }
                format = Some(Format {
                    code: le_u16(bytes, body),
                    channels: le_u16(bytes, body + 2),
                    sample_rate: le_u32(bytes, body + 4),
                    bits: le_u16(bytes, body + 14),
                });
            }
            b"data" => data = Some(&bytes[body..body + size]),
            _ => {}
        }
        // chunks are word aligned
        pos = body + size + (size & 1);
    }

    let format = format.ok_or_else(|| malformed("no fmt chunk"))?;
    let data = data.ok_or_else(|| malformed("no data chunk"))?;
    let width = match (format.code, format.bits) {
        (FORMAT_PCM, 16) => 2,
        (FORMAT_IEEE_FLOAT, 32) => 4,
        (code, bits) => return Err(AudioError::UnsupportedEncoding(format!("format code {code} with {bits} bits per sample"))),
    };
    if !(1..=2).contains(&format.channels) {
        return Err(AudioError::UnsupportedEncoding(format!("{} channels", format.channels)));
    }
    if format.sample_rate == 0 {
        return Err(malformed("sample rate is zero"));
    }

    let channels = format.channels as usize;
    let frame_bytes = width * channels;
    let frames = data.len() / frame_bytes;
    if frames == 0 {
        return Err(AudioError::EmptyAudio);
    }

    let sample_at = |i: usize| -> f64 {
        let at = i * width;
        if width == 2 {
            i16::from_le_bytes([data[at], data[at + 1]]) as f64 / 32768.0
        } else {
            f32::from_le_bytes([data[at], data[at + 1], data[at + 2], data[at + 3]]) as f64
        }
    };
    let samples = (0..frames)
        .map(|f| {
            let v = if channels == 1 { sample_at(f) } else { (sample_at(2 * f) + sample_at(2 * f + 1)) / 2.0 };
            T::of(v)
        })
        .collect();
    AudioClip::new(samples, format.sample_rate)
}

/// Quantizes one sample to a PCM16 code, saturating at the extremes.
pub fn pcm16_code<T: Scalar>(s: T) -> i16 {
    (s.as_f64() * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Encodes a mono clip as a complete RIFF/WAVE byte stream.
pub fn encode_wav<T: Scalar>(clip: &AudioClip<T>, encoding: WavEncoding) -> Vec<u8> {
    let (code, bits) = match encoding {
        WavEncoding::Pcm16 => (FORMAT_PCM, 16u16),
        WavEncoding::Float32 => (FORMAT_IEEE_FLOAT, 32u16),
    };
    let block_align = bits / 8;
    let data_len = clip.len() as u32 * block_align as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&code.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate_hz * block_align as u32).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in clip.samples() {
        match encoding {
            WavEncoding::Pcm16 => out.extend_from_slice(&pcm16_code(s).to_le_bytes()),
            WavEncoding::Float32 => out.extend_from_slice(&(s.as_f64() as f32).to_le_bytes()),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResampleMethod {
    /// Kaiser-windowed sinc interpolation, zero phase.
    #[default]
    Sinc,
    Linear,
}

/// Converts a clip to `target_hz`. Output length is `round(len * target / source)`.
pub fn resample<T: Scalar>(clip: &AudioClip<T>, target_hz: u32, method: ResampleMethod) -> Result<AudioClip<T>, AudioError> {
    if target_hz == 0 {
        return Err(AudioError::InvalidSampleRate(target_hz));
    }
    let source_hz = clip.sample_rate_hz;
    if target_hz == source_hz {
        return Ok(clip.clone());
    }
    let out_len = ((clip.len() as f64 * target_hz as f64 / source_hz as f64).round() as usize).max(1);
    let step = source_hz as f64 / target_hz as f64;
    let samples = resample_slice(clip.samples(), step, out_len, method);
    AudioClip::new(samples, target_hz)
}

/// Stretches `x` to exactly `out_len` samples by band-limited interpolation.
pub(crate) fn resample_to_len<T: Scalar>(x: &[T], out_len: usize, method: ResampleMethod) -> Vec<T> {
    if out_len == x.len() {
        return x.to_vec();
    }
    let step = x.len() as f64 / out_len as f64;
    resample_slice(x, step, out_len, method)
}

/// Index into `0..n` under whole-sample symmetric reflection (no edge repeat).
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

const SINC_ZERO_CROSSINGS: usize = 32;
const SINC_TABLE_DENSITY: usize = 512;
const KAISER_BETA: f64 = 8.6;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Windowed sinc sampled on `[0, SINC_ZERO_CROSSINGS]` at `SINC_TABLE_DENSITY` points per unit.
fn sinc_table() -> &'static [f64] {
    static TABLE: std::sync::OnceLock<Vec<f64>> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| {
        let n = SINC_ZERO_CROSSINGS * SINC_TABLE_DENSITY + 2;
        let norm = bessel_i0(KAISER_BETA);
        (0..n)
            .map(|i| {
                let u = i as f64 / SINC_TABLE_DENSITY as f64;
                if u >= SINC_ZERO_CROSSINGS as f64 {
                    return 0.0;
                }
                let r = u / SINC_ZERO_CROSSINGS as f64;
                let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm;
                let sinc = if u == 0.0 {
                    1.0
                } else {
                    let pu = std::f64::consts::PI * u;
                    pu.sin() / pu
                };
                sinc * window
            })
            .collect()
    })
}

fn kernel(table: &[f64], u: f64) -> f64 {
    let pos = u.abs() * SINC_TABLE_DENSITY as f64;
    let i = pos as usize;
    if i + 1 >= table.len() {
        return 0.0;
    }
    let frac = pos - i as f64;
    table[i] + (table[i + 1] - table[i]) * frac
}

/// Output sample `j` sits at input position `j * step`.
fn resample_slice<T: Scalar>(x: &[T], step: f64, out_len: usize, method: ResampleMethod) -> Vec<T> {
    let n = x.len();
    let at = |i: isize| x[reflect_index(i, n)].as_f64();
    match method {
        ResampleMethod::Linear => (0..out_len)
            .map(|j| {
                let t = j as f64 * step;
                let i = t.floor();
                let frac = t - i;
                let i = i as isize;
                T::of(at(i) * (1.0 - frac) + at(i + 1) * frac)
            })
            .collect(),
        ResampleMethod::Sinc => {
            let table = sinc_table();
            // cutoff relative to the input Nyquist; below 1 when decimating
            let cutoff = (1.0 / step).min(1.0);
            let half_width = SINC_ZERO_CROSSINGS as f64 / cutoff;
            (0..out_len)
                .map(|j| {
                    let t = j as f64 * step;
                    let lo = (t - half_width).ceil() as isize;
                    let hi = (t + half_width).floor() as isize;
                    let mut acc = 0.0;
                    for i in lo..=hi {
                        acc += at(i) * kernel(table, cutoff * (t - i as f64));
                    }
                    T::of(acc * cutoff)
                })
                .collect()
        }
    }
}
