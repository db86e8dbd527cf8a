//! Phase-vocoder time-scale modification.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::features::hann_window;
use crate::scalar::Scalar;

/// Analysis frame length in samples.
pub const STRETCH_FRAME: usize = 2048;
/// Analysis hop; eight-fold overlap keeps the synthesis hop at or below half a frame for rates down to 0.25.
pub const STRETCH_HOP: usize = STRETCH_FRAME / 8;

fn wrap_phase(p: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    p - two_pi * ((p + std::f64::consts::PI) / two_pi).floor()
}

/// Time-scales `x` by `1 / rate` keeping its spectral content. Returns exactly `round(len / rate)` samples.
///
/// Frames are analysed every [`STRETCH_HOP`] samples and resynthesised every
/// `STRETCH_HOP / rate` samples. Each bin's phase is advanced by its
/// instantaneous frequency times the synthesis spacing.
pub(crate) fn phase_vocoder<T: Scalar>(x: &[T], rate: f64) -> Vec<T> {
    let n = STRETCH_FRAME;
    let half = n / 2;
    let bins = half + 1;
    let out_len = ((x.len() as f64 / rate).round() as usize).max(1);

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let window: Vec<f64> = hann_window::<f64>(n);

    // centre frames on multiples of the hop
    let mut padded = vec![0.0; half];
    padded.extend(x.iter().map(|s| s.as_f64()));
    padded.resize(half + x.len() + n, 0.0);

    let frames = x.len() / STRETCH_HOP + 2;
    let synth_pos = |m: usize| (m as f64 * STRETCH_HOP as f64 / rate).round() as usize;
    let omega: Vec<f64> = (0..bins).map(|k| 2.0 * std::f64::consts::PI * k as f64 / n as f64).collect();

    let out_cap = synth_pos(frames) + n + half;
    let mut out = vec![0.0; out_cap];
    let mut norm = vec![0.0; out_cap];
    let mut prev_phase = vec![0.0; bins];
    let mut acc_phase = vec![0.0; bins];
    let mut buf = vec![Complex::new(0.0, 0.0); n];

    for m in 0..frames {
        let start = m * STRETCH_HOP;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex::new(padded[start + i] * window[i], 0.0);
        }
        forward.process(&mut buf);

        let spacing = if m == 0 { 0.0 } else { (synth_pos(m) - synth_pos(m - 1)) as f64 };
        for k in 0..bins {
            let phase = buf[k].arg();
            if m == 0 {
                acc_phase[k] = phase;
            } else {
                let expected = omega[k] * STRETCH_HOP as f64;
                let deviation = wrap_phase(phase - prev_phase[k] - expected);
                let inst_freq = omega[k] + deviation / STRETCH_HOP as f64;
                acc_phase[k] += inst_freq * spacing;
            }
            prev_phase[k] = phase;
            buf[k] = Complex::from_polar(buf[k].norm(), acc_phase[k]);
        }
        for k in bins..n {
            buf[k] = buf[n - k].conj();
        }
        inverse.process(&mut buf);

        let at = synth_pos(m);
        for i in 0..n {
            let w = window[i];
            out[at + i] += buf[i].re / n as f64 * w;
            norm[at + i] += w * w;
        }
    }

    (0..out_len)
        .map(|i| {
            let j = i + half;
            T::of(out[j] / norm[j].max(1e-3))
        })
        .collect()
}
