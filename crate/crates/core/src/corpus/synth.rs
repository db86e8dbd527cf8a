//! Deterministic stand-in corpus with class-correlated acoustics.
//!
//! Each synthetic speaker gets a PHQ-9 band and a voice whose fundamental
//! range, amplitude-modulation rate (a speaking-rate surrogate) and noise
//! floor are functions of that band. The recipe carries label signal for
//! tests and demos; it is not a model of depressed speech.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{write_manifest, CorpusError, Language, ManifestEntry, StimulusCategory, SENTENCES_PER_LANGUAGE};
use crate::audio::{write_wav, AudioClip, WavEncoding, CANONICAL_SAMPLE_RATE};
use crate::parallel::map_ordered;
use crate::seeding::rng_for;
use crate::surveys::{default_panas_pa, default_stai_reversed, score_panas, score_stai_t, Band, Instrument, SurveyResponse};

/// Bands assigned round-robin to synthetic speakers.
pub const SYNTH_CLASSES: [Band; 4] = [Band::None, Band::Mild, Band::Moderate, Band::ModeratelySevere];

/// One participant per synthesised class.
pub const MIN_SYNTH_PARTICIPANTS: usize = SYNTH_CLASSES.len();

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub participants: usize,
    pub seed: u64,
    pub sample_rate_hz: u32,
    pub jobs: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions { participants: 32, seed: 42, sample_rate_hz: CANONICAL_SAMPLE_RATE, jobs: 1 }
    }
}

struct VoiceProfile {
    f0_range: (f64, f64),
    am_rate_hz: f64,
    noise_floor: f64,
}

fn profile(band: Band) -> VoiceProfile {
    match band {
        Band::None => VoiceProfile { f0_range: (205.0, 235.0), am_rate_hz: 6.0, noise_floor: 0.004 },
        Band::Mild => VoiceProfile { f0_range: (175.0, 205.0), am_rate_hz: 5.0, noise_floor: 0.010 },
        Band::Moderate => VoiceProfile { f0_range: (145.0, 175.0), am_rate_hz: 4.0, noise_floor: 0.020 },
        Band::ModeratelySevere => VoiceProfile { f0_range: (115.0, 145.0), am_rate_hz: 3.0, noise_floor: 0.035 },
        Band::Severe => VoiceProfile { f0_range: (95.0, 115.0), am_rate_hz: 2.5, noise_floor: 0.050 },
    }
}

/// Items in `lo..=hi` whose sum is exactly `target`.
fn items_with_total(rng: &mut ChaCha8Rng, n: usize, lo: i64, hi: i64, target: i64) -> Vec<i64> {
    let target = target.clamp(lo * n as i64, hi * n as i64);
    let mut items = vec![lo; n];
    let mut sum = lo * n as i64;
    while sum < target {
        let i = rng.gen_range(0..n);
        if items[i] < hi {
            items[i] += 1;
            sum += 1;
        }
    }
    items
}

struct Participant {
    id: String,
    band: Band,
    phq9: u32,
    gad7: u32,
    pa: u32,
    na: u32,
    stai: u32,
    f0: f64,
}

fn participant(index: usize, seed: u64) -> Participant {
    let id = format!("S{:03}", index + 1);
    let mut rng = rng_for(seed, &format!("synth/participant/{id}"));
    let band = SYNTH_CLASSES[index % SYNTH_CLASSES.len()];
    let (lo, hi) = band.total_range();
    let phq9_target = rng.gen_range(lo..=hi) as i64;
    let phq9: u32 = items_with_total(&mut rng, 9, 0, 3, phq9_target).iter().sum::<i64>() as u32;

    let severity = band.index() as f64;
    let gad_target = (severity * 4.0 + rng.gen_range(0.0..6.0)).round() as i64;
    let gad7 = items_with_total(&mut rng, 7, 0, 3, gad_target).iter().sum::<i64>() as u32;

    let pa_set = default_panas_pa();
    let panas: Vec<i64> = (0..20)
        .map(|i| {
            let bias = if pa_set.contains(i) { 3.5 - 0.4 * severity } else { 1.8 + 0.4 * severity };
            (bias + rng.gen_range(-1.5..1.5)).round().clamp(1.0, 5.0) as i64
        })
        .collect();
    let mood = score_panas(&SurveyResponse::new(Instrument::Panas, &panas).expect("items in range"), &pa_set).expect("panas response");

    let stai: Vec<i64> = (0..20).map(|_| rng.gen_range(1..=4)).collect();
    let stai = score_stai_t(&SurveyResponse::new(Instrument::StaiT, &stai).expect("items in range"), &default_stai_reversed())
        .expect("stai response");

    let (f_lo, f_hi) = profile(band).f0_range;
    Participant { id, band, phq9, gad7, pa: mood.pa_total, na: mood.na_total, stai: stai.stai_total, f0: rng.gen_range(f_lo..f_hi) }
}

fn render_clip(p: &Participant, language: Language, sentence: u8, seed: u64, sample_rate_hz: u32) -> AudioClip<f64> {
    let mut rng = rng_for(seed, &format!("synth/clip/{}/{}/{}", p.id, language, sentence));
    let voice = profile(p.band);
    let sr = sample_rate_hz as f64;
    let seconds = match StimulusCategory::for_sentence(sentence) {
        Some(StimulusCategory::Coordination) => rng.gen_range(0.8..1.0),
        _ => rng.gen_range(0.6..0.85),
    };
    let n = (seconds * sr) as usize;
    let f0 = p.f0 * rng.gen_range(0.98..1.02);
    let am_rate = voice.am_rate_hz * rng.gen_range(0.9..1.1);
    let am_phase = rng.gen_range(0.0..std::f64::consts::TAU);
    // spectral tilt differs between the two languages; the class cues do not
    let tilt = match language {
        Language::En => 1.0,
        Language::Ml => 1.3,
    };
    let glide_rate = rng.gen_range(0.8..1.6);
    let harmonics: Vec<(f64, f64)> =
        (1..).take_while(|h| (*h as f64) * f0 * 1.05 < 4000.0).map(|h| (h as f64, rng.gen_range(0.0..std::f64::consts::TAU))).collect();
    let gain: f64 = harmonics.iter().map(|(h, _)| h.powf(-tilt)).sum();
    let fade = (0.02 * sr) as usize;

    let mut phase = 0.0;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let inst_f0 = f0 * (1.0 + 0.03 * (std::f64::consts::TAU * glide_rate * t).sin());
            phase += std::f64::consts::TAU * inst_f0 / sr;
            let voiced: f64 = harmonics.iter().map(|(h, ph)| h.powf(-tilt) * (h * phase + ph).sin()).sum::<f64>() / gain;
            let am = 0.55 + 0.45 * (std::f64::consts::TAU * am_rate * t + am_phase).sin();
            let edge = (i.min(n - 1 - i) as f64 / fade as f64).min(1.0);
            let noise = voice.noise_floor * rng.gen_range(-1.0..1.0);
            0.5 * edge * am * voiced + noise
        })
        .collect();
    AudioClip::new(samples, sample_rate_hz).expect("non-empty clip")
}

/// Writes `out_dir/manifest.csv` and `out_dir/audio/*.wav` (PCM16): 44 clips per participant.
pub fn synth_corpus(opts: &SynthOptions, out_dir: &Path) -> Result<Vec<ManifestEntry>, CorpusError> {
    if opts.participants < MIN_SYNTH_PARTICIPANTS {
        return Err(CorpusError::Invalid(format!("need at least {MIN_SYNTH_PARTICIPANTS} participants, got {}", opts.participants)));
    }
    let audio_dir = out_dir.join("audio");
    std::fs::create_dir_all(&audio_dir).map_err(|e| CorpusError::Io(format!("{}: {e}", audio_dir.display())))?;

    let indices: Vec<usize> = (0..opts.participants).collect();
    let per_participant = map_ordered(opts.jobs, &indices, |&i| {
        let p = participant(i, opts.seed);
        let mut rows = Vec::new();
        for language in Language::ALL {
            for sentence in 1..=SENTENCES_PER_LANGUAGE {
                let clip = render_clip(&p, language, sentence, opts.seed, opts.sample_rate_hz);
                let rel = format!("audio/{}_{}_{:02}.wav", p.id, language, sentence);
                write_wav(&clip, out_dir.join(&rel), WavEncoding::Pcm16)?;
                rows.push(ManifestEntry {
                    participant_id: p.id.clone(),
                    language,
                    category: StimulusCategory::for_sentence(sentence).expect("sentence in range"),
                    sentence_id: sentence,
                    audio_path: rel,
                    phq9_total: p.phq9,
                    gad7_total: p.gad7,
                    pa_total: p.pa,
                    na_total: p.na,
                    stai_total: p.stai,
                    label_band: p.band,
                    split: None,
                    augmented_from: None,
                });
            }
        }
        Ok::<_, CorpusError>(rows)
    })?;
    let entries: Vec<ManifestEntry> = per_participant.into_iter().flatten().collect();
    write_manifest(out_dir.join("manifest.csv"), &entries)?;
    Ok(entries)
}
