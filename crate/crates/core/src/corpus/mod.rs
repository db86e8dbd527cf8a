//! Corpus manifest: one row per recorded (or augmented) utterance.
//!
//! Each participant reads 22 stimulus sentences in English and the same 22 in
//! Malayalam. The manifest is a UTF-8 CSV whose header is
//! [`MANIFEST_HEADER`]; relative audio paths resolve against the manifest's
//! directory.

mod split;
mod stats;
mod synth;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

pub use split::{split, SplitSpec, SplitUnit};
pub use stats::{summarize, CategoryCount, DistributionReport};
pub use synth::{synth_corpus, SynthOptions, MIN_SYNTH_PARTICIPANTS, SYNTH_CLASSES};

use crate::audio::AudioError;
use crate::surveys::Band;

pub const MANIFEST_HEADER: [&str; 13] = [
    "participant_id",
    "language",
    "category",
    "sentence_id",
    "audio_path",
    "phq9_total",
    "gad7_total",
    "pa_total",
    "na_total",
    "stai_total",
    "label_band",
    "split",
    "augmented_from",
];

pub const SENTENCES_PER_LANGUAGE: u8 = 22;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("manifest schema error: {0}")]
    Schema(String),
    #[error("manifest line {line}: {message}")]
    Consistency { line: usize, message: String },
    #[error("duplicate utterance {0}")]
    DuplicateUtterance(String),
    #[error("stratum `{stratum}` has {found} units, at least {needed} required")]
    TooFewEntries { stratum: String, found: usize, needed: usize },
    #[error("invalid split fractions: {0}")]
    InvalidSplit(String),
    #[error("invalid corpus request: {0}")]
    Invalid(String),
    #[error("corpus I/O failure: {0}")]
    Io(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Language {
    En,
    Ml,
}

impl Language {
    pub const ALL: [Language; 2] = [Language::En, Language::Ml];

    pub fn as_str(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Ml => "ml",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "en" => Ok(Language::En),
            "ml" => Ok(Language::Ml),
            other => Err(format!("unknown language `{other}`")),
        }
    }
}

/// Sentence types of the read-speech stimuli.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StimulusCategory {
    Simple,
    WhQuestion,
    NoMorphosyntacticMarker,
    InversionQuestion,
    Coordination,
}

impl StimulusCategory {
    pub const ALL: [StimulusCategory; 5] = [
        StimulusCategory::Simple,
        StimulusCategory::WhQuestion,
        StimulusCategory::NoMorphosyntacticMarker,
        StimulusCategory::InversionQuestion,
        StimulusCategory::Coordination,
    ];

    /// Sentences of this category per language: 8/3/3/3/5.
    pub fn count(self) -> u8 {
        match self {
            StimulusCategory::Simple => 8,
            StimulusCategory::Coordination => 5,
            _ => 3,
        }
    }

    /// Category of sentence `1..=22`, numbering categories in [`Self::ALL`] order.
    pub fn for_sentence(sentence_id: u8) -> Option<Self> {
        let mut upper = 0;
        for c in Self::ALL {
            upper += c.count();
            if (1..=upper).contains(&sentence_id) {
                return Some(c);
            }
        }
        None
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StimulusCategory::Simple => "simple",
            StimulusCategory::WhQuestion => "wh_question",
            StimulusCategory::NoMorphosyntacticMarker => "no_morphosyntactic_marker",
            StimulusCategory::InversionQuestion => "inversion_question",
            StimulusCategory::Coordination => "coordination",
        }
    }
}

impl FromStr for StimulusCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| format!("unknown category `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub participant_id: String,
    pub language: Language,
    pub category: StimulusCategory,
    pub sentence_id: u8,
    pub audio_path: String,
    pub phq9_total: u32,
    pub gad7_total: u32,
    pub pa_total: u32,
    pub na_total: u32,
    pub stai_total: u32,
    pub label_band: Band,
    /// `None` until a split has been assigned.
    pub split: Option<Split>,
    pub augmented_from: Option<String>,
}

impl ManifestEntry {
    /// `<participant>_<language>_<sentence:02>` for recordings; the audio file stem for augmented rows.
    pub fn utterance_id(&self) -> String {
        match &self.augmented_from {
            None => format!("{}_{}_{:02}", self.participant_id, self.language, self.sentence_id),
            Some(_) => {
                Path::new(&self.audio_path).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| self.audio_path.clone())
            }
        }
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented_from.is_some()
    }

    pub fn resolve_audio(&self, base_dir: &Path) -> PathBuf {
        let p = Path::new(&self.audio_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base_dir.join(p)
        }
    }

    fn to_record(&self) -> [String; 13] {
        [
            self.participant_id.clone(),
            self.language.to_string(),
            self.category.as_str().to_string(),
            self.sentence_id.to_string(),
            self.audio_path.clone(),
            self.phq9_total.to_string(),
            self.gad7_total.to_string(),
            self.pa_total.to_string(),
            self.na_total.to_string(),
            self.stai_total.to_string(),
            self.label_band.to_string(),
            self.split.map(|s| s.as_str().to_string()).unwrap_or_default(),
            self.augmented_from.clone().unwrap_or_default(),
        ]
    }
}

pub fn manifest_to_string(entries: &[ManifestEntry]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(MANIFEST_HEADER).expect("in-memory write");
    for e in entries {
        w.write_record(e.to_record()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    std::fs::write(path, manifest_to_string(entries)).map_err(|e| CorpusError::Io(format!("{}: {e}", path.display())))
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::Io(format!("{}: {e}", path.display())))?;
    parse_manifest(&text)
}

fn in_range(line: usize, name: &str, v: u32, lo: u32, hi: u32) -> Result<u32, CorpusError> {
    if (lo..=hi).contains(&v) {
        Ok(v)
    } else {
        Err(CorpusError::Consistency { line, message: format!("{name} {v} outside {lo}..={hi}") })
    }
}

/// Parses and validates manifest CSV text.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| CorpusError::Schema(e.to_string()))?.clone();
    let columns: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    let mut index = [0usize; 13];
    for (slot, name) in index.iter_mut().zip(MANIFEST_HEADER) {
        *slot = *columns.get(name).ok_or_else(|| CorpusError::Schema(format!("missing column `{name}`")))?;
    }

    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| CorpusError::Schema(format!("line {line}: {e}")))?;
        let field = |i: usize| record.get(index[i]).unwrap_or("").trim();
        let bad = |message: String| CorpusError::Consistency { line, message };
        let num = |i: usize| -> Result<u32, CorpusError> {
            field(i).parse().map_err(|_| bad(format!("{} `{}` is not an integer", MANIFEST_HEADER[i], field(i))))
        };

        let participant_id = field(0).to_string();
        if participant_id.is_empty() {
            return Err(bad("empty participant_id".into()));
        }
        let language = field(1).parse().map_err(bad)?;
        let category = field(2).parse().map_err(bad)?;
        let sentence_id = num(3)?;
        if !(1..=SENTENCES_PER_LANGUAGE as u32).contains(&sentence_id) {
            return Err(bad(format!("sentence_id {sentence_id} outside 1..={SENTENCES_PER_LANGUAGE}")));
        }
        let phq9_total = in_range(line, "phq9_total", num(5)?, 0, 27)?;
        let label_band: Band = field(10).parse().map_err(|e: crate::surveys::SurveyError| bad(e.to_string()))?;
        let expected = Band::from_phq9_total(phq9_total);
        if label_band != expected {
            return Err(bad(format!("label_band {label_band} but phq9_total {phq9_total} implies {expected}")));
        }
        let split = match field(11) {
            "" => None,
            s => Some(s.parse().map_err(bad)?),
        };
        let augmented_from = match field(12) {
            "" => None,
            s => Some(s.to_string()),
        };
        let entry = ManifestEntry {
            participant_id,
            language,
            category,
            sentence_id: sentence_id as u8,
            audio_path: field(4).to_string(),
            phq9_total,
            gad7_total: in_range(line, "gad7_total", num(6)?, 0, 21)?,
            pa_total: in_range(line, "pa_total", num(7)?, 10, 50)?,
            na_total: in_range(line, "na_total", num(8)?, 10, 50)?,
            stai_total: in_range(line, "stai_total", num(9)?, 20, 80)?,
            label_band,
            split,
            augmented_from,
        };
        if entry.audio_path.is_empty() {
            return Err(bad("empty audio_path".into()));
        }
        if !seen.insert(entry.utterance_id()) {
            return Err(CorpusError::DuplicateUtterance(entry.utterance_id()));
        }
        entries.push(entry);
    }
    Ok(entries)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn entry(pid: &str, lang: Language, sentence: u8, phq: u32) -> ManifestEntry {
        ManifestEntry {
            participant_id: pid.to_string(),
            language: lang,
            category: StimulusCategory::for_sentence(sentence).unwrap(),
            sentence_id: sentence,
            audio_path: format!("audio/{pid}_{lang}_{sentence:02}.wav"),
            phq9_total: phq,
            gad7_total: 3,
            pa_total: 30,
            na_total: 20,
            stai_total: 40,
            label_band: Band::from_phq9_total(phq),
            split: None,
            augmented_from: None,
        }
    }

    #[test]
    fn category_counts() {
        let total: u8 = StimulusCategory::ALL.iter().map(|c| c.count()).sum();
        assert_eq!(total, 22);
        assert_eq!(StimulusCategory::for_sentence(1), Some(StimulusCategory::Simple));
        assert_eq!(StimulusCategory::for_sentence(9), Some(StimulusCategory::WhQuestion));
        assert_eq!(StimulusCategory::for_sentence(22), Some(StimulusCategory::Coordination));
        assert_eq!(StimulusCategory::for_sentence(23), None);
    }

    #[test]
    fn loads_two_rows() {
        let text = manifest_to_string(&[entry("P1", Language::En, 1, 3), entry("P1", Language::Ml, 1, 3)]);
        assert_eq!(parse_manifest(&text).unwrap().len(), 2);
    }

    #[test]
    fn band_mismatch_is_a_consistency_error() {
        let mut e = entry("P1", Language::En, 1, 12);
        e.label_band = Band::Mild;
        let err = parse_manifest(&manifest_to_string(&[e])).unwrap_err();
        assert!(matches!(err, CorpusError::Consistency { line: 2, .. }), "{err}");
    }

    #[test]
    fn duplicates_are_rejected() {
        let e = entry("P1", Language::En, 4, 0);
        let err = parse_manifest(&manifest_to_string(&[e.clone(), e])).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateUtterance(ref id) if id == "P1_en_04"));
    }

    #[test]
    fn missing_column_is_a_schema_error() {
        let err = parse_manifest("participant_id,language\nP1,en\n").unwrap_err();
        assert!(matches!(err, CorpusError::Schema(ref m) if m.contains("category")));
    }

    #[test]
    fn augmented_rows_use_file_stem() {
        let mut e = entry("P1", Language::En, 4, 0);
        e.augmented_from = Some("P1_en_04".into());
        e.audio_path = "aug/P1_en_04__noise0.035.wav".into();
        assert_eq!(e.utterance_id(), "P1_en_04__noise0.035");
    }

    fn arb_entry() -> impl Strategy<Value = ManifestEntry> {
        ("[A-Z][a-z0-9,\"]{0,6}", 0usize..2, 1u8..=22, 0u32..=27, 0u32..=21, 10u32..=50, 10u32..=50, 20u32..=80, 0usize..4).prop_map(
            |(pid, lang, sid, phq, gad, pa, na, stai, split)| ManifestEntry {
                participant_id: pid,
                language: Language::ALL[lang],
                category: StimulusCategory::for_sentence(sid).unwrap(),
                sentence_id: sid,
                audio_path: format!("a/{sid}.wav"),
                phq9_total: phq,
                gad7_total: gad,
                pa_total: pa,
                na_total: na,
                stai_total: stai,
                label_band: Band::from_phq9_total(phq),
                split: [None, Some(Split::Train), Some(Split::Val), Some(Split::Test)][split],
                augmented_from: None,
            },
        )
    }

    proptest! {
        #[test]
        fn manifest_round_trips(entries in prop::collection::vec(arb_entry(), 0..8)) {
            let mut seen = HashSet::new();
            let unique: Vec<_> = entries.into_iter().filter(|e| seen.insert(e.utterance_id())).collect();
            prop_assert_eq!(parse_manifest(&manifest_to_string(&unique)).unwrap(), unique);
        }
    }
}
