//! Scoring for PHQ-9, GAD-7, PANAS and STAI-T self-report instruments.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SurveyError {
    #[error("{instrument} expects {expected} items, got {found}")]
    BadItemCount { instrument: Instrument, expected: usize, found: usize },
    #[error("{instrument} item {index} = {value} outside {min}..={max}")]
    ItemOutOfRange { instrument: Instrument, index: usize, value: i64, min: i64, max: i64 },
    #[error("unknown {kind} `{value}`")]
    Unknown { kind: &'static str, value: String },
    #[error("invalid index set: {0}")]
    BadIndexSet(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Instrument {
    Phq9,
    Gad7,
    Panas,
    StaiT,
}

impl Instrument {
    pub fn item_count(self) -> usize {
        match self {
            Instrument::Phq9 => 9,
            Instrument::Gad7 => 7,
            Instrument::Panas | Instrument::StaiT => 20,
        }
    }

    pub fn item_range(self) -> (i64, i64) {
        match self {
            Instrument::Phq9 | Instrument::Gad7 => (0, 3),
            Instrument::Panas => (1, 5),
            Instrument::StaiT => (1, 4),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Instrument::Phq9 => "phq9",
            Instrument::Gad7 => "gad7",
            Instrument::Panas => "panas",
            Instrument::StaiT => "stai_t",
        }
    }
}

impl fmt::Display for Instrument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Instrument {
    type Err = SurveyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "phq9" => Ok(Instrument::Phq9),
            "gad7" => Ok(Instrument::Gad7),
            "panas" => Ok(Instrument::Panas),
            "stai_t" | "stait" => Ok(Instrument::StaiT),
            other => Err(SurveyError::Unknown { kind: "instrument", value: other.to_string() }),
        }
    }
}

/// Raw answers to one instrument, validated for count and range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurveyResponse {
    instrument: Instrument,
    items: Vec<u8>,
}

impl SurveyResponse {
    pub fn new(instrument: Instrument, items: &[i64]) -> Result<Self, SurveyError> {
        let expected = instrument.item_count();
        if items.len() != expected {
            return Err(SurveyError::BadItemCount { instrument, expected, found: items.len() });
        }
        let (min, max) = instrument.item_range();
        for (index, &value) in items.iter().enumerate() {
            if !(min..=max).contains(&value) {
                return Err(SurveyError::ItemOutOfRange { instrument, index, value, min, max });
            }
        }
        Ok(SurveyResponse { instrument, items: items.iter().map(|&v| v as u8).collect() })
    }

    pub fn instrument(&self) -> Instrument {
        self.instrument
    }

    pub fn items(&self) -> &[u8] {
        &self.items
    }

    fn expect(&self, instrument: Instrument) -> Result<(), SurveyError> {
        if self.instrument != instrument {
            return Err(SurveyError::Unknown { kind: "instrument for this scorer", value: self.instrument.to_string() });
        }
        Ok(())
    }

    fn total(&self) -> u32 {
        self.items.iter().map(|&v| v as u32).sum()
    }
}

/// PHQ-9 severity band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    None,
    Mild,
    Moderate,
    ModeratelySevere,
    Severe,
}

impl Band {
    pub const ALL: [Band; 5] = [Band::None, Band::Mild, Band::Moderate, Band::ModeratelySevere, Band::Severe];

    /// None 0-4, mild 5-9, moderate 10-14, moderately severe 15-19, severe 20-27.
    pub fn from_phq9_total(total: u32) -> Band {
        match total {
            0..=4 => Band::None,
            5..=9 => Band::Mild,
            10..=14 => Band::Moderate,
            15..=19 => Band::ModeratelySevere,
            _ => Band::Severe,
        }
    }

    pub fn total_range(self) -> (u32, u32) {
        match self {
            Band::None => (0, 4),
            Band::Mild => (5, 9),
            Band::Moderate => (10, 14),
            Band::ModeratelySevere => (15, 19),
            Band::Severe => (20, 27),
        }
    }

    pub fn binary(self) -> Binary {
        match self {
            Band::None | Band::Mild => Binary::NonDepressed,
            _ => Binary::Depressed,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Band::None => "none",
            Band::Mild => "mild",
            Band::Moderate => "moderate",
            Band::ModeratelySevere => "moderately_severe",
            Band::Severe => "severe",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Band {
    type Err = SurveyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Band::ALL.into_iter().find(|b| b.as_str() == s).ok_or_else(|| SurveyError::Unknown { kind: "band", value: s.to_string() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Binary {
    Depressed,
    NonDepressed,
}

impl Binary {
    pub fn as_str(self) -> &'static str {
        match self {
            Binary::Depressed => "depressed",
            Binary::NonDepressed => "non_depressed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DepressionLabel {
    pub phq9_total: u32,
    pub band: Band,
    pub binary: Binary,
}

impl DepressionLabel {
    pub fn from_total(phq9_total: u32) -> Self {
        let band = Band::from_phq9_total(phq9_total);
        DepressionLabel { phq9_total, band, binary: band.binary() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GadBand {
    Minimal,
    Mild,
    Moderate,
    Severe,
}

impl GadBand {
    pub const ALL: [GadBand; 4] = [GadBand::Minimal, GadBand::Mild, GadBand::Moderate, GadBand::Severe];

    pub fn from_total(total: u32) -> Self {
        match total {
            0..=4 => GadBand::Minimal,
            5..=9 => GadBand::Mild,
            10..=14 => GadBand::Moderate,
            _ => GadBand::Severe,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GadBand::Minimal => "minimal",
            GadBand::Mild => "mild",
            GadBand::Moderate => "moderate",
            GadBand::Severe => "severe",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StaiBand {
    Low,
    Medium,
    High,
}

impl StaiBand {
    pub const ALL: [StaiBand; 3] = [StaiBand::Low, StaiBand::Medium, StaiBand::High];

    /// Low below 38, medium 38-44, high above 44.
    pub fn from_total(total: u32) -> Self {
        match total {
            0..=37 => StaiBand::Low,
            38..=44 => StaiBand::Medium,
            _ => StaiBand::High,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StaiBand::Low => "low",
            StaiBand::Medium => "medium",
            StaiBand::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Negative, Polarity::Neutral];

    pub fn from_totals(pa: u32, na: u32) -> Self {
        match pa.cmp(&na) {
            std::cmp::Ordering::Greater => Polarity::Positive,
            std::cmp::Ordering::Less => Polarity::Negative,
            std::cmp::Ordering::Equal => Polarity::Neutral,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MoodLabel {
    pub pa_total: u32,
    pub na_total: u32,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GadLabel {
    pub gad7_total: u32,
    pub gad_band: GadBand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StaiLabel {
    pub stai_total: u32,
    pub stai_band: StaiBand,
}

/// Zero-based item positions. Validated to be distinct and below `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self, SurveyError> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(SurveyError::BadIndexSet("duplicate index".into()));
        }
        if indices.last().is_some_and(|&i| i >= n) {
            return Err(SurveyError::BadIndexSet(format!("index out of 0..{n}")));
        }
        Ok(IndexSet(indices))
    }

    /// From 1-based item numbers.
    pub fn from_item_numbers(numbers: &[usize], n: usize) -> Result<Self, SurveyError> {
        if numbers.contains(&0) {
            return Err(SurveyError::BadIndexSet("item numbers start at 1".into()));
        }
        IndexSet::new(numbers.iter().map(|k| k - 1).collect(), n)
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }
}

/// Positive-affect item numbers of the standard PANAS form; the remaining ten are negative affect.
pub const PANAS_PA_ITEMS: [usize; 10] = [1, 3, 5, 9, 10, 12, 14, 16, 17, 19];

/// Reverse-keyed items of the standard trait form, numbered 1..=20.
pub const STAI_T_REVERSED_ITEMS: [usize; 9] = [1, 3, 6, 7, 10, 13, 14, 16, 19];

pub fn default_panas_pa() -> IndexSet {
    IndexSet::from_item_numbers(&PANAS_PA_ITEMS, 20).expect("static set valid")
}

pub fn default_stai_reversed() -> IndexSet {
    IndexSet::from_item_numbers(&STAI_T_REVERSED_ITEMS, 20).expect("static set valid")
}

pub fn score_phq9(r: &SurveyResponse) -> Result<DepressionLabel, SurveyError> {
    r.expect(Instrument::Phq9)?;
    Ok(DepressionLabel::from_total(r.total()))
}

pub fn score_gad7(r: &SurveyResponse) -> Result<GadLabel, SurveyError> {
    r.expect(Instrument::Gad7)?;
    let total = r.total();
    Ok(GadLabel { gad7_total: total, gad_band: GadBand::from_total(total) })
}

/// PA and NA are the sums over `pa_items` and its complement.
pub fn score_panas(r: &SurveyResponse, pa_items: &IndexSet) -> Result<MoodLabel, SurveyError> {
    r.expect(Instrument::Panas)?;
    if pa_items.indices().len() != 10 {
        return Err(SurveyError::BadIndexSet(format!("PA set has {} items, expected 10", pa_items.indices().len())));
    }
    let (mut pa, mut na) = (0, 0);
    for (i, &v) in r.items.iter().enumerate() {
        if pa_items.contains(i) {
            pa += v as u32;
        } else {
            na += v as u32;
        }
    }
    Ok(MoodLabel { pa_total: pa, na_total: na, polarity: Polarity::from_totals(pa, na) })
}

/// Reversed items are mapped `x -> 5 - x` before summing.
pub fn score_stai_t(r: &SurveyResponse, reversed: &IndexSet) -> Result<StaiLabel, SurveyError> {
    r.expect(Instrument::StaiT)?;
    let total = r.items.iter().enumerate().map(|(i, &v)| if reversed.contains(i) { 5 - v as u32 } else { v as u32 }).sum();
    Ok(StaiLabel { stai_total: total, stai_band: StaiBand::from_total(total) })
}

/// One JSON-serializable scoring outcome for any instrument.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum Score {
    Phq9 { instrument: Instrument, total: u32, band: Band, binary: Binary },
    Gad7 { instrument: Instrument, total: u32, band: GadBand },
    Panas { instrument: Instrument, pa_total: u32, na_total: u32, polarity: Polarity },
    StaiT { instrument: Instrument, total: u32, band: StaiBand },
}

/// Scores with the default PANAS and STAI-T index sets.
pub fn score(r: &SurveyResponse) -> Result<Score, SurveyError> {
    let instrument = r.instrument;
    Ok(match instrument {
        Instrument::Phq9 => {
            let l = score_phq9(r)?;
            Score::Phq9 { instrument, total: l.phq9_total, band: l.band, binary: l.binary }
        }
        Instrument::Gad7 => {
            let l = score_gad7(r)?;
            Score::Gad7 { instrument, total: l.gad7_total, band: l.gad_band }
        }
        Instrument::Panas => {
            let l = score_panas(r, &default_panas_pa())?;
            Score::Panas { instrument, pa_total: l.pa_total, na_total: l.na_total, polarity: l.polarity }
        }
        Instrument::StaiT => {
            let l = score_stai_t(r, &default_stai_reversed())?;
            Score::StaiT { instrument, total: l.stai_total, band: l.stai_band }
        }
    })
}
