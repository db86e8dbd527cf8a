use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;

use super::{CorpusError, ManifestEntry, Split};
use crate::seeding::rng_for;

/// Minimum units per stratum when stratifying.
pub const MIN_STRATUM_UNITS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitUnit {
    /// Every recording is assigned independently. Speakers leak across splits.
    Utterance,
    /// All recordings of a speaker share one split.
    Participant,
}

impl std::fmt::Display for SplitUnit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitUnit::Utterance => "utterance",
            SplitUnit::Participant => "participant",
        })
    }
}

impl std::str::FromStr for SplitUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "utterance" => Ok(SplitUnit::Utterance),
            "participant" => Ok(SplitUnit::Participant),
            other => Err(format!("unknown split unit `{other}` (expected utterance|participant)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub unit: SplitUnit,
    pub seed: u64,
    /// Split each label band separately.
    pub stratify: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train: 0.64, val: 0.16, test: 0.20, unit: SplitUnit::Utterance, seed: 0, stratify: true }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let fractions = [self.train, self.val, self.test];
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(CorpusError::InvalidSplit(format!("fractions {fractions:?} must lie in [0, 1]")));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidSplit(format!("fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Assigns train/val/test to every recording; augmented rows follow their source.
///
/// Units are sorted by key before a seeded shuffle, so the assignment does not
/// depend on input order. Per stratum the train and validation counts are
/// `round(fraction * n)` and test takes the remainder.
pub fn split(entries: &[ManifestEntry], spec: &SplitSpec) -> Result<Vec<ManifestEntry>, CorpusError> {
    spec.validate()?;

    let unit_key = |e: &ManifestEntry| match spec.unit {
        SplitUnit::Utterance => e.utterance_id(),
        SplitUnit::Participant => e.participant_id.clone(),
    };
    let mut strata: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut unit_stratum: HashMap<String, String> = HashMap::new();
    for e in entries.iter().filter(|e| !e.is_augmented()) {
        let key = unit_key(e);
        let stratum = if spec.stratify { e.label_band.to_string() } else { "all".to_string() };
        match unit_stratum.get(&key) {
            Some(s) if *s != stratum => {
                return Err(CorpusError::InvalidSplit(format!("unit {key} spans label bands {s} and {stratum}")));
            }
            Some(_) => {}
            None => {
                unit_stratum.insert(key.clone(), stratum.clone());
                strata.entry(stratum).or_default().push(key);
            }
        }
    }

    let mut assignment: HashMap<String, Split> = HashMap::new();
    for (stratum, mut units) in strata {
        let n = units.len();
        if spec.stratify && n < MIN_STRATUM_UNITS {
            return Err(CorpusError::TooFewEntries { stratum, found: n, needed: MIN_STRATUM_UNITS });
        }
        units.sort();
        units.shuffle(&mut rng_for(spec.seed, &format!("split/{stratum}")));
        let n_train = ((spec.train * n as f64).round() as usize).min(n);
        let n_val = ((spec.val * n as f64).round() as usize).min(n - n_train);
        for (i, unit) in units.into_iter().enumerate() {
            let s = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            assignment.insert(unit, s);
        }
    }

    let by_utterance: HashMap<String, Split> =
        entries.iter().filter(|e| !e.is_augmented()).map(|e| (e.utterance_id(), assignment[&unit_key(e)])).collect();
    entries
        .iter()
        .map(|e| {
            let mut out = e.clone();
            out.split = Some(match &e.augmented_from {
                None => by_utterance[&e.utterance_id()],
                Some(src) => *by_utterance
                    .get(src)
                    .ok_or_else(|| CorpusError::InvalidSplit(format!("augmented row {} has unknown source {src}", e.utterance_id())))?,
            });
            Ok(out)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::tests::entry;
    use super::super::Language;
    use super::*;

    fn counts(entries: &[ManifestEntry]) -> [usize; 3] {
        let mut c = [0; 3];
        for e in entries {
            c[e.split.unwrap() as usize] += 1;
        }
        c
    }

    fn hundred() -> Vec<ManifestEntry> {
        (0..100).map(|i| entry(&format!("P{:02}", i / 2), Language::ALL[i % 2], 1, 2)).collect()
    }

    #[test]
    fn hundred_utterances_split_64_16_20() {
        let spec = SplitSpec { seed: 3, ..SplitSpec::default() };
        let out = split(&hundred(), &spec).unwrap();
        assert_eq!(counts(&out), [64, 16, 20]);
        assert_eq!(out, split(&hundred(), &spec).unwrap());
    }

    #[test]
    fn order_does_not_matter() {
        let spec = SplitSpec { seed: 11, ..SplitSpec::default() };
        let forward = split(&hundred(), &spec).unwrap();
        let mut reversed_in = hundred();
        reversed_in.reverse();
        let mut reversed = split(&reversed_in, &spec).unwrap();
        reversed.reverse();
        assert_eq!(forward, reversed);
    }

    #[test]
    fn participant_mode_keeps_speakers_together() {
        let entries: Vec<_> =
            (0..40).flat_map(|p| (1..=4).map(move |s| entry(&format!("P{p}"), Language::En, s, (p % 4) as u32 * 5))).collect();
        let spec = SplitSpec { unit: SplitUnit::Participant, seed: 5, ..SplitSpec::default() };
        let out = split(&entries, &spec).unwrap();
        let mut by_pid: HashMap<&str, Split> = HashMap::new();
        for e in &out {
            let s = *by_pid.entry(&e.participant_id).or_insert(e.split.unwrap());
            assert_eq!(s, e.split.unwrap());
        }
    }

    #[test]
    fn small_strata_and_bad_fractions_fail() {
        let few: Vec<_> = (1..=4).map(|s| entry("P", Language::En, s, 0)).collect();
        assert!(matches!(split(&few, &SplitSpec::default()), Err(CorpusError::TooFewEntries { found: 4, .. })));
        let bad = SplitSpec { train: 0.9, val: 0.2, test: 0.2, ..SplitSpec::default() };
        assert!(matches!(split(&hundred(), &bad), Err(CorpusError::InvalidSplit(_))));
    }

    #[test]
    fn augmented_rows_inherit_source_split() {
        let mut entries = hundred();
        let mut aug = entries[7].clone();
        aug.augmented_from = Some(entries[7].utterance_id());
        aug.audio_path = format!("aug/{}__noise0.035.wav", entries[7].utterance_id());
        entries.push(aug);
        let out = split(&entries, &SplitSpec::default()).unwrap();
        assert_eq!(out[100].split, out[7].split);
    }
}
