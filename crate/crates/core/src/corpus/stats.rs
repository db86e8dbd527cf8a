use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::ManifestEntry;
use crate::surveys::{Band, GadBand, Polarity, StaiBand};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryCount {
    pub name: String,
    pub count: usize,
    /// `count / participants * 100`, rounded to two decimals.
    pub percent: f64,
}

/// Participant-level distribution over every survey's categories.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionReport {
    pub participants: usize,
    pub phq9: Vec<CategoryCount>,
    pub gad7: Vec<CategoryCount>,
    pub panas: Vec<CategoryCount>,
    pub stai_t: Vec<CategoryCount>,
}

fn percent(count: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    (count as f64 / total as f64 * 10_000.0).round() / 100.0
}

fn tally<K: Ord + Copy>(keys: &[K], values: impl Iterator<Item = K>, name: impl Fn(K) -> &'static str, total: usize) -> Vec<CategoryCount> {
    let mut counts: BTreeMap<K, usize> = keys.iter().map(|&k| (k, 0)).collect();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    keys.iter().map(|&k| CategoryCount { name: name(k).to_string(), count: counts[&k], percent: percent(counts[&k], total) }).collect()
}

/// Counts each participant once, using their first row.
pub fn summarize(entries: &[ManifestEntry]) -> DistributionReport {
    let mut people: BTreeMap<&str, &ManifestEntry> = BTreeMap::new();
    for e in entries {
        people.entry(&e.participant_id).or_insert(e);
    }
    let total = people.len();
    let rows = || people.values().copied();
    DistributionReport {
        participants: total,
        phq9: tally(&Band::ALL, rows().map(|e| e.label_band), Band::as_str, total),
        gad7: tally(&GadBand::ALL, rows().map(|e| GadBand::from_total(e.gad7_total)), GadBand::as_str, total),
        panas: tally(&Polarity::ALL, rows().map(|e| Polarity::from_totals(e.pa_total, e.na_total)), Polarity::as_str, total),
        stai_t: tally(&StaiBand::ALL, rows().map(|e| StaiBand::from_total(e.stai_total)), StaiBand::as_str, total),
    }
}

impl fmt::Display for DistributionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "participants: {}", self.participants)?;
        for (title, rows) in [("PHQ-9", &self.phq9), ("GAD-7", &self.gad7), ("PANAS", &self.panas), ("STAI-T", &self.stai_t)] {
            writeln!(f, "{title}")?;
            for r in rows {
                writeln!(f, "  {:<18} {:>5} {:>7.2}%", r.name, r.count, r.percent)?;
            }
        }
        Ok(())
    }
}
