//! Accuracy and confusion matrices over manifest entries, pooled, per language
//! and collapsed to depressed / non-depressed, plus report export.

pub mod svg;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Language, ManifestEntry};
use crate::features::{FeatureVector, FEATURE_WIDTH};
use crate::nn::{History, Model, NnError};
use crate::scalar::Scalar;
use crate::surveys::Band;
use svg::{heatmap, line_chart, Series};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no feature vector for utterance {0}")]
    MissingFeatures(String),
    #[error("label {label} of utterance {utterance} is outside the model's {classes} classes")]
    ClassMismatch { utterance: String, label: String, classes: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Class names for a `k`-class model: the first `k` PHQ-9 bands in severity order.
pub fn class_names(k: usize) -> Vec<String> {
    Band::ALL.iter().take(k).map(|b| b.as_str().to_string()).collect()
}

/// Counts indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    class_names: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Self {
        let k = class_names.len();
        ConfusionMatrix { class_names, counts: vec![vec![0; k]; k] }
    }

    /// Tallies `(truth, prediction)` pairs; both must be `< class_names.len()`.
    pub fn from_pairs(class_names: Vec<String>, truth: &[usize], predicted: &[usize]) -> Self {
        let mut m = Self::new(class_names);
        for (&t, &p) in truth.iter().zip(predicted) {
            m.add(t, p);
        }
        m
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    /// `trace / total`, or 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            total => self.trace() as f64 / total as f64,
        }
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Whether each row's diagonal count is at least every off-diagonal count in that row.
    pub fn diagonal_dominance(&self) -> Vec<bool> {
        self.counts.iter().enumerate().map(|(i, row)| row.iter().all(|&c| c <= row[i])).collect()
    }

    /// Accuracy after mapping classes to depressed / non-depressed.
    pub fn binary_accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let binary = |i: usize| Band::ALL[i].binary();
        let agree: u64 = self
            .counts
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().filter(move |(j, _)| binary(i) == binary(*j)).map(|(_, &c)| c))
            .sum();
        agree as f64 / total as f64
    }

    /// Entry-wise sum; panics if the class lists differ.
    pub fn merged(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        assert_eq!(self.class_names, other.class_names, "merging matrices over different classes");
        let mut out = self.clone();
        for (row, other_row) in out.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(other_row) {
                *c += o;
            }
        }
        out
    }

    /// Header row and first column carry class names; cells are integer counts.
    pub fn to_csv(&self) -> String {
        let mut out = format!("true\\predicted,{}\n", self.class_names.join(","));
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            out.push_str(&format!("{name},{}\n", cells.join(",")));
        }
        out
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.class_names.iter().map(String::len).max().unwrap_or(0).max(6);
        write!(f, "{:>width$}", "")?;
        for name in &self.class_names {
            write!(f, " {name:>width$}")?;
        }
        writeln!(f)?;
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            write!(f, "{name:>width$}")?;
            for c in row {
                write!(f, " {c:>width$}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub accuracy: f64,
    pub matrix: ConfusionMatrix,
}

impl From<ConfusionMatrix> for EvalResult {
    fn from(matrix: ConfusionMatrix) -> Self {
        EvalResult { accuracy: matrix.accuracy(), matrix }
    }
}

/// Truth and predicted class per entry, in entry order.
pub fn predict_entries<T: Scalar>(
    model: &Model<T>,
    entries: &[ManifestEntry],
    features: &BTreeMap<String, FeatureVector<T>>,
) -> Result<Vec<(usize, usize)>, EvalError> {
    let k = model.n_classes();
    let mut x = Array2::zeros((entries.len(), FEATURE_WIDTH));
    let mut truth = Vec::with_capacity(entries.len());
    for (i, e) in entries.iter().enumerate() {
        let id = e.utterance_id();
        let v = features.get(&id).ok_or_else(|| EvalError::MissingFeatures(id.clone()))?;
        let label = e.label_band.index();
        if label >= k {
            return Err(EvalError::ClassMismatch { utterance: id, label: e.label_band.to_string(), classes: k });
        }
        x.row_mut(i).assign(&ndarray::ArrayView1::from(v.values()));
        truth.push(label);
    }
    let predicted = model.predict(x.view())?;
    Ok(truth.into_iter().zip(predicted).collect())
}

pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    entries: &[ManifestEntry],
    features: &BTreeMap<String, FeatureVector<T>>,
) -> Result<EvalResult, EvalError> {
    let pairs = predict_entries(model, entries, features)?;
    let mut m = ConfusionMatrix::new(class_names(model.n_classes()));
    pairs.iter().for_each(|&(t, p)| m.add(t, p));
    Ok(m.into())
}

pub fn evaluate_by_language<T: Scalar>(
    model: &Model<T>,
    entries: &[ManifestEntry],
    features: &BTreeMap<String, FeatureVector<T>>,
) -> Result<BTreeMap<Language, EvalResult>, EvalError> {
    Ok(EvalReport::build(model, entries, features)?.per_language)
}

/// Pooled, per-language and binary results from one inference pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub overall: EvalResult,
    pub per_language: BTreeMap<Language, EvalResult>,
    pub binary_accuracy: f64,
}

impl EvalReport {
    pub fn build<T: Scalar>(
        model: &Model<T>,
        entries: &[ManifestEntry],
        features: &BTreeMap<String, FeatureVector<T>>,
    ) -> Result<Self, EvalError> {
        if entries.is_empty() {
            return Err(EvalError::Empty);
        }
        let pairs = predict_entries(model, entries, features)?;
        Ok(Self::from_predictions(class_names(model.n_classes()), entries, &pairs))
    }

    pub fn from_predictions(names: Vec<String>, entries: &[ManifestEntry], pairs: &[(usize, usize)]) -> Self {
        let mut per_language: BTreeMap<Language, ConfusionMatrix> = BTreeMap::new();
        for (e, &(t, p)) in entries.iter().zip(pairs) {
            per_language.entry(e.language).or_insert_with(|| ConfusionMatrix::new(names.clone())).add(t, p);
        }
        let pooled = per_language.values().fold(ConfusionMatrix::new(names), |acc, m| acc.merged(m));
        EvalReport {
            binary_accuracy: pooled.binary_accuracy(),
            overall: pooled.into(),
            per_language: per_language.into_iter().map(|(l, m)| (l, m.into())).collect(),
        }
    }
}

#[derive(Serialize)]
struct LanguageMetrics {
    accuracy: f64,
    binary_accuracy: f64,
    total: u64,
    diagonal_dominant: Vec<bool>,
}

#[derive(Serialize)]
struct Metrics<'a> {
    overall_accuracy: f64,
    per_language: BTreeMap<&'static str, LanguageMetrics>,
    class_names: &'a [String],
    binary_accuracy: f64,
    total: u64,
}

impl EvalReport {
    pub fn metrics_json(&self) -> String {
        let metrics = Metrics {
            overall_accuracy: self.overall.accuracy,
            per_language: self
                .per_language
                .iter()
                .map(|(l, r)| {
                    let m = LanguageMetrics {
                        accuracy: r.accuracy,
                        binary_accuracy: r.matrix.binary_accuracy(),
                        total: r.matrix.total(),
                        diagonal_dominant: r.matrix.diagonal_dominance(),
                    };
                    (l.as_str(), m)
                })
                .collect(),
            class_names: self.overall.matrix.class_names(),
            binary_accuracy: self.binary_accuracy,
            total: self.overall.matrix.total(),
        };
        serde_json::to_string_pretty(&metrics).expect("metrics serialize") + "\n"
    }
}

fn write_file(dir: &Path, name: &str, contents: &str, written: &mut Vec<PathBuf>) -> Result<(), EvalError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| EvalError::Io { path: path.display().to_string(), message: e.to_string() })?;
    written.push(path);
    Ok(())
}

/// Writes `confusion_<lang>.csv`, `confusion_all.csv`, `metrics.json`, heatmap SVGs
/// for every matrix and, given a history, `accuracy.svg` and `loss.svg`.
/// Returns the written paths in creation order.
pub fn export_report(report: &EvalReport, history: Option<&History>, out_dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    std::fs::create_dir_all(out_dir).map_err(|e| EvalError::Io { path: out_dir.display().to_string(), message: e.to_string() })?;
    let mut written = Vec::new();
    for (lang, r) in &report.per_language {
        write_file(out_dir, &format!("confusion_{lang}.csv"), &r.matrix.to_csv(), &mut written)?;
        let title = format!("Confusion matrix ({lang}), accuracy {:.3}", r.accuracy);
        write_file(out_dir, &format!("confusion_{lang}.svg"), &heatmap(&title, &r.matrix), &mut written)?;
    }
    write_file(out_dir, "confusion_all.csv", &report.overall.matrix.to_csv(), &mut written)?;
    let title = format!("Confusion matrix (all), accuracy {:.3}", report.overall.accuracy);
    write_file(out_dir, "confusion_all.svg", &heatmap(&title, &report.overall.matrix), &mut written)?;
    write_file(out_dir, "metrics.json", &report.metrics_json(), &mut written)?;

    if let Some(h) = history.filter(|h| !h.epochs.is_empty()) {
        let col = |f: fn(&crate::nn::EpochRecord) -> Option<f64>| -> Vec<f64> { h.epochs.iter().filter_map(f).collect() };
        let train_acc = col(|r| Some(r.train_accuracy));
        let val_acc = col(|r| r.val_accuracy);
        let train_loss = col(|r| Some(r.train_loss));
        let val_loss = col(|r| r.val_loss);
        let series = |train: &'_ [f64], val: &'_ [f64]| -> Vec<(String, Vec<f64>, &'static str)> {
            let mut s = vec![("train".to_string(), train.to_vec(), "#1f77b4")];
            if !val.is_empty() {
                s.push(("validation".to_string(), val.to_vec(), "#ff7f0e"));
            }
            s
        };
        let chart = |title: &str, label: &str, data: &[(String, Vec<f64>, &'static str)], range| {
            let s: Vec<Series<'_>> = data.iter().map(|(n, v, c)| Series { name: n, values: v, color: c }).collect();
            line_chart(title, label, &s, range)
        };
        write_file(
            out_dir,
            "accuracy.svg",
            &chart("Model accuracy", "accuracy", &series(&train_acc, &val_acc), Some((0.0, 1.0))),
            &mut written,
        )?;
        write_file(out_dir, "loss.svg", &chart("Model loss", "loss", &series(&train_loss, &val_loss), None), &mut written)?;
    }
    Ok(written)
}
