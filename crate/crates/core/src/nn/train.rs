//! Mini-batch SGD with momentum and a reduce-on-plateau learning-rate schedule.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use super::layers::cross_entropy;
use super::{argmax_rows, Model, NnError, Standardizer, INPUT_LEN};
use crate::scalar::Scalar;
use crate::seeding::rng_for;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Epochs without a strict improvement of the monitored loss before the rate drops.
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_learning_rate: f64,
    pub seed: u64,
    /// Fit the model's standardiser on the training rows before the first epoch.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            epochs: 50,
            learning_rate: 1e-3,
            momentum: 0.9,
            plateau_patience: 5,
            plateau_factor: 0.4,
            min_learning_rate: 1e-6,
            seed: 0,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let fail = |m: String| Err(NnError::InvalidConfig(m));
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return fail(format!("plateau factor {} must be in (0, 1)", self.plateau_factor));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate {} must be > 0", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum {} must be in [0, 1)", self.momentum));
        }
        if self.min_learning_rate.is_nan() || self.min_learning_rate < 0.0 {
            return fail(format!("min learning rate {} must be >= 0", self.min_learning_rate));
        }
        Ok(())
    }
}

/// Reduce-on-plateau schedule over a monitored loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Plateau {
    lr: f64,
    patience: usize,
    factor: f64,
    min_lr: f64,
    best: f64,
    wait: usize,
}

impl Plateau {
    pub fn new(cfg: &TrainConfig) -> Self {
        Plateau {
            lr: cfg.learning_rate,
            patience: cfg.plateau_patience,
            factor: cfg.plateau_factor,
            min_lr: cfg.min_learning_rate,
            best: f64::INFINITY,
            wait: 0,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    /// Records one epoch's loss and returns the rate for the next epoch.
    pub fn observe(&mut self, loss: f64) -> f64 {
        if loss < self.best {
            self.best = loss;
            self.wait = 0;
        } else {
            self.wait += 1;
            if self.wait >= self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.wait = 0;
            }
        }
        self.lr
    }
}

/// Labelled feature rows `[n, 178]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub x: Array2<T>,
    pub y: Vec<usize>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(x: Array2<T>, y: Vec<usize>) -> Result<Self, NnError> {
        if x.nrows() != y.len() || x.ncols() != INPUT_LEN {
            return Err(NnError::ShapeMismatch {
                expected: format!("[{}, {INPUT_LEN}] rows with {} labels", y.len(), y.len()),
                found: format!("{:?}", x.dim()),
            });
        }
        Ok(Dataset { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn check_labels(&self, classes: usize) -> Result<(), NnError> {
        match self.y.iter().find(|&&l| l >= classes) {
            Some(&label) => Err(NnError::LabelOutOfRange { label, classes }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut out = String::from("epoch,lr,train_loss,train_acc,val_loss,val_acc\n");
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch,
                r.learning_rate,
                r.train_loss,
                r.train_accuracy,
                opt(r.val_loss),
                opt(r.val_accuracy)
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        let path = path.as_ref();
        let io = |source| NnError::Io { path: path.display().to_string(), source };
        std::fs::File::create(path).and_then(|mut f| f.write_all(self.to_csv().as_bytes())).map_err(io)
    }

    /// Inverse of [`History::to_csv`].
    pub fn parse_csv(text: &str) -> Result<Self, NnError> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header.trim() != "epoch,lr,train_loss,train_acc,val_loss,val_acc" {
            return Err(NnError::CorruptFile(format!("unexpected history header `{header}`")));
        }
        let mut epochs = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = || NnError::CorruptFile(format!("history line {}: `{line}`", n + 2));
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != 6 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
            epochs.push(EpochRecord {
                epoch: cells[0].parse().map_err(|_| bad())?,
                learning_rate: num(cells[1])?,
                train_loss: num(cells[2])?,
                train_accuracy: num(cells[3])?,
                val_loss: opt(cells[4])?,
                val_accuracy: opt(cells[5])?,
            });
        }
        Ok(History { epochs })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, NnError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| NnError::Io { path: path.display().to_string(), source })?;
        Self::parse_csv(&text)
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    pred.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / labels.len().max(1) as f64
}

fn infer_metrics<T: Scalar>(model: &Model<T>, x: ArrayView2<T>, y: &[usize]) -> Result<(f64, f64), NnError> {
    let probs = model.infer_standardized(x)?;
    Ok((cross_entropy(&probs, y).as_f64(), accuracy(&argmax_rows(&probs), y)))
}

/// Trains `model` in place; `val`, when given, drives the plateau schedule,
/// otherwise the training loss does. Shuffling and dropout derive from `cfg.seed`.
pub fn train<T: Scalar>(model: &mut Model<T>, train: &Dataset<T>, val: Option<&Dataset<T>>, cfg: &TrainConfig) -> Result<History, NnError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let classes = model.n_classes();
    train.check_labels(classes)?;
    let val = val.filter(|v| !v.is_empty());
    if let Some(v) = val {
        v.check_labels(classes)?;
    }
    if cfg.standardize {
        model.standardizer = Standardizer::fit(train.x.view());
    }
    let xs = model.standardizer.apply(train.x.view());
    let xv = val.map(|v| model.standardizer.apply(v.x.view()));

    let mut shuffle_rng = rng_for(cfg.seed, "nn/shuffle");
    let mut dropout_rng = rng_for(cfg.seed, "nn/dropout");
    let mut velocity = model.params.zeros_like();
    let mut schedule = Plateau::new(cfg);
    let momentum = T::of(cfg.momentum);
    let mut history = History::default();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        let lr = schedule.learning_rate();
        let step = T::of(lr);
        order.sort_unstable();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let xb = xs.select(Axis(0), batch);
            let yb: Vec<usize> = batch.iter().map(|&i| train.y[i]).collect();
            let cache = model.forward_cached(xb.view(), Some(&mut dropout_rng))?;
            loss_sum += cross_entropy(&cache.probs, &yb).as_f64() * batch.len() as f64;
            correct += argmax_rows(&cache.probs).iter().zip(&yb).filter(|(p, y)| p == y).count();
            let grads = model.backward(&cache, &yb);
            for ((p, v), g) in model.params.tensors_mut().into_iter().zip(velocity.tensors_mut()).zip(grads.tensors()) {
                for ((p, v), &g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *v = momentum * *v - step * g;
                    *p += *v;
                }
            }
        }
        let train_loss = loss_sum / train.len() as f64;
        if !train_loss.is_finite() || !model.params.all_finite() {
            return Err(NnError::Diverged { epoch });
        }
        let (val_loss, val_accuracy) = match (&xv, val) {
            (Some(x), Some(v)) => {
                let (l, a) = infer_metrics(model, x.view(), &v.y)?;
                (Some(l), Some(a))
            }
            _ => (None, None),
        };
        let record = EpochRecord {
            epoch,
            learning_rate: lr,
            train_loss,
            train_accuracy: correct as f64 / train.len() as f64,
            val_loss,
            val_accuracy,
        };
        log::info!(
            "epoch {epoch}/{} lr={lr:.2e} loss={:.4} acc={:.3} val_loss={} val_acc={}",
            cfg.epochs,
            record.train_loss,
            record.train_accuracy,
            val_loss.map_or("-".into(), |v| format!("{v:.4}")),
            val_accuracy.map_or("-".into(), |v| format!("{v:.3}")),
        );
        schedule.observe(val_loss.unwrap_or(train_loss));
        history.epochs.push(record);
    }
    model.reseed_dropout(cfg.seed);
    Ok(history)
}
