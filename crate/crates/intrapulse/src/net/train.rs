//! Mini-batch training with per-epoch validation and best-epoch selection.

use crate::error::{Error, Result};
use crate::net::adam::{AdamConfig, AdamState};
use crate::net::model::{Batch, FusionNet, TFI_LEN};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Anything that can hand out `(tfi, pjv, label)` records by index.
/// Implementations stream from disk or serve from memory.
pub trait RecordSource {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn pjv_len(&self) -> usize;

    /// Append record `idx` to the batch buffers; returns its label.
    fn append_to(&mut self, idx: usize, batch: &mut Batch) -> Result<u16>;
}

/// In-memory source, mainly for small experiments and tests.
#[derive(Debug, Clone, Default)]
pub struct MemSource {
    pub tfis: Vec<Vec<f64>>,
    pub pjvs: Vec<Vec<f64>>,
    pub labels: Vec<u16>,
}

impl MemSource {
    pub fn push(&mut self, tfi: Vec<f64>, pjv: Vec<f64>, label: u16) {
        assert_eq!(tfi.len(), TFI_LEN);
        self.tfis.push(tfi);
        self.pjvs.push(pjv);
        self.labels.push(label);
    }
}

impl RecordSource for MemSource {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn pjv_len(&self) -> usize {
        self.pjvs.first().map_or(0, Vec::len)
    }

    fn append_to(&mut self, idx: usize, batch: &mut Batch) -> Result<u16> {
        batch.tfis.extend_from_slice(&self.tfis[idx]);
        batch.pjvs.extend_from_slice(&self.pjvs[idx]);
        let label = self.labels[idx];
        batch.labels.push(label as usize);
        Ok(label)
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Seed for epoch shuffles (the model seed lives at construction).
    pub shuffle_seed: u64,
    /// Print one line per epoch.
    pub verbose: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 128,
            adam: AdamConfig::default(),
            shuffle_seed: 0,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

/// Outcome of a training run: weights of the best validation epoch plus the
/// per-epoch history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best_model: FusionNet,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub history: Vec<EpochStats>,
}

/// Epoch-shuffled fixed-size batches (the trailing partial batch is kept).
pub fn load_batches<'a>(
    source: &'a mut dyn RecordSource,
    batch_size: usize,
    shuffle_seed: u64,
) -> Result<BatchStream<'a>> {
    if source.is_empty() {
        return Err(Error::config("empty record source"));
    }
    if batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    let mut order: Vec<usize> = (0..source.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
    Ok(BatchStream {
        source,
        order,
        cursor: 0,
        batch_size,
    })
}

pub struct BatchStream<'a> {
    source: &'a mut dyn RecordSource,
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
}

impl BatchStream<'_> {
    /// Number of batches in one epoch.
    pub fn batch_count(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    /// Fill `batch` with the next chunk; false when the epoch is done.
    pub fn next_into(&mut self, batch: &mut Batch) -> Result<bool> {
        if self.cursor >= self.order.len() {
            return Ok(false);
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        batch.clear();
        batch.k_len = self.source.pjv_len();
        for i in self.cursor..end {
            self.source.append_to(self.order[i], batch)?;
        }
        self.cursor = end;
        Ok(true)
    }
}

/// Accuracy of argmax predictions over a whole source.
pub fn accuracy(model: &FusionNet, source: &mut dyn RecordSource) -> Result<f64> {
    let eval = evaluate(model, source)?;
    Ok(eval.accuracy)
}

/// Per-record probabilities and labels for a whole source.
pub struct Evaluation {
    pub labels: Vec<u16>,
    /// Row-major `n x class_count`.
    pub probs: Vec<f64>,
    pub class_count: usize,
    pub accuracy: f64,
}

pub fn evaluate(model: &FusionNet, source: &mut dyn RecordSource) -> Result<Evaluation> {
    if source.is_empty() {
        return Err(Error::config("empty record source"));
    }
    let c = model.class_count();
    let n = source.len();
    let mut labels = Vec::with_capacity(n);
    let mut probs = Vec::with_capacity(n * c);
    let mut correct = 0usize;
    let mut batch = Batch::with_k(source.pjv_len());
    for idx in 0..n {
        batch.clear();
        let label = source.append_to(idx, &mut batch)?;
        let p = model.forward(batch.tfi_of(0), batch.pjv_of(0));
        let argmax = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        if argmax == label as usize {
            correct += 1;
        }
        labels.push(label);
        probs.extend_from_slice(&p);
    }
    Ok(Evaluation {
        labels,
        probs,
        class_count: c,
        accuracy: correct as f64 / n as f64,
    })
}

/// Train with Adam; after every epoch measure validation accuracy and keep
/// the weights of the best epoch (earliest wins ties).
pub fn train(
    mut model: FusionNet,
    train_set: &mut dyn RecordSource,
    val_set: &mut dyn RecordSource,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::config("training and validation splits must be non-empty"));
    }
    let mut adam = AdamState::new(&model, cfg.adam.clone());
    let mut batch = Batch::with_k(train_set.pjv_len());
    let mut best_model = model.clone();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut stream = load_batches(
            train_set,
            cfg.batch_size,
            cfg.shuffle_seed.wrapping_add(epoch as u64),
        )?;
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut seen = 0usize;
        while stream.next_into(&mut batch)? {
            let (loss, n_correct, grads) = model.loss_and_grads(&batch)?;
            adam.step(&mut model, &grads);
            loss_sum += loss * batch.len() as f64;
            correct += n_correct;
            seen += batch.len();
        }
        let train_loss = loss_sum / seen as f64;
        let train_acc = correct as f64 / seen as f64;
        let val_acc = accuracy(&model, val_set)?;
        if val_acc > best_val {
            best_val = val_acc;
            best_epoch = epoch;
            best_model = model.clone();
        }
        if cfg.verbose {
            eprintln!(
                "epoch {epoch:3}  train_loss {train_loss:.4}  train_acc {train_acc:.4}  val_acc {val_acc:.4}"
            );
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            train_acc,
            val_acc,
        });
    }

    Ok(TrainOutcome {
        best_model,
        best_epoch,
        best_val_acc: best_val,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy_source(n: usize, seed: u64) -> MemSource {
        // Two trivially separable synthetic patterns.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut src = MemSource::default();
        for i in 0..n {
            let label = (i % 2) as u16;
            let mut tfi = vec![0.0; TFI_LEN];
            for v in tfi.iter_mut() {
                *v = rng.gen::<f64>() * 0.05;
            }
            if label == 1 {
                for v in tfi.iter_mut().step_by(64) {
                    *v += 0.8;
                }
            }
            let pjv = vec![label as f64; 256];
            src.push(tfi, pjv, label);
        }
        src
    }

    #[test]
    fn batch_stream_counts_and_shapes() {
        let mut src = toy_source(700, 1);
        let mut stream = load_batches(&mut src, 128, 0).unwrap();
        assert_eq!(stream.batch_count(), 6);
        let mut batch = Batch::with_k(256);
        let mut sizes = Vec::new();
        while stream.next_into(&mut batch).unwrap() {
            sizes.push(batch.len());
        }
        assert_eq!(sizes, vec![128, 128, 128, 128, 128, 60]);
    }

    #[test]
    fn batch_stream_shuffle_is_seeded() {
        let order = |seed: u64| {
            let mut src = toy_source(50, 2);
            let mut stream = load_batches(&mut src, 50, seed).unwrap();
            let mut batch = Batch::with_k(256);
            stream.next_into(&mut batch).unwrap();
            batch.labels.clone()
        };
        assert_eq!(order(7), order(7));
        assert_ne!(order(7), order(8));
    }

    #[test]
    fn empty_sources_are_rejected() {
        let mut empty = MemSource::default();
        let mut ok = toy_source(4, 3);
        let model = FusionNet::new(2, 256, 32, crate::net::BranchMode::Fused, 1).unwrap();
        assert!(load_batches(&mut empty, 8, 0).is_err());
        assert!(train(model.clone(), &mut empty, &mut ok, &TrainConfig::default()).is_err());
        assert!(train(model, &mut ok, &mut empty, &TrainConfig::default()).is_err());
    }

    #[test]
    fn single_batch_overfit_loss_decreases() {
        let model = FusionNet::new(2, 256, 32, crate::net::BranchMode::Fused, 5).unwrap();
        let mut src = toy_source(8, 6);
        let mut batch = Batch::with_k(256);
        let mut stream = load_batches(&mut src, 8, 0).unwrap();
        stream.next_into(&mut batch).unwrap();
        let mut adam = AdamState::new(&model, AdamConfig::default());
        let mut model = model;
        let mut last = f64::INFINITY;
        for step in 0..10 {
            let (loss, _, grads) = model.loss_and_grads(&batch).unwrap();
            assert!(loss < last, "step {step}: {loss} !< {last}");
            last = loss;
            adam.step(&mut model, &grads);
        }
    }

    #[test]
    fn training_is_reproducible_and_reports_best_epoch() {
        let run = || {
            let model = FusionNet::new(2, 256, 32, crate::net::BranchMode::Fused, 9).unwrap();
            let mut train_set = toy_source(16, 10);
            let mut val_set = toy_source(8, 11);
            let cfg = TrainConfig {
                epochs: 4,
                batch_size: 8,
                shuffle_seed: 3,
                ..TrainConfig::default()
            };
            train(model, &mut train_set, &mut val_set, &cfg).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.best_epoch, b.best_epoch);
        assert_eq!(a.history, b.history);
        let best_from_history = a
            .history
            .iter()
            .map(|e| e.val_acc)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(a.best_val_acc, best_from_history);
        for (x, y) in a.best_model.params().iter().zip(b.best_model.params()) {
            assert_eq!(x.1.as_slice(), y.1.as_slice());
        }
    }
}
