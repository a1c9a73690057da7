use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use xprojct_core::Scalar;

use crate::error::{NnError, Result};
use crate::loss::bce_loss;
use crate::model::Model;
use crate::optim::{AdamW, AdamWConfig, EarlyStopping, PlateauScheduler};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub optimizer: AdamWConfig,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    /// A validation loss must drop by at least this much to count as an
    /// improvement.
    pub improvement_threshold: f64,
    pub batch_size: usize,
    /// Optional hard cap on epochs for compute-limited runs; the protocol
    /// fields above stay as configured.
    pub epoch_budget: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            min_learning_rate: 1e-6,
            optimizer: AdamWConfig::default(),
            plateau_patience: 3,
            plateau_factor: 0.1,
            max_epochs: 500,
            early_stop_patience: 25,
            improvement_threshold: 1e-6,
            batch_size: 32,
            epoch_budget: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.learning_rate,
            self.min_learning_rate,
            self.plateau_factor,
            self.optimizer.eps,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.optimizer.weight_decay < 0.0 {
            return Err(NnError::Config("rates, factors and eps must be positive".into()));
        }
        if self.plateau_factor >= 1.0 {
            return Err(NnError::Config("plateau factor must be below 1".into()));
        }
        if self.batch_size == 0 || self.plateau_patience == 0 || self.epoch_budget == Some(0) {
            return Err(NnError::Config("batch size, patience and budget must be positive".into()));
        }
        if !(self.plateau_patience < self.early_stop_patience && self.early_stop_patience < self.max_epochs) {
            return Err(NnError::Config(format!(
                "need plateau patience {} < early-stop patience {} < max epochs {}",
                self.plateau_patience, self.early_stop_patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

/// Indexed training samples. `epoch` is `Some` during training passes, so
/// sources can derive per-sample augmentation seeds from it, and `None`
/// for evaluation.
pub trait SampleSource<S>: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(input, target)` for one sample.
    fn sample(&self, index: usize, epoch: Option<usize>) -> Result<(Vec<S>, Vec<S>)>;
}

/// In-memory samples without augmentation.
#[derive(Debug, Clone, Default)]
pub struct InMemory<S> {
    pub inputs: Vec<Vec<S>>,
    pub targets: Vec<Vec<S>>,
}

impl<S: Scalar> SampleSource<S> for InMemory<S> {
    fn len(&self) -> usize {
        self.inputs.len()
    }

    fn sample(&self, index: usize, _epoch: Option<usize>) -> Result<(Vec<S>, Vec<S>)> {
        Ok((self.inputs[index].clone(), self.targets[index].clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStopping,
    MaxEpochs,
    Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub learning_rate: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrChange {
    /// The rate applies from the epoch after this one.
    pub epoch: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub lr_changes: Vec<LrChange>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_epoch: usize,
    pub stop_reason: StopReason,
}

/// Mean loss over a source, evaluated without augmentation.
pub fn evaluate_loss<S: Scalar>(model: &Model<S>, data: &dyn SampleSource<S>) -> Result<f64> {
    let losses: Vec<f64> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let (x, t) = data.sample(i, None)?;
            Ok(bce_loss(&model.forward_sample(&x)?, &t).as_f64())
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Probabilities for every sample of a source, in index order.
pub fn predict_all<S: Scalar>(model: &Model<S>, data: &dyn SampleSource<S>) -> Result<Vec<Vec<f64>>> {
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            let (x, _) = data.sample(i, None)?;
            Ok(model.forward_sample(&x)?.iter().map(|p| p.as_f64()).collect())
        })
        .collect()
}

/// Weights and log of an interrupted run.
#[derive(Debug, Clone)]
pub struct Resume<S> {
    /// Weights of the best logged epoch.
    pub best: Model<S>,
    pub log: TrainingLog,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    pub best: Model<S>,
    /// Weights after the final epoch, for resuming.
    pub last: Model<S>,
    pub log: TrainingLog,
}

/// Minibatch training with AdamW, reduce-on-plateau and early stopping on
/// the validation loss. Returns the weights of the best validation epoch.
pub fn train<S: Scalar>(
    model: Model<S>,
    train_set: &dyn SampleSource<S>,
    val_set: &dyn SampleSource<S>,
    cfg: &TrainConfig,
) -> Result<(Model<S>, TrainingLog)> {
    let out = train_with(model, train_set, val_set, cfg, None)?;
    Ok((out.best, out.log))
}

/// Like [`train`], optionally continuing a logged run. When resuming,
/// `model` holds the weights after the last logged epoch; the scheduler
/// and early-stopping state are rebuilt by replaying the logged validation
/// losses, and epoch numbering continues. Optimizer moments restart from
/// zero. The epoch budget counts epochs run by this call.
pub fn train_with<S: Scalar>(
    mut model: Model<S>,
    train_set: &dyn SampleSource<S>,
    val_set: &dyn SampleSource<S>,
    cfg: &TrainConfig,
    resume: Option<Resume<S>>,
) -> Result<TrainOutcome<S>> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(NnError::Config("training and validation sets must be non-empty".into()));
    }
    let mut opt = AdamW::new(cfg.optimizer, model.params());
    let mut scheduler = PlateauScheduler::new(
        cfg.plateau_patience,
        cfg.plateau_factor,
        cfg.min_learning_rate,
        cfg.improvement_threshold,
    );
    let mut stopper = EarlyStopping::new(cfg.early_stop_patience, cfg.improvement_threshold);
    let mut lr = cfg.learning_rate;
    let mut best = model.clone();
    let mut epochs = Vec::new();
    let mut lr_changes = Vec::new();
    if let Some(prior) = resume {
        for (i, r) in prior.log.epochs.iter().enumerate() {
            if r.epoch != i + 1 || (r.learning_rate - lr).abs() > lr * 1e-9 {
                return Err(NnError::Config(format!(
                    "training log does not replay under this configuration at epoch {}",
                    r.epoch
                )));
            }
            stopper.observe(r.epoch, r.val_loss);
            if let Some(next) = scheduler.observe(r.val_loss, &mut lr) {
                lr_changes.push(LrChange {
                    epoch: r.epoch,
                    learning_rate: next,
                });
            }
        }
        epochs = prior.log.epochs;
        best = prior.best;
    }
    let first = epochs.len() + 1;
    let last = cfg.max_epochs.min(cfg.epoch_budget.map_or(usize::MAX, |b| first - 1 + b));
    let mut stop_reason = if last < cfg.max_epochs {
        StopReason::Budget
    } else {
        StopReason::MaxEpochs
    };
    if stopper.should_stop() {
        stop_reason = StopReason::EarlyStopping;
    }
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let range = if stop_reason == StopReason::EarlyStopping { 1..=0 } else { first..=last };
    for epoch in range {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let samples: Vec<(Vec<S>, Vec<S>)> = batch
                .par_iter()
                .map(|&i| train_set.sample(i, Some(epoch)))
                .collect::<Result<_>>()?;
            let xs: Vec<&[S]> = samples.iter().map(|(x, _)| x.as_slice()).collect();
            let ts: Vec<&[S]> = samples.iter().map(|(_, t)| t.as_slice()).collect();
            let (loss, grads) = model.batch_gradients(&xs, &ts)?;
            if !loss.is_finite() {
                return Err(NnError::Diverged {
                    epoch,
                    reason: format!("training loss {loss}"),
                });
            }
            opt.step(model.params_mut(), &grads, lr).map_err(|e| match e {
                NnError::Diverged { reason, .. } => NnError::Diverged { epoch, reason },
                other => other,
            })?;
            total += loss.as_f64() * batch.len() as f64;
        }
        let train_loss = total / train_set.len() as f64;
        let val_loss = evaluate_loss(&model, val_set)?;
        if !val_loss.is_finite() {
            return Err(NnError::Diverged {
                epoch,
                reason: format!("validation loss {val_loss}"),
            });
        }
        let epoch_lr = lr;
        let improved = stopper.observe(epoch, val_loss);
        if improved {
            best = model.clone();
        }
        if let Some(next) = scheduler.observe(val_loss, &mut lr) {
            lr_changes.push(LrChange {
                epoch,
                learning_rate: next,
            });
        }
        log::info!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5} lr {epoch_lr:.1e}");
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            learning_rate: epoch_lr,
            improved,
        });
        if stopper.should_stop() {
            stop_reason = StopReason::EarlyStopping;
            break;
        }
    }
    let (best_epoch, best_val_loss) = stopper
        .best()
        .ok_or_else(|| NnError::Config("no epoch was run".into()))?;
    let log = TrainingLog {
        stop_epoch: epochs.len(),
        epochs,
        lr_changes,
        best_epoch,
        best_val_loss,
        stop_reason,
    };
    Ok(TrainOutcome { best, last: model, log })
}
