use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::net::{init_weights, loss_and_gradient};
use super::{NetConfig, Weights};
use crate::rng::rng_for;
use crate::triplet::Triplet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub log_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            seed: 0,
            log_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Validation("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation(format!(
                "learning_rate must be a finite non-negative number, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub epoch: usize,
    pub step: usize,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<TrainLogRecord>,
}

impl TrainingLog {
    /// Mean of the per-step losses of each epoch.
    pub fn epoch_means(&self) -> Vec<f64> {
        let epochs = self.records.iter().map(|r| r.epoch + 1).max().unwrap_or(0);
        let mut sums = vec![(0.0, 0usize); epochs];
        for r in &self.records {
            sums[r.epoch].0 += r.mean_loss;
            sums[r.epoch].1 += 1;
        }
        sums.into_iter()
            .map(|(s, n)| if n == 0 { f64::NAN } else { s / n as f64 })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,step,mean_loss\n");
        for r in &self.records {
            s.push_str(&format!("{},{},{}\n", r.epoch, r.step, r.mean_loss));
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path.as_ref(), self.to_csv().as_bytes())
    }
}

enum OptimizerState {
    Sgd,
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl OptimizerState {
    fn new(kind: Optimizer, n: usize) -> Self {
        match kind {
            Optimizer::Sgd => Self::Sgd,
            Optimizer::Adam => Self::Adam {
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
        }
    }

    fn step(&mut self, weights: &mut [f64], grad: &[f64], lr: f64) {
        match self {
            Self::Sgd => {
                for (w, g) in weights.iter_mut().zip(grad) {
                    *w -= lr * g;
                }
            }
            Self::Adam { m, v, t } => {
                *t += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(*t);
                let c2 = 1.0 - ADAM_BETA2.powi(*t);
                for i in 0..weights.len() {
                    let g = grad[i];
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
                    let mhat = m[i] / c1;
                    let vhat = v[i] / c2;
                    weights[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

/// Mini-batch training from a seeded initialization. Each epoch visits the
/// dataset in a seeded shuffled order, `ceil(N / batch_size)` steps.
pub fn train(cfg: &NetConfig, train_cfg: &TrainConfig, dataset: &[Triplet]) -> Result<(Weights, TrainingLog)> {
    let initial = init_weights(cfg, train_cfg.seed)?;
    train_from(cfg, train_cfg, dataset, initial)
}

pub fn train_from(
    cfg: &NetConfig,
    train_cfg: &TrainConfig,
    dataset: &[Triplet],
    initial: Weights,
) -> Result<(Weights, TrainingLog)> {
    cfg.validate()?;
    train_cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Validation("training dataset is empty".into()));
    }
    if let Some(t) = dataset.iter().find(|t| t.anchor.resolution() != cfg.patch_resolution) {
        return Err(Error::Shape(format!(
            "dataset patches are {}x{}, network expects {}",
            t.anchor.resolution(),
            t.anchor.resolution(),
            cfg.patch_resolution
        )));
    }
    let mut weights = initial;
    let mut opt = OptimizerState::new(train_cfg.optimizer, weights.len());
    let mut log = TrainingLog::default();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut step = 0;
    let finish = |log: &TrainingLog| -> Result<()> {
        if let Some(p) = &train_cfg.log_path {
            log.write_csv(p)?;
        }
        Ok(())
    };
    for epoch in 0..train_cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng_for(train_cfg.seed, &[0x5eed, epoch as u64]));
        for chunk in order.chunks(train_cfg.batch_size) {
            let batch: Vec<&Triplet> = chunk.iter().map(|&i| &dataset[i]).collect();
            let diverged = |log: &TrainingLog, weights: &Weights| -> Error {
                let _ = finish(log);
                Error::Diverged {
                    epoch,
                    step,
                    last_good: Box::new(weights.clone()),
                }
            };
            let (loss, grad) = match loss_and_gradient(cfg, &weights, &batch) {
                Ok(r) if r.0.is_finite() => r,
                Ok(_) | Err(Error::NonFinite { .. }) => return Err(diverged(&log, &weights)),
                Err(e) => return Err(e),
            };
            let mut next = weights.clone();
            opt.step(next.as_mut_slice(), &grad, train_cfg.learning_rate);
            if next.check_finite().is_err() {
                return Err(diverged(&log, &weights));
            }
            weights = next;
            log.records.push(TrainLogRecord {
                epoch,
                step,
                mean_loss: loss,
            });
            step += 1;
        }
    }
    finish(&log)?;
    Ok((weights, log))
}
