use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_shape, Adam, Batch, Regressor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub initial_lr: f64,
    pub lr_decay: f64,
    /// Consecutive validation increases that trigger a decay.
    pub patience: usize,
    /// Training stops once the learning rate falls below this.
    pub stop_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Hard cap on epochs in case the schedule never reaches `stop_lr`.
    pub max_epochs: usize,
    /// Epochs between learning-rate schedule checks.
    pub check_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            initial_lr: 1e-3,
            lr_decay: 0.1,
            patience: 3,
            stop_lr: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            max_epochs: 500,
            check_interval: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return bad("lr_decay must lie in (0, 1)");
        }
        if !(self.stop_lr > 0.0 && self.stop_lr < self.initial_lr) {
            return bad("stop_lr must be positive and below initial_lr");
        }
        if self.patience == 0 || self.max_epochs == 0 || self.check_interval == 0 {
            return bad("patience, max_epochs and check_interval must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return bad("invalid Adam hyperparameters");
        }
        Ok(())
    }
}

/// Learning-rate decay on consecutive validation increases.
///
/// Each check is compared with the previous one. After `patience` increases
/// in a row the rate is multiplied by `decay` and the counter resets; any
/// non-increase also resets it.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauSchedule {
    lr: f64,
    decay: f64,
    patience: usize,
    stop_lr: f64,
    previous: Option<f64>,
    increases: usize,
}

impl PlateauSchedule {
    pub fn new(initial_lr: f64, decay: f64, patience: usize, stop_lr: f64) -> Self {
        Self {
            lr: initial_lr,
            decay,
            patience,
            stop_lr,
            previous: None,
            increases: 0,
        }
    }

    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self::new(cfg.initial_lr, cfg.lr_decay, cfg.patience, cfg.stop_lr)
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Record a validation loss; returns true if the rate was decayed.
    pub fn observe(&mut self, val_loss: f64) -> bool {
        let increased = self.previous.is_some_and(|p| val_loss > p);
        self.previous = Some(val_loss);
        if !increased {
            self.increases = 0;
            return false;
        }
        self.increases += 1;
        if self.increases >= self.patience {
            self.lr *= self.decay;
            self.increases = 0;
            return true;
        }
        false
    }

    /// True once the rate is below the stopping threshold. Products such as
    /// `1e-3 * 0.1^3` land a few ulps off `1e-6` and must not count.
    pub fn should_stop(&self) -> bool {
        self.lr < self.stop_lr * (1.0 - 1e-9)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Rate used during this epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    LearningRate,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_reason: StopReason,
}

/// Mini-batch Adam on mean squared error with the plateau schedule.
///
/// Samples are reshuffled every epoch from a generator seeded by
/// `cfg.seed`. Validation loss is recorded every epoch and fed to the
/// schedule every `cfg.check_interval` epochs. The returned model carries
/// the weights of the epoch with the lowest validation loss.
pub fn train<M: Regressor>(
    mut model: M,
    (train_x, train_y): (&M::Input, &Array2<f64>),
    (val_x, val_y): (&M::Input, &Array2<f64>),
    cfg: &TrainConfig,
) -> Result<(M, TrainingCurve)> {
    cfg.validate()?;
    let n = train_x.samples();
    if n == 0 || val_x.samples() == 0 {
        return Err(Error::InsufficientData("training and validation sets must be non-empty".into()));
    }
    check_shape("training targets", n, train_y.nrows())?;
    check_shape("validation targets", val_x.samples(), val_y.nrows())?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut adam = Adam::with_betas(&model.parameters(), cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut schedule = PlateauSchedule::from_config(cfg);
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=cfg.max_epochs {
        let lr = schedule.lr();
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (loss, grads) = if chunk.len() == n {
                model.loss_and_gradients(train_x, train_y)?
            } else {
                let xb = train_x.select_samples(chunk);
                let yb = train_y.select_samples(chunk);
                model.loss_and_gradients(&xb, &yb)?
            };
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            weighted += loss * chunk.len() as f64;
            adam.step(model.parameters_mut(), &grads, lr);
        }
        let val_loss = model.loss(val_x, val_y)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: val_loss });
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss: weighted / n as f64,
            val_loss,
            lr,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best = model.clone();
        }
        if epoch % cfg.check_interval != 0 {
            continue;
        }
        schedule.observe(val_loss);
        if schedule.should_stop() {
            stop_reason = StopReason::LearningRate;
            break;
        }
    }
    Ok((
        best,
        TrainingCurve {
            epochs,
            best_epoch,
            best_val_loss: best_val,
            stop_reason,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{mse, ridge_fit, LinearReadout, MlpReadout};
    use crate::hashing::f64_hash;
    use rand::Rng;

    fn random(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0))
    }

    fn weights_hash<M: Regressor>(m: &M) -> String {
        f64_hash(m.parameters().into_iter().flat_map(|p| p.iter().copied()))
    }

    #[test]
    fn decays_after_third_consecutive_increase() {
        let mut s = PlateauSchedule::new(1e-3, 0.1, 3, 1e-6);
        let decayed: Vec<bool> = [5.0, 4.0, 4.1, 4.2, 4.3].iter().map(|&v| s.observe(v)).collect();
        assert_eq!(decayed, [false, false, false, false, true]);
        assert!((s.lr() - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn non_increase_resets_counter() {
        let mut s = PlateauSchedule::new(1e-3, 0.1, 3, 1e-6);
        for v in [1.0, 2.0, 3.0, 3.0, 4.0, 5.0] {
            assert!(!s.observe(v));
        }
        assert!(s.observe(6.0));
    }

    #[test]
    fn learning_rate_trajectory_to_stop() {
        let mut s = PlateauSchedule::new(1e-3, 0.1, 3, 1e-6);
        let mut rates = vec![s.lr()];
        let mut loss = 0.0;
        s.observe(loss);
        while !s.should_stop() {
            loss += 1.0;
            if s.observe(loss) {
                rates.push(s.lr());
            }
        }
        let expected = [1e-3, 1e-4, 1e-5, 1e-6, 1e-7];
        assert_eq!(rates.len(), expected.len());
        for (r, e) in rates.iter().zip(expected) {
            assert!((r - e).abs() < 1e-9 * e, "{r} vs {e}");
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = TrainConfig { lr_decay: 1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg.lr_decay = 0.1;
        cfg.stop_lr = 1e-2;
        assert!(cfg.validate().is_err());
    }

    fn toy_problem() -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>) {
        let x = random(200, 4, 1);
        let w = random(4, 3, 2);
        let y = x.dot(&w).mapv(|v| v.sin());
        let xv = random(50, 4, 3);
        let yv = xv.dot(&w).mapv(|v| v.sin());
        (x, y, xv, yv)
    }

    #[test]
    fn identical_seed_identical_weights() {
        let (x, y, xv, yv) = toy_problem();
        let cfg = TrainConfig { batch_size: 32, max_epochs: 20, seed: 9, ..Default::default() };
        let run = || {
            let m = MlpReadout::new(4, &[8], 3, 5);
            train(m, (&x, &y), (&xv, &yv), &cfg).unwrap()
        };
        let (a, ca) = run();
        let (b, cb) = run();
        assert_eq!(weights_hash(&a), weights_hash(&b));
        assert_eq!(ca, cb);
    }

    #[test]
    fn returns_best_validation_weights() {
        let (x, y, xv, yv) = toy_problem();
        // a large rate makes validation loss bounce
        let cfg = TrainConfig { batch_size: 16, initial_lr: 0.05, max_epochs: 30, ..Default::default() };
        let (model, curve) = train(MlpReadout::new(4, &[16], 3, 1), (&x, &y), (&xv, &yv), &cfg).unwrap();
        let min = curve.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(curve.best_val_loss, min);
        assert_eq!(model.loss(&xv, &yv).unwrap(), min);
        assert_eq!(curve.epochs[curve.best_epoch - 1].val_loss, min);
    }

    #[test]
    fn gradient_trained_linear_matches_ridge() {
        let x = random(300, 5, 11);
        let w = random(5, 3, 12);
        let noise = random(300, 3, 13) * 0.05;
        let y = x.dot(&w) + noise + 0.3;
        let ridge = ridge_fit(&x, &y, 0.0).unwrap();
        let optimum = mse(&ridge.predict(&x).unwrap(), &y);
        let cfg = TrainConfig { batch_size: 32, initial_lr: 1e-2, max_epochs: 2000, ..Default::default() };
        let (fitted, curve) = train(LinearReadout::zeros(5, 3), (&x, &y), (&x, &y), &cfg).unwrap();
        let reached = fitted.loss(&x, &y).unwrap();
        assert!(reached <= optimum * 1.01, "{reached} vs ridge {optimum} after {} epochs", curve.epochs.len());
    }

    #[test]
    fn diverging_training_is_reported() {
        let (x, y, xv, yv) = toy_problem();
        let y = y.mapv(|v| v * 1e300);
        let cfg = TrainConfig { max_epochs: 5, ..Default::default() };
        let err = train(LinearReadout::zeros(4, 3), (&x, &y), (&xv, &yv), &cfg).unwrap_err();
        assert_eq!(err.kind(), "training-diverged");
    }
}
