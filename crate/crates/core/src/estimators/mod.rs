//! Pose estimators and the shared gradient training engine.
//!
//! Readouts map normalized inputs to the 27 normalized marker coordinates
//! and are trained on mean squared error over all outputs of a batch.

mod adam;
mod analytical;
mod checkpoint;
mod fit;
mod linear;
mod lstm;
mod mlp;
mod train;

pub use adam::Adam;
pub use analytical::analytical_estimate;
pub use checkpoint::Checkpoint;
pub use fit::{
    fit_method, noload_variant, predict_markers, predict_normalized, FittedModel, LinearTrainer, ModelParams,
    ReadoutSpec,
};
pub use linear::{ridge_fit, LinearReadout};
pub use lstm::LstmBaseline;
pub use mlp::MlpReadout;
pub use train::{train, EpochRecord, PlateauSchedule, StopReason, TrainConfig, TrainingCurve};

use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::Result;

/// Estimators compared on the test session, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Delay-embedded reservoir vector with an MLP readout.
    PrcMlp,
    Analytical,
    /// [`Method::PrcMlp`] without the motor load channels.
    NoLoad,
    /// Delay-embedded reservoir vector with a linear readout.
    PrcLin,
    Lstm,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::PrcMlp,
        Method::Analytical,
        Method::NoLoad,
        Method::PrcLin,
        Method::Lstm,
    ];

    pub const TRAINABLE: [Method; 4] = [Method::PrcMlp, Method::NoLoad, Method::PrcLin, Method::Lstm];

    pub fn label(self) -> &'static str {
        match self {
            Method::PrcMlp => "ours",
            Method::Analytical => "Analytical",
            Method::NoLoad => "No-load",
            Method::PrcLin => "PRC-LIN",
            Method::Lstm => "LSTM",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::PrcMlp => "prc-mlp",
            Method::Analytical => "analytical",
            Method::NoLoad => "no-load",
            Method::PrcLin => "prc-lin",
            Method::Lstm => "lstm",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

/// Input batches that can be subset by sample index (first axis).
pub trait Batch: Sized + Send + Sync {
    fn samples(&self) -> usize;
    fn select_samples(&self, idx: &[usize]) -> Self;
}

impl Batch for Array2<f64> {
    fn samples(&self) -> usize {
        self.nrows()
    }

    fn select_samples(&self, idx: &[usize]) -> Self {
        self.select(Axis(0), idx)
    }
}

impl Batch for Array3<f64> {
    fn samples(&self) -> usize {
        self.shape()[0]
    }

    fn select_samples(&self, idx: &[usize]) -> Self {
        self.select(Axis(0), idx)
    }
}

/// A differentiable readout trained on mean squared error.
pub trait Regressor: Clone + Send + Sync {
    type Input: Batch;

    fn predict(&self, x: &Self::Input) -> Result<Array2<f64>>;

    /// Mean squared error over every output element of the batch, and its
    /// gradient with respect to each parameter (same order as
    /// [`Regressor::parameters`]).
    fn loss_and_gradients(&self, x: &Self::Input, y: &Array2<f64>) -> Result<(f64, Vec<Array2<f64>>)>;

    fn parameters(&self) -> Vec<&Array2<f64>>;

    fn parameters_mut(&mut self) -> Vec<&mut Array2<f64>>;

    fn loss(&self, x: &Self::Input, y: &Array2<f64>) -> Result<f64> {
        Ok(mse(&self.predict(x)?, y))
    }
}

pub fn mse(pred: &Array2<f64>, target: &Array2<f64>) -> f64 {
    let n = pred.len().max(1) as f64;
    pred.iter()
        .zip(target.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n
}

/// Gradient of [`mse`] with respect to the predictions.
pub(crate) fn mse_gradient(pred: &Array2<f64>, target: &Array2<f64>) -> Array2<f64> {
    let scale = 2.0 / pred.len().max(1) as f64;
    (pred - target) * scale
}

pub(crate) fn check_shape(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(crate::Error::Shape {
            expected: format!("{what} {expected}"),
            got: got.to_string(),
        });
    }
    Ok(())
}
