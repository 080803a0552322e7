use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{
    ridge_fit, train, LinearReadout, LstmBaseline, Method, MlpReadout, Regressor, TrainConfig,
    TrainingCurve,
};
use crate::dataset::{
    embed_sessions, lstm_sequences_sessions, Normalizer, SensorChannels, SessionLog, COMMAND_DIM,
    MARKER_DIM, SENSOR_DIM,
};
use crate::hashing::derive_seed;
use crate::kinematics::MarkerSet;
use crate::{Error, Result};

/// How the linear readout is fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum LinearTrainer {
    /// The shared mini-batch Adam engine.
    Adam,
    /// Closed-form ridge regression.
    Ridge { lambda: f64 },
}

/// Architectures and training settings for the learned estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReadoutSpec {
    pub mlp_hidden: Vec<usize>,
    pub lstm_hidden: usize,
    pub linear: LinearTrainer,
    pub train: TrainConfig,
}

impl Default for ReadoutSpec {
    fn default() -> Self {
        Self {
            mlp_hidden: vec![512; 3],
            lstm_hidden: 512,
            linear: LinearTrainer::Adam,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "params")]
pub enum ModelParams {
    Mlp(MlpReadout),
    Linear(LinearReadout),
    Lstm(LstmBaseline),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub method: Method,
    pub window: usize,
    pub channels: SensorChannels,
    pub model: ModelParams,
    /// Absent for closed-form fits.
    pub curve: Option<TrainingCurve>,
}

fn channels_for(method: Method) -> SensorChannels {
    match method {
        Method::NoLoad => SensorChannels::NoLoad,
        _ => SensorChannels::Full,
    }
}

fn init_seed(spec: &ReadoutSpec, method: Method) -> u64 {
    derive_seed(spec.train.seed, method as u64)
}

/// Train one learned estimator with window `h` on the training sessions,
/// using the validation sessions for the schedule and weight selection.
pub fn fit_method(
    method: Method,
    train_logs: &[SessionLog],
    val_logs: &[SessionLog],
    norm: &Normalizer,
    h: usize,
    spec: &ReadoutSpec,
) -> Result<FittedModel> {
    let channels = channels_for(method);
    let seed = init_seed(spec, method);
    let (model, curve) = match method {
        Method::Analytical => {
            return Err(Error::InvalidConfig("the analytical baseline is not trained".into()))
        }
        Method::PrcMlp | Method::NoLoad => {
            let tr = embed_sessions(train_logs, h, norm, channels)?;
            let va = embed_sessions(val_logs, h, norm, channels)?;
            let init = MlpReadout::new(channels.input_dim(h), &spec.mlp_hidden, MARKER_DIM, seed);
            let (m, c) = train(init, (&tr.inputs, &tr.targets), (&va.inputs, &va.targets), &spec.train)?;
            (ModelParams::Mlp(m), Some(c))
        }
        Method::PrcLin => {
            let tr = embed_sessions(train_logs, h, norm, channels)?;
            match spec.linear {
                LinearTrainer::Ridge { lambda } => {
                    (ModelParams::Linear(ridge_fit(&tr.inputs, &tr.targets, lambda)?), None)
                }
                LinearTrainer::Adam => {
                    let va = embed_sessions(val_logs, h, norm, channels)?;
                    let init = LinearReadout::zeros(channels.input_dim(h), MARKER_DIM);
                    let (m, c) =
                        train(init, (&tr.inputs, &tr.targets), (&va.inputs, &va.targets), &spec.train)?;
                    (ModelParams::Linear(m), Some(c))
                }
            }
        }
        Method::Lstm => {
            let tr = lstm_sequences_sessions(train_logs, h, norm)?;
            let va = lstm_sequences_sessions(val_logs, h, norm)?;
            let init = LstmBaseline::new(SENSOR_DIM + COMMAND_DIM, spec.lstm_hidden, MARKER_DIM, seed);
            let (m, c) = train(init, (&tr.inputs, &tr.targets), (&va.inputs, &va.targets), &spec.train)?;
            (ModelParams::Lstm(m), Some(c))
        }
    };
    Ok(FittedModel {
        method,
        window: h,
        channels,
        model,
        curve,
    })
}

/// The reservoir MLP trained without the motor load channels.
pub fn noload_variant(
    train_logs: &[SessionLog],
    val_logs: &[SessionLog],
    norm: &Normalizer,
    h: usize,
    spec: &ReadoutSpec,
) -> Result<FittedModel> {
    fit_method(Method::NoLoad, train_logs, val_logs, norm, h, spec)
}

/// Normalized predictions for every full window of `logs`.
pub fn predict_normalized(
    fitted: &FittedModel,
    norm: &Normalizer,
    logs: &[SessionLog],
) -> Result<(Array2<f64>, Vec<(usize, usize)>)> {
    let h = fitted.window;
    match &fitted.model {
        ModelParams::Mlp(m) => {
            let set = embed_sessions(logs, h, norm, fitted.channels)?;
            Ok((m.predict(&set.inputs)?, set.provenance))
        }
        ModelParams::Linear(m) => {
            let set = embed_sessions(logs, h, norm, fitted.channels)?;
            Ok((m.predict(&set.inputs)?, set.provenance))
        }
        ModelParams::Lstm(m) => {
            let set = lstm_sequences_sessions(logs, h, norm)?;
            Ok((m.predict(&set.inputs)?, set.provenance))
        }
    }
}

/// Predicted marker sets in millimetres with the (session, step) each one
/// refers to. The first `window - 1` steps of every session have no
/// prediction.
pub fn predict_markers(
    fitted: &FittedModel,
    norm: &Normalizer,
    logs: &[SessionLog],
) -> Result<(Vec<MarkerSet>, Vec<(usize, usize)>)> {
    let (pred, provenance) = predict_normalized(fitted, norm, logs)?;
    let markers = pred
        .rows()
        .into_iter()
        .map(|row| MarkerSet::from_flat(&norm.denormalize_markers(row.as_slice().expect("row-major"))))
        .collect::<Result<Vec<_>>>()?;
    Ok((markers, provenance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::split_sessions;
    use crate::hashing::derive_seed;
    use crate::plant::{run_session, PlantConfig};

    fn tiny_splits() -> (Vec<SessionLog>, Vec<SessionLog>, Normalizer) {
        let cfg = PlantConfig::default();
        let logs: Vec<_> = (0..3)
            .map(|k| {
                let mut log = run_session(&cfg, derive_seed(3, k), 160, 16).unwrap();
                log.manifest.session = k as usize;
                log
            })
            .collect();
        let splits = split_sessions(&logs, 20).unwrap();
        let norm = Normalizer::fit(&splits.train).unwrap();
        (splits.train, splits.val, norm)
    }

    fn quick_spec() -> ReadoutSpec {
        ReadoutSpec {
            mlp_hidden: vec![8, 8],
            lstm_hidden: 4,
            linear: LinearTrainer::Adam,
            train: TrainConfig { batch_size: 64, max_epochs: 3, ..Default::default() },
        }
    }

    #[test]
    fn every_trainable_method_fits_and_predicts() {
        let (train, val, norm) = tiny_splits();
        let spec = quick_spec();
        for method in Method::TRAINABLE {
            let fitted = fit_method(method, &train, &val, &norm, 3, &spec).unwrap();
            let (markers, provenance) = predict_markers(&fitted, &norm, &val).unwrap();
            assert_eq!(markers.len(), val[0].len() - 2);
            assert_eq!(provenance[0].1, val[0].manifest.first_step + 2);
            assert!(markers.iter().all(|m| m.positions.iter().flatten().all(|v| v.is_finite())));
        }
    }

    #[test]
    fn noload_input_dimension() {
        let (train, val, norm) = tiny_splits();
        let fitted = noload_variant(&train, &val, &norm, 4, &quick_spec()).unwrap();
        match fitted.model {
            ModelParams::Mlp(m) => assert_eq!(m.input_dim(), 63),
            _ => panic!("expected an MLP"),
        }
        assert_eq!(fitted.channels, SensorChannels::NoLoad);
    }

    #[test]
    fn ridge_path_has_no_curve() {
        let (train, val, norm) = tiny_splits();
        let spec = ReadoutSpec { linear: LinearTrainer::Ridge { lambda: 1e-6 }, ..quick_spec() };
        let fitted = fit_method(Method::PrcLin, &train, &val, &norm, 2, &spec).unwrap();
        assert!(fitted.curve.is_none());
    }

    #[test]
    fn analytical_is_not_trainable() {
        let (train, val, norm) = tiny_splits();
        assert!(fit_method(Method::Analytical, &train, &val, &norm, 1, &quick_spec()).is_err());
    }

    #[test]
    fn fitting_is_deterministic() {
        let (train, val, norm) = tiny_splits();
        let a = fit_method(Method::PrcMlp, &train, &val, &norm, 2, &quick_spec()).unwrap();
        let b = fit_method(Method::PrcMlp, &train, &val, &norm, 2, &quick_spec()).unwrap();
        assert_eq!(a, b);
    }
}
