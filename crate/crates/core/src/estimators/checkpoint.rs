use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use super::{FittedModel, Method, ModelParams, TrainingCurve};
use crate::dataset::{Normalizer, SensorChannels};
use crate::{Error, Result};

/// A trained estimator with everything needed to apply it to new logs.
///
/// Stored as JSON: the architecture is implied by the tagged `model`
/// parameters, and `config_hash` ties it to the experiment that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub method: Method,
    pub window: usize,
    pub channels: SensorChannels,
    pub normalizer: Normalizer,
    pub model: ModelParams,
    pub curve: Option<TrainingCurve>,
    pub config_hash: String,
}

impl Checkpoint {
    pub fn new(fitted: FittedModel, normalizer: Normalizer, config_hash: impl Into<String>) -> Self {
        Self {
            method: fitted.method,
            window: fitted.window,
            channels: fitted.channels,
            normalizer,
            model: fitted.model,
            curve: fitted.curve,
            config_hash: config_hash.into(),
        }
    }

    pub fn fitted(&self) -> FittedModel {
        FittedModel {
            method: self.method,
            window: self.window,
            channels: self.channels,
            model: self.model.clone(),
            curve: self.curve.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|e| Error::format(path, e.to_string()))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// Refuse a checkpoint produced under a different experiment config.
    pub fn expect_config(&self, config_hash: &str, artifact: &str) -> Result<()> {
        if self.config_hash != config_hash {
            return Err(Error::HashMismatch {
                artifact: artifact.to_string(),
                expected: config_hash.to_string(),
                found: self.config_hash.clone(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{LinearReadout, MlpReadout};

    fn normalizer() -> Normalizer {
        Normalizer {
            min: vec![-1.0; 54],
            max: vec![2.0; 54],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let fitted = FittedModel {
            method: Method::PrcMlp,
            window: 4,
            channels: SensorChannels::Full,
            model: ModelParams::Mlp(MlpReadout::new(99, &[5, 5], 27, 3)),
            curve: None,
        };
        let cp = Checkpoint::new(fitted.clone(), normalizer(), "abc");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        cp.write(&path).unwrap();
        let back = Checkpoint::read(&path).unwrap();
        assert_eq!(back, cp);
        assert_eq!(back.fitted(), fitted);
    }

    #[test]
    fn config_hash_mismatch_is_refused() {
        let fitted = FittedModel {
            method: Method::PrcLin,
            window: 1,
            channels: SensorChannels::Full,
            model: ModelParams::Linear(LinearReadout::zeros(18, 27)),
            curve: None,
        };
        let cp = Checkpoint::new(fitted, normalizer(), "abc");
        assert!(cp.expect_config("abc", "model").is_ok());
        assert_eq!(cp.expect_config("def", "model").unwrap_err().kind(), "hash-mismatch");
    }
}
