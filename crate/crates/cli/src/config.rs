//! Experiment configuration: profile presets, JSON overrides and hashes.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fs;
use std::path::{Path, PathBuf};

use serpentine_prc::dataset::DEFAULT_BURNIN;
use serpentine_prc::estimators::{ReadoutSpec, TrainConfig};
use serpentine_prc::hashing::{derive_seed, json_hash};
use serpentine_prc::plant::PlantConfig;
use serpentine_prc::{Error, Result};

pub const DEFAULT_MASTER_SEED: u64 = 42;

/// Counter offset for training seeds, clear of the per-session counters.
const TRAIN_SEED_COUNTER: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// 23 sessions of 2100 steps, 512-wide models.
    Full,
    /// 23 sessions of 500 steps, 128-wide models.
    Desk,
    /// 4 sessions of 500 steps, 64-wide models, short training.
    Ci,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Full => "full",
            Profile::Desk => "desk",
            Profile::Ci => "ci",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetParams {
    pub sessions: usize,
    pub steps: usize,
    pub burnin: usize,
    pub target_refresh: usize,
    /// Window length `H` of the reservoir vector.
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub master_seed: u64,
    pub plant: PlantConfig,
    pub dataset: DatasetParams,
    pub readout: ReadoutSpec,
    pub sweep_windows: Vec<usize>,
    /// Not part of the config hash.
    pub output_dir: PathBuf,
}

/// Everything that determines the generated sessions.
#[derive(Serialize)]
struct DataIdentity<'a> {
    master_seed: u64,
    plant: &'a PlantConfig,
    sessions: usize,
    steps: usize,
    target_refresh: usize,
}

impl ExperimentConfig {
    pub fn preset(profile: Profile) -> Self {
        // Desk epochs are a fifth of a full-profile epoch, so the schedule
        // checks every fifth epoch to keep the updates per check equal.
        let (sessions, steps, width, lstm, max_epochs, check_interval, sweep) = match profile {
            Profile::Full => (23, 2100, 512, 512, 2000, 1, vec![1, 2, 4, 8, 16]),
            Profile::Desk => (23, 500, 128, 64, 2000, 5, vec![1, 2, 4, 8, 16]),
            Profile::Ci => (4, 500, 64, 64, 40, 1, vec![1, 4]),
        };
        Self {
            profile,
            master_seed: DEFAULT_MASTER_SEED,
            plant: PlantConfig::default(),
            dataset: DatasetParams {
                sessions,
                steps,
                burnin: DEFAULT_BURNIN,
                target_refresh: 5,
                window: 4,
            },
            readout: ReadoutSpec {
                mlp_hidden: vec![width; 3],
                lstm_hidden: lstm,
                train: TrainConfig {
                    max_epochs,
                    check_interval,
                    ..TrainConfig::default()
                },
                ..ReadoutSpec::default()
            },
            sweep_windows: sweep,
            output_dir: PathBuf::from("runs").join(profile.name()),
        }
    }

    /// Resolve a configuration: the preset of `profile` (else the file's
    /// `profile` key, else desk) with the JSON file's keys merged over it.
    pub fn load(path: Option<&Path>, profile: Option<Profile>) -> Result<Self> {
        let overrides = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::Io {
                    path: p.to_path_buf(),
                    source: e,
                })?;
                serde_json::from_str::<Value>(&text).map_err(|e| Error::Format {
                    path: p.to_path_buf(),
                    message: e.to_string(),
                })?
            }
            None => Value::Object(Default::default()),
        };
        let file_profile = overrides
            .get("profile")
            .map(|v| serde_json::from_value::<Profile>(v.clone()))
            .transpose()
            .map_err(|e| Error::InvalidConfig(format!("profile: {e}")))?;
        let profile = profile.or(file_profile).unwrap_or(Profile::Desk);
        let mut merged = serde_json::to_value(Self::preset(profile)).expect("config serializes");
        merge(&mut merged, overrides);
        merged["profile"] = serde_json::to_value(profile).expect("profile serializes");
        let cfg: Self = serde_json::from_value(merged)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.readout.train.validate()?;
        let d = &self.dataset;
        if d.window == 0 || self.sweep_windows.contains(&0) {
            return Err(Error::Window("window size must be at least 1".into()));
        }
        if d.sessions < 3 {
            return Err(Error::InvalidConfig("at least 3 sessions are needed".into()));
        }
        if d.target_refresh == 0 || d.steps < d.target_refresh || d.burnin + d.window > d.steps {
            return Err(Error::InvalidConfig(
                "steps must cover the target refresh, burn-in and window".into(),
            ));
        }
        if self.readout.mlp_hidden.contains(&0) || self.readout.lstm_hidden == 0 {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Hash of everything except the output directory.
    pub fn config_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        json_hash(&canonical)
    }

    /// Hash of the settings that determine the session data.
    pub fn data_hash(&self) -> String {
        json_hash(&DataIdentity {
            master_seed: self.master_seed,
            plant: &self.plant,
            sessions: self.dataset.sessions,
            steps: self.dataset.steps,
            target_refresh: self.dataset.target_refresh,
        })
    }

    pub fn session_seed(&self, session: usize) -> u64 {
        derive_seed(self.master_seed, session as u64)
    }

    /// Readout settings with the training seed derived from the master seed.
    pub fn training_spec(&self) -> ReadoutSpec {
        let mut spec = self.readout.clone();
        spec.train.seed = derive_seed(self.master_seed, TRAIN_SEED_COUNTER + self.readout.train.seed);
        spec
    }

    pub fn data_dir(&self) -> PathBuf {
        self.output_dir.join("data")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.output_dir.join("models")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.output_dir.join("reports")
    }

    pub fn session_path(&self, session: usize) -> PathBuf {
        self.data_dir().join(format!("session_{session:02}.csv"))
    }
}

/// Recursive merge of JSON objects; non-object values replace.
fn merge(base: &mut Value, overrides: Value) {
    match (base, overrides) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
