//! The pipeline stages behind each subcommand.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serpentine_prc::dataset::{split_sessions, Normalizer, SessionLog, Splits};
use serpentine_prc::estimators::{
    analytical_estimate, fit_method, predict_markers, Checkpoint, LinearTrainer, Method,
    TrainingCurve,
};
use serpentine_prc::evaluation::{compare_methods, sweep_window, ComparisonTable, SweepResult};
use serpentine_prc::hashing::json_hash;
use serpentine_prc::kinematics::MarkerSet;
use serpentine_prc::plant::run_session;
use serpentine_prc::{Error, Result};

use crate::config::ExperimentConfig;

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    write_atomic(path, json.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ResolvedConfig {
    config_hash: String,
    data_hash: String,
    config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub data_hash: String,
    pub sessions: Vec<SessionSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session: usize,
    pub seed: u64,
    pub steps: usize,
    pub content_hash: String,
    pub path: PathBuf,
}

/// Simulate every session with its derived seed and write the logs.
pub fn generate(cfg: &ExperimentConfig) -> Result<GenerateSummary> {
    let data_hash = cfg.data_hash();
    let sessions = (0..cfg.dataset.sessions)
        .into_par_iter()
        .map(|k| {
            let mut log = run_session(
                &cfg.plant,
                cfg.session_seed(k),
                cfg.dataset.steps,
                cfg.dataset.target_refresh,
            )?;
            log.manifest.session = k;
            log.manifest.config_hash = data_hash.clone();
            let path = cfg.session_path(k);
            fs::create_dir_all(cfg.data_dir()).map_err(|e| Error::io(cfg.data_dir(), e))?;
            log.write(&path)?;
            Ok(SessionSummary {
                session: k,
                seed: log.manifest.seed,
                steps: log.len(),
                content_hash: log.manifest.content_hash.clone(),
                path,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(
        &cfg.output_dir.join("config.json"),
        &ResolvedConfig {
            config_hash: cfg.config_hash(),
            data_hash: data_hash.clone(),
            config: cfg.clone(),
        },
    )?;
    Ok(GenerateSummary { data_hash, sessions })
}

/// Read all session logs, refusing data generated under other settings.
pub fn load_sessions(cfg: &ExperimentConfig) -> Result<Vec<SessionLog>> {
    let expected = cfg.data_hash();
    (0..cfg.dataset.sessions)
        .into_par_iter()
        .map(|k| {
            let path = cfg.session_path(k);
            if !path.exists() {
                return Err(Error::Missing {
                    path,
                    hint: "run `serpentine generate` with the same config first".into(),
                });
            }
            let log = SessionLog::read(&path)?;
            if log.manifest.config_hash != expected {
                return Err(Error::HashMismatch {
                    artifact: path.display().to_string(),
                    expected: expected.clone(),
                    found: log.manifest.config_hash.clone(),
                });
            }
            Ok(log)
        })
        .collect()
}

/// Session splits after burn-in and the normalizer fitted on training data.
pub fn prepare(cfg: &ExperimentConfig) -> Result<(Splits, Normalizer)> {
    let logs = load_sessions(cfg)?;
    let splits = split_sessions(&logs, cfg.dataset.burnin)?;
    let norm = Normalizer::fit(&splits.train)?;
    Ok((splits, norm))
}

pub fn checkpoint_path(cfg: &ExperimentConfig, method: Method) -> PathBuf {
    cfg.models_dir().join(format!("{}.json", method.name()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub method: Method,
    pub window: usize,
    pub input_dim: usize,
    pub checkpoint: PathBuf,
    pub epochs: usize,
    pub best_val_loss: Option<f64>,
}

fn curve_csv(curve: &TrainingCurve) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,lr\n");
    for e in &curve.epochs {
        out.push_str(&format!("{},{},{},{}\n", e.epoch, e.train_loss, e.val_loss, e.lr));
    }
    out
}

/// Train the given methods (in parallel) and write one checkpoint each.
/// `ridge` switches the linear readout to the closed-form fit.
pub fn train(cfg: &ExperimentConfig, methods: &[Method], ridge: Option<f64>) -> Result<Vec<TrainSummary>> {
    if methods.contains(&Method::Analytical) {
        return Err(Error::InvalidConfig(
            "the analytical baseline has no trainable parameters".into(),
        ));
    }
    let (splits, norm) = prepare(cfg)?;
    let mut spec = cfg.training_spec();
    if let Some(lambda) = ridge {
        spec.linear = LinearTrainer::Ridge { lambda };
    }
    let h = cfg.dataset.window;
    let hash = cfg.config_hash();
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    methods
        .par_iter()
        .map(|&method| {
            let fitted = fit_method(method, &splits.train, &splits.val, &norm, h, &spec)?;
            let input_dim = match &fitted.model {
                serpentine_prc::estimators::ModelParams::Mlp(m) => m.input_dim(),
                serpentine_prc::estimators::ModelParams::Linear(m) => m.input_dim(),
                serpentine_prc::estimators::ModelParams::Lstm(m) => m.input_dim(),
            };
            let path = checkpoint_path(cfg, method);
            if let Some(curve) = &fitted.curve {
                write_atomic(
                    &cfg.models_dir().join(format!("{}_curve.csv", method.name())),
                    curve_csv(curve).as_bytes(),
                )?;
            }
            let summary = TrainSummary {
                method,
                window: h,
                input_dim,
                checkpoint: path.clone(),
                epochs: fitted.curve.as_ref().map_or(0, |c| c.epochs.len()),
                best_val_loss: fitted.curve.as_ref().map(|c| c.best_val_loss),
            };
            let checkpoint = Checkpoint::new(fitted, norm.clone(), hash.clone());
            fs::create_dir_all(cfg.models_dir()).map_err(|e| Error::io(cfg.models_dir(), e))?;
            checkpoint.write(&path)?;
            Ok(summary)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config_hash: String,
    pub window: usize,
    /// Test sessions and the first evaluated step of each.
    pub test_sessions: Vec<(usize, usize)>,
    pub table: ComparisonTable,
    /// Hash of everything above.
    pub report_hash: String,
}

/// Checkpoint of `method` if one exists, after hash and window checks.
pub fn load_checkpoint(cfg: &ExperimentConfig, method: Method) -> Result<Option<Checkpoint>> {
    let path = checkpoint_path(cfg, method);
    if !path.exists() {
        return Ok(None);
    }
    let cp = Checkpoint::read(&path)?;
    if cp.window != cfg.dataset.window {
        return Err(Error::HashMismatch {
            artifact: format!("{} window", path.display()),
            expected: cfg.dataset.window.to_string(),
            found: cp.window.to_string(),
        });
    }
    cp.expect_config(&cfg.config_hash(), &path.display().to_string())?;
    Ok(Some(cp))
}

/// Score the analytical baseline and every available checkpoint on the
/// test sessions. All methods are scored on the same steps: those with a
/// full window. Requested methods without a checkpoint appear as absent.
pub fn evaluate(cfg: &ExperimentConfig, methods: &[Method]) -> Result<EvaluationReport> {
    let (splits, norm) = prepare(cfg)?;
    let h = cfg.dataset.window;
    let offset = h - 1;
    let mut truth = Vec::new();
    let mut test_sessions = Vec::new();
    for log in &splits.test {
        if log.len() <= offset {
            return Err(Error::InsufficientData("test session shorter than the window".into()));
        }
        truth.extend(log.markers[offset..].iter().map(|m| MarkerSet::from_flat(m)).collect::<Result<Vec<_>>>()?);
        test_sessions.push((log.manifest.session, log.manifest.first_step + offset));
    }

    let mut predictions = BTreeMap::new();
    for &method in methods {
        if method == Method::Analytical {
            let mut pred = Vec::new();
            for log in &splits.test {
                pred.extend(analytical_estimate(log, &cfg.plant.geometry)?.into_iter().skip(offset));
            }
            predictions.insert(method, pred);
        } else if let Some(cp) = load_checkpoint(cfg, method)? {
            if cp.normalizer != norm {
                return Err(Error::HashMismatch {
                    artifact: format!("{} normalizer", method.name()),
                    expected: json_hash(&norm),
                    found: json_hash(&cp.normalizer),
                });
            }
            let (pred, _) = predict_markers(&cp.fitted(), &norm, &splits.test)?;
            predictions.insert(method, pred);
        }
    }
    let table = compare_methods(&truth, &predictions, methods)?;
    let config_hash = cfg.config_hash();
    let report_hash = json_hash(&(&config_hash, h, &test_sessions, &table));
    let report = EvaluationReport {
        config_hash,
        window: h,
        test_sessions,
        table,
        report_hash,
    };
    write_json(&cfg.reports_dir().join("table.json"), &report)?;
    write_atomic(&cfg.reports_dir().join("table.txt"), report.table.to_text().as_bytes())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config_hash: String,
    pub result: SweepResult,
}

/// Train the reservoir MLP for each window length and record the best
/// validation loss of each.
pub fn sweep(cfg: &ExperimentConfig, windows: &[usize]) -> Result<SweepSummary> {
    let (splits, norm) = prepare(cfg)?;
    let result = sweep_window(windows, &splits, &norm, &cfg.training_spec())?;
    let summary = SweepSummary {
        config_hash: cfg.config_hash(),
        result,
    };
    write_atomic(&cfg.reports_dir().join("sweep.csv"), summary.result.to_csv().as_bytes())?;
    write_json(&cfg.reports_dir().join("sweep.json"), &summary)?;
    Ok(summary)
}
