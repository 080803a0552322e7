//! Marker error metrics, method comparison and window-length sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::dataset::{SessionLog, Splits};
use crate::dataset::Normalizer;
use crate::estimators::{fit_method, Method, ReadoutSpec};
use crate::kinematics::MarkerSet;
use crate::{Error, Result, JOINTS};

/// Mean and spread of the per-step marker error, mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub samples: usize,
    /// Mean over steps of the mean Euclidean marker distance.
    pub mean_mm: f64,
    /// Population standard deviation of the per-step error over steps.
    pub std_mm: f64,
    /// Mean Euclidean error of each marker over steps.
    pub per_marker_mm: [f64; JOINTS],
    /// Mean squared coordinate error, mm^2.
    pub mse_mm2: f64,
}

pub fn marker_error(pred: &[MarkerSet], truth: &[MarkerSet]) -> Result<ErrorReport> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(Error::InsufficientData("no samples to evaluate".into()));
    }
    let n = pred.len() as f64;
    let mut per_step = Vec::with_capacity(pred.len());
    let mut per_marker = [0.0; JOINTS];
    let mut squared = 0.0;
    for (p, y) in pred.iter().zip(truth) {
        let mut step_sum = 0.0;
        for k in 0..JOINTS {
            let d = p.position(k) - y.position(k);
            let dist = d.norm();
            step_sum += dist;
            per_marker[k] += dist;
            squared += d.norm_squared();
        }
        per_step.push(step_sum / JOINTS as f64);
    }
    let mean = per_step.iter().sum::<f64>() / n;
    let var = per_step.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    Ok(ErrorReport {
        samples: pred.len(),
        mean_mm: mean,
        std_mm: var.sqrt(),
        per_marker_mm: per_marker.map(|s| s / n),
        mse_mm2: squared / (n * 3.0 * JOINTS as f64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub label: String,
    /// `None` when the method had no predictions.
    pub report: Option<ErrorReport>,
}

/// One column per method, in the fixed method order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub samples: usize,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn report(&self, method: Method) -> Option<&ErrorReport> {
        self.rows
            .iter()
            .find(|r| r.method == method)
            .and_then(|r| r.report.as_ref())
    }

    /// Aligned text rendering: method labels over `mean ± std [mm]`.
    pub fn to_text(&self) -> String {
        let cells: Vec<(String, String)> = self
            .rows
            .iter()
            .map(|row| {
                let value = match &row.report {
                    Some(r) => format!("{:.2} ± {:.2}", r.mean_mm, r.std_mm),
                    None => "n/a".to_string(),
                };
                (row.label.clone(), value)
            })
            .collect();
        let width = cells
            .iter()
            .map(|(l, v)| l.chars().count().max(v.chars().count()))
            .max()
            .unwrap_or(0)
            + 2;
        let mut out = format!("Marker error, mean ± std [mm] (n = {})\n", self.samples);
        for (label, _) in &cells {
            let _ = write!(out, "{label:<width$}");
        }
        out = out.trim_end().to_string();
        out.push('\n');
        for (_, value) in &cells {
            let _ = write!(out, "{value:<width$}");
        }
        out.trim_end().to_string() + "\n"
    }
}

/// Evaluate every requested method against the same ground truth. Methods
/// listed without predictions appear as absent rows.
pub fn compare_methods(
    truth: &[MarkerSet],
    predictions: &BTreeMap<Method, Vec<MarkerSet>>,
    methods: &[Method],
) -> Result<ComparisonTable> {
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    let rows = methods
        .into_iter()
        .map(|method| {
            let report = predictions
                .get(&method)
                .map(|pred| marker_error(pred, truth))
                .transpose()?;
            Ok(ComparisonRow {
                method,
                label: method.label().to_string(),
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonTable {
        samples: truth.len(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub window: usize,
    /// Best validation MSE (normalized units); `None` if training diverged.
    pub val_loss: Option<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub best_window: Option<usize>,
}

impl SweepResult {
    pub fn loss(&self, window: usize) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.window == window)
            .and_then(|p| p.val_loss)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("H,L\n");
        for p in &self.points {
            match p.val_loss {
                Some(l) => {
                    let _ = writeln!(out, "{},{}", p.window, l);
                }
                None => {
                    let _ = writeln!(out, "{},", p.window);
                }
            }
        }
        out
    }
}

/// Train the reservoir MLP once per window length with identical settings
/// and record the best validation loss of each. Duplicate windows are
/// trained once; a diverged point is flagged and the sweep continues.
pub fn sweep_window(
    windows: &[usize],
    splits: &Splits,
    norm: &Normalizer,
    spec: &ReadoutSpec,
) -> Result<SweepResult> {
    let mut windows = windows.to_vec();
    windows.sort_unstable();
    windows.dedup();
    if windows.contains(&0) {
        return Err(Error::Window("window size must be at least 1".into()));
    }
    let points = windows
        .par_iter()
        .map(|&h| {
            match fit_method(Method::PrcMlp, &splits.train, &splits.val, norm, h, spec) {
                Ok(fitted) => Ok(SweepPoint {
                    window: h,
                    val_loss: fitted.curve.map(|c| c.best_val_loss),
                    diverged: false,
                }),
                Err(Error::Diverged { .. }) => Ok(SweepPoint {
                    window: h,
                    val_loss: None,
                    diverged: true,
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let best_window = points
        .iter()
        .filter_map(|p| p.val_loss.map(|l| (p.window, l)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(h, _)| h);
    Ok(SweepResult {
        points,
        best_window,
    })
}

/// Ground-truth marker sets of a log from step `from` on.
pub fn truth_markers(log: &SessionLog, from: usize) -> Result<Vec<MarkerSet>> {
    log.markers[from.min(log.len())..]
        .iter()
        .map(|m| MarkerSet::from_flat(m))
        .collect()
}
