use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use super::{CHANNELS, COMMAND_DIM, MARKER_DIM, SENSOR_DIM};
use crate::hashing::f64_hash;
use crate::{Error, Result, JOINTS};

/// CSV header: time, motor angles, loads, commands, marker coordinates.
pub fn column_names() -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=JOINTS).map(|j| format!("motor_angle_{j}")));
    cols.extend((1..=JOINTS).map(|j| format!("motor_load_{j}")));
    cols.extend((1..=JOINTS).map(|j| format!("command_{j}")));
    for k in 1..=JOINTS {
        for axis in ["x", "y", "z"] {
            cols.push(format!("marker_{k}_{axis}"));
        }
    }
    cols
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SessionManifest {
    /// Zero-based session index within the experiment.
    pub session: usize,
    pub seed: u64,
    pub config_hash: String,
    /// Steps simulated.
    pub steps: usize,
    /// Index of the first retained step (non-zero after burn-in trimming).
    pub first_step: usize,
    /// Bit-exact hash of all logged values.
    pub content_hash: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestFile {
    #[serde(flatten)]
    manifest: SessionManifest,
    rows: usize,
    columns: Vec<String>,
}

/// Per-step sensors `s_t`, commands `u_t` and marker ground truth `y_t`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SessionLog {
    pub manifest: SessionManifest,
    pub times: Vec<f64>,
    pub sensors: Vec<[f64; SENSOR_DIM]>,
    pub commands: Vec<[f64; COMMAND_DIM]>,
    pub markers: Vec<[f64; MARKER_DIM]>,
}

impl SessionLog {
    pub fn with_capacity(steps: usize) -> Self {
        Self {
            manifest: SessionManifest::default(),
            times: Vec::with_capacity(steps),
            sensors: Vec::with_capacity(steps),
            commands: Vec::with_capacity(steps),
            markers: Vec::with_capacity(steps),
        }
    }

    pub fn push(
        &mut self,
        t: f64,
        sensors: [f64; SENSOR_DIM],
        command: [f64; COMMAND_DIM],
        markers: [f64; MARKER_DIM],
    ) {
        self.times.push(t);
        self.sensors.push(sensors);
        self.commands.push(command);
        self.markers.push(markers);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// All 54 channels of step `t`: sensors, command, markers.
    pub fn channels(&self, t: usize) -> [f64; CHANNELS] {
        let mut row = [0.0; CHANNELS];
        row[..SENSOR_DIM].copy_from_slice(&self.sensors[t]);
        row[SENSOR_DIM..SENSOR_DIM + COMMAND_DIM].copy_from_slice(&self.commands[t]);
        row[SENSOR_DIM + COMMAND_DIM..].copy_from_slice(&self.markers[t]);
        row
    }

    /// Copy without the first `n` steps.
    pub fn skip(&self, n: usize) -> Self {
        let n = n.min(self.len());
        let mut out = Self {
            manifest: self.manifest.clone(),
            times: self.times[n..].to_vec(),
            sensors: self.sensors[n..].to_vec(),
            commands: self.commands[n..].to_vec(),
            markers: self.markers[n..].to_vec(),
        };
        out.manifest.first_step += n;
        out.refresh_content_hash();
        out
    }

    pub fn compute_content_hash(&self) -> String {
        f64_hash((0..self.len()).flat_map(|t| {
            std::iter::once(self.times[t]).chain(self.channels(t))
        }))
    }

    pub fn refresh_content_hash(&mut self) {
        self.manifest.content_hash = self.compute_content_hash();
    }

    pub fn manifest_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("json")
    }

    /// Write `<path>` as CSV and the manifest next to it as `<stem>.json`.
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(csv_path)
            .map_err(|e| Error::format(csv_path, e))?;
        writer
            .write_record(column_names())
            .map_err(|e| Error::format(csv_path, e))?;
        for t in 0..self.len() {
            let record = std::iter::once(self.times[t])
                .chain(self.channels(t))
                .map(|v| v.to_string());
            writer
                .write_record(record)
                .map_err(|e| Error::format(csv_path, e))?;
        }
        writer
            .flush()
            .map_err(|e| Error::io(csv_path, e))?;

        let manifest_path = Self::manifest_path(csv_path);
        let file = ManifestFile {
            manifest: self.manifest.clone(),
            rows: self.len(),
            columns: column_names(),
        };
        let json = serde_json::to_string_pretty(&file).map_err(|e| Error::format(&manifest_path, e))?;
        fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))
    }

    /// Read a CSV log and its manifest; the content hash must match.
    pub fn read(csv_path: &Path) -> Result<Self> {
        let manifest_path = Self::manifest_path(csv_path);
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let file: ManifestFile =
            serde_json::from_str(&text).map_err(|e| Error::format(&manifest_path, e))?;
        if file.columns != column_names() {
            return Err(Error::format(&manifest_path, "unexpected column layout"));
        }

        let mut reader = csv::Reader::from_path(csv_path).map_err(|e| Error::format(csv_path, e))?;
        let mut log = Self::with_capacity(file.rows);
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::format(csv_path, e))?;
            if record.len() != CHANNELS + 1 {
                return Err(Error::format(
                    csv_path,
                    format!("row {line}: expected {} fields, got {}", CHANNELS + 1, record.len()),
                ));
            }
            let values = record
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::format(csv_path, format!("row {line}: {e}")))?;
            let mut sensors = [0.0; SENSOR_DIM];
            let mut command = [0.0; COMMAND_DIM];
            let mut markers = [0.0; MARKER_DIM];
            sensors.copy_from_slice(&values[1..1 + SENSOR_DIM]);
            command.copy_from_slice(&values[1 + SENSOR_DIM..1 + SENSOR_DIM + COMMAND_DIM]);
            markers.copy_from_slice(&values[1 + SENSOR_DIM + COMMAND_DIM..]);
            log.push(values[0], sensors, command, markers);
        }
        if log.len() != file.rows {
            return Err(Error::format(
                csv_path,
                format!("manifest lists {} rows, file has {}", file.rows, log.len()),
            ));
        }
        log.manifest = file.manifest;
        if log.compute_content_hash() != log.manifest.content_hash {
            return Err(Error::format(csv_path, "content hash does not match manifest"));
        }
        Ok(log)
    }
}
