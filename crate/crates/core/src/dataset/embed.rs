use ndarray::{s, Array2, Array3};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use super::{Normalizer, SessionLog, COMMAND_DIM, MARKER_DIM, SENSOR_DIM};
use crate::hashing::f64_hash;
use crate::{Error, Result, JOINTS};

/// Which sensor channels enter the reservoir vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensorChannels {
    /// Motor angles and loads.
    Full,
    /// Motor angles only.
    NoLoad,
}

impl SensorChannels {
    pub fn sensor_dim(self) -> usize {
        match self {
            SensorChannels::Full => SENSOR_DIM,
            SensorChannels::NoLoad => JOINTS,
        }
    }

    /// Length of the delay-embedded vector for window `h`: `h` sensor frames
    /// plus the `h - 1` previous commands (27h - 9 with loads).
    pub fn input_dim(self, h: usize) -> usize {
        self.sensor_dim() * h + COMMAND_DIM * (h - 1)
    }
}

/// Delay-embedded inputs with their marker targets, all normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedSet {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
    /// (session, step) of each sample's target.
    pub provenance: Vec<(usize, usize)>,
    pub window: usize,
    pub channels: SensorChannels,
}

impl SupervisedSet {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn content_hash(&self) -> String {
        f64_hash(self.inputs.iter().chain(self.targets.iter()).copied())
    }
}

/// Frames of `(s_k, u_k)` per sample, oldest first, with the current
/// command zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSet {
    /// Shape `(samples, h, 27)`.
    pub inputs: Array3<f64>,
    pub targets: Array2<f64>,
    pub provenance: Vec<(usize, usize)>,
    pub window: usize,
}

impl SequenceSet {
    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_window(log: &SessionLog, h: usize) -> Result<()> {
    if h < 1 {
        return Err(Error::Window("window size must be at least 1".into()));
    }
    if log.len() < h {
        return Err(Error::Window(format!(
            "session {} has {} steps, shorter than window {h}",
            log.manifest.session,
            log.len()
        )));
    }
    Ok(())
}

/// Build `x_t = (s_t, ..., s_{t-h+1}, u_{t-1}, ..., u_{t-h+1})` with target
/// `y_t` for every step of one session that has a full window. The command
/// issued at `t` is never part of `x_t`.
pub fn embed(
    log: &SessionLog,
    h: usize,
    norm: &Normalizer,
    channels: SensorChannels,
) -> Result<SupervisedSet> {
    check_window(log, h)?;
    let n = log.len() - h + 1;
    let sensor_dim = channels.sensor_dim();
    let dim = channels.input_dim(h);
    let sensors: Vec<_> = log.sensors.iter().map(|s| norm.normalize_sensors(s)).collect();
    let commands: Vec<_> = log.commands.iter().map(|u| norm.normalize_command(u)).collect();
    let mut inputs = Array2::zeros((n, dim));
    let mut targets = Array2::zeros((n, MARKER_DIM));
    let mut provenance = Vec::with_capacity(n);
    for (row, t) in (h - 1..log.len()).enumerate() {
        let mut x = inputs.row_mut(row);
        let mut col = 0;
        for lag in 0..h {
            for &v in &sensors[t - lag][..sensor_dim] {
                x[col] = v;
                col += 1;
            }
        }
        for lag in 1..h {
            for &v in &commands[t - lag] {
                x[col] = v;
                col += 1;
            }
        }
        debug_assert_eq!(col, dim);
        let y = norm.normalize_markers(&log.markers[t]);
        targets.row_mut(row).assign(&ndarray::ArrayView1::from(&y[..]));
        provenance.push((log.manifest.session, log.manifest.first_step + t));
    }
    Ok(SupervisedSet {
        inputs,
        targets,
        provenance,
        window: h,
        channels,
    })
}

/// [`embed`] per session, stacked. Windows never span two sessions.
pub fn embed_sessions(
    logs: &[SessionLog],
    h: usize,
    norm: &Normalizer,
    channels: SensorChannels,
) -> Result<SupervisedSet> {
    let parts = logs
        .iter()
        .map(|log| embed(log, h, norm, channels))
        .collect::<Result<Vec<_>>>()?;
    let total: usize = parts.iter().map(SupervisedSet::len).sum();
    let mut inputs = Array2::zeros((total, channels.input_dim(h.max(1))));
    let mut targets = Array2::zeros((total, MARKER_DIM));
    let mut provenance = Vec::with_capacity(total);
    let mut offset = 0;
    for part in parts {
        let n = part.len();
        inputs.slice_mut(s![offset..offset + n, ..]).assign(&part.inputs);
        targets.slice_mut(s![offset..offset + n, ..]).assign(&part.targets);
        provenance.extend(part.provenance);
        offset += n;
    }
    Ok(SupervisedSet {
        inputs,
        targets,
        provenance,
        window: h,
        channels,
    })
}

/// Frame sequences for the recurrent baseline. Frame `k` is `(s_k, u_k)`;
/// the command of the final frame (the current step) is replaced by zeros.
pub fn lstm_sequences(log: &SessionLog, h: usize, norm: &Normalizer) -> Result<SequenceSet> {
    lstm_sequences_sessions(std::slice::from_ref(log), h, norm)
}

pub fn lstm_sequences_sessions(
    logs: &[SessionLog],
    h: usize,
    norm: &Normalizer,
) -> Result<SequenceSet> {
    for log in logs {
        check_window(log, h)?;
    }
    let total: usize = logs.iter().map(|l| l.len() - h + 1).sum();
    let frame = SENSOR_DIM + COMMAND_DIM;
    let mut inputs = Array3::zeros((total, h, frame));
    let mut targets = Array2::zeros((total, MARKER_DIM));
    let mut provenance = Vec::with_capacity(total);
    let mut row = 0;
    for log in logs {
        let sensors: Vec<_> = log.sensors.iter().map(|s| norm.normalize_sensors(s)).collect();
        let commands: Vec<_> = log.commands.iter().map(|u| norm.normalize_command(u)).collect();
        for t in h - 1..log.len() {
            for k in 0..h {
                let step = t + 1 - h + k;
                let mut f = inputs.slice_mut(s![row, k, ..]);
                for (i, &v) in sensors[step].iter().enumerate() {
                    f[i] = v;
                }
                if step != t {
                    for (i, &v) in commands[step].iter().enumerate() {
                        f[SENSOR_DIM + i] = v;
                    }
                }
            }
            let y = norm.normalize_markers(&log.markers[t]);
            targets.row_mut(row).assign(&ndarray::ArrayView1::from(&y[..]));
            provenance.push((log.manifest.session, log.manifest.first_step + t));
            row += 1;
        }
    }
    Ok(SequenceSet {
        inputs,
        targets,
        provenance,
        window: h,
    })
}

/// JSON sidecar written next to an exported supervised tensor file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedSidecar {
    pub window: usize,
    pub channels: SensorChannels,
    pub split: String,
    pub rows: usize,
    pub input_dim: usize,
    pub normalizer: Normalizer,
    pub config_hash: String,
    pub content_hash: String,
}

/// Write inputs and targets as CSV (`x_0.., y_0..` columns plus session and
/// step) and the sidecar as `<stem>.json`.
pub fn write_supervised(
    set: &SupervisedSet,
    csv_path: &Path,
    split: &str,
    norm: &Normalizer,
    config_hash: &str,
) -> Result<SupervisedSidecar> {
    let mut writer = csv::Writer::from_path(csv_path).map_err(|e| Error::format(csv_path, e))?;
    let header: Vec<String> = ["session".to_string(), "step".to_string()]
        .into_iter()
        .chain((0..set.inputs.ncols()).map(|i| format!("x_{i}")))
        .chain((0..MARKER_DIM).map(|i| format!("y_{i}")))
        .collect();
    writer.write_record(&header).map_err(|e| Error::format(csv_path, e))?;
    for (i, (session, step)) in set.provenance.iter().enumerate() {
        let (x, y) = (set.inputs.row(i), set.targets.row(i));
        let record = [session.to_string(), step.to_string()]
            .into_iter()
            .chain(x.iter().map(f64::to_string))
            .chain(y.iter().map(f64::to_string));
        writer.write_record(record).map_err(|e| Error::format(csv_path, e))?;
    }
    writer.flush().map_err(|e| Error::io(csv_path, e))?;

    let sidecar = SupervisedSidecar {
        window: set.window,
        channels: set.channels,
        split: split.to_string(),
        rows: set.len(),
        input_dim: set.inputs.ncols(),
        normalizer: norm.clone(),
        config_hash: config_hash.to_string(),
        content_hash: set.content_hash(),
    };
    let path = csv_path.with_extension("json");
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::format(&path, e))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(sidecar)
}

pub fn read_supervised(csv_path: &Path) -> Result<(SupervisedSet, SupervisedSidecar)> {
    let path = csv_path.with_extension("json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let sidecar: SupervisedSidecar =
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e))?;
    let mut reader = csv::Reader::from_path(csv_path).map_err(|e| Error::format(csv_path, e))?;
    let width = 2 + sidecar.input_dim + MARKER_DIM;
    let mut inputs = Array2::zeros((sidecar.rows, sidecar.input_dim));
    let mut targets = Array2::zeros((sidecar.rows, MARKER_DIM));
    let mut provenance = Vec::with_capacity(sidecar.rows);
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(csv_path, e))?;
        if i >= sidecar.rows || record.len() != width {
            return Err(Error::format(csv_path, format!("row {i} does not match sidecar shape")));
        }
        let field = |k: usize| record[k].parse::<f64>().map_err(|e| Error::format(csv_path, e));
        let session = record[0].parse().map_err(|e| Error::format(csv_path, e))?;
        let step = record[1].parse().map_err(|e| Error::format(csv_path, e))?;
        provenance.push((session, step));
        for j in 0..sidecar.input_dim {
            inputs[[i, j]] = field(2 + j)?;
        }
        for j in 0..MARKER_DIM {
            targets[[i, j]] = field(2 + sidecar.input_dim + j)?;
        }
    }
    if provenance.len() != sidecar.rows {
        return Err(Error::format(csv_path, "row count does not match sidecar"));
    }
    let set = SupervisedSet {
        inputs,
        targets,
        provenance,
        window: sidecar.window,
        channels: sidecar.channels,
    };
    if set.content_hash() != sidecar.content_hash {
        return Err(Error::format(csv_path, "content hash does not match sidecar"));
    }
    Ok((set, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{run_session, PlantConfig};

    fn logs(n: usize, steps: usize) -> Vec<SessionLog> {
        (0..n)
            .map(|s| {
                let mut log = run_session(&PlantConfig::default(), s as u64, steps, steps.min(5)).unwrap();
                log.manifest.session = s;
                log
            })
            .collect()
    }

    #[test]
    fn dimension_formula() {
        let data = logs(1, 40);
        let norm = Normalizer::fit(&data).unwrap();
        for h in 1..=16 {
            let set = embed(&data[0], h, &norm, SensorChannels::Full).unwrap();
            assert_eq!(set.inputs.ncols(), 27 * h - 9);
            let no_load = embed(&data[0], h, &norm, SensorChannels::NoLoad).unwrap();
            assert_eq!(no_load.inputs.ncols(), 18 * h - 9);
        }
        assert_eq!(SensorChannels::Full.input_dim(4), 99);
        assert_eq!(SensorChannels::NoLoad.input_dim(4), 63);
        assert_eq!(SensorChannels::NoLoad.input_dim(1), 9);
    }

    #[test]
    fn sample_count_and_alignment() {
        let data = logs(1, 2100);
        let trimmed = data[0].skip(100);
        let norm = Normalizer::fit(&[trimmed.clone()]).unwrap();
        let set = embed(&trimmed, 4, &norm, SensorChannels::Full).unwrap();
        assert_eq!(set.len(), 1997);
        for (i, &(_, step)) in set.provenance.iter().enumerate() {
            let t = step - trimmed.manifest.first_step;
            let s = norm.normalize_sensors(&trimmed.sensors[t]);
            for c in 0..18 {
                assert_eq!(set.inputs[[i, c]], s[c]);
            }
            // oldest sensor frame and first command lag
            let s3 = norm.normalize_sensors(&trimmed.sensors[t - 3]);
            assert_eq!(set.inputs[[i, 54]], s3[0]);
            let u1 = norm.normalize_command(&trimmed.commands[t - 1]);
            assert_eq!(set.inputs[[i, 72]], u1[0]);
            let u3 = norm.normalize_command(&trimmed.commands[t - 3]);
            assert_eq!(set.inputs[[i, 98]], u3[8]);
        }
    }

    #[test]
    fn windows_stay_inside_sessions() {
        let data = logs(3, 30);
        let norm = Normalizer::fit(&data).unwrap();
        let set = embed_sessions(&data, 5, &norm, SensorChannels::Full).unwrap();
        assert_eq!(set.len(), 3 * 26);
        for (i, &(session, step)) in set.provenance.iter().enumerate() {
            assert!(step >= 4, "window for step {step} would reach before the session");
            let s = norm.normalize_sensors(&data[session].sensors[step - 4]);
            assert_eq!(set.inputs[[i, 4 * 18]], s[0]);
        }
    }

    #[test]
    fn window_errors() {
        let data = logs(1, 3);
        let norm = Normalizer::fit(&data).unwrap();
        assert!(matches!(embed(&data[0], 0, &norm, SensorChannels::Full), Err(Error::Window(_))));
        assert!(matches!(embed(&data[0], 4, &norm, SensorChannels::Full), Err(Error::Window(_))));
        assert!(lstm_sequences(&data[0], 4, &norm).is_err());
    }

    #[test]
    fn lstm_frames() {
        let data = logs(1, 50);
        let norm = Normalizer::fit(&data).unwrap();
        for h in [1, 4] {
            let seq = lstm_sequences(&data[0], h, &norm).unwrap();
            assert_eq!(seq.inputs.shape(), &[50 - h + 1, h, 27]);
            for i in 0..seq.len() {
                for c in 18..27 {
                    assert_eq!(seq.inputs[[i, h - 1, c]], 0.0);
                }
            }
            let mlp = embed(&data[0], h, &norm, SensorChannels::Full).unwrap();
            assert_eq!(mlp.targets, seq.targets);
            // same information as the reservoir vector
            for i in 0..seq.len() {
                for lag in 0..h {
                    for c in 0..18 {
                        assert_eq!(seq.inputs[[i, h - 1 - lag, c]], mlp.inputs[[i, lag * 18 + c]]);
                    }
                }
                for lag in 1..h {
                    for c in 0..9 {
                        assert_eq!(
                            seq.inputs[[i, h - 1 - lag, 18 + c]],
                            mlp.inputs[[i, 18 * h + (lag - 1) * 9 + c]]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn supervised_file_round_trip() {
        let data = logs(1, 30);
        let norm = Normalizer::fit(&data).unwrap();
        let set = embed(&data[0], 2, &norm, SensorChannels::Full).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train_h2.csv");
        let sidecar = write_supervised(&set, &path, "train", &norm, "abc").unwrap();
        assert_eq!(sidecar.input_dim, 45);
        let (back, side) = read_supervised(&path).unwrap();
        assert_eq!(back, set);
        assert_eq!(side, sidecar);
    }
}
