//! Session logs to supervised tensors: session splits, per-channel
//! normalization and the delay-embedded reservoir vectors.

mod embed;
mod log;
mod normalize;

pub use embed::{
    embed, embed_sessions, lstm_sequences, lstm_sequences_sessions, read_supervised,
    write_supervised, SensorChannels, SequenceSet, SupervisedSet, SupervisedSidecar,
};
pub use log::{column_names, SessionLog, SessionManifest};
pub use normalize::Normalizer;

use crate::{Error, Result, JOINTS};

pub const SENSOR_DIM: usize = 2 * JOINTS;
pub const COMMAND_DIM: usize = JOINTS;
pub const MARKER_DIM: usize = 3 * JOINTS;
/// Sensor, command and marker channels of one logged step.
pub const CHANNELS: usize = SENSOR_DIM + COMMAND_DIM + MARKER_DIM;

/// Steps dropped from the start of every session to skip the transient.
pub const DEFAULT_BURNIN: usize = 100;

/// Sessions assigned to each split, in session order.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<SessionLog>,
    pub val: Vec<SessionLog>,
    pub test: Vec<SessionLog>,
}

/// Session counts for a 20/2/1 train/validation/test split scaled to `n`
/// sessions, with at least one session in each part.
pub fn split_counts(n: usize) -> Result<(usize, usize, usize)> {
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 sessions to split, got {n}"
        )));
    }
    let test = ((n as f64 / 23.0).round() as usize).max(1);
    let val = ((2.0 * n as f64 / 23.0).round() as usize).max(1);
    let train = n - test - val;
    Ok((train, val, test))
}

/// Split sessions by index (first sessions train, then validation, last
/// test) after dropping `burnin` steps from each.
pub fn split_sessions(logs: &[SessionLog], burnin: usize) -> Result<Splits> {
    let (train, val, _) = split_counts(logs.len())?;
    let trimmed = logs
        .iter()
        .map(|log| {
            if burnin >= log.len() {
                Err(Error::InsufficientData(format!(
                    "burn-in of {burnin} steps leaves nothing of session {} ({} steps)",
                    log.manifest.session,
                    log.len()
                )))
            } else {
                Ok(log.skip(burnin))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rest = trimmed.into_iter();
    Ok(Splits {
        train: rest.by_ref().take(train).collect(),
        val: rest.by_ref().take(val).collect(),
        test: rest.collect(),
    })
}
