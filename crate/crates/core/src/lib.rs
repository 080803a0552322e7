//! Cable-driven serpentine arm simulator and reservoir-based pose estimation.
//!
//! The crate is split along the data path:
//!
//! ```text
//! kinematics -> plant (simulated arm, session runner) -> dataset (splits, normalization,
//! delay embedding) -> estimators (MLP / linear / LSTM readouts, analytical baseline)
//! -> evaluation (marker error, method comparison, window-length sweep)
//! ```

pub mod dataset;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod hashing;
pub mod kinematics;
pub mod plant;

pub use error::{Error, Result};

/// Number of arm joints (and arm motors; the gripper is not modelled).
pub const JOINTS: usize = 9;
