//! Analytical baseline: ideal coupling kinematics integrated from a
//! marker-derived initial pose, with no learning and no filtering.

use std::f64::consts::PI;

use crate::dataset::SessionLog;
use crate::kinematics::{
    forward_kinematics, joints_from_markers, motor_to_joint, ArmGeometry, JointAngles, MarkerSet,
    MotorVelocities,
};
use crate::{Error, Result, JOINTS};

fn wrap_angle(a: f64) -> f64 {
    let wrapped = (a + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped == -PI {
        PI
    } else {
        wrapped
    }
}

/// Predict the markers of every step of `log`.
///
/// The initial joint angles come from the first logged marker set; after
/// that only motor angle displacements are used, mapped to joint
/// displacements through the inverse coupling.
pub fn analytical_estimate(log: &SessionLog, g: &ArmGeometry) -> Result<Vec<MarkerSet>> {
    if log.is_empty() {
        return Err(Error::InsufficientData("analytical baseline needs at least one step".into()));
    }
    let initial = joints_from_markers(&MarkerSet::from_flat(&log.markers[0])?, g)?;
    let motor0: [f64; JOINTS] = std::array::from_fn(|j| log.sensors[0][j]);
    log.sensors
        .iter()
        .map(|s| {
            let displacement = MotorVelocities(std::array::from_fn(|j| s[j] - motor0[j]));
            let dq = motor_to_joint(&displacement)?;
            let q = JointAngles(std::array::from_fn(|k| wrap_angle(initial.0[k] + dq.0[k])));
            forward_kinematics(&q, g)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{run_session, PlantConfig};

    fn mean_error(pred: &[MarkerSet], log: &SessionLog) -> f64 {
        let mut total = 0.0;
        for (p, y) in pred.iter().zip(&log.markers) {
            let truth = MarkerSet::from_flat(y).unwrap();
            total += (0..JOINTS).map(|k| (p.position(k) - truth.position(k)).norm()).sum::<f64>()
                / JOINTS as f64;
        }
        total / pred.len() as f64
    }

    #[test]
    fn exact_on_ideal_plant() {
        let cfg = PlantConfig::ideal();
        let log = run_session(&cfg, 9, 600, 5).unwrap().skip(100);
        let pred = analytical_estimate(&log, &cfg.geometry).unwrap();
        assert_eq!(pred.len(), log.len());
        for (p, y) in pred.iter().zip(&log.markers) {
            let truth = MarkerSet::from_flat(y).unwrap();
            for k in 0..JOINTS {
                assert!((p.position(k) - truth.position(k)).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn error_grows_with_compliance() {
        let mut errors = Vec::new();
        for scale in [0.0, 0.5, 1.0] {
            let mut cfg = PlantConfig::default();
            cfg.compliance = cfg.compliance.map(|c| c * scale);
            let log = run_session(&cfg, 22, 600, 5).unwrap().skip(100);
            let pred = analytical_estimate(&log, &cfg.geometry).unwrap();
            errors.push(mean_error(&pred, &log));
        }
        assert!(errors[0] <= errors[1] && errors[1] <= errors[2], "{errors:?}");
    }

    #[test]
    fn wraps_angles() {
        assert!((wrap_angle(PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
        assert!((wrap_angle(0.3) - 0.3).abs() < 1e-15);
        assert_eq!(wrap_angle(-PI), PI);
    }

    #[test]
    fn empty_log_rejected() {
        assert!(analytical_estimate(&SessionLog::default(), &ArmGeometry::default()).is_err());
    }
}
