//! Simulated arm used as the physical reservoir.
//!
//! The motors are velocity driven. Three flexibility effects separate the
//! true joint angles from the ideal kinematics:
//!
//! * cable slack: a play (backlash) operator between the motor-implied joint
//!   command and the joint,
//! * cable elongation: a deflection proportional to the gravity torque about
//!   each joint,
//! * link deformation: an Ornstein-Uhlenbeck disturbance per joint.
//!
//! Sensors report quantized motor angles and a load proxy derived from the
//! gravity torques the cables have to hold.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::dataset::{SessionLog, SessionManifest, SENSOR_DIM};
use crate::hashing::json_hash;
use crate::kinematics::{
    chain_pose, joint_angles_from_motor_angles, joint_to_motor, ArmGeometry, ChainPose,
    JointAngles, JointVelocities, MarkerSet,
};
use crate::{Error, Result, JOINTS};

/// Standard gravity, m/s^2.
const GRAVITY: f64 = 9.81;

/// Sag of every joint, rad, when the straight arm lies perpendicular to
/// gravity under the default compliance. Picked with
/// `examples/tune_compliance.rs` as the largest value that keeps true joints
/// within 5 degrees of the target envelope.
pub const DEFAULT_HORIZONTAL_SAG: f64 = 6.0 * std::f64::consts::PI / 180.0;

/// Angles are radians in memory and degrees in config files.
mod degrees {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(rad: &f64, s: S) -> Result<S::Ok, S::Error> {
        rad.to_degrees().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        f64::deserialize(d).map(f64::to_radians)
    }

    pub mod array {
        use super::*;
        use crate::JOINTS;

        pub fn serialize<S: Serializer>(rad: &[f64; JOINTS], s: S) -> Result<S::Ok, S::Error> {
            rad.map(f64::to_degrees).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; JOINTS], D::Error> {
            <[f64; JOINTS]>::deserialize(d).map(|a| a.map(f64::to_radians))
        }
    }

    pub mod ranges {
        use super::*;
        use crate::JOINTS;

        pub fn serialize<S: Serializer>(
            rad: &[(f64, f64); JOINTS],
            s: S,
        ) -> Result<S::Ok, S::Error> {
            rad.map(|(lo, hi)| (lo.to_degrees(), hi.to_degrees())).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> Result<[(f64, f64); JOINTS], D::Error> {
            <[(f64, f64); JOINTS]>::deserialize(d)
                .map(|a| a.map(|(lo, hi)| (lo.to_radians(), hi.to_radians())))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeformationNoise {
    #[serde(rename = "sigma_deg", with = "degrees")]
    pub sigma: f64,
    /// Correlation time, s.
    pub correlation_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub geometry: ArmGeometry,
    #[serde(rename = "backlash_width_deg", with = "degrees::array")]
    pub backlash_width: [f64; JOINTS],
    /// Deflection per unit gravity torque, stored in rad/(N*mm).
    #[serde(rename = "compliance_deg_per_nmm", with = "degrees::array")]
    pub compliance: [f64; JOINTS],
    pub deformation: DeformationNoise,
    pub load_noise_sigma: f64,
    /// Link masses, g.
    pub link_masses: [f64; JOINTS],
    /// Unit vector of gravity in the base frame.
    pub gravity_axis: [f64; 3],
    #[serde(rename = "quantization_step_deg", with = "degrees")]
    pub quantization_step: f64,
    /// Control period, s.
    pub dt: f64,
    /// Proportional gain, 1/s.
    pub p_gain: f64,
    #[serde(rename = "max_motor_speed_deg_s", with = "degrees")]
    pub max_motor_speed: f64,
    /// Open interval each random joint target is drawn from.
    #[serde(rename = "target_ranges_deg", with = "degrees::ranges")]
    pub target_ranges: [(f64, f64); JOINTS],
}

impl Default for PlantConfig {
    fn default() -> Self {
        let mut target_ranges = [(0.0, 0.0); JOINTS];
        for (k, range) in target_ranges.iter_mut().enumerate() {
            *range = if k % 2 == 0 {
                (-22.5f64.to_radians(), 22.5f64.to_radians())
            } else {
                (0.0, 22.5f64.to_radians())
            };
        }
        let mut cfg = Self {
            geometry: ArmGeometry::default(),
            backlash_width: [0.01; JOINTS],
            compliance: [0.0; JOINTS],
            deformation: DeformationNoise {
                sigma: 0.05f64.to_radians(),
                correlation_time: 2.0,
            },
            load_noise_sigma: 0.02,
            link_masses: [30.0; JOINTS],
            gravity_axis: [1.0, 0.0, 0.0],
            quantization_step: 0.088f64.to_radians(),
            dt: 0.25,
            p_gain: 1.0,
            max_motor_speed: 6.0,
            target_ranges,
        };
        cfg.compliance = compliance_for_sag(&cfg, DEFAULT_HORIZONTAL_SAG);
        cfg
    }
}

impl PlantConfig {
    /// All flexibility effects, sensor noise and quantization switched off.
    pub fn ideal() -> Self {
        Self {
            backlash_width: [0.0; JOINTS],
            compliance: [0.0; JOINTS],
            deformation: DeformationNoise {
                sigma: 0.0,
                correlation_time: 1.0,
            },
            load_noise_sigma: 0.0,
            quantization_step: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let nonneg = |name: &str, values: &[f64]| {
            if values.iter().all(|v| v.is_finite() && *v >= 0.0) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be finite and >= 0")))
            }
        };
        nonneg("backlash_width", &self.backlash_width)?;
        nonneg("compliance", &self.compliance)?;
        nonneg("link_masses", &self.link_masses)?;
        nonneg(
            "scalars",
            &[
                self.deformation.sigma,
                self.load_noise_sigma,
                self.quantization_step,
                self.p_gain,
                self.max_motor_speed,
            ],
        )?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig("dt must be positive".into()));
        }
        if !(self.deformation.correlation_time > 0.0) {
            return Err(Error::InvalidConfig(
                "deformation correlation time must be positive".into(),
            ));
        }
        let g = Vector3::from(self.gravity_axis);
        if (g.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig("gravity axis must be a unit vector".into()));
        }
        if self
            .target_ranges
            .iter()
            .any(|&(lo, hi)| !(lo < hi && lo >= -PI && hi <= PI))
        {
            return Err(Error::InvalidConfig("target ranges must be ordered, within [-pi, pi]".into()));
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.link_masses.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// Cumulative motor pulley angles, rad.
    pub motor_angles: [f64; JOINTS],
    pub joint_angles_true: [f64; JOINTS],
    /// Play-operator output per joint (the slack memory).
    pub hysteresis_centers: [f64; JOINTS],
    pub deformation_state: [f64; JOINTS],
    pub time: f64,
}

impl PlantState {
    /// Arm at the zero pose with slack centred, sagging under gravity.
    pub fn initial(cfg: &PlantConfig) -> Self {
        let hysteresis_centers = [0.0; JOINTS];
        let deflection = compliance_deflection(&hysteresis_centers, cfg);
        let mut joint_angles_true = [0.0; JOINTS];
        for k in 0..JOINTS {
            joint_angles_true[k] = (hysteresis_centers[k] + deflection[k]).clamp(-PI, PI);
        }
        Self {
            motor_angles: [0.0; JOINTS],
            joint_angles_true,
            hysteresis_centers,
            deformation_state: [0.0; JOINTS],
            time: 0.0,
        }
    }

    pub fn true_joints(&self) -> JointAngles {
        JointAngles(self.joint_angles_true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSample {
    pub motor_angles: [f64; JOINTS],
    pub motor_loads: [f64; JOINTS],
}

impl SensorSample {
    pub fn to_vec(&self) -> [f64; SENSOR_DIM] {
        let mut out = [0.0; SENSOR_DIM];
        out[..JOINTS].copy_from_slice(&self.motor_angles);
        out[JOINTS..].copy_from_slice(&self.motor_loads);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandSample {
    pub target_motor_velocities: [f64; JOINTS],
}

impl CommandSample {
    pub fn zero() -> Self {
        Self {
            target_motor_velocities: [0.0; JOINTS],
        }
    }
}

/// Play operator: the output stays put while the input moves inside a band of
/// `width` centred on it, and is dragged along once the input leaves the band.
pub fn play(previous_output: f64, input: f64, width: f64) -> f64 {
    let half = 0.5 * width;
    if input - previous_output > half {
        input - half
    } else if previous_output - input > half {
        input + half
    } else {
        previous_output
    }
}

/// Gravity torque about every joint axis, N*mm, for the given pose.
pub fn gravity_torques(pose: &ChainPose, cfg: &PlantConfig) -> [f64; JOINTS] {
    let g = &cfg.geometry;
    let gravity = Vector3::from(cfg.gravity_axis) * GRAVITY;
    let centers: Vec<Vector3<f64>> = (0..JOINTS)
        .map(|k| {
            pose.joint_origins[k]
                + pose.link_rotations[k] * Vector3::new(0.0, 0.5 * g.link_lengths[k], 0.0)
        })
        .collect();
    let mut torques = [0.0; JOINTS];
    for i in 0..JOINTS {
        let origin = pose.joint_origins[i];
        let moment: Vector3<f64> = (i..JOINTS)
            .map(|k| (centers[k] - origin).cross(&(gravity * cfg.link_masses[k] * 1e-3)))
            .sum();
        torques[i] = moment.dot(&pose.joint_axes_world[i]);
    }
    torques
}

/// Magnitude of the gravity torque about each joint when the whole arm is
/// straight and perpendicular to gravity, N*mm. The largest torque any joint
/// sees in a pose with all links level.
pub fn horizontal_torques(cfg: &PlantConfig) -> [f64; JOINTS] {
    let lengths = &cfg.geometry.link_lengths;
    std::array::from_fn(|j| {
        let mut reach = 0.0;
        let mut torque = 0.0;
        for k in j..JOINTS {
            torque += cfg.link_masses[k] * 1e-3 * GRAVITY * (reach + 0.5 * lengths[k]);
            reach += lengths[k];
        }
        torque
    })
}

/// Per-joint gains giving the same horizontal sag `sag` (rad) at every joint.
pub fn compliance_for_sag(cfg: &PlantConfig, sag: f64) -> [f64; JOINTS] {
    horizontal_torques(cfg).map(|t| if t > 0.0 { sag / t } else { 0.0 })
}

fn compliance_deflection(joints: &[f64; JOINTS], cfg: &PlantConfig) -> [f64; JOINTS] {
    if cfg.compliance.iter().all(|&c| c == 0.0) {
        return [0.0; JOINTS];
    }
    let pose = chain_pose(&JointAngles(*joints), &cfg.geometry);
    let torques = gravity_torques(&pose, cfg);
    let mut out = [0.0; JOINTS];
    for k in 0..JOINTS {
        out[k] = cfg.compliance[k] * torques[k];
    }
    out
}

/// Noise-free load proxy: the torque of all joints the motor's cable spans
/// out to the tip, divided by the motor pulley radius.
pub fn load_proxy(pose: &ChainPose, cfg: &PlantConfig) -> [f64; JOINTS] {
    let torques = gravity_torques(pose, cfg);
    let mut loads = [0.0; JOINTS];
    let mut distal = 0.0;
    for j in (0..JOINTS).rev() {
        distal += torques[j];
        loads[j] = distal.abs() / cfg.geometry.pulley_radii[j];
    }
    loads
}

/// Load reading for every motor: [`load_proxy`] plus Gaussian sensor noise.
pub fn load_model<R: Rng + ?Sized>(
    state: &PlantState,
    cfg: &PlantConfig,
    rng: &mut R,
) -> [f64; JOINTS] {
    let pose = chain_pose(&state.true_joints(), &cfg.geometry);
    noisy_loads(&pose, cfg, rng)
}

fn noisy_loads<R: Rng + ?Sized>(pose: &ChainPose, cfg: &PlantConfig, rng: &mut R) -> [f64; JOINTS] {
    let mut loads = load_proxy(pose, cfg);
    for load in loads.iter_mut() {
        let n: f64 = rng.sample(StandardNormal);
        *load += cfg.load_noise_sigma * n;
    }
    loads
}

fn quantize(angle: f64, step: f64) -> f64 {
    if step > 0.0 {
        (angle / step).round() * step
    } else {
        angle
    }
}

/// Sensor reading and marker ground truth for a state.
pub fn observe<R: Rng + ?Sized>(
    state: &PlantState,
    cfg: &PlantConfig,
    rng: &mut R,
) -> (SensorSample, MarkerSet) {
    let pose = chain_pose(&state.true_joints(), &cfg.geometry);
    let motor_loads = noisy_loads(&pose, cfg, rng);
    let motor_angles = state.motor_angles.map(|a| quantize(a, cfg.quantization_step));
    (
        SensorSample {
            motor_angles,
            motor_loads,
        },
        pose.markers,
    )
}

/// Advance the arm by one control period under a motor velocity command.
pub fn step<R: Rng + ?Sized>(
    state: &PlantState,
    cmd: &CommandSample,
    cfg: &PlantConfig,
    rng: &mut R,
) -> Result<(PlantState, SensorSample, MarkerSet)> {
    if cmd.target_motor_velocities.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("motor command"));
    }
    let mut next = state.clone();
    for (angle, v) in next.motor_angles.iter_mut().zip(cmd.target_motor_velocities) {
        *angle += v * cfg.dt;
    }
    let commanded = joint_angles_from_motor_angles(&next.motor_angles);
    for k in 0..JOINTS {
        next.hysteresis_centers[k] =
            play(state.hysteresis_centers[k], commanded.0[k], cfg.backlash_width[k]);
    }
    let deflection = compliance_deflection(&next.hysteresis_centers, cfg);

    let decay = (-cfg.dt / cfg.deformation.correlation_time).exp();
    let drive = cfg.deformation.sigma * (1.0 - decay * decay).sqrt();
    for d in next.deformation_state.iter_mut() {
        let n: f64 = rng.sample(StandardNormal);
        *d = *d * decay + drive * n;
    }

    for k in 0..JOINTS {
        next.joint_angles_true[k] =
            (next.hysteresis_centers[k] + deflection[k] + next.deformation_state[k]).clamp(-PI, PI);
    }
    next.time = state.time + cfg.dt;
    let (sample, markers) = observe(&next, cfg, rng);
    Ok((next, sample, markers))
}

/// Joint-space P control mapped to motor velocities through the coupling.
/// If any motor would exceed the speed limit the whole command is scaled down,
/// keeping the joint-space direction.
pub fn p_controller(current: &JointAngles, target: &JointAngles, cfg: &PlantConfig) -> CommandSample {
    let mut jv = [0.0; JOINTS];
    for k in 0..JOINTS {
        jv[k] = cfg.p_gain * (target.0[k] - current.0[k]);
    }
    let mut motor = joint_to_motor(&JointVelocities(jv))
        .map(|m| m.0)
        .unwrap_or([0.0; JOINTS]);
    let peak = motor.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > cfg.max_motor_speed {
        let scale = cfg.max_motor_speed / peak;
        for v in motor.iter_mut() {
            *v *= scale;
        }
    }
    CommandSample {
        target_motor_velocities: motor,
    }
}

pub fn draw_targets<R: Rng + ?Sized>(cfg: &PlantConfig, rng: &mut R) -> JointAngles {
    let mut q = [0.0; JOINTS];
    for (k, &(lo, hi)) in cfg.target_ranges.iter().enumerate() {
        q[k] = rng.random_range(lo..hi);
    }
    JointAngles(q)
}

/// One random-motion data collection session.
///
/// Row `t` of the log holds the sensors and markers observed at step `t` and
/// the command computed from them, which takes effect at step `t + 1`. The
/// controller only sees joint angles implied by the measured motor angles.
pub fn run_session(
    cfg: &PlantConfig,
    session_seed: u64,
    steps: usize,
    target_refresh: usize,
) -> Result<SessionLog> {
    cfg.validate()?;
    if target_refresh == 0 || steps < target_refresh {
        return Err(Error::InvalidConfig(format!(
            "steps ({steps}) must be >= target refresh ({target_refresh}) > 0"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(session_seed);
    let mut state = PlantState::initial(cfg);
    let (mut sensors, mut markers) = observe(&state, cfg, &mut rng);
    let mut targets = JointAngles::zeros();
    let mut log = SessionLog::with_capacity(steps);
    for t in 0..steps {
        if t % target_refresh == 0 {
            targets = draw_targets(cfg, &mut rng);
        }
        let estimate = joint_angles_from_motor_angles(&sensors.motor_angles);
        let cmd = p_controller(&estimate, &targets, cfg);
        log.push(state.time, sensors.to_vec(), cmd.target_motor_velocities, markers.to_flat());
        let (next, s, m) = step(&state, &cmd, cfg, &mut rng)?;
        state = next;
        sensors = s;
        markers = m;
    }
    log.manifest = SessionManifest {
        session: 0,
        seed: session_seed,
        config_hash: json_hash(cfg),
        steps,
        first_step: 0,
        content_hash: String::new(),
    };
    log.refresh_content_hash();
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{forward_kinematics, ARM_LENGTH_MM};
    use proptest::prelude::*;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn zero_command_is_fixed_point_without_perturbations() {
        let cfg = PlantConfig::ideal();
        let mut state = PlantState::initial(&cfg);
        state.motor_angles = [0.1, 0.2, 0.1, 0.0, -0.1, 0.05, 0.1, 0.2, 0.3];
        let q = joint_angles_from_motor_angles(&state.motor_angles).0;
        state.joint_angles_true = q;
        state.hysteresis_centers = q;
        let (next, _, markers) = step(&state, &CommandSample::zero(), &cfg, &mut rng()).unwrap();
        assert_eq!(next.motor_angles, state.motor_angles);
        assert_eq!(next.joint_angles_true, state.joint_angles_true);
        assert_eq!(markers, forward_kinematics(&JointAngles(q), &cfg.geometry).unwrap());
    }

    #[test]
    fn ideal_plant_follows_motor_differences() {
        let cfg = PlantConfig::ideal();
        let mut state = PlantState::initial(&cfg);
        let mut r = rng();
        for t in 0..50 {
            let mut v = [0.0; JOINTS];
            for (k, x) in v.iter_mut().enumerate() {
                *x = ((t * 7 + k * 3) as f64).sin() * 0.4;
            }
            let cmd = CommandSample {
                target_motor_velocities: v,
            };
            state = step(&state, &cmd, &cfg, &mut r).unwrap().0;
            let ideal = joint_angles_from_motor_angles(&state.motor_angles);
            assert_eq!(state.joint_angles_true, ideal.0);
        }
    }

    #[test]
    fn backlash_ramp_example() {
        let mut cfg = PlantConfig::ideal();
        cfg.backlash_width[0] = 0.2;
        let mut state = PlantState::initial(&cfg);
        let mut r = rng();
        // ramp joint-1 command 0 -> 0.05 rad: motor 1 moves, all motors move to keep
        // the other joints at zero
        let ramp = |state: &PlantState, to: f64, r: &mut ChaCha8Rng| {
            let delta = to - state.motor_angles[0];
            let cmd = CommandSample {
                target_motor_velocities: [delta / cfg.dt; JOINTS],
            };
            step(state, &cmd, &cfg, r).unwrap().0
        };
        for to in [0.01, 0.02, 0.03, 0.04, 0.05] {
            state = ramp(&state, to, &mut r);
        }
        assert_eq!(state.joint_angles_true[0], 0.0);
        for to in [0.1, 0.15, 0.2] {
            state = ramp(&state, to, &mut r);
        }
        assert!((state.joint_angles_true[0] - 0.1).abs() < 1e-12);
        assert!(state.joint_angles_true[1..].iter().all(|&q| q.abs() < 1e-12));
    }

    #[test]
    fn non_finite_command_rejected() {
        let cfg = PlantConfig::default();
        let mut cmd = CommandSample::zero();
        cmd.target_motor_velocities[2] = f64::INFINITY;
        assert!(step(&PlantState::initial(&cfg), &cmd, &cfg, &mut rng()).is_err());
    }

    #[test]
    fn play_operator_definition() {
        assert_eq!(play(0.0, 0.05, 0.2), 0.0);
        assert!((play(0.0, 0.2, 0.2) - 0.1).abs() < 1e-15);
        assert!((play(0.1, -0.3, 0.2) + 0.2).abs() < 1e-15);
        assert_eq!(play(0.3, 0.7, 0.0), 0.7);
    }

    fn noise_free(cfg: &PlantConfig) -> PlantConfig {
        PlantConfig {
            load_noise_sigma: 0.0,
            ..cfg.clone()
        }
    }

    #[test]
    fn loads_vanish_when_arm_hangs_along_gravity() {
        let cfg = noise_free(&PlantConfig::default());
        let mut q = [0.0; JOINTS];
        q[0] = -std::f64::consts::FRAC_PI_2;
        let pose = chain_pose(&JointAngles(q), &cfg.geometry);
        // arm along +X: every link centre is on the gravity line through the joints
        assert!(pose.joint_origins[JOINTS].x > ARM_LENGTH_MM - 1e-9);
        let loads = load_proxy(&pose, &cfg);
        assert!(loads.iter().all(|&l| l.abs() < 1e-9), "{loads:?}");
    }

    #[test]
    fn horizontal_zero_pose_loads_decrease_outward() {
        let cfg = noise_free(&PlantConfig::default());
        let pose = chain_pose(&JointAngles::zeros(), &cfg.geometry);
        let loads = load_proxy(&pose, &cfg);
        // Hand torque sum: uniform 30 g links of length 545/9 mm.
        // Odd joints (about Z) carry the distal moment; even joints (about X) carry none.
        let link = ARM_LENGTH_MM / 9.0;
        let weight = 0.030 * GRAVITY;
        let torque_about = |joint: usize| -> f64 {
            (joint..9).map(|k| weight * ((k - joint) as f64 + 0.5) * link).sum()
        };
        let mut expected = [0.0; 9];
        let mut distal = 0.0;
        for j in (0..9).rev() {
            if j % 2 == 0 {
                distal += torque_about(j);
            }
            expected[j] = distal / (20.0 - 2.0 * j as f64);
        }
        for j in 0..9 {
            assert!((loads[j] - expected[j]).abs() < 1e-9, "{j}: {} vs {}", loads[j], expected[j]);
        }
        assert!(loads[0] >= loads[8] && loads[8] > 0.0);
    }

    #[test]
    fn default_compliance_gives_uniform_horizontal_sag() {
        let cfg = PlantConfig::default();
        let link = ARM_LENGTH_MM / 9.0;
        let weight = 0.030 * GRAVITY;
        for j in 0..9 {
            let torque: f64 = (j..9).map(|k| weight * ((k - j) as f64 + 0.5) * link).sum();
            assert!((horizontal_torques(&cfg)[j] - torque).abs() < 1e-9);
            assert!((cfg.compliance[j] * torque - DEFAULT_HORIZONTAL_SAG).abs() < 1e-15);
        }
        // odd joints at the zero pose see exactly the horizontal torque
        let pose = chain_pose(&JointAngles::zeros(), &cfg.geometry);
        let tau = gravity_torques(&pose, &cfg);
        assert!((tau[0].abs() - horizontal_torques(&cfg)[0]).abs() < 1e-9);
    }

    #[test]
    fn loads_scale_with_mass() {
        let cfg = noise_free(&PlantConfig::default());
        let heavy = PlantConfig {
            link_masses: cfg.link_masses.map(|m| 2.0 * m),
            ..cfg.clone()
        };
        let q = JointAngles([0.2, 0.1, -0.3, 0.2, 0.1, 0.05, -0.2, 0.3, 0.1]);
        let pose = chain_pose(&q, &cfg.geometry);
        let a = load_proxy(&pose, &cfg);
        let b = load_proxy(&pose, &heavy);
        for j in 0..9 {
            assert!((b[j] - 2.0 * a[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn load_model_is_seeded() {
        let cfg = PlantConfig::default();
        let state = PlantState::initial(&cfg);
        let a = load_model(&state, &cfg, &mut ChaCha8Rng::seed_from_u64(3));
        let b = load_model(&state, &cfg, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    #[test]
    fn controller_examples() {
        let cfg = PlantConfig::default();
        let q = JointAngles([0.1; JOINTS]);
        assert_eq!(p_controller(&q, &q, &cfg).target_motor_velocities, [0.0; JOINTS]);

        let mut target = q;
        target.0[0] += 0.3;
        let cmd = p_controller(&q, &target, &cfg).target_motor_velocities;
        for v in cmd {
            assert!((v - 0.3 * cfg.p_gain).abs() < 1e-12);
        }

        let v = [0.1, -0.2, 0.05, 0.0, 0.1, 0.1, -0.1, 0.2, 0.0];
        let mut target = [0.0; JOINTS];
        target.copy_from_slice(&v);
        let cmd = p_controller(&JointAngles::zeros(), &JointAngles(target), &cfg);
        let expected = crate::kinematics::cumulative_sum(&v);
        for k in 0..JOINTS {
            assert!((cmd.target_motor_velocities[k] - expected[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn controller_respects_speed_limit() {
        let cfg = PlantConfig {
            max_motor_speed: 0.5,
            ..PlantConfig::default()
        };
        let cmd = p_controller(&JointAngles::zeros(), &JointAngles([0.3; JOINTS]), &cfg);
        let peak = cmd
            .target_motor_velocities
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 0.5).abs() < 1e-12);
    }

    #[test]
    fn session_length_and_determinism() {
        let cfg = PlantConfig::default();
        let a = run_session(&cfg, 5, 2100, 5).unwrap();
        assert_eq!(a.len(), 2100);
        let b = run_session(&cfg, 5, 2100, 5).unwrap();
        assert_eq!(a.manifest.content_hash, b.manifest.content_hash);
        assert_eq!(a.sensors, b.sensors);
        let c = run_session(&cfg, 6, 2100, 5).unwrap();
        assert_ne!(a.manifest.content_hash, c.manifest.content_hash);
    }

    #[test]
    fn session_rejects_bad_refresh() {
        let cfg = PlantConfig::default();
        assert!(run_session(&cfg, 1, 3, 5).is_err());
        assert!(run_session(&cfg, 1, 10, 0).is_err());
    }

    #[test]
    fn session_joints_stay_in_target_envelope() {
        let cfg = PlantConfig::default();
        let margin = 5f64.to_radians();
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut state = PlantState::initial(&cfg);
            let (mut sensors, _) = observe(&state, &cfg, &mut rng);
            let mut targets = JointAngles::zeros();
            for t in 0..2100 {
                if t % 5 == 0 {
                    targets = draw_targets(&cfg, &mut rng);
                }
                let estimate = joint_angles_from_motor_angles(&sensors.motor_angles);
                let cmd = p_controller(&estimate, &targets, &cfg);
                let (next, s, _) = step(&state, &cmd, &cfg, &mut rng).unwrap();
                state = next;
                sensors = s;
                for k in 0..JOINTS {
                    let (lo, hi) = cfg.target_ranges[k];
                    let q = state.joint_angles_true[k];
                    assert!(q > lo.min(0.0) - margin && q < hi + margin, "seed {seed} t {t} joint {k}: {q}");
                }
            }
        }
    }

    #[test]
    fn config_json_uses_degrees() {
        let cfg = PlantConfig::default();
        let json = serde_json::to_value(&cfg).unwrap();
        let width = json["backlash_width_deg"][0].as_f64().unwrap();
        assert!((width - 0.01f64.to_degrees()).abs() < 1e-12);
        let ranges = &json["target_ranges_deg"];
        assert!((ranges[0][1].as_f64().unwrap() - 22.5).abs() < 1e-12);
        let back: PlantConfig = serde_json::from_value(json).unwrap();
        for k in 0..JOINTS {
            assert!((back.backlash_width[k] - cfg.backlash_width[k]).abs() < 1e-15);
            assert!((back.compliance[k] - cfg.compliance[k]).abs() < 1e-18);
        }
        back.validate().unwrap();
    }

    #[test]
    fn config_validation() {
        let mut cfg = PlantConfig::default();
        cfg.dt = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = PlantConfig::default();
        cfg.backlash_width[2] = -0.1;
        assert!(cfg.validate().is_err());
        let mut cfg = PlantConfig::default();
        cfg.gravity_axis = [1.0, 1.0, 0.0];
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn play_is_lipschitz_and_sticky(
            width in 0.0f64..0.5,
            inputs in prop::collection::vec(-2.0f64..2.0, 1..40),
        ) {
            let mut out = 0.0;
            let mut prev_in = 0.0;
            for &x in &inputs {
                let next = play(out, x, width);
                prop_assert!((next - out).abs() <= (x - prev_in).abs() + 1e-12);
                if (x - out).abs() <= 0.5 * width {
                    prop_assert_eq!(next, out);
                }
                prop_assert!((x - next).abs() <= 0.5 * width + 1e-12);
                out = next;
                prev_in = x;
            }
        }

        #[test]
        fn small_reversal_keeps_joints(rise in 0.05f64..0.5, back in 0.0f64..1.0) {
            let mut cfg = PlantConfig::ideal();
            cfg.backlash_width = [0.1; JOINTS];
            let mut state = PlantState::initial(&cfg);
            let mut r = ChaCha8Rng::seed_from_u64(0);
            let drive = |state: &PlantState, v: f64, r: &mut ChaCha8Rng| {
                let cmd = CommandSample { target_motor_velocities: [v; JOINTS] };
                step(state, &cmd, &cfg, r).unwrap().0
            };
            state = drive(&state, rise / cfg.dt, &mut r);
            let held = state.joint_angles_true;
            // reverse by less than the play width
            state = drive(&state, -back * 0.1 / cfg.dt, &mut r);
            prop_assert_eq!(state.joint_angles_true, held);
        }
    }
}
