//! Motor/joint coupling algebra and forward/inverse kinematics of the arm.
//!
//! Every cable `j` is fixed at link `j` and wraps equal-radius pulleys on all
//! joints it crosses, so a joint rotation shifts every cable passing through
//! it. In velocity space this gives the lower-triangular ones coupling
//! `motor = A * joint`, whose inverse is the first-difference operator.
//!
//! Frames: the zero pose extends along base +Y. Odd joints (1, 3, ...) rotate
//! about their local Z axis, even joints about local X. Links are chained
//! tip-to-tail along local +Y.

use nalgebra::{DMatrix, Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::{Error, Result, JOINTS};

/// Total arm length from the first joint axis to the tip, mm.
pub const ARM_LENGTH_MM: f64 = 545.0;

/// Default marker offset from each link's distal end, along local +Z, mm.
pub const DEFAULT_MARKER_OFFSET_MM: f64 = 10.0;

/// Lower-triangular ones matrix relating joint velocities to motor velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    entries: DMatrix<f64>,
}

impl CouplingMatrix {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension(
                "coupling matrix needs at least one joint".into(),
            ));
        }
        let entries = DMatrix::from_fn(n, n, |i, j| if j <= i { 1.0 } else { 0.0 });
        Ok(Self { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Exact inverse: ones on the diagonal, minus ones on the first subdiagonal.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0
            } else if i == j + 1 {
                -1.0
            } else {
                0.0
            }
        })
    }

    /// `A * v` as a running sum.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v.len())?;
        Ok(cumulative_sum(v))
    }

    /// `A^-1 * v` as first differences.
    pub fn solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v.len())?;
        Ok(adjacent_differences(v))
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::Shape {
                expected: format!("length {}", self.dim()),
                got: format!("length {len}"),
            });
        }
        Ok(())
    }
}

/// Convenience constructor mirroring [`CouplingMatrix::new`].
pub fn coupling_matrix(n: usize) -> Result<CouplingMatrix> {
    CouplingMatrix::new(n)
}

pub fn cumulative_sum(v: &[f64]) -> Vec<f64> {
    v.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

pub fn adjacent_differences(v: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    v.iter()
        .map(|&x| {
            let d = x - prev;
            prev = x;
            d
        })
        .collect()
}

macro_rules! joint_vector {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
        pub struct $name(pub [f64; JOINTS]);

        impl $name {
            pub fn zeros() -> Self {
                Self([0.0; JOINTS])
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }

            fn from_slice(v: &[f64]) -> Self {
                let mut out = [0.0; JOINTS];
                out.copy_from_slice(v);
                Self(out)
            }
        }
    };
}

joint_vector!(
    /// Joint angular velocities, rad/s, joints 1..9.
    JointVelocities
);
joint_vector!(
    /// Motor pulley angular velocities, rad/s, motors 1..9.
    MotorVelocities
);
joint_vector!(
    /// Joint angles, rad.
    JointAngles
);

impl JointAngles {
    pub fn check_range(&self) -> Result<()> {
        for (joint, &angle) in self.0.iter().enumerate() {
            if !angle.is_finite() {
                return Err(Error::NonFinite("joint angles"));
            }
            if angle.abs() > PI {
                return Err(Error::OutOfRange {
                    joint: joint + 1,
                    angle,
                });
            }
        }
        Ok(())
    }
}

/// Motor velocity needed to realise a joint velocity: running sum over joints.
pub fn joint_to_motor(jv: &JointVelocities) -> Result<MotorVelocities> {
    if !jv.is_finite() {
        return Err(Error::NonFinite("joint velocities"));
    }
    Ok(MotorVelocities::from_slice(&cumulative_sum(&jv.0)))
}

/// Joint velocity implied by motor velocities: `joint_j = motor_j - motor_{j-1}`.
pub fn motor_to_joint(mv: &MotorVelocities) -> Result<JointVelocities> {
    if !mv.is_finite() {
        return Err(Error::NonFinite("motor velocities"));
    }
    Ok(JointVelocities::from_slice(&adjacent_differences(&mv.0)))
}

/// Angle-level version of [`motor_to_joint`]: with all angles zero at the
/// reference pose, cumulative motor angles map to joint angles by the same
/// differences.
pub fn joint_angles_from_motor_angles(motor_angles: &[f64; JOINTS]) -> JointAngles {
    JointAngles::from_slice(&adjacent_differences(motor_angles))
}

/// Rotational velocity of every pulley on every cable for equal-radius
/// routing. Entry `[j][i]` is the velocity of the pulley at the end of link
/// `i` driven by cable `j + 1` (`i = 0` is the motor pulley), for `i <= j + 1`.
///
/// Closed form: the pulley on link `i` turns at the motor velocity minus the
/// rotation of all links before it.
pub fn pulley_velocities(motor: &MotorVelocities, joints: &JointVelocities) -> Vec<Vec<f64>> {
    (0..JOINTS)
        .map(|j| {
            (0..=j + 1)
                .map(|i| motor.0[j] - joints.0[..i.saturating_sub(1)].iter().sum::<f64>())
                .collect()
        })
        .collect()
}

/// Cable velocity through the pulley at the end of link `i`, expressed from
/// the upstream pulley: `r_{i-1} * (dtheta_{i-1,j} - dtheta_{i-1,i-1})`.
pub fn cable_velocity_upstream(radius_upstream: f64, upstream_pulley: f64, upstream_link: f64) -> f64 {
    radius_upstream * (upstream_pulley - upstream_link)
}

/// Cable velocity expressed from the pulley itself: `r_i * dtheta_{i,j}`.
pub fn cable_velocity_local(radius: f64, pulley: f64) -> f64 {
    radius * pulley
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointAxis {
    X,
    Y,
    Z,
}

impl JointAxis {
    pub fn unit(self) -> Unit<Vector3<f64>> {
        match self {
            JointAxis::X => Vector3::x_axis(),
            JointAxis::Y => Vector3::y_axis(),
            JointAxis::Z => Vector3::z_axis(),
        }
    }
}

/// Link lengths, hinge axes, marker placement and pulley radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmGeometry {
    pub link_lengths: [f64; JOINTS],
    pub joint_axes: [JointAxis; JOINTS],
    pub marker_offsets: [[f64; 3]; JOINTS],
    pub pulley_radii: [f64; JOINTS],
}

impl Default for ArmGeometry {
    fn default() -> Self {
        let mut joint_axes = [JointAxis::Z; JOINTS];
        for (k, axis) in joint_axes.iter_mut().enumerate() {
            // joint k+1: odd about Z, even about X
            if k % 2 == 1 {
                *axis = JointAxis::X;
            }
        }
        let mut pulley_radii = [0.0; JOINTS];
        for (j, r) in pulley_radii.iter_mut().enumerate() {
            *r = 20.0 - 2.0 * j as f64;
        }
        Self {
            link_lengths: [ARM_LENGTH_MM / JOINTS as f64; JOINTS],
            joint_axes,
            marker_offsets: [[0.0, 0.0, DEFAULT_MARKER_OFFSET_MM]; JOINTS],
            pulley_radii,
        }
    }
}

impl ArmGeometry {
    pub fn with_marker_offsets(mut self, offsets: [[f64; 3]; JOINTS]) -> Self {
        self.marker_offsets = offsets;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.link_lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidConfig("link lengths must be positive".into()));
        }
        let total: f64 = self.link_lengths.iter().sum();
        if (total - ARM_LENGTH_MM).abs() > 1e-6 {
            return Err(Error::InvalidConfig(format!(
                "link lengths sum to {total} mm, expected {ARM_LENGTH_MM} mm"
            )));
        }
        for pair in self.joint_axes.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::InvalidConfig(
                    "consecutive joint axes must be perpendicular".into(),
                ));
            }
        }
        for pair in self.pulley_radii.windows(2) {
            if ((pair[0] - pair[1]) - 2.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(
                    "pulley radii must decrease by 2 mm per motor".into(),
                ));
            }
        }
        if self.pulley_radii[JOINTS - 1] <= 0.0 {
            return Err(Error::InvalidConfig("pulley radii must be positive".into()));
        }
        if self.marker_offsets.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("marker offsets"));
        }
        Ok(())
    }

    pub fn max_marker_offset(&self) -> f64 {
        self.marker_offsets
            .iter()
            .map(|o| Vector3::from(*o).norm())
            .fold(0.0, f64::max)
    }

    fn link_vector(&self, k: usize) -> Vector3<f64> {
        Vector3::new(0.0, self.link_lengths[k], 0.0)
    }

    fn marker_vector(&self, k: usize) -> Vector3<f64> {
        self.link_vector(k) + Vector3::from(self.marker_offsets[k])
    }
}

/// One 3D marker per link, mm, base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerSet {
    pub positions: [[f64; 3]; JOINTS],
}

impl MarkerSet {
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() != 3 * JOINTS {
            return Err(Error::Shape {
                expected: format!("{} marker coordinates", 3 * JOINTS),
                got: flat.len().to_string(),
            });
        }
        let mut positions = [[0.0; 3]; JOINTS];
        for (k, p) in positions.iter_mut().enumerate() {
            p.copy_from_slice(&flat[3 * k..3 * k + 3]);
        }
        Ok(Self { positions })
    }

    pub fn to_flat(&self) -> [f64; 3 * JOINTS] {
        let mut out = [0.0; 3 * JOINTS];
        for (k, p) in self.positions.iter().enumerate() {
            out[3 * k..3 * k + 3].copy_from_slice(p);
        }
        out
    }

    pub fn position(&self, k: usize) -> Vector3<f64> {
        Vector3::from(self.positions[k])
    }
}

/// Full kinematic state of the chain for one pose.
#[derive(Debug, Clone)]
pub struct ChainPose {
    /// Origin of joint `k` (0-based) in the base frame; entry `JOINTS` is the tip.
    pub joint_origins: [Vector3<f64>; JOINTS + 1],
    /// Orientation of link `k` (after its joint rotation).
    pub link_rotations: [Matrix3<f64>; JOINTS],
    /// Rotation axis of joint `k` in the base frame.
    pub joint_axes_world: [Vector3<f64>; JOINTS],
    pub markers: MarkerSet,
}

fn hinge(axis: JointAxis, angle: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&axis.unit(), angle).into_inner()
}

/// Compose the hinge chain without range checks.
pub fn chain_pose(q: &JointAngles, g: &ArmGeometry) -> ChainPose {
    let mut rotation = Matrix3::identity();
    let mut origin = Vector3::zeros();
    let mut joint_origins = [Vector3::zeros(); JOINTS + 1];
    let mut link_rotations = [Matrix3::identity(); JOINTS];
    let mut joint_axes_world = [Vector3::zeros(); JOINTS];
    let mut positions = [[0.0; 3]; JOINTS];
    for k in 0..JOINTS {
        joint_origins[k] = origin;
        joint_axes_world[k] = rotation * g.joint_axes[k].unit().into_inner();
        rotation *= hinge(g.joint_axes[k], q.0[k]);
        link_rotations[k] = rotation;
        let marker = origin + rotation * g.marker_vector(k);
        positions[k] = [marker.x, marker.y, marker.z];
        origin += rotation * g.link_vector(k);
    }
    joint_origins[JOINTS] = origin;
    ChainPose {
        joint_origins,
        link_rotations,
        joint_axes_world,
        markers: MarkerSet { positions },
    }
}

pub fn forward_kinematics(q: &JointAngles, g: &ArmGeometry) -> Result<MarkerSet> {
    q.check_range()?;
    Ok(chain_pose(q, g).markers)
}

/// Minimum projected segment length accepted when recovering a hinge angle, mm.
const MIN_PROJECTED_MM: f64 = 1e-9;

/// Recover joint angles from one marker per link.
///
/// Works outward from the base: with the frame of link `k - 1` known, the
/// marker of link `k` fixes the hinge angle of joint `k` through its
/// direction projected onto the plane normal to that joint's axis.
pub fn joints_from_markers(m: &MarkerSet, g: &ArmGeometry) -> Result<JointAngles> {
    if m.positions.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("marker positions"));
    }
    let mut rotation = Matrix3::identity();
    let mut origin = Vector3::zeros();
    let mut q = [0.0; JOINTS];
    for k in 0..JOINTS {
        if k > 0 && (m.position(k) - m.position(k - 1)).norm() < MIN_PROJECTED_MM {
            return Err(Error::UnrecoverablePose { link: k + 1 });
        }
        let axis = g.joint_axes[k].unit().into_inner();
        let measured = rotation.transpose() * (m.position(k) - origin);
        let model = g.marker_vector(k);
        let measured_perp = measured - axis * axis.dot(&measured);
        let model_perp = model - axis * axis.dot(&model);
        if measured_perp.norm() < MIN_PROJECTED_MM || model_perp.norm() < MIN_PROJECTED_MM {
            return Err(Error::UnrecoverablePose { link: k + 1 });
        }
        q[k] = f64::atan2(
            model_perp.cross(&measured_perp).dot(&axis),
            model_perp.dot(&measured_perp),
        );
        rotation *= hinge(g.joint_axes[k], q[k]);
        origin += rotation * g.link_vector(k);
    }
    Ok(JointAngles(q))
}
