//! Serial-chain robot model, forward kinematics and the geometric Jacobian.

use alloc::format;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use nalgebra::{Isometry3, Matrix6xX, Translation3, Unit, UnitQuaternion, Vector3};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{Point3, Sphere};

/// A point in joint space (radians for revolute joints, meters for prismatic).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Configuration(pub Vec<f64>);

impl Configuration {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(alloc::vec![0.0; n])
    }

    pub fn distance(&self, other: &Configuration) -> f64 {
        crate::math::distance(&self.0, &other.0)
    }
}

impl Deref for Configuration {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Configuration {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Configuration {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointType {
    Revolute,
    Prismatic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub kind: JointType,
    /// Motion axis in the joint frame.
    pub axis: Unit<Vector3<f64>>,
    /// Placement of the joint frame relative to the previous link frame.
    pub origin: Isometry3<f64>,
    pub lower: f64,
    pub upper: f64,
}

impl Joint {
    fn motion(&self, value: f64) -> Isometry3<f64> {
        match self.kind {
            JointType::Revolute => Isometry3::from_parts(
                Translation3::identity(),
                UnitQuaternion::from_axis_angle(&self.axis, value),
            ),
            JointType::Prismatic => Isometry3::from_parts(
                Translation3::from(self.axis.into_inner() * value),
                UnitQuaternion::identity(),
            ),
        }
    }
}

/// Collision sphere attached to a link, in that link's frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSphere {
    pub link: usize,
    pub center: Point3,
    pub radius: f64,
}

/// Serial kinematic chain. Link `i` is the body moved by joint `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub name: alloc::string::String,
    joints: Vec<Joint>,
    spheres: Vec<LinkSphere>,
    ee_link: usize,
    ee_offset: Isometry3<f64>,
    self_collision_pairs: Vec<(usize, usize)>,
}

/// Link frames in world coordinates plus the end-effector pose.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub links: Vec<Isometry3<f64>>,
    /// Joint frames (before the joint's own motion), used by the Jacobian.
    pub joint_frames: Vec<Isometry3<f64>>,
    pub ee: Isometry3<f64>,
}

impl FrameSet {
    pub fn ee_position(&self) -> Point3 {
        self.ee.translation.vector
    }

    pub fn ee_orientation(&self) -> UnitQuaternion<f64> {
        self.ee.rotation
    }
}

const AXIS_TOLERANCE: f64 = 1e-9;

impl RobotModel {
    /// Builds and validates a model.
    ///
    /// Joint axes must be unit length within 1e-9 (they are stored
    /// renormalized), limits must satisfy `lower < upper`, every sphere must
    /// have a positive radius on an existing link, and self-collision pairs
    /// must reference distinct spheres.
    pub fn new(
        name: impl Into<alloc::string::String>,
        joints: Vec<(JointType, Vector3<f64>, Isometry3<f64>, [f64; 2])>,
        spheres: Vec<LinkSphere>,
        ee_link: usize,
        ee_offset: Isometry3<f64>,
        self_collision_pairs: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::InvalidModel("model has no joints".into()));
        }
        let mut built = Vec::with_capacity(joints.len());
        for (i, (kind, axis, origin, [lower, upper])) in joints.into_iter().enumerate() {
            let n = axis.norm();
            if !n.is_finite() || (n - 1.0).abs() > AXIS_TOLERANCE {
                return Err(Error::InvalidModel(format!("joints[{i}].axis is not unit length (norm {n})")));
            }
            if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                return Err(Error::InvalidModel(format!("joints[{i}].limits require lower < upper")));
            }
            built.push(Joint { kind, axis: Unit::new_normalize(axis), origin, lower, upper });
        }
        if ee_link >= built.len() {
            return Err(Error::InvalidModel(format!(
                "ee_link {ee_link} out of range for {} links",
                built.len()
            )));
        }
        for (i, s) in spheres.iter().enumerate() {
            if s.link >= built.len() {
                return Err(Error::InvalidModel(format!("link_spheres[{i}].link {} out of range", s.link)));
            }
            if !(s.radius.is_finite() && s.radius > 0.0) || !s.center.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidModel(format!("link_spheres[{i}] has invalid center or radius")));
            }
        }
        for (i, &(a, b)) in self_collision_pairs.iter().enumerate() {
            if a >= spheres.len() || b >= spheres.len() || a == b {
                return Err(Error::InvalidModel(format!("self_collision_pairs[{i}] = ({a}, {b}) is invalid")));
            }
        }
        Ok(Self {
            name: name.into(),
            joints: built,
            spheres,
            ee_link,
            ee_offset,
            self_collision_pairs,
        })
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn spheres(&self) -> &[LinkSphere] {
        &self.spheres
    }

    pub fn ee_link(&self) -> usize {
        self.ee_link
    }

    pub fn ee_offset(&self) -> &Isometry3<f64> {
        &self.ee_offset
    }

    pub fn self_collision_pairs(&self) -> &[(usize, usize)] {
        &self.self_collision_pairs
    }

    pub fn limits(&self) -> Vec<[f64; 2]> {
        self.joints.iter().map(|j| [j.lower, j.upper]).collect()
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.len() == self.dof() && self.joints.iter().zip(q).all(|(j, &v)| v >= j.lower && v <= j.upper)
    }

    /// Clamps `q` into the joint limits, returning whether anything changed.
    pub fn clamp_to_limits(&self, q: &mut [f64]) -> bool {
        let mut changed = false;
        for (j, v) in self.joints.iter().zip(q.iter_mut()) {
            let c = v.clamp(j.lower, j.upper);
            if c != *v {
                *v = c;
                changed = true;
            }
        }
        changed
    }
}

/// Composes the chain transforms for configuration `q`.
pub fn forward_kinematics(model: &RobotModel, q: &[f64]) -> Result<FrameSet> {
    check_dim(model.dof(), q.len())?;
    let mut links = Vec::with_capacity(model.dof());
    let mut joint_frames = Vec::with_capacity(model.dof());
    let mut current = Isometry3::identity();
    for (joint, &value) in model.joints.iter().zip(q) {
        let frame = current * joint.origin;
        current = frame * joint.motion(value);
        joint_frames.push(frame);
        links.push(current);
    }
    let ee = links[model.ee_link] * model.ee_offset;
    Ok(FrameSet { links, joint_frames, ee })
}

/// World-frame collision spheres in model order.
pub fn collision_spheres_world(model: &RobotModel, frames: &FrameSet) -> Vec<Sphere> {
    let mut out = Vec::with_capacity(model.spheres.len());
    collision_spheres_into(model, frames, &mut out);
    out
}

pub(crate) fn collision_spheres_into(model: &RobotModel, frames: &FrameSet, out: &mut Vec<Sphere>) {
    out.clear();
    out.extend(model.spheres.iter().map(|s| {
        let center = frames.links[s.link].transform_point(&s.center.into()).coords;
        Sphere { center, radius: s.radius }
    }));
}

/// 6×n geometric Jacobian of a world point rigidly attached to the
/// end-effector link: rows 0..3 are linear velocity, rows 3..6 angular
/// velocity. Joints after the end-effector link contribute zero columns.
pub fn geometric_jacobian(model: &RobotModel, q: &[f64], point: &Point3) -> Result<Matrix6xX<f64>> {
    let frames = forward_kinematics(model, q)?;
    Ok(jacobian_from_frames(model, &frames, point))
}

pub(crate) fn jacobian_from_frames(model: &RobotModel, frames: &FrameSet, point: &Point3) -> Matrix6xX<f64> {
    let mut jac = Matrix6xX::zeros(model.dof());
    for (i, joint) in model.joints.iter().enumerate().take(model.ee_link + 1) {
        let frame = &frames.joint_frames[i];
        let axis = frame.rotation * joint.axis.into_inner();
        match joint.kind {
            JointType::Revolute => {
                let lin = axis.cross(&(point - frame.translation.vector));
                jac.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
                jac.fixed_view_mut::<3, 1>(3, i).copy_from(&axis);
            }
            JointType::Prismatic => {
                jac.fixed_view_mut::<3, 1>(0, i).copy_from(&axis);
            }
        }
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::FRAC_PI_2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn planar_arm() -> RobotModel {
        RobotModel::new(
            "planar1",
            vec![(JointType::Revolute, Vector3::z(), Isometry3::identity(), [-3.0, 3.0])],
            vec![LinkSphere { link: 0, center: Point3::zeros(), radius: 0.1 }],
            0,
            Isometry3::translation(1.0, 0.0, 0.0),
            vec![],
        )
        .unwrap()
    }

    pub(crate) fn random_chain(rng: &mut ChaCha8Rng, n: usize) -> RobotModel {
        let joints = (0..n)
            .map(|i| {
                let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                    .normalize();
                let origin = Isometry3::new(
                    Vector3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(0.0..0.4)),
                    Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                );
                let kind = if i == 1 { JointType::Prismatic } else { JointType::Revolute };
                (kind, axis, origin, [-2.5, 2.5])
            })
            .collect();
        RobotModel::new("random", joints, vec![], n - 1, Isometry3::translation(0.0, 0.0, 0.1), vec![]).unwrap()
    }

    #[test]
    fn one_joint_arm_positions() {
        let m = planar_arm();
        let f = forward_kinematics(&m, &[0.0]).unwrap();
        assert!((f.ee_position() - Point3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        let f = forward_kinematics(&m, &[FRAC_PI_2]).unwrap();
        assert!((f.ee_position() - Point3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let m = planar_arm();
        assert_eq!(
            forward_kinematics(&m, &[0.0, 1.0]).unwrap_err(),
            Error::DimensionMismatch { expected: 1, found: 2 }
        );
        assert!(geometric_jacobian(&m, &[], &Point3::zeros()).is_err());
    }

    #[test]
    fn sphere_at_link_origin_follows_link_frame() {
        let m = planar_arm();
        let f = forward_kinematics(&m, &[0.7]).unwrap();
        let s = collision_spheres_world(&m, &f);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].center, f.links[0].translation.vector);
        assert_eq!(s[0].radius, 0.1);
    }

    #[test]
    fn planar_jacobian_column() {
        let m = planar_arm();
        let j = geometric_jacobian(&m, &[0.0], &Point3::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(j.column(0).as_slice(), &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn prismatic_jacobian_column() {
        let m = RobotModel::new(
            "lift",
            vec![(JointType::Prismatic, Vector3::z(), Isometry3::identity(), [0.0, 0.4])],
            vec![],
            0,
            Isometry3::identity(),
            vec![],
        )
        .unwrap();
        let j = geometric_jacobian(&m, &[0.2], &Point3::new(0.3, 0.1, 0.2)).unwrap();
        assert_eq!(j.column(0).as_slice(), &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn fk_matches_term_by_term_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_chain(&mut rng, 3);
        for _ in 0..50 {
            let q: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            // independent composition with homogeneous 4x4 matrices
            let mut t = nalgebra::Matrix4::<f64>::identity();
            for (j, &v) in m.joints().iter().zip(&q) {
                let motion = match j.kind {
                    JointType::Revolute => nalgebra::Rotation3::from_axis_angle(&j.axis, v).to_homogeneous(),
                    JointType::Prismatic => nalgebra::Matrix4::new_translation(&(j.axis.into_inner() * v)),
                };
                t = t * j.origin.to_homogeneous() * motion;
            }
            t *= m.ee_offset().to_homogeneous();
            let f = forward_kinematics(&m, &q).unwrap();
            assert!((f.ee.to_homogeneous() - t).abs().max() < 1e-12);
        }
    }

    #[test]
    fn rotations_stay_orthonormal_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_chain(&mut rng, 7);
        for _ in 0..100 {
            let q: Vec<f64> = (0..7).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let f = forward_kinematics(&m, &q).unwrap();
            assert_eq!(f, forward_kinematics(&m, &q).unwrap());
            for link in &f.links {
                let r = link.rotation.to_rotation_matrix();
                let err = (r.matrix().transpose() * r.matrix() - nalgebra::Matrix3::identity()).abs().max();
                assert!(err < 1e-9);
                assert!((link.rotation.quaternion().norm() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_chain(&mut rng, 7);
        let h = 1e-6;
        for _ in 0..50 {
            let q: Vec<f64> = (0..7).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let f0 = forward_kinematics(&m, &q).unwrap();
            let point = f0.ee_position();
            let jac = geometric_jacobian(&m, &q, &point).unwrap();
            for i in 0..7 {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[i] += h;
                qm[i] -= h;
                let fp = forward_kinematics(&m, &qp).unwrap();
                let fm = forward_kinematics(&m, &qm).unwrap();
                let lin = (fp.ee_position() - fm.ee_position()) / (2.0 * h);
                // angular velocity from the rotation difference
                let dr = fp.ee.rotation * fm.ee.rotation.inverse();
                let ang = dr.scaled_axis() / (2.0 * h);
                for r in 0..3 {
                    assert!((jac[(r, i)] - lin[r]).abs() < 1e-5);
                    assert!((jac[(r + 3, i)] - ang[r]).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn sphere_count_is_conserved() {
        let m = planar_arm();
        for v in [-1.0, 0.0, 2.0] {
            let f = forward_kinematics(&m, &[v]).unwrap();
            assert_eq!(collision_spheres_world(&m, &f).len(), m.spheres().len());
        }
    }

    #[test]
    fn rejects_invalid_models() {
        let joint = || (JointType::Revolute, Vector3::z(), Isometry3::identity(), [-1.0, 1.0]);
        assert!(RobotModel::new("x", vec![joint()], vec![], 1, Isometry3::identity(), vec![]).is_err());
        assert!(RobotModel::new(
            "x",
            vec![(JointType::Revolute, Vector3::new(0.0, 0.0, 2.0), Isometry3::identity(), [-1.0, 1.0])],
            vec![],
            0,
            Isometry3::identity(),
            vec![]
        )
        .is_err());
        assert!(RobotModel::new(
            "x",
            vec![(JointType::Revolute, Vector3::z(), Isometry3::identity(), [1.0, 1.0])],
            vec![],
            0,
            Isometry3::identity(),
            vec![]
        )
        .is_err());
        let s = LinkSphere { link: 0, center: Point3::zeros(), radius: -1.0 };
        assert!(RobotModel::new("x", vec![joint()], vec![s], 0, Isometry3::identity(), vec![]).is_err());
    }
}
