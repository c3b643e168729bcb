//! End-effector task constraints: planes, lines and locked orientation.
//!
//! Each constraint produces an error vector whose norm is compared against
//! `tau_task`, plus the analytic derivative of that vector with respect to the
//! joint values. Corrections come from a damped least-squares pseudoinverse.

use alloc::format;

use nalgebra::{DMatrix, DVector, Isometry3, Matrix3, RowVector3, UnitQuaternion, Vector3};

use crate::error::{check_dim, Error, Result};
use crate::kinematics::{forward_kinematics, jacobian_from_frames, RobotModel};
use crate::math::{atan2, cos, sin, sqrt};

const UNIT_TOLERANCE: f64 = 1e-9;

/// Default damping for the pseudoinverse step.
pub const DEFAULT_DAMPING: f64 = 1e-3;
/// Default meters-per-radian weight on orientation error rows.
pub const DEFAULT_ANGULAR_WEIGHT: f64 = 0.5;

/// Constraint on the end-effector position.
#[derive(Debug, Clone, PartialEq)]
pub enum PositionConstraint {
    /// `normal · p = offset`; one error row.
    Plane { normal: Vector3<f64>, offset: f64 },
    /// `p` on the line through `point` along `direction`; two error rows.
    Line { point: Vector3<f64>, direction: Vector3<f64> },
}

/// Locks the end-effector orientation to `target`; three extra error rows.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationLock {
    pub target: UnitQuaternion<f64>,
    pub angular_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    pub position: PositionConstraint,
    pub orientation: Option<OrientationLock>,
    /// Tolerance on the error norm. `f64::INFINITY` disables the constraint.
    pub tau_task: f64,
    line_basis: Option<[Vector3<f64>; 2]>,
}

/// Constraint violation at one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskError(pub DVector<f64>);

impl TaskError {
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl ConstraintSpec {
    pub fn plane(normal: Vector3<f64>, offset: f64, tau_task: f64) -> Result<Self> {
        Self::new(PositionConstraint::Plane { normal, offset }, None, tau_task)
    }

    pub fn line(point: Vector3<f64>, direction: Vector3<f64>, tau_task: f64) -> Result<Self> {
        Self::new(PositionConstraint::Line { point, direction }, None, tau_task)
    }

    /// A spec whose tolerance is infinite: every configuration satisfies it,
    /// so projection returns its input untouched.
    pub fn unconstrained() -> Self {
        Self {
            position: PositionConstraint::Plane { normal: Vector3::z(), offset: 0.0 },
            orientation: None,
            tau_task: f64::INFINITY,
            line_basis: None,
        }
    }

    pub fn new(position: PositionConstraint, orientation: Option<OrientationLock>, tau_task: f64) -> Result<Self> {
        let unit = |v: &Vector3<f64>, name: &str| -> Result<()> {
            let n = v.norm();
            if (n - 1.0).abs() > UNIT_TOLERANCE || !n.is_finite() {
                return Err(Error::InvalidConstraint(format!("{name} must be unit length, norm is {n}")));
            }
            Ok(())
        };
        let line_basis = match &position {
            PositionConstraint::Plane { normal, offset } => {
                unit(normal, "plane normal")?;
                if !offset.is_finite() {
                    return Err(Error::InvalidConstraint("plane offset must be finite".into()));
                }
                None
            }
            PositionConstraint::Line { point, direction } => {
                unit(direction, "line direction")?;
                if !point.iter().all(|c| c.is_finite()) {
                    return Err(Error::InvalidConstraint("line point must be finite".into()));
                }
                Some(line_normal_basis(direction))
            }
        };
        if let Some(lock) = &orientation {
            let qn = lock.target.quaternion().norm();
            if (qn - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::InvalidConstraint("fixed orientation must be a unit quaternion".into()));
            }
            if !(lock.angular_weight.is_finite() && lock.angular_weight > 0.0) {
                return Err(Error::InvalidConstraint("angular_weight must be positive".into()));
            }
        }
        if !(tau_task > 0.0) {
            return Err(Error::InvalidConstraint(format!("tau_task must be positive, got {tau_task}")));
        }
        Ok(Self { position, orientation, tau_task, line_basis })
    }

    pub fn with_orientation(mut self, target: UnitQuaternion<f64>, angular_weight: f64) -> Result<Self> {
        self.orientation = Some(OrientationLock { target, angular_weight });
        Self::new(self.position, self.orientation, self.tau_task)
    }

    pub fn is_unconstrained(&self) -> bool {
        self.tau_task == f64::INFINITY
    }

    /// Number of error rows.
    pub fn dim(&self) -> usize {
        let pos = match self.position {
            PositionConstraint::Plane { .. } => 1,
            PositionConstraint::Line { .. } => 2,
        };
        pos + if self.orientation.is_some() { 3 } else { 0 }
    }

    /// Orthonormal basis of the plane normal to the line direction.
    pub fn line_basis(&self) -> Option<[Vector3<f64>; 2]> {
        self.line_basis
    }
}

/// Deterministic orthonormal basis of the plane orthogonal to `direction`:
/// Gram-Schmidt on the coordinate axis where `direction` is smallest.
pub fn line_normal_basis(direction: &Vector3<f64>) -> [Vector3<f64>; 2] {
    let mut axis = 0;
    for i in 1..3 {
        if direction[i].abs() < direction[axis].abs() {
            axis = i;
        }
    }
    let mut e = Vector3::zeros();
    e[axis] = 1.0;
    let u1 = (e - direction * direction.dot(&e)).normalize();
    let u2 = direction.cross(&u1);
    [u1, u2]
}

/// Rotation vector (axis times angle, angle in [0, π]) of a unit quaternion.
pub fn rotation_vector(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let (mut w, mut v) = (q.quaternion().w, q.quaternion().imag());
    if w < 0.0 {
        w = -w;
        v = -v;
    }
    let s = v.norm();
    if s < 1e-12 {
        return v * 2.0;
    }
    let angle = 2.0 * atan2(s, w);
    v * (angle / s)
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of the left Jacobian of SO(3) at rotation vector `phi`.
fn so3_left_jacobian_inverse(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let theta = sqrt(theta2);
    let k = skew(phi);
    let coeff = if theta < 1e-4 {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        1.0 / theta2 - (1.0 + cos(theta)) / (2.0 * theta * sin(theta))
    };
    Matrix3::identity() - k * 0.5 + k * k * coeff
}

/// Task error of an end-effector pose.
///
/// Plane: signed distance `normal · p − offset`. Line: the offset of `p` from
/// the line in the fixed normal-plane basis. Orientation: the weighted
/// rotation vector of `target⁻¹ · orientation`.
pub fn task_error(spec: &ConstraintSpec, ee_pose: &Isometry3<f64>) -> TaskError {
    let mut e = DVector::zeros(spec.dim());
    let p = ee_pose.translation.vector;
    let rows = match &spec.position {
        PositionConstraint::Plane { normal, offset } => {
            e[0] = normal.dot(&p) - offset;
            1
        }
        PositionConstraint::Line { point, .. } => {
            let [u1, u2] = spec.line_basis.expect("line basis set on construction");
            let d = p - point;
            e[0] = u1.dot(&d);
            e[1] = u2.dot(&d);
            2
        }
    };
    if let Some(lock) = &spec.orientation {
        let phi = rotation_vector(&(lock.target.inverse() * ee_pose.rotation)) * lock.angular_weight;
        e.fixed_rows_mut::<3>(rows).copy_from(&phi);
    }
    TaskError(e)
}

/// Analytic Jacobian of [`task_error`] with respect to the joint values.
pub fn task_jacobian(spec: &ConstraintSpec, model: &RobotModel, q: &[f64]) -> Result<DMatrix<f64>> {
    Ok(task_error_and_jacobian(spec, model, q)?.1)
}

/// Task error and Jacobian sharing one forward-kinematics pass.
pub fn task_error_and_jacobian(
    spec: &ConstraintSpec,
    model: &RobotModel,
    q: &[f64],
) -> Result<(TaskError, DMatrix<f64>)> {
    let frames = forward_kinematics(model, q)?;
    let err = task_error(spec, &frames.ee);
    let geo = jacobian_from_frames(model, &frames, &frames.ee_position());
    let n = model.dof();
    let lin = geo.fixed_rows::<3>(0);
    let ang = geo.fixed_rows::<3>(3);
    let mut jac = DMatrix::zeros(spec.dim(), n);
    let rows = match &spec.position {
        PositionConstraint::Plane { normal, .. } => {
            jac.row_mut(0).copy_from(&(normal.transpose() * lin));
            1
        }
        PositionConstraint::Line { .. } => {
            let [u1, u2] = spec.line_basis.expect("line basis set on construction");
            jac.row_mut(0).copy_from(&(RowVector3::from(u1.transpose()) * lin));
            jac.row_mut(1).copy_from(&(u2.transpose() * lin));
            2
        }
    };
    if let Some(lock) = &spec.orientation {
        let phi = err.0.fixed_rows::<3>(rows) / lock.angular_weight;
        let target_rot = lock.target.to_rotation_matrix();
        let block = so3_left_jacobian_inverse(&phi.into_owned()) * target_rot.matrix().transpose() * ang;
        jac.view_mut((rows, 0), (3, n)).copy_from(&(block * lock.angular_weight));
    }
    Ok((err, jac))
}

/// Damped least-squares step `Jᵀ (J Jᵀ + λ² I)⁻¹ e`.
///
/// With `lambda == 0` this is the minimum-norm solution for a full-row-rank
/// `J`; a rank-deficient `J` then yields [`Error::SingularSystem`].
pub fn damped_pinv_apply(jac: &DMatrix<f64>, e: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    check_dim(jac.nrows(), e.len())?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("damping must be non-negative, got {lambda}")));
    }
    if e.iter().all(|&v| v == 0.0) {
        return Ok(DVector::zeros(jac.ncols()));
    }
    // QR of the stacked matrix [Jᵀ; λI] gives RᵀR = JJᵀ + λ²I and
    // Jᵀ = Q_top R, so the step is Q_top R⁻ᵀ e without squaring cond(J).
    let (m, n) = jac.shape();
    let mut stacked = DMatrix::zeros(n + m, m);
    stacked.view_mut((0, 0), (n, m)).copy_from(&jac.transpose());
    for i in 0..m {
        stacked[(n + i, i)] = lambda;
    }
    let qr = stacked.qr();
    let r = qr.r();
    let scale = r.diagonal().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 || r.diagonal().iter().any(|v| v.abs() <= SINGULAR_PIVOT * scale) {
        return Err(Error::SingularSystem);
    }
    let z = r.transpose().solve_lower_triangular(e).ok_or(Error::SingularSystem)?;
    Ok(qr.q().rows(0, n) * z)
}

/// Relative pivot size below which the system is treated as singular.
const SINGULAR_PIVOT: f64 = 1e-12;
