//! Independent re-validation of planned paths.
//!
//! Every edge is re-interpolated and re-projected, then each waypoint is
//! checked with geometry written here rather than the planner's own
//! clearance and task-error code.

use nalgebra::{Isometry3, Vector3};
use rrtc_core::constraints::{ConstraintSpec, PositionConstraint};
use rrtc_core::geometry::Scene;
use rrtc_core::kinematics::{collision_spheres_world, forward_kinematics, RobotModel};
use rrtc_core::planner::{PathEdge, PlanProblem, PlanResult, PlanStatus};
use rrtc_core::projection::{interpolate_segment, MotionSegment};
use rrtc_core::team::{SequentialTeam, WorkerTeam};
use rrtc_core::Configuration;

/// Relative slack allowed when comparing recomputed errors with tolerances.
const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub edge: Option<usize>,
    pub message: String,
}

fn violation(edge: Option<usize>, message: impl Into<String>) -> Violation {
    Violation { edge, message: message.into() }
}

/// Constraint error recomputed from the end-effector pose.
pub fn constraint_error(spec: &ConstraintSpec, ee: &Isometry3<f64>) -> f64 {
    let p = ee.translation.vector;
    let pos2 = match &spec.position {
        PositionConstraint::Plane { normal, offset } => {
            let n = normal / normal.norm();
            (n.dot(&p) - offset).powi(2)
        }
        PositionConstraint::Line { point, direction } => {
            let d = direction / direction.norm();
            let r = p - point;
            (r - d * d.dot(&r)).norm_squared()
        }
    };
    let rot2 = spec.orientation.as_ref().map_or(0.0, |o| (o.angular_weight * o.target.angle_to(&ee.rotation)).powi(2));
    (pos2 + rot2).sqrt()
}

fn box_penetrates(c: &Vector3<f64>, r: f64, min: &Vector3<f64>, max: &Vector3<f64>) -> bool {
    let mut d2 = 0.0;
    for i in 0..3 {
        let excess = (min[i] - c[i]).max(c[i] - max[i]).max(0.0);
        d2 += excess * excess;
    }
    d2 < r * r
}

/// Collision test by direct enumeration: true if any robot sphere
/// overlaps any scene primitive or any listed self pair overlaps.
pub fn in_collision(model: &RobotModel, scene: &Scene, q: &[f64]) -> rrtc_core::Result<bool> {
    let frames = forward_kinematics(model, q)?;
    let spheres = collision_spheres_world(model, &frames);
    for s in &spheres {
        if scene.boxes.iter().any(|b| box_penetrates(&s.center, s.radius, &b.min, &b.max)) {
            return Ok(true);
        }
        if scene.spheres.iter().any(|o| (s.center - o.center).norm() < s.radius + o.radius) {
            return Ok(true);
        }
    }
    Ok(model
        .self_collision_pairs()
        .iter()
        .any(|&(a, b)| (spheres[a].center - spheres[b].center).norm() < spheres[a].radius + spheres[b].radius))
}

fn check_segment(problem: &PlanProblem, seg: &MotionSegment, tau_sm: f64, edge: usize, out: &mut Vec<Violation>) {
    let w = seg.waypoints();
    for (i, q) in w.iter().enumerate() {
        if !problem.model.within_limits(q) {
            out.push(violation(Some(edge), format!("waypoint {i} outside joint limits")));
        }
        match forward_kinematics(&problem.model, q) {
            Ok(f) => {
                let e = constraint_error(&problem.spec, &f.ee);
                if !(e < problem.spec.tau_task * (1.0 + SLACK)) {
                    out.push(violation(Some(edge), format!("waypoint {i} constraint error {e}")));
                }
            }
            Err(e) => out.push(violation(Some(edge), e.to_string())),
        }
        match in_collision(&problem.model, &problem.scene, q) {
            Ok(false) => {}
            Ok(true) => out.push(violation(Some(edge), format!("waypoint {i} in collision"))),
            Err(e) => out.push(violation(Some(edge), e.to_string())),
        }
        if i > 0 {
            let gap = q.distance(&w[i - 1]);
            if !(gap < tau_sm * (1.0 + SLACK)) {
                out.push(violation(Some(edge), format!("waypoint {i} gap {gap} exceeds {tau_sm}")));
            }
        }
    }
}

fn reproject(problem: &PlanProblem, from: &Configuration, to: &Configuration) -> Result<(MotionSegment, MotionSegment, f64), String> {
    let p = &problem.params;
    let seg = interpolate_segment(from, to, p.width).map_err(|e| e.to_string())?;
    let out = SequentialTeam
        .project(&seg, &problem.spec, &problem.model, &p.projection, p.projector)
        .map_err(|e| e.to_string())?;
    let tau_sm = out.tau_sm;
    match out.segment {
        Some(projected) => Ok((seg, projected, tau_sm)),
        None => Err("re-projection failed".into()),
    }
}

/// Re-validates a solved path edge by edge. Returns every violation found.
pub fn verify_path(problem: &PlanProblem, result: &PlanResult) -> Vec<Violation> {
    let mut out = Vec::new();
    if result.status != PlanStatus::Solved {
        return out;
    }
    let path = &result.path;
    if path.first() != Some(&problem.start) || path.last() != Some(&problem.goal) {
        out.push(violation(None, "path does not run from start to goal"));
    }
    if result.edges.len() + 1 != path.len() {
        out.push(violation(None, "edge count does not match path"));
        return out;
    }
    for (i, edge) in result.edges.iter().enumerate() {
        let (a, b) = (&path[i], &path[i + 1]);
        match edge {
            PathEdge::Tree { parent, target, child } => {
                let forward = parent == a && child == b;
                let backward = parent == b && child == a;
                if !forward && !backward {
                    out.push(violation(Some(i), "tree edge endpoints do not match path"));
                    continue;
                }
                match reproject(problem, parent, target) {
                    Ok((_, projected, tau_sm)) => {
                        if projected.end() != child {
                            out.push(violation(Some(i), "re-projected end differs from stored child"));
                        }
                        check_segment(problem, &projected, tau_sm, i, &mut out);
                    }
                    Err(m) => out.push(violation(Some(i), m)),
                }
            }
            PathEdge::Bridge { from, to } => {
                if !((from == a && to == b) || (from == b && to == a)) {
                    out.push(violation(Some(i), "bridge endpoints do not match path"));
                    continue;
                }
                match reproject(problem, from, to) {
                    Ok((straight, projected, tau_sm)) => {
                        if projected != straight {
                            out.push(violation(Some(i), "projector moved the bridge segment"));
                        }
                        check_segment(problem, &straight, tau_sm, i, &mut out);
                    }
                    Err(m) => out.push(violation(Some(i), m)),
                }
            }
        }
    }
    out
}
