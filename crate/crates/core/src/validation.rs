//! Motion validation with a shared early-termination flag.
//!
//! One logical worker per waypoint runs forward kinematics and then walks a
//! fixed list of checks: every environment primitive in scene order against
//! every robot sphere, then every self-collision pair. With the flag on, a
//! worker that finds a collision raises the flag and every worker consults it
//! before issuing its next check. The flag changes how much work is done,
//! never the verdict.

use alloc::vec::Vec;
use core::sync::atomic::{AtomicBool, Ordering};

use crate::error::{check_dim, Result};
use crate::geometry::{sphere_sphere_clearance, Scene, Sphere};
use crate::kinematics::{collision_spheres_into, forward_kinematics, Configuration, RobotModel};
use crate::projection::MotionSegment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlagMode {
    #[default]
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub valid: bool,
    pub primitive_checks_performed: u64,
    pub primitive_checks_possible: u64,
    pub first_colliding_waypoint: Option<usize>,
}

/// Result of one check issued by a [`WaypointChecker`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStep {
    Clear,
    Collision,
    Exhausted,
}

/// Number of checks one waypoint needs when nothing collides.
pub fn checks_per_waypoint(model: &RobotModel, scene: &Scene) -> usize {
    model.spheres().len() * scene.primitive_count() + model.self_collision_pairs().len()
}

/// Cursor over the checks of a single waypoint.
#[derive(Debug, Clone)]
pub struct WaypointChecker<'a> {
    model: &'a RobotModel,
    scene: &'a Scene,
    spheres: Vec<Sphere>,
    cursor: usize,
    total: usize,
    performed: u64,
}

impl<'a> WaypointChecker<'a> {
    /// Runs forward kinematics for `q`.
    pub fn new(model: &'a RobotModel, scene: &'a Scene, q: &[f64]) -> Result<Self> {
        let frames = forward_kinematics(model, q)?;
        let mut spheres = Vec::with_capacity(model.spheres().len());
        collision_spheres_into(model, &frames, &mut spheres);
        Ok(Self { model, scene, spheres, cursor: 0, total: checks_per_waypoint(model, scene), performed: 0 })
    }

    pub fn performed(&self) -> u64 {
        self.performed
    }

    pub fn is_exhausted(&self) -> bool {
        self.cursor >= self.total
    }

    /// Issues the next check.
    pub fn step(&mut self) -> CheckStep {
        if self.cursor >= self.total {
            return CheckStep::Exhausted;
        }
        let s = self.cursor;
        self.cursor += 1;
        self.performed += 1;
        let n = self.spheres.len();
        let env = n * self.scene.primitive_count();
        let clearance = if s < env {
            self.scene.clearance_to(s / n, &self.spheres[s % n])
        } else {
            let (a, b) = self.model.self_collision_pairs()[s - env];
            sphere_sphere_clearance(&self.spheres[a], &self.spheres[b])
        };
        if clearance < 0.0 {
            CheckStep::Collision
        } else {
            CheckStep::Clear
        }
    }

    /// Runs checks until exhaustion, a collision, or (in flag-on mode) until
    /// `flag` is seen raised. Returns whether this worker found a collision.
    pub fn run_shared(&mut self, flag: &AtomicBool, mode: FlagMode) -> bool {
        let mut collided = false;
        loop {
            if mode == FlagMode::On && flag.load(Ordering::Acquire) {
                break;
            }
            match self.step() {
                CheckStep::Exhausted => break,
                CheckStep::Clear => {}
                CheckStep::Collision => {
                    collided = true;
                    if mode == FlagMode::On {
                        flag.store(true, Ordering::Release);
                        break;
                    }
                }
            }
        }
        collided
    }
}

/// Validates every waypoint of `seg`.
///
/// Workers advance in lock-step: in round `s` each still-running worker, in
/// waypoint order, issues its `s`-th check. With the flag on, the first
/// collision stops all further checks, including those of later workers in
/// the same round. With the flag off every check is performed.
pub fn validate_motion(
    seg: &MotionSegment,
    scene: &Scene,
    model: &RobotModel,
    mode: FlagMode,
) -> Result<ValidationReport> {
    check_dim(model.dof(), seg.dim())?;
    let per_waypoint = checks_per_waypoint(model, scene);
    let mut checkers = seg
        .waypoints()
        .iter()
        .map(|q| WaypointChecker::new(model, scene, q))
        .collect::<Result<Vec<_>>>()?;
    let mut colliding = alloc::vec![false; checkers.len()];
    let mut flag = false;
    'rounds: for _ in 0..per_waypoint {
        for (w, checker) in checkers.iter_mut().enumerate() {
            if mode == FlagMode::On && flag {
                break 'rounds;
            }
            if checker.step() == CheckStep::Collision && !colliding[w] {
                colliding[w] = true;
                flag = true;
            }
        }
    }
    Ok(ValidationReport {
        valid: !colliding.iter().any(|&c| c),
        primitive_checks_performed: checkers.iter().map(WaypointChecker::performed).sum(),
        primitive_checks_possible: (per_waypoint * seg.width()) as u64,
        first_colliding_waypoint: colliding.iter().position(|&c| c),
    })
}

/// True iff every robot sphere clears every primitive and every
/// self-collision pair clears.
pub fn validate_configuration(q: &Configuration, scene: &Scene, model: &RobotModel) -> Result<bool> {
    let mut checker = WaypointChecker::new(model, scene, q)?;
    loop {
        match checker.step() {
            CheckStep::Exhausted => return Ok(true),
            CheckStep::Collision => return Ok(false),
            CheckStep::Clear => {}
        }
    }
}
