//! Projection of straight-line motion segments onto a constraint manifold.
//!
//! [`parallel_project`] runs a team of logical workers, one per waypoint, in
//! lock-step iterations. Each iteration has two stages separated by a
//! barrier:
//!
//! 1. every active worker `t` (with `prog < t < W`) computes a corrected
//!    waypoint from the task-error gradient and a smoothness pull toward its
//!    predecessor, and records whether its current waypoint is valid;
//! 2. a single coordinator advances `prog` over the valid prefix, then either
//!    declares the segment projected or commits the corrected waypoints.
//!
//! Waypoints at or below `prog` are frozen. The start waypoint is never
//! touched; the end waypoint is free to move.
//!
//! [`ProjectionKernel`] exposes both stages so that a threaded team (see the
//! `rrtc-bench` crate) can drive them with real barriers. The functions in
//! this module are the deterministic reference schedule.
//!
//! [`sequential_project`] is the classic waypoint-by-waypoint baseline.

use alloc::vec::Vec;

use nalgebra::DVector;

use crate::constraints::{damped_pinv_apply, task_error, task_error_and_jacobian, ConstraintSpec, DEFAULT_DAMPING};
use crate::error::{check_dim, Error, Result};
use crate::kinematics::{forward_kinematics, Configuration, RobotModel};
use crate::math::distance;

/// Smallest smoothness bound used for degenerate (zero-length) segments.
pub const MIN_TAU_SM: f64 = 1e-9;

/// Fixed-width sequence of waypoints; `waypoints[0]` is the fixed start.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSegment {
    waypoints: Vec<Configuration>,
}

impl MotionSegment {
    pub fn new(waypoints: Vec<Configuration>) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::InvalidParameter("a motion segment needs at least 2 waypoints".into()));
        }
        let dim = waypoints[0].len();
        for w in &waypoints[1..] {
            check_dim(dim, w.len())?;
        }
        Ok(Self { waypoints })
    }

    pub fn width(&self) -> usize {
        self.waypoints.len()
    }

    pub fn dim(&self) -> usize {
        self.waypoints[0].len()
    }

    pub fn waypoints(&self) -> &[Configuration] {
        &self.waypoints
    }

    pub fn into_waypoints(self) -> Vec<Configuration> {
        self.waypoints
    }

    pub fn start(&self) -> &Configuration {
        &self.waypoints[0]
    }

    pub fn end(&self) -> &Configuration {
        &self.waypoints[self.waypoints.len() - 1]
    }

    /// Spacing of a uniform interpolation between this segment's endpoints.
    pub fn uniform_gap(&self) -> f64 {
        self.start().distance(self.end()) / (self.width() - 1) as f64
    }
}

/// Straight-line interpolation with exact endpoints.
pub fn interpolate_segment(a: &Configuration, b: &Configuration, width: usize) -> Result<MotionSegment> {
    check_dim(a.len(), b.len())?;
    if width < 2 {
        return Err(Error::InvalidParameter("segment width must be at least 2".into()));
    }
    let last = (width - 1) as f64;
    let mut waypoints = Vec::with_capacity(width);
    waypoints.push(a.clone());
    for k in 1..width - 1 {
        let s = k as f64 / last;
        waypoints.push(Configuration(a.iter().zip(b.iter()).map(|(x, y)| x + s * (y - x)).collect()));
    }
    waypoints.push(b.clone());
    MotionSegment::new(waypoints)
}

/// Bound on the distance between consecutive waypoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmoothnessBound {
    Absolute(f64),
    /// Multiple of the segment's uniform interpolation gap.
    GapMultiple(f64),
}

/// How the coordinator advances the frozen prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrefixRule {
    /// Advance only through consecutive valid waypoints.
    #[default]
    Contiguous,
    /// Jump to the largest valid index even across invalid ones. Can freeze
    /// invalid waypoints; kept for comparison only.
    LiteralGap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionParams {
    pub tau_sm: SmoothnessBound,
    pub alpha: f64,
    pub max_iters: usize,
    pub lambda: f64,
    pub prefix_rule: PrefixRule,
}

impl Default for ProjectionParams {
    fn default() -> Self {
        Self {
            tau_sm: SmoothnessBound::GapMultiple(1.5),
            alpha: 0.1,
            max_iters: 128,
            lambda: DEFAULT_DAMPING,
            prefix_rule: PrefixRule::Contiguous,
        }
    }
}

impl ProjectionParams {
    pub fn validate(&self) -> Result<()> {
        let bound_ok = match self.tau_sm {
            SmoothnessBound::Absolute(v) | SmoothnessBound::GapMultiple(v) => v > 0.0 && v.is_finite(),
        };
        if !bound_ok || !(self.alpha > 0.0 && self.alpha.is_finite()) || self.max_iters == 0 || !(self.lambda >= 0.0)
        {
            return Err(Error::InvalidParameter("projection parameters must be positive".into()));
        }
        Ok(())
    }

    /// Concrete smoothness bound for `seg`.
    pub fn resolve_tau_sm(&self, seg: &MotionSegment) -> f64 {
        match self.tau_sm {
            SmoothnessBound::Absolute(v) => v,
            SmoothnessBound::GapMultiple(m) => (m * seg.uniform_gap()).max(MIN_TAU_SM),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionStatus {
    Projected,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureReason {
    /// `max_iters` exhausted without a fully valid segment.
    IterationLimit,
    /// A sequentially projected waypoint landed too far from its predecessor.
    Discontinuity,
    /// Clamping to joint limits broke the constraint or smoothness bound.
    JointLimits,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionOutcome {
    pub status: ProjectionStatus,
    pub segment: Option<MotionSegment>,
    pub iterations_used: usize,
    pub final_prog: usize,
    pub failure: Option<FailureReason>,
    /// Smoothness bound the segment was checked against.
    pub tau_sm: f64,
}

impl ProjectionOutcome {
    pub fn is_projected(&self) -> bool {
        self.status == ProjectionStatus::Projected
    }

    fn failed(reason: FailureReason, iterations_used: usize, final_prog: usize, tau_sm: f64) -> Self {
        Self {
            status: ProjectionStatus::Failed,
            segment: None,
            iterations_used,
            final_prog,
            failure: Some(reason),
            tau_sm,
        }
    }
}

/// Shared buffers of one projection team.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamState {
    pub xi: Vec<Configuration>,
    pub xi_new: Vec<Configuration>,
    pub valid: Vec<bool>,
    pub prog: usize,
    pub is_proj: bool,
}

impl TeamState {
    pub fn new(seg: &MotionSegment) -> Self {
        Self {
            xi: seg.waypoints.clone(),
            xi_new: seg.waypoints.clone(),
            valid: alloc::vec![false; seg.width()],
            prog: 0,
            is_proj: false,
        }
    }
}

/// Stage-one result of a single worker.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerUpdate {
    pub next: Configuration,
    pub valid: bool,
}

/// Snapshot handed to trace observers after each coordinator stage.
#[derive(Debug)]
pub struct IterationTrace<'a> {
    pub iteration: usize,
    pub prog: usize,
    pub is_proj: bool,
    pub waypoints: &'a [Configuration],
}

/// The two projection stages, bound to one segment and constraint.
#[derive(Debug, Clone)]
pub struct ProjectionKernel<'a> {
    spec: &'a ConstraintSpec,
    model: &'a RobotModel,
    params: ProjectionParams,
    tau_sm: f64,
    width: usize,
}

impl<'a> ProjectionKernel<'a> {
    pub fn new(
        seg: &MotionSegment,
        spec: &'a ConstraintSpec,
        model: &'a RobotModel,
        params: &ProjectionParams,
    ) -> Result<Self> {
        params.validate()?;
        check_dim(model.dof(), seg.dim())?;
        Ok(Self { spec, model, params: *params, tau_sm: params.resolve_tau_sm(seg), width: seg.width() })
    }

    pub fn tau_sm(&self) -> f64 {
        self.tau_sm
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn max_iters(&self) -> usize {
        self.params.max_iters
    }

    /// Whether worker `t` takes part in stage one.
    pub fn is_active(&self, t: usize, prog: usize) -> bool {
        t > prog && t < self.width
    }

    /// Stage one for worker `t`: reads `xi`, never writes it.
    pub fn worker_update(&self, t: usize, xi: &[Configuration]) -> Result<WorkerUpdate> {
        let current = &xi[t];
        let previous = &xi[t - 1];
        let (err_norm, task_step) = if self.spec.is_unconstrained() {
            (0.0, DVector::zeros(current.len()))
        } else {
            let (err, jac) = task_error_and_jacobian(self.spec, self.model, current)?;
            let step = damped_pinv_apply(&jac, &err.0, self.params.lambda)?;
            (err.norm(), step)
        };
        let gap = distance(current, previous);
        let smooth_err = (gap - self.tau_sm).max(0.0);
        let alpha = self.params.alpha;
        let next = Configuration(
            current
                .iter()
                .zip(previous.iter())
                .zip(task_step.iter())
                .map(|((c, p), g)| c - alpha * (g + (c - p) * smooth_err))
                .collect(),
        );
        let valid = err_norm < self.spec.tau_task && gap < self.tau_sm;
        Ok(WorkerUpdate { next, valid })
    }

    /// Stage two: advance `prog`, then either finish or commit `xi_new`
    /// above the frozen prefix. Returns `is_proj`.
    pub fn coordinate(&self, state: &mut TeamState) -> bool {
        let start = state.prog + 1;
        for j in start..self.width {
            if state.valid[j] {
                state.prog = j;
            } else if self.params.prefix_rule == PrefixRule::Contiguous {
                break;
            }
        }
        if state.prog == self.width - 1 {
            state.is_proj = true;
        } else {
            for t in state.prog + 1..self.width {
                state.xi[t] = state.xi_new[t].clone();
            }
        }
        state.is_proj
    }

    /// Post-hoc check of the success contract at waypoint `t`.
    pub fn waypoint_satisfies(&self, t: usize, xi: &[Configuration]) -> Result<bool> {
        let err = task_error(self.spec, &forward_kinematics(self.model, &xi[t])?.ee);
        let smooth = t == 0 || distance(&xi[t], &xi[t - 1]) < self.tau_sm;
        Ok(err.norm() < self.spec.tau_task && smooth)
    }

    /// Clamps a projected segment into the joint limits and re-checks it.
    pub fn finish(&self, mut xi: Vec<Configuration>, iterations: usize, prog: usize) -> Result<ProjectionOutcome> {
        let mut clamped = false;
        for w in xi.iter_mut().skip(1) {
            clamped |= self.model.clamp_to_limits(w);
        }
        if clamped {
            for t in 1..xi.len() {
                if !self.waypoint_satisfies(t, &xi)? {
                    return Ok(ProjectionOutcome::failed(FailureReason::JointLimits, iterations, prog, self.tau_sm));
                }
            }
        }
        Ok(ProjectionOutcome {
            status: ProjectionStatus::Projected,
            segment: Some(MotionSegment { waypoints: xi }),
            iterations_used: iterations,
            final_prog: prog,
            failure: None,
            tau_sm: self.tau_sm,
        })
    }

    pub fn failed(&self, prog: usize) -> ProjectionOutcome {
        ProjectionOutcome::failed(FailureReason::IterationLimit, self.params.max_iters, prog, self.tau_sm)
    }
}

/// Parallel projection, executed by the deterministic in-order schedule.
pub fn parallel_project(
    seg: &MotionSegment,
    spec: &ConstraintSpec,
    model: &RobotModel,
    params: &ProjectionParams,
) -> Result<ProjectionOutcome> {
    parallel_project_traced(seg, spec, model, params, &mut |_| {})
}

/// [`parallel_project`] that reports the team buffer after every iteration.
pub fn parallel_project_traced(
    seg: &MotionSegment,
    spec: &ConstraintSpec,
    model: &RobotModel,
    params: &ProjectionParams,
    observer: &mut dyn FnMut(&IterationTrace<'_>),
) -> Result<ProjectionOutcome> {
    let kernel = ProjectionKernel::new(seg, spec, model, params)?;
    let mut state = TeamState::new(seg);
    for iteration in 1..=kernel.max_iters() {
        for t in state.prog + 1..kernel.width() {
            let update = kernel.worker_update(t, &state.xi)?;
            state.xi_new[t] = update.next;
            state.valid[t] = update.valid;
        }
        kernel.coordinate(&mut state);
        observer(&IterationTrace {
            iteration,
            prog: state.prog,
            is_proj: state.is_proj,
            waypoints: &state.xi,
        });
        if state.is_proj {
            return kernel.finish(state.xi, iteration, state.prog);
        }
    }
    Ok(kernel.failed(state.prog))
}

/// Waypoint-by-waypoint projection.
///
/// In waypoint order, each waypoint is pushed from its straight-line
/// position onto the manifold with damped pseudoinverse steps, and is then
/// rejected if it lands `tau_sm` or farther from the previous waypoint.
/// `iterations_used` is the largest per-waypoint iteration count.
pub fn sequential_project(
    seg: &MotionSegment,
    spec: &ConstraintSpec,
    model: &RobotModel,
    params: &ProjectionParams,
) -> Result<ProjectionOutcome> {
    let kernel = ProjectionKernel::new(seg, spec, model, params)?;
    let tau_sm = kernel.tau_sm();
    let init = seg.waypoints();
    let mut xi: Vec<Configuration> = init.to_vec();
    let mut worst = 0;
    for t in 1..seg.width() {
        let mut q = init[t].clone();
        let mut used = 0;
        let mut converged = spec.is_unconstrained();
        while !converged && used < params.max_iters {
            let (err, jac) = task_error_and_jacobian(spec, model, &q)?;
            if err.norm() < spec.tau_task {
                converged = true;
                break;
            }
            let step = damped_pinv_apply(&jac, &err.0, params.lambda)?;
            q.iter_mut().zip(step.iter()).for_each(|(v, s)| *v -= params.alpha * s);
            used += 1;
        }
        if !converged {
            converged = task_error(spec, &forward_kinematics(model, &q)?.ee).norm() < spec.tau_task;
        }
        worst = worst.max(used);
        if !converged {
            return Ok(ProjectionOutcome::failed(FailureReason::IterationLimit, params.max_iters, t - 1, tau_sm));
        }
        if distance(&q, &xi[t - 1]) >= tau_sm {
            return Ok(ProjectionOutcome::failed(FailureReason::Discontinuity, worst, t - 1, tau_sm));
        }
        xi[t] = q;
    }
    let last = seg.width() - 1;
    kernel.finish(xi, worst.max(1), last)
}

/// Pulls a single configuration onto the manifold with full damped
/// Gauss-Newton steps, clamping to joint limits after each step.
/// Returns `None` if it does not converge within `max_iters`.
pub fn project_configuration(
    q: &Configuration,
    spec: &ConstraintSpec,
    model: &RobotModel,
    lambda: f64,
    max_iters: usize,
) -> Result<Option<Configuration>> {
    check_dim(model.dof(), q.len())?;
    let mut q = q.clone();
    model.clamp_to_limits(&mut q);
    for _ in 0..=max_iters {
        let (err, jac) = task_error_and_jacobian(spec, model, &q)?;
        if err.norm() < spec.tau_task {
            return Ok(Some(q));
        }
        let step = damped_pinv_apply(&jac, &err.0, lambda)?;
        q.iter_mut().zip(step.iter()).for_each(|(v, s)| *v -= s);
        model.clamp_to_limits(&mut q);
    }
    Ok(None)
}
