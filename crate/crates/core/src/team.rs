//! Execution backends for the per-segment worker team.

use crate::constraints::ConstraintSpec;
use crate::error::Result;
use crate::geometry::Scene;
use crate::kinematics::RobotModel;
use crate::projection::{
    parallel_project, sequential_project, MotionSegment, PrefixRule, ProjectionOutcome, ProjectionParams,
};
use crate::validation::{validate_motion, FlagMode, ValidationReport};

/// Which projector an extension uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectorMode {
    /// Parallel projection with a contiguous frozen prefix.
    #[default]
    Parallel,
    /// Sequential waypoint-by-waypoint projection.
    Naive,
    /// Parallel projection whose prefix may jump over invalid waypoints.
    LiteralGap,
}

impl ProjectorMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProjectorMode::Parallel => "parallel",
            ProjectorMode::Naive => "naive",
            ProjectorMode::LiteralGap => "literal-gap",
        }
    }
}

/// Runs projection and validation for one motion segment.
///
/// Implementations must give results identical to [`SequentialTeam`]; they
/// may only differ in how the work is scheduled.
pub trait WorkerTeam: Sync {
    fn project(
        &self,
        seg: &MotionSegment,
        spec: &ConstraintSpec,
        model: &RobotModel,
        params: &ProjectionParams,
        mode: ProjectorMode,
    ) -> Result<ProjectionOutcome>;

    fn validate(
        &self,
        seg: &MotionSegment,
        scene: &Scene,
        model: &RobotModel,
        flag: FlagMode,
    ) -> Result<ValidationReport>;
}

/// Single-threaded reference team executing workers in index order.
#[derive(Debug, Clone, Copy, Default)]
pub struct SequentialTeam;

/// Projection parameters with the prefix rule implied by `mode`.
pub fn params_for_mode(params: &ProjectionParams, mode: ProjectorMode) -> ProjectionParams {
    let prefix_rule = match mode {
        ProjectorMode::LiteralGap => PrefixRule::LiteralGap,
        _ => PrefixRule::Contiguous,
    };
    ProjectionParams { prefix_rule, ..*params }
}

impl WorkerTeam for SequentialTeam {
    fn project(
        &self,
        seg: &MotionSegment,
        spec: &ConstraintSpec,
        model: &RobotModel,
        params: &ProjectionParams,
        mode: ProjectorMode,
    ) -> Result<ProjectionOutcome> {
        let params = params_for_mode(params, mode);
        match mode {
            ProjectorMode::Naive => sequential_project(seg, spec, model, &params),
            _ => parallel_project(seg, spec, model, &params),
        }
    }

    fn validate(
        &self,
        seg: &MotionSegment,
        scene: &Scene,
        model: &RobotModel,
        flag: FlagMode,
    ) -> Result<ValidationReport> {
        validate_motion(seg, scene, model, flag)
    }
}
