//! TOML formats for scenes, robots, problems and suites.
//!
//! Paths inside problem and suite files are resolved relative to the file
//! that mentions them.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rrtc_core::constraints::{task_error, ConstraintSpec, PositionConstraint, DEFAULT_ANGULAR_WEIGHT};
use rrtc_core::geometry::{Aabb, Scene, Sphere};
use rrtc_core::kinematics::{forward_kinematics, JointType, LinkSphere, RobotModel};
use rrtc_core::planner::{PlanParams, PlanProblem};
use rrtc_core::projection::{project_configuration, ProjectionParams, SmoothnessBound};
use rrtc_core::team::ProjectorMode;
use rrtc_core::validation::{validate_configuration, FlagMode};
use rrtc_core::Configuration;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    /// Syntax or schema error; the message carries line, column and key.
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error(transparent)]
    Invalid(#[from] rrtc_core::Error),
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Format { path: PathBuf, source: FormatError },
}

fn field(field: impl Into<String>, message: impl Into<String>) -> FormatError {
    FormatError::Field { field: field.into(), message: message.into() }
}

fn read(path: &Path) -> Result<String, LoadError> {
    fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.to_path_buf(), source })
}

fn at<T>(path: &Path, r: Result<T, FormatError>) -> Result<T, LoadError> {
    r.map_err(|source| LoadError::Format { path: path.to_path_buf(), source })
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    base.parent().unwrap_or(Path::new(".")).join(rel)
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

// ---------------------------------------------------------------- scenes

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxEntry {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereEntry {
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub name: String,
    #[serde(default)]
    pub boxes: Vec<BoxEntry>,
    #[serde(default)]
    pub spheres: Vec<SphereEntry>,
}

impl SceneFile {
    pub fn into_scene(self) -> Result<Scene, FormatError> {
        let scene = Scene {
            name: self.name,
            boxes: self.boxes.iter().map(|b| Aabb { min: v3(b.min), max: v3(b.max) }).collect(),
            spheres: self.spheres.iter().map(|s| Sphere { center: v3(s.center), radius: s.radius }).collect(),
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn from_scene(scene: &Scene) -> Self {
        let a = |v: &Vector3<f64>| [v.x, v.y, v.z];
        Self {
            name: scene.name.clone(),
            boxes: scene.boxes.iter().map(|b| BoxEntry { min: a(&b.min), max: a(&b.max) }).collect(),
            spheres: scene.spheres.iter().map(|s| SphereEntry { center: a(&s.center), radius: s.radius }).collect(),
        }
    }
}

pub fn parse_scene(text: &str) -> Result<Scene, FormatError> {
    toml::from_str::<SceneFile>(text)?.into_scene()
}

pub fn load_scene(path: &Path) -> Result<Scene, LoadError> {
    at(path, parse_scene(&read(path)?))
}

// ---------------------------------------------------------------- robots

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    #[serde(default)]
    pub xyz: [f64; 3],
    /// Fixed-axis roll, pitch, yaw.
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl Pose {
    pub fn isometry(&self) -> Isometry3<f64> {
        let [r, p, y] = self.rpy;
        Isometry3::from_parts(Translation3::from(v3(self.xyz)), UnitQuaternion::from_euler_angles(r, p, y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointEntry {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(rename = "type")]
    pub kind: JointKind,
    pub axis: [f64; 3],
    #[serde(default)]
    pub origin: Pose,
    pub limits: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSphereEntry {
    pub link: usize,
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotFile {
    pub name: String,
    pub ee_link: usize,
    #[serde(default)]
    pub ee_offset: Pose,
    #[serde(default)]
    pub self_collision_pairs: Vec<[usize; 2]>,
    pub joints: Vec<JointEntry>,
    #[serde(default)]
    pub link_spheres: Vec<LinkSphereEntry>,
}

impl RobotFile {
    pub fn into_model(self) -> Result<RobotModel, FormatError> {
        let joints = self
            .joints
            .iter()
            .map(|j| {
                let kind = match j.kind {
                    JointKind::Revolute => JointType::Revolute,
                    JointKind::Prismatic => JointType::Prismatic,
                };
                (kind, v3(j.axis), j.origin.isometry(), j.limits)
            })
            .collect();
        let spheres = self
            .link_spheres
            .iter()
            .map(|s| LinkSphere { link: s.link, center: v3(s.center), radius: s.radius })
            .collect();
        let pairs = self.self_collision_pairs.iter().map(|p| (p[0], p[1])).collect();
        Ok(RobotModel::new(&self.name, joints, spheres, self.ee_link, self.ee_offset.isometry(), pairs)?)
    }
}

pub fn parse_robot(text: &str) -> Result<RobotModel, FormatError> {
    toml::from_str::<RobotFile>(text)?.into_model()
}

pub fn load_robot(path: &Path) -> Result<RobotModel, LoadError> {
    at(path, parse_robot(&read(path)?))
}

// ---------------------------------------------------------------- constraints and params

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Plane,
    Line,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintBlock {
    pub kind: ConstraintKind,
    pub normal: Option<[f64; 3]>,
    pub offset: Option<f64>,
    pub point: Option<[f64; 3]>,
    pub direction: Option<[f64; 3]>,
    /// Quaternion as `[w, x, y, z]`.
    pub fixed_orientation: Option<[f64; 4]>,
    pub angular_weight: Option<f64>,
    pub tau_task: Option<f64>,
}

impl ConstraintBlock {
    pub fn to_spec(&self) -> Result<ConstraintSpec, FormatError> {
        let need3 = |v: Option<[f64; 3]>, name: &str| {
            v.map(v3).ok_or_else(|| field(format!("constraint.{name}"), "required for this kind"))
        };
        let tau = self.tau_task.unwrap_or(1e-3);
        let position = match self.kind {
            ConstraintKind::None => {
                if self.fixed_orientation.is_some() {
                    return Err(field("constraint.fixed_orientation", "not allowed with kind none"));
                }
                return Ok(ConstraintSpec::unconstrained());
            }
            ConstraintKind::Plane => PositionConstraint::Plane {
                normal: need3(self.normal, "normal")?,
                offset: self.offset.ok_or_else(|| field("constraint.offset", "required for this kind"))?,
            },
            ConstraintKind::Line => PositionConstraint::Line {
                point: need3(self.point, "point")?,
                direction: need3(self.direction, "direction")?,
            },
        };
        let spec = ConstraintSpec::new(position, None, tau)?;
        match self.fixed_orientation {
            None => Ok(spec),
            Some([w, x, y, z]) => {
                let q = Quaternion::new(w, x, y, z);
                if !(q.norm() > 1e-9) {
                    return Err(field("constraint.fixed_orientation", "zero quaternion"));
                }
                let weight = self.angular_weight.unwrap_or(DEFAULT_ANGULAR_WEIGHT);
                Ok(spec.with_orientation(UnitQuaternion::from_quaternion(q), weight)?)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionBlock {
    /// Absolute smoothness bound (rad).
    pub tau_sm: Option<f64>,
    /// Smoothness bound as a multiple of the uniform waypoint gap.
    pub tau_sm_gap_multiple: Option<f64>,
    pub alpha: Option<f64>,
    pub max_iters: Option<usize>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsBlock {
    pub step_size: Option<f64>,
    pub width: Option<usize>,
    pub max_iterations: Option<usize>,
    pub time_budget_ms: Option<f64>,
    pub connect_tolerance: Option<f64>,
    pub connect_min_progress: Option<f64>,
    #[serde(default)]
    pub projection: ProjectionBlock,
}

impl ParamsBlock {
    pub fn to_params(&self) -> Result<PlanParams, FormatError> {
        let d = PlanParams::default();
        let pd = ProjectionParams::default();
        let p = &self.projection;
        let tau_sm = match (p.tau_sm, p.tau_sm_gap_multiple) {
            (Some(_), Some(_)) => {
                return Err(field("params.projection", "set only one of tau_sm and tau_sm_gap_multiple"))
            }
            (Some(v), None) => SmoothnessBound::Absolute(v),
            (None, Some(m)) => SmoothnessBound::GapMultiple(m),
            (None, None) => pd.tau_sm,
        };
        let projection = ProjectionParams {
            tau_sm,
            alpha: p.alpha.unwrap_or(pd.alpha),
            max_iters: p.max_iters.unwrap_or(pd.max_iters),
            lambda: p.lambda.unwrap_or(pd.lambda),
            prefix_rule: pd.prefix_rule,
        };
        projection.validate()?;
        Ok(PlanParams {
            step_size: self.step_size.unwrap_or(d.step_size),
            width: self.width.unwrap_or(d.width),
            projection,
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            time_budget_ms: self.time_budget_ms.unwrap_or(d.time_budget_ms),
            connect_tolerance: self.connect_tolerance.or(d.connect_tolerance),
            connect_min_progress: self.connect_min_progress.unwrap_or(d.connect_min_progress),
            ..d
        })
    }
}

// ---------------------------------------------------------------- problems

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub id: Option<String>,
    pub robot: String,
    pub scene: String,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    pub constraint: ConstraintBlock,
    #[serde(default)]
    pub params: ParamsBlock,
}

/// A problem with a stable identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedProblem {
    pub id: String,
    pub problem: PlanProblem,
}

pub fn load_problem(path: &Path) -> Result<NamedProblem, LoadError> {
    let file: ProblemFile = at(path, toml::from_str(&read(path)?).map_err(FormatError::from))?;
    let model = load_robot(&resolve(path, &file.robot))?;
    let scene = load_scene(&resolve(path, &file.scene))?;
    let spec = at(path, file.constraint.to_spec())?;
    let params = at(path, file.params.to_params())?;
    let id = file.id.clone().unwrap_or_else(|| stem(path));
    let problem = PlanProblem {
        model,
        scene,
        spec,
        start: Configuration(file.start),
        goal: Configuration(file.goal),
        params,
    };
    at(path, problem.validate().map_err(FormatError::from))?;
    Ok(NamedProblem { id, problem })
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

// ---------------------------------------------------------------- suites

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorBlock {
    pub id: String,
    pub robot: String,
    pub scene: String,
    pub constraint: ConstraintBlock,
    #[serde(default)]
    pub params: ParamsBlock,
    pub count: usize,
    pub seed: u64,
    /// Minimum joint-space distance between start and goal.
    #[serde(default)]
    pub min_separation: f64,
    /// Box the start end-effector position must lie in.
    pub start_region: Option<BoxEntry>,
    pub goal_region: Option<BoxEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteFile {
    pub name: String,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub seed_offset: u64,
    #[serde(default = "default_densify")]
    pub densify: Vec<usize>,
    #[serde(default = "default_projection")]
    pub projection: Vec<String>,
    #[serde(default = "default_cc_flag")]
    pub cc_flag: Vec<String>,
    #[serde(default)]
    pub problems: Vec<String>,
    #[serde(default)]
    pub generators: Vec<GeneratorBlock>,
}

fn one() -> usize {
    1
}

fn default_densify() -> Vec<usize> {
    vec![1]
}

fn default_projection() -> Vec<String> {
    vec!["parallel".into()]
}

fn default_cc_flag() -> Vec<String> {
    vec!["on".into()]
}

pub fn parse_projector(s: &str) -> Result<ProjectorMode, FormatError> {
    match s {
        "parallel" => Ok(ProjectorMode::Parallel),
        "naive" => Ok(ProjectorMode::Naive),
        "literal-gap" => Ok(ProjectorMode::LiteralGap),
        other => Err(field("projection", format!("unknown projector `{other}`"))),
    }
}

pub fn parse_flag(s: &str) -> Result<FlagMode, FormatError> {
    match s {
        "on" => Ok(FlagMode::On),
        "off" => Ok(FlagMode::Off),
        other => Err(field("cc_flag", format!("expected on or off, got `{other}`"))),
    }
}

pub fn flag_str(f: FlagMode) -> &'static str {
    match f {
        FlagMode::On => "on",
        FlagMode::Off => "off",
    }
}

/// A suite entry: either a ready problem or the reason it could not be built.
#[derive(Debug, Clone)]
pub enum SuiteProblem {
    Ready(NamedProblem),
    Failed { id: String, error: String },
}

impl SuiteProblem {
    pub fn id(&self) -> &str {
        match self {
            SuiteProblem::Ready(p) => &p.id,
            SuiteProblem::Failed { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchSuite {
    pub name: String,
    pub problems: Vec<SuiteProblem>,
    pub trials: usize,
    /// Trial `k` plans with seed offset `seed_offset + k * TRIAL_SEED_STRIDE`.
    pub seed_offset: u64,
    pub densify: Vec<usize>,
    pub projection: Vec<ProjectorMode>,
    pub cc_flag: Vec<FlagMode>,
}

/// Loads a suite. Problems that fail to load or generate are kept as
/// [`SuiteProblem::Failed`] so the run can record them and continue.
pub fn load_suite(path: &Path) -> Result<BenchSuite, LoadError> {
    let file: SuiteFile = at(path, toml::from_str(&read(path)?).map_err(FormatError::from))?;
    if file.trials == 0 {
        return Err(LoadError::Format { path: path.into(), source: field("trials", "must be at least 1") });
    }
    if file.densify.contains(&0) {
        return Err(LoadError::Format { path: path.into(), source: field("densify", "factors must be positive") });
    }
    let projection = at(path, file.projection.iter().map(|s| parse_projector(s)).collect())?;
    let cc_flag = at(path, file.cc_flag.iter().map(|s| parse_flag(s)).collect())?;
    let mut problems = Vec::new();
    for rel in &file.problems {
        let p = resolve(path, rel);
        problems.push(match load_problem(&p) {
            Ok(named) => SuiteProblem::Ready(named),
            Err(e) => SuiteProblem::Failed { id: stem(&p), error: e.to_string() },
        });
    }
    for g in &file.generators {
        match generate(path, g) {
            Ok(list) => problems.extend(list.into_iter().map(SuiteProblem::Ready)),
            Err(e) => problems.push(SuiteProblem::Failed { id: g.id.clone(), error: e.to_string() }),
        }
    }
    Ok(BenchSuite {
        name: file.name,
        problems,
        trials: file.trials,
        seed_offset: file.seed_offset,
        densify: file.densify,
        projection,
        cc_flag,
    })
}

const GENERATOR_ATTEMPTS: usize = 20_000;

/// Draws a valid configuration: in limits, on the manifold and collision-free.
pub fn sample_valid_configuration(
    rng: &mut ChaCha8Rng,
    model: &RobotModel,
    scene: &Scene,
    spec: &ConstraintSpec,
    region: Option<&Aabb>,
) -> Result<Option<Configuration>, rrtc_core::Error> {
    let limits = model.limits();
    for _ in 0..GENERATOR_ATTEMPTS {
        let raw = Configuration(limits.iter().map(|[lo, hi]| rng.gen_range(*lo..*hi)).collect());
        let q = if spec.is_unconstrained() {
            raw
        } else {
            match project_configuration(&raw, spec, model, 1e-6, 100)? {
                Some(q) => q,
                None => continue,
            }
        };
        let frames = forward_kinematics(model, &q)?;
        let on_manifold = task_error(spec, &frames.ee).norm() < spec.tau_task;
        let in_region = region.is_none_or(|r| r.contains(&frames.ee_position()));
        if in_region && model.within_limits(&q) && on_manifold && validate_configuration(&q, scene, model)? {
            return Ok(Some(q));
        }
    }
    Ok(None)
}

/// Expands a generator into `count` problems with seeded start/goal pairs.
pub fn generate(suite_path: &Path, g: &GeneratorBlock) -> Result<Vec<NamedProblem>, LoadError> {
    let model = load_robot(&resolve(suite_path, &g.robot))?;
    let scene = load_scene(&resolve(suite_path, &g.scene))?;
    let spec = at(suite_path, g.constraint.to_spec())?;
    let params = at(suite_path, g.params.to_params())?;
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let mut out = Vec::with_capacity(g.count);
    let fail = |m: String| LoadError::Format { path: suite_path.into(), source: field(format!("generators.{}", g.id), m) };
    let region = |b: &Option<BoxEntry>, name: &str| -> Result<Option<Aabb>, LoadError> {
        b.as_ref()
            .map(|b| {
                let r = Aabb { min: v3(b.min), max: v3(b.max) };
                r.validate(&format!("generators.{}.{name}", g.id)).map(|_| r)
            })
            .transpose()
            .map_err(|e| fail(e.to_string()))
    };
    let start_region = region(&g.start_region, "start_region")?;
    let goal_region = region(&g.goal_region, "goal_region")?;
    for i in 0..g.count {
        let draw = |rng: &mut ChaCha8Rng, region: Option<&Aabb>| -> Result<Configuration, LoadError> {
            sample_valid_configuration(rng, &model, &scene, &spec, region)
                .map_err(|e| fail(e.to_string()))?
                .ok_or_else(|| fail("no valid configuration found".into()))
        };
        let start = draw(&mut rng, start_region.as_ref())?;
        let mut goal = draw(&mut rng, goal_region.as_ref())?;
        let mut tries = 0;
        while start.distance(&goal) < g.min_separation {
            tries += 1;
            if tries > 1000 {
                return Err(fail("could not meet min_separation".into()));
            }
            goal = draw(&mut rng, goal_region.as_ref())?;
        }
        out.push(NamedProblem {
            id: format!("{}_{i:03}", g.id),
            problem: PlanProblem { model: model.clone(), scene: scene.clone(), spec: spec.clone(), start, goal, params },
        });
    }
    Ok(out)
}
