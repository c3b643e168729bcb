//! Constrained bidirectional RRT-Connect.
//!
//! Every tree edge is produced by the same pipeline: steer toward a target,
//! interpolate a fixed-width segment, project it, validate it, and append the
//! projected endpoint with the steering origin as parent. Only endpoints are
//! stored; an edge is re-derived from `(parent, target)` because projection
//! is deterministic.

use alloc::format;
use alloc::vec::Vec;

use crate::constraints::{task_error, ConstraintSpec};
use crate::error::{check_dim, Error, Result};
use crate::geometry::Scene;
use crate::kinematics::{forward_kinematics, Configuration, RobotModel};
use crate::math::{distance, norm};
use crate::projection::{interpolate_segment, MotionSegment, ProjectionParams};
use crate::sampling::HaltonState;
use crate::team::{ProjectorMode, WorkerTeam};
use crate::validation::{validate_configuration, FlagMode, ValidationReport};

/// Upper bound on segments in one connect attempt.
const MAX_CONNECT_STEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootKind {
    Start,
    Goal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub q: Configuration,
    /// Index of the parent node; the root is its own parent.
    pub parent: usize,
    /// Steering target the edge from `parent` was interpolated toward.
    pub target: Option<Configuration>,
}

/// Append-only search tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    root_kind: RootKind,
}

impl Tree {
    pub fn new(root: Configuration, root_kind: RootKind) -> Self {
        Self { nodes: alloc::vec![Node { q: root, parent: 0, target: None }], root_kind }
    }

    pub fn root_kind(&self) -> RootKind {
        self.root_kind
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> &Node {
        &self.nodes[index]
    }

    /// Appends a node; `parent` must already exist.
    pub fn push(&mut self, q: Configuration, parent: usize, target: Configuration) -> Result<usize> {
        if parent >= self.nodes.len() {
            return Err(Error::IndexOutOfRange { index: parent, len: self.nodes.len() });
        }
        self.nodes.push(Node { q, parent, target: Some(target) });
        Ok(self.nodes.len() - 1)
    }

    /// Node indices from the root down to `index`.
    pub fn root_path(&self, index: usize) -> Result<Vec<usize>> {
        if index >= self.nodes.len() {
            return Err(Error::IndexOutOfRange { index, len: self.nodes.len() });
        }
        let mut path = alloc::vec![index];
        let mut current = index;
        while current != 0 {
            current = self.nodes[current].parent;
            path.push(current);
        }
        path.reverse();
        Ok(path)
    }
}

/// Index of the node closest to `q` in joint space, lowest index on ties.
pub fn nearest(tree: &Tree, q: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, node) in tree.nodes.iter().enumerate() {
        let d = distance(&node.q, q);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Moves from `q_near` toward `q_rand` by at most `step`.
pub fn steer(q_near: &Configuration, q_rand: &Configuration, step: f64) -> Configuration {
    let d = q_near.distance(q_rand);
    if d <= step {
        return q_rand.clone();
    }
    let scale = step / d;
    Configuration(q_near.iter().zip(q_rand.iter()).map(|(a, b)| a + scale * (b - a)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanParams {
    /// Maximum joint-space length of one segment (rad).
    pub step_size: f64,
    /// Waypoints per segment (worker-team width).
    pub width: usize,
    pub projection: ProjectionParams,
    pub projector: ProjectorMode,
    pub cc_flag: FlagMode,
    pub max_iterations: usize,
    /// Wall-clock budget; only enforced when the clock reports time.
    pub time_budget_ms: f64,
    /// Distance at which connect declares the trees joined. Defaults to
    /// `step_size / 10` when `None`.
    pub connect_tolerance: Option<f64>,
    /// A connect step must shorten the distance to the target by at least
    /// this fraction of `min(step_size, distance)`.
    pub connect_min_progress: f64,
    pub seed_offset: u64,
}

impl Default for PlanParams {
    fn default() -> Self {
        Self {
            step_size: 0.5,
            width: 32,
            projection: ProjectionParams::default(),
            projector: ProjectorMode::Parallel,
            cc_flag: FlagMode::On,
            max_iterations: 10_000,
            time_budget_ms: 10_000.0,
            connect_tolerance: None,
            connect_min_progress: 0.1,
            seed_offset: 0,
        }
    }
}

impl PlanParams {
    pub fn connect_tolerance(&self) -> f64 {
        self.connect_tolerance.unwrap_or(self.step_size / 10.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanProblem {
    pub model: RobotModel,
    pub scene: Scene,
    pub spec: ConstraintSpec,
    pub start: Configuration,
    pub goal: Configuration,
    pub params: PlanParams,
}

impl PlanProblem {
    /// Checks that start and goal are in limits, on the manifold and
    /// collision-free, and that the parameters are usable.
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if !(p.step_size > 0.0) || p.width < 2 || p.max_iterations == 0 || !(p.connect_tolerance() > 0.0) {
            return Err(Error::InvalidProblem("step_size, width, max_iterations and connect tolerance must be positive".into()));
        }
        if !(0.0..1.0).contains(&p.connect_min_progress) {
            return Err(Error::InvalidProblem("connect_min_progress must lie in [0, 1)".into()));
        }
        p.projection.validate()?;
        for (name, q) in [("start", &self.start), ("goal", &self.goal)] {
            check_dim(self.model.dof(), q.len())?;
            if !self.model.within_limits(q) {
                return Err(Error::InvalidProblem(format!("{name} violates joint limits")));
            }
            let err = task_error(&self.spec, &forward_kinematics(&self.model, q)?.ee).norm();
            if !(err < self.spec.tau_task) {
                return Err(Error::InvalidProblem(format!("{name} is off the constraint manifold (error {err})")));
            }
            if !validate_configuration(q, &self.scene, &self.model)? {
                return Err(Error::InvalidProblem(format!("{name} is in collision")));
            }
        }
        Ok(())
    }
}

/// Collision-check work accumulated over validations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CheckCounters {
    pub validations: u64,
    pub colliding_validations: u64,
    pub performed: u64,
    pub possible: u64,
    /// Work spent on validations that found a collision.
    pub colliding_performed: u64,
    pub colliding_possible: u64,
}

impl CheckCounters {
    pub fn record(&mut self, report: &ValidationReport) {
        self.validations += 1;
        self.performed += report.primitive_checks_performed;
        self.possible += report.primitive_checks_possible;
        if !report.valid {
            self.colliding_validations += 1;
            self.colliding_performed += report.primitive_checks_performed;
            self.colliding_possible += report.primitive_checks_possible;
        }
    }

    pub fn merge(&mut self, other: &CheckCounters) {
        self.validations += other.validations;
        self.colliding_validations += other.colliding_validations;
        self.performed += other.performed;
        self.possible += other.possible;
        self.colliding_performed += other.colliding_performed;
        self.colliding_possible += other.colliding_possible;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanStats {
    pub iterations: usize,
    pub projection_failures: u64,
    pub collision_rejections: u64,
    pub cc: CheckCounters,
    pub wall_ms: f64,
}

impl PlanStats {
    pub fn merge(&mut self, other: &PlanStats) {
        self.projection_failures += other.projection_failures;
        self.collision_rejections += other.collision_rejections;
        self.cc.merge(&other.cc);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanStatus {
    Solved,
    TimedOut,
    IterLimit,
}

impl PlanStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            PlanStatus::Solved => "solved",
            PlanStatus::TimedOut => "timed_out",
            PlanStatus::IterLimit => "iter_limit",
        }
    }
}

/// How consecutive path configurations are connected.
#[derive(Debug, Clone, PartialEq)]
pub enum PathEdge {
    /// A tree edge: `child` is the end of the projected segment interpolated
    /// from `parent` toward `target`.
    Tree { parent: Configuration, target: Configuration, child: Configuration },
    /// The straight segment joining the two trees; it was accepted
    /// unchanged by the projector.
    Bridge { from: Configuration, to: Configuration },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub status: PlanStatus,
    pub path: Vec<Configuration>,
    /// `edges[i]` joins `path[i]` and `path[i + 1]`.
    pub edges: Vec<PathEdge>,
    pub stats: PlanStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    NoProgress,
    Projection,
    Collision,
}

/// Outcome of one steer-project-validate step computed without touching the tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Attempt {
    Success { parent: usize, target: Configuration, end: Configuration },
    Rejected(RejectReason),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExtendOutcome {
    Added(usize),
    Rejected(RejectReason),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConnectOutcome {
    /// The tree reached the target; the index is the node that meets it.
    Reached(usize),
    /// One accepted segment; reported by [`connect_step`].
    Advanced(usize),
    /// Connect stopped after adding `advanced` nodes.
    Trapped { advanced: usize },
}

/// Monotonic time source for the planner's time budget.
pub trait Clock {
    fn elapsed_ms(&self) -> f64;
}

/// Clock that never advances: time budgets are never hit.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn elapsed_ms(&self) -> f64 {
        0.0
    }
}

/// Problem, team and running statistics shared by extend and connect.
pub struct ExtensionContext<'a> {
    pub problem: &'a PlanProblem,
    pub team: &'a dyn WorkerTeam,
    pub stats: PlanStats,
}

impl<'a> ExtensionContext<'a> {
    pub fn new(problem: &'a PlanProblem, team: &'a dyn WorkerTeam) -> Self {
        Self { problem, team, stats: PlanStats::default() }
    }

    /// Projects and validates the segment from `from` toward `target`
    /// (already steered). Returns the projected end or a rejection, plus the
    /// work it cost.
    pub fn derive_edge(&self, from: &Configuration, target: &Configuration) -> Result<(Option<MotionSegment>, PlanStats)> {
        let p = self.problem;
        let mut stats = PlanStats::default();
        let seg = interpolate_segment(from, target, p.params.width)?;
        let out = self.team.project(&seg, &p.spec, &p.model, &p.params.projection, p.params.projector)?;
        let Some(projected) = out.segment else {
            stats.projection_failures += 1;
            return Ok((None, stats));
        };
        let report = self.team.validate(&projected, &p.scene, &p.model, p.params.cc_flag)?;
        stats.cc.record(&report);
        if !report.valid {
            stats.collision_rejections += 1;
            return Ok((None, stats));
        }
        Ok((Some(projected), stats))
    }

    /// Read-only extension attempt from node `from` toward `toward`.
    pub fn attempt_from(&self, tree: &Tree, from: usize, toward: &Configuration) -> Result<(Attempt, PlanStats)> {
        let q_from = &tree.node(from).q;
        let target = steer(q_from, toward, self.problem.params.step_size);
        if norm(&target.iter().zip(q_from.iter()).map(|(a, b)| a - b).collect::<Vec<_>>()) == 0.0 {
            return Ok((Attempt::Rejected(RejectReason::NoProgress), PlanStats::default()));
        }
        let (segment, stats) = self.derive_edge(q_from, &target)?;
        let attempt = match segment {
            Some(seg) => Attempt::Success { parent: from, target, end: seg.end().clone() },
            None if stats.projection_failures > 0 => Attempt::Rejected(RejectReason::Projection),
            None => Attempt::Rejected(RejectReason::Collision),
        };
        Ok((attempt, stats))
    }

    fn commit(&mut self, tree: &mut Tree, attempt: Attempt, stats: PlanStats) -> Result<ExtendOutcome> {
        self.stats.merge(&stats);
        match attempt {
            Attempt::Success { parent, target, end } => Ok(ExtendOutcome::Added(tree.push(end, parent, target)?)),
            Attempt::Rejected(r) => Ok(ExtendOutcome::Rejected(r)),
        }
    }
}

/// Read-only version of [`extend`], safe to run concurrently on a shared tree.
pub fn try_extend(tree: &Tree, q_rand: &Configuration, ctx: &ExtensionContext<'_>) -> Result<(Attempt, PlanStats)> {
    ctx.attempt_from(tree, nearest(tree, q_rand), q_rand)
}

/// Extends `tree` one segment toward `q_rand`.
pub fn extend(tree: &mut Tree, q_rand: &Configuration, ctx: &mut ExtensionContext<'_>) -> Result<ExtendOutcome> {
    let (attempt, stats) = try_extend(tree, q_rand, ctx)?;
    ctx.commit(tree, attempt, stats)
}

/// Commits an attempt computed by [`try_extend`].
pub fn commit_attempt(tree: &mut Tree, attempt: Attempt, stats: PlanStats, ctx: &mut ExtensionContext<'_>) -> Result<ExtendOutcome> {
    ctx.commit(tree, attempt, stats)
}

/// One connect segment from node `current` toward `q_target`. Accepted only
/// if the projected end is closer to the target than `current` by at least
/// `connect_min_progress * min(step_size, distance)`.
pub fn connect_step(
    tree: &mut Tree,
    current: usize,
    q_target: &Configuration,
    ctx: &mut ExtensionContext<'_>,
) -> Result<ConnectOutcome> {
    let params = &ctx.problem.params;
    let before = tree.node(current).q.distance(q_target);
    let required = params.connect_min_progress * before.min(params.step_size);
    let (attempt, stats) = ctx.attempt_from(tree, current, q_target)?;
    ctx.stats.merge(&stats);
    match attempt {
        Attempt::Success { parent, target, end } if end.distance(q_target) < before - required => {
            Ok(ConnectOutcome::Advanced(tree.push(end, parent, target)?))
        }
        _ => Ok(ConnectOutcome::Trapped { advanced: 0 }),
    }
}

/// Whether the straight segment `from → to` is accepted unchanged by the
/// projector and is collision-free.
pub fn bridge_is_valid(from: &Configuration, to: &Configuration, ctx: &mut ExtensionContext<'_>) -> Result<bool> {
    if from == to {
        return Ok(true);
    }
    let p = ctx.problem;
    let seg = interpolate_segment(from, to, p.params.width)?;
    let out = ctx.team.project(&seg, &p.spec, &p.model, &p.params.projection, p.params.projector)?;
    if out.segment.as_ref() != Some(&seg) {
        return Ok(false);
    }
    let report = ctx.team.validate(&seg, &p.scene, &p.model, p.params.cc_flag)?;
    ctx.stats.cc.record(&report);
    Ok(report.valid)
}

/// Greedily extends `tree` toward `q_target` until it is within the connect
/// tolerance (and the bridge to it is valid), a segment is rejected, or a
/// segment fails to reduce the distance.
pub fn connect(tree: &mut Tree, q_target: &Configuration, ctx: &mut ExtensionContext<'_>) -> Result<ConnectOutcome> {
    let tolerance = ctx.problem.params.connect_tolerance();
    let mut current = nearest(tree, q_target);
    let mut advanced = 0;
    for _ in 0..MAX_CONNECT_STEPS {
        if tree.node(current).q.distance(q_target) <= tolerance {
            let from = tree.node(current).q.clone();
            return if bridge_is_valid(&from, q_target, ctx)? {
                Ok(ConnectOutcome::Reached(current))
            } else {
                Ok(ConnectOutcome::Trapped { advanced })
            };
        }
        match connect_step(tree, current, q_target, ctx)? {
            ConnectOutcome::Advanced(node) => {
                current = node;
                advanced += 1;
            }
            _ => return Ok(ConnectOutcome::Trapped { advanced }),
        }
    }
    Ok(ConnectOutcome::Trapped { advanced })
}

/// Start-tree root path to `meet_start`, followed by the goal-tree path from
/// `meet_goal` back to its root. The meeting configuration appears once when
/// both meet nodes are identical.
pub fn extract_path(start_tree: &Tree, goal_tree: &Tree, meet_start: usize, meet_goal: usize) -> Result<Vec<Configuration>> {
    Ok(extract_path_with_edges(start_tree, goal_tree, meet_start, meet_goal, false)?.0)
}

/// [`extract_path`] plus the edge joining each consecutive pair. The bridge
/// between the two meet nodes is recorded in the direction it was checked:
/// from the goal-side meet when `bridge_from_goal` is set.
pub fn extract_path_with_edges(
    start_tree: &Tree,
    goal_tree: &Tree,
    meet_start: usize,
    meet_goal: usize,
    bridge_from_goal: bool,
) -> Result<(Vec<Configuration>, Vec<PathEdge>)> {
    let front = start_tree.root_path(meet_start)?;
    goal_tree.root_path(meet_goal)?;
    let mut path: Vec<Configuration> = Vec::with_capacity(front.len() * 2);
    let mut edges = Vec::with_capacity(front.len() * 2);
    for (k, &i) in front.iter().enumerate() {
        let node = start_tree.node(i);
        if k > 0 {
            edges.push(tree_edge(start_tree, i));
        }
        path.push(node.q.clone());
    }
    let meet = &goal_tree.node(meet_goal).q;
    if path.last() != Some(meet) {
        let near = path.last().expect("non-empty").clone();
        edges.push(if bridge_from_goal {
            PathEdge::Bridge { from: meet.clone(), to: near }
        } else {
            PathEdge::Bridge { from: near, to: meet.clone() }
        });
        path.push(meet.clone());
    }
    let mut k = meet_goal;
    while k != 0 {
        edges.push(tree_edge(goal_tree, k));
        k = goal_tree.node(k).parent;
        path.push(goal_tree.node(k).q.clone());
    }
    Ok((path, edges))
}

fn tree_edge(tree: &Tree, index: usize) -> PathEdge {
    let node = tree.node(index);
    PathEdge::Tree {
        parent: tree.node(node.parent).q.clone(),
        target: node.target.clone().expect("non-root node has a target"),
        child: node.q.clone(),
    }
}

/// Plans from `problem.start` to `problem.goal`.
///
/// Trees swap roles every iteration: the active tree extends toward a Halton
/// sample and, on success, the other tree greedily connects to the new node.
pub fn plan(problem: &PlanProblem, team: &dyn WorkerTeam, clock: &dyn Clock) -> Result<PlanResult> {
    problem.validate()?;
    let params = &problem.params;
    if problem.start == problem.goal {
        return Ok(PlanResult {
            status: PlanStatus::Solved,
            path: alloc::vec![problem.start.clone()],
            edges: Vec::new(),
            stats: PlanStats { wall_ms: clock.elapsed_ms(), ..Default::default() },
        });
    }
    let limits = problem.model.limits();
    let mut sampler = HaltonState::new(problem.model.dof(), params.seed_offset);
    let mut trees = [Tree::new(problem.start.clone(), RootKind::Start), Tree::new(problem.goal.clone(), RootKind::Goal)];
    let mut ctx = ExtensionContext::new(problem, team);
    let mut status = PlanStatus::IterLimit;
    let mut meeting = None;
    for iteration in 1..=params.max_iterations {
        if clock.elapsed_ms() > params.time_budget_ms {
            status = PlanStatus::TimedOut;
            break;
        }
        ctx.stats.iterations = iteration;
        let q_rand = sampler.next_sample(&limits);
        let active = (iteration - 1) % 2;
        let (a, b) = trees.split_at_mut(1);
        let (grow, other) = if active == 0 { (&mut a[0], &mut b[0]) } else { (&mut b[0], &mut a[0]) };
        let ExtendOutcome::Added(new_node) = extend(grow, &q_rand, &mut ctx)? else { continue };
        let q_new = grow.node(new_node).q.clone();
        if let ConnectOutcome::Reached(meet) = connect(other, &q_new, &mut ctx)? {
            meeting = Some(if active == 0 { (new_node, meet, true) } else { (meet, new_node, false) });
            status = PlanStatus::Solved;
            break;
        }
    }
    let mut stats = ctx.stats;
    stats.wall_ms = clock.elapsed_ms();
    let (path, edges) = match meeting {
        // the goal tree connects (and checks the bridge) when the start tree grew
        Some((meet_start, meet_goal, goal_connected)) => {
            extract_path_with_edges(&trees[0], &trees[1], meet_start, meet_goal, goal_connected)?
        }
        None => (Vec::new(), Vec::new()),
    };
    Ok(PlanResult { status, path, edges, stats })
}
