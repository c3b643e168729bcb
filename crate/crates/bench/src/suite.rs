//! Suite execution, trial records, solution-time CDFs and summaries.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;
use rrtc_core::geometry::{subdivide_scene, Scene};
use rrtc_core::planner::{plan, Clock, NoClock, PlanProblem, PlanResult, PlanStatus};
use rrtc_core::sampling::TRIAL_SEED_STRIDE;
use rrtc_core::team::{ProjectorMode, SequentialTeam, WorkerTeam};
use rrtc_core::validation::FlagMode;
use serde::{Deserialize, Serialize};

use crate::formats::{flag_str, BenchSuite, SuiteProblem};
use crate::threaded::ThreadedTeam;

/// Monotonic clock started when the trial starts.
#[derive(Debug, Clone, Copy)]
pub struct InstantClock(Instant);

impl InstantClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for InstantClock {
    fn elapsed_ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Solved,
    TimedOut,
    IterLimit,
    Error,
}

impl From<PlanStatus> for TrialStatus {
    fn from(s: PlanStatus) -> Self {
        match s {
            PlanStatus::Solved => TrialStatus::Solved,
            PlanStatus::TimedOut => TrialStatus::TimedOut,
            PlanStatus::IterLimit => TrialStatus::IterLimit,
        }
    }
}

/// One row of `records.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub problem: String,
    pub scene: String,
    pub densify: usize,
    pub projector: String,
    pub cc_flag: String,
    pub trial: usize,
    pub seed_offset: u64,
    pub status: TrialStatus,
    /// Time spent inside the planner only.
    pub wall_ms: f64,
    pub iterations: usize,
    pub projection_failures: u64,
    pub collision_rejections: u64,
    pub validations: u64,
    pub colliding_validations: u64,
    pub primitive_checks_performed: u64,
    pub primitive_checks_possible: u64,
    pub colliding_checks_performed: u64,
    pub colliding_checks_possible: u64,
    pub path_len: usize,
    pub error: String,
}

impl TrialRecord {
    pub fn solved(&self) -> bool {
        self.status == TrialStatus::Solved
    }

    /// The record with wall-clock fields zeroed.
    pub fn without_timing(&self) -> Self {
        Self { wall_ms: 0.0, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TeamKind {
    #[default]
    Sequential,
    Threaded(usize),
}

/// Settings that apply to a whole run, overriding the suite file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Ignore time budgets so that results depend only on seeds.
    pub deterministic: bool,
    pub team: TeamKind,
    pub projection: Option<ProjectorMode>,
    pub cc_flag: Option<FlagMode>,
    pub densify: Option<usize>,
    pub seed_offset: Option<u64>,
    pub trials: Option<usize>,
}

/// One cell of the run matrix.
#[derive(Debug, Clone)]
pub struct TrialJob {
    pub problem: usize,
    pub densify: usize,
    pub projector: ProjectorMode,
    pub cc_flag: FlagMode,
    pub trial: usize,
    pub seed_offset: u64,
}

/// Expands the suite into jobs in the order their records are emitted.
pub fn jobs(suite: &BenchSuite, opts: &RunOptions) -> Vec<TrialJob> {
    let densify = opts.densify.map_or_else(|| suite.densify.clone(), |d| vec![d]);
    let projection = opts.projection.map_or_else(|| suite.projection.clone(), |p| vec![p]);
    let cc_flag = opts.cc_flag.map_or_else(|| suite.cc_flag.clone(), |f| vec![f]);
    let trials = opts.trials.unwrap_or(suite.trials);
    let base = opts.seed_offset.unwrap_or(suite.seed_offset);
    let mut out = Vec::new();
    for problem in 0..suite.problems.len() {
        for &densify in &densify {
            for &projector in &projection {
                for &cc_flag in &cc_flag {
                    for trial in 0..trials {
                        let seed_offset = base + trial as u64 * TRIAL_SEED_STRIDE;
                        out.push(TrialJob { problem, densify, projector, cc_flag, trial, seed_offset });
                    }
                }
            }
        }
    }
    out
}

/// Subdivided scenes shared by every trial that needs them.
fn scene_cache(suite: &BenchSuite, jobs: &[TrialJob]) -> HashMap<(usize, usize), Result<Scene, String>> {
    let mut cache = HashMap::new();
    for j in jobs {
        if let SuiteProblem::Ready(p) = &suite.problems[j.problem] {
            cache
                .entry((j.problem, j.densify))
                .or_insert_with(|| subdivide_scene(&p.problem.scene, j.densify).map_err(|e| e.to_string()));
        }
    }
    cache
}

fn blank_record(id: &str, scene: &str, job: &TrialJob, error: String) -> TrialRecord {
    TrialRecord {
        problem: id.to_string(),
        scene: scene.to_string(),
        densify: job.densify,
        projector: job.projector.as_str().to_string(),
        cc_flag: flag_str(job.cc_flag).to_string(),
        trial: job.trial,
        seed_offset: job.seed_offset,
        status: TrialStatus::Error,
        wall_ms: 0.0,
        iterations: 0,
        projection_failures: 0,
        collision_rejections: 0,
        validations: 0,
        colliding_validations: 0,
        primitive_checks_performed: 0,
        primitive_checks_possible: 0,
        colliding_checks_performed: 0,
        colliding_checks_possible: 0,
        path_len: 0,
        error,
    }
}

/// The problem a job plans, with densified scene and job parameters applied.
pub fn job_problem(base: &PlanProblem, scene: Scene, job: &TrialJob) -> PlanProblem {
    let mut p = base.clone();
    p.scene = scene;
    p.params.projector = job.projector;
    p.params.cc_flag = job.cc_flag;
    p.params.seed_offset = job.seed_offset;
    p
}

/// Receives every finished trial together with the problem and plan result.
pub type TrialObserver<'a> = dyn Fn(&TrialRecord, &PlanProblem, &PlanResult) + Sync + 'a;

fn run_job(
    suite: &BenchSuite,
    scenes: &HashMap<(usize, usize), Result<Scene, String>>,
    job: &TrialJob,
    opts: &RunOptions,
    observer: Option<&TrialObserver<'_>>,
) -> TrialRecord {
    let named = match &suite.problems[job.problem] {
        SuiteProblem::Ready(p) => p,
        SuiteProblem::Failed { id, error } => return blank_record(id, "", job, error.clone()),
    };
    let scene_name = named.problem.scene.name.clone();
    let scene = match &scenes[&(job.problem, job.densify)] {
        Ok(s) => s.clone(),
        Err(e) => return blank_record(&named.id, &scene_name, job, e.clone()),
    };
    let problem = job_problem(&named.problem, scene, job);
    let threaded;
    let team: &dyn WorkerTeam = match opts.team {
        TeamKind::Sequential => &SequentialTeam,
        TeamKind::Threaded(n) => {
            threaded = ThreadedTeam::new(n);
            &threaded
        }
    };
    let clock = InstantClock::start();
    let result = if opts.deterministic { plan(&problem, team, &NoClock) } else { plan(&problem, team, &clock) };
    let wall_ms = clock.elapsed_ms();
    match result {
        Err(e) => blank_record(&named.id, &scene_name, job, e.to_string()),
        Ok(r) => {
            let s = &r.stats;
            let record = TrialRecord {
                status: r.status.into(),
                wall_ms,
                iterations: s.iterations,
                projection_failures: s.projection_failures,
                collision_rejections: s.collision_rejections,
                validations: s.cc.validations,
                colliding_validations: s.cc.colliding_validations,
                primitive_checks_performed: s.cc.performed,
                primitive_checks_possible: s.cc.possible,
                colliding_checks_performed: s.cc.colliding_performed,
                colliding_checks_possible: s.cc.colliding_possible,
                path_len: r.path.len(),
                ..blank_record(&named.id, &scene_name, job, String::new())
            };
            if let Some(obs) = observer {
                obs(&record, &problem, &r);
            }
            record
        }
    }
}

/// Runs every (problem, densify, projector, flag, trial) cell.
///
/// Trials run concurrently, but `sink` receives records strictly in job
/// order as soon as each prefix is complete, so output is independent of
/// scheduling.
pub fn run_suite_with(
    suite: &BenchSuite,
    opts: &RunOptions,
    observer: Option<&TrialObserver<'_>>,
    sink: &mut dyn FnMut(&TrialRecord) -> io::Result<()>,
) -> io::Result<Vec<TrialRecord>> {
    let jobs = jobs(suite, opts);
    let scenes = scene_cache(suite, &jobs);
    let (tx, rx) = mpsc::channel();
    let mut records = Vec::with_capacity(jobs.len());
    std::thread::scope(|s| -> io::Result<()> {
        let (jobs, scenes) = (&jobs, &scenes);
        s.spawn(move || {
            jobs.par_iter().enumerate().for_each_with(tx, |tx, (i, job)| {
                let _ = tx.send((i, run_job(suite, scenes, job, opts, observer)));
            });
        });
        let mut pending = BTreeMap::new();
        for (i, record) in rx {
            pending.insert(i, record);
            while let Some(record) = pending.remove(&records.len()) {
                sink(&record)?;
                records.push(record);
            }
        }
        Ok(())
    })?;
    Ok(records)
}

pub fn run_suite(suite: &BenchSuite, opts: &RunOptions) -> Vec<TrialRecord> {
    run_suite_with(suite, opts, None, &mut |_| Ok(())).expect("in-memory sink cannot fail")
}

/// Runs a suite and writes `records.csv` (flushed after every record),
/// `cdf_<group>.csv` per group and `summary.csv` into `out`.
pub fn run_suite_to_dir(suite: &BenchSuite, opts: &RunOptions, out: &Path) -> anyhow::Result<Vec<TrialRecord>> {
    fs::create_dir_all(out)?;
    let mut writer = csv::Writer::from_path(out.join("records.csv"))?;
    let records = run_suite_with(suite, opts, None, &mut |r| {
        writer.serialize(r).map_err(io::Error::other)?;
        writer.flush()
    })?;
    drop(writer);
    write_reports(&records, out)?;
    Ok(records)
}

pub fn write_reports(records: &[TrialRecord], out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (group, rows) in emit_cdf(records, DEFAULT_GROUP) {
        let path = out.join(format!("cdf_{group}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["time_ms", "fraction_solved"])?;
        for (t, f) in rows {
            w.write_record([t.to_string(), f.to_string()])?;
        }
        w.flush()?;
        written.push(path);
    }
    let path = out.join("summary.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for s in summarize(records, DEFAULT_GROUP) {
        w.serialize(s)?;
    }
    w.flush()?;
    written.push(path);
    Ok(written)
}

pub fn write_records(records: &[TrialRecord], writer: impl io::Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(reader: impl io::Read) -> csv::Result<Vec<TrialRecord>> {
    csv::Reader::from_reader(reader).deserialize().collect()
}

pub fn read_records_file(path: &Path) -> anyhow::Result<Vec<TrialRecord>> {
    Ok(read_records(File::open(path)?)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKey {
    Problem,
    Scene,
    Densify,
    Projector,
    CcFlag,
}

pub const DEFAULT_GROUP: &[GroupKey] = &[GroupKey::Scene, GroupKey::Densify, GroupKey::Projector, GroupKey::CcFlag];

/// File-name-safe group label, e.g. `shelf_x10_parallel_on`.
pub fn group_name(r: &TrialRecord, keys: &[GroupKey]) -> String {
    let parts: Vec<String> = keys
        .iter()
        .map(|k| match k {
            GroupKey::Problem => r.problem.clone(),
            GroupKey::Scene => if r.scene.is_empty() { "unknown".into() } else { r.scene.clone() },
            GroupKey::Densify => format!("x{}", r.densify),
            GroupKey::Projector => r.projector.clone(),
            GroupKey::CcFlag => r.cc_flag.clone(),
        })
        .collect();
    parts
        .join("_")
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '-' })
        .collect()
}

fn groups<'a>(records: &'a [TrialRecord], keys: &[GroupKey]) -> BTreeMap<String, Vec<&'a TrialRecord>> {
    let mut g: BTreeMap<String, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        g.entry(group_name(r, keys)).or_default().push(r);
    }
    g
}

/// Per group: solved-trial times in ascending order, each with the fraction
/// of all trials in the group solved by that time.
pub fn emit_cdf(records: &[TrialRecord], keys: &[GroupKey]) -> BTreeMap<String, Vec<(f64, f64)>> {
    groups(records, keys)
        .into_iter()
        .map(|(name, rows)| {
            let total = rows.len() as f64;
            let mut times: Vec<f64> = rows.iter().filter(|r| r.solved()).map(|r| r.wall_ms).collect();
            times.sort_by(f64::total_cmp);
            let curve = times.iter().enumerate().map(|(i, &t)| (t, (i + 1) as f64 / total)).collect();
            (name, curve)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub trials: usize,
    pub solved: usize,
    pub success_rate: f64,
    /// Over solved trials; absent when nothing was solved.
    pub mean_wall_ms: Option<f64>,
    pub median_wall_ms: Option<f64>,
    pub colliding_trials: usize,
    /// Mean of `1 - performed / possible` over trials with a colliding validation.
    pub checks_saved: Option<f64>,
}

pub fn summarize(records: &[TrialRecord], keys: &[GroupKey]) -> Vec<GroupSummary> {
    groups(records, keys)
        .into_iter()
        .map(|(group, rows)| {
            let mut times: Vec<f64> = rows.iter().filter(|r| r.solved()).map(|r| r.wall_ms).collect();
            times.sort_by(f64::total_cmp);
            let solved = times.len();
            let mean = (solved > 0).then(|| times.iter().sum::<f64>() / solved as f64);
            let median = (solved > 0).then(|| {
                if solved % 2 == 1 {
                    times[solved / 2]
                } else {
                    0.5 * (times[solved / 2 - 1] + times[solved / 2])
                }
            });
            let saved: Vec<f64> = rows
                .iter()
                .filter(|r| r.colliding_validations > 0 && r.primitive_checks_possible > 0)
                .map(|r| 1.0 - r.primitive_checks_performed as f64 / r.primitive_checks_possible as f64)
                .collect();
            GroupSummary {
                group,
                trials: rows.len(),
                solved,
                success_rate: solved as f64 / rows.len() as f64,
                mean_wall_ms: mean,
                median_wall_ms: median,
                colliding_trials: saved.len(),
                checks_saved: (!saved.is_empty()).then(|| saved.iter().sum::<f64>() / saved.len() as f64),
            }
        })
        .collect()
}
