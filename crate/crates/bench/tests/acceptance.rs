//! Acceptance checks. Prints one PASS or FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rrtc_bench::formats::{load_robot, load_scene, load_suite};
use rrtc_bench::suite::{run_suite, run_suite_with, RunOptions, TrialRecord};
use rrtc_bench::verify::{verify_path, Violation};
use rrtc_core::constraints::{task_error, task_jacobian, ConstraintSpec};
use rrtc_core::geometry::{sphere_aabb_clearance, subdivide_scene, Aabb, Scene, Sphere};
use rrtc_core::kinematics::{forward_kinematics, RobotModel};
use rrtc_core::planner::{plan, NoClock, PlanParams, PlanProblem, PlanStatus};
use rrtc_core::projection::{
    interpolate_segment, parallel_project_traced, project_configuration, MotionSegment, ProjectionParams,
};
use rrtc_core::sampling::{HaltonState, TRIAL_SEED_STRIDE};
use rrtc_core::team::{ProjectorMode, SequentialTeam, WorkerTeam};
use rrtc_core::validation::{validate_configuration, FlagMode};
use rrtc_core::Configuration;

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(rel)
}

fn franka() -> RobotModel {
    load_robot(&data("robots/franka_like.toml")).unwrap()
}

fn random_q(rng: &mut ChaCha8Rng, model: &RobotModel) -> Configuration {
    Configuration(model.limits().iter().map(|[lo, hi]| rng.gen_range(*lo..*hi)).collect())
}

fn toward(from: &Configuration, to: &Configuration, step: f64) -> Configuration {
    let d = from.distance(to);
    if d <= step {
        return to.clone();
    }
    Configuration(from.iter().zip(to.iter()).map(|(a, b)| a + step / d * (b - a)).collect())
}

fn on_manifold(rng: &mut ChaCha8Rng, model: &RobotModel, spec: &ConstraintSpec) -> Configuration {
    loop {
        if let Some(q) = project_configuration(&random_q(rng, model), spec, model, 1e-6, 100).unwrap() {
            return q;
        }
    }
}

/// A straight segment of one planner step from a point on the manifold
/// toward a uniform random configuration, as an extend attempt builds it.
fn extend_segment(rng: &mut ChaCha8Rng, model: &RobotModel, spec: &ConstraintSpec, params: &PlanParams) -> MotionSegment {
    let near = on_manifold(rng, model, spec);
    let target = toward(&near, &random_q(rng, model), params.step_size);
    interpolate_segment(&near, &target, params.width).unwrap()
}

fn test_constraints() -> [ConstraintSpec; 2] {
    [
        ConstraintSpec::plane(Vector3::z(), 0.45, 1e-3).unwrap(),
        ConstraintSpec::line(Vector3::new(0.45, 0.0, 0.55), Vector3::y(), 1e-3).unwrap(),
    ]
}

fn deterministic(seed_offset: u64) -> RunOptions {
    RunOptions { deterministic: true, seed_offset: Some(seed_offset), ..Default::default() }
}

struct DefaultRun {
    records: Vec<TrialRecord>,
    violations: Vec<(String, Violation)>,
    verified: usize,
}

/// The default suite, run once in-process with every solved path verified.
fn default_run() -> &'static DefaultRun {
    static RUN: OnceLock<DefaultRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let suite = load_suite(&data("suites/default.toml")).unwrap();
        let found = Mutex::new((Vec::new(), 0));
        let observer = |rec: &TrialRecord, problem: &PlanProblem, result: &rrtc_core::planner::PlanResult| {
            if result.status == PlanStatus::Solved {
                let v = verify_path(problem, result);
                let mut f = found.lock().unwrap();
                f.1 += 1;
                f.0.extend(v.into_iter().map(|v| (format!("{} x{}", rec.problem, rec.densify), v)));
            }
        };
        let records = run_suite_with(&suite, &deterministic(7), Some(&observer), &mut |_| Ok(())).unwrap();
        let (violations, verified) = found.into_inner().unwrap();
        DefaultRun { records, violations, verified }
    })
}

fn projection_soundness() -> Verdict {
    let model = franka();
    let params = PlanParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let started = Instant::now();
    let (mut projected, mut bad) = (0, 0);
    for (i, spec) in test_constraints().iter().cycle().take(500).enumerate() {
        let seg = extend_segment(&mut rng, &model, spec, &params);
        let out = SequentialTeam.project(&seg, spec, &model, &params.projection, params.projector).unwrap();
        let Some(s) = out.segment else { continue };
        projected += 1;
        let w = s.waypoints();
        let ok = w.iter().all(|q| task_error(spec, &forward_kinematics(&model, q).unwrap().ee).norm() < spec.tau_task)
            && w.windows(2).all(|p| p[0].distance(&p[1]) < out.tau_sm)
            && w[0] == seg.waypoints()[0];
        if !ok {
            bad += 1;
            eprintln!("  attempt {i}: projected segment fails re-validation");
        }
    }
    let secs = started.elapsed().as_secs_f64();
    verdict(
        bad == 0 && projected > 0 && secs < 60.0,
        format!("{projected}/500 projected, {bad} invalid, {secs:.1}s"),
    )
}

fn bits_equal(a: &Configuration, b: &Configuration) -> bool {
    a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn frozen_prefix_invariants() -> Verdict {
    let model = franka();
    let params = PlanParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let mut broken = Vec::new();
    let mut advanced = 0;
    for (i, spec) in test_constraints().iter().cycle().take(100).enumerate() {
        let seg = extend_segment(&mut rng, &model, spec, &params);
        let mut trace: Vec<(usize, Vec<Configuration>)> = Vec::new();
        let out = parallel_project_traced(&seg, spec, &model, &params.projection, &mut |t| {
            trace.push((t.prog, t.waypoints.to_vec()))
        })
        .unwrap();
        let start = &seg.waypoints()[0];
        let mut ok = trace.iter().all(|(_, w)| bits_equal(&w[0], start));
        ok &= trace.windows(2).all(|p| p[0].0 <= p[1].0);
        for (k, (prog, w)) in trace.iter().enumerate() {
            for (_, later) in &trace[k + 1..] {
                ok &= (0..=*prog).all(|j| bits_equal(&w[j], &later[j]));
            }
        }
        if let (Some(s), Some((prog, last))) = (&out.segment, trace.last()) {
            ok &= bits_equal(&s.waypoints()[0], start);
            // finishing only clamps into the joint limits
            for (got, traced) in s.waypoints().iter().zip(last).take(prog + 1).skip(1) {
                let mut c = traced.clone();
                model.clamp_to_limits(&mut c);
                ok &= bits_equal(got, &c);
            }
        }
        advanced += usize::from(trace.iter().any(|(p, _)| *p > 0));
        if !ok {
            broken.push(i);
        }
    }
    verdict(
        broken.is_empty() && advanced > 0,
        format!("100 traced projections, {advanced} advanced the prefix, violations in {broken:?}"),
    )
}

fn jacobian_matches_finite_differences() -> Verdict {
    let model = franka();
    let down = UnitQuaternion::from_quaternion(Quaternion::new(0.0, 0.9238795325112867, 0.3826834323650898, 0.0));
    let [plane, line] = test_constraints();
    let kinds = [
        ("plane", plane.clone()),
        ("line", line.clone()),
        ("plane+orientation", plane.with_orientation(down, 0.5).unwrap()),
        ("line+orientation", line.with_orientation(down, 0.5).unwrap()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    for (_, spec) in &kinds {
        let mut accepted = 0;
        while accepted < 100 {
            let q = random_q(&mut rng, &model);
            if let Some(o) = &spec.orientation {
                // the rotation-vector error is not differentiable at angle π
                let ee = forward_kinematics(&model, &q).unwrap().ee;
                if o.target.angle_to(&ee.rotation) > 3.1 {
                    skipped += 1;
                    continue;
                }
            }
            accepted += 1;
            let jac = task_jacobian(spec, &model, &q).unwrap();
            for i in 0..q.len() {
                let (mut qp, mut qm) = (q.clone(), q.clone());
                qp.0[i] += h;
                qm.0[i] -= h;
                let ep = task_error(spec, &forward_kinematics(&model, &qp).unwrap().ee);
                let em = task_error(spec, &forward_kinematics(&model, &qm).unwrap().ee);
                let fd = (ep.0 - em.0) / (2.0 * h);
                worst = worst.max((fd - jac.column(i)).abs().max());
            }
        }
    }
    verdict(
        worst < 1e-4,
        format!("4 kinds x 100 configurations, worst entry error {worst:.2e}, {skipped} near-π draws redrawn"),
    )
}

/// Distance from `c` to the box by sampling its faces on a grid, then
/// refining the best sample of each face by pattern search.
fn sampled_box_distance(c: &Vector3<f64>, min: &Vector3<f64>, max: &Vector3<f64>) -> f64 {
    if (0..3).all(|i| min[i] <= c[i] && c[i] <= max[i]) {
        return 0.0;
    }
    const N: usize = 40;
    let mut best = f64::INFINITY;
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [min[axis], max[axis]] {
            let point = |a: f64, b: f64| {
                let mut p = Vector3::zeros();
                p[axis] = side;
                p[u] = a;
                p[v] = b;
                (p - c).norm()
            };
            let (su, sv) = ((max[u] - min[u]) / N as f64, (max[v] - min[v]) / N as f64);
            let mut arg = (min[u], min[v]);
            let mut here = f64::INFINITY;
            for i in 0..=N {
                for j in 0..=N {
                    let (a, b) = (min[u] + su * i as f64, min[v] + sv * j as f64);
                    let d = point(a, b);
                    if d < here {
                        here = d;
                        arg = (a, b);
                    }
                }
            }
            let (mut du, mut dv) = (su, sv);
            while du > 1e-13 || dv > 1e-13 {
                let mut moved = false;
                for (ea, eb) in [(du, 0.0), (-du, 0.0), (0.0, dv), (0.0, -dv)] {
                    let a = (arg.0 + ea).clamp(min[u], max[u]);
                    let b = (arg.1 + eb).clamp(min[v], max[v]);
                    let d = point(a, b);
                    if d < here {
                        here = d;
                        arg = (a, b);
                        moved = true;
                    }
                }
                if !moved {
                    du /= 2.0;
                    dv /= 2.0;
                }
            }
            best = best.min(here);
        }
    }
    best
}

fn sphere_box_clearance_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let mut wrong_sign = 0;
    let mut worst: f64 = 0.0;
    let mut overlapping = 0;
    for _ in 0..1000 {
        let min = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let max = min + Vector3::from_fn(|_, _| rng.gen_range(0.05..1.0));
        let center = (min + max) / 2.0 + Vector3::from_fn(|_, _| rng.gen_range(-1.2..1.2));
        let radius = rng.gen_range(0.01..0.8);
        let clearance = sphere_aabb_clearance(
            &Sphere::new(center, radius).unwrap(),
            &Aabb::new(min, max).unwrap(),
        );
        let oracle = sampled_box_distance(&center, &min, &max) - radius;
        overlapping += usize::from(oracle < 0.0);
        wrong_sign += usize::from((clearance < 0.0) != (oracle < 0.0));
        worst = worst.max((clearance - oracle).abs());
    }
    let unit = Aabb::new([-1.0, -1.0, -1.0].into(), [1.0, 1.0, 1.0].into()).unwrap();
    let exact = [
        ([2.0, 0.0, 0.0], 0.5, 0.5),
        ([0.0, -3.0, 0.0], 0.25, 1.75),
        ([0.0, 0.0, 1.5], 1.0, -0.5),
        ([0.2, 0.3, -0.4], 0.7, -0.7),
        ([1.0, 0.0, 0.0], 0.1, -0.1),
        ([2.0, 2.0, 0.0], 0.5, std::f64::consts::SQRT_2 - 0.5),
        ([2.0, 2.0, 2.0], 1.0, 3f64.sqrt() - 1.0),
    ];
    let exact_ok = exact.iter().all(|(c, r, want)| {
        let got = sphere_aabb_clearance(&Sphere::new((*c).into(), *r).unwrap(), &unit);
        (got - want).abs() < 1e-12
    });
    verdict(
        wrong_sign == 0 && exact_ok,
        format!(
            "1000 pairs ({overlapping} overlapping), {wrong_sign} sign mismatches, max deviation {worst:.1e}, axis-aligned cases exact: {exact_ok}"
        ),
    )
}

fn early_termination_savings() -> Verdict {
    let model = franka();
    let scene = subdivide_scene(&load_scene(&data("scenes/shelf.toml")).unwrap(), 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    let (mut on_sum, mut off_sum, mut disagree, mut corpus) = (0u64, 0u64, 0, 0);
    while corpus < 100 {
        let a = random_q(&mut rng, &model);
        let b = toward(&a, &random_q(&mut rng, &model), 1.0);
        if !validate_configuration(&a, &scene, &model).unwrap() || !validate_configuration(&b, &scene, &model).unwrap() {
            continue;
        }
        let seg = interpolate_segment(&a, &b, 32).unwrap();
        let off = SequentialTeam.validate(&seg, &scene, &model, FlagMode::Off).unwrap();
        if off.valid {
            continue;
        }
        let on = SequentialTeam.validate(&seg, &scene, &model, FlagMode::On).unwrap();
        corpus += 1;
        on_sum += on.primitive_checks_performed;
        off_sum += off.primitive_checks_performed;
        disagree += usize::from(on.valid != off.valid);
    }
    let ratio = on_sum as f64 / off_sum as f64;
    verdict(
        ratio <= 0.5 && disagree == 0,
        format!(
            "{} primitives, 100 colliding segments, flag-on performs {ratio:.3} of flag-off checks, {disagree} verdict mismatches",
            scene.primitive_count()
        ),
    )
}

fn check_growth_with_density() -> Verdict {
    let records: Vec<&TrialRecord> = default_run()
        .records
        .iter()
        .filter(|r| r.scene == "shelf" || r.scene == "twin_shelves")
        .collect();
    let key = |r: &TrialRecord| (r.problem.clone(), r.trial);
    let at = |f: usize| -> BTreeMap<_, &TrialRecord> {
        records.iter().filter(|r| r.densify == f).map(|r| (key(r), *r)).collect()
    };
    let base = at(1);
    let colliding: Vec<_> = base.iter().filter(|(_, r)| r.colliding_validations > 0).map(|(k, _)| k.clone()).collect();
    let mut lines = Vec::new();
    let mut pass = !base.is_empty() && !colliding.is_empty();
    for f in [10, 100] {
        let dense = at(f);
        let mean = |m: &BTreeMap<_, &TrialRecord>, keys: &mut dyn Iterator<Item = &(String, usize)>, field: fn(&TrialRecord) -> u64| {
            let v: Vec<f64> = keys.map(|k| field(m[k]) as f64).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let possible = |r: &TrialRecord| r.primitive_checks_possible;
        let colliding_performed = |r: &TrialRecord| r.colliding_checks_performed;
        let possible_ratio = mean(&dense, &mut base.keys(), possible) / mean(&base, &mut base.keys(), possible);
        let colliding_ratio =
            mean(&dense, &mut colliding.iter(), colliding_performed) / mean(&base, &mut colliding.iter(), colliding_performed);
        let f64f = f as f64;
        pass &= (possible_ratio - f64f).abs() <= 0.2 * f64f && colliding_ratio < f64f;
        lines.push(format!("x{f}: possible {possible_ratio:.2}x, colliding flag-on {colliding_ratio:.2}x"));
    }
    verdict(
        pass,
        format!("{} shelf trials, {} colliding; {}", base.len(), colliding.len(), lines.join("; ")),
    )
}

fn parallel_beats_naive() -> Verdict {
    let suite = load_suite(&data("suites/constrained.toml")).unwrap();
    let records = run_suite(&suite, &deterministic(0));
    let mut table: BTreeMap<&str, [Option<&TrialRecord>; 2]> = BTreeMap::new();
    for r in &records {
        let slot = usize::from(r.projector == "naive");
        table.entry(r.problem.as_str()).or_default()[slot] = Some(r);
    }
    println!("  {:<30} {:>16} {:>16}", "problem", "parallel", "naive");
    let show = |r: Option<&TrialRecord>| r.map_or("-".into(), |r| format!("{:?} ({})", r.status, r.iterations));
    for (p, [par, naive]) in &table {
        println!("  {p:<30} {:>16} {:>16}", show(*par), show(*naive));
    }
    let count = |name: &str| records.iter().filter(|r| r.projector == name && r.solved()).count();
    let total = |name: &str| records.iter().filter(|r| r.projector == name).count();
    let (p, n) = (count("parallel"), count("naive"));
    verdict(
        p >= n && total("parallel") > 0 && total("parallel") == total("naive"),
        format!("parallel solved {p}/{}, naive solved {n}/{}", total("parallel"), total("naive")),
    )
}

fn unconstrained_degenerates() -> Verdict {
    let model = franka();
    let spec = ConstraintSpec::unconstrained();
    let params = ProjectionParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1008);
    let mut identical = 0;
    for _ in 0..100 {
        let a = random_q(&mut rng, &model);
        let seg = interpolate_segment(&a, &toward(&a, &random_q(&mut rng, &model), 0.5), 32).unwrap();
        let same = [ProjectorMode::Parallel, ProjectorMode::Naive].iter().all(|&mode| {
            let out = SequentialTeam.project(&seg, &spec, &model, &params, mode).unwrap();
            out.segment.is_some_and(|s| s.waypoints().iter().zip(seg.waypoints()).all(|(x, y)| bits_equal(x, y)))
        });
        identical += usize::from(same);
    }
    let mut solved = 0;
    let mut iterations = Vec::new();
    for trial in 0..100u64 {
        let mut ends = Vec::new();
        while ends.len() < 2 {
            let q = random_q(&mut rng, &model);
            if validate_configuration(&q, &Scene::default(), &model).unwrap() {
                ends.push(q);
            }
        }
        let problem = PlanProblem {
            model: model.clone(),
            scene: Scene::default(),
            spec: spec.clone(),
            start: ends[0].clone(),
            goal: ends[1].clone(),
            params: PlanParams { max_iterations: 10_000, seed_offset: trial * TRIAL_SEED_STRIDE, ..Default::default() },
        };
        let result = plan(&problem, &SequentialTeam, &NoClock).unwrap();
        if result.status == PlanStatus::Solved {
            solved += 1;
            iterations.push(result.stats.iterations);
        }
    }
    iterations.sort_unstable();
    let median = iterations.get(iterations.len() / 2).copied().unwrap_or(0);
    verdict(
        identical == 100 && solved >= 99,
        format!("{identical}/100 segments unchanged, {solved}/100 empty-scene problems solved (median {median} iterations)"),
    )
}

fn halton_base_two() -> Verdict {
    let mut h = HaltonState::new(1, 0);
    let got: Vec<f64> = (0..8).map(|_| h.next_unit()[0]).collect();
    // the bits of n mirrored about the binary point
    let want: Vec<f64> = (1u64..=8).map(|n| n.reverse_bits() as f64 / 2f64.powi(64)).collect();
    verdict(got == want, format!("{got:?}"))
}

fn cli_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let suite = data("suites/default.toml");
    let mut tables = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_bench"))
            .args(["run", "--suite", suite.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .args(["--deterministic", "--seed-offset", "7"])
            .output()
            .unwrap()
            .status;
        if !status.success() {
            return verdict(false, format!("run {run} exited with {status}"));
        }
        let mut reader = csv::Reader::from_path(out.join("records.csv")).unwrap();
        let header = reader.headers().unwrap().clone();
        let skip = header.iter().position(|h| h == "wall_ms").unwrap();
        let rows: Vec<Vec<String>> = reader
            .records()
            .map(|r| r.unwrap().iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, v)| v.to_string()).collect())
            .collect();
        tables.push(rows);
    }
    let differing = tables[0].iter().zip(&tables[1]).filter(|(a, b)| a != b).count();
    verdict(
        tables[0].len() == tables[1].len() && differing == 0 && !tables[0].is_empty(),
        format!("{} records per run, {differing} differ outside wall_ms", tables[0].len()),
    )
}

fn solved_paths_verify() -> Verdict {
    let run = default_run();
    for (problem, v) in run.violations.iter().take(5) {
        println!("  {problem}: edge {:?}: {}", v.edge, v.message);
    }
    verdict(
        run.violations.is_empty() && run.verified > 0,
        format!("{} solved paths re-validated, {} violations", run.verified, run.violations.len()),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("projection soundness", projection_soundness),
        ("fixed start and frozen prefix", frozen_prefix_invariants),
        ("task Jacobian vs finite differences", jacobian_matches_finite_differences),
        ("sphere-box clearance vs sampling oracle", sphere_box_clearance_oracle),
        ("early termination saves checks", early_termination_savings),
        ("check counts under densification", check_growth_with_density),
        ("parallel vs naive success", parallel_beats_naive),
        ("unconstrained degenerate case", unconstrained_degenerates),
        ("Halton base-2 prefix", halton_base_two),
        ("CLI reproducibility", cli_determinism),
        ("solved paths re-validate", solved_paths_verify),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| verdict(false, format!("panicked: {:?}", e.downcast_ref::<String>())));
        failed += usize::from(!result.pass);
        println!(
            "{} [{:>2}] {name}: {} ({:.1}s)",
            if result.pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail,
            started.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
