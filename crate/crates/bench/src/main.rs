use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use rrtc_bench::formats::{load_problem, load_suite};
use rrtc_bench::suite::{job_problem, run_suite_to_dir, summarize, InstantClock, RunOptions, TeamKind, TrialJob, DEFAULT_GROUP};
use rrtc_bench::verify::verify_path;
use rrtc_bench::ThreadedTeam;
use rrtc_core::geometry::subdivide_scene;
use rrtc_core::planner::{plan, NoClock, PlanStatus};
use rrtc_core::team::{ProjectorMode, SequentialTeam, WorkerTeam};
use rrtc_core::validation::FlagMode;

#[derive(Parser)]
#[command(name = "bench", about = "Constrained RRT-Connect benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Projection {
    Parallel,
    Naive,
    LiteralGap,
}

impl From<Projection> for ProjectorMode {
    fn from(p: Projection) -> Self {
        match p {
            Projection::Parallel => ProjectorMode::Parallel,
            Projection::Naive => ProjectorMode::Naive,
            Projection::LiteralGap => ProjectorMode::LiteralGap,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Flag {
    On,
    Off,
}

impl From<Flag> for FlagMode {
    fn from(f: Flag) -> Self {
        match f {
            Flag::On => FlagMode::On,
            Flag::Off => FlagMode::Off,
        }
    }
}

#[derive(clap::Args)]
struct Overrides {
    #[arg(long, value_enum)]
    projection: Option<Projection>,
    #[arg(long, value_enum)]
    cc_flag: Option<Flag>,
    #[arg(long, value_parser = ["1", "10", "100"])]
    densify: Option<String>,
    #[arg(long)]
    seed_offset: Option<u64>,
    /// Ignore time budgets; results then depend only on seeds.
    #[arg(long)]
    deterministic: bool,
    /// Threads per worker team; 0 runs each team sequentially.
    #[arg(long, default_value_t = 0)]
    team_threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark suite.
    Run {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Solve a single problem; exits 0 when solved.
    Plan {
        #[arg(long)]
        problem: PathBuf,
        /// Re-validate every edge of the solution path.
        #[arg(long)]
        verify: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn options(o: &Overrides, trials: Option<usize>) -> RunOptions {
    RunOptions {
        deterministic: o.deterministic,
        team: if o.team_threads == 0 { TeamKind::Sequential } else { TeamKind::Threaded(o.team_threads) },
        projection: o.projection.map(Into::into),
        cc_flag: o.cc_flag.map(Into::into),
        densify: o.densify.as_ref().map(|d| d.parse().expect("validated by clap")),
        seed_offset: o.seed_offset,
        trials,
    }
}

/// The error chain, skipping causes the outer messages already quote.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !msg.contains(&text) {
            msg = format!("{msg}: {text}");
        }
    }
    msg
}

fn run(suite: PathBuf, out: PathBuf, opts: RunOptions) -> anyhow::Result<()> {
    let suite = load_suite(&suite)?;
    let records = run_suite_to_dir(&suite, &opts, &out).with_context(|| format!("writing {}", out.display()))?;
    println!("{} trials written to {}", records.len(), out.join("records.csv").display());
    for s in summarize(&records, DEFAULT_GROUP) {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.1}"));
        println!(
            "{:<40} solved {:>3}/{:<3} mean {:>8} ms  median {:>8} ms  checks saved {}",
            s.group,
            s.solved,
            s.trials,
            fmt(s.mean_wall_ms),
            fmt(s.median_wall_ms),
            s.checks_saved.map_or("-".to_string(), |v| format!("{:.1}%", v * 100.0)),
        );
    }
    Ok(())
}

fn plan_one(path: PathBuf, verify: bool, opts: RunOptions) -> anyhow::Result<bool> {
    let named = load_problem(&path)?;
    let job = TrialJob {
        problem: 0,
        densify: opts.densify.unwrap_or(1),
        projector: opts.projection.unwrap_or(named.problem.params.projector),
        cc_flag: opts.cc_flag.unwrap_or(named.problem.params.cc_flag),
        trial: 0,
        seed_offset: opts.seed_offset.unwrap_or(named.problem.params.seed_offset),
    };
    let scene = subdivide_scene(&named.problem.scene, job.densify)?;
    let problem = job_problem(&named.problem, scene, &job);
    let threaded;
    let team: &dyn WorkerTeam = match opts.team {
        TeamKind::Sequential => &SequentialTeam,
        TeamKind::Threaded(n) => {
            threaded = ThreadedTeam::new(n);
            &threaded
        }
    };
    let result = if opts.deterministic { plan(&problem, team, &NoClock)? } else { plan(&problem, team, &InstantClock::start())? };
    let s = &result.stats;
    println!(
        "{}: {} after {} iterations, {:.1} ms, path of {} configurations",
        named.id,
        result.status.as_str(),
        s.iterations,
        s.wall_ms,
        result.path.len()
    );
    println!("checks performed {} of {} possible", s.cc.performed, s.cc.possible);
    for q in &result.path {
        let row: Vec<String> = q.iter().map(|v| format!("{v:.6}")).collect();
        println!("  [{}]", row.join(", "));
    }
    if verify && result.status == PlanStatus::Solved {
        let violations = verify_path(&problem, &result);
        for v in &violations {
            println!("violation on edge {:?}: {}", v.edge, v.message);
        }
        if !violations.is_empty() {
            return Ok(false);
        }
        println!("path re-validated");
    }
    Ok(result.status == PlanStatus::Solved)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { suite, out, trials, overrides } => {
            if trials == Some(0) {
                eprintln!("error: --trials must be at least 1");
                return ExitCode::from(2);
            }
            run(suite, out, options(&overrides, trials)).map(|_| true)
        }
        Command::Plan { problem, verify, overrides } => plan_one(problem, verify, options(&overrides, None)),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}
