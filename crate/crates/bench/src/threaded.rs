//! Worker team backed by OS threads and barriers.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Barrier, Mutex, RwLock};
use std::thread;

use rrtc_core::constraints::ConstraintSpec;
use rrtc_core::geometry::Scene;
use rrtc_core::kinematics::RobotModel;
use rrtc_core::projection::{
    sequential_project, MotionSegment, ProjectionKernel, ProjectionOutcome, ProjectionParams, TeamState,
};
use rrtc_core::team::{params_for_mode, ProjectorMode, WorkerTeam};
use rrtc_core::validation::{checks_per_waypoint, CheckStep, FlagMode, ValidationReport, WaypointChecker};
use rrtc_core::{Error, Result};

/// Runs each projection and validation on `threads` scoped threads.
///
/// Logical worker `t` is served by thread `t % threads`. Projection outcomes
/// are identical to the sequential team. Validation verdicts are identical
/// too, but with the flag on the number of checks performed depends on how
/// the threads happen to interleave.
#[derive(Debug, Clone, Copy)]
pub struct ThreadedTeam {
    threads: usize,
}

impl ThreadedTeam {
    pub fn new(threads: usize) -> Self {
        Self { threads: threads.max(1) }
    }

    pub fn threads(&self) -> usize {
        self.threads
    }
}

impl Default for ThreadedTeam {
    fn default() -> Self {
        Self::new(thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    }
}

impl WorkerTeam for ThreadedTeam {
    fn project(
        &self,
        seg: &MotionSegment,
        spec: &ConstraintSpec,
        model: &RobotModel,
        params: &ProjectionParams,
        mode: ProjectorMode,
    ) -> Result<ProjectionOutcome> {
        let params = params_for_mode(params, mode);
        if mode == ProjectorMode::Naive {
            return sequential_project(seg, spec, model, &params);
        }
        let kernel = ProjectionKernel::new(seg, spec, model, &params)?;
        let width = kernel.width();
        let threads = self.threads.min(width - 1);
        let state = RwLock::new(TeamState::new(seg));
        let barrier = Barrier::new(threads);
        let error: Mutex<Option<Error>> = Mutex::new(None);
        let stop = AtomicBool::new(false);
        let finished_at = AtomicUsize::new(0);

        thread::scope(|s| {
            for k in 0..threads {
                let (kernel, state, barrier, error, stop, finished_at) =
                    (&kernel, &state, &barrier, &error, &stop, &finished_at);
                s.spawn(move || {
                    for iteration in 1..=kernel.max_iters() {
                        let updates: Vec<_> = {
                            let st = state.read().unwrap();
                            (st.prog + 1..width)
                                .filter(|t| t % threads == k)
                                .map(|t| (t, kernel.worker_update(t, &st.xi)))
                                .collect()
                        };
                        {
                            let mut st = state.write().unwrap();
                            for (t, update) in updates {
                                match update {
                                    Ok(u) => {
                                        st.xi_new[t] = u.next;
                                        st.valid[t] = u.valid;
                                    }
                                    Err(e) => {
                                        error.lock().unwrap().get_or_insert(e);
                                    }
                                }
                            }
                        }
                        barrier.wait();
                        if k == 0 {
                            if error.lock().unwrap().is_some() {
                                stop.store(true, Ordering::Release);
                            } else if kernel.coordinate(&mut state.write().unwrap()) {
                                finished_at.store(iteration, Ordering::Release);
                                stop.store(true, Ordering::Release);
                            }
                        }
                        barrier.wait();
                        if stop.load(Ordering::Acquire) {
                            break;
                        }
                    }
                });
            }
        });

        if let Some(e) = error.into_inner().unwrap() {
            return Err(e);
        }
        let state = state.into_inner().unwrap();
        match finished_at.into_inner() {
            0 => Ok(kernel.failed(state.prog)),
            iterations => kernel.finish(state.xi, iterations, state.prog),
        }
    }

    fn validate(&self, seg: &MotionSegment, scene: &Scene, model: &RobotModel, flag: FlagMode) -> Result<ValidationReport> {
        let width = seg.width();
        let threads = self.threads.min(width);
        let raised = AtomicBool::new(false);
        let results: Vec<Result<Vec<(usize, bool, u64)>>> = thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|k| {
                    let raised = &raised;
                    s.spawn(move || -> Result<Vec<(usize, bool, u64)>> {
                        let mut mine = Vec::new();
                        for w in (k..width).step_by(threads) {
                            mine.push((w, WaypointChecker::new(model, scene, &seg.waypoints()[w])?, false));
                        }
                        // round-robin over this thread's workers, one check each
                        let mut running = mine.len();
                        while running > 0 {
                            running = 0;
                            for (_, checker, collided) in mine.iter_mut() {
                                if flag == FlagMode::On && raised.load(Ordering::Acquire) {
                                    running = 0;
                                    break;
                                }
                                match checker.step() {
                                    CheckStep::Exhausted => continue,
                                    CheckStep::Clear => {}
                                    CheckStep::Collision => {
                                        *collided = true;
                                        raised.store(true, Ordering::Release);
                                    }
                                }
                                running += 1;
                            }
                        }
                        Ok(mine.into_iter().map(|(w, c, collided)| (w, collided, c.performed())).collect())
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("validation worker panicked")).collect()
        });
        let mut performed = 0;
        let mut first = None::<usize>;
        for r in results {
            for (w, collided, n) in r? {
                performed += n;
                if collided {
                    first = Some(first.map_or(w, |f| f.min(w)));
                }
            }
        }
        Ok(ValidationReport {
            valid: first.is_none(),
            primitive_checks_performed: performed,
            primitive_checks_possible: (checks_per_waypoint(model, scene) * width) as u64,
            first_colliding_waypoint: first,
        })
    }
}
