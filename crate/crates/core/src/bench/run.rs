//! Benchmark execution: every method on every task, one CSV row per
//! (method, task, joint subset, budget point).

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::MjeReport;
use super::task::Task;
use crate::camera::{waypoints_from_goal, Camera, WaypointSet};
use crate::cem::{cem_plan, observation_cost, CemConfig, PlanSnapshot, SearchSpace};
use crate::error::{invalid, Result};
use crate::lifted::{advance_context, lwm_chain, lwm_rollout};
use crate::policy::{PolicyConfig, PolicyContext, WaypointPolicy};
use crate::pose::{integrate_plan, Action};
use crate::rng;
use crate::sim::{Observation, WorldModel, WorldModelState};
use crate::skeleton::KinematicModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Standing still: the start pose scored against the goal.
    #[serde(rename = "initial")]
    Initial,
    /// The policy without waypoints.
    #[serde(rename = "unconditioned")]
    Unconditioned,
    /// The policy given the goal pose's own waypoints.
    #[serde(rename = "conditioned")]
    Conditioned,
    #[serde(rename = "ll")]
    LowLevel,
    #[serde(rename = "hl2d")]
    Lifted2d,
    #[serde(rename = "hl3d")]
    Lifted3d,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Initial,
        Method::Unconditioned,
        Method::Conditioned,
        Method::LowLevel,
        Method::Lifted2d,
        Method::Lifted3d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Initial => "initial",
            Method::Unconditioned => "unconditioned",
            Method::Conditioned => "conditioned",
            Method::LowLevel => "ll",
            Method::Lifted2d => "hl2d",
            Method::Lifted3d => "hl3d",
        }
    }

    pub fn space(self) -> Option<SearchSpace> {
        match self {
            Method::LowLevel => Some(SearchSpace::LowLevel),
            Method::Lifted2d => Some(SearchSpace::Lifted2d),
            Method::Lifted3d => Some(SearchSpace::Lifted3d),
            _ => None,
        }
    }

    fn tag(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| invalid(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    /// Planner settings; `space`, `samples`, `elites`, `iterations`,
    /// `horizon` and `seed` are set per run.
    pub cem: CemConfig,
    /// Iteration counts at which planner results are reported.
    pub iterations: Vec<usize>,
    /// Samples per iteration; each value is a separate planner run.
    pub samples: Vec<usize>,
    /// Elite count; `None` keeps a quarter of the samples, at least two.
    pub elites: Option<usize>,
    /// High-level steps per plan; `None` covers each task's goal horizon.
    pub plan_steps: Option<usize>,
    pub policy: PolicyConfig,
    pub wm_noise: f64,
    /// Policy rollouts averaged when scoring waypoint plans.
    pub eval_samples: usize,
    /// Record wall-clock time; off by default so outputs are reproducible.
    pub wall_time: bool,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            methods: vec![Method::Initial, Method::Unconditioned, Method::LowLevel, Method::Lifted2d],
            cem: CemConfig::default(),
            iterations: vec![6],
            samples: vec![64],
            elites: None,
            plan_steps: None,
            policy: PolicyConfig::default(),
            wm_noise: 0.005,
            eval_samples: 64,
            wall_time: false,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(invalid("no methods selected"));
        }
        if self.iterations.is_empty() || self.iterations.contains(&0) {
            return Err(invalid("iteration counts must be positive"));
        }
        if self.samples.is_empty() {
            return Err(invalid("no sample counts given"));
        }
        if self.plan_steps == Some(0) {
            return Err(invalid("plan_steps must be positive"));
        }
        if self.eval_samples == 0 {
            return Err(invalid("eval_samples must be positive"));
        }
        if !(self.wm_noise.is_finite() && self.wm_noise >= 0.0) {
            return Err(invalid("world-model noise must be non-negative"));
        }
        self.policy.validate()?;
        for &n in &self.samples {
            self.cem_for(SearchSpace::LowLevel, n, 1, 0).validate()?;
        }
        Ok(())
    }

    pub fn elites_for(&self, samples: usize) -> usize {
        self.elites.unwrap_or((samples / 4).max(2)).min(samples)
    }

    fn cem_for(&self, space: SearchSpace, samples: usize, steps: usize, seed: u64) -> CemConfig {
        CemConfig {
            space,
            samples,
            elites: self.elites_for(samples),
            iterations: self.iterations.iter().copied().max().unwrap_or(1),
            horizon: steps,
            seed,
            ..self.cem
        }
    }
}

/// One line of the results CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub task_id: String,
    /// `leaf`, `intermediate`, `all`, `leaf-visible` or `leaf-hidden`.
    pub subset: String,
    pub mje_m: f64,
    pub cost: f64,
    pub iters: usize,
    pub samples: usize,
    pub wall_ms: u64,
    pub seed: u64,
}

pub const CSV_COLUMNS: [&str; 9] = [
    "method", "task_id", "subset", "mje_m", "cost", "iters", "samples", "wall_ms", "seed",
];

/// Everything needed to re-derive one result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub task_id: String,
    pub method: Method,
    pub iters: usize,
    pub samples: usize,
    /// Planner seed for planning methods, evaluation seed otherwise.
    pub seed: u64,
    pub cost: f64,
    /// Low-level plan, scored by integrating it from the start pose.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<Action>>,
    /// Waypoint plan, scored over `eval_samples` policy rollouts drawn from
    /// `eval_seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hl: Option<Vec<WaypointSet>>,
    pub eval_seed: u64,
    pub eval_samples: usize,
    pub mje: MjeReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskFailure {
    pub task_id: String,
    pub method: Method,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchOutput {
    pub rows: Vec<ResultRow>,
    pub plans: Vec<PlanRecord>,
    pub failures: Vec<TaskFailure>,
}

/// Shared inputs of one benchmark invocation.
pub struct Bench {
    model: Arc<KinematicModel>,
    camera: Camera,
    policy: WaypointPolicy,
    cfg: BenchConfig,
}

struct Prepared<'a> {
    task: &'a Task,
    ctx: PolicyContext,
    wm: WorldModelState,
    steps: usize,
    seed: u64,
}

fn id_hash(id: &str) -> u64 {
    id.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

impl Bench {
    pub fn new(model: Arc<KinematicModel>, camera: Camera, cfg: BenchConfig) -> Result<Self> {
        cfg.validate()?;
        let policy = WaypointPolicy::new(model.clone(), camera, cfg.policy)?;
        Ok(Bench {
            model,
            camera,
            policy,
            cfg,
        })
    }

    pub fn config(&self) -> &BenchConfig {
        &self.cfg
    }

    pub fn policy(&self) -> &WaypointPolicy {
        &self.policy
    }

    /// Seed of every stochastic choice made for `task`.
    pub fn task_seed(&self, task: &Task) -> u64 {
        rng::derive_seed(self.cfg.seed, &[id_hash(&task.id)])
    }

    /// High-level steps planned for `task`: fixed by the config or just
    /// enough to cover its goal horizon.
    pub fn plan_steps(&self, task: &Task) -> usize {
        self.cfg
            .plan_steps
            .unwrap_or_else(|| task.horizon.div_ceil(self.cfg.policy.horizon))
            .max(1)
    }

    fn prepare<'a>(&self, task: &'a Task) -> Result<Prepared<'a>> {
        let seed = self.task_seed(task);
        let ctx = task.policy_context(self.cfg.policy.context + 1)?;
        let wm = task.world_model(self.model.clone(), self.camera, self.cfg.wm_noise, rng::derive_seed(seed, &[0]))?;
        Ok(Prepared {
            task,
            ctx,
            wm,
            steps: self.plan_steps(task),
            seed,
        })
    }

    /// Runs all configured methods on all tasks. Tasks run in parallel; the
    /// output order follows `tasks` and `cfg.methods`.
    pub fn run(&self, tasks: &[Task]) -> BenchOutput {
        let per_task: Vec<BenchOutput> = tasks.par_iter().map(|t| self.run_task(t)).collect();
        let mut out = BenchOutput::default();
        for o in per_task {
            out.rows.extend(o.rows);
            out.plans.extend(o.plans);
            out.failures.extend(o.failures);
        }
        out
    }

    pub fn run_task(&self, task: &Task) -> BenchOutput {
        let mut out = BenchOutput::default();
        let prepared = self.prepare(task);
        for &method in &self.cfg.methods {
            let result = prepared.as_ref().map_err(|e| e.to_string()).and_then(|p| {
                let started = Instant::now();
                let mut records = self.run_method(p, method).map_err(|e| e.to_string())?;
                let wall_ms = if self.cfg.wall_time {
                    started.elapsed().as_millis() as u64
                } else {
                    0
                };
                for r in &mut records {
                    out.rows.extend(rows_for(r, wall_ms));
                }
                Ok(records)
            });
            match result {
                Ok(records) => out.plans.extend(records),
                Err(error) => out.failures.push(TaskFailure {
                    task_id: task.id.clone(),
                    method,
                    error,
                }),
            }
        }
        out
    }

    fn run_method(&self, p: &Prepared, method: Method) -> Result<Vec<PlanRecord>> {
        let task = p.task;
        let seed = rng::derive_seed(p.seed, &[method.tag()]);
        let record = |iters, samples, seed, cost, actions, hl, eval_seed, eval_samples, mje| PlanRecord {
            task_id: task.id.clone(),
            method,
            iters,
            samples,
            seed,
            cost,
            actions,
            hl,
            eval_seed,
            eval_samples,
            mje,
        };
        let miss = self.cfg.cem.miss_penalty;
        match method {
            Method::Initial => {
                let cost = observation_cost(task.current_observation(), &task.goal_observation, miss);
                Ok(vec![record(0, 0, seed, cost, Some(Vec::new()), None, seed, 0, task.initial.clone())])
            }
            Method::Unconditioned => {
                let hl = vec![WaypointSet::empty(); p.steps];
                let (mje, cost) = self.score_waypoints(p, &hl, seed, 1)?;
                Ok(vec![record(0, 0, seed, cost, None, Some(hl), seed, 1, mje)])
            }
            Method::Conditioned => {
                let (mje, cost) = self.score_goal_waypoints(p, seed, self.cfg.eval_samples)?;
                Ok(vec![record(0, 0, seed, cost, None, None, seed, self.cfg.eval_samples, mje)])
            }
            planner => {
                let space = planner.space().expect("planning method");
                let mut records = Vec::new();
                for &n in &self.cfg.samples {
                    let cem_seed = rng::derive_seed(seed, &[n as u64]);
                    let cfg = self.cfg.cem_for(space, n, p.steps, cem_seed);
                    let plan = cem_plan(&p.wm, &p.ctx, &self.policy, &task.goal_observation, &cfg)?;
                    for &iters in &self.cfg.iterations {
                        let snap = plan.after(iters, cfg.cumulative_min);
                        let eval_seed = rng::derive_seed(cem_seed, &[iters as u64]);
                        records.push(self.score_snapshot(p, snap, iters, n, cem_seed, eval_seed, planner)?);
                    }
                }
                Ok(records)
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn score_snapshot(
        &self,
        p: &Prepared,
        snap: &PlanSnapshot,
        iters: usize,
        samples: usize,
        seed: u64,
        eval_seed: u64,
        method: Method,
    ) -> Result<PlanRecord> {
        let task = p.task;
        let (mje, actions, eval_samples) = match &snap.hl {
            None => {
                let end = integrate_plan(task.current_pose(), &snap.actions);
                let mje = MjeReport::new(&end, &task.goal_pose, &self.model, &task.goal_visibility);
                (mje, Some(snap.actions.clone()), 0)
            }
            Some(hl) => {
                let (mje, _) = self.score_waypoints(p, hl, eval_seed, self.cfg.eval_samples)?;
                (mje, None, self.cfg.eval_samples)
            }
        };
        Ok(PlanRecord {
            task_id: task.id.clone(),
            method,
            iters,
            samples,
            seed,
            cost: snap.cost,
            actions,
            hl: snap.hl.clone(),
            eval_seed,
            eval_samples,
            mje,
        })
    }

    /// Recomputes a record's error from its stored plan and seeds.
    pub fn rederive(&self, task: &Task, record: &PlanRecord) -> Result<MjeReport> {
        if let Some(actions) = &record.actions {
            let end = integrate_plan(task.current_pose(), actions);
            return Ok(MjeReport::new(&end, &task.goal_pose, &self.model, &task.goal_visibility));
        }
        let p = self.prepare(task)?;
        let scored = match &record.hl {
            Some(hl) => self.score_waypoints(&p, hl, record.eval_seed, record.eval_samples)?,
            None => self.score_goal_waypoints(&p, record.eval_seed, record.eval_samples)?,
        };
        Ok(scored.0)
    }

    /// Mean error and mean final cost of `n` policy rollouts of `hl`.
    fn score_waypoints(&self, p: &Prepared, hl: &[WaypointSet], seed: u64, n: usize) -> Result<(MjeReport, f64)> {
        self.score_rollouts(p, seed, n, |wm, ctx, r| {
            let (rollouts, _, _) = lwm_chain(wm, ctx, &self.policy, hl, r)?;
            let obs = rollouts.last().map(|x| x.final_observation().clone());
            Ok((rollouts.into_iter().flat_map(|x| x.actions).collect(), obs))
        })
    }

    /// Like [`score_waypoints`](Self::score_waypoints) with the goal pose
    /// projected into the current view before every high-level step.
    fn score_goal_waypoints(&self, p: &Prepared, seed: u64, n: usize) -> Result<(MjeReport, f64)> {
        let keep = self.cfg.policy.context + 1;
        self.score_rollouts(p, seed, n, |wm, ctx, r| {
            let (mut wm, mut ctx) = (wm.clone(), ctx.clone());
            let mut actions = Vec::new();
            let mut last = None;
            for _ in 0..p.steps {
                let hl = waypoints_from_goal(&p.task.goal_pose, ctx.current_pose(), &self.model, &self.camera, false);
                let (rollout, next) = lwm_rollout(&wm, &ctx, &self.policy, &hl, r)?;
                ctx = advance_context(&ctx, &rollout, keep);
                wm = next;
                last = Some(rollout.final_observation().clone());
                actions.extend(rollout.actions);
            }
            Ok((actions, last))
        })
    }

    fn score_rollouts<F>(&self, p: &Prepared, seed: u64, n: usize, rollout: F) -> Result<(MjeReport, f64)>
    where
        F: Fn(&WorldModelState, &PolicyContext, &mut rng::Rng) -> Result<(Vec<Action>, Option<Observation>)> + Sync,
    {
        let task = p.task;
        let runs = (0..n)
            .into_par_iter()
            .map(|s| {
                let wm = p.wm.fork(rng::derive_seed(seed, &[s as u64]));
                let mut r = rng::substream(seed, &[s as u64, 1]);
                let (actions, obs) = rollout(&wm, &p.ctx, &mut r)?;
                let end = integrate_plan(task.current_pose(), &actions);
                let cost = obs.map_or(f64::INFINITY, |o| {
                    observation_cost(&o, &task.goal_observation, self.cfg.cem.miss_penalty)
                });
                Ok((MjeReport::new(&end, &task.goal_pose, &self.model, &task.goal_visibility), cost))
            })
            .collect::<Result<Vec<_>>>()?;
        let cost = runs.iter().map(|r| r.1).sum::<f64>() / n as f64;
        let reports: Vec<MjeReport> = runs.into_iter().map(|r| r.0).collect();
        let mje = MjeReport::mean(&reports, &task.goal_visibility).expect("n is positive");
        Ok((mje, cost))
    }
}

fn rows_for(r: &PlanRecord, wall_ms: u64) -> Vec<ResultRow> {
    let mut subsets = vec![
        ("leaf", Some(r.mje.leaf)),
        ("intermediate", Some(r.mje.intermediate)),
        ("all", Some(r.mje.all)),
        ("leaf-visible", r.mje.leaf_visible),
        ("leaf-hidden", r.mje.leaf_hidden),
    ];
    subsets.retain(|s| s.1.is_some());
    subsets
        .into_iter()
        .map(|(subset, v)| ResultRow {
            method: r.method.name().to_string(),
            task_id: r.task_id.clone(),
            subset: subset.to_string(),
            mje_m: v.expect("retained"),
            cost: r.cost,
            iters: r.iters,
            samples: r.samples,
            wall_ms,
            seed: r.seed,
        })
        .collect()
}

pub fn write_csv(out: impl Write, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(input: impl std::io::Read) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(csv_error)?.clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(invalid(format!("unexpected CSV columns {headers:?}")));
    }
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

fn csv_error(e: csv::Error) -> crate::Error {
    invalid(format!("csv: {e}"))
}

pub fn write_jsonl<T: Serialize>(mut out: impl Write, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
