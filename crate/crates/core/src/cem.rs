//! Cross-entropy planning toward a goal observation, either directly over
//! joint actions or over waypoint sets rolled out through the policy.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{camera_pose_of, project, LeafJoint, Waypoint, WaypointSet, IMAGE_HALF_EXTENT};
use crate::error::{invalid, Result};
use crate::lifted::lwm_chain;
use crate::policy::{PolicyContext, WaypointPolicy};
use crate::pose::{Action, POSE_DIM};
use crate::rng;
use crate::sim::{Observation, WorldModel};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SearchSpace {
    /// 48 scalars per low-level step.
    #[serde(rename = "ll")]
    LowLevel,
    /// `u, v` per leaf joint per high-level step.
    #[default]
    #[serde(rename = "hl2d")]
    Lifted2d,
    /// `u, v, depth` per leaf joint per high-level step.
    #[serde(rename = "hl3d")]
    Lifted3d,
}

impl SearchSpace {
    pub const ALL: [SearchSpace; 3] = [SearchSpace::LowLevel, SearchSpace::Lifted2d, SearchSpace::Lifted3d];

    pub fn name(self) -> &'static str {
        match self {
            SearchSpace::LowLevel => "ll",
            SearchSpace::Lifted2d => "hl2d",
            SearchSpace::Lifted3d => "hl3d",
        }
    }

    pub fn is_lifted(self) -> bool {
        self != SearchSpace::LowLevel
    }

    /// Scalars per high-level action.
    fn per_waypoint(self) -> usize {
        if self == SearchSpace::Lifted3d {
            3
        } else {
            2
        }
    }

    /// Length of one flattened search sample for `steps` high-level steps of
    /// `policy_horizon` low-level actions each.
    pub fn dimension(self, steps: usize, policy_horizon: usize) -> usize {
        match self {
            SearchSpace::LowLevel => POSE_DIM * steps * policy_horizon,
            _ => 4 * self.per_waypoint() * steps,
        }
    }
}

impl fmt::Display for SearchSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SearchSpace {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        SearchSpace::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| invalid(format!("unknown search space {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CemConfig {
    pub space: SearchSpace,
    pub iterations: usize,
    pub samples: usize,
    pub elites: usize,
    pub sigma_ll: f64,
    pub sigma_hl: f64,
    /// Initial spread of waypoint depths, meters.
    pub sigma_depth: f64,
    /// Lower bound on each refitted std, as a fraction of its initial value.
    pub sigma_floor: f64,
    /// High-level steps; low-level search covers the same number of
    /// low-level actions as the policy would produce.
    pub horizon: usize,
    /// Report the best sample over all iterations rather than the last.
    pub cumulative_min: bool,
    pub seed: u64,
    /// Clamp on each pelvis component of a low-level sample, meters.
    pub pelvis_clamp: f64,
    /// Clamp on each Euler component of a low-level sample, radians.
    pub joint_clamp: f64,
    /// Depth range of lifted-3d samples, meters.
    pub depth_range: [f64; 2],
    /// Cost weight of landmarks seen in only one of the two observations.
    pub miss_penalty: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        CemConfig {
            space: SearchSpace::Lifted2d,
            iterations: 6,
            samples: 64,
            elites: 16,
            sigma_ll: 0.05,
            sigma_hl: 0.3,
            sigma_depth: 0.3,
            sigma_floor: 0.1,
            horizon: 1,
            cumulative_min: true,
            seed: 0,
            pelvis_clamp: 0.25,
            joint_clamp: 0.4,
            depth_range: [0.1, 6.0],
            miss_penalty: 0.5,
        }
    }
}

impl CemConfig {
    pub fn for_space(space: SearchSpace) -> Self {
        CemConfig {
            space,
            ..CemConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.samples == 0 || self.horizon == 0 {
            return Err(invalid("iterations, samples and horizon must be positive"));
        }
        if self.elites == 0 || self.elites > self.samples {
            return Err(invalid(format!(
                "elite count {} must lie in 1..={}",
                self.elites, self.samples
            )));
        }
        let sig = [self.sigma_ll, self.sigma_hl, self.sigma_depth];
        if sig.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(invalid("sampling sigmas must be positive"));
        }
        if !(0.0..=1.0).contains(&self.sigma_floor) {
            return Err(invalid("sigma floor must lie in [0, 1]"));
        }
        if !(self.depth_range[0] > 0.0 && self.depth_range[0] < self.depth_range[1]) {
            return Err(invalid("depth range must be positive and increasing"));
        }
        Ok(())
    }
}

/// Mean image distance over landmarks seen in both observations, plus
/// `miss_penalty` times the fraction of all seen landmarks that appear in
/// only one of them. Two empty observations cost `miss_penalty`.
pub fn observation_cost(pred: &Observation, goal: &Observation, miss_penalty: f64) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (a, b) = (&pred.features, &goal.features);
    let (mut common, mut only, mut dist) = (0usize, 0usize, 0.0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x.id == y.id => {
                dist += ((x.u - y.u).powi(2) + (x.v - y.v).powi(2)).sqrt();
                common += 1;
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x.id < y.id => {
                only += 1;
                i += 1;
            }
            (Some(_), None) => {
                only += 1;
                i += 1;
            }
            _ => {
                only += 1;
                j += 1;
            }
        }
    }
    let union = common + only;
    if union == 0 {
        return miss_penalty;
    }
    let matched = if common > 0 { dist / common as f64 } else { 0.0 };
    matched + miss_penalty * only as f64 / union as f64
}

/// Default depth for a waypoint whose depth cannot be inferred.
const FALLBACK_DEPTH: f64 = 1.0;

/// Initial mean of one high-level step: each leaf joint's current
/// projection when visible, otherwise the image centre. Lifted-3d appends the
/// policy's inferred depth at that point.
pub fn sample_mean_init(ctx: &PolicyContext, policy: &WaypointPolicy, space: SearchSpace) -> Vec<f64> {
    let pose = ctx.current_pose();
    let cam = policy.camera();
    let cam_pose = camera_pose_of(pose, policy.model(), cam);
    let frames = policy.model().frames(pose);
    let mut out = Vec::with_capacity(12);
    for leaf in LeafJoint::ALL {
        let pr = project(&frames.position(leaf.joint()), &cam_pose, cam);
        let uv = if pr.visible { pr.uv } else { [0.0, 0.0] };
        out.extend_from_slice(&uv);
        if space == SearchSpace::Lifted3d {
            let w = Waypoint {
                joint: leaf,
                uv,
                depth: None,
            };
            let depth = heuristic_depth(&w, ctx, policy).unwrap_or(FALLBACK_DEPTH);
            out.push(depth);
        }
    }
    out
}

fn heuristic_depth(w: &Waypoint, ctx: &PolicyContext, policy: &WaypointPolicy) -> Option<f64> {
    let mut cfg = *policy.config();
    cfg.depth_mode = crate::policy::DepthMode::Heuristic2d;
    let heuristic = WaypointPolicy::new(policy.model().clone(), *policy.camera(), cfg).ok()?;
    let goal = heuristic.backproject_waypoint(w, ctx)?;
    let cam_pose = camera_pose_of(ctx.current_pose(), policy.model(), policy.camera());
    Some(cam_pose.apply_inverse(&goal).z)
}

/// One candidate plan and its cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanSnapshot {
    pub cost: f64,
    pub actions: Vec<Action>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hl: Option<Vec<WaypointSet>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub space: SearchSpace,
    pub best_actions: Vec<Action>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_hl: Option<Vec<WaypointSet>>,
    pub best_cost: f64,
    /// Lowest cost seen up to and including each iteration.
    pub cost_history: Vec<f64>,
    /// Lowest cost within each iteration alone.
    pub raw_cost_history: Vec<f64>,
    /// Best plan so far after each iteration.
    pub cumulative: Vec<PlanSnapshot>,
    /// Best plan of each iteration alone.
    pub per_iteration: Vec<PlanSnapshot>,
    pub samples_evaluated: usize,
}

impl PlanResult {
    /// The plan reported after `iterations` iterations (clamped to the run).
    pub fn after(&self, iterations: usize, cumulative_min: bool) -> &PlanSnapshot {
        let list = if cumulative_min { &self.cumulative } else { &self.per_iteration };
        &list[iterations.clamp(1, list.len()) - 1]
    }
}

struct Evaluated {
    cost: f64,
    actions: Vec<Action>,
    hl: Option<Vec<WaypointSet>>,
    vector: Vec<f64>,
}

/// Plans toward `goal` from the current world-model state. Results depend
/// only on the inputs and `cfg.seed`.
pub fn cem_plan<W: WorldModel>(
    state: &W,
    ctx: &PolicyContext,
    policy: &WaypointPolicy,
    goal: &Observation,
    cfg: &CemConfig,
) -> Result<PlanResult> {
    cfg.validate()?;
    if !state.latest().same_view(ctx.latest_observation()) {
        return Err(invalid(
            "policy context and world model disagree on the latest observation",
        ));
    }
    let t = policy.config().horizon;
    let dim = cfg.space.dimension(cfg.horizon, t);
    let (mut mean, init_std, lo, hi) = match cfg.space {
        SearchSpace::LowLevel => {
            let (lo, hi): (Vec<f64>, Vec<f64>) = (0..dim)
                .map(|i| {
                    let c = if i % POSE_DIM < 3 { cfg.pelvis_clamp } else { cfg.joint_clamp };
                    (-c, c)
                })
                .unzip();
            (vec![0.0; dim], vec![cfg.sigma_ll; dim], lo, hi)
        }
        space => {
            let step = sample_mean_init(ctx, policy, space);
            let per = space.per_waypoint();
            let mut std = Vec::with_capacity(dim);
            let (mut lo, mut hi) = (Vec::with_capacity(dim), Vec::with_capacity(dim));
            for i in 0..dim {
                if per == 3 && i % 3 == 2 {
                    std.push(cfg.sigma_depth);
                    lo.push(cfg.depth_range[0]);
                    hi.push(cfg.depth_range[1]);
                } else {
                    std.push(cfg.sigma_hl);
                    lo.push(-IMAGE_HALF_EXTENT);
                    hi.push(IMAGE_HALF_EXTENT);
                }
            }
            let mean: Vec<f64> = step.iter().cycle().take(dim).copied().collect();
            let mean = mean.iter().zip(lo.iter().zip(&hi)).map(|(m, (l, h))| m.clamp(*l, *h)).collect();
            (mean, std, lo, hi)
        }
    };
    let floor: Vec<f64> = init_std.iter().map(|s| s * cfg.sigma_floor).collect();
    let mut std = init_std;

    let mut best: Option<PlanSnapshot> = None;
    let mut result = PlanResult {
        space: cfg.space,
        best_actions: Vec::new(),
        best_hl: None,
        best_cost: f64::INFINITY,
        cost_history: Vec::with_capacity(cfg.iterations),
        raw_cost_history: Vec::with_capacity(cfg.iterations),
        cumulative: Vec::with_capacity(cfg.iterations),
        per_iteration: Vec::with_capacity(cfg.iterations),
        samples_evaluated: 0,
    };

    for iter in 0..cfg.iterations {
        let samples: Vec<Evaluated> = (0..cfg.samples)
            .into_par_iter()
            .map(|j| {
                let tags = [iter as u64, j as u64];
                let mut r = rng::substream(cfg.seed, &tags);
                let vector: Vec<f64> = (0..dim)
                    .map(|i| {
                        let eps: f64 = if j == 0 { 0.0 } else { StandardNormal.sample(&mut r) };
                        (mean[i] + std[i] * eps).clamp(lo[i], hi[i])
                    })
                    .collect();
                evaluate(state, ctx, policy, goal, cfg, vector, t, rng::derive_seed(cfg.seed, &tags))
            })
            .collect();
        result.samples_evaluated += samples.len();

        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.sort_by(|&a, &b| samples[a].cost.total_cmp(&samples[b].cost).then(a.cmp(&b)));
        let top = &samples[order[0]];
        let snapshot = PlanSnapshot {
            cost: top.cost,
            actions: top.actions.clone(),
            hl: top.hl.clone(),
        };
        if best.as_ref().is_none_or(|b| top.cost < b.cost) {
            best = Some(snapshot.clone());
        }
        result.raw_cost_history.push(top.cost);
        result.per_iteration.push(snapshot);
        let b = best.clone().expect("at least one sample");
        result.cost_history.push(b.cost);
        result.cumulative.push(b);

        let elites = &order[..cfg.elites];
        let first = samples[elites[0]].cost;
        let degenerate = samples.iter().all(|s| s.cost == first);
        if !degenerate {
            let m = elites.len() as f64;
            for i in 0..dim {
                let mu = elites.iter().map(|&e| samples[e].vector[i]).sum::<f64>() / m;
                let var = elites.iter().map(|&e| (samples[e].vector[i] - mu).powi(2)).sum::<f64>() / m;
                mean[i] = mu;
                std[i] = var.sqrt().max(floor[i]);
            }
        }
    }

    let chosen = if cfg.cumulative_min {
        result.cumulative.last()
    } else {
        result.per_iteration.last()
    }
    .cloned()
    .expect("at least one iteration");
    result.best_actions = chosen.actions;
    result.best_hl = chosen.hl;
    result.best_cost = chosen.cost;
    Ok(result)
}

/// Decodes a flattened lifted sample into waypoint sets.
pub fn decode_waypoints(vector: &[f64], space: SearchSpace) -> Vec<WaypointSet> {
    let per = space.per_waypoint();
    vector
        .chunks(4 * per)
        .map(|chunk| {
            let mut set = WaypointSet::empty();
            for (leaf, w) in LeafJoint::ALL.into_iter().zip(chunk.chunks(per)) {
                set.insert(Waypoint {
                    joint: leaf,
                    uv: [w[0], w[1]],
                    depth: (per == 3).then(|| w[2]),
                });
            }
            set
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn evaluate<W: WorldModel>(
    state: &W,
    ctx: &PolicyContext,
    policy: &WaypointPolicy,
    goal: &Observation,
    cfg: &CemConfig,
    vector: Vec<f64>,
    policy_horizon: usize,
    seed: u64,
) -> Evaluated {
    let failed = |vector| Evaluated {
        cost: f64::INFINITY,
        actions: Vec::new(),
        hl: None,
        vector,
    };
    match cfg.space {
        SearchSpace::LowLevel => {
            let mut wm = state.fork(seed);
            let mut actions = Vec::with_capacity(cfg.horizon * policy_horizon);
            let mut last = None;
            for chunk in vector.chunks(POSE_DIM) {
                let Ok(a) = Action::from_flat(chunk) else { return failed(vector) };
                let Ok(obs) = wm.step(&a) else { return failed(vector) };
                actions.push(a);
                last = Some(obs);
            }
            let cost = last.map_or(f64::INFINITY, |o| observation_cost(&o, goal, cfg.miss_penalty));
            Evaluated {
                cost,
                actions,
                hl: None,
                vector,
            }
        }
        space => {
            let plan = decode_waypoints(&vector, space);
            let wm = state.fork(seed);
            let mut r = rng::substream(seed, &[1]);
            match lwm_chain(&wm, ctx, policy, &plan, &mut r) {
                Ok((rollouts, _, _)) => {
                    let cost = rollouts
                        .last()
                        .map_or(f64::INFINITY, |x| observation_cost(x.final_observation(), goal, cfg.miss_penalty));
                    Evaluated {
                        cost,
                        actions: rollouts.into_iter().flat_map(|x| x.actions).collect(),
                        hl: Some(plan),
                        vector,
                    }
                }
                Err(_) => failed(vector),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Camera;
    use crate::policy::{DepthMode, PolicyConfig};
    use crate::pose::{integrate_plan, Pose};
    use crate::rotation::{EulerAngles, Vec3};
    use crate::scene::Scene;
    use crate::sim::{render_observation, Feature, WorldModelState};
    use crate::skeleton::{Joint, KinematicModel};
    use std::sync::Arc;

    fn obs(features: &[(u32, f64, f64)]) -> Observation {
        Observation {
            timestamp: 0,
            features: features.iter().map(|&(id, u, v)| Feature { id, u, v }).collect(),
        }
    }

    #[test]
    fn cost_cases() {
        let a = obs(&[(1, 0.1, 0.2), (4, -0.3, 0.0)]);
        assert_eq!(observation_cost(&a, &a, 0.5), 0.0);
        let shifted = obs(&[(1, 0.2, 0.2), (4, -0.2, 0.0)]);
        assert!((observation_cost(&shifted, &a, 0.5) - 0.1).abs() < 1e-12);
        let disjoint = obs(&[(2, 0.0, 0.0), (3, 0.0, 0.0)]);
        assert!((observation_cost(&disjoint, &a, 0.5) - 0.5).abs() < 1e-12);
        assert_eq!(observation_cost(&obs(&[]), &obs(&[]), 0.5), 0.5);
        // One of three ids unmatched: 1/3 of the penalty on top of the distance.
        let partial = obs(&[(1, 0.1, 0.2), (9, 0.0, 0.0)]);
        let c = observation_cost(&partial, &obs(&[(1, 0.1, 0.2), (4, 0.0, 0.0)]), 0.6);
        assert!((c - 0.6 * 2.0 / 3.0).abs() < 1e-12);
    }

    struct Setup {
        wm: WorldModelState,
        ctx: PolicyContext,
        policy: WaypointPolicy,
        start: Pose,
    }

    fn setup(noise: f64) -> Setup {
        let scene = Arc::new(Scene::default_room("room", &mut rng::from_seed(5)).unwrap());
        let model = Arc::new(KinematicModel::default());
        let cam = Camera::default();
        let mut start = Pose::reference();
        start.pelvis_position = Vec3::new(-0.5, -1.0, -1.5);
        start.set_angles(Joint::Head, EulerAngles::new(0.0, -0.25, 0.0));
        let o = render_observation(&start, &scene, &model, &cam);
        let wm = WorldModelState::new(scene, model.clone(), cam, start, vec![o.clone()], noise, 1).unwrap();
        let ctx = PolicyContext::new(vec![o], vec![start]).unwrap();
        let policy = WaypointPolicy::new(model, cam, PolicyConfig::default().deterministic()).unwrap();
        Setup { wm, ctx, policy, start }
    }

    fn small(space: SearchSpace) -> CemConfig {
        CemConfig {
            iterations: 3,
            samples: 16,
            elites: 4,
            ..CemConfig::for_space(space)
        }
    }

    #[test]
    fn current_goal_is_solved_trivially() {
        let s = setup(0.0);
        let goal = s.ctx.latest_observation().clone();
        let zero_cost = {
            let mut wm = s.wm.clone();
            let mut last = None;
            for _ in 0..8 {
                last = Some(wm.step(&Action::zero()).unwrap());
            }
            observation_cost(&last.unwrap(), &goal, 0.5)
        };
        for space in SearchSpace::ALL {
            let r = cem_plan(&s.wm, &s.ctx, &s.policy, &goal, &small(space)).unwrap();
            assert!(r.best_cost <= zero_cost, "{space}");
        }
        let one = CemConfig {
            iterations: 1,
            ..CemConfig::default()
        };
        let r = cem_plan(&s.wm, &s.ctx, &s.policy, &goal, &one).unwrap();
        assert_eq!(r.best_cost, 0.0);
    }

    #[test]
    fn plans_are_seeded() {
        let s = setup(0.005);
        let mut goal_pose = s.start;
        goal_pose.pelvis_position.z += 1.0;
        let goal = render_observation(&goal_pose, s.wm.scene(), s.wm.model(), s.wm.camera());
        for space in SearchSpace::ALL {
            let cfg = small(space);
            let a = cem_plan(&s.wm, &s.ctx, &s.policy, &goal, &cfg).unwrap();
            let b = cem_plan(&s.wm, &s.ctx, &s.policy, &goal, &cfg).unwrap();
            assert_eq!(a, b);
            let c = cem_plan(&s.wm, &s.ctx, &s.policy, &goal, &CemConfig { seed: 9, ..cfg }).unwrap();
            assert_ne!(a.raw_cost_history, c.raw_cost_history);
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let s = setup(0.005);
        let mut goal_pose = s.start;
        goal_pose.pelvis_position.x += 0.6;
        let goal = render_observation(&goal_pose, s.wm.scene(), s.wm.model(), s.wm.camera());
        let cfg = small(SearchSpace::Lifted2d);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| cem_plan(&s.wm, &s.ctx, &s.policy, &goal, &cfg).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn cumulative_history_never_rises() {
        let s = setup(0.005);
        let mut goal_pose = s.start;
        goal_pose.pelvis_position.z += 1.2;
        let goal = render_observation(&goal_pose, s.wm.scene(), s.wm.model(), s.wm.camera());
        for space in SearchSpace::ALL {
            let r = cem_plan(&s.wm, &s.ctx, &s.policy, &goal, &small(space)).unwrap();
            assert_eq!(r.cost_history.len(), 3);
            assert!(r.cost_history.windows(2).all(|w| w[1] <= w[0]));
            for (c, raw) in r.cost_history.iter().zip(&r.raw_cost_history) {
                assert!(c <= raw);
            }
            let raw = cem_plan(&s.wm, &s.ctx, &s.policy, &goal, &CemConfig { cumulative_min: false, ..small(space) })
                .unwrap();
            assert_eq!(raw.best_cost, *raw.raw_cost_history.last().unwrap());
        }
    }

    #[test]
    fn more_samples_never_hurt_the_first_iteration() {
        let s = setup(0.005);
        let mut goal_pose = s.start;
        goal_pose.pelvis_position += Vec3::new(0.4, 0.0, 0.9);
        let goal = render_observation(&goal_pose, s.wm.scene(), s.wm.model(), s.wm.camera());
        for space in SearchSpace::ALL {
            for seed in 0..3 {
                let base = CemConfig {
                    iterations: 1,
                    seed,
                    ..CemConfig::for_space(space)
                };
                let few = cem_plan(&s.wm, &s.ctx, &s.policy, &goal, &CemConfig { samples: 16, elites: 4, ..base }).unwrap();
                let many = cem_plan(&s.wm, &s.ctx, &s.policy, &goal, &base).unwrap();
                assert!(many.best_cost <= few.best_cost);
            }
        }
    }

    #[test]
    fn search_dimensions() {
        assert_eq!(SearchSpace::Lifted2d.dimension(1, 8), 8);
        assert_eq!(SearchSpace::Lifted3d.dimension(1, 8), 12);
        assert_eq!(SearchSpace::LowLevel.dimension(1, 8), 48 * 8);
        assert_eq!(SearchSpace::Lifted2d.dimension(3, 8), 24);
        let s = setup(0.0);
        let m2 = sample_mean_init(&s.ctx, &s.policy, SearchSpace::Lifted2d);
        assert_eq!(m2.len(), 8);
        let m3 = sample_mean_init(&s.ctx, &s.policy, SearchSpace::Lifted3d);
        assert_eq!(m3.len(), 12);
        let sets = decode_waypoints(&m3, SearchSpace::Lifted3d);
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].flatten(true), m3);
    }

    #[test]
    fn mean_init_uses_visible_projections() {
        let s = setup(0.0);
        // Nothing visible when standing: every joint sits below or behind the camera.
        assert_eq!(sample_mean_init(&s.ctx, &s.policy, SearchSpace::Lifted2d), vec![0.0; 8]);

        let mut p = s.start;
        p.set_angles(Joint::RUpperArm, EulerAngles::new(0.0, 1.4, 0.0));
        let o = render_observation(&p, s.wm.scene(), s.wm.model(), s.wm.camera());
        let ctx = PolicyContext::new(vec![o], vec![p]).unwrap();
        let cam_pose = camera_pose_of(&p, s.policy.model(), s.policy.camera());
        let hand = project(&s.policy.model().frames(&p).position(Joint::RHand), &cam_pose, s.policy.camera());
        assert!(hand.visible);
        let m = sample_mean_init(&ctx, &s.policy, SearchSpace::Lifted2d);
        assert_eq!(m, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, hand.uv[0], hand.uv[1]]);

        let policy3 = WaypointPolicy::new(
            s.policy.model().clone(),
            *s.policy.camera(),
            PolicyConfig {
                depth_mode: DepthMode::Given3d,
                ..*s.policy.config()
            },
        )
        .unwrap();
        let m3 = sample_mean_init(&ctx, &policy3, SearchSpace::Lifted3d);
        assert!((m3[11] - hand.depth).abs() < 1e-9);
    }

    #[test]
    fn reported_actions_reproduce_the_plan() {
        let s = setup(0.0);
        let mut goal_pose = s.start;
        goal_pose.pelvis_position.z += 1.0;
        let goal = render_observation(&goal_pose, s.wm.scene(), s.wm.model(), s.wm.camera());
        let r = cem_plan(&s.wm, &s.ctx, &s.policy, &goal, &CemConfig::default()).unwrap();
        assert_eq!(r.best_actions.len(), 8);
        let end = integrate_plan(&s.start, &r.best_actions);
        let o = render_observation(&end, s.wm.scene(), s.wm.model(), s.wm.camera());
        assert!((observation_cost(&o, &goal, 0.5) - r.best_cost).abs() < 1e-9);
        assert!(r.best_cost < observation_cost(s.ctx.latest_observation(), &goal, 0.5));
    }
}
