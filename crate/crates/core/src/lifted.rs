//! The lifted world model: policy and low-level world model composed into a
//! map from one waypoint set to a `T`-step observation rollout.

use serde::{Deserialize, Serialize};

use crate::camera::WaypointSet;
use crate::error::{invalid, Result};
use crate::policy::{PolicyContext, WaypointPolicy};
use crate::pose::{integrate_plan, Action, Pose};
use crate::sim::{Observation, WorldModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LwmRollout {
    pub actions: Vec<Action>,
    pub observations: Vec<Observation>,
    /// The start pose with the actions integrated; diagnostic only.
    pub final_pose_estimate: Pose,
}

impl LwmRollout {
    pub fn final_observation(&self) -> &Observation {
        self.observations.last().expect("rollouts have at least one step")
    }

    /// Poses obtained by integrating each prefix of the actions from `start`.
    pub fn integrated_poses(&self, start: &Pose) -> Vec<Pose> {
        let mut p = *start;
        self.actions
            .iter()
            .map(|a| {
                p = crate::pose::apply_action(&p, a);
                p
            })
            .collect()
    }
}

/// Runs one high-level action. `state` is left untouched; the advanced
/// world-model copy is returned next to the rollout.
pub fn lwm_rollout<W: WorldModel>(
    state: &W,
    ctx: &PolicyContext,
    policy: &WaypointPolicy,
    hl: &WaypointSet,
    rng: &mut impl rand::Rng,
) -> Result<(LwmRollout, W)> {
    if !state.latest().same_view(ctx.latest_observation()) {
        return Err(invalid(
            "policy context and world model disagree on the latest observation",
        ));
    }
    let actions = policy.generate_actions(ctx, hl, rng)?;
    let mut wm = state.clone();
    let observations = actions.iter().map(|a| wm.step(a)).collect::<Result<Vec<_>>>()?;
    let final_pose_estimate = integrate_plan(ctx.current_pose(), &actions);
    Ok((
        LwmRollout {
            actions,
            observations,
            final_pose_estimate,
        },
        wm,
    ))
}

/// Context for the next high-level step: the rollout's observations paired
/// with the poses integrated from its actions.
pub fn advance_context(ctx: &PolicyContext, rollout: &LwmRollout, keep: usize) -> PolicyContext {
    let mut next = ctx.clone();
    let poses = rollout.integrated_poses(ctx.current_pose());
    for (obs, pose) in rollout.observations.iter().zip(poses) {
        next.push(obs.clone(), pose, keep);
    }
    next
}

/// Runs a sequence of high-level actions, carrying world-model and policy
/// context from one to the next.
pub fn lwm_chain<W: WorldModel>(
    state: &W,
    ctx: &PolicyContext,
    policy: &WaypointPolicy,
    plan: &[WaypointSet],
    rng: &mut impl rand::Rng,
) -> Result<(Vec<LwmRollout>, W, PolicyContext)> {
    let keep = policy.config().context + 1;
    let mut wm = state.clone();
    let mut ctx = ctx.clone();
    let mut out = Vec::with_capacity(plan.len());
    for hl in plan {
        let (r, next) = lwm_rollout(&wm, &ctx, policy, hl, rng)?;
        ctx = advance_context(&ctx, &r, keep);
        wm = next;
        out.push(r);
    }
    Ok((out, wm, ctx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{waypoints_from_goal, Camera, LeafJoint};
    use crate::policy::PolicyConfig;
    use crate::rng;
    use crate::rotation::{EulerAngles, Vec3};
    use crate::scene::Scene;
    use crate::sim::{render_observation, WorldModelState};
    use crate::skeleton::{Joint, KinematicModel};
    use std::sync::Arc;

    struct Fixture {
        wm: WorldModelState,
        ctx: PolicyContext,
        policy: WaypointPolicy,
        start: Pose,
    }

    fn fixture(noise: f64, goal_noise: f64) -> Fixture {
        let scene = Arc::new(Scene::corridor("hall", 12.0, 1.5).unwrap());
        let model = Arc::new(KinematicModel::default());
        let cam = Camera::default();
        let mut start = Pose::reference();
        start.pelvis_position = Vec3::new(0.0, -1.0, 0.0);
        start.set_angles(Joint::Head, EulerAngles::new(0.0, -0.3, 0.0));
        let obs = render_observation(&start, &scene, &model, &cam);
        let wm = WorldModelState::new(scene, model.clone(), cam, start, vec![obs.clone()], noise, 3).unwrap();
        let ctx = PolicyContext::new(vec![obs], vec![start]).unwrap();
        let cfg = PolicyConfig {
            goal_noise,
            ..PolicyConfig::default()
        };
        let policy = WaypointPolicy::new(model, cam, cfg).unwrap();
        Fixture { wm, ctx, policy, start }
    }

    #[test]
    fn stationary_rollout_keeps_the_view() {
        let f = fixture(0.0, 0.0);
        let hl = waypoints_from_goal(&f.start, &f.start, f.policy.model(), f.policy.camera(), false);
        let (r, _) = lwm_rollout(&f.wm, &f.ctx, &f.policy, &hl, &mut rng::from_seed(0)).unwrap();
        assert_eq!(r.observations.len(), 8);
        assert!(r.final_observation().same_view(f.ctx.latest_observation()) || hl.is_empty());
        let empty = WaypointSet::empty();
        let (r, _) = lwm_rollout(&f.wm, &f.ctx, &f.policy, &empty, &mut rng::from_seed(0)).unwrap();
        assert!(r.final_observation().same_view(f.ctx.latest_observation()));
    }

    #[test]
    fn observations_match_rendered_integrated_poses() {
        let f = fixture(0.0, 0.0);
        let hl = WaypointSet::empty().with(LeafJoint::Pelvis, [0.05, 0.3], None);
        let before = f.wm.context().clone();
        let (r, wm) = lwm_rollout(&f.wm, &f.ctx, &f.policy, &hl, &mut rng::from_seed(0)).unwrap();
        assert_eq!(f.wm.context(), &before);
        for (obs, pose) in r.observations.iter().zip(r.integrated_poses(&f.start)) {
            let direct = render_observation(&pose, f.wm.scene(), f.wm.model(), f.wm.camera());
            assert_eq!(obs.features.len(), direct.features.len());
            for (a, b) in obs.features.iter().zip(&direct.features) {
                assert_eq!(a.id, b.id);
                assert!((a.u - b.u).abs() < 1e-9 && (a.v - b.v).abs() < 1e-9);
            }
        }
        assert_eq!(wm.latest(), r.final_observation());
        // Walking forward down the corridor spreads the wall landmarks outward.
        let spread = |o: &Observation| {
            o.features.iter().map(|f| f.u.abs()).sum::<f64>() / o.features.len().max(1) as f64
        };
        assert!(r.final_pose_estimate.pelvis_position.z > f.start.pelvis_position.z + 0.5);
        let common: Vec<u32> = r
            .final_observation()
            .features
            .iter()
            .map(|x| x.id)
            .filter(|id| f.ctx.latest_observation().feature(*id).is_some())
            .collect();
        assert!(!common.is_empty());
        let pick = |o: &Observation| Observation {
            timestamp: 0,
            features: o.features.iter().filter(|x| common.contains(&x.id)).copied().collect(),
        };
        assert!(spread(&pick(r.final_observation())) > spread(&pick(f.ctx.latest_observation())));
    }

    #[test]
    fn seeded_rollouts_repeat() {
        let f = fixture(0.005, 0.03);
        let hl = WaypointSet::empty().with(LeafJoint::Pelvis, [0.0, 0.3], None);
        let a = lwm_rollout(&f.wm, &f.ctx, &f.policy, &hl, &mut rng::from_seed(7)).unwrap().0;
        let b = lwm_rollout(&f.wm, &f.ctx, &f.policy, &hl, &mut rng::from_seed(7)).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn chain_equals_repeated_rollouts() {
        let f = fixture(0.0, 0.0);
        let plan = [
            WaypointSet::empty().with(LeafJoint::Pelvis, [0.0, 0.3], None),
            WaypointSet::empty().with(LeafJoint::Pelvis, [0.1, 0.35], None),
        ];
        let (chained, _, _) = lwm_chain(&f.wm, &f.ctx, &f.policy, &plan, &mut rng::from_seed(1)).unwrap();
        let mut rng = rng::from_seed(1);
        let (r1, wm1) = lwm_rollout(&f.wm, &f.ctx, &f.policy, &plan[0], &mut rng).unwrap();
        let ctx1 = advance_context(&f.ctx, &r1, 4);
        let (r2, _) = lwm_rollout(&wm1, &ctx1, &f.policy, &plan[1], &mut rng).unwrap();
        assert_eq!(chained, vec![r1, r2]);
    }

    #[test]
    fn mismatched_context_is_rejected() {
        let f = fixture(0.0, 0.0);
        let mut other = f.start;
        other.set_angles(Joint::Pelvis, EulerAngles::heading(3.0));
        let obs = render_observation(&other, f.wm.scene(), f.wm.model(), f.wm.camera());
        let ctx = PolicyContext::new(vec![obs], vec![other]).unwrap();
        assert!(lwm_rollout(&f.wm, &ctx, &f.policy, &WaypointSet::empty(), &mut rng::from_seed(0)).is_err());
    }
}
