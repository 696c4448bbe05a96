//! One pass/fail line per acceptance criterion. Runs without the libtest
//! harness so the lines print in order, and exits non-zero on any failure.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Matrix4, Vector3};
use rand::Rng;

use lwm::bench::{generate_tasks, holdout_scenes, training_scenes, write_csv, Bench, BenchConfig, Method, ResultRow, TaskConfig};
use lwm::camera::{backproject, camera_pose_of, project, Camera, IMAGE_HALF_EXTENT};
use lwm::policy::sample_mask;
use lwm::pose::{action_between, apply_action, Pose};
use lwm::rng;
use lwm::rotation::{euler_to_matrix, EulerAngles, Vec3};
use lwm::skeleton::{forward_kinematics, Joint, KinematicModel, JOINT_COUNT};

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn random_pose(r: &mut impl Rng) -> Pose {
    let mut p = Pose::reference();
    p.pelvis_position = Vec3::new(r.random_range(-3.0..3.0), r.random_range(-1.5..-0.5), r.random_range(-3.0..3.0));
    for j in Joint::ALL {
        p.set_angles(
            j,
            EulerAngles::new(r.random_range(-3.0..3.0), r.random_range(-1.5..1.5), r.random_range(-3.0..3.0)),
        );
    }
    p
}

fn kinematics_round_trip() -> Outcome {
    let started = Instant::now();
    let mut r = rng::from_seed(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (p, q) = (random_pose(&mut r), random_pose(&mut r));
        let back = apply_action(&p, &action_between(&p, &q));
        worst = worst.max((back.pelvis_position - q.pelvis_position).norm());
        for j in Joint::ALL {
            let a = euler_to_matrix(&back.angles(j)).unwrap();
            let b = euler_to_matrix(&q.angles(j)).unwrap();
            worst = worst.max((a - b).norm());
        }
    }
    let secs = started.elapsed().as_secs_f64();
    Outcome {
        name: "kinematics round trip",
        pass: worst <= 1e-9 && secs < 5.0,
        detail: format!("max error {worst:.2e} over 1000 pairs (<= 1e-9), {secs:.2} s (< 5 s)"),
    }
}

/// Homogeneous transform of intrinsic Z-X-Y Euler angles, built from sines
/// and cosines directly.
fn oracle_rotation(e: &EulerAngles) -> Matrix3<f64> {
    let [a, b, c] = e.0;
    let rz = Matrix3::new(a.cos(), -a.sin(), 0.0, a.sin(), a.cos(), 0.0, 0.0, 0.0, 1.0);
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, b.cos(), -b.sin(), 0.0, b.sin(), b.cos());
    let ry = Matrix3::new(c.cos(), 0.0, c.sin(), 0.0, 1.0, 0.0, -c.sin(), 0.0, c.cos());
    rz * rx * ry
}

fn homogeneous(r: &Matrix3<f64>, t: &Vector3<f64>) -> Matrix4<f64> {
    let mut h = Matrix4::identity();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    h.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
    h
}

fn oracle_fk(p: &Pose, m: &KinematicModel) -> [Vector3<f64>; JOINT_COUNT] {
    use Joint::*;
    let parent_of = |j: Joint| match j {
        Pelvis => None,
        L5 => Some(Pelvis),
        L3 => Some(L5),
        T12 => Some(L3),
        T8 => Some(T12),
        Neck => Some(T8),
        Head => Some(Neck),
        RShoulder | LShoulder => Some(T8),
        RUpperArm => Some(RShoulder),
        RForearm => Some(RUpperArm),
        RHand => Some(RForearm),
        LUpperArm => Some(LShoulder),
        LForearm => Some(LUpperArm),
        LHand => Some(LForearm),
    };
    let mut frames = [Matrix4::identity(); JOINT_COUNT];
    for j in Joint::ALL {
        let rot = homogeneous(&oracle_rotation(&p.angles(j)), &Vector3::zeros());
        frames[j.index()] = match parent_of(j) {
            None => homogeneous(&Matrix3::identity(), &p.pelvis_position) * rot,
            Some(par) => frames[par.index()] * rot * homogeneous(&Matrix3::identity(), &m.offset(j)),
        };
    }
    frames.map(|f| Vector3::new(f[(0, 3)], f[(1, 3)], f[(2, 3)]))
}

fn fk_oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let m = KinematicModel::default();
    let mut r = rng::from_seed(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let p = random_pose(&mut r);
        let got = forward_kinematics(&p, &m);
        for (a, b) in got.0.iter().zip(oracle_fk(&p, &m)) {
            worst = worst.max((a - b).norm());
        }
    }
    let secs = started.elapsed().as_secs_f64();
    Outcome {
        name: "FK oracle equivalence",
        pass: worst <= 1e-12 && secs < 5.0,
        detail: format!("max deviation {worst:.2e} m over 1000 poses (<= 1e-12), {secs:.2} s (< 5 s)"),
    }
}

fn projection_round_trip() -> Outcome {
    let m = KinematicModel::default();
    let cam = Camera::default();
    let mut r = rng::from_seed(3);
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < 1000 {
        let cam_pose = camera_pose_of(&random_pose(&mut r), &m, &cam);
        let z = r.random_range(cam.near_plane..10.0);
        let uv = [
            r.random_range(-IMAGE_HALF_EXTENT..IMAGE_HALF_EXTENT),
            r.random_range(-IMAGE_HALF_EXTENT..IMAGE_HALF_EXTENT),
        ];
        let local = Vec3::new(uv[0] * z / cam.focal, uv[1] * z / cam.focal, z);
        let world = cam_pose.rotation * local + cam_pose.translation;
        let pr = project(&world, &cam_pose, &cam);
        if !pr.visible {
            continue;
        }
        checked += 1;
        worst = worst.max((backproject(pr.uv, pr.depth, &cam_pose, &cam) - world).norm());
    }
    Outcome {
        name: "projection round trip",
        pass: worst <= 1e-9,
        detail: format!("max error {worst:.2e} m over 1000 visible points (<= 1e-9)"),
    }
}

fn mask_statistics() -> Outcome {
    let mut r = rng::from_seed(4);
    let n = 100_000;
    let (mut all_visible, mut masked) = (0usize, [0usize; 4]);
    for _ in 0..n {
        let m = sample_mask(&mut r);
        if !m.contains(&true) {
            all_visible += 1;
        }
        for i in 0..4 {
            masked[i] += m[i] as usize;
        }
    }
    let p_all = all_visible as f64 / n as f64;
    let marginals = masked.map(|k| k as f64 / n as f64);
    let pass = (p_all - 0.53125).abs() <= 0.01 && marginals.iter().all(|p| (p - 0.25).abs() <= 0.01);
    Outcome {
        name: "mask statistics",
        pass,
        detail: format!(
            "all-visible {p_all:.4} (0.53125 +/- 0.01), marginals {:.4?} (0.25 +/- 0.01)",
            marginals
        ),
    }
}

fn mean_of(rows: &[ResultRow], method: &str, iters: usize, samples: usize) -> f64 {
    let v: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == method && r.subset == "all" && r.iters == iters && r.samples == samples)
        .map(|r| r.mje_m)
        .collect();
    assert!(!v.is_empty(), "no rows for {method} at {iters}x{samples}");
    v.iter().sum::<f64>() / v.len() as f64
}

struct Suite {
    rows: Vec<ResultRow>,
    failures: usize,
    elapsed: Duration,
}

fn run_suite(scenes: &str, count: usize, horizon: usize, cfg: BenchConfig, workers: usize) -> Suite {
    let model = Arc::new(KinematicModel::default());
    let cam = Camera::default();
    let scene_set = if scenes == "holdout" { holdout_scenes() } else { training_scenes() }.unwrap();
    let task_cfg = TaskConfig {
        suite: scenes.into(),
        count,
        horizon,
        ..TaskConfig::default()
    };
    let tasks = generate_tasks(&scene_set, &model, &cam, &task_cfg).unwrap();
    let bench = Bench::new(model, cam, cfg).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
    let started = Instant::now();
    let out = pool.install(|| bench.run(&tasks));
    Suite {
        rows: out.rows,
        failures: out.failures.len(),
        elapsed: started.elapsed(),
    }
}

fn planners(methods: &[Method], iterations: &[usize], samples: &[usize]) -> BenchConfig {
    BenchConfig {
        methods: methods.to_vec(),
        iterations: iterations.to_vec(),
        samples: samples.to_vec(),
        wm_noise: 0.005,
        ..BenchConfig::default()
    }
}

const PLANNERS: [Method; 3] = [Method::Initial, Method::LowLevel, Method::Lifted2d];

fn conditioning() -> Outcome {
    let s = run_suite(
        "train",
        200,
        8,
        planners(&[Method::Unconditioned, Method::Conditioned], &[6], &[64]),
        1,
    );
    let cond = mean_of(&s.rows, "conditioned", 0, 0);
    let uncond = mean_of(&s.rows, "unconditioned", 0, 0);
    let gain = 1.0 - cond / uncond;
    Outcome {
        name: "policy conditioning directionality",
        pass: gain >= 0.2 && s.failures == 0,
        detail: format!("200 tasks: conditioned {cond:.4} m vs unconditioned {uncond:.4} m, {:.1}% lower (>= 20%)", 100.0 * gain),
    }
}

/// Headline, budget sweep and horizon-8 point from one single-worker run.
fn headline_and_budget() -> (Outcome, Outcome, Suite) {
    let s = run_suite("train", 128, 8, planners(&PLANNERS, &[1, 3, 6], &[16, 32, 64]), 1);
    let initial = mean_of(&s.rows, "initial", 0, 0);
    let ll = initial - mean_of(&s.rows, "ll", 6, 64);
    let hl = initial - mean_of(&s.rows, "hl2d", 6, 64);
    let secs = s.elapsed.as_secs_f64();
    let headline = Outcome {
        name: "planning headline",
        pass: hl > 0.0 && hl >= 2.0 * ll && s.failures == 0 && secs < 600.0,
        detail: format!(
            "128 tasks, 6x64, M=16: reduction hl2d {hl:.4} m vs ll {ll:.4} m, ratio {:.2} (>= 2); \
             full budget grid {secs:.0} s single-worker (< 600 s)",
            hl / ll
        ),
    };

    let mut costs: BTreeMap<(&str, &str, usize), Vec<(usize, f64)>> = BTreeMap::new();
    for r in s.rows.iter().filter(|r| r.subset == "all" && r.iters > 0) {
        costs
            .entry((r.method.as_str(), r.task_id.as_str(), r.samples))
            .or_default()
            .push((r.iters, r.cost));
    }
    let monotone = costs.values_mut().all(|v| {
        v.sort_by_key(|x| x.0);
        v.windows(2).all(|w| w[1].1 <= w[0].1)
    });
    let mut worst_margin = f64::INFINITY;
    let mut cells = Vec::new();
    for iters in [1, 3, 6] {
        for samples in [16, 32, 64] {
            let (h, l) = (mean_of(&s.rows, "hl2d", iters, samples), mean_of(&s.rows, "ll", iters, samples));
            worst_margin = worst_margin.min(l - h);
            cells.push(format!("{iters}x{samples}: {h:.3}/{l:.3}"));
        }
    }
    let budget = Outcome {
        name: "budget sweep",
        pass: monotone && worst_margin >= 0.0,
        detail: format!(
            "cumulative-min cost non-increasing: {monotone}; hl2d/ll mean MJE {}; smallest margin {worst_margin:.4} m",
            cells.join(", ")
        ),
    };
    (headline, budget, s)
}

fn horizon_sweep(h8: &Suite) -> Outcome {
    let mut cells = vec![(8, mean_of(&h8.rows, "hl2d", 6, 64), mean_of(&h8.rows, "ll", 6, 64))];
    let mut failures = h8.failures;
    for h in [4, 16] {
        let s = run_suite("train", 128, h, planners(&PLANNERS, &[6], &[64]), 1);
        failures += s.failures;
        cells.push((h, mean_of(&s.rows, "hl2d", 6, 64), mean_of(&s.rows, "ll", 6, 64)));
    }
    cells.sort_by_key(|c| c.0);
    Outcome {
        name: "horizon sweep",
        pass: failures == 0 && cells.iter().all(|c| c.1 <= c.2),
        detail: cells
            .iter()
            .map(|(h, hl, ll)| format!("h={h}: hl2d {hl:.4} <= ll {ll:.4}"))
            .collect::<Vec<_>>()
            .join(", "),
    }
}

fn holdout() -> Outcome {
    let s = run_suite("holdout", 128, 8, planners(&PLANNERS, &[6], &[64]), 1);
    let initial = mean_of(&s.rows, "initial", 0, 0);
    let ll = initial - mean_of(&s.rows, "ll", 6, 64);
    let hl = initial - mean_of(&s.rows, "hl2d", 6, 64);
    Outcome {
        name: "holdout",
        pass: s.failures == 0 && hl > 0.0 && hl >= 2.0 * ll,
        detail: format!("128 unseen-scene tasks: reduction hl2d {hl:.4} m vs ll {ll:.4} m, ratio {:.2} (>= 2)", hl / ll),
    }
}

fn determinism() -> Outcome {
    let cfg = planners(&Method::ALL, &[1, 3], &[16]);
    let csv = |workers| {
        let s = run_suite("train", 12, 8, cfg.clone(), workers);
        let mut buf = Vec::new();
        write_csv(&mut buf, &s.rows).unwrap();
        buf
    };
    let (a, b, c) = (csv(1), csv(1), csv(4));
    Outcome {
        name: "determinism",
        pass: a == b && a == c,
        detail: format!(
            "{} CSV bytes; repeat identical: {}; 1 vs 4 workers identical: {}",
            a.len(),
            a == b,
            a == c
        ),
    }
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let report = |o: &Outcome| {
        println!("{} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
        o.pass
    };
    let mut ok = true;
    ok &= report(&kinematics_round_trip());
    ok &= report(&fk_oracle_equivalence());
    ok &= report(&projection_round_trip());
    ok &= report(&mask_statistics());
    ok &= report(&conditioning());
    let (headline, budget, h8) = headline_and_budget();
    ok &= report(&headline);
    ok &= report(&budget);
    ok &= report(&horizon_sweep(&h8));
    ok &= report(&holdout());
    ok &= report(&determinism());
    if !ok {
        std::process::exit(1);
    }
}
