//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Run with `cargo test -p teleassist-core --test acceptance`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use teleassist_core::arbitration::{blend, ControllerConfig};
use teleassist_core::assist::{assist_action, AssistStyle, AssistTarget, EngagementState};
use teleassist_core::harness::{
    acceptance, bootstrap_mean_ci, completion_effort, log_files, run_episode, run_experiment,
    BatchResult, EpisodeConfig, ExperimentConfig, InputSource, SharedControl, SimulatedOperator,
};
use teleassist_core::inference::{
    boltzmann, observation_likelihood, reward, HmmParams, TransitionMatrix,
};
use teleassist_core::operator::OperatorConfig;
use teleassist_core::oracle::{check_hmm, random_pose_in, random_scenario};
use teleassist_core::session::{
    script_from_log, ServerMessage, SessionConfig, SessionState, VisualizationCondition,
};
use teleassist_core::workspace::{
    Action, Bounds, ControlMode, Scenario, Tolerance, Vec3, World, WorldConfig,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn tabletop() -> Arc<Scenario> {
    Arc::new(Scenario::builtin("tabletop4").unwrap())
}

fn all_grasps(s: &Scenario) -> Vec<String> {
    s.goals
        .iter()
        .flat_map(|g| g.grasps.iter().map(|k| k.id.clone()))
        .collect()
}

fn hmm_oracle() -> Verdict {
    let r = check_hmm(200, 2024);
    let secs = r.elapsed.as_secs_f64();
    verdict(
        r.instances == 200 && r.max_abs_error <= 1e-9 && secs < 10.0,
        format!(
            "{} instances, max |error| {:.2e} (<= 1e-9), {:.3}s (< 10s)",
            r.instances, r.max_abs_error, secs
        ),
    )
}

fn stochasticity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut negative = 0;
    let (mut singleton, mut single_goal) = (0, 0);
    for i in 0..1000 {
        // force the degenerate shapes into the mix
        let shape: Vec<usize> = match i % 4 {
            0 => vec![rng.random_range(1..6)],
            1 => {
                let mut v: Vec<usize> = (0..rng.random_range(2..5))
                    .map(|_| rng.random_range(1..4))
                    .collect();
                v[0] = 1;
                v
            }
            _ => (0..rng.random_range(1..6))
                .map(|_| rng.random_range(1..5))
                .collect(),
        };
        single_goal += usize::from(shape.len() == 1);
        singleton += usize::from(shape.contains(&1));
        let scenario = random_scenario(&shape, &mut rng);
        let t_goal = rng.random_range(0.0..1.0);
        let params = HmmParams {
            t_goal,
            t_grasp: rng.random_range(0.0..1.0) * (1.0 - t_goal),
            ..HmmParams::default()
        };
        let t = TransitionMatrix::build(&scenario, &params).unwrap();
        for r in 0..t.size() {
            let row = t.row(r);
            negative += row.iter().filter(|&&x| x < 0.0).count();
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
        }
    }
    verdict(
        worst <= 1e-9 && negative == 0,
        format!(
            "1000 matrices ({single_goal} single-goal, {singleton} with singleton classes), max |row sum - 1| {worst:.2e}, {negative} negative entries"
        ),
    )
}

fn likelihood() -> Verdict {
    let scenario = tabletop();
    let world = World::new(&scenario, WorldConfig::default());
    let bounds = Bounds::new(Vec3::new(0.0, -0.6, 0.0), Vec3::new(1.0, 0.6, 0.7));
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut sum_err, mut shift_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let s = random_pose_in(&mut rng, &bounds);
        let x = random_pose_in(&mut rng, &bounds);
        let beta = rng.random_range(0.0..20.0);
        let mode = if rng.random_bool(0.5) {
            ControlMode::Position
        } else {
            ControlMode::Angular
        };
        let set = world.action_set(mode);
        let probs: Vec<f64> = set
            .iter()
            .map(|u| observation_likelihood(&world, &s, u, &x, &set, beta).unwrap())
            .collect();
        sum_err = sum_err.max((probs.iter().sum::<f64>() - 1.0).abs());
        let shift = rng.random_range(-100.0..100.0);
        let unit = world.config.reward_unit;
        let shifted: Vec<f64> = set
            .iter()
            .map(|u| reward(&world, &s, u, &x) / unit + shift)
            .collect();
        for (p, q) in probs.iter().zip(boltzmann(&shifted, beta)) {
            shift_err = shift_err.max((p - q).abs());
        }
    }
    verdict(
        sum_err <= 1e-9 && shift_err <= 1e-9,
        format!("1000 cases, max |sum - 1| {sum_err:.2e}, max shift drift {shift_err:.2e}"),
    )
}

fn transition_spot_values() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let scenario = random_scenario(&[2, 2], &mut rng);
    let cases = [
        (
            0.01,
            0.0,
            [
                [0.99, 0.01, 0.0, 0.0],
                [0.01, 0.99, 0.0, 0.0],
                [0.0, 0.0, 0.99, 0.01],
                [0.0, 0.0, 0.01, 0.99],
            ],
        ),
        (
            0.1,
            0.2,
            [
                [0.7, 0.1, 0.1, 0.1],
                [0.1, 0.7, 0.1, 0.1],
                [0.1, 0.1, 0.7, 0.1],
                [0.1, 0.1, 0.1, 0.7],
            ],
        ),
    ];
    let mut errs = Vec::new();
    for (t_grasp, t_goal, expect) in cases {
        let t = TransitionMatrix::build(
            &scenario,
            &HmmParams {
                t_grasp,
                t_goal,
                ..HmmParams::default()
            },
        )
        .unwrap();
        let mut err: f64 = 0.0;
        for (i, row) in expect.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                err = err.max((t.get(i, j) - v).abs());
            }
        }
        errs.push(err);
    }
    verdict(
        errs.iter().all(|&e| e == 0.0),
        format!(
            "max |error| {:.1e} (t_grasp 0.01, t_goal 0), {:.1e} (t_grasp 0.1, t_goal 0.2); exact equality required",
            errs[0], errs[1]
        ),
    )
}

fn blending() -> Verdict {
    let limits = WorldConfig::default().limits;
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let small = |rng: &mut ChaCha8Rng, m: f64| {
        Vec3::new(
            rng.random_range(-m..m),
            rng.random_range(-m..m),
            rng.random_range(-m..m),
        )
    };
    let mut worst: f64 = 0.0;
    let mut ends_exact = true;
    let mut cancels = true;
    for _ in 0..1000 {
        let v = limits.v_max / 2.0;
        let w = limits.w_max / 2.0;
        let h = Action::new(small(&mut rng, v), small(&mut rng, w));
        let r = Action::new(small(&mut rng, v), small(&mut rng, w));
        for alpha in [0.0, 0.25, 0.5, 0.99] {
            let u = blend(&h, &r, alpha, &limits);
            for k in 0..3 {
                let lin = (1.0 - alpha) * h.linear[k] + alpha * r.linear[k];
                let ang = (1.0 - alpha) * h.angular[k] + alpha * r.angular[k];
                worst = worst
                    .max((u.linear[k] - lin).abs())
                    .max((u.angular[k] - ang).abs());
            }
        }
        ends_exact &= blend(&h, &r, 0.0, &limits) == h && blend(&h, &r, 1.0, &limits) == r;
        cancels &= blend(&r.scale(-1.0), &r, 0.5, &limits).is_null();
    }
    verdict(
        worst <= 1e-15 && ends_exact && cancels,
        format!(
            "1000 pairs x 4 alphas, max |error| {worst:.1e}; exact at alpha 0 and 1: {ends_exact}; opposed commands cancel at 0.5: {cancels}"
        ),
    )
}

fn convergence() -> Verdict {
    let scenario = tabletop();
    let grasps = all_grasps(&scenario);
    let hmm = HmmParams {
        t_goal: 0.0,
        ..HmmParams::default()
    };
    let mut hits = 0;
    for seed in 0..200u64 {
        let op = OperatorConfig {
            intended_grasp_id: grasps[seed as usize % grasps.len()].clone(),
            beta_op: 5.0,
            p_idle_when_helped: 0.0,
            goal_switch_tick: None,
            switched_grasp_id: None,
            seed,
        };
        // no assistance: the operator alone has to move the posterior
        let mut ctl = SharedControl::new(
            scenario.clone(),
            ControllerConfig::with_alpha(0.0),
            hmm,
            WorldConfig::default(),
        )
        .unwrap();
        let mut source = SimulatedOperator::new(op, &scenario).unwrap();
        for _ in 0..2400 {
            let input = source.next_input(&ctl).unwrap();
            let goal = input.target_goal;
            ctl.step(&input).unwrap();
            if ctl.inference_updates() > 50 {
                break;
            }
            if ctl.goal_posterior().probs()[goal] > 0.5 {
                hits += 1;
                break;
            }
        }
    }
    let rate = hits as f64 / 200.0;
    verdict(
        rate >= 0.95,
        format!(
            "{hits}/200 episodes above 0.5 within 50 updates ({:.1}% >= 95%)",
            100.0 * rate
        ),
    )
}

fn reachability() -> Verdict {
    let scenario = tabletop();
    let world = World::new(&scenario, WorldConfig::default());
    let mut failures = Vec::new();
    let mut total = 0;
    for (gi, goal) in scenario.goals.iter().enumerate() {
        for (ki, grasp) in goal.grasps.iter().enumerate() {
            total += 1;
            let mut st = EngagementState {
                engaged: Some(AssistTarget {
                    goal: gi,
                    grasp: ki,
                }),
                ..EngagementState::default()
            };
            let mut s = scenario.start_pose;
            let mut order = vec![0];
            let mut ok = false;
            for _ in 0..2400 {
                if grasp.succeeded(&s, &Tolerance::GRASP) {
                    ok = true;
                    break;
                }
                st = st.advance(&s, grasp, &Tolerance::KEYPOINT);
                if *order.last().unwrap() != st.next_keypoint {
                    order.push(st.next_keypoint);
                }
                let u = assist_action(&s, &st, &scenario, &world, AssistStyle::Continuous);
                s = world.step(&s, &u);
            }
            let in_order = order == (0..grasp.keypoints.len()).collect::<Vec<_>>();
            if !(ok && in_order) {
                failures.push(grasp.id.clone());
            }
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "{}/{total} grasps reached with keypoints visited in order{}",
            total - failures.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failed: {failures:?}")
            }
        ),
    )
}

fn experiment_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../experiments/trend.json")
}

fn trend(batch: &BatchResult, secs: f64) -> Verdict {
    let episodes = batch.logs.iter().filter(|l| !l.records.is_empty()).count();
    let cell = |alpha: f64, op: &str| -> (Vec<f64>, Vec<f64>) {
        let logs = batch.logs.iter().filter(|l| {
            l.header.controller.alpha == alpha
                && l.header.operator_profile == op
                && l.outcome.is_success()
        });
        logs.map(|l| (completion_effort(l).unwrap() as f64, acceptance(l).unwrap()))
            .unzip()
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (e0, _) = cell(0.0, "compliant");
    let (e5, a5) = cell(0.5, "compliant");
    let (e99, a99) = cell(0.99, "compliant");
    let (_, p5) = cell(0.5, "active");
    let (_, p99) = cell(0.99, "active");
    let min_n = batch
        .summary
        .cells
        .iter()
        .map(|c| c.episodes)
        .min()
        .unwrap_or(0);
    let ci0 = bootstrap_mean_ci(&e0, 10_000, 0.95, 1).unwrap();
    let ci99 = bootstrap_mean_ci(&e99, 10_000, 0.95, 2).unwrap();
    let order = mean(&e99) < mean(&e5) && mean(&e5) < mean(&e0);
    let disjoint = ci99.1 < ci0.0;
    let gap5 = mean(&a5) - mean(&p5);
    let gap99 = mean(&a99) - mean(&p99);
    verdict(
        min_n >= 100 && order && disjoint && gap5 >= 20.0 && gap99 >= 20.0 && episodes >= 1000 && secs < 60.0,
        format!(
            "effort {:.1} (a=0) > {:.1} (a=0.5) > {:.1} (a=0.99); 95% CI a=0 [{:.1}, {:.1}] vs a=0.99 [{:.1}, {:.1}]; \
             acceptance gap {gap5:.1} pts (a=0.5), {gap99:.1} pts (a=0.99); min n/cell {min_n}; {episodes} episodes in {secs:.2}s",
            mean(&e0), mean(&e5), mean(&e99), ci0.0, ci0.1, ci99.0, ci99.1
        ),
    )
}

fn files_in(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = log_files(dir)
        .unwrap()
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    for f in ["summary.csv", "summary.json"] {
        out.push((f.into(), fs::read(dir.join(f)).unwrap()));
    }
    out
}

fn determinism(cfg: &ExperimentConfig, scenario: &Scenario, first: &BatchResult) -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    first.write(&a).unwrap();
    // a second, independent run on a single worker
    run_experiment(cfg, scenario, 1).unwrap().write(&b).unwrap();
    let (fa, fb) = (files_in(&a), files_in(&b));
    let same = fa == fb;
    verdict(
        same,
        format!(
            "{} files compared, byte-identical: {same}",
            fa.len().max(fb.len())
        ),
    )
}

fn service_fidelity() -> Verdict {
    let scenario = tabletop();
    let grasps = all_grasps(&scenario);
    let controller = ControllerConfig::with_alpha(0.5);
    let cfg = EpisodeConfig::new(&scenario, controller, HmmParams::default());
    let mut episodes = 0;
    let mut updates = 0;
    let mut problems = Vec::new();
    for (i, grasp) in grasps.iter().enumerate() {
        let op = OperatorConfig {
            intended_grasp_id: grasp.clone(),
            beta_op: 5.0,
            p_idle_when_helped: 0.8,
            goal_switch_tick: None,
            switched_grasp_id: None,
            seed: 100 + i as u64,
        };
        let reference = run_episode(&scenario, &cfg, &op).unwrap();
        let object = scenario.goals[reference.records[0].target_goal].id.clone();
        let script = script_from_log(&reference, &cfg.world);
        for condition in VisualizationCondition::ALL {
            let mut s = SessionState::new(
                scenario.clone(),
                SessionConfig {
                    controller,
                    condition,
                    objects: Some(vec![object.clone()]),
                    ..Default::default()
                },
            )
            .unwrap();
            let mut seen = 0;
            for input in &script {
                for msg in s.session_tick(input).unwrap() {
                    if let ServerMessage::StateUpdate(u) = msg {
                        let rec = &reference.records[seen];
                        if let Err(e) = u.visualization.check(&rec.engagement, &scenario, condition)
                        {
                            problems.push(format!("{grasp}/{condition:?} tick {}: {e}", rec.tick));
                        }
                        seen += 1;
                    }
                }
            }
            updates += seen;
            episodes += 1;
            let live = &s.completed()[0];
            if live.records != reference.records || live.outcome != reference.outcome {
                problems.push(format!("{grasp}/{condition:?}: log differs from batch run"));
            }
        }
    }
    verdict(
        problems.is_empty(),
        format!(
            "{episodes} scripted sessions ({} grasps x 3 conditions), {updates} updates checked{}",
            grasps.len(),
            problems
                .first()
                .map(|p| format!("; first problem: {p}"))
                .unwrap_or_default()
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Verdict)> = vec![
        ("hmm oracle equivalence", hmm_oracle()),
        ("transition stochasticity", stochasticity()),
        ("likelihood normalization", likelihood()),
        ("transition spot values", transition_spot_values()),
        ("blending exactness", blending()),
        ("goal convergence", convergence()),
        ("assist reachability", reachability()),
    ];
    let cfg = ExperimentConfig::load(&experiment_path()).unwrap();
    let scenario = cfg.load_scenario(experiment_path().parent()).unwrap();
    let start = Instant::now();
    let batch = run_experiment(&cfg, &scenario, 0).unwrap();
    let secs = start.elapsed().as_secs_f64();
    results.push(("trend reproduction", trend(&batch, secs)));
    results.push(("determinism", determinism(&cfg, &scenario, &batch)));
    results.push(("service fidelity", service_fidelity()));

    let mut failed = 0;
    for (name, v) in &results {
        println!(
            "{} {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!(
        "acceptance: {}/{} criteria pass",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
