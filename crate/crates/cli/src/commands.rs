//! Implementations of the five subcommands.

use std::fmt::Write as _;
use std::fs;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use platoon_core::baselines::linear_feedback;
use platoon_core::dynamics::{build_platoon_model, ErrorState};
use platoon_core::milp::{BnbConfig, MilpSolution, SolveStatus};
use platoon_core::nn::{Checkpoint, Mlp};
use platoon_core::sim::{
    rmse_per_vehicle, run_experiment_threaded, run_trial, write_metrics_csv,
    write_trajectory_csv, Controller, MetricsSummary, Scenario, TrialRecord, VehicleMetrics,
};
use platoon_core::train::{
    certify, guided_train, loss_dec, loss_pos, CounterexampleSet, GuidedConfig, Region,
};

use crate::config::{
    load_config, load_controller_net, load_net, CompareConfig, LevelsetsConfig, SimulateConfig,
    TrainConfig, VerifyConfig,
};
use crate::manifest::{write_output, RunManifest};
use crate::{CliError, CommonArgs};

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn checkpoint_json(net: &Mlp<f64>) -> Result<Vec<u8>, CliError> {
    serde_json::to_vec_pretty(&Checkpoint::from_net(net)).map_err(runtime)
}

/// `platoon train`: guided learning of a controller/certificate pair.
pub fn train(args: &CommonArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let (cfg, raw): (TrainConfig, _) = load_config(&args.config)?;
    cfg.check()?;
    fs::create_dir_all(&args.out).map_err(runtime)?;
    let seed = args.seed.unwrap_or(cfg.seed);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = match &cfg.init_lyapunov {
        Some(path) => {
            let net = load_net(path)?;
            if net.input_dim() != 2 * cfg.n || net.output_dim() != 1 {
                return Err(CliError::Config(format!(
                    "{}: certificate must map {} inputs to 1 output, found {} to {}",
                    path.display(),
                    2 * cfg.n,
                    net.input_dim(),
                    net.output_dim()
                )));
            }
            net
        }
        None => Mlp::glorot(&cfg.lyapunov_sizes, cfg.leak, true, &mut rng)
            .map_err(|e| CliError::Config(e.to_string()))?,
    };
    let pi = match &cfg.init_controller {
        Some(path) => load_controller_net(path)?,
        None => Mlp::glorot(&cfg.controller_sizes, cfg.leak, false, &mut rng)
            .map_err(|e| CliError::Config(e.to_string()))?
            .saturate_output(cfg.u_max),
    };

    let model = build_platoon_model(cfg.n, cfg.dt, &cfg.gaps_or_default())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let region = Region::new(
        cfg.region.lower.clone(),
        cfg.region.upper.clone(),
        cfg.target.lower.clone(),
        cfg.target.upper.clone(),
        cfg.growth,
    );
    let guided = GuidedConfig {
        episodes: cfg.episodes,
        inner_cap: cfg.inner_cap,
        conv_tol: cfg.conv_tol,
        lr: cfg.lr,
        verify: cfg.verify,
        dataset_epochs: cfg.dataset_epochs,
        harvest_witnesses: cfg.harvest_witnesses,
        bnb: BnbConfig {
            node_limit: cfg.node_limit,
            timeout: Duration::from_secs(args.timeout_s.unwrap_or(cfg.timeout_s)),
            ..BnbConfig::default()
        },
    };
    let mut data = CounterexampleSet::new(cfg.dataset_capacity, cfg.dataset_radius);
    let outcome = guided_train(
        v,
        pi,
        &model,
        region,
        &cfg.hyper.to_core(),
        &cfg.shaping.to_core(),
        &mut data,
        &guided,
        &mut rng,
    )
    .map_err(runtime)?;

    // Per-episode history; timing is deliberately omitted so reruns of the
    // same config and seed reproduce the file byte for byte.
    let mut history = String::from("episode,max_loss_pos,max_loss_dec,region_scale,dataset_size\n");
    for row in &outcome.history {
        writeln!(
            history,
            "{},{},{},{},{}",
            row.episode, row.max_loss_pos, row.max_loss_dec, row.region_scale, row.dataset_size
        )
        .expect("writing to a string cannot fail");
    }

    write_output(&args.out, "controller.json", &checkpoint_json(&outcome.pi)?)?;
    write_output(&args.out, "lyapunov.json", &checkpoint_json(&outcome.v)?)?;
    write_output(&args.out, "history.csv", history.as_bytes())?;

    let mut manifest = RunManifest::new("train", &raw, seed);
    manifest.certified = Some(outcome.certified);
    manifest.outputs = vec![
        "controller.json".into(),
        "lyapunov.json".into(),
        "history.csv".into(),
    ];
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.write(&args.out)?;
    println!(
        "train: certified={} after {} episode(s)",
        outcome.certified,
        outcome.history.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct SolveReport {
    status: String,
    optimum: f64,
    nodes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    counterexample: Option<Vec<f64>>,
    /// Violation recomputed by direct forward passes at the counterexample.
    #[serde(skip_serializing_if = "Option::is_none")]
    violation: Option<f64>,
}

#[derive(Serialize)]
struct VerifyReport {
    certified: bool,
    tolerance: f64,
    pos: SolveReport,
    dec: SolveReport,
    wall_time_s: f64,
}

fn status_name(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::Optimal => "optimal",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::NodeLimit => "node_limit",
        SolveStatus::TimedOut => "timed_out",
    }
}

fn solve_report(
    sol: &MilpSolution<f64>,
    tol: f64,
    reval: impl Fn(&[f64]) -> f64,
) -> SolveReport {
    let counterexample = (!sol.input.is_empty() && sol.value > tol).then(|| sol.input.clone());
    let violation = counterexample.as_deref().map(reval);
    SolveReport {
        status: status_name(sol.status).to_string(),
        optimum: sol.value,
        nodes: sol.nodes,
        counterexample,
        violation,
    }
}

/// `platoon verify`: solves both certificate conditions to global optimality.
pub fn verify(args: &CommonArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let (cfg, raw): (VerifyConfig, _) = load_config(&args.config)?;
    cfg.check()?;
    fs::create_dir_all(&args.out).map_err(runtime)?;

    let pi = crate::config::load_controller_net(&cfg.controller)?;
    let v = load_net(&cfg.lyapunov)?;
    let dim = cfg.region.lower.len();
    if v.input_dim() != dim || v.output_dim() != 1 {
        return Err(CliError::Config(format!(
            "{}: certificate must map {dim} inputs to 1 output, found {} to {}",
            cfg.lyapunov.display(),
            v.input_dim(),
            v.output_dim()
        )));
    }
    let model = build_platoon_model(dim / 2, cfg.dt, &cfg.gaps_or_default())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let region = Region::new(
        cfg.region.lower.clone(),
        cfg.region.upper.clone(),
        cfg.region.lower.clone(),
        cfg.region.upper.clone(),
        2.0,
    );
    let hyper = cfg.hyper.to_core();
    let bnb = BnbConfig {
        node_limit: cfg.node_limit,
        timeout: Duration::from_secs(args.timeout_s.unwrap_or(cfg.timeout_s)),
        ..BnbConfig::default()
    };

    let result = certify(&v, &pi, &model, &region, &hyper, &bnb).map_err(runtime)?;
    let certified = result.pos.status == SolveStatus::Optimal
        && result.dec.status == SolveStatus::Optimal
        && result.pos.value <= cfg.tolerance
        && result.dec.value <= cfg.tolerance;
    let report = VerifyReport {
        certified,
        tolerance: cfg.tolerance,
        pos: solve_report(&result.pos, cfg.tolerance, |x| loss_pos(&v, x, hyper.eps1)),
        dec: solve_report(&result.dec, cfg.tolerance, |x| {
            loss_dec(&v, &pi, &model, x, hyper.eps2)
        }),
        wall_time_s: result.wall_time_s,
    };
    let text = serde_json::to_vec_pretty(&report).map_err(runtime)?;
    write_output(&args.out, "report.json", &text)?;

    let mut manifest = RunManifest::new("verify", &raw, args.seed.unwrap_or(0));
    manifest.certified = Some(certified);
    manifest.outputs = vec!["report.json".into()];
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.write(&args.out)?;
    println!(
        "verify: certified={certified} (pos {} {:.3e}, dec {} {:.3e})",
        report.pos.status, report.pos.optimum, report.dec.status, report.dec.optimum
    );
    if result.pos.status == SolveStatus::TimedOut || result.dec.status == SolveStatus::TimedOut {
        return Err(CliError::VerifierTimeout);
    }
    Ok(())
}

#[derive(Serialize)]
struct CollisionJson {
    step: usize,
    follower: usize,
    distance: f64,
}

#[derive(Serialize)]
struct SimulateSummary {
    trials_used: usize,
    total_collisions: usize,
    collision_events: Vec<CollisionJson>,
    wall_time_s: f64,
}

fn single_trial_metrics(rec: &TrialRecord<f64>) -> MetricsSummary<f64> {
    MetricsSummary {
        vehicles: rmse_per_vehicle(rec)
            .into_iter()
            .map(|(p, v)| VehicleMetrics {
                pos_rmse_mean: p,
                pos_rmse_ci: 0.0,
                vel_rmse_mean: v,
                vel_rmse_ci: 0.0,
            })
            .collect(),
        total_collisions: rec.collisions.len(),
        trials_used: 1,
    }
}

fn trajectory_bytes(rec: &TrialRecord<f64>) -> Result<Vec<u8>, CliError> {
    let mut bytes = Vec::new();
    write_trajectory_csv(rec, &mut bytes).map_err(runtime)?;
    Ok(bytes)
}

fn metrics_bytes(summary: &MetricsSummary<f64>) -> Result<Vec<u8>, CliError> {
    let mut bytes = Vec::new();
    write_metrics_csv(summary, &mut bytes).map_err(runtime)?;
    Ok(bytes)
}

/// `platoon simulate`: one scenario, one trial, full trajectory output.
pub fn simulate(args: &CommonArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let (cfg, raw): (SimulateConfig, _) = load_config(&args.config)?;
    let controller = cfg.scenario.controller.clone().ok_or_else(|| {
        CliError::Config("scenario.controller is required for simulate".into())
    })?;
    let sc = cfg.scenario.to_scenario(&controller)?;
    fs::create_dir_all(&args.out).map_err(runtime)?;
    let seed = args.seed.unwrap_or(sc.noise.seed);

    let rec = run_trial(&sc, seed).map_err(runtime)?;
    write_output(&args.out, "trajectory.csv", &trajectory_bytes(&rec)?)?;
    let metrics = single_trial_metrics(&rec);
    write_output(&args.out, "metrics.csv", &metrics_bytes(&metrics)?)?;

    let summary = SimulateSummary {
        trials_used: 1,
        total_collisions: rec.collisions.len(),
        collision_events: rec
            .collisions
            .iter()
            .map(|c| CollisionJson { step: c.step, follower: c.follower, distance: c.distance })
            .collect(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_output(&args.out, "summary.json", &serde_json::to_vec_pretty(&summary).map_err(runtime)?)?;

    let mut manifest = RunManifest::new("simulate", &raw, seed);
    manifest.outputs =
        vec!["trajectory.csv".into(), "metrics.csv".into(), "summary.json".into()];
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.write(&args.out)?;
    println!(
        "simulate: {} vehicle(s), {} step(s), {} collision(s)",
        sc.n,
        sc.steps,
        rec.collisions.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct ControllerOutcome {
    name: String,
    total_collisions: usize,
    trials_used: usize,
}

#[derive(Serialize)]
struct CompareSummary {
    trials: usize,
    controllers: Vec<ControllerOutcome>,
    wall_time_s: f64,
}

/// `platoon compare`: the same scenario and seeds for every controller.
pub fn compare(args: &CommonArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let (cfg, raw): (CompareConfig, _) = load_config(&args.config)?;
    cfg.check()?;
    fs::create_dir_all(&args.out).map_err(runtime)?;
    let seed = args.seed.unwrap_or(cfg.scenario.noise.seed);

    let mut outcomes = Vec::new();
    let mut outputs = Vec::new();
    for nc in &cfg.controllers {
        let sc: Scenario<f64> = cfg.scenario.to_scenario(&nc.controller)?;
        let summary = run_experiment_threaded(&sc, cfg.trials, seed, args.parallel.max(1))
            .map_err(runtime)?;
        let rec = run_trial(&sc, seed).map_err(runtime)?;

        let traj_name = format!("{}_trajectory.csv", nc.name);
        let metrics_name = format!("{}_metrics.csv", nc.name);
        write_output(&args.out, &traj_name, &trajectory_bytes(&rec)?)?;
        write_output(&args.out, &metrics_name, &metrics_bytes(&summary)?)?;
        outputs.push(traj_name);
        outputs.push(metrics_name);
        outcomes.push(ControllerOutcome {
            name: nc.name.clone(),
            total_collisions: summary.total_collisions,
            trials_used: summary.trials_used,
        });
        println!(
            "compare: {} -> {} collision(s) over {} trial(s)",
            nc.name, summary.total_collisions, summary.trials_used
        );
    }

    let summary = CompareSummary {
        trials: cfg.trials,
        controllers: outcomes,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_output(&args.out, "summary.json", &serde_json::to_vec_pretty(&summary).map_err(runtime)?)?;
    outputs.push("summary.json".into());

    let mut manifest = RunManifest::new("compare", &raw, seed);
    manifest.outputs = outputs;
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.write(&args.out)?;
    Ok(())
}

/// `platoon levelsets`: controller response on a uniform error grid.
pub fn levelsets(args: &CommonArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let (cfg, raw): (LevelsetsConfig, _) = load_config(&args.config)?;
    cfg.check()?;
    fs::create_dir_all(&args.out).map_err(runtime)?;

    let controller = cfg.controller.build()?;
    let evaluate = |ep: f64, ev: f64| -> f64 {
        match &controller {
            Controller::Nn(net) => net.eval_scalar(&[ep, ev]),
            Controller::Linear(gains) => linear_feedback(ErrorState { ep, ev }, *gains),
            Controller::Dmpc(_) => unreachable!("rejected by config validation"),
        }
    };

    let mut csv = String::from("ep,ev,u\n");
    let res = cfg.resolution;
    for i in 0..res {
        let fi = i as f64 / (res - 1) as f64;
        let ep = cfg.lower[0] + (cfg.upper[0] - cfg.lower[0]) * fi;
        for j in 0..res {
            let fj = j as f64 / (res - 1) as f64;
            let ev = cfg.lower[1] + (cfg.upper[1] - cfg.lower[1]) * fj;
            writeln!(csv, "{},{},{}", ep, ev, evaluate(ep, ev))
                .expect("writing to a string cannot fail");
        }
    }
    write_output(&args.out, "levelsets.csv", csv.as_bytes())?;

    let mut manifest = RunManifest::new("levelsets", &raw, args.seed.unwrap_or(0));
    manifest.outputs = vec!["levelsets.csv".into()];
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.write(&args.out)?;
    println!("levelsets: {res}x{res} grid written");
    Ok(())
}
