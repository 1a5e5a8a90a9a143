use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use dolly_core::config::{ArtifactHeader, RunConfig};
use dolly_core::demos::{record_scripted_dataset, replay_mismatch, Dataset, Diversity};
use dolly_core::evalkit::{
    aggregate_curves, build_report, expert_band, load_trial_log, parse_curve_csv, run_trials, save_trial_log,
    TRIAL_LOG_VERSION,
};
use dolly_core::gail::train_gail;
use dolly_core::nn::{Checkpoint, CHECKPOINT_VERSION};
use dolly_core::ppo::{curve_csv, mean_std, train_ppo, TrainOutput};
use dolly_core::sim::{Action, EpisodeConfig, Environment, Sim, StartPosition, Task};
use dolly_core::verify::{run_all, Fault};
use dolly_teleop::{ServerConfig, SessionConfig};

use crate::{Algo, CliError, ConfigArgs};

pub const CURVE_VERSION: u32 = 1;
pub const REPORT_VERSION: u32 = 1;
pub const EVAL_VERSION: u32 = 1;

type Result<T> = std::result::Result<T, CliError>;

fn resolve(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::for_profile(args.profile.unwrap_or(dolly_core::config::Profile::Desk)),
    };
    if let Some(p) = args.profile {
        cfg.ppo.total_timesteps = p.total_timesteps();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn task_env(cfg: &RunConfig, task: Task) -> EpisodeConfig {
    EpisodeConfig { task, ..cfg.env.clone() }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn show_config(args: &ConfigArgs) -> Result<()> {
    println!("{}", resolve(args)?.to_json_pretty());
    Ok(())
}

pub fn teleop(
    args: &ConfigArgs,
    dataset: &Path,
    port: Option<u16>,
    bind: Option<String>,
    static_dir: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = resolve(args)?;
    if let Some(p) = port {
        cfg.teleop.port = p;
    }
    if let Some(b) = bind {
        cfg.teleop.bind = b;
    }
    let addr: SocketAddr = format!("{}:{}", cfg.teleop.bind, cfg.teleop.port)
        .parse()
        .map_err(|e| CliError::Usage(format!("bad bind address: {e}")))?;
    let server_cfg = ServerConfig {
        session: SessionConfig {
            env: cfg.env.clone(),
            weights: cfg.reward,
            tick_hz: cfg.teleop.tick_hz,
            input_timeout_ms: cfg.teleop.input_timeout_ms,
            dataset: dataset.to_path_buf(),
            require_success: cfg.demos.require_success,
            operator: cfg.demos.operator.clone(),
        },
        bind: addr,
        static_dir: static_dir.or(cfg.teleop.static_dir.map(PathBuf::from)),
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let server = dolly_teleop::start(server_cfg).await?;
        eprintln!("teleop listening on http://{} (dataset {})", server.addr, dataset.display());
        let discarded = server
            .run_until(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        if let Some(n) = discarded {
            eprintln!("discarded an unfinished recording of {n} steps");
        }
        Ok(())
    })
}

pub fn record(
    args: &ConfigArgs,
    task: Task,
    out: &Path,
    count: Option<usize>,
    diversity: Option<Diversity>,
    seed: Option<u64>,
    force: bool,
) -> Result<()> {
    let cfg = resolve(args)?;
    if out.exists() && !force {
        return Err(CliError::Usage(format!("{} exists; pass --force to replace it", out.display())));
    }
    let ds = record_scripted_dataset(
        &task_env(&cfg, task),
        diversity.unwrap_or(cfg.demos.diversity),
        count.unwrap_or(cfg.demos.count),
        seed.unwrap_or(cfg.demos.seed),
        &cfg.reward,
        cfg.demos.require_success,
    )?;
    ds.save(out)?;
    println!(
        "recorded {} trajectories ({} transitions, diversity {}) to {}",
        ds.trajectories.len(),
        ds.transition_count(),
        ds.diversity().map_or("none".to_string(), |d| d.to_string()),
        out.display()
    );
    Ok(())
}

/// Loads demonstrations, keeping only the requested diversity level's start positions.
fn load_demos(path: &Path, task: Task, diversity: Option<Diversity>) -> Result<Dataset> {
    let mut ds = Dataset::load_for_task(path, task)?;
    if let Some(level) = diversity {
        ds.trajectories
            .retain(|t| t.meta.start_position.is_some_and(|p| level.positions().contains(&p)));
        if ds.diversity() != Some(level) {
            return Err(CliError::Data(format!(
                "{} does not cover the start positions of diversity '{level}'",
                path.display()
            )));
        }
    }
    Ok(ds)
}

#[allow(clippy::too_many_arguments)]
pub fn train(
    args: &ConfigArgs,
    algo: Algo,
    task: Task,
    seeds: Option<usize>,
    demos: Option<&Path>,
    diversity: Option<Diversity>,
    timesteps: Option<usize>,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = resolve(args)?;
    if let Some(n) = seeds {
        cfg.ppo.seeds = n;
    }
    if let Some(t) = timesteps {
        cfg.ppo.total_timesteps = t;
    }
    if let Some(d) = diversity {
        cfg.demos.diversity = d;
    }
    cfg.validate()?;
    let env = task_env(&cfg, task);
    let dataset = match (algo, demos) {
        (Algo::Gail, Some(path)) => Some(load_demos(path, task, diversity)?),
        (Algo::Gail, None) => return Err(CliError::Usage("--algo gail requires --demos".into())),
        (Algo::Ppo, _) => None,
    };
    let out_dir = out.unwrap_or_else(|| Path::new(&cfg.output_dir).join(&cfg.run_id));
    std::fs::create_dir_all(&out_dir)?;
    let mut config_value = cfg.to_value();
    config_value["command"] = serde_json::json!({
        "algo": algo.name(),
        "task": task,
        "demos": demos.map(|p| p.display().to_string()),
    });

    let mut finals = Vec::new();
    for seed in 0..cfg.ppo.seeds as u64 {
        let stem = format!("{}-{}-seed{seed}", algo.name(), task);
        let (output, checkpoint): (TrainOutput, Checkpoint) = match &dataset {
            Some(ds) => {
                let g = train_gail(ds, &env, &cfg.reward, &cfg.ppo, &cfg.gail, seed)?;
                let ck = g.checkpoint(task, seed, checkpoint_meta(&config_value));
                (g.train, ck)
            }
            None => {
                let t = train_ppo(&env, &cfg.reward, &cfg.ppo, seed)?;
                let ck = t.actor_critic.checkpoint("ppo", task, seed, checkpoint_meta(&config_value));
                (t, ck)
            }
        };
        let curve_header = ArtifactHeader::new("curve", CURVE_VERSION, config_value.clone());
        write_file(
            &out_dir.join(format!("{stem}.curve.csv")),
            &curve_csv(&output.curve, &curve_header.preamble()),
        )?;
        checkpoint.save(&out_dir.join(format!("{stem}.ckpt.json")))?;
        let eval_doc = serde_json::json!({
            "header": ArtifactHeader::new("eval", EVAL_VERSION, config_value.clone()),
            "eval": output.eval,
        });
        write_file(&out_dir.join(format!("{stem}.eval.json")), &serde_json::to_string_pretty(&eval_doc).expect("json"))?;
        println!(
            "{stem}: final mean reward {:.3} ± {:.3}, success {:.0}%, mean length {:.1}",
            output.eval.mean_reward,
            output.eval.std_reward,
            output.eval.success_rate * 100.0,
            output.eval.mean_length
        );
        finals.push(output.eval.mean_reward);
    }
    if finals.len() > 1 {
        let (m, s) = mean_std(finals.iter().copied());
        println!("{} {task}: mean over {} seeds {m:.3} ± {s:.3}", algo.name(), finals.len());
    }
    Ok(())
}

fn checkpoint_meta(config: &serde_json::Value) -> serde_json::Value {
    serde_json::to_value(ArtifactHeader::new("checkpoint", CHECKPOINT_VERSION, config.clone())).expect("json")
}

fn parse_starts(names: Option<Vec<String>>, default: &[StartPosition]) -> Result<Vec<StartPosition>> {
    match names {
        None => Ok(default.to_vec()),
        Some(list) => list
            .iter()
            .map(|s| s.trim().parse().map_err(|e: dolly_core::Error| CliError::Usage(e.to_string())))
            .collect(),
    }
}

pub fn eval(
    args: &ConfigArgs,
    checkpoint: &Path,
    starts: Option<Vec<String>>,
    episodes: Option<usize>,
    twin: bool,
    out: Option<PathBuf>,
) -> Result<()> {
    let cfg = resolve(args)?;
    let starts = parse_starts(starts, &cfg.eval.starts)?;
    let episodes = episodes.unwrap_or(cfg.eval.episodes);
    let ck = Checkpoint::load(checkpoint)?;
    let policy = ck.policy()?;
    let env = task_env(&cfg, ck.task);
    let id = format!("{}-{}-seed{}", ck.algo, ck.task, ck.seed);
    let twin_cfg = twin.then_some(&cfg.eval.twin);
    let trials = run_trials(&policy, &id, &env, twin_cfg, &starts, episodes, &cfg.reward, cfg.eval.seed)?;

    let mut config_value = cfg.to_value();
    config_value["command"] = serde_json::json!({
        "checkpoint": checkpoint.display().to_string(),
        "starts": starts,
        "episodes": episodes,
        "twin": twin,
    });
    let header = ArtifactHeader::new("trials", TRIAL_LOG_VERSION, config_value);
    let out = out.unwrap_or_else(|| checkpoint.with_extension("trials.jsonl"));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_trial_log(&out, &header, &trials)?;
    println!("{} trials written to {}", trials.len(), out.display());
    if !trials.is_empty() {
        let mut report = build_report(&trials, None)?;
        report.weights = Some(cfg.reward);
        print!("{}", report.to_markdown());
    }
    Ok(())
}

pub fn report(trials: &Path, baseline: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let (header, records) = load_trial_log(trials)?;
    if records.is_empty() {
        return Err(CliError::Data(format!("no data: {} holds no trials", trials.display())));
    }
    let base = match baseline {
        Some(p) => {
            let (_, b) = load_trial_log(p)?;
            if b.is_empty() {
                return Err(CliError::Data(format!("no data: baseline {} holds no trials", p.display())));
            }
            Some(b)
        }
        None => None,
    };
    let mut rep = build_report(&records, base.as_deref())?;
    rep.weights = header
        .config
        .get("reward")
        .and_then(|w| serde_json::from_value(w.clone()).ok());
    let markdown = rep.to_markdown();
    print!("{markdown}");
    if let Some(prefix) = out {
        let report_header = ArtifactHeader::new("report", REPORT_VERSION, header.config.clone());
        let json = serde_json::to_string(&report_header).expect("json");
        let mut csv = String::new();
        let _ = writeln!(csv, "# {json}");
        csv.push_str(&rep.to_csv());
        write_file(&prefix.with_extension("csv"), &csv)?;
        write_file(&prefix.with_extension("md"), &format!("<!-- {json} -->\n\n{markdown}"))?;
    }
    Ok(())
}

pub fn replay(path: &Path, index: Option<usize>, out: Option<&Path>) -> Result<()> {
    let ds = Dataset::load(path)?;
    let picked: Vec<usize> = match index {
        Some(i) if i < ds.trajectories.len() => vec![i],
        Some(i) => return Err(CliError::Data(format!("{} has no trajectory {i}", path.display()))),
        None => (0..ds.trajectories.len()).collect(),
    };
    let mut csv = String::from("trajectory,step,x,y,heading,pan,tilt,cx,cy,area,status\n");
    let mut mismatches = Vec::new();
    for &i in &picked {
        let traj = &ds.trajectories[i];
        match replay_mismatch(traj)? {
            None => println!("trajectory {i}: {} steps, observations identical", traj.len()),
            Some(step) => {
                println!("trajectory {i}: observations diverge at step {step}");
                mismatches.push(i);
            }
        }
        if out.is_some() {
            let mut sim = Sim::new(traj.meta.env.clone(), traj.meta.seed)?;
            let mut row = |step: usize, sim: &Sim| {
                let s = sim.state();
                let _ = writeln!(
                    csv,
                    "{i},{step},{},{},{},{},{},{},{},{},{}",
                    s.pose.x,
                    s.pose.y,
                    s.pose.heading,
                    s.camera.pan,
                    s.camera.tilt,
                    s.prev_bbox.cx,
                    s.prev_bbox.cy,
                    s.prev_bbox.area,
                    s.status.name()
                );
            };
            row(0, &sim);
            for (k, t) in traj.transitions.iter().enumerate() {
                sim.step(&Action::from_slice(traj.meta.task, &t.action)?)?;
                row(k + 1, &sim);
            }
        }
    }
    if let Some(p) = out {
        write_file(p, &csv)?;
    }
    if mismatches.is_empty() {
        Ok(())
    } else {
        Err(CliError::Data(format!("replay mismatch in trajectories {mismatches:?}")))
    }
}

pub fn aggregate(curves: &[PathBuf], expert: Option<&Path>, out: &Path) -> Result<()> {
    let parsed = curves
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)?;
            parse_curve_csv(&text).map_err(CliError::from)
        })
        .collect::<Result<Vec<_>>>()?;
    let band = match expert {
        Some(p) => Some(expert_band(&Dataset::load(p)?)?),
        None => None,
    };
    let agg = aggregate_curves(&parsed, band)?;
    let header = ArtifactHeader::new(
        "aggregate-curve",
        CURVE_VERSION,
        serde_json::json!({ "curves": curves.iter().map(|p| p.display().to_string()).collect::<Vec<_>>() }),
    );
    let mut text = String::new();
    for line in header.preamble() {
        let _ = writeln!(text, "# {line}");
    }
    text.push_str(&agg.to_csv());
    write_file(out, &text)?;
    println!("{} seeds aggregated over {} steps to {}", agg.seeds, agg.steps.len(), out.display());
    Ok(())
}

pub fn verify(inject: Option<Fault>) -> Result<()> {
    let results = run_all(inject);
    for r in &results {
        println!("{r}");
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        println!("all {} checks passed", results.len());
        Ok(())
    } else {
        Err(CliError::Data(format!("failed checks: {}", failed.join(", "))))
    }
}
