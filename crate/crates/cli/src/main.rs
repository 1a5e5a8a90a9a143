//! `dolly`: record, train, evaluate, report, replay and verify.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation or data error, 3 internal failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dolly_core::config::Profile;
use dolly_core::demos::Diversity;
use dolly_core::sim::Task;

#[derive(Parser, Debug)]
#[command(name = "dolly", version, about = "Learning-from-demonstration toolkit for automated dolly-in shots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// Run configuration JSON; missing keys take defaults.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Budget profile; overrides the config's total_timesteps when given.
    #[arg(long, value_parser = parse_profile)]
    pub profile: Option<Profile>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Serve the teleoperation endpoint and UI, recording into a dataset file.
    Teleop {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Record scripted-expert demonstrations headlessly.
    Record {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_parser = parse_task)]
        task: Task,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, value_parser = parse_diversity)]
        diversity: Option<Diversity>,
        #[arg(long)]
        seed: Option<u64>,
        /// Replace an existing file.
        #[arg(long)]
        force: bool,
    },
    /// Train PPO or GAIL policies, one checkpoint and curve per seed.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        algo: Algo,
        #[arg(long, value_parser = parse_task)]
        task: Task,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long, required_if_eq("algo", "gail"))]
        demos: Option<PathBuf>,
        /// Restrict the demonstrations to this diversity level's start positions.
        #[arg(long, value_parser = parse_diversity, requires = "demos")]
        diversity: Option<Diversity>,
        #[arg(long)]
        timesteps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint from canonical starts, optionally paired with the twin.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated: left, centre, right or P1..P5.
        #[arg(long, value_delimiter = ',')]
        starts: Option<Vec<String>>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        twin: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a trial log as framing-error and SRCC tables.
    Report {
        #[arg(long)]
        trials: PathBuf,
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Write `<out>.csv` and `<out>.md` besides printing.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-simulate stored trajectories and check their observations.
    Replay {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        index: Option<usize>,
        /// Write per-step poses and framing as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate per-seed learning curves into mean ± σ.
    Aggregate {
        #[arg(long, num_args = 1.., required = true)]
        curves: Vec<PathBuf>,
        /// Demonstration dataset for the expert band.
        #[arg(long)]
        expert: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the oracle self-checks.
    Verify {
        /// Corrupt one computation to confirm its check fails.
        #[arg(long, value_parser = parse_fault)]
        inject: Option<dolly_core::verify::Fault>,
    },
    /// Print the resolved configuration.
    Config {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algo {
    Ppo,
    Gail,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Ppo => "ppo",
            Algo::Gail => "gail",
        }
    }
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|e: dolly_core::Error| e.to_string())
}

fn parse_diversity(s: &str) -> Result<Diversity, String> {
    s.parse().map_err(|e: dolly_core::Error| e.to_string())
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    s.parse().map_err(|e: dolly_core::Error| e.to_string())
}

fn parse_fault(s: &str) -> Result<dolly_core::verify::Fault, String> {
    s.parse().map_err(|e: dolly_core::Error| e.to_string())
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl From<dolly_core::Error> for CliError {
    fn from(e: dolly_core::Error) -> Self {
        use dolly_core::Error as E;
        match e {
            E::Divergence(_) | E::StaleCache { .. } => CliError::Internal(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Teleop {
            cfg,
            dataset,
            port,
            bind,
            static_dir,
        } => commands::teleop(&cfg, &dataset, port, bind, static_dir),
        Command::Record {
            cfg,
            task,
            out,
            count,
            diversity,
            seed,
            force,
        } => commands::record(&cfg, task, &out, count, diversity, seed, force),
        Command::Train {
            cfg,
            algo,
            task,
            seeds,
            demos,
            diversity,
            timesteps,
            out,
        } => commands::train(&cfg, algo, task, seeds, demos.as_deref(), diversity, timesteps, out),
        Command::Eval {
            cfg,
            checkpoint,
            starts,
            episodes,
            twin,
            out,
        } => commands::eval(&cfg, &checkpoint, starts, episodes, twin, out),
        Command::Report { trials, baseline, out } => commands::report(&trials, baseline.as_deref(), out.as_deref()),
        Command::Replay { trajectory, index, out } => commands::replay(&trajectory, index, out.as_deref()),
        Command::Aggregate { curves, expert, out } => commands::aggregate(&curves, expert.as_deref(), &out),
        Command::Verify { inject } => commands::verify(inject),
        Command::Config { cfg } => commands::show_config(&cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(m)) => {
            eprintln!("internal failure: {m}");
            ExitCode::from(3)
        }
    }
}
