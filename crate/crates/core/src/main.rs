use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use mptcp_lab::experiment::{emit_report, preset, run_experiment, ExperimentConfig, ReportFormat};
use mptcp_lab::net_model::build_scenario;

const SEED_ENV: &str = "MPTCP_LAB_SEED";

#[derive(Parser)]
#[command(name = "mptcp-lab", version, about = "Multipath TCP equilibrium and stability experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the ensemble described by a config file and write a report.
    Run {
        config: PathBuf,
        /// Overrides MPTCP_LAB_SEED and the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the default config for internet, datacenter or wireless.
    Preset {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config file without running it.
    Validate { config: PathBuf },
    /// Integrate one ensemble member and write its trajectory as CSV.
    Trajectory {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        member: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Config(e) | Failure::Runtime(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, seed, format, out } => {
            let cfg = load(&config, seed)?;
            let summary = run_experiment(&cfg).map_err(|e| Failure::Runtime(e.into()))?;
            let w = writer(out.as_deref())?;
            emit_report(&summary, format, w).map_err(|e| Failure::Runtime(e.into()))
        }
        Command::Preset { name, out } => {
            let cfg = preset(&name).map_err(|e| Failure::Config(e.into()))?;
            let mut w = writer(out.as_deref())?;
            w.write_all(cfg.to_json().as_bytes()).and_then(|_| w.flush()).map_err(|e| Failure::Runtime(e.into()))
        }
        Command::Validate { config } => {
            load(&config, None)?;
            println!("ok");
            Ok(())
        }
        Command::Trajectory { config, member, seed, out } => {
            let cfg = load(&config, seed)?;
            let net = build_scenario(&cfg.member_spec(member)).map_err(|e| Failure::Runtime(e.into()))?;
            let traj = cfg.trajectory(&net).map_err(|e| Failure::Runtime(e.into()))?;
            let w = writer(out.as_deref())?;
            traj.write_csv(w).map_err(|e| Failure::Runtime(e.into()))
        }
    }
}

fn load(path: &Path, seed_flag: Option<u64>) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Config)?;
    let mut cfg = ExperimentConfig::from_json(&text)
        .with_context(|| format!("in {}", path.display()))
        .map_err(Failure::Config)?;
    if let Some(seed) = seed_flag {
        cfg.seed = seed;
    } else if let Ok(env) = std::env::var(SEED_ENV) {
        cfg.seed = env.trim().parse().map_err(|_| Failure::Config(anyhow!("{SEED_ENV}={env:?} is not a u64")))?;
    }
    Ok(cfg)
}

fn writer(out: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display())).map_err(Failure::Runtime)?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}
