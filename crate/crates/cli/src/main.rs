use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spinbath_cli::{run, CliError, Command, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "spinbath", version, about = "Quadrupolar spin-bath decoherence simulations for Si/SiGe singlet-triplet qubits")]
struct Args {
    /// TOML or JSON run configuration; defaults reproduce the 5 nm enriched device.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (falls back to SPINBATH_WORKERS, then all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Generate device realizations and the envelope profile.
    BuildDevice,
    /// Echo decay curves over the configured τ grid and field list.
    EchoSweep,
    /// T2 table and divergence field from a finished echo sweep.
    T2Report,
    /// Noise spectra from simulated or measured decay curves.
    Invert,
    /// Filter-function tables.
    FilterEval,
    /// Fit the low-field FID form to measured data.
    FidFit,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::BuildDevice => Command::BuildDevice,
            Cmd::EchoSweep => Command::EchoSweep,
            Cmd::T2Report => Command::T2Report,
            Cmd::Invert => Command::Invert,
            Cmd::FilterEval => Command::FilterEval,
            Cmd::FidFit => Command::FidFit,
        }
    }
}

fn load(args: &Args) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(w) = args.workers {
        if w == 0 {
            return Err(CliError::Config("--workers must be positive".into()));
        }
        cfg.workers = w;
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let result = load(&args).and_then(|cfg| run(args.command.into(), &cfg));
    match result {
        Ok(m) => {
            log::info!("{}: {} files in {:.2} s", m.command, m.files.len(), m.wall_clock_s);
            println!("{}: wrote {} files", m.command, m.files.len());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("spinbath: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
