use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kpp_core::kpp_solver::Frame;
use kpp_lab::{commands, CliError, ExperimentConfig};

/// Fisher-KPP front experiments.
#[derive(Parser)]
#[command(name = "kpp-lab", version)]
struct Cli {
    /// TOML experiment configuration; defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the minimal-speed traveling wave.
    Wave {
        #[arg(long)]
        half_width: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Evolve step-like data and record the front.
    Evolve {
        #[arg(long, value_parser = parse_frame)]
        frame: Option<Frame>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        dx: Option<f64>,
    },
    /// Amplitude in self-similar variables.
    Selfsim {
        /// Field checkpoint written by `evolve`.
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        tau_end: Option<f64>,
    },
    /// Build and check the sub- and super-solutions.
    Barrier {
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        c_gamma: Option<f64>,
    },
    /// Branching Brownian motion maxima.
    Bbm {
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Compare the fitted front shift with the amplitude shift.
    Xinfty {
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        dx: Option<f64>,
    },
}

fn parse_frame(s: &str) -> Result<Frame, String> {
    match s {
        "lab" => Ok(Frame::Lab),
        "moving" => Ok(Frame::Moving),
        _ => Err(format!("unknown frame {s:?} (lab or moving)")),
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    set(&mut cfg.out_dir, cli.out);
    set(&mut cfg.seed, cli.seed);
    match &cli.command {
        Command::Wave { half_width, n, tol } => {
            set(&mut cfg.wave.half_width, *half_width);
            set(&mut cfg.wave.n, *n);
            set(&mut cfg.wave.tol, *tol);
        }
        Command::Evolve { frame, t_end, dx } => {
            set(&mut cfg.evolve.frame, *frame);
            set(&mut cfg.evolve.t_end, *t_end);
            set(&mut cfg.evolve.dx, *dx);
        }
        Command::Selfsim { t_end, tau_end, .. } => {
            set(&mut cfg.evolve.t_end, *t_end);
            if tau_end.is_some() {
                cfg.selfsim.tau_end = *tau_end;
            }
        }
        Command::Barrier { gamma, c_gamma } => {
            set(&mut cfg.barrier.gamma, *gamma);
            set(&mut cfg.barrier.c_gamma, *c_gamma);
        }
        Command::Bbm { t_end, replicates } => {
            if let Some(t) = *t_end {
                cfg.bbm.t_end = t;
                cfg.bbm.checkpoints.retain(|&c| c < t);
                cfg.bbm.median_fit.retain(|&c| c <= t);
            }
            set(&mut cfg.bbm.replicates, *replicates);
        }
        Command::Xinfty { t_end, dx } => {
            set(&mut cfg.evolve.t_end, *t_end);
            set(&mut cfg.evolve.dx, *dx);
        }
    }
    cfg.validate()?;
    cfg.prepare_out_dir()?;
    log::info!("config hash {}", cfg.hash());
    match &cli.command {
        Command::Wave { .. } => commands::wave(&cfg),
        Command::Evolve { .. } => commands::evolve(&cfg),
        Command::Selfsim { field, .. } => commands::selfsim(&cfg, field.as_deref()),
        Command::Barrier { .. } => commands::barrier(&cfg),
        Command::Bbm { .. } => commands::bbm(&cfg),
        Command::Xinfty { .. } => commands::xinfty(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KPP_LAB_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(summary) => {
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            // a closed pipe on stdout is not a failure of the run
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
