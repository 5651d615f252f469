use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hilfer_cli::commands::{CommandError, EXIT_CONFIG, EXIT_OK};
use hilfer_cli::{cmd_check, cmd_solve, cmd_stability, cmd_verify_operators, load_config, parse_grid_list, Format, Overrides};

#[derive(Parser)]
#[command(name = "hilfer", version, about = "Solve and probe psi-Hilfer delay integrodifferential equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Grid intervals; a comma-separated list for verify-operators
    #[arg(long, global = true)]
    grid: Option<String>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the contraction hypotheses
    Check {
        /// Also print the alternative Theta normalisation
        #[arg(long)]
        debug: bool,
    },
    /// Solve by Picard iteration and write the trajectory
    Solve,
    /// Run the configured perturbation experiments
    Stability,
    /// Convergence table for the quadrature against closed forms
    VerifyOperators {
        /// psi transform(s): identity, exponential, shifted-power[:rho]
        #[arg(long)]
        psi: Vec<String>,
    },
}

fn run(cli: Cli, out: &mut dyn Write) -> Result<i32, CommandError> {
    let common = cli.common;
    if let Command::VerifyOperators { psi } = &cli.command {
        let grids = match &common.grid {
            Some(text) => parse_grid_list(text).map_err(|message| hilfer_cli::ConfigError::Invalid {
                field: "--grid".into(),
                message,
            })?,
            None => vec![500, 1000, 2000],
        };
        let save = common.out.as_deref().map(|dir| (dir, common.format.unwrap_or_default()));
        return cmd_verify_operators(psi, &grids, save, out);
    }
    let path = common.config.ok_or_else(|| hilfer_cli::ConfigError::Invalid {
        field: "--config".into(),
        message: "this command needs a config file".into(),
    })?;
    let grid = match &common.grid {
        Some(text) => Some(text.trim().parse::<usize>().map_err(|_| hilfer_cli::ConfigError::Invalid {
            field: "--grid".into(),
            message: format!("`{text}` is not a grid size"),
        })?),
        None => None,
    };
    let overrides = Overrides {
        grid,
        tol: common.tol,
        out: common.out,
        seed: common.seed,
        format: common.format,
    };
    let config = load_config(&path, &overrides)?;
    match cli.command {
        Command::Check { debug } => cmd_check(&config, debug, out),
        Command::Solve => cmd_solve(&config, out),
        Command::Stability => cmd_stability(&config, out),
        Command::VerifyOperators { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    // clap's own usage-error code (2) would collide with "uncertified"
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK } as u8);
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let code = match run(cli, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    let _ = out.flush();
    ExitCode::from(code.clamp(0, 255) as u8)
}
