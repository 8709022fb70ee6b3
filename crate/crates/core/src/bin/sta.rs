use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sta_core::scenario::{
    parse_config, run_attack, run_grad_check, run_nominal, run_sweep, write_atomic, ScenarioConfig,
    SweepParameter, PRESET_CAVEAT,
};
use sta_core::StaError;

#[derive(Parser)]
#[command(name = "sta", version, about = "Stealthy sustainability-targeting attack experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario document (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `outputs.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// LQR baseline without attack.
    Nominal(Common),
    /// Full attack pipeline.
    Attack(Common),
    /// Adjoint gradients against finite differences.
    GradCheck(Common),
    /// Attack runs over a list of gamma or alpha values.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `gamma` or `alpha`.
        #[arg(long)]
        param: SweepParameter,
        /// Comma-separated values, run in the given order.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Built-in preset of the reference system.
    ReproducePaper {
        /// Optional override of the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(err: &StaError) -> u8 {
    match err.root() {
        StaError::Config { .. } | StaError::Syntax { .. } | StaError::Dimension(_) | StaError::Infeasible(_) => 2,
        StaError::Convergence { .. } => 3,
        StaError::Divergence { .. } | StaError::StepFailure { .. } => 4,
        _ => 1,
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, StaError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| StaError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    parse_config(&text)
}

fn out_dir(cfg: &ScenarioConfig, out: &Option<PathBuf>) -> PathBuf {
    out.clone().unwrap_or_else(|| cfg.outputs.dir.clone())
}

fn attack(cfg: &ScenarioConfig, dir: &Path) -> Result<u8, StaError> {
    let outcome = run_attack(cfg)?;
    for p in outcome.write(dir)? {
        eprintln!("wrote {}", p.display());
    }
    print!("{}", outcome.summary.to_json());
    let converged = outcome.summary.attack.as_ref().is_some_and(|a| a.converged);
    Ok(if converged { 0 } else { 3 })
}

fn run(cli: Cli) -> Result<u8, StaError> {
    match cli.command {
        Command::Nominal(c) => {
            let cfg = load(&c.config)?;
            let outcome = run_nominal(&cfg)?;
            for p in outcome.write(&out_dir(&cfg, &c.out))? {
                eprintln!("wrote {}", p.display());
            }
            print!("{}", outcome.summary.to_json());
            Ok(0)
        }
        Command::Attack(c) => {
            let cfg = load(&c.config)?;
            attack(&cfg, &out_dir(&cfg, &c.out))
        }
        Command::GradCheck(c) => {
            let cfg = load(&c.config)?;
            let report = run_grad_check(&cfg)?;
            let dir = out_dir(&cfg, &c.out);
            write_atomic(&dir.join("grad_check.json"), &serde_json::to_string_pretty(&report).unwrap())?;
            print!("{}", report.table());
            Ok(0)
        }
        Command::Sweep { common, param, values } => {
            let cfg = load(&common.config)?;
            let report = run_sweep(&cfg, param, &values)?;
            let dir = out_dir(&cfg, &common.out);
            write_atomic(&dir.join("sweep.json"), &report.to_json())?;
            write_atomic(&dir.join("sweep.csv"), &report.to_csv())?;
            print!("{}", report.to_csv());
            Ok(0)
        }
        Command::ReproducePaper { config, out } => {
            let cfg = match config {
                Some(p) => load(&p)?,
                None => ScenarioConfig::reference_preset(),
            };
            eprintln!("{PRESET_CAVEAT}");
            let dir = out_dir(&cfg, &out);
            write_atomic(&dir.join("config.json"), &format!("{}\n", cfg.to_json()))?;
            attack(&cfg, &dir)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
