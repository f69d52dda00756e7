use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fracflow_cli::config::{load, KernelsConfig, RunConfig, SampleConfig, VerifyConfig};
use fracflow_cli::{cmd_kernels, cmd_sample, cmd_solve, cmd_verify, CliError};

#[derive(Parser)]
#[command(name = "fracflow", version, about = "Fractional-in-time measure transport by subordination")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON configuration document.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate g, h and the Mittag-Leffler function.
    Kernels,
    /// Monte Carlo moments and exponential functionals of the inverse clock.
    Sample,
    /// Solve a linear, nonlinear or source-driven transport problem.
    Solve,
    /// Run the verification suite.
    Verify {
        /// Comma-separated criterion numbers to run (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

fn required(config: &Option<PathBuf>) -> Result<&Path, CliError> {
    config.as_deref().ok_or_else(|| CliError::Config("--config is required".into()))
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn run(cli: Cli) -> Result<(), CliError> {
    let c = &cli.common;
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    std::fs::create_dir_all(&c.out).map_err(|e| CliError::Io(format!("{}: {e}", c.out.display())))?;
    match cli.command {
        Command::Kernels => {
            let cfg: KernelsConfig = load(required(&c.config)?)?;
            for f in cmd_kernels(&cfg, &c.out)? {
                println!("{}", f.display());
            }
        }
        Command::Sample => {
            let mut cfg: SampleConfig = load(required(&c.config)?)?;
            cfg.seed = c.seed.unwrap_or(cfg.seed);
            let records = cmd_sample(&cfg, &c.out)?;
            println!("{} records written to {}", records.len(), c.out.join("samples.jsonl").display());
        }
        Command::Solve => {
            let file = required(&c.config)?;
            let mut cfg: RunConfig = load(file)?;
            cfg.solver.seed = c.seed.unwrap_or(cfg.solver.seed);
            let out = cmd_solve(&cfg, &base_dir(file), &c.out)?;
            let m = &out.manifest;
            println!(
                "t = {}: mass {}, first moment {:?}, {} Picard sweeps",
                m.times.last().unwrap_or(&0.0),
                m.total_mass.last().unwrap_or(&0.0),
                m.first_moment.last().cloned().unwrap_or_default(),
                out.sweeps
            );
        }
        Command::Verify { only } => {
            let mut cfg = match &c.config {
                Some(f) => load::<VerifyConfig>(f)?,
                None => VerifyConfig::default(),
            };
            cfg.seed = c.seed.unwrap_or(cfg.seed);
            let result = cmd_verify(&cfg, &only, &c.out);
            let report = std::fs::read_to_string(c.out.join("verify_report.json")).unwrap_or_default();
            println!("{report}");
            result?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fracflow: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
