use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sgcasimir_cli::config::RunConfig;
use sgcasimir_cli::{run, CliError, Overrides, PlotKind, EXIT_POINT_FAILURE};

#[derive(Parser)]
#[command(name = "sgcasimir", version, about = "Sphere-grating Casimir free energy sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a TOML config.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    config: PathBuf,
    /// Replace the config sweep, e.g. `d=1e-6,1.5e-6`.
    #[arg(long, value_name = "VAR=V1,V2,...")]
    sweep_override: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Zero the wall-time column so repeated runs give identical files.
    #[arg(long)]
    deterministic: bool,
    /// Overrides the config and SGCASIMIR_CACHE_DIR.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long, value_enum, value_name = "KIND")]
    emit_plot: Vec<PlotKind>,
}

fn execute(args: RunArgs) -> Result<i32, CliError> {
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::field("--threads", "must be at least 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    let overrides = Overrides {
        sweep: args.sweep_override,
        tol: args.tol,
        deterministic: args.deterministic,
        cache_dir: args.cache_dir,
    };
    let cfg = overrides.apply(RunConfig::load(&args.config)?)?;
    let report = run(&cfg, &args.emit_plot)?;
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    if report.cache_hits > 0 {
        println!("{} of {} points from cache", report.cache_hits, report.rows.len() + report.errors.len());
    }
    if report.errors.is_empty() {
        Ok(0)
    } else {
        for e in &report.errors {
            eprintln!("point {} failed: {}", e.index, e.message);
        }
        Ok(EXIT_POINT_FAILURE)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let Command::Run(args) = Cli::parse().command;
    let code = match execute(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
