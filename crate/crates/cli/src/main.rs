//! `latentbench <command> --config path.json [--seed N] [--out dir]`
//!
//! Exit codes: 0 success, 2 configuration, 3 data, 4 numerical.

mod commands;
mod config;
mod stage;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;
use tracing::{error, info};

use config::{Command, RunConfig};
use latentbench::ErrorFamily;

const OUT_ENV: &str = "LATENTBENCH_OUT";
const THREADS_ENV: &str = "LATENTBENCH_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] latentbench::Error),
}

impl CliError {
    fn family(&self) -> ErrorFamily {
        match self {
            CliError::Config(_) => ErrorFamily::Config,
            CliError::Core(e) => e.family(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "latentbench", version, about = "Desk-scale latent diffusion workbench for chest radiographs")]
struct Args {
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory (and LATENTBENCH_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV}={raw:?} is not a positive integer")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn output_dir(args: &Args, cfg: &RunConfig, base: &Path) -> PathBuf {
    if let Some(o) = &args.out {
        return o.clone();
    }
    if let Some(o) = std::env::var_os(OUT_ENV).filter(|o| !o.is_empty()) {
        return PathBuf::from(o);
    }
    match &cfg.output {
        Some(o) => latentbench::io::resolve(base, o),
        None => PathBuf::from("out"),
    }
}

fn run(args: &Args) -> Result<serde_json::Value, CliError> {
    configure_threads()?;
    let cfg = RunConfig::load(&args.config)?;
    if let Some(c) = cfg.command.filter(|c| *c != args.command) {
        return Err(CliError::Config(format!(
            "config is for {}, command line says {}",
            c.as_str(),
            args.command.as_str()
        )));
    }
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let seed = args.seed.unwrap_or(cfg.seed);
    let out = output_dir(args, &cfg, &base);
    let ctx = commands::Ctx { base, seed };
    info!(command = args.command.as_str(), seed, out = %out.display(), "starting");

    let stage = stage::Stage::new()?;
    let mut summary = match args.command {
        Command::ReconEval => commands::recon_eval(&cfg, &ctx, &stage),
        Command::TextBench => commands::text_bench(&cfg, &ctx, &stage),
        Command::TrainProjection => commands::train_projection_cmd(&cfg, &ctx, &stage),
        Command::TrainTi => commands::train_ti(&cfg, &ctx, &stage),
        Command::TrainUnet => commands::train_unet_cmd(&cfg, &ctx, &stage),
        Command::Generate => commands::generate(&cfg, &ctx, &stage),
        Command::ClassifyEval => commands::classify_eval(&cfg, &ctx, &stage),
        Command::FidGrid => commands::fid_grid_cmd(&cfg, &ctx, &stage),
    }?;
    let artifacts = stage.commit(&out)?;
    info!(artifacts = artifacts.len(), "artifacts committed");
    summary["artifacts"] = json!(artifacts);
    summary["out"] = json!(out.display().to_string());
    summary["seed"] = json!(seed);
    Ok(summary)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .json()
        .with_writer(std::io::stderr)
        .with_max_level(tracing::Level::INFO)
        .with_current_span(false)
        .init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { ErrorFamily::Config.exit_code() } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let (line, code) = match run(&args) {
        Ok(mut s) => {
            s["command"] = json!(args.command.as_str());
            s["status"] = json!("ok");
            (s, 0)
        }
        Err(e) => {
            let family = e.family();
            error!(error = %e, code = family.exit_code(), "command failed");
            let s = json!({
                "command": args.command.as_str(),
                "status": "error",
                "code": family.exit_code(),
                "error": e.to_string(),
            });
            (s, family.exit_code())
        }
    };
    println!("{line}");
    ExitCode::from(code as u8)
}
