use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use tracing_subscriber::EnvFilter;
use walkforge::config::load_config;
use walkforge::manifest::Stage;
use walkforge::pipeline::{self, RunOptions};

#[derive(Debug, Parser)]
#[command(name = "walkforge", version, about = "Turn walkthrough reconstructions into navigation data")]
struct Cli {
    /// ingest, merge, sample, detect, caption, prompt, emit, eval or all
    stage: String,
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated video ids; defaults to every listed video.
    #[arg(long, value_delimiter = ',')]
    videos: Option<Vec<String>>,
    /// Videos processed in parallel (0 = one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Also write an SPL histogram after eval.
    #[arg(long)]
    plot: bool,
}

fn run(cli: Cli) -> Result<i32> {
    let stages: Vec<Stage> = if cli.stage == "all" {
        Stage::ALL.to_vec()
    } else {
        vec![cli.stage.parse::<Stage>().map_err(anyhow::Error::msg)?]
    };
    let cfg = load_config(&cli.config, std::env::vars())
        .with_context(|| format!("loading {}", cli.config.display()))?;
    let opts = RunOptions {
        videos: cli.videos,
        jobs: cli.jobs,
        plot: cli.plot,
        fault: None,
    };
    for &stage in &stages {
        let report = pipeline::run_stage(stage, &cfg, &opts)?;
        for (video, cause) in &report.failed {
            eprintln!("{stage}: {video} failed: {cause}");
        }
        if report.is_noop() && report.skipped.is_empty() {
            tracing::info!(%stage, "nothing to do");
        }
    }
    Ok(pipeline::run_status(&cfg, &opts, &stages)?.exit_code())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
