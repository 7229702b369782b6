//! Regenerates the synthetic-house fixture.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use walkforge::house::{write_fixture, HouseSpec};

#[derive(Debug, Parser)]
#[command(name = "walkforge-fixtures", about = "Write the synthetic-house fixture")]
struct Cli {
    /// Output directory; replaced if it exists.
    #[arg(long, default_value = "fixtures/house")]
    out: PathBuf,
    #[arg(long, default_value_t = HouseSpec::default().seed)]
    seed: u64,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if cli.out.exists() {
        std::fs::remove_dir_all(&cli.out).with_context(|| format!("clearing {}", cli.out.display()))?;
    }
    let spec = HouseSpec { seed: cli.seed, ..HouseSpec::default() };
    let n = write_fixture(&cli.out, &spec)?;
    println!("wrote {} with {n} stub completions", cli.out.display());
    Ok(())
}
