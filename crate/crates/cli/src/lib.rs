//! Command-line front end: configuration, dispatch and report writing.

pub mod commands;
pub mod config;
pub mod report;

use std::path::{Path, PathBuf};

use clap::Parser;

pub use commands::{Command, Runner};
pub use config::{Config, ConfigError, PRESETS};
pub use report::{Report, VERSION};

/// All requested checks passed.
pub const EXIT_PASS: i32 = 0;
/// Some check failed; reports were written.
pub const EXIT_FAIL: i32 = 1;
/// Bad configuration or a module error; nothing was written.
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "semires", version, about = "Resolvent estimate experiments for semiclassical Schrodinger operators")]
pub struct Cli {
    /// TOML configuration; keys override the preset.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (default: the config's `output`, else semires-out).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    pub jobs: usize,
    /// Preset model; takes precedence over `preset` in the config file.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<String>,
    #[arg(value_enum)]
    pub command: Command,
}

/// Outcome of a completed run.
#[derive(Debug)]
pub struct Outcome {
    pub config: Config,
    pub report: Report,
}

/// Resolves the configuration and runs the command, without writing anything.
pub fn execute(command: Command, config: &Config) -> anyhow::Result<Report> {
    let mut runner = Runner::new(config)?;
    runner.run(command)?;
    Ok(runner.report)
}

/// Runs a parsed command line and returns the exit status.
pub fn run(cli: &Cli) -> i32 {
    let cfg = match Config::load(cli.config.as_deref(), cli.preset.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return EXIT_ERROR;
        }
    };
    let report = match pool.install(|| execute(cli.command, &cfg)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_ERROR;
        }
    };
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("semires-out"));
    if let Err(e) = report.write(&dir, cli.command.name(), &cfg) {
        eprintln!("error: writing {}: {e}", dir.display());
        return EXIT_ERROR;
    }
    print_summary(&report, &dir);
    if report.passed() {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

fn print_summary(report: &Report, dir: &Path) {
    for c in &report.checks {
        let tag = match (c.passed, c.gate) {
            (true, true) => "PASS",
            (false, true) => "FAIL",
            (_, false) => "info",
        };
        println!("{tag:4} {} : {}", c.name, c.detail);
    }
    for n in &report.notices {
        println!("note {n}");
    }
    println!("reports in {}", dir.display());
}
