use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dyadlab_cli::{run, CliError, ExperimentConfig, OutputFormat};

#[derive(Parser)]
#[command(name = "dyadlab", version, about = "Dyadic harmonic analysis experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Haar analysis of a cell-value signal
    Haar(Common),
    /// Weighted operator norms over a power-weight sweep
    Norms(Common),
    /// Random-grid average of the dyadic shift against the Hilbert transform
    AverageHilbert(Common),
    /// Stopping-time sparse domination of a martingale transform
    SparseDominate(Common),
    /// Little Lemma, α-Lemma and FKP checks on random weights
    Carleson(Common),
    /// Properties of the Bellman function on sampled points
    Bellman(Common),
    /// Nets, cubes and the Haar basis of a quasi-metric point cloud
    Sht(Common),
    /// Two-weight testing conditions
    Ntv(Common),
}

#[derive(Args)]
struct Common {
    /// key = value file or JSON object
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    depth: Option<u32>,
    /// output directory; CSV goes to stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv, json or both
    #[arg(long)]
    format: Option<OutputFormat>,
    /// extra parameters, `key=value`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn resolve(name: &str, c: Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::new(name),
    };
    if cfg.experiment.is_empty() {
        cfg.experiment = name.into();
    } else if cfg.experiment != name {
        return Err(CliError::Config(format!("config is for {:?}, not {name:?}", cfg.experiment)));
    }
    for kv in &c.set {
        let (k, v) =
            kv.split_once('=').ok_or_else(|| CliError::Config(format!("--set expects key=value, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = c.seed {
        cfg.seed = Some(s);
    }
    if let Some(d) = c.depth {
        cfg.depth = d;
    }
    if let Some(o) = c.out {
        cfg.out = Some(o);
    }
    if let Some(f) = c.format {
        cfg.format = f;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (name, common) = match cli.command {
        Command::Haar(c) => ("haar", c),
        Command::Norms(c) => ("norms", c),
        Command::AverageHilbert(c) => ("average-hilbert", c),
        Command::SparseDominate(c) => ("sparse-dominate", c),
        Command::Carleson(c) => ("carleson", c),
        Command::Bellman(c) => ("bellman", c),
        Command::Sht(c) => ("sht", c),
        Command::Ntv(c) => ("ntv", c),
    };
    let cfg = resolve(name, common)?;
    let report = run(&cfg)?;
    match &cfg.out {
        Some(dir) => {
            for f in report.write(dir, cfg.format)? {
                eprintln!("wrote {}", dir.join(f).display());
            }
        }
        None => print!("{}", report.csv()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
