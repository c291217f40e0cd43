use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mtsae::harness::{self, RunConfig};
use mtsae::metrics::Method;
use mtsae::{Error, Result};

/// Multi-type spatial small area estimation under informative sampling.
///
/// Any configuration key may also be given as a flag, e.g. `--design.n 500`
/// or `--mcmc.n_iter=4000`. Flags override the config file.
#[derive(Parser, Debug)]
#[command(name = "mtsae", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Configuration file (flat dotted keys or TOML tables).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated methods: ht, univariate, multitype.
    #[arg(long, global = true)]
    methods: Option<String>,
    #[arg(long, global = true)]
    replicates: Option<usize>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic population, adjacency, cells and area truths.
    Synth,
    /// Run the repeated-sampling simulation and write the report.
    Simulate,
    /// Fit one model to a weighted sample and write its chain.
    Fit,
    /// Turn a saved chain plus poststratification cells into area estimates.
    Poststratify,
    /// Score estimate files against a truths file.
    Metrics {
        /// Estimate files written by `poststratify`.
        #[arg(long, required = true, num_args = 1..)]
        estimates: Vec<PathBuf>,
        /// Truths file (`area,gaussian,bernoulli`).
        #[arg(long)]
        truths: PathBuf,
        /// Method label for the rows of the report.
        #[arg(long, default_value = "multitype")]
        method: Method,
    },
}

type Overrides = Vec<(String, String)>;

/// Splits dotted `--key value` / `--key=value` flags out of the argument list.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Overrides)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let key = match arg.strip_prefix("--") {
            Some(k) if k.split('=').next().is_some_and(|name| name.contains('.')) => k.to_string(),
            _ => {
                rest.push(arg);
                continue;
            }
        };
        match key.split_once('=') {
            Some((k, v)) => overrides.push((k.to_string(), v.to_string())),
            None => {
                let value = iter
                    .next()
                    .ok_or_else(|| Error::Config(format!("--{key} needs a value")))?;
                overrides.push((key, value));
            }
        }
    }
    Ok((rest, overrides))
}

fn build_config(common: &Common, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    if let Some(seed) = common.seed {
        cfg.set("mcmc.seed", &seed.to_string())?;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(m) = &common.methods {
        cfg.set("simulation.methods", m)?;
    }
    if let Some(r) = common.replicates {
        cfg.replicates = r;
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn run(cli: Cli, overrides: &[(String, String)]) -> Result<()> {
    let cfg = build_config(&cli.common, overrides)?;
    match cli.command {
        Command::Synth => {
            let pop = harness::run_synth(&cfg)?;
            eprintln!(
                "wrote {} units over {} areas to {}",
                pop.frame.len(),
                pop.areas.r(),
                cfg.out.display()
            );
        }
        Command::Simulate => {
            let report = harness::run_simulation(&cfg)?;
            report.write_csv(std::io::stdout().lock())?;
        }
        Command::Fit => {
            let path = harness::run_fit(&cfg)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Poststratify => {
            for path in harness::run_poststratify(&cfg)? {
                eprintln!("wrote {}", path.display());
            }
        }
        Command::Metrics {
            estimates,
            truths,
            method,
        } => {
            let report = harness::run_metrics(&cfg, &estimates, &truths, method)?;
            report.write_csv(std::io::stdout().lock())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let (args, overrides) = match split_overrides(args) {
        Ok(split) => split,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    match run(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
