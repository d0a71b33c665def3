//! Command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

use crate::error::{Error, Result};
use crate::harness::{run_experiment, write_outputs, ExperimentKind, ExperimentSpec};
use crate::model::load_config;
use crate::sca::Scheme;

#[derive(Debug, Parser)]
#[command(name = "ehwsn", version, about = "Run energy-harvesting WSN allocation experiments")]
struct Args {
    /// TOML config file
    #[arg(long)]
    config: PathBuf,
    /// proposed, equal-power, max-power, equal-time or all
    #[arg(long, default_value = "all")]
    scheme: String,
    /// convergence, throughput-vs-time, beta-sweep or pmax-sweep
    #[arg(long, default_value = "throughput-vs-time")]
    experiment: String,
    #[arg(long, default_value_t = 200)]
    frames: usize,
    #[arg(long, default_value_t = 50)]
    realizations: usize,
    /// Defaults to the config's rng_seed
    #[arg(long)]
    seed: Option<u64>,
    /// Penalty weight; defaults to the config's beta
    #[arg(long)]
    beta: Option<f64>,
    /// Comma-separated sweep grid (β values or P_max in dBm)
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_schemes(s: &str) -> Result<Vec<Scheme>> {
    if s == "all" {
        Ok(Scheme::ALL.to_vec())
    } else {
        s.split(',').map(str::parse).collect()
    }
}

fn run(args: Args) -> Result<Vec<PathBuf>> {
    let cfg = load_config(&args.config)?;
    let kind: ExperimentKind = args.experiment.parse()?;
    let mut spec = ExperimentSpec::new(kind, &cfg);
    spec.schemes = parse_schemes(&args.scheme)?;
    spec.frames = args.frames;
    spec.realizations = args.realizations;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(beta) = args.beta {
        spec.beta = beta;
    }
    if let Some(grid) = args.grid {
        if !matches!(kind, ExperimentKind::BetaSweep | ExperimentKind::PmaxSweep) {
            return Err(Error::Experiment(format!("--grid does not apply to {kind}")));
        }
        spec.grid = grid;
    }
    let cfg = crate::model::SystemConfig {
        beta: spec.beta,
        rng_seed: spec.seed,
        ..cfg
    };
    let out = run_experiment(&spec, &cfg)?;
    write_outputs(&out, &cfg, &args.out)
}

/// Parses `args` (including the program name) and runs the requested
/// experiment. Returns the process exit status: 0 on success, 2 on usage
/// errors and 1 on any other failure.
pub fn cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(args) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
