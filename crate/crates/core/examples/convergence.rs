//! Objective of the SCA loop per iteration, for a single frame and averaged
//! over a few realizations.
//!
//! `cargo run --release --example convergence -- out/convergence`

use std::path::PathBuf;

use ehwsn::harness::{run_experiment, write_outputs, ExperimentKind, ExperimentSpec};
use ehwsn::model::SystemConfig;

fn main() -> ehwsn::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from);
    let cfg = SystemConfig::paper_defaults().validate()?;
    let mut spec = ExperimentSpec::new(ExperimentKind::Convergence, &cfg);
    spec.frames = 20;
    spec.realizations = 8;
    let out = run_experiment(&spec, &cfg)?;
    for plot in &out.plots {
        println!("{}", plot.name);
        for (s, col) in plot.schemes.iter().zip(&plot.columns) {
            let cells: Vec<String> = col.iter().map(|v| format!("{v:.4e}")).collect();
            println!("  {:<12} {}", s.as_str(), cells.join(" "));
        }
    }
    if let Some(dir) = dir {
        for f in write_outputs(&out, &cfg, &dir)? {
            println!("wrote {}", f.display());
        }
    }
    Ok(())
}
