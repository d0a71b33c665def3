//! Running-average throughput and backlog over time for every scheme.
//!
//! `cargo run --release --example throughput_vs_time -- [frames] [realizations]`

use ehwsn::harness::{run_experiment, ExperimentKind, ExperimentSpec};
use ehwsn::model::SystemConfig;

fn main() -> ehwsn::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>());
    let cfg = SystemConfig::paper_defaults().validate()?;
    let mut spec = ExperimentSpec::new(ExperimentKind::ThroughputVsTime, &cfg);
    spec.frames = args.next().transpose().ok().flatten().unwrap_or(100);
    spec.realizations = args.next().transpose().ok().flatten().unwrap_or(10);
    let out = run_experiment(&spec, &cfg)?;

    for row in &out.rows {
        println!(
            "{:<12} {:.4e} ± {:.2e} bit/s, backlog {:.4e} bit",
            row.scheme.as_str(),
            row.mean_sum_throughput_bps,
            row.std_sum_throughput_bps,
            row.avg_total_queue_bits
        );
    }
    let thr = out.plots.iter().find(|p| p.name == "throughput_vs_time").expect("plot");
    let step = (thr.x.len() / 10).max(1);
    println!("\nframe {}", thr.schemes.iter().map(|s| format!("{:>12}", s.as_str())).collect::<String>());
    for i in (0..thr.x.len()).step_by(step) {
        let cells: String = thr.columns.iter().map(|c| format!("{:>12.4e}", c[i])).collect();
        println!("{:>5} {cells}", thr.x[i]);
    }
    Ok(())
}
