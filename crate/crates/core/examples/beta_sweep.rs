//! Throughput and backlog against the penalty weight β.

use ehwsn::harness::{run_experiment, ExperimentKind, ExperimentSpec};
use ehwsn::model::SystemConfig;

fn main() -> ehwsn::Result<()> {
    let cfg = SystemConfig::paper_defaults().validate()?;
    let mut spec = ExperimentSpec::new(ExperimentKind::BetaSweep, &cfg);
    spec.frames = 100;
    spec.realizations = 4;
    let out = run_experiment(&spec, &cfg)?;
    println!("{:>8} {:<12} {:>14} {:>14}", "beta", "scheme", "thr (bit/s)", "queue (bit)");
    for row in &out.rows {
        println!(
            "{:>8.0e} {:<12} {:>14.4e} {:>14.4e}",
            row.grid_value,
            row.scheme.as_str(),
            row.mean_sum_throughput_bps,
            row.avg_total_queue_bits
        );
    }
    Ok(())
}
