//! Throughput and harvested power against the beacon power budget.

use ehwsn::harness::{run_experiment, ExperimentKind, ExperimentSpec};
use ehwsn::model::SystemConfig;

fn main() -> ehwsn::Result<()> {
    let cfg = SystemConfig::paper_defaults().validate()?;
    let mut spec = ExperimentSpec::new(ExperimentKind::PmaxSweep, &cfg);
    spec.frames = 100;
    spec.realizations = 4;
    let out = run_experiment(&spec, &cfg)?;
    println!("{:>6} {:<12} {:>14} {:>14}", "dBm", "scheme", "thr (bit/s)", "harvest (W)");
    for row in &out.rows {
        println!(
            "{:>6} {:<12} {:>14.4e} {:>14.4e}",
            row.grid_value,
            row.scheme.as_str(),
            row.mean_sum_throughput_bps,
            row.avg_harvested_w
        );
    }
    Ok(())
}
