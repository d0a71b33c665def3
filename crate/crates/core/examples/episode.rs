//! Runs one episode per scheme on a shared topology and random stream, then
//! replays the logged queue and battery transitions.

use ehwsn::harness::{realization_topology, replay_check, run_episode, EpisodeOptions};
use ehwsn::model::SystemConfig;
use ehwsn::queues::stability_metric;
use ehwsn::sca::Scheme;
use ehwsn::stochastic::RngStream;

fn main() -> ehwsn::Result<()> {
    let cfg = SystemConfig::paper_defaults().validate()?;
    let seed = 3;
    let topo = realization_topology(&cfg, seed, 0);
    let opts = EpisodeOptions {
        frames: 50,
        beta: cfg.beta,
        record_sca: false,
    };
    println!("{:<12} {:>14} {:>14} {:>14} {:>9}", "scheme", "thr (bit/s)", "queue (bit)", "harvest (W)", "fallback");
    for scheme in Scheme::ALL {
        let log = run_episode(&cfg, scheme, &topo, &RngStream::new(seed, 0), opts)?;
        replay_check(&log.rows, &cfg, scheme.uses_battery())?;
        let s = log.summary();
        let stab = stability_metric(&log.queue_trace())?;
        println!(
            "{:<12} {:>14.4e} {:>14.4e} {:>14.4e} {:>9}",
            scheme.as_str(),
            s.mean_sum_throughput_bps,
            s.avg_total_queue_bits,
            s.avg_harvested_w,
            log.fallbacks
        );
        println!("{:<12} peak backlog {:.4e} bit", "", stab.max_total);
    }
    Ok(())
}
