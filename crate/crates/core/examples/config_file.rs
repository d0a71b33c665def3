//! Loads a configuration file (or the defaults), overrides a few keys and
//! prints the result in the same format.
//!
//! `cargo run --example config_file -- configs/default.toml`

use ehwsn::model::{load_config, parse_config, render_config, SystemConfig};

fn main() -> ehwsn::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => load_config(path)?,
        None => SystemConfig::paper_defaults().validate()?,
    };
    println!("{} nodes, P_max {:.1} W, sigma2 {:.3e} W", cfg.num_nodes, cfg.p_max, cfg.sigma2);

    let mut text = render_config(&cfg);
    text = text.replace(&format!("num_nodes = {}", cfg.num_nodes), "num_nodes = 2");
    let small = parse_config(&text)?;
    println!("after override: {} nodes", small.num_nodes);

    match parse_config("num_nodes = 0\n") {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("rejected: {e}"),
    }
    print!("{}", render_config(&small));
    Ok(())
}
