//! Draws one frame and solves it with every scheme.

use ehwsn::model::{FrameState, SystemConfig};
use ehwsn::sca::{solve_frame_or_fallback, Scheme};
use ehwsn::stochastic::{draw_arrivals, place_nodes, sample_channels, RngStream, TOPOLOGY_TAG};

fn main() -> ehwsn::Result<()> {
    let cfg = SystemConfig::paper_defaults().with_nodes(4).validate()?;
    let root = RngStream::new(11, 0);
    let topo = place_nodes(&cfg, &mut root.child(TOPOLOGY_TAG));
    let mut draw = root.frame(0);
    let (g, h) = sample_channels(&cfg, &topo, &mut draw);
    let frame = FrameState {
        t: 0,
        g_norm2: g,
        h_norm2: h,
        arrivals: draw_arrivals(&cfg, &mut draw),
        queue: vec![2e4; cfg.num_nodes],
        battery: vec![1e-6; cfg.num_nodes],
    };

    for scheme in Scheme::ALL {
        let res = solve_frame_or_fallback(&frame, cfg.beta, &cfg, scheme, None)?;
        let a = &res.allocation;
        println!("{scheme}: objective {:.6e}, {} SCA iterations", res.objective(), res.iterations);
        for i in 0..cfg.num_nodes {
            println!(
                "  node {i}: alpha {:.4}  p_e {:8.3} W  p_i {:.3e} W",
                a.alpha[i], a.p_e[i], a.p_i[i]
            );
        }
    }
    Ok(())
}
