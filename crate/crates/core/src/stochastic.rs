//! Seeded randomness: node placement, block-fading channels and arrivals.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SystemConfig;
use crate::phy::path_loss;

/// Deterministic pseudo-random source identified by `(seed, stream)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

/// Substream tags used by the episode driver.
pub const TOPOLOGY_TAG: u64 = 0;

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Independent stream keyed by `tag`; does not consume draws from `self`.
    pub fn child(&self, tag: u64) -> Self {
        let seed = splitmix64(self.seed ^ splitmix64(tag.wrapping_add(0x9e37_79b9_7f4a_7c15)));
        Self::new(seed, self.stream)
    }

    /// Stream for frame `t`; frame draws never depend on how many draws
    /// earlier frames consumed.
    pub fn frame(&self, t: usize) -> Self {
        self.child(1 + t as u64)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub node_pos: Vec<[f64; 2]>,
    /// Node-to-beacon distance (m).
    pub d_pb: Vec<f64>,
    /// Node-to-access-point distance (m).
    pub d_ap: Vec<f64>,
}

impl Topology {
    /// Distances for explicit coordinates. Placements closer than `d_ref`
    /// to either endpoint are rejected.
    pub fn from_positions(cfg: &SystemConfig, node_pos: Vec<[f64; 2]>) -> Result<Self> {
        let mut d_pb = Vec::with_capacity(node_pos.len());
        let mut d_ap = Vec::with_capacity(node_pos.len());
        for (k, p) in node_pos.iter().enumerate() {
            let (pb, ap) = distances(cfg, *p);
            if pb < cfg.d_ref || ap < cfg.d_ref {
                return Err(Error::InvalidConfig(format!(
                    "node {k} at ({}, {}) is closer than d_ref to the beacon or access point",
                    p[0], p[1]
                )));
            }
            d_pb.push(pb);
            d_ap.push(ap);
        }
        Ok(Self { node_pos, d_pb, d_ap })
    }

    pub fn num_nodes(&self) -> usize {
        self.node_pos.len()
    }

    /// `k,x,y` CSV with a header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,x,y")?;
        for (k, p) in self.node_pos.iter().enumerate() {
            writeln!(w, "{k},{},{}", p[0], p[1])?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(cfg: &SystemConfig, r: R) -> Result<Self> {
        let mut rows: Vec<(usize, [f64; 2])> = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if i == 0 || line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("topology line {}: {e}", i + 1)))
            };
            if fields.len() != 3 {
                return Err(Error::Parse(format!("topology line {}: expected k,x,y", i + 1)));
            }
            let k = fields[0]
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("topology line {}: {e}", i + 1)))?;
            rows.push((k, [parse(fields[1])?, parse(fields[2])?]));
        }
        rows.sort_by_key(|(k, _)| *k);
        Self::from_positions(cfg, rows.into_iter().map(|(_, p)| p).collect())
    }
}

fn distances(cfg: &SystemConfig, p: [f64; 2]) -> (f64, f64) {
    let pb = (p[0] - cfg.beacon_x).hypot(p[1] - cfg.beacon_y);
    let ap = (p[0] - cfg.ap_x).hypot(p[1] - cfg.ap_y);
    (pb, ap)
}

/// Uniform placement over the disk of radius `disk_radius` centred on the
/// access point (polar sampling with a square-root radius law). Draws that
/// land within `d_ref` of the beacon or the access point are redrawn.
pub fn place_nodes(cfg: &SystemConfig, rng: &mut RngStream) -> Topology {
    let mut node_pos = Vec::with_capacity(cfg.num_nodes);
    let mut d_pb = Vec::with_capacity(cfg.num_nodes);
    let mut d_ap = Vec::with_capacity(cfg.num_nodes);
    while node_pos.len() < cfg.num_nodes {
        let u: f64 = rng.rng().random();
        let theta: f64 = rng.rng().random::<f64>() * std::f64::consts::TAU;
        let r = cfg.disk_radius * u.sqrt();
        let p = [cfg.ap_x + r * theta.cos(), cfg.ap_y + r * theta.sin()];
        let (pb, ap) = distances(cfg, p);
        if pb < cfg.d_ref || ap < cfg.d_ref {
            continue;
        }
        node_pos.push(p);
        d_pb.push(pb);
        d_ap.push(ap);
    }
    Topology { node_pos, d_pb, d_ap }
}

/// Squared channel norms for one frame: path loss times a sum of unit-mean
/// exponentials, one per antenna (Rayleigh fading).
pub fn sample_channels(
    cfg: &SystemConfig,
    topo: &Topology,
    rng: &mut RngStream,
) -> (Vec<f64>, Vec<f64>) {
    let k = topo.num_nodes();
    let mut g = Vec::with_capacity(k);
    let mut h = Vec::with_capacity(k);
    for i in 0..k {
        let fading: f64 = (0..cfg.beacon_antennas)
            .map(|_| -> f64 { Exp1.sample(rng.rng()) })
            .sum();
        g.push(path_loss(topo.d_pb[i], cfg.path_loss_exp, cfg.d_ref) * fading);
    }
    for i in 0..k {
        let fading: f64 = (0..cfg.ap_antennas)
            .map(|_| -> f64 { Exp1.sample(rng.rng()) })
            .sum();
        h.push(path_loss(topo.d_ap[i], cfg.path_loss_exp, cfg.d_ref) * fading);
    }
    (g, h)
}

/// i.i.d. uniform arrival rates on `[a_lo, a_hi]` (bit/s).
pub fn draw_arrivals(cfg: &SystemConfig, rng: &mut RngStream) -> Vec<f64> {
    if cfg.a_lo == cfg.a_hi {
        return vec![cfg.a_lo; cfg.num_nodes];
    }
    let dist = Uniform::new_inclusive(cfg.a_lo, cfg.a_hi).expect("a_lo <= a_hi");
    (0..cfg.num_nodes)
        .map(|_| dist.sample(rng.rng()).min(cfg.a_max))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg() -> SystemConfig {
        SystemConfig::paper_defaults().validate().unwrap()
    }

    #[test]
    fn collinear_node_distances() {
        let topo = Topology::from_positions(&cfg(), vec![[250.0, 0.0]]).unwrap();
        assert_eq!(topo.d_pb[0], 500.0);
        assert_eq!(topo.d_ap[0], 250.0);
    }

    #[test]
    fn node_on_access_point_is_rejected() {
        assert!(Topology::from_positions(&cfg(), vec![[0.0, 0.0]]).is_err());
    }

    #[test]
    fn placement_stays_in_disk_and_is_deterministic() {
        let c = cfg();
        let a = place_nodes(&c, &mut RngStream::new(7, 3));
        let b = place_nodes(&c, &mut RngStream::new(7, 3));
        assert_eq!(a, b);
        let other = place_nodes(&c, &mut RngStream::new(7, 4));
        assert_ne!(a, other);
        let mut rng = RngStream::new(11, 0);
        for _ in 0..200 {
            let t = place_nodes(&c, &mut rng);
            for (i, p) in t.node_pos.iter().enumerate() {
                assert!(p[0].hypot(p[1]) <= c.disk_radius + 1e-9);
                assert!(t.d_ap[i] >= c.d_ref && t.d_pb[i] >= c.d_ref);
            }
        }
    }

    #[test]
    fn channel_mean_matches_path_loss() {
        let c = cfg();
        let topo = Topology::from_positions(&c, vec![[-150.0, 0.0]]).unwrap();
        assert_eq!(topo.d_pb[0], 100.0);
        let c1 = SystemConfig { num_nodes: 1, ..c };
        let mut rng = RngStream::new(5, 0);
        let draws = 100_000;
        let mut sum = 0.0;
        for _ in 0..draws {
            sum += sample_channels(&c1, &topo, &mut rng).0[0];
        }
        let mean = sum / draws as f64;
        assert_relative_eq!(mean, 16.0 * 1e-6, max_relative = 0.03);
    }

    #[test]
    fn channels_are_reproducible_per_frame() {
        let c = cfg();
        let root = RngStream::new(9, 2);
        let topo = place_nodes(&c, &mut root.child(TOPOLOGY_TAG));
        let a = sample_channels(&c, &topo, &mut root.frame(17));
        let b = sample_channels(&c, &topo, &mut root.frame(17));
        assert_eq!(a, b);
        assert_ne!(a, sample_channels(&c, &topo, &mut root.frame(18)));
    }

    #[test]
    fn degenerate_arrival_interval() {
        let c = SystemConfig {
            a_lo: 50e6,
            a_hi: 50e6,
            ..cfg()
        };
        assert_eq!(draw_arrivals(&c, &mut RngStream::new(1, 0)), vec![50e6; 4]);
    }

    #[test]
    fn arrival_mean_and_bounds() {
        let c = cfg();
        let mut rng = RngStream::new(3, 0);
        let mut sum = 0.0;
        let mut n = 0;
        while n < 100_000 {
            for a in draw_arrivals(&c, &mut rng) {
                assert!(a >= c.a_lo && a <= c.a_hi && a <= c.a_max);
                sum += a;
                n += 1;
            }
        }
        assert!((sum / n as f64 / 1e6 - 50.0).abs() < 0.2);
    }

    #[test]
    fn topology_csv_round_trip() {
        let c = cfg();
        let topo = place_nodes(&c, &mut RngStream::new(1, 1));
        let mut buf = Vec::new();
        topo.write_csv(&mut buf).unwrap();
        let back = Topology::read_csv(&c, buf.as_slice()).unwrap();
        assert_eq!(back, topo);
    }
}
