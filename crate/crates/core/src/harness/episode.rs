//! Frame-by-frame episode driver and its log.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrameState, SystemConfig};
use crate::phy::{harvested_energy, RateFn};
use crate::queues::{served_bits, update_data_queue, update_energy_queue, QueueTrace};
use crate::sca::{solve_frame_or_fallback, Scheme, ScaTraceRow};
use crate::stochastic::{draw_arrivals, place_nodes, sample_channels, RngStream, Topology, TOPOLOGY_TAG};

pub const FRAME_LOG_HEADER: &str =
    "t,k,p_e_w,p_i_w,alpha,e_j,a_bps,q_bits,E_j,r_bps,served_bits,sca_iters,objective";

/// One node in one frame. Queue and battery are start-of-frame values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRow {
    pub t: usize,
    pub k: usize,
    pub p_e_w: f64,
    pub p_i_w: f64,
    pub alpha: f64,
    pub e_j: f64,
    pub a_bps: f64,
    pub q_bits: f64,
    #[serde(rename = "E_j")]
    pub battery_j: f64,
    pub r_bps: f64,
    pub served_bits: f64,
    pub sca_iters: usize,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub scheme: Scheme,
    pub beta: f64,
    pub num_nodes: usize,
    pub tau: f64,
    pub e_max: f64,
    pub cap_service_by_backlog: bool,
    /// `T · K` rows, frame-major.
    pub rows: Vec<FrameRow>,
    /// Backlog and battery after the last frame.
    pub final_queue: Vec<f64>,
    pub final_battery: Vec<f64>,
    /// Frames that used the infeasible-frame fallback.
    pub fallbacks: usize,
    /// SCA traces of every frame (empty unless requested).
    pub sca_trace: Vec<ScaTraceRow>,
}

/// Per-episode averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    /// Served bits per second summed over nodes, averaged over frames.
    pub mean_sum_throughput_bps: f64,
    /// Total end-of-frame backlog averaged over frames.
    pub avg_total_queue_bits: f64,
    /// Harvested power summed over nodes, averaged over frames.
    pub avg_harvested_w: f64,
}

impl EpisodeLog {
    pub fn frames(&self) -> usize {
        self.rows.len() / self.num_nodes.max(1)
    }

    pub fn frame_rows(&self, t: usize) -> &[FrameRow] {
        &self.rows[t * self.num_nodes..(t + 1) * self.num_nodes]
    }

    /// Sum throughput (bit/s) of each frame.
    pub fn sum_throughput(&self) -> Vec<f64> {
        (0..self.frames())
            .map(|t| self.frame_rows(t).iter().map(|r| r.served_bits).sum::<f64>() / self.tau)
            .collect()
    }

    /// Total end-of-frame backlog of each frame.
    pub fn total_queue_after(&self) -> Vec<f64> {
        let t_max = self.frames();
        (0..t_max)
            .map(|t| {
                if t + 1 < t_max {
                    self.frame_rows(t + 1).iter().map(|r| r.q_bits).sum()
                } else {
                    self.final_queue.iter().sum()
                }
            })
            .collect()
    }

    pub fn summary(&self) -> EpisodeSummary {
        let t = self.frames().max(1) as f64;
        let harvested: f64 = self.rows.iter().map(|r| r.e_j).sum::<f64>() / self.tau;
        EpisodeSummary {
            mean_sum_throughput_bps: self.sum_throughput().iter().sum::<f64>() / t,
            avg_total_queue_bits: self.total_queue_after().iter().sum::<f64>() / t,
            avg_harvested_w: harvested / t,
        }
    }

    pub fn queue_trace(&self) -> QueueTrace {
        let mut trace = QueueTrace::default();
        for t in 0..self.frames() {
            let rows = self.frame_rows(t);
            trace.push(
                rows.iter().map(|r| r.q_bits).collect(),
                rows.iter().map(|r| r.battery_j).collect(),
                rows.iter().map(|r| r.served_bits).collect(),
                rows.iter().map(|r| r.e_j).collect(),
            );
        }
        trace
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{FRAME_LOG_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.k,
                r.p_e_w,
                r.p_i_w,
                r.alpha,
                r.e_j,
                r.a_bps,
                r.q_bits,
                r.battery_j,
                r.r_bps,
                r.served_bits,
                r.sca_iters,
                r.objective
            )?;
        }
        Ok(())
    }
}

/// Parses a frame log written by [`EpisodeLog::write_csv`].
pub fn read_frame_rows<R: BufRead>(r: R) -> Result<Vec<FrameRow>> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != FRAME_LOG_HEADER {
                return Err(Error::Parse(format!("unexpected frame log header `{line}`")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 13 {
            return Err(Error::Parse(format!("frame log line {}: expected 13 fields", i + 1)));
        }
        let num = |j: usize| {
            f[j].parse::<f64>()
                .map_err(|e| Error::Parse(format!("frame log line {}: {e}", i + 1)))
        };
        let int = |j: usize| {
            f[j].parse::<usize>()
                .map_err(|e| Error::Parse(format!("frame log line {}: {e}", i + 1)))
        };
        rows.push(FrameRow {
            t: int(0)?,
            k: int(1)?,
            p_e_w: num(2)?,
            p_i_w: num(3)?,
            alpha: num(4)?,
            e_j: num(5)?,
            a_bps: num(6)?,
            q_bits: num(7)?,
            battery_j: num(8)?,
            r_bps: num(9)?,
            served_bits: num(10)?,
            sca_iters: int(11)?,
            objective: num(12)?,
        });
    }
    Ok(rows)
}

/// Recomputes every queue and battery transition from the logged
/// allocations and draws and checks that it reproduces the next row
/// bit-for-bit. Also checks the battery range, the row layout and that no
/// node transmits more than its available energy allows.
pub fn replay_check(rows: &[FrameRow], cfg: &SystemConfig, use_battery: bool) -> Result<()> {
    let k = cfg.num_nodes;
    if !rows.len().is_multiple_of(k) {
        return Err(Error::Dimension {
            expected: k * (rows.len() / k + 1),
            got: rows.len(),
        });
    }
    let frames = rows.len() / k;
    for t in 0..frames {
        for i in 0..k {
            let r = &rows[t * k + i];
            let bad = |what: String| Error::Replay {
                frame: t,
                node: i,
                what,
            };
            if r.t != t || r.k != i {
                return Err(bad(format!("row labelled ({}, {})", r.t, r.k)));
            }
            if t == 0 && (r.q_bits != 0.0 || r.battery_j != 0.0) {
                return Err(bad("episode must start empty".into()));
            }
            if !(r.battery_j >= 0.0 && r.battery_j <= cfg.e_max) {
                return Err(bad(format!("battery {} outside [0, E_max]", r.battery_j)));
            }
            let available = if use_battery { r.battery_j + r.e_j } else { r.e_j };
            let cap = (available / ((1.0 - r.alpha) * cfg.tau)).min(cfg.p_bar);
            if r.p_i_w > cap * (1.0 + 1e-12) {
                return Err(bad(format!("p_i {} above cap {cap}", r.p_i_w)));
            }
            let served = served_bits(
                r.q_bits,
                r.a_bps,
                cfg.tau,
                r.r_bps,
                r.alpha,
                cfg.cap_service_by_backlog,
            );
            if served != r.served_bits {
                return Err(bad(format!("served {} != {}", r.served_bits, served)));
            }
            if t + 1 < frames {
                let next = &rows[(t + 1) * k + i];
                let q = update_data_queue(r.q_bits, r.a_bps, cfg.tau, r.r_bps, r.alpha);
                if q != next.q_bits {
                    return Err(bad(format!("queue {} != {}", next.q_bits, q)));
                }
                let e = update_energy_queue(r.battery_j, r.e_j, r.p_i_w, r.alpha, cfg.tau, cfg.e_max)?;
                if e != next.battery_j {
                    return Err(bad(format!("battery {} != {}", next.battery_j, e)));
                }
            }
        }
    }
    Ok(())
}

/// Options of a single episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOptions {
    pub frames: usize,
    pub beta: f64,
    /// Keep the SCA trace of every frame.
    pub record_sca: bool,
}

/// Topology for realization `r` of a run seeded with `seed`.
pub fn realization_topology(cfg: &SystemConfig, seed: u64, r: u64) -> Topology {
    let stream = if cfg.resample_topology { r } else { 0 };
    place_nodes(cfg, &mut RngStream::new(seed, stream).child(TOPOLOGY_TAG))
}

/// Runs `opts.frames` frames from empty queues and an empty battery.
/// Frame `t` draws its channels and arrivals from `rng.frame(t)`, so every
/// scheme sees the same randomness for the same stream.
pub fn run_episode(
    cfg: &SystemConfig,
    scheme: Scheme,
    topology: &Topology,
    rng: &RngStream,
    opts: EpisodeOptions,
) -> Result<EpisodeLog> {
    let k = cfg.num_nodes;
    if topology.num_nodes() != k {
        return Err(Error::Dimension {
            expected: k,
            got: topology.num_nodes(),
        });
    }
    let mut q = vec![0.0; k];
    let mut battery = vec![0.0; k];
    let mut prev_alpha: Option<Vec<f64>> = None;
    let mut log = EpisodeLog {
        scheme,
        beta: opts.beta,
        num_nodes: k,
        tau: cfg.tau,
        e_max: cfg.e_max,
        cap_service_by_backlog: cfg.cap_service_by_backlog,
        rows: Vec::with_capacity(opts.frames * k),
        final_queue: Vec::new(),
        final_battery: Vec::new(),
        fallbacks: 0,
        sca_trace: Vec::new(),
    };
    for t in 0..opts.frames {
        let mut draw = rng.frame(t);
        let (g, h) = sample_channels(cfg, topology, &mut draw);
        let arrivals = draw_arrivals(cfg, &mut draw);
        let frame = FrameState {
            t,
            g_norm2: g,
            h_norm2: h,
            arrivals,
            queue: q.clone(),
            battery: battery.clone(),
        };
        let wrap = |e: Error| Error::Frame {
            frame: t,
            source: Box::new(e),
        };
        let res = solve_frame_or_fallback(&frame, opts.beta, cfg, scheme, prev_alpha.as_deref())
            .map_err(wrap)?;
        if res.fallback {
            log.fallbacks += 1;
        }
        if opts.record_sca {
            log.sca_trace.extend(res.trace_rows(t));
        }
        let a = &res.allocation;
        for i in 0..k {
            let e = harvested_energy(cfg.eta, cfg.tau, a.alpha[i], a.p_e[i], frame.g_norm2[i])
                .map_err(wrap)?;
            let r = RateFn::new(cfg.w_k, frame.h_norm2[i], cfg.sigma2)
                .map_err(wrap)?
                .rate(a.p_i[i]);
            let served = served_bits(
                q[i],
                frame.arrivals[i],
                cfg.tau,
                r,
                a.alpha[i],
                cfg.cap_service_by_backlog,
            );
            log.rows.push(FrameRow {
                t,
                k: i,
                p_e_w: a.p_e[i],
                p_i_w: a.p_i[i],
                alpha: a.alpha[i],
                e_j: e,
                a_bps: frame.arrivals[i],
                q_bits: q[i],
                battery_j: battery[i],
                r_bps: r,
                served_bits: served,
                sca_iters: res.iterations,
                objective: res.objective(),
            });
            q[i] = update_data_queue(q[i], frame.arrivals[i], cfg.tau, r, a.alpha[i]);
            battery[i] = update_energy_queue(battery[i], e, a.p_i[i], a.alpha[i], cfg.tau, cfg.e_max)
                .map_err(wrap)?;
        }
        prev_alpha = Some(a.alpha.clone());
    }
    log.final_queue = q;
    log.final_battery = battery;
    Ok(log)
}
