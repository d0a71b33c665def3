//! Multi-realization experiments and their CSV/JSON outputs.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dbm_to_watt, SystemConfig};
use crate::sca::{write_sca_trace_csv, Scheme};
use crate::stochastic::RngStream;

use super::episode::{realization_topology, run_episode, EpisodeLog, EpisodeOptions, EpisodeSummary};

pub const EXPERIMENT_HEADER: &str = "grid_value,scheme,mean_sum_throughput_bps,std_sum_throughput_bps,avg_total_queue_bits,avg_harvested_w";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// SCA objective against iteration.
    Convergence,
    /// Running-average sum throughput against frame index.
    ThroughputVsTime,
    /// Grid over the penalty weight β.
    BetaSweep,
    /// Grid over the beacon budget in dBm.
    PmaxSweep,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::Convergence,
        ExperimentKind::ThroughputVsTime,
        ExperimentKind::BetaSweep,
        ExperimentKind::PmaxSweep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::ThroughputVsTime => "throughput-vs-time",
            ExperimentKind::BetaSweep => "beta-sweep",
            ExperimentKind::PmaxSweep => "pmax-sweep",
        }
    }

    /// Grid used when none is given.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            ExperimentKind::BetaSweep => vec![1e-6, 1e-5, 1e-4, 1e-3],
            ExperimentKind::PmaxSweep => vec![40.0, 43.0, 46.0, 50.0, 55.0, 60.0],
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub schemes: Vec<Scheme>,
    /// β values or beacon budgets in dBm; ignored by the other kinds.
    pub grid: Vec<f64>,
    pub frames: usize,
    pub realizations: usize,
    pub seed: u64,
    pub beta: f64,
}

impl ExperimentSpec {
    /// Spec with the default scale (200 frames, 50 realizations) and grid.
    pub fn new(kind: ExperimentKind, cfg: &SystemConfig) -> Self {
        Self {
            kind,
            schemes: Scheme::ALL.to_vec(),
            grid: kind.default_grid(),
            frames: 200,
            realizations: 50,
            seed: cfg.rng_seed,
            beta: cfg.beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Experiment(m.to_string()));
        if self.schemes.is_empty() {
            return fail("scheme list is empty");
        }
        if self.realizations < 1 {
            return fail("realizations must be at least 1");
        }
        if self.frames < 1 {
            return fail("frames must be at least 1");
        }
        if matches!(self.kind, ExperimentKind::BetaSweep | ExperimentKind::PmaxSweep) {
            if self.grid.is_empty() {
                return fail("grid is empty");
            }
            if self.grid.windows(2).any(|w| !(w[1] > w[0])) {
                return fail("grid must be strictly increasing");
            }
            if self.kind == ExperimentKind::BetaSweep && self.grid.iter().any(|b| !(*b > 0.0)) {
                return fail("beta values must be positive");
            }
        }
        if !(self.beta > 0.0) {
            return fail("beta must be positive");
        }
        Ok(())
    }
}

/// One line of an experiment CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub grid_value: f64,
    pub scheme: Scheme,
    pub mean_sum_throughput_bps: f64,
    pub std_sum_throughput_bps: f64,
    pub avg_total_queue_bits: f64,
    pub avg_harvested_w: f64,
}

/// Plot-ready table: an x column and one column per scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotTable {
    pub name: String,
    pub x_label: String,
    pub schemes: Vec<Scheme>,
    pub x: Vec<f64>,
    /// `columns[s][i]` belongs to scheme `s` at `x[i]`.
    pub columns: Vec<Vec<f64>>,
}

impl PlotTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let names: Vec<&str> = self.schemes.iter().map(|s| s.as_str()).collect();
        writeln!(w, "{},{}", self.x_label, names.join(","))?;
        for (i, x) in self.x.iter().enumerate() {
            let vals: Vec<String> = self.columns.iter().map(|c| c[i].to_string()).collect();
            writeln!(w, "{x},{}", vals.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub spec: ExperimentSpec,
    pub rows: Vec<ExperimentRow>,
    pub plots: Vec<PlotTable>,
    /// Realization-0 logs per `(grid index, scheme)`, kept for inspection.
    pub sample_logs: Vec<(usize, Scheme, EpisodeLog)>,
    pub failed_realizations: usize,
}

/// Sum of `v` in ascending order, so the result does not depend on the
/// order in which realizations finished.
fn sorted_sum(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.iter().sum()
}

fn mean(v: &[f64]) -> f64 {
    sorted_sum(v) / v.len() as f64
}

/// Sample standard deviation; 0 for a single value.
fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    let sq: Vec<f64> = v.iter().map(|x| (x - m) * (x - m)).collect();
    (sorted_sum(&sq) / (v.len() - 1) as f64).sqrt()
}

/// Aggregates per-realization summaries into one CSV row.
pub fn aggregate(grid_value: f64, scheme: Scheme, summaries: &[EpisodeSummary]) -> ExperimentRow {
    let thr: Vec<f64> = summaries.iter().map(|s| s.mean_sum_throughput_bps).collect();
    let queue: Vec<f64> = summaries.iter().map(|s| s.avg_total_queue_bits).collect();
    let harvest: Vec<f64> = summaries.iter().map(|s| s.avg_harvested_w).collect();
    ExperimentRow {
        grid_value,
        scheme,
        mean_sum_throughput_bps: mean(&thr),
        std_sum_throughput_bps: std_dev(&thr),
        avg_total_queue_bits: mean(&queue),
        avg_harvested_w: mean(&harvest),
    }
}

pub fn write_experiment_csv<W: Write>(rows: &[ExperimentRow], mut w: W) -> Result<()> {
    writeln!(w, "{EXPERIMENT_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.grid_value,
            r.scheme,
            r.mean_sum_throughput_bps,
            r.std_sum_throughput_bps,
            r.avg_total_queue_bits,
            r.avg_harvested_w
        )?;
    }
    Ok(())
}

/// Runs every realization of one `(config, scheme)` pair. Failed
/// realizations are logged and dropped; more than 1 % failing is an error.
fn run_realizations(
    cfg: &SystemConfig,
    scheme: Scheme,
    spec: &ExperimentSpec,
    beta: f64,
    record_sca: bool,
) -> Result<(Vec<EpisodeLog>, usize)> {
    let results: Vec<Result<EpisodeLog>> = (0..spec.realizations as u64)
        .into_par_iter()
        .map(|r| {
            let topo = realization_topology(cfg, spec.seed, r);
            let rng = RngStream::new(spec.seed, r);
            let opts = EpisodeOptions {
                frames: spec.frames,
                beta,
                record_sca,
            };
            run_episode(cfg, scheme, &topo, &rng, opts)
        })
        .collect();
    let mut logs = Vec::with_capacity(results.len());
    let mut failed = 0;
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(log) => logs.push(log),
            Err(e) => {
                log::warn!("{scheme}: realization {r} failed: {e}");
                failed += 1;
            }
        }
    }
    if failed * 100 > spec.realizations {
        return Err(Error::Experiment(format!(
            "{failed} of {} realizations failed for {scheme}",
            spec.realizations
        )));
    }
    if logs.is_empty() {
        return Err(Error::Experiment(format!("no realization succeeded for {scheme}")));
    }
    Ok((logs, failed))
}

/// Runs `spec` on top of `cfg`.
pub fn run_experiment(spec: &ExperimentSpec, cfg: &SystemConfig) -> Result<ExperimentOutput> {
    spec.validate()?;
    let cfg = cfg.clone().validate()?;
    let mut out = ExperimentOutput {
        spec: spec.clone(),
        rows: Vec::new(),
        plots: Vec::new(),
        sample_logs: Vec::new(),
        failed_realizations: 0,
    };
    match spec.kind {
        ExperimentKind::BetaSweep | ExperimentKind::PmaxSweep => {
            let mut thr = vec![Vec::new(); spec.schemes.len()];
            let mut queue = vec![Vec::new(); spec.schemes.len()];
            let mut harvest = vec![Vec::new(); spec.schemes.len()];
            for (gi, &g) in spec.grid.iter().enumerate() {
                let (c, beta) = if spec.kind == ExperimentKind::BetaSweep {
                    (cfg.clone(), g)
                } else {
                    let c = SystemConfig {
                        p_max: dbm_to_watt(g),
                        ..cfg.clone()
                    }
                    .validate()?;
                    (c, spec.beta)
                };
                for (si, &scheme) in spec.schemes.iter().enumerate() {
                    let (logs, failed) = run_realizations(&c, scheme, spec, beta, false)?;
                    out.failed_realizations += failed;
                    let summaries: Vec<EpisodeSummary> = logs.iter().map(|l| l.summary()).collect();
                    let row = aggregate(g, scheme, &summaries);
                    thr[si].push(row.mean_sum_throughput_bps);
                    queue[si].push(row.avg_total_queue_bits);
                    harvest[si].push(row.avg_harvested_w);
                    out.rows.push(row);
                    out.sample_logs.push((gi, scheme, logs.into_iter().next().expect("non-empty")));
                }
            }
            let (prefix, x_label) = if spec.kind == ExperimentKind::BetaSweep {
                ("beta_sweep", "beta")
            } else {
                ("pmax_sweep", "p_max_dbm")
            };
            for (suffix, cols) in [("throughput", thr), ("queue", queue), ("harvested", harvest)] {
                out.plots.push(PlotTable {
                    name: format!("{prefix}_{suffix}"),
                    x_label: x_label.into(),
                    schemes: spec.schemes.clone(),
                    x: spec.grid.clone(),
                    columns: cols,
                });
            }
        }
        ExperimentKind::ThroughputVsTime => {
            let mut running = Vec::new();
            let mut queue = Vec::new();
            for &scheme in &spec.schemes {
                let (logs, failed) = run_realizations(&cfg, scheme, spec, spec.beta, false)?;
                out.failed_realizations += failed;
                let summaries: Vec<EpisodeSummary> = logs.iter().map(|l| l.summary()).collect();
                out.rows.push(aggregate(spec.frames as f64, scheme, &summaries));
                let per_t = |f: &dyn Fn(&EpisodeLog) -> Vec<f64>| -> Vec<f64> {
                    let series: Vec<Vec<f64>> = logs.iter().map(f).collect();
                    (0..spec.frames)
                        .map(|t| mean(&series.iter().map(|s| s[t]).collect::<Vec<_>>()))
                        .collect()
                };
                running.push(per_t(&|l: &EpisodeLog| {
                    let mut acc = 0.0;
                    l.sum_throughput()
                        .iter()
                        .enumerate()
                        .map(|(t, x)| {
                            acc += x;
                            acc / (t + 1) as f64
                        })
                        .collect()
                }));
                queue.push(per_t(&|l: &EpisodeLog| l.total_queue_after()));
                out.sample_logs.push((0, scheme, logs.into_iter().next().expect("non-empty")));
            }
            let x: Vec<f64> = (1..=spec.frames).map(|t| t as f64).collect();
            out.plots.push(PlotTable {
                name: "throughput_vs_time".into(),
                x_label: "frame".into(),
                schemes: spec.schemes.clone(),
                x: x.clone(),
                columns: running,
            });
            out.plots.push(PlotTable {
                name: "queue_vs_time".into(),
                x_label: "frame".into(),
                schemes: spec.schemes.clone(),
                x,
                columns: queue,
            });
        }
        ExperimentKind::Convergence => {
            let len = cfg.max_sca_iter + 1;
            let mut single = Vec::new();
            let mut avg = Vec::new();
            for &scheme in &spec.schemes {
                let (logs, failed) = run_realizations(&cfg, scheme, spec, spec.beta, true)?;
                out.failed_realizations += failed;
                let summaries: Vec<EpisodeSummary> = logs.iter().map(|l| l.summary()).collect();
                out.rows.push(aggregate(spec.frames as f64, scheme, &summaries));
                // the last frame has non-trivial queues in every realization
                let last = spec.frames - 1;
                let traces: Vec<Vec<f64>> =
                    logs.iter().map(|l| frame_trace(l, last)).collect::<Result<_>>()?;
                let pad = |t: &[f64]| -> Vec<f64> {
                    (0..len).map(|i| t[i.min(t.len() - 1)]).collect()
                };
                single.push(pad(&traces[0]));
                let padded: Vec<Vec<f64>> = traces.iter().map(|t| pad(t)).collect();
                avg.push(
                    (0..len)
                        .map(|i| mean(&padded.iter().map(|t| t[i]).collect::<Vec<_>>()))
                        .collect(),
                );
                out.sample_logs.push((0, scheme, logs.into_iter().next().expect("non-empty")));
            }
            let x: Vec<f64> = (0..len).map(|i| i as f64).collect();
            out.plots.push(PlotTable {
                name: "convergence_single".into(),
                x_label: "kappa".into(),
                schemes: spec.schemes.clone(),
                x: x.clone(),
                columns: single,
            });
            out.plots.push(PlotTable {
                name: "convergence_avg".into(),
                x_label: "kappa".into(),
                schemes: spec.schemes.clone(),
                x,
                columns: avg,
            });
        }
    }
    Ok(out)
}

/// SCA objective trace of frame `t` of an episode.
fn frame_trace(log: &EpisodeLog, t: usize) -> Result<Vec<f64>> {
    let trace: Vec<f64> = log
        .sca_trace
        .iter()
        .filter(|r| r.frame == t)
        .map(|r| r.objective)
        .collect();
    if trace.is_empty() {
        return Err(Error::Experiment(format!("no SCA trace recorded for frame {t}")));
    }
    Ok(trace)
}

/// Run manifest: resolved config, unit scales, tolerances, seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub crate_version: String,
    pub experiment: ExperimentSpec,
    pub config: SystemConfig,
    pub unit_scales: crate::model::UnitScales,
    pub realization_streams: Vec<u64>,
    pub failed_realizations: usize,
    pub files: Vec<String>,
    pub timestamp_unix: u64,
}

/// Writes the experiment CSV, plot CSVs, SCA traces (convergence),
/// realization-0 frame logs and `manifest.json` into `dir`. Returns the
/// written file names.
pub fn write_outputs(out: &ExperimentOutput, cfg: &SystemConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut create = |name: String| -> Result<(fs::File, PathBuf)> {
        let path = dir.join(&name);
        let f = fs::File::create(&path)?;
        files.push(path.clone());
        Ok((f, path))
    };
    let kind = out.spec.kind.as_str().replace('-', "_");
    let (f, _) = create(format!("{kind}.csv"))?;
    write_experiment_csv(&out.rows, std::io::BufWriter::new(f))?;
    for p in &out.plots {
        let (f, _) = create(format!("{}.csv", p.name))?;
        p.write_csv(std::io::BufWriter::new(f))?;
    }
    for (gi, scheme, log) in &out.sample_logs {
        if out.spec.kind == ExperimentKind::Convergence {
            let (f, _) = create(format!("sca_trace_{}.csv", scheme.as_str().replace('-', "_")))?;
            write_sca_trace_csv(&log.sca_trace, std::io::BufWriter::new(f))?;
        }
        let name = match out.spec.kind {
            ExperimentKind::BetaSweep | ExperimentKind::PmaxSweep => {
                format!("frames_{}_g{gi}_r0.csv", scheme.as_str().replace('-', "_"))
            }
            _ => format!("frames_{}_r0.csv", scheme.as_str().replace('-', "_")),
        };
        let (f, _) = create(name)?;
        log.write_csv(std::io::BufWriter::new(f))?;
    }
    let manifest_path = dir.join("manifest.json");
    let names: Vec<String> = files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let manifest = Manifest {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: out.spec.clone(),
        config: cfg.clone(),
        unit_scales: cfg.unit_scales(),
        realization_streams: (0..out.spec.realizations as u64).collect(),
        failed_realizations: out.failed_realizations,
        files: names,
        timestamp_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Experiment(format!("manifest: {e}")))?;
    fs::write(&manifest_path, text)?;
    files.push(manifest_path);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SystemConfig {
        SystemConfig::paper_defaults().validate().unwrap()
    }

    fn small(kind: ExperimentKind) -> ExperimentSpec {
        ExperimentSpec {
            frames: 3,
            realizations: 2,
            ..ExperimentSpec::new(kind, &cfg())
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.as_str().parse::<ExperimentKind>().unwrap(), k);
        }
        assert!(matches!("fig9".parse::<ExperimentKind>(), Err(Error::UnknownExperiment(_))));
    }

    #[test]
    fn spec_validation() {
        let mut s = small(ExperimentKind::BetaSweep);
        s.grid = vec![1e-4, 1e-5];
        assert!(s.validate().is_err());
        s.grid.clear();
        assert!(s.validate().is_err());
        let mut s = small(ExperimentKind::Convergence);
        s.realizations = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn aggregate_statistics() {
        let mk = |x: f64| EpisodeSummary {
            mean_sum_throughput_bps: x,
            avg_total_queue_bits: 2.0 * x,
            avg_harvested_w: 3.0 * x,
        };
        let one = aggregate(1.0, Scheme::Proposed, &[mk(5.0)]);
        assert_eq!(one.mean_sum_throughput_bps, 5.0);
        assert_eq!(one.std_sum_throughput_bps, 0.0);
        let a = aggregate(1.0, Scheme::Proposed, &[mk(1.0), mk(2.0), mk(6.0)]);
        let b = aggregate(1.0, Scheme::Proposed, &[mk(6.0), mk(1.0), mk(2.0)]);
        assert_eq!(a, b);
        assert_eq!(a.mean_sum_throughput_bps, 3.0);
        assert!((a.std_sum_throughput_bps - 7f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_realization_matches_its_episode() {
        let c = cfg();
        let spec = ExperimentSpec {
            realizations: 1,
            schemes: vec![Scheme::EqualTime],
            ..small(ExperimentKind::ThroughputVsTime)
        };
        let out = run_experiment(&spec, &c).unwrap();
        let log = &out.sample_logs[0].2;
        let s = log.summary();
        assert_eq!(out.rows[0].mean_sum_throughput_bps, s.mean_sum_throughput_bps);
        assert_eq!(out.rows[0].avg_total_queue_bits, s.avg_total_queue_bits);
    }

    #[test]
    fn sweep_outputs_have_one_row_per_grid_point_and_scheme() {
        let c = cfg();
        let spec = ExperimentSpec {
            frames: 2,
            realizations: 1,
            ..small(ExperimentKind::BetaSweep)
        };
        let out = run_experiment(&spec, &c).unwrap();
        assert_eq!(out.rows.len(), 4 * 4);
        let dir = tempfile::tempdir().unwrap();
        let files = write_outputs(&out, &c, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("beta_sweep.csv")).unwrap();
        assert_eq!(text.lines().next(), Some(EXPERIMENT_HEADER));
        assert_eq!(text.lines().count(), 17);
        let plot = std::fs::read_to_string(dir.path().join("beta_sweep_queue.csv")).unwrap();
        assert_eq!(
            plot.lines().next(),
            Some("beta,proposed,equal-power,max-power,equal-time")
        );
        assert!(files.iter().any(|f| f.ends_with("manifest.json")));
    }

    #[test]
    fn convergence_writes_one_trace_per_scheme() {
        let c = cfg();
        let out = run_experiment(&small(ExperimentKind::Convergence), &c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&out, &c, dir.path()).unwrap();
        for s in Scheme::ALL {
            let name = format!("sca_trace_{}.csv", s.as_str().replace('-', "_"));
            let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
            assert!(text.starts_with("frame,kappa,objective,max_constraint_violation,solver_status"));
        }
        let single = std::fs::read_to_string(dir.path().join("convergence_single.csv")).unwrap();
        assert_eq!(single.lines().count(), c.max_sca_iter + 2);
    }
}
