//! Drivers behind the command-line subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::TrackerConfig;
use crate::eval::dataset::load_collection;
use crate::eval::protocol::{run_protocol, FsrdcfOnline, OnlineTracker};
use crate::eval::report::{load_runs, median, save_runs, write_report, Summary};
use crate::eval::synth::{generate, write_otb, SynthKind};
use crate::eval::{load_otb, Protocol, RunRecord};
use crate::features::FeatureMode;
use crate::tracker::FsrdcfTracker;
use crate::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct TrackOptions {
    pub seq: PathBuf,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub protocol: Option<Protocol>,
    pub features: Option<FeatureMode>,
    pub scales: Option<usize>,
    pub gs_sweeps: Option<usize>,
    pub no_window: bool,
    pub threads: Option<usize>,
}

impl TrackOptions {
    /// Config file (or defaults) with the command-line overrides applied.
    pub fn resolve_config(&self) -> Result<TrackerConfig> {
        let mut cfg = match &self.config {
            Some(path) => TrackerConfig::load(path)?,
            None => TrackerConfig::default(),
        };
        if let Some(f) = self.features {
            cfg.features = f;
        }
        if let Some(s) = self.scales {
            cfg.scales = s;
        }
        if let Some(n) = self.gs_sweeps {
            cfg.gs_sweeps = n;
        }
        if self.no_window {
            cfg.hann_window = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn with_threads<R: Send>(threads: Option<usize>, job: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(job()),
        Some(0) => Err(Error::invalid("threads", "must be positive")),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::invalid("threads", e.to_string()))?;
            Ok(pool.install(job))
        }
    }
}

/// Runs the tracker on every sequence under `opts.seq`, stores one JSON
/// record per run in `out/runs/` and the report in `out/`.
pub fn track(opts: &TrackOptions) -> Result<Summary> {
    let cfg = opts.resolve_config()?;
    let protocol = opts.protocol.unwrap_or(Protocol::Ope);
    let sequences = load_collection(&opts.seq)?;
    let hash = cfg.hash();
    let records = with_threads(opts.threads, || -> Result<Vec<RunRecord>> {
        let mut all = Vec::new();
        for seq in &sequences {
            log::info!("{}: {} frames, {protocol}", seq.name, seq.len());
            let runs = run_protocol(seq, protocol, &hash, || {
                Box::new(FsrdcfOnline::<f64>::new(cfg.clone())) as Box<dyn OnlineTracker>
            })?;
            all.extend(runs);
        }
        Ok(all)
    })??;
    std::fs::create_dir_all(&opts.out)?;
    std::fs::write(opts.out.join("config.toml"), cfg.to_toml())?;
    save_runs(&records, &opts.out.join("runs"))?;
    write_report(&records, &opts.out)
}

/// Recomputes the report from stored run records.
pub fn eval(runs: &Path, out: &Path) -> Result<Summary> {
    let records = load_runs(runs)?;
    write_report(&records, out)
}

/// Writes a synthetic sequence in OTB layout.
pub fn synth(kind: SynthKind, frames: usize, out: &Path, seed: u64) -> Result<()> {
    let seq = generate(kind, frames, seed)?;
    write_otb(&seq, out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub grid: usize,
    pub channels: usize,
    /// `M·N·d`.
    pub size: usize,
    pub startup_seconds: f64,
    /// Median per-frame training time (model update plus sweeps).
    pub train_seconds: f64,
    /// Median per-frame time of the whole step.
    pub frame_seconds: f64,
    /// Training time per unit of `M·N·d`, relative to the first grid.
    pub linear_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub sequence: String,
    pub frames: usize,
    pub rows: Vec<BenchRow>,
}

/// Times first-frame training and per-frame training on forced square grids.
pub fn bench(seq_dir: &Path, grid_sizes: &[usize], frames: usize, base: &TrackerConfig) -> Result<BenchReport> {
    let seq = load_otb(seq_dir)?;
    bench_sequence(&seq, grid_sizes, frames, base)
}

pub fn bench_sequence(
    seq: &crate::eval::Sequence,
    grid_sizes: &[usize],
    frames: usize,
    base: &TrackerConfig,
) -> Result<BenchReport> {
    if grid_sizes.is_empty() {
        return Err(Error::invalid("grid_sizes", "at least one size required"));
    }
    if frames == 0 {
        return Err(Error::invalid("frames", "must be positive"));
    }
    let first = seq.frame(0)?;
    let mut rows: Vec<BenchRow> = Vec::new();
    for &n in grid_sizes {
        let cfg = TrackerConfig {
            fixed_grid: Some(n),
            ..base.clone()
        };
        cfg.validate()?;
        let started = Instant::now();
        let (mut tracker, startup) = FsrdcfTracker::<f64>::init(&first, seq.ground_truth[0], &cfg)?;
        log::debug!("grid {n}: init {:.3}s", started.elapsed().as_secs_f64());
        let mut train = Vec::with_capacity(frames);
        let mut total = Vec::with_capacity(frames);
        for i in 0..frames {
            let idx = if seq.len() > 1 { 1 + i % (seq.len() - 1) } else { 0 };
            let out = tracker.step(&seq.frame(idx)?)?;
            train.push(out.train_seconds);
            total.push(out.seconds);
        }
        let channels = tracker.model().filters().channels();
        let size = n * n * channels;
        let train_seconds = median(&mut train);
        let linear_ratio = match rows.first() {
            Some(r0) => (train_seconds / size as f64) / (r0.train_seconds / r0.size as f64),
            None => 1.0,
        };
        rows.push(BenchRow {
            grid: n,
            channels,
            size,
            startup_seconds: startup,
            train_seconds,
            frame_seconds: median(&mut total),
            linear_ratio,
        });
    }
    Ok(BenchReport {
        sequence: seq.name.clone(),
        frames,
        rows,
    })
}

impl BenchReport {
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:>5} {:>4} {:>9} {:>11} {:>11} {:>11} {:>7}\n",
            "grid", "d", "M*N*d", "startup_s", "train_ms", "frame_ms", "ratio"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:>5} {:>4} {:>9} {:>11.4} {:>11.3} {:>11.3} {:>7.3}\n",
                r.grid,
                r.channels,
                r.size,
                r.startup_seconds,
                r.train_seconds * 1e3,
                r.frame_seconds * 1e3,
                r.linear_ratio
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply() {
        let opts = TrackOptions {
            features: Some(FeatureMode::Gray),
            scales: Some(3),
            gs_sweeps: Some(2),
            no_window: true,
            ..TrackOptions::default()
        };
        let cfg = opts.resolve_config().unwrap();
        assert_eq!(cfg.features, FeatureMode::Gray);
        assert_eq!((cfg.scales, cfg.gs_sweeps, cfg.hann_window), (3, 2, false));
        let bad = TrackOptions {
            scales: Some(2),
            ..TrackOptions::default()
        };
        assert!(bad.resolve_config().is_err());
    }

    #[test]
    fn bench_rows_per_grid() {
        let seq = generate(SynthKind::Translate, 4, 1).unwrap();
        let cfg = TrackerConfig {
            features: FeatureMode::Gray,
            ..TrackerConfig::default()
        };
        let report = bench_sequence(&seq, &[9, 15], 2, &cfg).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.rows[1].size, 15 * 15);
        assert_eq!(report.rows[0].linear_ratio, 1.0);
        assert!(report.to_table().lines().count() == 3);
    }

    #[test]
    fn synth_then_track_then_eval() {
        let dir = tempfile::tempdir().unwrap();
        let seq = dir.path().join("seq");
        synth(SynthKind::Translate, 6, &seq, 3).unwrap();
        let out = dir.path().join("out");
        let summary = track(&TrackOptions {
            seq: seq.clone(),
            out: out.clone(),
            features: Some(FeatureMode::Gray),
            threads: Some(1),
            ..TrackOptions::default()
        })
        .unwrap();
        assert_eq!(summary.sequences.len(), 1);
        let again = eval(&out.join("runs"), &dir.path().join("re")).unwrap();
        assert_eq!(again, summary);
    }
}
