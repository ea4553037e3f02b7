//! `fsrdcf` command line: track, eval, synth, bench.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fsrdcf::commands::{self, TrackOptions};
use fsrdcf::config::TrackerConfig;
use fsrdcf::eval::synth::SynthKind;
use fsrdcf::eval::Protocol;
use fsrdcf::features::FeatureMode;

#[derive(Parser, Debug)]
#[command(name = "fsrdcf", version, about = "Spatially regularized correlation filter tracker and OTB benchmark tools")]
struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Track an OTB sequence (or a folder of sequences) and write runs + report.
    Track {
        /// Sequence directory, or a directory of sequence directories.
        #[arg(long)]
        seq: PathBuf,
        /// TOML configuration; defaults are used for missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for config.toml, runs/ and the report.
        #[arg(long)]
        out: PathBuf,
        /// ope, tre or sre.
        #[arg(long, value_parser = parse_protocol, default_value = "ope")]
        protocol: Protocol,
        /// gray or hog (hog includes the gray channel).
        #[arg(long, value_parser = parse_features)]
        features: Option<FeatureMode>,
        /// Number of scales searched per frame (odd).
        #[arg(long)]
        scales: Option<usize>,
        /// Gauss-Seidel sweeps per frame.
        #[arg(long = "gs-sweeps")]
        gs_sweeps: Option<usize>,
        /// Disable the Hann window on features.
        #[arg(long = "no-window")]
        no_window: bool,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Recompute metrics from stored run records.
    Eval {
        /// Directory of run records written by `track`.
        #[arg(long)]
        runs: PathBuf,
        /// Output directory for summary.json and curves/.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic sequence with ground truth in OTB layout.
    Synth {
        /// static, translate or scale.
        #[arg(long, value_parser = parse_kind)]
        kind: SynthKind,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
        /// Scene seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Per-frame training cost on forced grid sizes.
    Bench {
        /// Sequence directory.
        #[arg(long)]
        seq: PathBuf,
        /// Square grid sizes (odd), comma separated.
        #[arg(long = "grid-sizes", value_delimiter = ',', default_value = "25,37,49")]
        grid_sizes: Vec<usize>,
        /// Frames timed per grid size.
        #[arg(long, default_value_t = 10)]
        frames: usize,
        /// TOML configuration for the other settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_protocol(s: &str) -> Result<Protocol, String> {
    s.parse().map_err(|e: fsrdcf::Error| e.to_string())
}

fn parse_features(s: &str) -> Result<FeatureMode, String> {
    s.parse().map_err(|e: fsrdcf::Error| e.to_string())
}

fn parse_kind(s: &str) -> Result<SynthKind, String> {
    s.parse().map_err(|e: fsrdcf::Error| e.to_string())
}

fn run(cli: Cli) -> fsrdcf::Result<()> {
    match cli.command {
        Command::Track {
            seq,
            config,
            out,
            protocol,
            features,
            scales,
            gs_sweeps,
            no_window,
            threads,
        } => {
            let summary = commands::track(&TrackOptions {
                seq,
                config,
                out: out.clone(),
                protocol: Some(protocol),
                features,
                scales,
                gs_sweeps,
                no_window,
                threads,
            })?;
            for s in &summary.sequences {
                println!(
                    "{} [{}] runs {} AUC {:.3} OP {:.3} fps {:.1} startup {:.3}s",
                    s.sequence, s.protocol, s.runs, s.auc, s.op, s.fps, s.startup_seconds
                );
            }
            println!("results written to {}", out.display());
        }
        Command::Eval { runs, out } => {
            let summary = commands::eval(&runs, &out)?;
            for p in &summary.overall {
                println!("[{}] sequences {} AUC {:.3} OP {:.3}", p.protocol, p.sequences, p.auc, p.op);
            }
        }
        Command::Synth { kind, frames, out, seed } => {
            commands::synth(kind, frames, &out, seed)?;
            println!("{kind} sequence with {frames} frames written to {}", out.display());
        }
        Command::Bench {
            seq,
            grid_sizes,
            frames,
            config,
            out,
        } => {
            let base = match config {
                Some(path) => TrackerConfig::load(&path)?,
                None => TrackerConfig::default(),
            };
            let report = commands::bench(&seq, &grid_sizes, frames, &base)?;
            print!("{}", report.to_table());
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
