//! Run persistence and summary reports (JSON + CSV curves).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{center_error, overlaps, SuccessCurve};
use super::{Protocol, RunRecord};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceSummary {
    pub sequence: String,
    pub protocol: Protocol,
    pub runs: usize,
    pub frames: usize,
    pub auc: f64,
    pub op: f64,
    pub median_center_error: f64,
    pub fps: f64,
    pub startup_seconds: f64,
    pub curve_file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSummary {
    pub protocol: Protocol,
    pub sequences: usize,
    pub auc: f64,
    pub op: f64,
    pub fps: f64,
    pub curve_file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub sequences: Vec<SequenceSummary>,
    pub overall: Vec<ProtocolSummary>,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-sequence/protocol metrics. Curves pool the frames of all runs of a
/// group; the overall curve of a protocol is the mean of its sequence curves.
pub fn summarize(records: &[RunRecord]) -> Result<(Summary, BTreeMap<String, SuccessCurve>)> {
    if records.is_empty() {
        return Err(Error::Data("no run records to report".into()));
    }
    let mut groups: BTreeMap<(Protocol, String), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        r.validate()?;
        groups.entry((r.protocol, r.sequence.clone())).or_default().push(r);
    }
    let mut curves = BTreeMap::new();
    let mut sequences = Vec::new();
    let mut per_protocol: BTreeMap<Protocol, Vec<(SuccessCurve, f64)>> = BTreeMap::new();
    for ((protocol, name), runs) in &groups {
        let mut ious = Vec::new();
        let mut errors = Vec::new();
        let (mut frames, mut seconds, mut startup) = (0usize, 0.0, 0.0);
        for r in runs {
            ious.extend(overlaps(&r.boxes, &r.ground_truth)?);
            errors.extend(
                r.boxes
                    .iter()
                    .zip(&r.ground_truth)
                    .filter(|(_, t)| t.is_valid())
                    .map(|(b, t)| center_error(b, t)),
            );
            frames += r.frame_seconds.len();
            seconds += r.frame_seconds.iter().sum::<f64>();
            startup += r.startup_seconds;
        }
        let curve = SuccessCurve::from_ious(&ious);
        let fps = if seconds > 0.0 { frames as f64 / seconds } else { 0.0 };
        let curve_file = format!("curves/{name}_{protocol}.csv");
        sequences.push(SequenceSummary {
            sequence: name.clone(),
            protocol: *protocol,
            runs: runs.len(),
            frames: ious.len(),
            auc: curve.auc,
            op: curve.op,
            median_center_error: median(&mut errors),
            fps,
            startup_seconds: startup / runs.len() as f64,
            curve_file: curve_file.clone(),
        });
        per_protocol.entry(*protocol).or_default().push((curve.clone(), fps));
        curves.insert(curve_file, curve);
    }
    let overall = per_protocol
        .into_iter()
        .map(|(protocol, items)| {
            let list: Vec<SuccessCurve> = items.iter().map(|(c, _)| c.clone()).collect();
            let mean = SuccessCurve::mean(&list).expect("non-empty group");
            let curve_file = format!("curves/overall_{protocol}.csv");
            let summary = ProtocolSummary {
                protocol,
                sequences: items.len(),
                auc: mean.auc,
                op: mean.op,
                fps: items.iter().map(|(_, f)| f).sum::<f64>() / items.len() as f64,
                curve_file: curve_file.clone(),
            };
            curves.insert(curve_file, mean);
            summary
        })
        .collect();
    Ok((Summary { sequences, overall }, curves))
}

/// Writes `summary.json` and one CSV per curve under `out`.
pub fn write_report(records: &[RunRecord], out: &Path) -> Result<Summary> {
    let (summary, curves) = summarize(records)?;
    std::fs::create_dir_all(out.join("curves"))?;
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    for (file, curve) in &curves {
        std::fs::write(out.join(file), curve.to_csv())?;
    }
    Ok(summary)
}

pub fn save_runs(records: &[RunRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    records
        .iter()
        .map(|r| {
            let path = dir.join(r.file_name());
            std::fs::write(&path, serde_json::to_string_pretty(r)? + "\n")?;
            Ok(path)
        })
        .collect()
}

/// Reads every `*.json` run record in `dir`, in file-name order.
pub fn load_runs(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Data(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "json").unwrap_or(false))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Data(format!("no run records in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)?;
            let record: RunRecord = serde_json::from_str(&text)
                .map_err(|e| Error::Data(format!("{}: {e}", p.display())))?;
            record.validate()?;
            Ok(record)
        })
        .collect()
}
