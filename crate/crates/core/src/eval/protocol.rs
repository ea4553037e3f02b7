//! OPE / TRE / SRE run construction and execution.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BBox, Sequence};
use crate::config::TrackerConfig;
use crate::features::Frame;
use crate::tracker::FsrdcfTracker;
use crate::{Error, Result, Scalar};

pub const TRE_SEGMENTS: usize = 20;
pub const SRE_SHIFT: f64 = 0.1;
pub const SRE_SCALES: [f64; 4] = [0.8, 0.9, 1.1, 1.2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Ope,
    Tre,
    Sre,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Ope => "ope",
            Protocol::Tre => "tre",
            Protocol::Sre => "sre",
        })
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ope" => Ok(Protocol::Ope),
            "tre" => Ok(Protocol::Tre),
            "sre" => Ok(Protocol::Sre),
            other => Err(Error::invalid("protocol", format!("unknown protocol `{other}`"))),
        }
    }
}

/// SRE initial-box perturbation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Perturbation {
    /// Shift by fractions of the box width and height.
    Shift(f64, f64),
    /// Scale about the fixed center.
    Scale(f64),
}

impl Perturbation {
    pub fn apply(&self, b: &BBox) -> BBox {
        match *self {
            Perturbation::Shift(fx, fy) => b.translated(fx * b.w, fy * b.h),
            Perturbation::Scale(s) => b.scaled(s),
        }
    }
}

/// The twelve SRE initializations: four axis shifts, four diagonal shifts,
/// four scalings.
pub fn sre_perturbations() -> [Perturbation; 12] {
    use Perturbation::{Scale, Shift};
    let s = SRE_SHIFT;
    [
        Shift(-s, 0.0),
        Shift(s, 0.0),
        Shift(0.0, -s),
        Shift(0.0, s),
        Shift(-s, -s),
        Shift(s, -s),
        Shift(-s, s),
        Shift(s, s),
        Scale(SRE_SCALES[0]),
        Scale(SRE_SCALES[1]),
        Scale(SRE_SCALES[2]),
        Scale(SRE_SCALES[3]),
    ]
}

/// Evenly spaced segment starts `⌊i·L/n⌋`.
pub fn tre_starts(len: usize, segments: usize) -> Vec<usize> {
    (0..segments).map(|i| i * len / segments).collect()
}

/// One run to execute: where it starts and how it is initialized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSpec {
    pub protocol: Protocol,
    pub perturbation: usize,
    pub start_frame: usize,
    pub init_box: BBox,
}

/// Runs of a protocol on a sequence, plus the TRE segments skipped because
/// their start frame has no valid ground truth.
pub fn plan_runs(seq: &Sequence, protocol: Protocol) -> Result<(Vec<RunSpec>, Vec<usize>)> {
    let first = *seq
        .ground_truth
        .first()
        .ok_or_else(|| Error::Data(format!("{}: empty sequence", seq.name)))?;
    let spec = |perturbation, start_frame, init_box| RunSpec {
        protocol,
        perturbation,
        start_frame,
        init_box,
    };
    let mut skipped = Vec::new();
    let runs = match protocol {
        Protocol::Ope => vec![spec(0, 0, first)],
        Protocol::Tre => tre_starts(seq.len(), TRE_SEGMENTS)
            .into_iter()
            .enumerate()
            .filter_map(|(i, start)| {
                let b = seq.ground_truth[start];
                if b.is_valid() {
                    Some(spec(i, start, b))
                } else {
                    skipped.push(i);
                    None
                }
            })
            .collect(),
        Protocol::Sre => sre_perturbations()
            .iter()
            .enumerate()
            .map(|(i, p)| spec(i, 0, p.apply(&first)))
            .collect(),
    };
    if runs.iter().any(|r| r.start_frame == 0) && !first.is_valid() {
        return Err(Error::Data(format!("{}: first ground-truth box is invalid", seq.name)));
    }
    Ok((runs, skipped))
}

/// A tracker driven frame by frame by the protocol runner.
pub trait OnlineTracker {
    /// Initializes on the first frame of a run; returns start-up seconds.
    fn start(&mut self, frame: &Frame, frame_index: usize, bbox: BBox) -> Result<f64>;
    /// Processes the frame at absolute index `frame_index`.
    fn update(&mut self, frame: &Frame, frame_index: usize) -> Result<BBox>;
    /// Called instead of `update` when a frame cannot be decoded.
    fn skip(&mut self, frame_index: usize) -> BBox;
}

/// Adapter running [`FsrdcfTracker`] under a protocol.
pub struct FsrdcfOnline<T: Scalar> {
    config: TrackerConfig,
    tracker: Option<FsrdcfTracker<T>>,
    last: Option<BBox>,
}

impl<T: Scalar> FsrdcfOnline<T> {
    pub fn new(config: TrackerConfig) -> Self {
        FsrdcfOnline {
            config,
            tracker: None,
            last: None,
        }
    }
}

impl<T: Scalar> OnlineTracker for FsrdcfOnline<T> {
    fn start(&mut self, frame: &Frame, _frame_index: usize, bbox: BBox) -> Result<f64> {
        let (tracker, startup) = FsrdcfTracker::init(frame, bbox, &self.config)?;
        self.tracker = Some(tracker);
        self.last = Some(bbox);
        Ok(startup)
    }

    fn update(&mut self, frame: &Frame, _frame_index: usize) -> Result<BBox> {
        let tracker = self
            .tracker
            .as_mut()
            .ok_or_else(|| Error::Data("tracker used before start".into()))?;
        let b = tracker.step(frame)?.bbox;
        self.last = Some(b);
        Ok(b)
    }

    fn skip(&mut self, _frame_index: usize) -> BBox {
        match self.tracker.as_mut() {
            Some(t) => t.skip(),
            None => self.last.unwrap_or(BBox::new(0.0, 0.0, 0.0, 0.0)),
        }
    }
}

/// Outcome of one run, persisted as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub sequence: String,
    pub protocol: Protocol,
    pub perturbation: usize,
    pub start_frame: usize,
    pub config_hash: String,
    pub init_box: BBox,
    /// One box per evaluated frame, the first being the initialization frame.
    pub boxes: Vec<BBox>,
    /// Ground truth of the evaluated frames.
    pub ground_truth: Vec<BBox>,
    /// Wall time of every frame after the first.
    pub frame_seconds: Vec<f64>,
    pub startup_seconds: f64,
    /// Absolute indices of frames that could not be decoded.
    pub skipped_frames: Vec<usize>,
}

impl RunRecord {
    /// Frames per second over the tracked frames, start-up excluded.
    pub fn fps(&self) -> f64 {
        let total: f64 = self.frame_seconds.iter().sum();
        if total > 0.0 {
            self.frame_seconds.len() as f64 / total
        } else {
            0.0
        }
    }

    pub fn file_name(&self) -> String {
        format!("{}_{}_{:02}.json", self.sequence, self.protocol, self.perturbation)
    }

    pub fn validate(&self) -> Result<()> {
        if self.boxes.len() != self.ground_truth.len() || self.boxes.is_empty() {
            return Err(Error::Data(format!(
                "run {}: {} boxes for {} frames",
                self.file_name(),
                self.boxes.len(),
                self.ground_truth.len()
            )));
        }
        Ok(())
    }
}

/// Executes one run from its start frame to the end of the sequence.
pub fn execute_run(
    seq: &Sequence,
    run: &RunSpec,
    config_hash: &str,
    tracker: &mut dyn OnlineTracker,
) -> Result<RunRecord> {
    let n = seq.len();
    let first = seq.frame(run.start_frame)?;
    let startup_seconds = tracker.start(&first, run.start_frame, run.init_box)?;
    let mut boxes = vec![run.init_box];
    let mut frame_seconds = Vec::with_capacity(n - run.start_frame);
    let mut skipped_frames = Vec::new();
    for i in run.start_frame + 1..n {
        let started = Instant::now();
        let b = match seq.frame(i) {
            Ok(frame) => tracker.update(&frame, i)?,
            Err(e) => {
                log::warn!("{}: frame {} skipped: {e}", seq.name, i + 1);
                skipped_frames.push(i);
                tracker.skip(i)
            }
        };
        frame_seconds.push(started.elapsed().as_secs_f64());
        boxes.push(b);
    }
    Ok(RunRecord {
        sequence: seq.name.clone(),
        protocol: run.protocol,
        perturbation: run.perturbation,
        start_frame: run.start_frame,
        config_hash: config_hash.to_string(),
        init_box: run.init_box,
        boxes,
        ground_truth: seq.ground_truth[run.start_frame..].to_vec(),
        frame_seconds,
        startup_seconds,
        skipped_frames,
    })
}

/// Runs every run of `protocol` on `seq` in parallel on the current rayon
/// pool, each with a fresh tracker from `factory`. Records come back in run
/// order.
pub fn run_protocol<F>(seq: &Sequence, protocol: Protocol, config_hash: &str, factory: F) -> Result<Vec<RunRecord>>
where
    F: Fn() -> Box<dyn OnlineTracker> + Sync,
{
    let (runs, skipped) = plan_runs(seq, protocol)?;
    for s in skipped {
        log::warn!("{}: TRE segment {s} skipped, start frame has no ground truth", seq.name);
    }
    runs.par_iter()
        .map(|run| {
            let mut tracker = factory();
            execute_run(seq, run, config_hash, tracker.as_mut())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::metrics::success_curve;

    /// Echoes the ground truth of every frame it is shown.
    struct Oracle(Vec<BBox>);

    impl OnlineTracker for Oracle {
        fn start(&mut self, _: &Frame, _: usize, _: BBox) -> Result<f64> {
            Ok(1e-3)
        }
        fn update(&mut self, _: &Frame, i: usize) -> Result<BBox> {
            Ok(self.0[i])
        }
        fn skip(&mut self, i: usize) -> BBox {
            self.0[i]
        }
    }

    fn sequence(n: usize) -> Sequence {
        let frames = vec![Frame::from_fn(4, 4, |_, _| 0.0).unwrap(); n];
        let gt = (0..n).map(|i| BBox::new(10.0 + i as f64, 5.0, 20.0, 10.0)).collect();
        Sequence::from_frames("toy", frames, gt).unwrap()
    }

    #[test]
    fn tre_lengths_on_twenty_frames() {
        let seq = sequence(20);
        let (runs, skipped) = plan_runs(&seq, Protocol::Tre).unwrap();
        assert!(skipped.is_empty());
        let lens: Vec<usize> = runs.iter().map(|r| seq.len() - r.start_frame).collect();
        assert_eq!(lens, (1..=20).rev().collect::<Vec<_>>());
        assert_eq!(tre_starts(100, 20), tre_starts(100, 20));
        assert_eq!(tre_starts(100, 20)[19], 95);
    }

    #[test]
    fn tre_skips_invalid_starts() {
        let mut seq = sequence(40);
        seq.ground_truth[2] = BBox::new(0.0, 0.0, 0.0, 0.0);
        let (runs, skipped) = plan_runs(&seq, Protocol::Tre).unwrap();
        assert_eq!(runs.len(), 19);
        assert_eq!(skipped, vec![1]);
    }

    #[test]
    fn sre_has_twelve_fixed_members() {
        let p = sre_perturbations();
        assert_eq!(p.len(), 12);
        assert_eq!(p, sre_perturbations());
        let b = BBox::new(10.0, 20.0, 40.0, 30.0);
        for s in &p[8..] {
            let q = s.apply(&b);
            assert!((q.center().0 - b.center().0).abs() < 1e-12);
            assert!((q.center().1 - b.center().1).abs() < 1e-12);
        }
        let shifted = p[4].apply(&b);
        assert_eq!((shifted.x, shifted.y), (6.0, 17.0));
    }

    #[test]
    fn oracle_scores() {
        let seq = sequence(30);
        let gt = seq.ground_truth.clone();
        let ope = run_protocol(&seq, Protocol::Ope, "h", || Box::new(Oracle(gt.clone()))).unwrap();
        assert_eq!(ope.len(), 1);
        let c = success_curve(&ope[0].boxes, &ope[0].ground_truth).unwrap();
        assert!(c.auc > 0.99);

        let sre = run_protocol(&seq, Protocol::Sre, "h", || Box::new(Oracle(gt.clone()))).unwrap();
        assert_eq!(sre.len(), 12);
        let ious: Vec<f64> = sre
            .iter()
            .flat_map(|r| crate::eval::metrics::overlaps(&r.boxes, &r.ground_truth).unwrap())
            .collect();
        let sre_auc = crate::eval::metrics::SuccessCurve::from_ious(&ious).auc;
        assert!(sre_auc < c.auc);
        // only the perturbed first frames differ
        for r in &sre {
            assert_eq!(&r.boxes[1..], &r.ground_truth[1..]);
        }
    }

    #[test]
    fn record_lengths_and_fps() {
        let seq = sequence(10);
        let gt = seq.ground_truth.clone();
        let runs = run_protocol(&seq, Protocol::Tre, "h", || Box::new(Oracle(gt.clone()))).unwrap();
        assert_eq!(runs.len(), 20);
        for r in &runs {
            r.validate().unwrap();
            assert_eq!(r.frame_seconds.len(), r.boxes.len() - 1);
        }
        let r = RunRecord {
            frame_seconds: vec![0.5, 0.5],
            startup_seconds: 10.0,
            ..runs[0].clone()
        };
        assert_eq!(r.fps(), 2.0);
    }
}
