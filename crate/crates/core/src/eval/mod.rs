//! Benchmark side: OTB sequences, evaluation protocols, metrics, run
//! persistence and synthetic sequences.

pub mod dataset;
pub mod metrics;
pub mod protocol;
pub mod report;
pub mod synth;

use serde::{Deserialize, Serialize};

pub use dataset::{load_otb, Sequence};
pub use metrics::{iou, success_curve, SuccessCurve};
pub use protocol::{OnlineTracker, Protocol, RunRecord};

/// Axis-aligned box in OTB convention: `(x, y)` is the 1-based top-left
/// pixel, `w`/`h` the extent in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    /// Box of size `w × h` centered on a 0-based pixel position.
    pub fn from_center(center: (f64, f64), w: f64, h: f64) -> Self {
        BBox {
            x: center.0 - (w - 1.0) / 2.0 + 1.0,
            y: center.1 - (h - 1.0) / 2.0 + 1.0,
            w,
            h,
        }
    }

    /// Center in 0-based pixel coordinates.
    pub fn center(&self) -> (f64, f64) {
        (self.x - 1.0 + (self.w - 1.0) / 2.0, self.y - 1.0 + (self.h - 1.0) / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    /// Finite with positive area. OTB marks missing annotations with
    /// zero-size or NaN rows.
    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) && self.w > 0.0 && self.h > 0.0
    }

    pub fn intersection(&self, other: &BBox) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        ix.max(0.0) * iy.max(0.0)
    }

    /// Same center, sides multiplied by `s`.
    pub fn scaled(&self, s: f64) -> BBox {
        BBox::from_center(self.center(), self.w * s, self.h * s)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> BBox {
        BBox::new(self.x + dx, self.y + dy, self.w, self.h)
    }
}
