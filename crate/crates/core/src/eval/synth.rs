//! Synthetic sequences with exact ground truth: a textured target moving on
//! a cluttered background.

use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::GROUND_TRUTH_FILE;
use super::{BBox, Sequence};
use crate::features::Frame;
use crate::{Error, Result};

pub const WIDTH: usize = 320;
pub const HEIGHT: usize = 240;
pub const TARGET_SIZE: f64 = 32.0;
/// Pixels per frame for [`SynthKind::Translate`].
pub const SPEED: f64 = 2.0;
/// Relative growth per frame for [`SynthKind::Scale`].
pub const GROWTH: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Static,
    Translate,
    Scale,
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(SynthKind::Static),
            "translate" => Ok(SynthKind::Translate),
            "scale" => Ok(SynthKind::Scale),
            other => Err(Error::invalid("kind", format!("unknown kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for SynthKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SynthKind::Static => "static",
            SynthKind::Translate => "translate",
            SynthKind::Scale => "scale",
        })
    }
}

struct Wave {
    fx: f32,
    fy: f32,
    phase: f32,
    amp: f32,
}

struct Blob {
    x: f32,
    y: f32,
    r: f32,
    value: f32,
}

struct Scene {
    background: Vec<f32>,
    target: Vec<Wave>,
}

impl Scene {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves: Vec<Wave> = (0..10)
            .map(|_| Wave {
                fx: rng.gen_range(-0.25..0.25),
                fy: rng.gen_range(-0.25..0.25),
                phase: rng.gen_range(0.0..std::f32::consts::TAU),
                amp: rng.gen_range(0.02..0.06),
            })
            .collect();
        let blobs: Vec<Blob> = (0..60)
            .map(|_| Blob {
                x: rng.gen_range(0.0..WIDTH as f32),
                y: rng.gen_range(0.0..HEIGHT as f32),
                r: rng.gen_range(3.0..14.0),
                value: rng.gen_range(-0.25..0.25),
            })
            .collect();
        let mut background = vec![0.0f32; WIDTH * HEIGHT];
        for y in 0..HEIGHT {
            for x in 0..WIDTH {
                let (xf, yf) = (x as f32, y as f32);
                let mut v = 0.5;
                for w in &waves {
                    v += w.amp * (w.fx * xf + w.fy * yf + w.phase).sin();
                }
                for b in &blobs {
                    let d2 = (xf - b.x).powi(2) + (yf - b.y).powi(2);
                    if d2 < b.r * b.r {
                        v += b.value;
                    }
                }
                background[y * WIDTH + x] = v.clamp(0.0, 1.0);
            }
        }
        // target texture on unit coordinates, 2 to 5 cycles across
        let target = (0..6)
            .map(|_| Wave {
                fx: rng.gen_range(2.0..5.0) * std::f32::consts::TAU * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
                fy: rng.gen_range(2.0..5.0) * std::f32::consts::TAU,
                phase: rng.gen_range(0.0..std::f32::consts::TAU),
                amp: rng.gen_range(0.08..0.15),
            })
            .collect();
        Scene { background, target }
    }

    fn target_value(&self, u: f32, v: f32) -> f32 {
        let mut s = 0.5;
        for w in &self.target {
            s += w.amp * (w.fx * u + w.fy * v + w.phase).sin();
        }
        // bright frame around a dark core
        let edge = u.min(1.0 - u).min(v.min(1.0 - v));
        if edge < 0.08 {
            s = 0.95;
        }
        s.clamp(0.0, 1.0)
    }

    /// Renders the target over `[x0, x0+w) × [y0, y0+h)` (pixel-edge
    /// coordinates) with fractional coverage at the border.
    fn render(&self, x0: f64, y0: f64, w: f64, h: f64) -> Frame {
        let cover = |p: usize, lo: f64, len: f64| {
            let a = (p as f64).max(lo);
            let b = ((p + 1) as f64).min(lo + len);
            (b - a).clamp(0.0, 1.0) as f32
        };
        Frame::from_fn(WIDTH, HEIGHT, |x, y| {
            let bg = self.background[y * WIDTH + x];
            let c = cover(x, x0, w) * cover(y, y0, h);
            if c == 0.0 {
                return bg;
            }
            let u = (((x as f64 + 0.5) - x0) / w).clamp(0.0, 1.0) as f32;
            let v = (((y as f64 + 0.5) - y0) / h).clamp(0.0, 1.0) as f32;
            bg * (1.0 - c) + self.target_value(u, v) * c
        })
        .expect("fixed frame size")
    }
}

/// Bounces `x` back and forth inside `[lo, hi]`.
fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    if span <= 0.0 {
        return lo;
    }
    let t = (x - lo).rem_euclid(2.0 * span);
    lo + if t > span { 2.0 * span - t } else { t }
}

/// Target rectangle `(x0, y0, w, h)` in pixel-edge coordinates at frame `t`.
fn trajectory(kind: SynthKind, t: usize) -> (f64, f64, f64, f64) {
    let s = TARGET_SIZE;
    let t = t as f64;
    match kind {
        SynthKind::Static => ((WIDTH as f64 - s) / 2.0, (HEIGHT as f64 - s) / 2.0, s, s),
        SynthKind::Translate => {
            let (vx, vy) = (SPEED * 30f64.to_radians().cos(), SPEED * 30f64.to_radians().sin());
            (
                reflect(60.0 + vx * t, 8.0, WIDTH as f64 - s - 8.0),
                reflect(50.0 + vy * t, 8.0, HEIGHT as f64 - s - 8.0),
                s,
                s,
            )
        }
        SynthKind::Scale => {
            let max_log = (0.75 * HEIGHT as f64 / s).ln();
            let size = s * reflect(t * (1.0 + GROWTH).ln(), 0.0, max_log).exp();
            (
                WIDTH as f64 / 2.0 - size / 2.0,
                HEIGHT as f64 / 2.0 - size / 2.0,
                size,
                size,
            )
        }
    }
}

/// Generates `frames` frames of the given kind; the scene is a function of
/// `seed` only.
pub fn generate(kind: SynthKind, frames: usize, seed: u64) -> Result<Sequence> {
    if frames == 0 {
        return Err(Error::invalid("frames", "must be positive"));
    }
    let scene = Scene::new(seed);
    let mut images = Vec::with_capacity(frames);
    let mut truth = Vec::with_capacity(frames);
    for t in 0..frames {
        let (x0, y0, w, h) = trajectory(kind, t);
        images.push(scene.render(x0, y0, w, h));
        truth.push(BBox::new(x0 + 1.0, y0 + 1.0, w, h));
    }
    Sequence::from_frames(format!("synth_{kind}"), images, truth)
}

/// Writes a sequence in OTB layout: `img/0001.png …` and the ground truth.
pub fn write_otb(seq: &Sequence, dir: &Path) -> Result<()> {
    let img = dir.join("img");
    std::fs::create_dir_all(&img)?;
    let mut gt = String::new();
    for (i, b) in seq.ground_truth.iter().enumerate() {
        seq.frame(i)?.save_png(&img.join(format!("{:04}.png", i + 1)))?;
        gt.push_str(&format!("{:.4},{:.4},{:.4},{:.4}\n", b.x, b.y, b.w, b.h));
    }
    std::fs::write(dir.join(GROUND_TRUTH_FILE), gt)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::load_otb;

    #[test]
    fn motion_rates() {
        let tr = generate(SynthKind::Translate, 10, 1).unwrap();
        let (a, b) = (tr.ground_truth[3].center(), tr.ground_truth[4].center());
        assert!(((b.0 - a.0).hypot(b.1 - a.1) - SPEED).abs() < 1e-9);
        let sc = generate(SynthKind::Scale, 10, 1).unwrap();
        assert!((sc.ground_truth[5].w / sc.ground_truth[4].w - 1.0 - GROWTH).abs() < 1e-9);
        assert_eq!(sc.ground_truth[5].center(), sc.ground_truth[0].center());
        let st = generate(SynthKind::Static, 3, 1).unwrap();
        assert_eq!(st.frame(0).unwrap(), st.frame(2).unwrap());
    }

    #[test]
    fn deterministic_and_seeded() {
        let a = generate(SynthKind::Translate, 2, 7).unwrap();
        let b = generate(SynthKind::Translate, 2, 7).unwrap();
        let c = generate(SynthKind::Translate, 2, 8).unwrap();
        assert_eq!(a.frame(1).unwrap(), b.frame(1).unwrap());
        assert_ne!(a.frame(1).unwrap(), c.frame(1).unwrap());
    }

    #[test]
    fn stays_inside_frame() {
        for kind in [SynthKind::Translate, SynthKind::Scale] {
            let seq = generate(kind, 400, 3).unwrap();
            for b in &seq.ground_truth {
                assert!(b.x >= 1.0 && b.y >= 1.0);
                assert!(b.x - 1.0 + b.w <= WIDTH as f64 && b.y - 1.0 + b.h <= HEIGHT as f64);
            }
        }
    }

    #[test]
    fn otb_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let seq = generate(SynthKind::Translate, 3, 2).unwrap();
        write_otb(&seq, dir.path()).unwrap();
        let back = load_otb(dir.path()).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in back.ground_truth.iter().zip(&seq.ground_truth) {
            assert!((a.x - b.x).abs() < 1e-4 && (a.w - b.w).abs() < 1e-4);
        }
        let f = back.frame(1).unwrap();
        let g = seq.frame(1).unwrap();
        let err = f
            .as_slice()
            .iter()
            .zip(g.as_slice())
            .fold(0.0f32, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 0.5 / 255.0 + 1e-6);
    }
}
