//! Online tracking loop: first-frame training, scale-pool detection with
//! sub-bin Newton refinement, per-frame model update.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::config::TrackerConfig;
use crate::eval::BBox;
use crate::features::{crop_patch, extract_features, FeatureParams, Frame};
use crate::regularizer::Regularizer;
use crate::solver::{make_target, FilterModel};
use crate::spectral::{Fft2, Grid2, SpectralStack};
use crate::{Complex, ComplexPlane, Error, RealPlane, Result, Scalar};

/// Relative scale factors `a^s`, `s = −(S−1)/2 … (S−1)/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalePool {
    step: f64,
    factors: Vec<f64>,
}

impl ScalePool {
    pub fn new(count: usize, step: f64) -> Result<Self> {
        if count == 0 || count % 2 == 0 {
            return Err(Error::invalid("scales", format!("{count} must be odd")));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::invalid("scale_step", format!("{step} must be positive")));
        }
        let half = (count / 2) as i32;
        let factors = (-half..=half).map(|s| step.powi(s)).collect();
        Ok(ScalePool { step, factors })
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Index of the factor 1.
    pub fn identity(&self) -> usize {
        self.factors.len() / 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackState {
    /// Target center in 0-based pixel coordinates (x, y).
    pub center: (f64, f64),
    /// Target (width, height) in pixels at scale 1.
    pub target_size: (f64, f64),
    pub scale: f64,
    pub frame_index: usize,
}

impl TrackState {
    pub fn bbox(&self) -> BBox {
        BBox::from_center(
            self.center,
            self.target_size.0 * self.scale,
            self.target_size.1 * self.scale,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    /// Refined response maximum.
    pub peak_value: f64,
    /// Integer peak (row, col), signed so that wrapped peaks are negative.
    pub peak_bin: (isize, isize),
    /// Sub-bin (row, col) offset from the integer peak.
    pub offset: (f64, f64),
    pub scale_index: usize,
    /// Largest imaginary magnitude discarded from the chosen response map.
    pub imag_residue: f64,
}

impl Detection {
    /// Total displacement (row, col) in bins.
    pub fn displacement(&self) -> (f64, f64) {
        (
            self.peak_bin.0 as f64 + self.offset.0,
            self.peak_bin.1 as f64 + self.offset.1,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutput {
    pub bbox: BBox,
    pub detection: Detection,
    /// Wall time of the whole step.
    pub seconds: f64,
    /// Wall time of the model update and Gauss-Seidel sweeps alone.
    pub train_seconds: f64,
}

/// Sampling geometry fixed at initialization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geometry {
    pub grid: Grid2,
    pub cell_size: usize,
    /// Image pixels per patch pixel at scale 1.
    pub base_scale: f64,
    /// Resampled patch (width, height) in pixels: grid × cell size.
    pub patch_size: (usize, usize),
    /// Target (rows, cols) in feature cells.
    pub target_cells: (f64, f64),
}

impl Geometry {
    pub fn new(config: &TrackerConfig, target: (f64, f64)) -> Result<Self> {
        let (w, h) = target;
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(Error::Degenerate(format!("target size {w}x{h}")));
        }
        let cell = config.cell_size as f64;
        let pad = config.search_area_scale.sqrt();
        let (win_w, win_h) = (w * pad, h * pad);
        let odd = |n: f64| {
            let n = (n.round() as usize).max(1);
            if n % 2 == 0 {
                n - 1
            } else {
                n
            }
        };
        let (base_scale, rows, cols) = match config.fixed_grid {
            Some(n) => ((win_w * win_h).sqrt() / (n as f64 * cell), n, n),
            None => {
                let extent = (win_w * win_h).sqrt() / cell;
                let base = if extent > config.max_grid as f64 {
                    extent / config.max_grid as f64
                } else if extent < config.min_grid as f64 {
                    extent / config.min_grid as f64
                } else {
                    1.0
                };
                let mut rows = odd(win_h / (cell * base));
                let mut cols = odd(win_w / (cell * base));
                while ((rows * cols) as f64).sqrt() > config.max_grid as f64 {
                    if rows >= cols {
                        rows -= 2;
                    } else {
                        cols -= 2;
                    }
                }
                (base, rows, cols)
            }
        };
        let grid = Grid2::new(rows, cols)?;
        Ok(Geometry {
            grid,
            cell_size: config.cell_size,
            base_scale,
            patch_size: (cols * config.cell_size, rows * config.cell_size),
            target_cells: (h / (cell * base_scale), w / (cell * base_scale)),
        })
    }

    /// Image pixels covered by one feature bin at the given scale.
    pub fn bin_pixels(&self, scale: f64) -> f64 {
        self.cell_size as f64 * self.base_scale * scale
    }
}

/// `Σ_l x̂ˡ ⊙ f̂ₚˡ`.
pub fn response_spectrum<T: Scalar>(
    x_hat: &SpectralStack<T>,
    filters: &SpectralStack<T>,
) -> Result<ComplexPlane<T>> {
    if x_hat.channels() != filters.channels() {
        return Err(Error::ChannelMismatch {
            expected: filters.channels(),
            got: x_hat.channels(),
        });
    }
    let grid = filters.grid();
    x_hat.planes()[0].same_grid(grid)?;
    let mut acc = vec![Complex::new(T::zero(), T::zero()); grid.len()];
    for (x, f) in x_hat.planes().iter().zip(filters.planes()) {
        for ((a, xv), fv) in acc.iter_mut().zip(x.as_slice()).zip(f.as_slice()) {
            *a = *a + *xv * *fv;
        }
    }
    ComplexPlane::from_vec(grid, acc)
}

/// Spatial response with its discarded imaginary residue: the circular
/// correlation score of the sample against the filter.
pub fn response_map<T: Scalar>(
    fft: &Fft2<T>,
    x_hat: &SpectralStack<T>,
    filters: &SpectralStack<T>,
) -> Result<(RealPlane<T>, f64)> {
    let spatial = fft.ifft2(&response_spectrum(x_hat, filters)?)?;
    Ok((spatial.re(), spatial.max_imag().f64()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Refinement {
    /// Offset (row, col) from the integer peak, each within ±1 bin.
    pub offset: (f64, f64),
    pub value: f64,
    pub iterations: usize,
}

struct Interpolant {
    coeffs: Vec<Complex<f64>>,
    row_freq: Vec<f64>,
    col_freq: Vec<f64>,
    grid: Grid2,
}

#[derive(Clone, Copy)]
struct Taylor {
    value: f64,
    grad: [f64; 2],
    hess: [f64; 3],
}

impl Interpolant {
    fn new<T: Scalar>(spectrum: &ComplexPlane<T>) -> Self {
        let grid = spectrum.grid();
        let scale = 1.0 / grid.len() as f64;
        let freq = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let k = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
                    2.0 * PI * k / n as f64
                })
                .collect()
        };
        Interpolant {
            coeffs: spectrum
                .as_slice()
                .iter()
                .map(|z| Complex::new(z.re.f64() * scale, z.im.f64() * scale))
                .collect(),
            row_freq: freq(grid.rows),
            col_freq: freq(grid.cols),
            grid,
        }
    }

    /// Value, gradient and Hessian `[uu, uv, vv]` at row `u`, col `v`.
    fn eval(&self, u: f64, v: f64) -> Taylor {
        let eu: Vec<Complex<f64>> = self.row_freq.iter().map(|a| Complex::from_polar(1.0, a * u)).collect();
        let ev: Vec<Complex<f64>> = self.col_freq.iter().map(|b| Complex::from_polar(1.0, b * v)).collect();
        let (mut val, mut gu, mut gv, mut huu, mut huv, mut hvv) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for r in 0..self.grid.rows {
            let a = self.row_freq[r];
            for c in 0..self.grid.cols {
                let b = self.col_freq[c];
                let z = self.coeffs[r * self.grid.cols + c] * eu[r] * ev[c];
                val += z.re;
                gu -= z.im * a;
                gv -= z.im * b;
                huu -= z.re * a * a;
                huv -= z.re * a * b;
                hvv -= z.re * b * b;
            }
        }
        Taylor {
            value: val,
            grad: [gu, gv],
            hess: [huu, huv, hvv],
        }
    }
}

/// Newton ascent on the trigonometric interpolant of the response, starting
/// at the integer peak `(row, col)`. Falls back to a zero offset when the
/// Hessian is not negative definite at the start or the ascent loses value.
pub fn subgrid_refine<T: Scalar>(
    response_hat: &ComplexPlane<T>,
    peak: (usize, usize),
    iterations: usize,
) -> Refinement {
    let interp = Interpolant::new(response_hat);
    let (p0, q0) = (peak.0 as f64, peak.1 as f64);
    let start = interp.eval(p0, q0);
    let fallback = Refinement {
        offset: (0.0, 0.0),
        value: start.value,
        iterations: 0,
    };
    let (mut du, mut dv) = (0.0f64, 0.0f64);
    let mut t = start;
    let mut done = 0;
    for it in 0..iterations {
        let [huu, huv, hvv] = t.hess;
        let det = huu * hvv - huv * huv;
        if !(huu < 0.0 && det > 0.0) {
            if it == 0 {
                return fallback;
            }
            break;
        }
        let [gu, gv] = t.grad;
        let su = -(hvv * gu - huv * gv) / det;
        let sv = -(huu * gv - huv * gu) / det;
        du = (du + su).clamp(-1.0, 1.0);
        dv = (dv + sv).clamp(-1.0, 1.0);
        t = interp.eval(p0 + du, q0 + dv);
        done = it + 1;
        if su.abs().max(sv.abs()) < 1e-12 {
            break;
        }
    }
    if !(t.value >= start.value) || !du.is_finite() || !dv.is_finite() {
        return fallback;
    }
    Refinement {
        offset: (du, dv),
        value: t.value,
        iterations: done,
    }
}

/// One tracked sequence: the filter model plus the current state.
pub struct FsrdcfTracker<T: Scalar> {
    config: TrackerConfig,
    features: FeatureParams,
    geometry: Geometry,
    fft: Fft2<T>,
    pool: ScalePool,
    model: FilterModel<T>,
    state: TrackState,
    scale_bounds: (f64, f64),
}

impl<T: Scalar> FsrdcfTracker<T> {
    /// Trains the first model on `frame` around `bbox` (1-based OTB box).
    /// Returns the tracker and the start-up time in seconds.
    pub fn init(frame: &Frame, bbox: BBox, config: &TrackerConfig) -> Result<(Self, f64)> {
        let started = Instant::now();
        config.validate()?;
        if !bbox.is_valid() {
            return Err(Error::Degenerate(format!("initial box {bbox:?}")));
        }
        let center = bbox.center();
        let inside = |v: f64, n: usize| (0.0..=(n as f64 - 1.0)).contains(&v);
        if !inside(center.0, frame.width()) || !inside(center.1, frame.height()) {
            return Err(Error::Degenerate(format!(
                "initial box center ({:.1}, {:.1}) outside the {}x{} frame",
                center.0,
                center.1,
                frame.width(),
                frame.height()
            )));
        }
        let geometry = Geometry::new(config, (bbox.w, bbox.h))?;
        let grid = geometry.grid;
        let fft = Fft2::new(grid);
        let regularizer = Arc::new(Regularizer::new(&config.regularizer(), grid, geometry.target_cells)?);
        let target = make_target::<T>(grid, geometry.target_cells, config.output_sigma_factor)?;
        let features = config.feature_params();
        let pool = ScalePool::new(config.scales, config.scale_step)?;

        let x_hat = sample(frame, center, 1.0, &geometry, &features, &fft)?;
        let model = FilterModel::init_exact(&x_hat, regularizer, target.y_hat_perm, config.solver())?;

        let min_side = bbox.w.min(bbox.h);
        let scale_bounds = (
            (4.0 / min_side).min(1.0),
            (frame.width() as f64 / bbox.w).min(frame.height() as f64 / bbox.h).max(1.0),
        );
        let tracker = FsrdcfTracker {
            config: config.clone(),
            features,
            geometry,
            fft,
            pool,
            model,
            state: TrackState {
                center,
                target_size: (bbox.w, bbox.h),
                scale: 1.0,
                frame_index: 0,
            },
            scale_bounds,
        };
        Ok((tracker, started.elapsed().as_secs_f64()))
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn model(&self) -> &FilterModel<T> {
        &self.model
    }

    pub fn state(&self) -> &TrackState {
        &self.state
    }

    pub fn scale_pool(&self) -> &ScalePool {
        &self.pool
    }

    pub fn fft(&self) -> &Fft2<T> {
        &self.fft
    }

    pub fn bbox(&self) -> BBox {
        self.state.bbox()
    }

    /// Feature spectra of the patch at `center` and relative `scale`.
    pub fn sample(&self, frame: &Frame, center: (f64, f64), scale: f64) -> Result<SpectralStack<T>> {
        sample(frame, center, scale, &self.geometry, &self.features, &self.fft)
    }

    /// Response of the current filters to a sample.
    pub fn response_map(&self, x_hat: &SpectralStack<T>) -> Result<RealPlane<T>> {
        Ok(response_map(&self.fft, x_hat, self.model.filters())?.0)
    }

    /// Scale-pool detection without touching the model.
    pub fn detect(&self, frame: &Frame) -> Result<Detection> {
        let factors = self.pool.factors();
        let candidates = (0..factors.len())
            .into_par_iter()
            .map(|i| {
                let x_hat = self.sample(frame, self.state.center, self.state.scale * factors[i])?;
                let spectrum = response_spectrum(&x_hat, self.model.filters())?;
                let spatial = self.fft.ifft2(&spectrum)?;
                let (peak, _) = spatial.re().argmax();
                let peak = self.geometry.grid.coords(peak);
                let refined = subgrid_refine(&spectrum, peak, self.config.newton_iterations);
                let bin = self.geometry.grid.signed(peak.0, peak.1);
                Ok(Detection {
                    peak_value: refined.value,
                    peak_bin: bin,
                    offset: refined.offset,
                    scale_index: i,
                    imag_residue: spatial.max_imag().f64(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        // visit from the identity factor outwards so ties keep the scale
        let mid = self.pool.identity();
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by_key(|&i| (i as isize - mid as isize).abs());
        let mut best = candidates[order[0]];
        for &i in &order[1..] {
            if candidates[i].peak_value > best.peak_value {
                best = candidates[i];
            }
        }
        if !best.peak_value.is_finite() {
            return Err(Error::Numerical("non-finite response peak".into()));
        }
        Ok(best)
    }

    /// Detects the target in `frame`, moves the state, then updates the model
    /// and runs the Gauss-Seidel sweeps.
    pub fn step(&mut self, frame: &Frame) -> Result<StepOutput> {
        let started = Instant::now();
        let detection = self.detect(frame)?;
        let factor = self.pool.factors()[detection.scale_index];
        let bin = self.geometry.bin_pixels(self.state.scale * factor);
        let (dr, dc) = detection.displacement();
        let (cx, cy) = self.state.center;
        let clamp = |v: f64, n: usize| v.clamp(0.0, n as f64 - 1.0);
        self.state.center = (clamp(cx + dc * bin, frame.width()), clamp(cy + dr * bin, frame.height()));
        self.state.scale = (self.state.scale * factor).clamp(self.scale_bounds.0, self.scale_bounds.1);
        self.state.frame_index += 1;

        let x_hat = self.sample(frame, self.state.center, self.state.scale)?;
        let training = Instant::now();
        self.model.update_model(&x_hat)?;
        self.model.gauss_seidel()?;
        let train_seconds = training.elapsed().as_secs_f64();
        Ok(StepOutput {
            bbox: self.state.bbox(),
            detection,
            seconds: started.elapsed().as_secs_f64(),
            train_seconds,
        })
    }

    /// Records a frame that could not be processed: the state is kept.
    pub fn skip(&mut self) -> BBox {
        self.state.frame_index += 1;
        self.state.bbox()
    }
}

fn sample<T: Scalar>(
    frame: &Frame,
    center: (f64, f64),
    scale: f64,
    geometry: &Geometry,
    features: &FeatureParams,
    fft: &Fft2<T>,
) -> Result<SpectralStack<T>> {
    let patch = crop_patch(frame, center, geometry.patch_size, geometry.base_scale * scale)?;
    let map = extract_features::<T>(&patch, features)?;
    if map.grid() != geometry.grid {
        return Err(Error::ShapeMismatch {
            expected: geometry.grid.to_string(),
            got: map.grid().to_string(),
        });
    }
    SpectralStack::from_real(fft, map.center_to_origin().planes())
}
