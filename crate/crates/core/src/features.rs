//! Sample extraction: patch cropping with edge replication, grayscale and
//! HOG channels binned to an odd feature grid, optional Hann window.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::spectral::Grid2;
use crate::{Error, RealPlane, Result, Scalar};

const HOG_ORIENTATIONS: usize = 18;
const HOG_TRUNCATION: f32 = 0.2;
const HOG_EPS: f32 = 1e-4;
/// Channels emitted by the HOG extractor: 18 contrast-sensitive, 9
/// contrast-insensitive and 4 texture-energy.
pub const HOG_CHANNELS: usize = 31;

/// Grayscale image with intensities in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Degenerate(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::ShapeMismatch {
                expected: format!("{} pixels", width * height),
                got: format!("{} pixels", data.len()),
            });
        }
        Ok(Frame {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// 8-bit RGB, converted with luma weights 0.299/0.587/0.114.
    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        let data = rgb
            .chunks_exact(3)
            .map(|p| (0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32) / 255.0)
            .collect();
        Self::new(width, height, data)
    }

    pub fn from_luma8(width: usize, height: usize, luma: &[u8]) -> Result<Self> {
        Self::new(width, height, luma.iter().map(|&v| v as f32 / 255.0).collect())
    }

    /// Decodes a PNG or JPEG file.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        match img {
            image::DynamicImage::ImageLuma8(buf) => Self::from_luma8(w, h, buf.as_raw()),
            other => Self::from_rgb8(w, h, other.to_rgb8().as_raw()),
        }
    }

    /// Writes an 8-bit grayscale PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        image::save_buffer(
            path,
            &bytes,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::L8,
        )
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Pixel with out-of-range coordinates clamped to the border.
    #[inline]
    pub fn clamped(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers sit on
    /// integers), replicating the border.
    #[inline]
    pub fn bilinear(&self, x: f64, y: f64) -> f32 {
        let x0 = x.floor();
        let y0 = y.floor();
        let (fx, fy) = ((x - x0) as f32, (y - y0) as f32);
        let (x0, y0) = (x0 as isize, y0 as isize);
        let top = self.clamped(x0, y0) * (1.0 - fx) + self.clamped(x0 + 1, y0) * fx;
        let bottom = self.clamped(x0, y0 + 1) * (1.0 - fx) + self.clamped(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Crops `window · scale` pixels around `center` (x, y in pixel
/// coordinates) and resamples them to `window` = (W, H). Output pixel `u`
/// samples `center + (u − (W−1)/2)·scale`, so the center of an odd window
/// lands exactly on `center` for training and detection alike.
pub fn crop_patch(image: &Frame, center: (f64, f64), window: (usize, usize), scale: f64) -> Result<Frame> {
    let (w, h) = window;
    if w == 0 || h == 0 || !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Degenerate(format!(
            "window {w}x{h} at scale {scale}"
        )));
    }
    if !(center.0.is_finite() && center.1.is_finite()) {
        return Err(Error::Degenerate("non-finite patch center".into()));
    }
    let half_w = (w as f64 - 1.0) / 2.0;
    let half_h = (h as f64 - 1.0) / 2.0;
    Frame::from_fn(w, h, |u, v| {
        image.bilinear(
            center.0 + (u as f64 - half_w) * scale,
            center.1 + (v as f64 - half_h) * scale,
        )
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// Cell-averaged zero-mean intensity only.
    Gray,
    /// Intensity plus the 31 HOG channels.
    #[default]
    Hog,
}

impl FeatureMode {
    pub fn channels(self) -> usize {
        match self {
            FeatureMode::Gray => 1,
            FeatureMode::Hog => 1 + HOG_CHANNELS,
        }
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gray" => Ok(FeatureMode::Gray),
            "hog" | "gray+hog" => Ok(FeatureMode::Hog),
            other => Err(Error::invalid("features", format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureParams {
    pub mode: FeatureMode,
    pub cell_size: usize,
    pub hann_window: bool,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            mode: FeatureMode::Hog,
            cell_size: 4,
            hann_window: true,
        }
    }
}

/// `d` real feature planes on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T> {
    grid: Grid2,
    planes: Vec<RealPlane<T>>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(planes: Vec<RealPlane<T>>) -> Result<Self> {
        let grid = planes
            .first()
            .map(|p| p.grid())
            .ok_or_else(|| Error::invalid("channels", "a feature map needs at least one plane"))?;
        for p in &planes {
            p.same_grid(grid)?;
        }
        Ok(FeatureMap { grid, planes })
    }

    pub fn grid(&self) -> Grid2 {
        self.grid
    }

    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    pub fn planes(&self) -> &[RealPlane<T>] {
        &self.planes
    }

    /// Moves the patch center bin to `(0, 0)` in every plane.
    pub fn center_to_origin(&self) -> Self {
        FeatureMap {
            grid: self.grid,
            planes: self.planes.iter().map(|p| p.center_to_origin()).collect(),
        }
    }
}

/// Feature grid for a patch: `⌊size/cell⌋` per axis, trimmed by one cell
/// when even.
pub fn feature_grid(width: usize, height: usize, cell_size: usize) -> Result<Grid2> {
    if cell_size == 0 {
        return Err(Error::invalid("cell_size", "must be positive"));
    }
    let odd = |n: usize| if n % 2 == 0 { n.saturating_sub(1) } else { n };
    let (rows, cols) = (odd(height / cell_size), odd(width / cell_size));
    if rows == 0 || cols == 0 {
        return Err(Error::Degenerate(format!(
            "patch {width}x{height} is smaller than one {cell_size}px cell"
        )));
    }
    Grid2::new(rows, cols)
}

/// Periodic-free Hann taper `0.5(1 − cos(2πi/(n−1)))`, peak 1 at the center.
pub fn hann<T: Scalar>(n: usize) -> Vec<T> {
    if n == 1 {
        return vec![T::one()];
    }
    (0..n)
        .map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64;
            T::of(0.5 * (1.0 - t.cos()))
        })
        .collect()
}

pub fn hann2<T: Scalar>(grid: Grid2) -> RealPlane<T> {
    let (wr, wc) = (hann::<T>(grid.rows), hann::<T>(grid.cols));
    RealPlane::from_fn(grid, |r, c| wr[r] * wc[c])
}

/// Extracts the feature planes of a patch (center bin at the grid center).
pub fn extract_features<T: Scalar>(patch: &Frame, params: &FeatureParams) -> Result<FeatureMap<T>> {
    let cell = params.cell_size;
    let grid = feature_grid(patch.width(), patch.height(), cell)?;
    // trimmed cells are split evenly around the center
    let x0 = (patch.width() - grid.cols * cell) / 2;
    let y0 = (patch.height() - grid.rows * cell) / 2;

    let mut planes = vec![gray_plane::<T>(patch, grid, cell, x0, y0)];
    if params.mode == FeatureMode::Hog {
        planes.extend(hog_planes::<T>(patch, grid, cell, x0, y0));
    }
    if params.hann_window {
        let window = hann2::<T>(grid);
        for p in &mut planes {
            for (v, w) in p.as_mut_slice().iter_mut().zip(window.as_slice()) {
                *v = *v * *w;
            }
        }
    }
    FeatureMap::new(planes)
}

fn gray_plane<T: Scalar>(patch: &Frame, grid: Grid2, cell: usize, x0: usize, y0: usize) -> RealPlane<T> {
    let inv = 1.0 / (cell * cell) as f64;
    let mut plane = RealPlane::from_fn(grid, |r, c| {
        let mut acc = 0.0f64;
        for y in 0..cell {
            for x in 0..cell {
                acc += patch.get(x0 + c * cell + x, y0 + r * cell + y) as f64;
            }
        }
        T::of(acc * inv)
    });
    let mean = plane.sum() / T::of(grid.len() as f64);
    plane.as_mut_slice().iter_mut().for_each(|v| *v = *v - mean);
    plane
}

/// Gradient of a pixel: continuous orientation position in units of bins
/// (18 bins over the full circle, bin `k` centered on `20k°`) and magnitude.
#[inline]
pub fn pixel_gradient(patch: &Frame, x: usize, y: usize) -> (f32, f32) {
    let (xi, yi) = (x as isize, y as isize);
    let dx = patch.clamped(xi + 1, yi) - patch.clamped(xi - 1, yi);
    let dy = patch.clamped(xi, yi + 1) - patch.clamped(xi, yi - 1);
    let mag = (dx * dx + dy * dy).sqrt();
    let step = 2.0 * std::f32::consts::PI / HOG_ORIENTATIONS as f32;
    let angle = dy.atan2(dx).rem_euclid(2.0 * std::f32::consts::PI);
    (angle / step, mag)
}

/// Linear interpolation weights of a coordinate between its two
/// neighbouring integer positions.
#[inline]
fn split(pos: f32) -> (isize, f32) {
    let lo = pos.floor();
    (lo as isize, pos - lo)
}

fn hog_planes<T: Scalar>(patch: &Frame, grid: Grid2, cell: usize, x0: usize, y0: usize) -> Vec<RealPlane<T>> {
    let (rows, cols) = (grid.rows, grid.cols);
    let mut hist = vec![[0.0f32; HOG_ORIENTATIONS]; rows * cols];
    // every pixel votes into its two nearest orientations and four nearest
    // cells, bilinearly
    let inv = 1.0 / cell as f32;
    for y in 0..patch.height() {
        let (r0, fy) = split((y as f32 - y0 as f32 + 0.5) * inv - 0.5);
        for x in 0..patch.width() {
            let (c0, fx) = split((x as f32 - x0 as f32 + 0.5) * inv - 0.5);
            let (pos, mag) = pixel_gradient(patch, x, y);
            if mag == 0.0 {
                continue;
            }
            let (o0, fo) = split(pos);
            let o0 = o0.rem_euclid(HOG_ORIENTATIONS as isize) as usize;
            let o1 = (o0 + 1) % HOG_ORIENTATIONS;
            for (r, wr) in [(r0, 1.0 - fy), (r0 + 1, fy)] {
                if r < 0 || r >= rows as isize || wr == 0.0 {
                    continue;
                }
                for (c, wc) in [(c0, 1.0 - fx), (c0 + 1, fx)] {
                    if c < 0 || c >= cols as isize || wc == 0.0 {
                        continue;
                    }
                    let h = &mut hist[r as usize * cols + c as usize];
                    let w = mag * wr * wc;
                    h[o0] += w * (1.0 - fo);
                    h[o1] += w * fo;
                }
            }
        }
    }
    let half = HOG_ORIENTATIONS / 2;
    let energy: Vec<f32> = hist
        .iter()
        .map(|h| (0..half).map(|o| (h[o] + h[o + half]).powi(2)).sum())
        .collect();
    let e = |r: isize, c: isize| {
        let r = r.clamp(0, rows as isize - 1) as usize;
        let c = c.clamp(0, cols as isize - 1) as usize;
        energy[r * cols + c]
    };

    let mut out = vec![vec![T::zero(); rows * cols]; HOG_CHANNELS];
    for r in 0..rows {
        for c in 0..cols {
            let (ri, ci) = (r as isize, c as isize);
            // the four 2x2 blocks containing this cell
            let norms = [(-1, -1), (-1, 0), (0, -1), (0, 0)].map(|(dr, dc)| {
                let s = e(ri + dr, ci + dc)
                    + e(ri + dr + 1, ci + dc)
                    + e(ri + dr, ci + dc + 1)
                    + e(ri + dr + 1, ci + dc + 1);
                1.0 / (s + HOG_EPS).sqrt()
            });
            let h = &hist[r * cols + c];
            let idx = r * cols + c;
            let mut texture = [0.0f32; 4];
            for o in 0..HOG_ORIENTATIONS {
                let mut acc = 0.0;
                for (k, n) in norms.iter().enumerate() {
                    let v = (h[o] * n).min(HOG_TRUNCATION);
                    acc += v;
                    texture[k] += v;
                }
                out[o][idx] = T::of(0.5 * acc as f64);
            }
            for o in 0..half {
                let s = h[o] + h[o + half];
                let acc: f32 = norms.iter().map(|n| (s * n).min(HOG_TRUNCATION)).sum();
                out[HOG_ORIENTATIONS + o][idx] = T::of(0.5 * acc as f64);
            }
            for (k, t) in texture.iter().enumerate() {
                out[HOG_ORIENTATIONS + half + k][idx] = T::of(0.2357 * *t as f64);
            }
        }
    }
    out.into_iter()
        .map(|data| RealPlane::from_vec(grid, data).expect("grid-sized channel"))
        .collect()
}
