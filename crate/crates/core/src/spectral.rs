//! Two-dimensional DFT conventions and block-circulant (BCCB) operator algebra.
//!
//! Planes are stored row-major. Two transform pairs are provided:
//!
//! * [`dft2`] / [`idft2`]: unitary, `1/√(MN)` in both directions. Parseval
//!   holds exactly and a BCCB matrix generated by kernel `k` factors as
//!   `F̈ᴴ · diag(√(MN)·dft2(k)) · F̈`.
//! * [`fft2`] / [`ifft2`]: unnormalized forward sum, `1/(MN)` inverse. Sample
//!   spectra use this pair so that the convolution theorem carries no grid
//!   factor (`fft2(a ⊛ b) = fft2(a) ⊙ fft2(b)`).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{Complex, ComplexPlane, Error, RealPlane, Result, Scalar};

/// Spatial extent `M × N` (rows × cols) of a plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid2 {
    pub rows: usize,
    pub cols: usize,
}

impl Grid2 {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("grid", format!("{rows}x{cols} is empty")));
        }
        Ok(Grid2 { rows, cols })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_odd(&self) -> bool {
        self.rows % 2 == 1 && self.cols % 2 == 1
    }

    pub fn require_odd(&self) -> Result<()> {
        if self.is_odd() {
            Ok(())
        } else {
            Err(Error::EvenGrid {
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.cols, index % self.cols)
    }

    /// Linear index of the signed coordinate `(row, col)` taken modulo the grid.
    #[inline]
    pub fn wrap(&self, row: isize, col: isize) -> usize {
        let r = row.rem_euclid(self.rows as isize) as usize;
        let c = col.rem_euclid(self.cols as isize) as usize;
        self.index(r, c)
    }

    /// Signed representative of a bin: indices past the midpoint map to
    /// negative offsets.
    #[inline]
    pub fn signed(&self, row: usize, col: usize) -> (isize, isize) {
        (signed_index(row, self.rows), signed_index(col, self.cols))
    }

    /// Bin holding the negated coordinate `(-row mod M, -col mod N)`.
    #[inline]
    pub fn reversed(&self, index: usize) -> usize {
        let (r, c) = self.coords(index);
        self.index((self.rows - r) % self.rows, (self.cols - c) % self.cols)
    }

    /// Center bin `(⌊M/2⌋, ⌊N/2⌋)`.
    pub fn center(&self) -> (usize, usize) {
        (self.rows / 2, self.cols / 2)
    }
}

impl fmt::Display for Grid2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

#[inline]
pub(crate) fn signed_index(i: usize, n: usize) -> isize {
    if i <= n / 2 {
        i as isize
    } else {
        i as isize - n as isize
    }
}

/// Row-major `M × N` array with its grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane<E> {
    grid: Grid2,
    data: Vec<E>,
}

impl<E: Copy> Plane<E> {
    pub fn from_vec(grid: Grid2, data: Vec<E>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values for grid {grid}", grid.len()),
                got: format!("{} values", data.len()),
            });
        }
        Ok(Plane { grid, data })
    }

    pub fn filled(grid: Grid2, value: E) -> Self {
        Plane {
            grid,
            data: vec![value; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid2, mut f: impl FnMut(usize, usize) -> E) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for r in 0..grid.rows {
            for c in 0..grid.cols {
                data.push(f(r, c));
            }
        }
        Plane { grid, data }
    }

    #[inline]
    pub fn grid(&self) -> Grid2 {
        self.grid
    }

    #[inline]
    pub fn as_slice(&self) -> &[E] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<E> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> E {
        self.data[self.grid.index(row, col)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: E) {
        let i = self.grid.index(row, col);
        self.data[i] = value;
    }

    pub fn map<F: Copy>(&self, f: impl FnMut(E) -> F) -> Plane<F> {
        Plane {
            grid: self.grid,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    pub fn zip_map<F: Copy, G: Copy>(
        &self,
        other: &Plane<F>,
        mut f: impl FnMut(E, F) -> G,
    ) -> Result<Plane<G>> {
        self.same_grid(other.grid)?;
        Ok(Plane {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn same_grid(&self, other: Grid2) -> Result<()> {
        if self.grid == other {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: self.grid.to_string(),
                got: other.to_string(),
            })
        }
    }

    /// Circular shift: `out(r + dr, c + dc) = self(r, c)`.
    pub fn circshift(&self, dr: isize, dc: isize) -> Self {
        let g = self.grid;
        let mut data = self.data.clone();
        for r in 0..g.rows {
            for c in 0..g.cols {
                data[g.wrap(r as isize + dr, c as isize + dc)] = self.data[g.index(r, c)];
            }
        }
        Plane { grid: g, data }
    }

    /// Moves the center bin `(⌊M/2⌋, ⌊N/2⌋)` to `(0, 0)`.
    pub fn center_to_origin(&self) -> Self {
        let (cr, cc) = self.grid.center();
        self.circshift(-(cr as isize), -(cc as isize))
    }

    /// Inverse of [`Plane::center_to_origin`].
    pub fn origin_to_center(&self) -> Self {
        let (cr, cc) = self.grid.center();
        self.circshift(cr as isize, cc as isize)
    }
}

impl<E: Copy + num_traits::Zero> Plane<E> {
    pub fn zeros(grid: Grid2) -> Self {
        Self::filled(grid, E::zero())
    }
}

impl<T: Scalar> Plane<T> {
    /// Unit impulse at `(row, col)`.
    pub fn impulse(grid: Grid2, row: usize, col: usize) -> Self {
        let mut p = Self::zeros(grid);
        p.set(row, col, T::one());
        p
    }

    pub fn to_complex(&self) -> ComplexPlane<T> {
        self.map(|v| Complex::new(v, T::zero()))
    }

    pub fn norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Index and value of the largest element (first occurrence wins).
    pub fn argmax(&self) -> (usize, T) {
        let mut best = (0, self.data[0]);
        for (i, &v) in self.data.iter().enumerate().skip(1) {
            if v > best.1 {
                best = (i, v);
            }
        }
        best
    }
}

impl<T: Scalar> Plane<Complex<T>> {
    pub fn re(&self) -> RealPlane<T> {
        self.map(|z| z.re)
    }

    pub fn im(&self) -> RealPlane<T> {
        self.map(|z| z.im)
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|z| z * s)
    }

    pub fn norm(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, z| m.max(z.norm()))
    }

    pub fn max_imag(&self) -> T {
        self.data.iter().fold(T::zero(), |m, z| m.max(z.im.abs()))
    }

    /// Largest element-wise distance between two planes on the same grid.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (a, b)| m.max((a - b).norm()))
    }

    /// Largest deviation from Hermitian symmetry `v(-k) = conj(v(k))`.
    pub fn hermitian_defect(&self) -> T {
        let g = self.grid;
        (0..g.len()).fold(T::zero(), |m, i| {
            m.max((self.data[i] - self.data[g.reversed(i)].conj()).norm())
        })
    }
}

/// Planes accepted by the forward transforms.
pub trait SpectralInput<T: Scalar> {
    fn to_complex_plane(&self) -> ComplexPlane<T>;
}

impl<T: Scalar> SpectralInput<T> for Plane<T> {
    fn to_complex_plane(&self) -> ComplexPlane<T> {
        self.to_complex()
    }
}

impl<T: Scalar> SpectralInput<T> for Plane<Complex<T>> {
    fn to_complex_plane(&self) -> ComplexPlane<T> {
        self.clone()
    }
}

/// Planned 2D FFT for one grid. Row transforms are contiguous; column
/// transforms gather into a scratch buffer.
#[derive(Clone)]
pub struct Fft2<T: Scalar> {
    grid: Grid2,
    row_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
}

impl<T: Scalar> fmt::Debug for Fft2<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2").field("grid", &self.grid).finish()
    }
}

impl<T: Scalar> Fft2<T> {
    pub fn new(grid: Grid2) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            grid,
            row_fwd: planner.plan_fft_forward(grid.cols),
            row_inv: planner.plan_fft_inverse(grid.cols),
            col_fwd: planner.plan_fft_forward(grid.rows),
            col_inv: planner.plan_fft_inverse(grid.rows),
        }
    }

    pub fn grid(&self) -> Grid2 {
        self.grid
    }

    fn run(&self, data: &mut [Complex<T>], inverse: bool) {
        let g = self.grid;
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        row.process(data);
        let mut column = vec![Complex::new(T::zero(), T::zero()); g.rows];
        for c in 0..g.cols {
            for r in 0..g.rows {
                column[r] = data[r * g.cols + c];
            }
            col.process(&mut column);
            for r in 0..g.rows {
                data[r * g.cols + c] = column[r];
            }
        }
    }

    fn transform(&self, p: &ComplexPlane<T>, inverse: bool, scale: T) -> Result<ComplexPlane<T>> {
        p.same_grid(self.grid)?;
        let mut out = p.clone();
        self.run(out.as_mut_slice(), inverse);
        if scale != T::one() {
            out.as_mut_slice().iter_mut().for_each(|z| *z = *z * scale);
        }
        Ok(out)
    }

    fn unitary_scale(&self) -> T {
        T::one() / T::of(self.grid.len() as f64).sqrt()
    }

    pub fn dft2(&self, p: &ComplexPlane<T>) -> Result<ComplexPlane<T>> {
        self.transform(p, false, self.unitary_scale())
    }

    pub fn idft2(&self, p: &ComplexPlane<T>) -> Result<ComplexPlane<T>> {
        self.transform(p, true, self.unitary_scale())
    }

    pub fn fft2(&self, p: &ComplexPlane<T>) -> Result<ComplexPlane<T>> {
        self.transform(p, false, T::one())
    }

    pub fn ifft2(&self, p: &ComplexPlane<T>) -> Result<ComplexPlane<T>> {
        self.transform(p, true, T::one() / T::of(self.grid.len() as f64))
    }

    /// Unnormalized forward transform of a real plane.
    pub fn fft2_real(&self, p: &RealPlane<T>) -> Result<ComplexPlane<T>> {
        self.fft2(&p.to_complex())
    }
}

/// Unitary forward 2D DFT.
pub fn dft2<T: Scalar>(p: &impl SpectralInput<T>) -> ComplexPlane<T> {
    let p = p.to_complex_plane();
    Fft2::new(p.grid()).dft2(&p).expect("plan built for this grid")
}

/// Unitary inverse 2D DFT.
pub fn idft2<T: Scalar>(p: &ComplexPlane<T>) -> ComplexPlane<T> {
    Fft2::new(p.grid()).idft2(p).expect("plan built for this grid")
}

/// Unnormalized forward 2D DFT (plain sum).
pub fn fft2<T: Scalar>(p: &impl SpectralInput<T>) -> ComplexPlane<T> {
    let p = p.to_complex_plane();
    Fft2::new(p.grid()).fft2(&p).expect("plan built for this grid")
}

/// Inverse of [`fft2`], carrying the `1/(MN)` factor.
pub fn ifft2<T: Scalar>(p: &ComplexPlane<T>) -> ComplexPlane<T> {
    Fft2::new(p.grid()).ifft2(p).expect("plan built for this grid")
}

/// Index reversal `out(k, l) = in(-k mod M, -l mod N)`, the permutation
/// induced by applying the DFT matrix twice.
pub fn reverse_perm<E: Copy>(p: &Plane<E>) -> Plane<E> {
    let g = p.grid();
    let src = p.as_slice();
    let data = (0..g.len()).map(|i| src[g.reversed(i)]).collect();
    Plane { grid: g, data }
}

/// Product of the BCCB matrix generated by `kernel` (`G[i][j] = kernel(i − j)`)
/// with `v`, i.e. the circular convolution `kernel ⊛ v`, computed through the
/// FFT diagonalization.
pub fn circulant_apply<T: Scalar>(
    kernel: &ComplexPlane<T>,
    v: &ComplexPlane<T>,
) -> Result<ComplexPlane<T>> {
    kernel.same_grid(v.grid())?;
    let fft = Fft2::new(v.grid());
    let k_hat = fft.fft2(kernel)?;
    let v_hat = fft.fft2(v)?;
    fft.ifft2(&k_hat.zip_map(&v_hat, |a, b| a * b)?)
}

/// One generator entry of a sparse BCCB operator. Offsets are stored wrapped
/// into `0..M` and `0..N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StencilEntry<T> {
    pub row: usize,
    pub col: usize,
    pub value: T,
}

/// Block-circulant-with-circulant-blocks operator stored by the nonzero
/// entries of its generating kernel: `G[i][j] = kernel(i − j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseBccb<T> {
    grid: Grid2,
    entries: Vec<StencilEntry<T>>,
}

impl<T: Scalar> SparseBccb<T> {
    /// Keeps exactly the kernel entries with `|value| > drop_below`.
    pub fn from_kernel(kernel: &RealPlane<T>, drop_below: T) -> Self {
        let g = kernel.grid();
        let entries = kernel
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > drop_below)
            .map(|(i, &value)| {
                let (row, col) = g.coords(i);
                StencilEntry { row, col, value }
            })
            .collect();
        SparseBccb { grid: g, entries }
    }

    pub fn identity(grid: Grid2, scale: T) -> Self {
        SparseBccb {
            grid,
            entries: vec![StencilEntry {
                row: 0,
                col: 0,
                value: scale,
            }],
        }
    }

    pub fn grid(&self) -> Grid2 {
        self.grid
    }

    pub fn entries(&self) -> &[StencilEntry<T>] {
        &self.entries
    }

    /// Number of stencil entries.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Generator value at offset `(0, 0)`, i.e. the matrix diagonal.
    pub fn diagonal(&self) -> T {
        self.entries
            .iter()
            .filter(|e| e.row == 0 && e.col == 0)
            .map(|e| e.value)
            .sum()
    }

    /// Dense generating kernel.
    pub fn kernel(&self) -> RealPlane<T> {
        let mut k = RealPlane::zeros(self.grid);
        for e in &self.entries {
            let i = self.grid.index(e.row, e.col);
            k.as_mut_slice()[i] = k.as_slice()[i] + e.value;
        }
        k
    }

    /// Eigenvalues of the operator in the unitary DFT basis, i.e.
    /// `√(MN)·dft2(kernel) = fft2(kernel)`.
    pub fn eigenvalues(&self) -> ComplexPlane<T> {
        fft2(&self.kernel())
    }

    /// Sparse matrix-vector product.
    pub fn apply(&self, v: &ComplexPlane<T>) -> Result<ComplexPlane<T>> {
        v.same_grid(self.grid)?;
        let g = self.grid;
        let src = v.as_slice();
        let mut out = ComplexPlane::zeros(g);
        let dst = out.as_mut_slice();
        for e in &self.entries {
            for r in 0..g.rows {
                let sr = (r + g.rows - e.row) % g.rows;
                for c in 0..g.cols {
                    let sc = (c + g.cols - e.col) % g.cols;
                    dst[r * g.cols + c] = dst[r * g.cols + c] + src[sr * g.cols + sc] * e.value;
                }
            }
        }
        Ok(out)
    }

    /// `RᵀR`, the BCCB operator generated by the kernel autocorrelation
    /// `g(δ) = Σₐ k(a)·k(a + δ)`.
    pub fn gram(&self) -> Self {
        let g = self.grid;
        let mut acc: BTreeMap<(usize, usize), T> = BTreeMap::new();
        for a in &self.entries {
            for b in &self.entries {
                let key = (
                    (b.row + g.rows - a.row) % g.rows,
                    (b.col + g.cols - a.col) % g.cols,
                );
                let slot = acc.entry(key).or_insert_with(T::zero);
                *slot = *slot + a.value * b.value;
            }
        }
        SparseBccb {
            grid: g,
            entries: acc
                .into_iter()
                .map(|((row, col), value)| StencilEntry { row, col, value })
                .collect(),
        }
    }
}

/// Sparse BCCB operator from the kernel entries above `drop_below`.
pub fn bccb_from_kernel<T: Scalar>(kernel: &RealPlane<T>, drop_below: T) -> SparseBccb<T> {
    SparseBccb::from_kernel(kernel, drop_below)
}

/// `RᵀR` of a sparse BCCB operator.
pub fn gram<T: Scalar>(op: &SparseBccb<T>) -> SparseBccb<T> {
    op.gram()
}

/// `d` complex planes sharing one grid: the per-channel spectra of a sample
/// or of a filter.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralStack<T> {
    grid: Grid2,
    planes: Vec<Plane<Complex<T>>>,
}

impl<T: Scalar> SpectralStack<T> {
    pub fn new(planes: Vec<ComplexPlane<T>>) -> Result<Self> {
        let grid = planes
            .first()
            .map(|p| p.grid())
            .ok_or_else(|| Error::invalid("channels", "a spectral stack needs at least one plane"))?;
        for p in &planes {
            p.same_grid(grid)?;
        }
        Ok(SpectralStack { grid, planes })
    }

    pub fn zeros(grid: Grid2, channels: usize) -> Self {
        SpectralStack {
            grid,
            planes: vec![ComplexPlane::zeros(grid); channels],
        }
    }

    pub fn grid(&self) -> Grid2 {
        self.grid
    }

    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    pub fn planes(&self) -> &[ComplexPlane<T>] {
        &self.planes
    }

    pub fn planes_mut(&mut self) -> &mut [ComplexPlane<T>] {
        &mut self.planes
    }

    pub fn plane(&self, channel: usize) -> &ComplexPlane<T> {
        &self.planes[channel]
    }

    pub fn into_planes(self) -> Vec<ComplexPlane<T>> {
        self.planes
    }

    /// Unnormalized spectra ([`fft2`]) of real planes.
    pub fn from_real(fft: &Fft2<T>, planes: &[RealPlane<T>]) -> Result<Self> {
        let spectra = planes
            .iter()
            .map(|p| fft.fft2_real(p))
            .collect::<Result<Vec<_>>>()?;
        Self::new(spectra)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.planes
            .iter()
            .zip(&other.planes)
            .fold(T::zero(), |m, (a, b)| m.max(a.max_abs_diff(b)))
    }

    pub fn is_finite(&self) -> bool {
        self.planes
            .iter()
            .all(|p| p.as_slice().iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_real(grid: Grid2, seed: u64) -> RealPlane<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RealPlane::from_fn(grid, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn random_complex(grid: Grid2, seed: u64) -> ComplexPlane<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexPlane::from_fn(grid, |_, _| {
            Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    // Brute-force O((MN)²) DFT, independent of rustfft.
    fn naive_dft(p: &ComplexPlane<f64>, sign: f64) -> ComplexPlane<f64> {
        let g = p.grid();
        let scale = 1.0 / (g.len() as f64).sqrt();
        ComplexPlane::from_fn(g, |k, l| {
            let mut acc = Complex::new(0.0, 0.0);
            for m in 0..g.rows {
                for n in 0..g.cols {
                    let phase = sign
                        * 2.0
                        * std::f64::consts::PI
                        * ((k * m) as f64 / g.rows as f64 + (l * n) as f64 / g.cols as f64);
                    acc += p.get(m, n) * Complex::new(phase.cos(), phase.sin());
                }
            }
            acc * scale
        })
    }

    #[test]
    fn impulse_transforms_to_constant() {
        let g = Grid2::square(3).unwrap();
        let out = dft2(&RealPlane::<f64>::impulse(g, 0, 0));
        for z in out.as_slice() {
            assert!((z.re - 1.0 / 3.0).abs() < 1e-15);
            assert!(z.im.abs() < 1e-15);
        }
    }

    #[test]
    fn unitary_round_trip_and_parseval() {
        let g = Grid2::new(7, 5).unwrap();
        let p = random_complex(g, 1);
        let back = idft2(&dft2(&p));
        assert!(back.max_abs_diff(&p) < 1e-12);
        let rel = (dft2(&p).norm() - p.norm()).abs() / p.norm();
        assert!(rel < 1e-12);
    }

    #[test]
    fn matches_naive_dft() {
        let g = Grid2::new(4, 6).unwrap();
        let p = random_complex(g, 2);
        assert!(dft2(&p).max_abs_diff(&naive_dft(&p, -1.0)) < 1e-12);
        assert!(idft2(&p).max_abs_diff(&naive_dft(&p, 1.0)) < 1e-12);
    }

    #[test]
    fn unnormalized_pair() {
        let g = Grid2::new(5, 3).unwrap();
        let p = random_complex(g, 3);
        let scaled = dft2(&p).scale((g.len() as f64).sqrt());
        assert!(fft2(&p).max_abs_diff(&scaled) < 1e-12);
        assert!(ifft2(&fft2(&p)).max_abs_diff(&p) < 1e-12);
    }

    #[test]
    fn reverse_perm_properties() {
        let g = Grid2::new(5, 7).unwrap();
        let p = random_complex(g, 4);
        assert_eq!(reverse_perm(&reverse_perm(&p)), p);

        let q = random_real(g, 5);
        let q_hat = dft2(&q);
        assert!(reverse_perm(&q_hat).max_abs_diff(&q_hat.conj()) < 1e-12);

        let c = ComplexPlane::filled(g, Complex::new(2.0, -1.0));
        assert_eq!(reverse_perm(&c), c);

        // bijective on indices
        let mut seen = vec![false; g.len()];
        for i in 0..g.len() {
            seen[g.reversed(i)] = true;
        }
        assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn circulant_apply_identity_and_shift() {
        let g = Grid2::square(4).unwrap();
        let v = random_complex(g, 6);
        let delta = RealPlane::<f64>::impulse(g, 0, 0).to_complex();
        assert!(circulant_apply(&delta, &v).unwrap().max_abs_diff(&v) < 1e-12);

        let shift = RealPlane::<f64>::impulse(g, 1, 0).to_complex();
        let shifted = circulant_apply(&shift, &v).unwrap();
        assert!(shifted.max_abs_diff(&v.circshift(1, 0)) < 1e-12);
    }

    #[test]
    fn circulant_apply_rejects_shape_mismatch() {
        let a = ComplexPlane::<f64>::zeros(Grid2::square(3).unwrap());
        let b = ComplexPlane::<f64>::zeros(Grid2::square(5).unwrap());
        assert!(matches!(
            circulant_apply(&a, &b),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn sparse_from_kernel_counts() {
        let g = Grid2::square(5).unwrap();
        let one = RealPlane::<f64>::impulse(g, 2, 3);
        assert_eq!(bccb_from_kernel(&one, 0.0).len(), 1);
        let dense = RealPlane::from_fn(g, |r, c| 1.0 + (r * 5 + c) as f64);
        assert_eq!(bccb_from_kernel(&dense, 0.0).len(), 25);
    }

    #[test]
    fn sparse_apply_matches_fft_path() {
        let g = Grid2::new(6, 5).unwrap();
        let kernel = random_real(g, 7);
        let op = bccb_from_kernel(&kernel, 0.5);
        let thresholded = kernel.map(|v| if v.abs() > 0.5 { v } else { 0.0 });
        let v = random_complex(g, 8);
        let sparse = op.apply(&v).unwrap();
        let dense = circulant_apply(&thresholded.to_complex(), &v).unwrap();
        assert!(sparse.max_abs_diff(&dense) < 1e-12);
    }

    #[test]
    fn gram_of_identity_and_spectrum() {
        let g = Grid2::square(5).unwrap();
        let id = SparseBccb::<f64>::identity(g, 1.0);
        assert_eq!(id.gram(), id);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let kernel = RealPlane::from_fn(g, |_, _| {
            if rng.gen_bool(0.3) {
                rng.gen_range(-1.0..1.0)
            } else {
                0.0
            }
        });
        let op = bccb_from_kernel(&kernel, 0.0);
        let lhs = op.gram().eigenvalues();
        let rhs = op.eigenvalues().map(|z| Complex::new(z.norm_sqr(), 0.0));
        assert!(lhs.max_abs_diff(&rhs) < 1e-10);
    }

    #[test]
    fn center_shift_round_trip() {
        let g = Grid2::new(5, 7).unwrap();
        let p = random_real(g, 10);
        let moved = p.center_to_origin();
        assert_eq!(moved.get(0, 0), p.get(2, 3));
        assert_eq!(moved.origin_to_center(), p);
    }
}
