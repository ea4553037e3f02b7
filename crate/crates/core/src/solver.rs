//! Per-channel normal equations `(diag(D) + RᵀR) f̂ₚ = d ⊙ P(ŷ)`.
//!
//! The coefficient matrix of every channel is real, symmetric and positive
//! definite (`RᵀR` is SPD whenever the regularizer floor `μ > 0`), and it is
//! block diagonal across channels, so each channel is an independent
//! `MN × MN` system. The complex unknown is handled by sweeping its real and
//! imaginary parts with the same real matrix.
//!
//! Sample spectra are unnormalized ([`crate::spectral::fft2`]), so the system
//! is exactly the normal equations of the spatial ridge problem
//! `‖Xf − y‖² + ‖w ⊙ f‖²` with `X` the circulant data matrix of the sample.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Mat, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::regularizer::Regularizer;
use crate::spectral::{reverse_perm, Fft2, Grid2, SparseBccb, SpectralStack};
use crate::{Complex, ComplexPlane, Error, RealPlane, Result, Scalar};

/// Sweeps used when the sparse factorization is unavailable.
const FALLBACK_SWEEPS: usize = 100;
const FALLBACK_TOLERANCE: f64 = 1e-6;

/// Gaussian regression target and its permuted spectrum `P(ŷ)`.
#[derive(Clone, Debug)]
pub struct GaussianTarget<T> {
    pub y: RealPlane<T>,
    pub y_hat_perm: ComplexPlane<T>,
    pub sigma: f64,
}

/// Gaussian with peak 1 at bin `(0, 0)` and `σ = sigma_factor·√(PQ)` cells.
pub fn make_target<T: Scalar>(
    grid: Grid2,
    target_size: (f64, f64),
    sigma_factor: f64,
) -> Result<GaussianTarget<T>> {
    grid.require_odd()?;
    if !(sigma_factor > 0.0 && sigma_factor.is_finite()) {
        return Err(Error::invalid(
            "output_sigma_factor",
            format!("{sigma_factor} must be > 0"),
        ));
    }
    let (p, q) = target_size;
    if !(p > 0.0 && q > 0.0) {
        return Err(Error::invalid("target", format!("{p}x{q} must be positive")));
    }
    let sigma = sigma_factor * (p * q).sqrt();
    let y = RealPlane::from_fn(grid, |r, c| {
        let (m, n) = grid.signed(r, c);
        T::of((-((m * m + n * n) as f64) / (2.0 * sigma * sigma)).exp())
    });
    let y_hat = Fft2::new(grid).fft2_real(&y)?;
    Ok(GaussianTarget {
        y,
        y_hat_perm: reverse_perm(&y_hat),
        sigma,
    })
}

/// Order of the Gauss-Seidel sweeps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepOrder {
    /// Row-major forward sweeps.
    #[default]
    Forward,
    /// Forward sweep followed by a backward sweep.
    Symmetric,
}

/// Off-diagonal structure of `RᵀR` unrolled into a per-bin neighbour table
/// so a sweep touches no modular arithmetic.
#[derive(Clone, Debug)]
pub struct GramStencil<T> {
    grid: Grid2,
    diagonal: T,
    values: Vec<T>,
    neighbours: Vec<u32>,
}

impl<T: Scalar> GramStencil<T> {
    pub fn new(gram: &SparseBccb<T>) -> Self {
        let g = gram.grid();
        let off: Vec<_> = gram
            .entries()
            .iter()
            .filter(|e| !(e.row == 0 && e.col == 0))
            .collect();
        let mut neighbours = Vec::with_capacity(g.len() * off.len());
        for r in 0..g.rows {
            for c in 0..g.cols {
                for e in &off {
                    // row i couples to bin i - offset
                    let j = g.index((r + g.rows - e.row) % g.rows, (c + g.cols - e.col) % g.cols);
                    neighbours.push(j as u32);
                }
            }
        }
        GramStencil {
            grid: g,
            diagonal: gram.diagonal(),
            values: off.iter().map(|e| e.value).collect(),
            neighbours,
        }
    }

    pub fn grid(&self) -> Grid2 {
        self.grid
    }

    pub fn diagonal(&self) -> T {
        self.diagonal
    }

    /// `(diag(data) + RᵀR) x`.
    pub fn apply(&self, data: &[T], x: &[Complex<T>]) -> Vec<Complex<T>> {
        let k = self.values.len();
        (0..x.len())
            .map(|i| {
                let nb = &self.neighbours[i * k..(i + 1) * k];
                let mut acc = x[i] * (data[i] + self.diagonal);
                for (&v, &j) in self.values.iter().zip(nb) {
                    acc = acc + x[j as usize] * v;
                }
                acc
            })
            .collect()
    }

    fn relax(&self, data: &[T], b: &[Complex<T>], x: &mut [Complex<T>], i: usize) {
        let k = self.values.len();
        let nb = &self.neighbours[i * k..(i + 1) * k];
        let mut acc = b[i];
        for (&v, &j) in self.values.iter().zip(nb) {
            acc = acc - x[j as usize] * v;
        }
        x[i] = acc / (data[i] + self.diagonal);
    }

    /// One in-place Gauss-Seidel pass over `(diag(data) + RᵀR) x = b`.
    pub fn sweep(&self, data: &[T], b: &[Complex<T>], x: &mut [Complex<T>], order: SweepOrder) {
        for i in 0..x.len() {
            self.relax(data, b, x, i);
        }
        if order == SweepOrder::Symmetric {
            for i in (0..x.len()).rev() {
                self.relax(data, b, x, i);
            }
        }
    }

    /// `‖b − Ax‖ / ‖b‖`, or the absolute residual when `b = 0`.
    pub fn relative_residual(&self, data: &[T], b: &[Complex<T>], x: &[Complex<T>]) -> T {
        let ax = self.apply(data, x);
        let r: T = ax
            .iter()
            .zip(b)
            .map(|(a, b)| (*b - *a).norm_sqr())
            .sum::<T>()
            .sqrt();
        let nb: T = b.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        if nb > T::zero() {
            r / nb
        } else {
            r
        }
    }
}

/// Projects `x` onto Hermitian-symmetric planes, `x ← (x + conj(P x)) / 2`.
///
/// The system matrix commutes with `P` and is real, and the right-hand side
/// is Hermitian, so the projection never moves the solution and never
/// increases the residual.
pub fn project_hermitian<T: Scalar>(grid: Grid2, x: &mut [Complex<T>]) {
    let half = T::of(0.5);
    for i in 0..grid.len() {
        let j = grid.reversed(i);
        if j < i {
            continue;
        }
        let avg = (x[i] + x[j].conj()) * half;
        x[i] = avg;
        x[j] = avg.conj();
    }
}

/// Sparse Cholesky of `diag(D) + RᵀR`, with the symbolic analysis shared by
/// every channel. Factorization runs in `f64`.
pub struct ExactSolver {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    gram_values: Vec<f64>,
    diagonal_slots: Vec<usize>,
    symbolic: Option<SymbolicLlt<usize>>,
}

impl ExactSolver {
    pub fn new<T: Scalar>(gram: &SparseBccb<T>) -> Self {
        let g = gram.grid();
        let n = g.len();
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::with_capacity(n * gram.len());
        let mut gram_values = Vec::with_capacity(n * gram.len());
        let mut diagonal_slots = Vec::with_capacity(n);
        col_ptr.push(0);
        let mut column: Vec<(usize, f64)> = Vec::with_capacity(gram.len());
        for c in 0..n {
            let (cr, cc) = g.coords(c);
            column.clear();
            // A[i][c] = g(i - c): rows are c + offset
            for e in gram.entries() {
                let i = g.index((cr + e.row) % g.rows, (cc + e.col) % g.cols);
                column.push((i, e.value.f64()));
            }
            column.sort_by_key(|&(i, _)| i);
            for &(i, v) in &column {
                if i == c {
                    diagonal_slots.push(row_idx.len());
                }
                row_idx.push(i);
                gram_values.push(v);
            }
            col_ptr.push(row_idx.len());
        }
        let symbolic = SymbolicLlt::try_new(
            SymbolicSparseColMatRef::new_checked(n, n, &col_ptr, None, &row_idx),
            Side::Lower,
        )
        .map_err(|e| log::warn!("sparse symbolic analysis failed: {e:?}"))
        .ok();
        ExactSolver {
            n,
            col_ptr,
            row_idx,
            gram_values,
            diagonal_slots,
            symbolic,
        }
    }

    /// Solves `(diag(data) + RᵀR) x = b`. Returns `None` when the
    /// factorization is unavailable or fails.
    pub fn solve<T: Scalar>(&self, data: &[T], b: &[Complex<T>]) -> Option<Vec<Complex<T>>> {
        let symbolic = self.symbolic.as_ref()?;
        let mut values = self.gram_values.clone();
        for (&slot, &d) in self.diagonal_slots.iter().zip(data) {
            values[slot] += d.f64();
        }
        let pattern = SymbolicSparseColMatRef::new_checked(self.n, self.n, &self.col_ptr, None, &self.row_idx);
        let matrix = SparseColMatRef::new(pattern, &values);
        let llt = Llt::try_new_with_symbolic(symbolic.clone(), matrix, Side::Lower)
            .map_err(|e| log::warn!("sparse Cholesky failed: {e:?}"))
            .ok()?;
        let mut rhs = Mat::<f64>::from_fn(self.n, 2, |i, j| {
            if j == 0 {
                b[i].re.f64()
            } else {
                b[i].im.f64()
            }
        });
        llt.solve_in_place(rhs.as_mut());
        let out: Vec<Complex<T>> = (0..self.n)
            .map(|i| Complex::new(T::of(rhs[(i, 0)]), T::of(rhs[(i, 1)])))
            .collect();
        out.iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
            .then_some(out)
    }
}

/// Running normal-equation state of one channel: the data diagonal `D_t`
/// and the right-hand side accumulator `d_t` (so that `b_t = d_t ⊙ P(ŷ)`).
#[derive(Clone, Debug)]
pub struct ChannelSystem<T> {
    pub data_diag: RealPlane<T>,
    pub rhs_acc: ComplexPlane<T>,
}

impl<T: Scalar> ChannelSystem<T> {
    /// Frame-one statistics `D₁ = x̂*⊙x̂`, `d₁ = x̂*`.
    pub fn from_sample(x_hat: &ComplexPlane<T>) -> Self {
        ChannelSystem {
            data_diag: x_hat.map(|z| z.norm_sqr()),
            rhs_acc: x_hat.conj(),
        }
    }

    /// Exponential forgetting with rate `gamma`.
    pub fn blend(&mut self, x_hat: &ComplexPlane<T>, gamma: T) {
        let keep = T::one() - gamma;
        let d = self.data_diag.as_mut_slice();
        let acc = self.rhs_acc.as_mut_slice();
        for ((di, ai), z) in d.iter_mut().zip(acc.iter_mut()).zip(x_hat.as_slice()) {
            *di = keep * *di + gamma * z.norm_sqr();
            *ai = *ai * keep + z.conj() * gamma;
        }
    }

    /// `b = d ⊙ P(ŷ)`.
    pub fn rhs(&self, target_perm: &ComplexPlane<T>) -> ComplexPlane<T> {
        self.rhs_acc
            .zip_map(target_perm, |a, y| a * y)
            .expect("channel and target share the model grid")
    }
}

/// Solver settings carried by a [`FilterModel`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverParams {
    pub learning_rate: f64,
    pub gs_sweeps: usize,
    pub sweep_order: SweepOrder,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            learning_rate: 0.025,
            gs_sweeps: 4,
            sweep_order: SweepOrder::Forward,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.learning_rate) {
            return Err(Error::invalid(
                "learning_rate",
                format!("{} must lie in [0, 1]", self.learning_rate),
            ));
        }
        if self.gs_sweeps == 0 {
            return Err(Error::invalid("gs_sweeps", "must be positive"));
        }
        Ok(())
    }
}

/// Solves the per-channel systems `(diag(x̂*⊙x̂) + RᵀR) f̂ₚ = x̂* ⊙ P(ŷ)` exactly.
pub fn init_exact<T: Scalar>(
    x_hat: &SpectralStack<T>,
    reg: &Regularizer<T>,
    y_hat_perm: &ComplexPlane<T>,
) -> Result<SpectralStack<T>> {
    let channels: Vec<_> = x_hat.planes().iter().map(ChannelSystem::from_sample).collect();
    let stencil = GramStencil::new(reg.gram_op());
    let exact = ExactSolver::new(reg.gram_op());
    solve_channels(&channels, &stencil, &exact, y_hat_perm)
}

fn solve_channels<T: Scalar>(
    channels: &[ChannelSystem<T>],
    stencil: &GramStencil<T>,
    exact: &ExactSolver,
    y_hat_perm: &ComplexPlane<T>,
) -> Result<SpectralStack<T>> {
    let grid = stencil.grid();
    let planes = channels
        .par_iter()
        .map(|ch| {
            let b = ch.rhs(y_hat_perm);
            let data = ch.data_diag.as_slice();
            let x = match exact.solve(data, b.as_slice()) {
                Some(x) => x,
                None => fallback_solve(stencil, data, b.as_slice())?,
            };
            ComplexPlane::from_vec(grid, x)
        })
        .collect::<Result<Vec<_>>>()?;
    SpectralStack::new(planes)
}

fn fallback_solve<T: Scalar>(
    stencil: &GramStencil<T>,
    data: &[T],
    b: &[Complex<T>],
) -> Result<Vec<Complex<T>>> {
    if data.iter().any(|&d| d + stencil.diagonal() <= T::zero()) {
        return Err(Error::Numerical("zero diagonal in channel system".into()));
    }
    let mut x = vec![Complex::new(T::zero(), T::zero()); b.len()];
    for _ in 0..FALLBACK_SWEEPS {
        stencil.sweep(data, b, &mut x, SweepOrder::Forward);
    }
    project_hermitian(stencil.grid(), &mut x);
    let res = stencil.relative_residual(data, b, &x).f64();
    if res < FALLBACK_TOLERANCE {
        Ok(x)
    } else {
        Err(Error::Numerical(format!(
            "Gauss-Seidel fallback stalled at relative residual {res:.3e}"
        )))
    }
}

/// Running filter model: per-channel normal equations plus the current
/// permuted filter spectra `f̂ₚ`.
#[derive(Clone)]
pub struct FilterModel<T: Scalar> {
    channels: Vec<ChannelSystem<T>>,
    filters: SpectralStack<T>,
    target_perm: ComplexPlane<T>,
    regularizer: Arc<Regularizer<T>>,
    stencil: Arc<GramStencil<T>>,
    params: SolverParams,
}

impl<T: Scalar> FilterModel<T> {
    /// Frame-one model: sets `D₁`, `d₁` and solves exactly.
    pub fn init_exact(
        x_hat: &SpectralStack<T>,
        regularizer: Arc<Regularizer<T>>,
        target_perm: ComplexPlane<T>,
        params: SolverParams,
    ) -> Result<Self> {
        params.validate()?;
        x_hat.planes()[0].same_grid(regularizer.grid())?;
        target_perm.same_grid(regularizer.grid())?;
        let channels: Vec<_> = x_hat.planes().iter().map(ChannelSystem::from_sample).collect();
        let stencil = Arc::new(GramStencil::new(regularizer.gram_op()));
        let exact = ExactSolver::new(regularizer.gram_op());
        let filters = solve_channels(&channels, &stencil, &exact, &target_perm)?;
        Ok(FilterModel {
            channels,
            filters,
            target_perm,
            regularizer,
            stencil,
            params,
        })
    }

    pub fn filters(&self) -> &SpectralStack<T> {
        &self.filters
    }

    pub fn channels(&self) -> &[ChannelSystem<T>] {
        &self.channels
    }

    pub fn target_perm(&self) -> &ComplexPlane<T> {
        &self.target_perm
    }

    pub fn regularizer(&self) -> &Regularizer<T> {
        &self.regularizer
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    pub fn grid(&self) -> Grid2 {
        self.regularizer.grid()
    }

    /// Replaces the current filters (warm start for the next sweeps).
    pub fn set_filters(&mut self, filters: SpectralStack<T>) -> Result<()> {
        if filters.channels() != self.channels.len() {
            return Err(Error::ChannelMismatch {
                expected: self.channels.len(),
                got: filters.channels(),
            });
        }
        filters.planes()[0].same_grid(self.grid())?;
        self.filters = filters;
        Ok(())
    }

    /// Folds a new sample into `D_t` and `d_t`.
    pub fn update_model(&mut self, x_hat: &SpectralStack<T>) -> Result<()> {
        if x_hat.channels() != self.channels.len() {
            return Err(Error::ChannelMismatch {
                expected: self.channels.len(),
                got: x_hat.channels(),
            });
        }
        x_hat.planes()[0].same_grid(self.grid())?;
        let gamma = T::of(self.params.learning_rate);
        for (ch, x) in self.channels.iter_mut().zip(x_hat.planes()) {
            ch.blend(x, gamma);
        }
        Ok(())
    }

    /// `N_GS` warm-started sweeps per channel followed by the Hermitian
    /// projection.
    pub fn gauss_seidel(&mut self) -> Result<()> {
        let grid = self.grid();
        let diag = self.stencil.diagonal();
        for (ch, f) in self.channels.iter().zip(self.filters.planes_mut()) {
            let data = ch.data_diag.as_slice();
            if data.iter().any(|&d| !(d + diag > T::zero())) {
                return Err(Error::Numerical(
                    "non-positive diagonal in channel system".into(),
                ));
            }
            let b = ch.rhs(&self.target_perm);
            let x = f.as_mut_slice();
            for _ in 0..self.params.gs_sweeps {
                self.stencil.sweep(data, b.as_slice(), x, self.params.sweep_order);
            }
            project_hermitian(grid, x);
        }
        if self.filters.is_finite() {
            Ok(())
        } else {
            Err(Error::Numerical("non-finite filter after sweeps".into()))
        }
    }

    /// Relative residual of each channel's system at the current filters.
    pub fn residuals(&self) -> Vec<T> {
        self.channels
            .iter()
            .zip(self.filters.planes())
            .map(|(ch, f)| {
                let b = ch.rhs(&self.target_perm);
                self.stencil
                    .relative_residual(ch.data_diag.as_slice(), b.as_slice(), f.as_slice())
            })
            .collect()
    }
}
