//! Spatial penalty `w`, its sparsified spectrum and the SPD operator `RᵀR`.
//!
//! For a real, even `w` the spatial penalty `‖w ⊙ f‖²` becomes, in the
//! Fourier domain, the quadratic form of `RᵀR` where `R` is the BCCB operator
//! generated by `dft2(w)/√(MN)`. The spectrum of a smooth `w` is concentrated
//! in a few bins, so `R` (and `RᵀR`) are sparse stencils.

use serde::{Deserialize, Serialize};

use crate::spectral::{bccb_from_kernel, dft2, Grid2, SparseBccb};
use crate::{Error, RealPlane, Result, Scalar};

/// Parameters of `w(m, n) = μ + η(m/σ₁)² + η(n/σ₂)²` with `[σ₁, σ₂] = β[P, Q]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    pub mu: f64,
    pub eta: f64,
    pub beta: f64,
    /// Fraction of the spectrum's ℓ₂ norm kept when sparsifying.
    pub sparsity_keep: f64,
}

impl Default for RegularizerSpec {
    fn default() -> Self {
        RegularizerSpec {
            mu: 0.1,
            eta: 3.0,
            beta: 0.8,
            sparsity_keep: 0.999,
        }
    }
}

impl RegularizerSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid("reg_mu", format!("{} must be > 0", self.mu)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("reg_eta", format!("{} must be >= 0", self.eta)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid("reg_beta", format!("{} must be > 0", self.beta)));
        }
        check_keep(self.sparsity_keep)
    }
}

fn check_keep(keep: f64) -> Result<()> {
    if keep > 0.0 && keep <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            "reg_keep",
            format!("{keep} must lie in (0, 1]"),
        ))
    }
}

/// Evaluates the quadratic penalty on centered coordinates and shifts it so
/// its minimum `μ` sits at bin `(0, 0)`. `target` is `(P, Q)` = (rows, cols)
/// of the target in grid cells.
pub fn build_w<T: Scalar>(
    spec: &RegularizerSpec,
    grid: Grid2,
    target: (f64, f64),
) -> Result<RealPlane<T>> {
    grid.require_odd()?;
    spec.validate()?;
    let (p, q) = target;
    if !(p > 0.0 && q > 0.0) {
        return Err(Error::invalid(
            "target",
            format!("target size {p}x{q} must be positive"),
        ));
    }
    let (s1, s2) = (spec.beta * p, spec.beta * q);
    Ok(RealPlane::from_fn(grid, |r, c| {
        let (m, n) = grid.signed(r, c);
        let (m, n) = (m as f64 / s1, n as f64 / s2);
        T::of(spec.mu + spec.eta * m * m + spec.eta * n * n)
    }))
}

/// Zeroes the smallest spectral entries of `w` while the retained entries
/// keep at least `keep` of the spectrum's ℓ₂ norm. Entries are dropped in
/// `{k, −k}` pairs so the kernel stays even, and the DC bin is always kept.
/// Returns the (real) retained spectrum and the number of retained bins.
pub fn sparsify_spectrum<T: Scalar>(w: &RealPlane<T>, keep: f64) -> Result<(RealPlane<T>, usize)> {
    check_keep(keep)?;
    let g = w.grid();
    let spectrum = dft2(w);
    let values: Vec<f64> = spectrum.as_slice().iter().map(|z| z.re.f64()).collect();
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let zero_tol = peak * 64.0 * T::epsilon().f64() * (g.len() as f64).sqrt();

    // one representative per {k, -k} orbit
    let mut orbits: Vec<(usize, f64)> = (0..g.len())
        .filter(|&i| i <= g.reversed(i))
        .map(|i| (i, values[i].abs().max(values[g.reversed(i)].abs())))
        .filter(|&(i, mag)| i == 0 || mag > zero_tol)
        .collect();
    orbits.sort_by(|a, b| {
        (b.0 == 0)
            .cmp(&(a.0 == 0))
            .then(b.1.total_cmp(&a.1))
            .then(a.0.cmp(&b.0))
    });

    let total: f64 = values.iter().map(|v| v * v).sum();
    let target = keep * keep * total;
    let mut kernel = RealPlane::zeros(g);
    let mut retained = 0.0;
    let mut count = 0;
    for (i, _) in orbits {
        if keep < 1.0 && i != 0 && retained >= target {
            break;
        }
        let j = g.reversed(i);
        for idx in if i == j { vec![i] } else { vec![i, j] } {
            if values[idx].abs() > zero_tol {
                kernel.as_mut_slice()[idx] = T::of(values[idx]);
                retained += values[idx] * values[idx];
                count += 1;
            }
        }
    }
    Ok((kernel, count))
}

/// Spatial regularizer with its Fourier-domain operators.
#[derive(Clone, Debug)]
pub struct Regularizer<T> {
    spec: RegularizerSpec,
    grid: Grid2,
    w: RealPlane<T>,
    spectrum: RealPlane<T>,
    op: SparseBccb<T>,
    gram: SparseBccb<T>,
    k: usize,
}

impl<T: Scalar> Regularizer<T> {
    pub fn new(spec: &RegularizerSpec, grid: Grid2, target: (f64, f64)) -> Result<Self> {
        let w = build_w::<T>(spec, grid, target)?;
        let (spectrum, k) = sparsify_spectrum(&w, spec.sparsity_keep)?;
        // R = F̈ᴴ diag(w) F̈ is generated by dft2(w)/√(MN)
        let scale = T::one() / T::of(grid.len() as f64).sqrt();
        let op = bccb_from_kernel(&spectrum.map(|v| v * scale), T::zero());
        let gram = op.gram();
        Ok(Regularizer {
            spec: *spec,
            grid,
            w,
            spectrum,
            op,
            gram,
            k,
        })
    }

    pub fn spec(&self) -> &RegularizerSpec {
        &self.spec
    }

    pub fn grid(&self) -> Grid2 {
        self.grid
    }

    /// Spatial penalty, minimum at bin `(0, 0)`.
    pub fn w(&self) -> &RealPlane<T> {
        &self.w
    }

    /// Retained (sparsified) entries of `dft2(w)`.
    pub fn spectrum(&self) -> &RealPlane<T> {
        &self.spectrum
    }

    /// `R`, generated by the retained spectrum scaled by `1/√(MN)`.
    pub fn op(&self) -> &SparseBccb<T> {
        &self.op
    }

    /// `RᵀR`.
    pub fn gram_op(&self) -> &SparseBccb<T> {
        &self.gram
    }

    /// Number of retained spectral entries.
    pub fn k(&self) -> usize {
        self.k
    }
}

/// Builds `w`, sparsifies its spectrum and forms `RᵀR`.
pub fn build_regularizer<T: Scalar>(
    spec: &RegularizerSpec,
    grid: Grid2,
    target: (f64, f64),
) -> Result<Regularizer<T>> {
    Regularizer::new(spec, grid, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::idft2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(mu: f64, eta: f64, keep: f64) -> RegularizerSpec {
        RegularizerSpec {
            mu,
            eta,
            beta: 0.8,
            sparsity_keep: keep,
        }
    }

    fn dense_gram(reg: &Regularizer<f64>) -> nalgebra::DMatrix<f64> {
        let g = reg.grid();
        let k = reg.gram_op().kernel();
        nalgebra::DMatrix::from_fn(g.len(), g.len(), |i, j| {
            let (ri, ci) = g.coords(i);
            let (rj, cj) = g.coords(j);
            k.as_slice()[g.wrap(ri as isize - rj as isize, ci as isize - cj as isize)]
        })
    }

    #[test]
    fn eta_zero_is_constant() {
        let g = Grid2::new(5, 7).unwrap();
        let w = build_w::<f64>(&spec(0.1, 0.0, 1.0), g, (2.0, 3.0)).unwrap();
        assert!(w.as_slice().iter().all(|&v| (v - 0.1).abs() < 1e-15));
    }

    #[test]
    fn minimum_at_origin() {
        let g = Grid2::new(9, 7).unwrap();
        let w = build_w::<f64>(&RegularizerSpec::default(), g, (3.0, 2.0)).unwrap();
        let min = w.as_slice().iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(min, w.get(0, 0));
        assert!((min - 0.1).abs() < 1e-15);
    }

    #[test]
    fn formula_value() {
        let g = Grid2::square(5).unwrap();
        let w = build_w::<f64>(&spec(0.1, 3.0, 1.0), g, (2.0, 2.0)).unwrap();
        // centered coordinate (2, 0) is bin (2, 0); (-2, 0) is bin (3, 0)
        assert!((w.get(2, 0) - 4.7875).abs() < 1e-12);
        assert!((w.get(3, 0) - 4.7875).abs() < 1e-12);
    }

    #[test]
    fn even_grid_rejected() {
        let g = Grid2::new(6, 5).unwrap();
        assert!(matches!(
            build_w::<f64>(&RegularizerSpec::default(), g, (2.0, 2.0)),
            Err(Error::EvenGrid { .. })
        ));
    }

    #[test]
    fn invalid_spec_rejected() {
        let g = Grid2::square(5).unwrap();
        for bad in [spec(0.0, 3.0, 0.9), spec(0.1, -1.0, 0.9), spec(0.1, 3.0, 0.0)] {
            assert!(build_regularizer::<f64>(&bad, g, (2.0, 2.0)).is_err());
        }
    }

    #[test]
    fn spectrum_is_real() {
        let g = Grid2::new(11, 9).unwrap();
        let w = build_w::<f64>(&RegularizerSpec::default(), g, (4.0, 3.0)).unwrap();
        assert!(dft2(&w).max_imag() < 1e-10);
    }

    #[test]
    fn sparsify_counts() {
        let g = Grid2::square(7).unwrap();
        let constant = RealPlane::filled(g, 0.3);
        assert_eq!(sparsify_spectrum(&constant, 1.0).unwrap().1, 1);
        assert_eq!(sparsify_spectrum(&constant, 0.5).unwrap().1, 1);

        let w = build_w::<f64>(&RegularizerSpec::default(), g, (3.0, 3.0)).unwrap();
        let spectrum = dft2(&w);
        let peak = spectrum.max_abs();
        let nonzero = spectrum
            .as_slice()
            .iter()
            .filter(|z| z.norm() > 1e-10 * peak)
            .count();
        assert_eq!(sparsify_spectrum(&w, 1.0).unwrap().1, nonzero);
    }

    fn random_even(g: Grid2, seed: u64) -> RealPlane<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = RealPlane::from_fn(g, |_, _| rng.gen_range(0.0..1.0));
        RealPlane::from_fn(g, |r, c| {
            let i = g.index(r, c);
            0.5 * (raw.as_slice()[i] + raw.as_slice()[g.reversed(i)])
        })
    }

    #[test]
    fn truncation_error_bound() {
        let g = Grid2::square(9).unwrap();
        for seed in 0..5 {
            let w = random_even(g, seed);
            let keep = 0.99;
            let (kernel, k) = sparsify_spectrum(&w, keep).unwrap();
            assert!(k < g.len());
            let back = idft2(&kernel.to_complex());
            let err = back.re().zip_map(&w, |a, b| a - b).unwrap().norm() / w.norm();
            assert!(err <= (1.0 - keep * keep).sqrt() + 1e-12, "{err}");
            assert!(back.max_imag() < 1e-10);
        }
    }

    #[test]
    fn eta_zero_gives_scaled_identity() {
        let g = Grid2::square(7).unwrap();
        let reg = build_regularizer::<f64>(&spec(0.1, 0.0, 1.0), g, (3.0, 3.0)).unwrap();
        assert_eq!(reg.k(), 1);
        assert_eq!(reg.gram_op().len(), 1);
        let e = reg.gram_op().entries()[0];
        assert_eq!((e.row, e.col), (0, 0));
        assert!((e.value - 0.01).abs() < 1e-15);
    }

    #[test]
    fn dense_gram_is_spd() {
        let g = Grid2::square(7).unwrap();
        let reg = build_regularizer::<f64>(&RegularizerSpec::default(), g, (3.0, 3.0)).unwrap();
        let a = dense_gram(&reg);
        assert!((&a - a.transpose()).amax() < 1e-12);
        let eig = a.symmetric_eigenvalues();
        assert!(eig.min() > 0.0, "min eigenvalue {}", eig.min());
    }

    #[test]
    fn keep_lowering_never_adds_entries() {
        let g = Grid2::new(15, 11).unwrap();
        let w = build_w::<f64>(&RegularizerSpec::default(), g, (5.0, 4.0)).unwrap();
        let mut last = usize::MAX;
        for keep in [1.0, 0.9999, 0.999, 0.99, 0.95, 0.8, 0.5] {
            let (_, k) = sparsify_spectrum(&w, keep).unwrap();
            assert!(k <= last);
            last = k;
        }
    }

    proptest! {
        #[test]
        fn quadratic_form_nonnegative(
            mu in 0.01f64..1.0,
            eta in 0.0f64..5.0,
            keep in 0.9f64..=1.0,
            p in 1.0f64..4.0,
            q in 1.0f64..4.0,
            seed in any::<u64>(),
        ) {
            let g = Grid2::new(7, 9).unwrap();
            let s = RegularizerSpec { mu, eta, beta: 0.8, sparsity_keep: keep };
            let reg = build_regularizer::<f64>(&s, g, (p, q)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = RealPlane::from_fn(g, |_, _| rng.gen_range(-1.0..1.0)).to_complex();
            let av = reg.gram_op().apply(&v).unwrap();
            let form: f64 = v.as_slice().iter().zip(av.as_slice()).map(|(a, b)| (a.conj() * b).re).sum();
            prop_assert!(form >= -1e-12);
            if keep == 1.0 {
                prop_assert!(form > 0.0);
            }
        }

        #[test]
        fn eta_monotone(eta in 0.0f64..5.0, bump in 0.0f64..3.0) {
            let g = Grid2::square(9).unwrap();
            let base = RegularizerSpec { eta, ..RegularizerSpec::default() };
            let more = RegularizerSpec { eta: eta + bump, ..base };
            let a = build_w::<f64>(&base, g, (3.0, 2.0)).unwrap();
            let b = build_w::<f64>(&more, g, (3.0, 2.0)).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!(y >= x);
            }
        }
    }
}
