//! Periodic-grid field containers and the discrete Fourier transform.
//!
//! The domain is the 2π-periodic torus sampled at `x_j = 2π j / n` on each
//! axis. Samples are stored row-major with the first coordinate as the slow
//! index: `data[i1 * n + i2]` lives at `(2π i1 / n, 2π i2 / n)`.
//!
//! The forward transform carries the full normalization,
//!
//! ```text
//! f̂(k) = (1/n²) Σ_j f(x_j) e^{-i k·x_j}
//! ```
//!
//! so `f̂(0)` is the mean of the field and the inverse transform is a plain
//! Fourier sum. Spectral arrays use the usual FFT index order; index `m`
//! maps to wavenumber `m` for `m <= n/2` and to `m - n` otherwise.

use std::borrow::Cow;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

/// Which representation a [`ScalarField`] currently holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Physical,
    Spectral,
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Representation::Physical => f.write_str("physical"),
            Representation::Spectral => f.write_str("spectral"),
        }
    }
}

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("grid size {0} is invalid: expected a power of two >= 8")]
    InvalidGrid(usize),
    #[error("expected a {expected} field, got a {found} field")]
    WrongRepresentation {
        expected: Representation,
        found: Representation,
    },
    #[error("grid mismatch: n = {left} vs n = {right}")]
    GridMismatch { left: usize, right: usize },
    #[error("sample count {found} does not match grid ({expected})")]
    LengthMismatch { expected: usize, found: usize },
    #[error("spectral coefficients violate conjugate symmetry (defect {defect:e})")]
    SymmetryViolation { defect: f64 },
}

/// Tolerance on the conjugate-symmetry defect accepted by `to_physical`.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

struct GridInner {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Integer wavenumbers in FFT order.
    k: Vec<f64>,
    /// Wavenumbers used by odd-order derivatives: the Nyquist mode is zeroed
    /// so that derivatives of real fields stay real.
    k_deriv: Vec<f64>,
}

/// Periodic torus discretization with `n × n` points on `[0, 2π)²`.
#[derive(Clone)]
pub struct GridSpec {
    inner: Arc<GridInner>,
}

impl fmt::Debug for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridSpec").field("n", &self.n()).finish()
    }
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.n() == other.n()
    }
}

impl GridSpec {
    pub fn new(n: usize) -> Result<Self, FieldError> {
        if n < 8 || !n.is_power_of_two() {
            return Err(FieldError::InvalidGrid(n));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let k: Vec<f64> = (0..n).map(|m| index_to_wavenumber(m, n) as f64).collect();
        let k_deriv = k
            .iter()
            .enumerate()
            .map(|(m, &k)| if m == n / 2 { 0.0 } else { k })
            .collect();
        Ok(Self {
            inner: Arc::new(GridInner {
                n,
                forward,
                inverse,
                k,
                k_deriv,
            }),
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.inner.n
    }

    /// Number of grid points, `n²`.
    #[inline]
    pub fn len(&self) -> usize {
        self.inner.n * self.inner.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Domain side, always 2π.
    pub fn length(&self) -> f64 {
        2.0 * PI
    }

    /// Grid spacing `2π / n`.
    pub fn dx(&self) -> f64 {
        2.0 * PI / self.inner.n as f64
    }

    /// Area element of the collocation quadrature, `(2π/n)²`.
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dx()
    }

    /// Coordinate of sample index `i` along either axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        self.dx() * i as f64
    }

    /// Integer wavenumber of FFT index `m`.
    #[inline]
    pub fn wavenumber(&self, m: usize) -> f64 {
        self.inner.k[m]
    }

    /// Wavenumber for odd derivatives (Nyquist mapped to zero).
    #[inline]
    pub fn deriv_wavenumber(&self, m: usize) -> f64 {
        self.inner.k_deriv[m]
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.inner.k
    }

    pub fn deriv_wavenumbers(&self) -> &[f64] {
        &self.inner.k_deriv
    }

    /// `|k|²` for the flat spectral index `idx`.
    #[inline]
    pub fn k_squared(&self, idx: usize) -> f64 {
        let n = self.inner.n;
        let (k1, k2) = (self.inner.k[idx / n], self.inner.k[idx % n]);
        k1 * k1 + k2 * k2
    }

    /// Whether the flat spectral index survives the 2/3-rule.
    #[inline]
    pub fn retained(&self, idx: usize) -> bool {
        let n = self.inner.n;
        let cut = |m: usize| 3 * index_to_wavenumber(m, n).unsigned_abs() <= n as u64;
        cut(idx / n) && cut(idx % n)
    }

    /// Flat index of the mode conjugate to `idx`.
    #[inline]
    pub fn conjugate_index(&self, idx: usize) -> usize {
        let n = self.inner.n;
        let (i1, i2) = (idx / n, idx % n);
        ((n - i1) % n) * n + (n - i2) % n
    }

    /// Flat spectral index of the integer wavenumber pair, if representable.
    pub fn index_of(&self, k1: i64, k2: i64) -> Option<usize> {
        let n = self.inner.n as i64;
        let wrap = |k: i64| {
            if k > n / 2 || k <= -n / 2 {
                None
            } else {
                Some(k.rem_euclid(n) as usize)
            }
        };
        Some(wrap(k1)? * self.inner.n + wrap(k2)?)
    }

    /// Forward transform of real samples with the `1/n²` normalization.
    pub fn forward(&self, physical: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = physical.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut data, &self.inner.forward);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
        data
    }

    /// Unnormalized inverse transform (plain Fourier sum), complex output.
    pub fn inverse_complex(&self, spectral: &[Complex64]) -> Vec<Complex64> {
        let mut data = spectral.to_vec();
        self.fft2(&mut data, &self.inner.inverse);
        data
    }

    /// Inverse transform keeping only the real part. No symmetry check.
    pub fn inverse_real(&self, spectral: &[Complex64]) -> Vec<f64> {
        self.inverse_complex(spectral).into_iter().map(|c| c.re).collect()
    }

    fn fft2(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.inner.n;
        assert_eq!(data.len(), n * n);
        let rows = |data: &mut [Complex64]| {
            data.par_chunks_mut(n).for_each_init(
                || vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()],
                |scratch, row| plan.process_with_scratch(row, scratch),
            );
        };
        rows(data);
        transpose_square(data, n);
        rows(data);
        transpose_square(data, n);
    }

    /// Maximum conjugate-symmetry defect of a spectral array.
    pub fn symmetry_defect(&self, spectral: &[Complex64]) -> f64 {
        (0..spectral.len())
            .map(|idx| (spectral[idx] - spectral[self.conjugate_index(idx)].conj()).norm())
            .fold(0.0, f64::max)
    }
}

#[inline]
fn index_to_wavenumber(m: usize, n: usize) -> i64 {
    if m <= n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

#[derive(Debug, Clone)]
pub enum Samples {
    Physical(Vec<f64>),
    Spectral(Vec<Complex64>),
}

/// A real scalar field on the torus, held either as grid samples or as
/// conjugate-symmetric Fourier coefficients.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: GridSpec,
    samples: Samples,
}

impl ScalarField {
    pub fn from_physical(grid: &GridSpec, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::LengthMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            samples: Samples::Physical(values),
        })
    }

    pub fn from_spectral(grid: &GridSpec, coeffs: Vec<Complex64>) -> Result<Self, FieldError> {
        if coeffs.len() != grid.len() {
            return Err(FieldError::LengthMismatch {
                expected: grid.len(),
                found: coeffs.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            samples: Samples::Spectral(coeffs),
        })
    }

    /// Samples `f(x1, x2)` at every grid point.
    pub fn from_fn(grid: &GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n();
        let values = (0..grid.len())
            .map(|idx| f(grid.coord(idx / n), grid.coord(idx % n)))
            .collect();
        Self {
            grid: grid.clone(),
            samples: Samples::Physical(values),
        }
    }

    pub fn constant(grid: &GridSpec, value: f64) -> Self {
        Self {
            grid: grid.clone(),
            samples: Samples::Physical(vec![value; grid.len()]),
        }
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn representation(&self) -> Representation {
        match self.samples {
            Samples::Physical(_) => Representation::Physical,
            Samples::Spectral(_) => Representation::Spectral,
        }
    }

    pub fn samples(&self) -> &Samples {
        &self.samples
    }

    /// Forward transform. The field must be in physical representation.
    pub fn to_spectral(&self) -> Result<ScalarField, FieldError> {
        match &self.samples {
            Samples::Physical(v) => Ok(Self {
                grid: self.grid.clone(),
                samples: Samples::Spectral(self.grid.forward(v)),
            }),
            Samples::Spectral(_) => Err(FieldError::WrongRepresentation {
                expected: Representation::Physical,
                found: Representation::Spectral,
            }),
        }
    }

    /// Inverse transform. The field must be spectral and conjugate-symmetric
    /// to within [`SYMMETRY_TOLERANCE`] (scaled by the largest coefficient
    /// when that exceeds one).
    pub fn to_physical(&self) -> Result<ScalarField, FieldError> {
        match &self.samples {
            Samples::Spectral(c) => {
                check_symmetry(&self.grid, c)?;
                Ok(Self {
                    grid: self.grid.clone(),
                    samples: Samples::Physical(self.grid.inverse_real(c)),
                })
            }
            Samples::Physical(_) => Err(FieldError::WrongRepresentation {
                expected: Representation::Spectral,
                found: Representation::Physical,
            }),
        }
    }

    /// Spectral coefficients, transforming if necessary.
    pub fn spectral(&self) -> Cow<'_, [Complex64]> {
        match &self.samples {
            Samples::Spectral(c) => Cow::Borrowed(c),
            Samples::Physical(v) => Cow::Owned(self.grid.forward(v)),
        }
    }

    /// Physical samples, transforming if necessary. A spectral field that
    /// fails the symmetry check is reported as corrupted.
    pub fn physical(&self) -> Result<Cow<'_, [f64]>, FieldError> {
        match &self.samples {
            Samples::Physical(v) => Ok(Cow::Borrowed(v)),
            Samples::Spectral(c) => {
                check_symmetry(&self.grid, c)?;
                Ok(Cow::Owned(self.grid.inverse_real(c)))
            }
        }
    }

    pub fn into_spectral(self) -> ScalarField {
        match self.samples {
            Samples::Spectral(_) => self,
            Samples::Physical(v) => Self {
                samples: Samples::Spectral(self.grid.forward(&v)),
                grid: self.grid,
            },
        }
    }

    pub fn into_physical(self) -> Result<ScalarField, FieldError> {
        match self.samples {
            Samples::Physical(_) => Ok(self),
            Samples::Spectral(ref c) => {
                check_symmetry(&self.grid, c)?;
                let values = self.grid.inverse_real(c);
                Ok(Self {
                    grid: self.grid,
                    samples: Samples::Physical(values),
                })
            }
        }
    }

    /// 2/3-rule truncation: modes with `max(|k1|, |k2|) > n/3` are zeroed.
    pub fn dealias(&self) -> ScalarField {
        let mut c = self.spectral().into_owned();
        dealias_in_place(&self.grid, &mut c);
        Self {
            grid: self.grid.clone(),
            samples: Samples::Spectral(c),
        }
    }

    /// Sample-wise product of two physical fields. Dealiasing the result is
    /// the caller's job.
    pub fn pointwise_product(&self, other: &ScalarField) -> Result<ScalarField, FieldError> {
        check_grid(&self.grid, &other.grid)?;
        let (a, b) = (self.physical_only()?, other.physical_only()?);
        Ok(Self {
            grid: self.grid.clone(),
            samples: Samples::Physical(a.iter().zip(b).map(|(x, y)| x * y).collect()),
        })
    }

    fn physical_only(&self) -> Result<&[f64], FieldError> {
        match &self.samples {
            Samples::Physical(v) => Ok(v),
            Samples::Spectral(_) => Err(FieldError::WrongRepresentation {
                expected: Representation::Physical,
                found: Representation::Spectral,
            }),
        }
    }

    /// Grid maximum of `|f|`.
    pub fn max_abs(&self) -> f64 {
        match &self.samples {
            Samples::Physical(v) => max_abs(v),
            Samples::Spectral(c) => max_abs(&self.grid.inverse_real(c)),
        }
    }

    /// Field mean, i.e. the `k = 0` coefficient.
    pub fn mean(&self) -> f64 {
        match &self.samples {
            Samples::Physical(v) => v.iter().sum::<f64>() / v.len() as f64,
            Samples::Spectral(c) => c[0].re,
        }
    }

    /// `‖f‖₂` over the torus via Parseval.
    pub fn l2_norm(&self) -> f64 {
        let c = self.spectral();
        (4.0 * PI * PI * c.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// `a·self + b·other`, in spectral representation.
    pub fn lin_comb(&self, a: f64, other: &ScalarField, b: f64) -> Result<ScalarField, FieldError> {
        check_grid(&self.grid, &other.grid)?;
        let (x, y) = (self.spectral(), other.spectral());
        let c = x.iter().zip(y.iter()).map(|(p, q)| p * a + q * b).collect();
        Ok(Self {
            grid: self.grid.clone(),
            samples: Samples::Spectral(c),
        })
    }

    pub fn scaled(&self, a: f64) -> ScalarField {
        let samples = match &self.samples {
            Samples::Physical(v) => Samples::Physical(v.iter().map(|x| x * a).collect()),
            Samples::Spectral(c) => Samples::Spectral(c.iter().map(|z| z * a).collect()),
        };
        Self {
            grid: self.grid.clone(),
            samples,
        }
    }
}

pub(crate) fn check_grid(a: &GridSpec, b: &GridSpec) -> Result<(), FieldError> {
    if a != b {
        return Err(FieldError::GridMismatch {
            left: a.n(),
            right: b.n(),
        });
    }
    Ok(())
}

fn check_symmetry(grid: &GridSpec, c: &[Complex64]) -> Result<(), FieldError> {
    let scale = c.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let defect = grid.symmetry_defect(c);
    if defect > SYMMETRY_TOLERANCE * scale {
        return Err(FieldError::SymmetryViolation { defect });
    }
    Ok(())
}

pub fn dealias_in_place(grid: &GridSpec, c: &mut [Complex64]) {
    for (idx, z) in c.iter_mut().enumerate() {
        if !grid.retained(idx) {
            *z = Complex64::new(0.0, 0.0);
        }
    }
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Two scalar components sharing one grid.
#[derive(Debug, Clone)]
pub struct VectorField {
    components: [ScalarField; 2],
}

impl VectorField {
    pub fn new(c1: ScalarField, c2: ScalarField) -> Result<Self, FieldError> {
        check_grid(c1.grid(), c2.grid())?;
        Ok(Self { components: [c1, c2] })
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            components: [ScalarField::zeros(grid), ScalarField::zeros(grid)],
        }
    }

    pub fn from_fns(grid: &GridSpec, f1: impl Fn(f64, f64) -> f64, f2: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            components: [ScalarField::from_fn(grid, f1), ScalarField::from_fn(grid, f2)],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.components[0].grid()
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.components[i]
    }

    pub fn components(&self) -> &[ScalarField; 2] {
        &self.components
    }

    pub fn into_components(self) -> [ScalarField; 2] {
        self.components
    }

    pub fn map(&self, f: impl Fn(&ScalarField) -> ScalarField) -> VectorField {
        Self {
            components: [f(&self.components[0]), f(&self.components[1])],
        }
    }

    pub fn lin_comb(&self, a: f64, other: &VectorField, b: f64) -> Result<VectorField, FieldError> {
        Ok(Self {
            components: [
                self.components[0].lin_comb(a, &other.components[0], b)?,
                self.components[1].lin_comb(a, &other.components[1], b)?,
            ],
        })
    }

    /// Grid maximum of the pointwise Euclidean magnitude.
    pub fn max_abs(&self) -> Result<f64, FieldError> {
        let (a, b) = (self.components[0].physical()?, self.components[1].physical()?);
        Ok(a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max(x.hypot(*y))))
    }

    pub fn l2_norm(&self) -> f64 {
        self.components.iter().map(|c| c.l2_norm().powi(2)).sum::<f64>().sqrt()
    }
}

/// A 2×2 tensor field stored by columns: `columns[k]` is `F_{·k}`.
#[derive(Debug, Clone)]
pub struct TensorField {
    columns: [VectorField; 2],
}

impl TensorField {
    pub fn new(col1: VectorField, col2: VectorField) -> Result<Self, FieldError> {
        check_grid(col1.grid(), col2.grid())?;
        Ok(Self { columns: [col1, col2] })
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            columns: [VectorField::zeros(grid), VectorField::zeros(grid)],
        }
    }

    pub fn identity(grid: &GridSpec) -> Self {
        Self::constant(grid, [[1.0, 0.0], [0.0, 1.0]])
    }

    /// Spatially constant tensor with entries `m[i][j] = F_ij`.
    pub fn constant(grid: &GridSpec, m: [[f64; 2]; 2]) -> Self {
        let col = |j: usize| {
            VectorField::new(
                ScalarField::constant(grid, m[0][j]),
                ScalarField::constant(grid, m[1][j]),
            )
            .expect("same grid")
        };
        Self {
            columns: [col(0), col(1)],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.columns[0].grid()
    }

    pub fn column(&self, k: usize) -> &VectorField {
        &self.columns[k]
    }

    pub fn columns(&self) -> &[VectorField; 2] {
        &self.columns
    }

    /// Entry `F_ij` (row `i`, column `j`).
    pub fn entry(&self, i: usize, j: usize) -> &ScalarField {
        self.columns[j].component(i)
    }

    pub fn map(&self, f: impl Fn(&ScalarField) -> ScalarField + Copy) -> TensorField {
        Self {
            columns: [self.columns[0].map(f), self.columns[1].map(f)],
        }
    }

    /// Grid maximum of the pointwise Frobenius norm.
    pub fn max_abs(&self) -> Result<f64, FieldError> {
        let entries = [
            self.entry(0, 0).physical()?,
            self.entry(1, 0).physical()?,
            self.entry(0, 1).physical()?,
            self.entry(1, 1).physical()?,
        ];
        Ok((0..self.grid().len())
            .map(|p| entries.iter().map(|e| e[p] * e[p]).sum::<f64>().sqrt())
            .fold(0.0, f64::max))
    }

    pub fn l2_norm(&self) -> f64 {
        self.columns.iter().map(|c| c.l2_norm().powi(2)).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n).unwrap()
    }

    fn random_band_limited(grid: &GridSpec, seed: u64, kmax: i64) -> ScalarField {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let modes: Vec<(f64, f64, f64, f64)> = (0..12)
            .map(|_| {
                (
                    rng.gen_range(-kmax..=kmax) as f64,
                    rng.gen_range(-kmax..=kmax) as f64,
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0.0..6.3),
                )
            })
            .collect();
        ScalarField::from_fn(grid, |x, y| {
            modes
                .iter()
                .map(|(k1, k2, a, ph)| a * (k1 * x + k2 * y + ph).cos())
                .sum()
        })
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(8).is_ok());
        assert!(GridSpec::new(64).is_ok());
        assert!(matches!(GridSpec::new(4), Err(FieldError::InvalidGrid(4))));
        assert!(matches!(GridSpec::new(12), Err(FieldError::InvalidGrid(12))));
        let g = grid(16);
        assert_eq!(g.wavenumber(8), 8.0);
        assert_eq!(g.wavenumber(9), -7.0);
        assert_eq!(g.deriv_wavenumber(8), 0.0);
    }

    #[test]
    fn constant_is_pure_mean() {
        let g = grid(16);
        let c = ScalarField::constant(&g, 3.0).to_spectral().unwrap();
        let Samples::Spectral(coeffs) = c.samples() else {
            panic!()
        };
        assert_relative_eq!(coeffs[0].re, 3.0, epsilon = 1e-14);
        assert!(coeffs[1..].iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn cosine_has_half_amplitude_modes() {
        let g = grid(16);
        let f = ScalarField::from_fn(&g, |x, _| x.cos()).to_spectral().unwrap();
        let Samples::Spectral(c) = f.samples() else { panic!() };
        let plus = g.index_of(1, 0).unwrap();
        let minus = g.index_of(-1, 0).unwrap();
        for (idx, z) in c.iter().enumerate() {
            let expect = if idx == plus || idx == minus { 0.5 } else { 0.0 };
            assert!((z - Complex64::new(expect, 0.0)).norm() < 1e-14, "idx {idx}");
        }
    }

    #[test]
    fn inverse_of_single_modes() {
        let g = grid(16);
        let mut c = vec![Complex64::new(0.0, 0.0); g.len()];
        c[0] = Complex64::new(1.0, 0.0);
        let one = ScalarField::from_spectral(&g, c).unwrap().to_physical().unwrap();
        assert!(one.physical().unwrap().iter().all(|v| (v - 1.0).abs() < 1e-14));

        let mut c = vec![Complex64::new(0.0, 0.0); g.len()];
        c[g.index_of(0, 1).unwrap()] = Complex64::new(0.5, 0.0);
        c[g.index_of(0, -1).unwrap()] = Complex64::new(0.5, 0.0);
        let f = ScalarField::from_spectral(&g, c).unwrap().to_physical().unwrap();
        let expected = ScalarField::from_fn(&g, |_, y| y.cos());
        let diff = f.lin_comb(1.0, &expected, -1.0).unwrap();
        assert!(diff.max_abs() < 1e-14);
    }

    #[test]
    fn wrong_representation_is_usage_error() {
        let g = grid(8);
        let f = ScalarField::zeros(&g);
        assert!(matches!(f.to_physical(), Err(FieldError::WrongRepresentation { .. })));
        let s = f.to_spectral().unwrap();
        assert!(matches!(s.to_spectral(), Err(FieldError::WrongRepresentation { .. })));
        assert!(s.pointwise_product(&f).is_err());
    }

    #[test]
    fn asymmetric_coefficients_are_rejected() {
        let g = grid(8);
        let mut c = vec![Complex64::new(0.0, 0.0); g.len()];
        c[g.index_of(1, 0).unwrap()] = Complex64::new(0.5, 0.0);
        let f = ScalarField::from_spectral(&g, c).unwrap();
        assert!(matches!(f.to_physical(), Err(FieldError::SymmetryViolation { .. })));
    }

    #[test]
    fn dealias_cutoff() {
        let g = grid(32);
        // 12 > 32/3
        assert!(!g.retained(g.index_of(12, 0).unwrap()));
        assert!(g.retained(g.index_of(10, -10).unwrap()));
        assert!(!g.retained(g.index_of(3, -11).unwrap()));

        let low = ScalarField::from_fn(&g, |x, y| (3.0 * x).sin() * (10.0 * y).cos());
        let d = low.dealias().into_physical().unwrap();
        assert!(d.lin_comb(1.0, &low, -1.0).unwrap().max_abs() < 1e-13);

        let high = ScalarField::from_fn(&g, |x, _| (12.0 * x).cos());
        assert!(high.dealias().max_abs() < 1e-14);
    }

    #[test]
    fn products() {
        let g = grid(16);
        let c = ScalarField::from_fn(&g, |x, _| x.cos());
        let one = ScalarField::constant(&g, 1.0);
        let p = one.pointwise_product(&c).unwrap();
        assert_eq!(p.physical().unwrap(), c.physical().unwrap());
        let sq = c.pointwise_product(&c).unwrap();
        let expected = ScalarField::from_fn(&g, |x, _| 0.5 + 0.5 * (2.0 * x).cos());
        assert!(sq.lin_comb(1.0, &expected, -1.0).unwrap().max_abs() < 1e-14);
        assert!(g.index_of(9, 0).is_none());
    }

    #[test]
    fn max_abs_examples() {
        let g = grid(64);
        assert_eq!(ScalarField::constant(&g, -2.0).max_abs(), 2.0);
        assert_eq!(ScalarField::zeros(&g).max_abs(), 0.0);
        let s = ScalarField::from_fn(&g, |x, _| x.sin()).max_abs();
        assert!((0.998..=1.0).contains(&s));
    }

    #[test]
    fn norm_helpers() {
        let g = grid(32);
        let f = TensorField::identity(&g);
        assert_relative_eq!(f.l2_norm(), 2.0 * PI * 2f64.sqrt(), max_relative = 1e-13);
        assert_relative_eq!(f.max_abs().unwrap(), 2f64.sqrt(), max_relative = 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn round_trip_and_parseval(seed in any::<u64>(), log_n in 3u32..7) {
            let g = grid(1 << log_n);
            let f = random_band_limited(&g, seed, (g.n() / 2 - 1) as i64);
            let back = f.to_spectral().unwrap().to_physical().unwrap();
            let scale = f.max_abs().max(1e-300);
            prop_assert!(back.lin_comb(1.0, &f, -1.0).unwrap().max_abs() <= 1e-12 * scale.max(1.0));

            let physical: f64 = f.physical().unwrap().iter().map(|v| v * v).sum::<f64>() * g.cell_area();
            let spectral = f.l2_norm().powi(2);
            prop_assert!((physical - spectral).abs() <= 1e-10 * physical.max(1e-300));
        }

        #[test]
        fn linearity(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let g = grid(16);
            let f = random_band_limited(&g, seed, 7);
            let h = random_band_limited(&g, seed ^ 0xabcdef, 7);
            let combined = f.lin_comb(a, &h, b).unwrap().into_physical().unwrap().to_spectral().unwrap();
            let separate = f.to_spectral().unwrap().lin_comb(a, &h.to_spectral().unwrap(), b).unwrap();
            let (x, y) = (combined.spectral(), separate.spectral());
            let err = x.iter().zip(y.iter()).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
            prop_assert!(err <= 1e-12);
        }

        #[test]
        fn dealias_is_projection(seed in any::<u64>()) {
            let g = grid(32);
            let f = random_band_limited(&g, seed, 15);
            let once = f.dealias();
            let twice = once.dealias();
            prop_assert_eq!(once.spectral().into_owned(), twice.spectral().into_owned());
            prop_assert!(once.l2_norm() <= f.l2_norm() * (1.0 + 1e-14));
        }

        #[test]
        fn product_commutes(seed in any::<u64>()) {
            let g = grid(16);
            let f = random_band_limited(&g, seed, 7);
            let h = random_band_limited(&g, seed.wrapping_add(1), 7);
            let fh = f.pointwise_product(&h).unwrap();
            let hf = h.pointwise_product(&f).unwrap();
            prop_assert_eq!(fh.physical().unwrap(), hf.physical().unwrap());
        }
    }
}
