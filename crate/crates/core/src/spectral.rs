//! Differential and singular-integral operators as Fourier multipliers.
//!
//! Odd-order derivatives use wavenumbers with the Nyquist mode zeroed (see
//! [`GridSpec::deriv_wavenumber`]); the Leray projector is built from the
//! same wavenumbers so that `divergence ∘ leray_project` vanishes to
//! round-off on every mode, Nyquist included.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::fields::{dealias_in_place, FieldError, GridSpec, ScalarField, TensorField, VectorField};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Divergence tolerance above which `pressure_gradient` raises a warning.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum OpsError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("Sobolev order must be finite and non-negative, got {0}")]
    InvalidOrder(f64),
    #[error("commutator bound has zero right-hand side but lhs = {lhs:e}")]
    InequalityViolation { lhs: f64 },
}

/// Which fractional multiplier a [`SobolevOrder`] selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SobolevKind {
    /// `Λˢ = (−Δ)^{s/2}`, multiplier `|k|ˢ`.
    Homogeneous,
    /// `Jˢ = (1 − Δ)^{s/2}`, multiplier `(1 + |k|²)^{s/2}`.
    Inhomogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolevOrder {
    s: f64,
    kind: SobolevKind,
}

impl SobolevOrder {
    pub fn new(s: f64) -> Result<Self, OpsError> {
        if !s.is_finite() || s < 0.0 {
            return Err(OpsError::InvalidOrder(s));
        }
        Ok(Self {
            s,
            kind: SobolevKind::Homogeneous,
        })
    }

    pub fn inhomogeneous(self) -> Self {
        Self {
            kind: SobolevKind::Inhomogeneous,
            ..self
        }
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn kind(&self) -> SobolevKind {
        self.kind
    }
}

// ---------------------------------------------------------------------------
// Coefficient-level kernels, shared with the solver and diagnostics.

/// `∂_axis` of a spectral array.
pub fn deriv_coeffs(grid: &GridSpec, c: &[Complex64], axis: usize) -> Vec<Complex64> {
    let n = grid.n();
    c.iter()
        .enumerate()
        .map(|(idx, z)| {
            let m = if axis == 0 { idx / n } else { idx % n };
            I * grid.deriv_wavenumber(m) * z
        })
        .collect()
}

/// In-place Leray projection `v̂ ↦ v̂ − k(k·v̂)/|k|²`; `k = 0` passes through.
/// Returns the squared L² norm of the removed gradient part.
pub fn leray_in_place(grid: &GridSpec, c1: &mut [Complex64], c2: &mut [Complex64]) -> f64 {
    let n = grid.n();
    let mut removed = 0.0;
    for idx in 0..c1.len() {
        let k1 = grid.deriv_wavenumber(idx / n);
        let k2 = grid.deriv_wavenumber(idx % n);
        let kk = k1 * k1 + k2 * k2;
        if kk == 0.0 {
            continue;
        }
        let dot = (c1[idx] * k1 + c2[idx] * k2) / kk;
        let (r1, r2) = (dot * k1, dot * k2);
        removed += r1.norm_sqr() + r2.norm_sqr();
        c1[idx] -= r1;
        c2[idx] -= r2;
    }
    4.0 * PI * PI * removed
}

/// Gradient-part projector `I − P`, i.e. `k(k·v̂)/|k|²`.
fn gradient_part(grid: &GridSpec, c1: &[Complex64], c2: &[Complex64]) -> [Vec<Complex64>; 2] {
    let n = grid.n();
    let mut out = [vec![ZERO; c1.len()], vec![ZERO; c1.len()]];
    for idx in 0..c1.len() {
        let k1 = grid.deriv_wavenumber(idx / n);
        let k2 = grid.deriv_wavenumber(idx % n);
        let kk = k1 * k1 + k2 * k2;
        if kk == 0.0 {
            continue;
        }
        let dot = (c1[idx] * k1 + c2[idx] * k2) / kk;
        out[0][idx] = dot * k1;
        out[1][idx] = dot * k2;
    }
    out
}

fn fractional_multiplier(grid: &GridSpec, idx: usize, s: f64, kind: SobolevKind) -> f64 {
    let kk = grid.k_squared(idx);
    match kind {
        SobolevKind::Homogeneous if kk == 0.0 => 0.0,
        SobolevKind::Homogeneous => kk.powf(0.5 * s),
        SobolevKind::Inhomogeneous => (1.0 + kk).powf(0.5 * s),
    }
}

fn physical_from(grid: &GridSpec, c: &[Complex64]) -> ScalarField {
    ScalarField::from_physical(grid, grid.inverse_real(c)).expect("grid-sized")
}

// ---------------------------------------------------------------------------
// Field-level operators.

pub fn gradient(f: &ScalarField) -> VectorField {
    let grid = f.grid();
    let c = f.spectral();
    VectorField::new(
        physical_from(grid, &deriv_coeffs(grid, &c, 0)),
        physical_from(grid, &deriv_coeffs(grid, &c, 1)),
    )
    .expect("same grid")
}

pub fn divergence(v: &VectorField) -> ScalarField {
    let grid = v.grid();
    let d1 = deriv_coeffs(grid, &v.component(0).spectral(), 0);
    let d2 = deriv_coeffs(grid, &v.component(1).spectral(), 1);
    let sum: Vec<Complex64> = d1.iter().zip(&d2).map(|(a, b)| a + b).collect();
    physical_from(grid, &sum)
}

/// Scalar curl `∂₁v₂ − ∂₂v₁`.
pub fn curl(v: &VectorField) -> ScalarField {
    let grid = v.grid();
    let a = deriv_coeffs(grid, &v.component(1).spectral(), 0);
    let b = deriv_coeffs(grid, &v.component(0).spectral(), 1);
    let diff: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    physical_from(grid, &diff)
}

pub fn laplacian(f: &ScalarField) -> ScalarField {
    let grid = f.grid();
    let c: Vec<Complex64> = f
        .spectral()
        .iter()
        .enumerate()
        .map(|(idx, z)| -grid.k_squared(idx) * z)
        .collect();
    physical_from(grid, &c)
}

pub fn leray_project(v: &VectorField) -> VectorField {
    let grid = v.grid();
    let mut c1 = v.component(0).spectral().into_owned();
    let mut c2 = v.component(1).spectral().into_owned();
    leray_in_place(grid, &mut c1, &mut c2);
    VectorField::new(physical_from(grid, &c1), physical_from(grid, &c2)).expect("same grid")
}

/// `(2π)² Σ_k v̂(k)·conj(ŵ(k))`, the L² inner product of two vector fields.
pub fn inner(v: &VectorField, w: &VectorField) -> f64 {
    (0..2)
        .map(|i| {
            let (a, b) = (v.component(i).spectral(), w.component(i).spectral());
            a.iter().zip(b.iter()).map(|(x, y)| (x * y.conj()).re).sum::<f64>()
        })
        .sum::<f64>()
        * 4.0
        * PI
        * PI
}

/// `a·∇b`, i.e. component `j` is `a_l ∂_l b_j`. With `dealiased` the
/// inputs are truncated by the 2/3-rule before the product is formed and
/// the result is truncated again; otherwise the product is taken on the
/// raw samples. Returned in spectral representation.
pub fn directional_derivative(a: &VectorField, b: &VectorField, dealiased: bool) -> VectorField {
    let grid = a.grid();
    let prep = |f: &ScalarField| {
        let mut c = f.spectral().into_owned();
        if dealiased {
            dealias_in_place(grid, &mut c);
        }
        c
    };
    let a_phys: Vec<Vec<f64>> = (0..2).map(|l| grid.inverse_real(&prep(a.component(l)))).collect();
    let comps = (0..2).map(|j| {
        let bj = prep(b.component(j));
        let mut acc = vec![0.0; grid.len()];
        for (l, al) in a_phys.iter().enumerate() {
            let d = grid.inverse_real(&deriv_coeffs(grid, &bj, l));
            for ((o, x), y) in acc.iter_mut().zip(al).zip(&d) {
                *o += x * y;
            }
        }
        let mut c = grid.forward(&acc);
        if dealiased {
            dealias_in_place(grid, &mut c);
        }
        ScalarField::from_spectral(grid, c).expect("grid-sized")
    });
    let [c1, c2]: [ScalarField; 2] = comps.collect::<Vec<_>>().try_into().unwrap();
    VectorField::new(c1, c2).expect("same grid")
}

/// Net nonlinear forcing `F_{·i}·∇F_{·i} − u·∇u` whose gradient part the
/// pressure balances.
fn pressure_source(u: &VectorField, f: &TensorField) -> Result<VectorField, FieldError> {
    let mut w = directional_derivative(u, u, true).map(|c| c.scaled(-1.0));
    for col in f.columns() {
        w = w.lin_comb(1.0, &directional_derivative(col, col, true), 1.0)?;
    }
    Ok(w)
}

/// Pressure gradient together with the constraint check on its inputs.
#[derive(Debug, Clone)]
pub struct PressureGradient {
    pub grad_p: VectorField,
    /// Largest max-norm divergence among `u`, `F_{·1}`, `F_{·2}`.
    pub constraint_defect: f64,
    /// Set when `constraint_defect` exceeds [`CONSTRAINT_TOLERANCE`].
    pub warning: bool,
}

fn constraint_defect(u: &VectorField, f: &TensorField) -> f64 {
    std::iter::once(u)
        .chain(f.columns().iter())
        .map(|v| divergence(v).max_abs())
        .fold(0.0, f64::max)
}

/// `∇p = RR·(F_{·i}·∇F_{·i} − u·∇u)` with the Riesz pair `R_j R_l` acting as
/// the multiplier `k_j k_l / |k|²`; equivalently `(I − P)` of the net
/// nonlinear forcing. The `k = 0` mode is zero.
pub fn pressure_gradient(u: &VectorField, f: &TensorField) -> Result<PressureGradient, FieldError> {
    let grid = u.grid();
    crate::fields::check_grid(grid, f.grid())?;
    let defect = constraint_defect(u, f);
    let w = pressure_source(u, f)?;
    let [g1, g2] = gradient_part(grid, &w.component(0).spectral(), &w.component(1).spectral());
    Ok(PressureGradient {
        grad_p: VectorField::new(physical_from(grid, &g1), physical_from(grid, &g2))?,
        constraint_defect: defect,
        warning: defect > CONSTRAINT_TOLERANCE,
    })
}

/// Pressure from the Poisson problem `Δp = ∇·(F_{·i}·∇F_{·i} − u·∇u)`, mean
/// zero. Independent of the projector route in [`pressure_gradient`].
pub fn pressure_poisson(u: &VectorField, f: &TensorField) -> Result<ScalarField, FieldError> {
    let grid = u.grid();
    crate::fields::check_grid(grid, f.grid())?;
    let w = pressure_source(u, f)?;
    let div = divergence(&w);
    let c: Vec<Complex64> = div
        .spectral()
        .iter()
        .enumerate()
        .map(|(idx, z)| {
            let kk = grid.k_squared(idx);
            if kk == 0.0 {
                ZERO
            } else {
                -z / kk
            }
        })
        .collect();
    Ok(physical_from(grid, &c))
}

pub fn lambda_s(f: &ScalarField, order: SobolevOrder) -> ScalarField {
    let grid = f.grid();
    let c: Vec<Complex64> = f
        .spectral()
        .iter()
        .enumerate()
        .map(|(idx, z)| fractional_multiplier(grid, idx, order.s, order.kind) * z)
        .collect();
    physical_from(grid, &c)
}

/// `((2π)² Σ_k (1+|k|²)ˢ |f̂(k)|²)^{1/2}`.
pub fn sobolev_norm(f: &ScalarField, s: f64) -> f64 {
    let grid = f.grid();
    let sum: f64 = f
        .spectral()
        .iter()
        .enumerate()
        .map(|(idx, z)| (1.0 + grid.k_squared(idx)).powf(s) * z.norm_sqr())
        .sum();
    (4.0 * PI * PI * sum).sqrt()
}

/// Both sides of the commutator bound at the `(p₁,p₂,p₃,p₄) = (∞,2,2,∞)`
/// instantiation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommutatorReport {
    pub s: f64,
    /// `‖Λˢ(fg) − fΛˢg‖₂`
    pub lhs: f64,
    /// `‖∇f‖_∞‖Λ^{s−1}g‖₂ + ‖Λˢf‖₂‖g‖_∞`
    pub rhs: f64,
    pub ratio: f64,
}

/// Evaluates `[Λˢ, f]g` against its Kato–Ponce bound. Inputs should be
/// band-limited below the dealiasing cutoff so that the product is exact on
/// the grid.
pub fn commutator_check(order: SobolevOrder, f: &ScalarField, g: &ScalarField) -> Result<CommutatorReport, OpsError> {
    let grid = f.grid();
    crate::fields::check_grid(grid, g.grid())?;
    let s = order.s();
    let kind = SobolevKind::Homogeneous;
    let f_phys = f.physical()?.into_owned();
    let g_phys = g.physical()?.into_owned();

    let fg: Vec<f64> = f_phys.iter().zip(&g_phys).map(|(a, b)| a * b).collect();
    let fg_hat = grid.forward(&fg);
    let g_hat = g.spectral();
    let lam = |c: &[Complex64], s: f64| -> Vec<Complex64> {
        c.iter()
            .enumerate()
            .map(|(idx, z)| fractional_multiplier(grid, idx, s, kind) * z)
            .collect()
    };
    let lam_fg = grid.inverse_real(&lam(&fg_hat, s));
    let lam_g = grid.inverse_real(&lam(&g_hat, s));
    let comm: Vec<f64> = lam_fg
        .iter()
        .zip(f_phys.iter().zip(&lam_g))
        .map(|(a, (fv, lg))| a - fv * lg)
        .collect();
    let lhs = ScalarField::from_physical(grid, comm)?.l2_norm();

    let grad_f = gradient(f).max_abs()?;
    // Λ^{s−1} with the k = 0 mode dropped; well defined for s ≥ 0.
    let lam_sm1_g = l2_of_coeffs(&lam(&g_hat, s - 1.0));
    let lam_s_f = l2_of_coeffs(&lam(&f.spectral(), s));
    let g_inf = crate::fields::max_abs(&g_phys);
    let rhs = grad_f * lam_sm1_g + lam_s_f * g_inf;

    if rhs == 0.0 {
        if lhs > 1e-10 {
            return Err(OpsError::InequalityViolation { lhs });
        }
        return Ok(CommutatorReport {
            s,
            lhs,
            rhs,
            ratio: 0.0,
        });
    }
    Ok(CommutatorReport {
        s,
        lhs,
        rhs,
        ratio: lhs / rhs,
    })
}

fn l2_of_coeffs(c: &[Complex64]) -> f64 {
    (4.0 * PI * PI * c.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n).unwrap()
    }

    fn diff_max(a: &ScalarField, b: &ScalarField) -> f64 {
        a.lin_comb(1.0, b, -1.0).unwrap().max_abs()
    }

    fn vdiff_max(a: &VectorField, b: &VectorField) -> f64 {
        (0..2)
            .map(|i| diff_max(a.component(i), b.component(i)))
            .fold(0.0, f64::max)
    }

    fn random_field(grid: &GridSpec, rng: &mut impl Rng, kmax: i64) -> ScalarField {
        let modes: Vec<(f64, f64, f64, f64)> = (0..10)
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
            modes.iter().map(|(a, b, c, p)| c * (a * x + b * y + p).cos()).sum()
        })
    }

    fn random_vector(grid: &GridSpec, seed: u64, kmax: i64) -> VectorField {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        VectorField::new(random_field(grid, &mut rng, kmax), random_field(grid, &mut rng, kmax)).unwrap()
    }

    fn taylor_green(g: &GridSpec) -> VectorField {
        VectorField::from_fns(g, |x, y| x.sin() * y.cos(), |x, y| -x.cos() * y.sin())
    }

    #[test]
    fn gradient_examples() {
        let g = grid(32);
        let grad = gradient(&ScalarField::from_fn(&g, |x, _| x.sin()));
        assert!(diff_max(grad.component(0), &ScalarField::from_fn(&g, |x, _| x.cos())) < 1e-13);
        assert!(grad.component(1).max_abs() < 1e-13);
        let c = gradient(&ScalarField::constant(&g, 4.0));
        assert!(c.max_abs().unwrap() < 1e-13);

        let f = ScalarField::from_fn(&g, |x, y| x.sin() * y.sin());
        assert!(diff_max(&divergence(&gradient(&f)), &laplacian(&f)) < 1e-12);
    }

    #[test]
    fn divergence_examples() {
        let g = grid(32);
        let v = VectorField::from_fns(&g, |_, y| y.sin(), |x, _| x.sin());
        assert!(divergence(&v).max_abs() < 1e-13);
        let c = VectorField::from_fns(&g, |_, _| 1.5, |_, _| -2.0);
        assert!(divergence(&c).max_abs() < 1e-13);
    }

    #[test]
    fn laplacian_examples() {
        let g = grid(32);
        let f = ScalarField::from_fn(&g, |x, _| x.cos());
        assert!(diff_max(&laplacian(&f), &f.scaled(-1.0)) < 1e-13);
        assert!(laplacian(&ScalarField::constant(&g, 2.0)).max_abs() < 1e-13);
        let h = ScalarField::from_fn(&g, |_, y| (2.0 * y).cos());
        assert!(diff_max(&laplacian(&h), &h.scaled(-4.0)) < 1e-12);
    }

    #[test]
    fn leray_examples() {
        let g = grid(32);
        let f = ScalarField::from_fn(&g, |x, y| (x + 2.0 * y).sin() + (3.0 * x).cos());
        assert!(leray_project(&gradient(&f)).max_abs().unwrap() < 1e-13);
        let tg = taylor_green(&g);
        assert!(vdiff_max(&leray_project(&tg), &tg) < 1e-12);
        let v = random_vector(&g, 5, 15);
        let once = leray_project(&v);
        assert!(vdiff_max(&leray_project(&once), &once) < 1e-12);
    }

    #[test]
    fn leray_handles_nyquist() {
        // A field with Nyquist content still projects to exactly zero
        // divergence.
        let g = grid(16);
        let v = VectorField::from_fns(
            &g,
            |x, y| (8.0 * x).cos() * (3.0 * y).cos(),
            |x, y| (8.0 * x).cos() * (3.0 * y).sin(),
        );
        assert!(divergence(&leray_project(&v)).max_abs() < 1e-12);
    }

    #[test]
    fn pressure_vanishes_for_rest_state() {
        let g = grid(16);
        let u = VectorField::zeros(&g);
        let f = TensorField::constant(&g, [[1.3, 0.2], [-0.4, 0.9]]);
        let p = pressure_gradient(&u, &f).unwrap();
        assert!(p.grad_p.max_abs().unwrap() < 1e-14);
        assert!(!p.warning);
    }

    #[test]
    fn pressure_taylor_green_two_routes() {
        let g = grid(32);
        let u = taylor_green(&g);
        let f = TensorField::identity(&g);
        let p = pressure_gradient(&u, &f).unwrap();

        // hand formula: u·∇u = ½(sin 2x₁, sin 2x₂) is itself a gradient
        let expected = VectorField::from_fns(&g, |x, _| -0.5 * (2.0 * x).sin(), |_, y| -0.5 * (2.0 * y).sin());
        assert!(vdiff_max(&p.grad_p, &expected) < 1e-12);

        let neg_adv = directional_derivative(&u, &u, true).map(|c| c.scaled(-1.0));
        let gp = neg_adv.lin_comb(1.0, &leray_project(&neg_adv), -1.0).unwrap();
        assert!(vdiff_max(&p.grad_p, &gp) < 1e-12);

        let poisson = gradient(&pressure_poisson(&u, &f).unwrap());
        assert!(vdiff_max(&p.grad_p, &poisson) < 1e-10);

        let c = curl(&p.grad_p);
        assert!(c.max_abs() < 1e-10);
        assert!(p.grad_p.component(0).mean().abs() < 1e-14);
    }

    #[test]
    fn pressure_warns_on_divergent_input() {
        let g = grid(16);
        let u = VectorField::from_fns(&g, |x, _| x.sin(), |_, _| 0.0);
        let p = pressure_gradient(&u, &TensorField::identity(&g)).unwrap();
        assert!(p.warning);
        assert!(p.constraint_defect > 0.5);
    }

    #[test]
    fn lambda_examples() {
        let g = grid(32);
        let f = ScalarField::from_fn(&g, |x, y| (x - y).sin() + (3.0 * y).cos());
        let zero = SobolevOrder::new(0.0).unwrap();
        assert!(diff_max(&lambda_s(&f, zero), &f) < 1e-13);

        let c = ScalarField::from_fn(&g, |x, _| x.cos());
        let two = SobolevOrder::new(2.0).unwrap();
        assert!(diff_max(&lambda_s(&c, two), &c) < 1e-13);
        assert!(diff_max(&lambda_s(&f, two), &laplacian(&f).scaled(-1.0)) < 1e-11);

        let one = SobolevOrder::new(1.0).unwrap();
        assert!(diff_max(&lambda_s(&lambda_s(&f, one), one), &lambda_s(&f, two)) < 1e-12);

        let j = lambda_s(&c, two.inhomogeneous());
        assert!(diff_max(&j, &c.scaled(2.0)) < 1e-13);

        assert!(SobolevOrder::new(-0.5).is_err());
        assert!(SobolevOrder::new(f64::NAN).is_err());
    }

    #[test]
    fn sobolev_examples() {
        let g = grid(32);
        let f = ScalarField::from_fn(&g, |x, y| (2.0 * x).sin() * y.cos() + 0.3);
        assert_relative_eq!(sobolev_norm(&f, 0.0), f.l2_norm(), max_relative = 1e-13);

        // cos(x₁): ‖f‖₂² + ‖∇f‖₂² = ∫cos² + ∫sin² = 4π², by quadrature
        let c = ScalarField::from_fn(&g, |x, _| x.cos());
        let quad: f64 = {
            let v = c.physical().unwrap();
            let d = gradient(&c);
            let dv = d.component(0).physical().unwrap();
            (v.iter().map(|a| a * a).sum::<f64>() + dv.iter().map(|a| a * a).sum::<f64>()) * g.cell_area()
        };
        assert_relative_eq!(sobolev_norm(&c, 1.0), quad.sqrt(), max_relative = 1e-13);
        assert_relative_eq!(sobolev_norm(&c, 1.0), 2.0 * PI, max_relative = 1e-13);

        let norms: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 3.5].iter().map(|&s| sobolev_norm(&f, s)).collect();
        assert!(norms.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn commutator_with_constant_vanishes() {
        let g = grid(32);
        let f = ScalarField::constant(&g, 2.5);
        let h = ScalarField::from_fn(&g, |x, y| (x + y).sin());
        let r = commutator_check(SobolevOrder::new(2.0).unwrap(), &f, &h).unwrap();
        assert!(r.lhs < 1e-12);
    }

    #[test]
    fn commutator_two_mode_hand_expansion() {
        // Λ²(cos²x₁) − cos x₁ Λ² cos x₁ = 2cos 2x₁ − (½ + ½cos 2x₁)
        //                              = −½ + (3/2) cos 2x₁
        // ‖·‖₂² = (2π)² (1/4 + 9/8)
        let g = grid(32);
        let c = ScalarField::from_fn(&g, |x, _| x.cos());
        let r = commutator_check(SobolevOrder::new(2.0).unwrap(), &c, &c).unwrap();
        let expected = 2.0 * PI * (11.0f64 / 8.0).sqrt();
        assert_relative_eq!(r.lhs, expected, max_relative = 1e-12);
        // ‖∇f‖_∞ = 1, ‖Λg‖₂ = √2 π, ‖Λ²f‖₂ = √2 π, ‖g‖_∞ = 1
        assert_relative_eq!(r.rhs, 2.0 * 2f64.sqrt() * PI, max_relative = 1e-12);
    }

    #[test]
    fn commutator_zero_rhs_nonzero_lhs_is_error() {
        // g ≡ 0 but f non-constant gives zero on both sides: fine.
        let g = grid(16);
        let f = ScalarField::from_fn(&g, |x, _| x.sin());
        let r = commutator_check(SobolevOrder::new(1.5).unwrap(), &f, &ScalarField::zeros(&g)).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.ratio, 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn leray_is_divergence_free_and_self_adjoint(seed in any::<u64>()) {
            let g = grid(32);
            let v = random_vector(&g, seed, 16);
            let w = random_vector(&g, seed ^ 0x5555, 16);
            let pv = leray_project(&v);
            prop_assert!(divergence(&pv).max_abs() <= 1e-12);
            let a = inner(&pv, &w);
            let b = inner(&v, &leray_project(&w));
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }

        #[test]
        fn pressure_routes_agree(seed in any::<u64>()) {
            let g = grid(32);
            let u = leray_project(&random_vector(&g, seed, 6));
            let c1 = leray_project(&random_vector(&g, seed.wrapping_add(7), 4));
            let c2 = leray_project(&random_vector(&g, seed.wrapping_add(9), 4));
            let f = TensorField::new(c1, c2).unwrap();
            let p = pressure_gradient(&u, &f).unwrap();
            let q = gradient(&pressure_poisson(&u, &f).unwrap());
            let scale = p.grad_p.max_abs().unwrap().max(1.0);
            prop_assert!(vdiff_max(&p.grad_p, &q) <= 1e-10 * scale);
            prop_assert!(!p.warning);
        }
    }
}
