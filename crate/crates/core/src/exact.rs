//! Closed-form reference solutions.
//!
//! The linear blowup family is an explicit solution on ℝ²:
//!
//! ```text
//! s(t) = 1 − c f₀ t,  c = (α+β)/(α−β),  a(t) = f₀ / s(t)
//! u    = (a x₁, −a x₂)
//! p    = a² (α x₁² − β x₂²) / (β − α)
//! F    = diag(|s|^{−1/c}, |s|^{1/c})
//! ```
//!
//! It blows up at `t* = 1/(c f₀)` when `c f₀ > 0`. A variant with both
//! velocity components positive and `F₂₂ = |s|^c` is kept behind
//! [`Fidelity::Printed`]; it does not satisfy the equations.
//!
//! Because it grows linearly in `x` it never enters the periodic solver; it is
//! used through pointwise residuals, the matrix ODE `dF/dt = ∇u F`, and the
//! BKM integral.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Matrix2;
use thiserror::Error;

use crate::diagnostics::{operator_norm, DiagnosticsRecord, LpExponent};
use crate::fields::{GridSpec, ScalarField, TensorField, VectorField};
use crate::solver::{taylor_green, ForcingSpec, State};
use crate::spectral::{deriv_coeffs, directional_derivative, laplacian, leray_project};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("evaluation at the pole t = {t}")]
    Pole { t: f64 },
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("velocity gradient is not trace-free (trace {0:e})")]
    NotTraceFree(f64),
}

pub const TRACE_TOLERANCE: f64 = 1e-12;

/// Which algebraic form of the blowup family to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fidelity {
    #[default]
    Corrected,
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZghParams {
    alpha: f64,
    beta: f64,
    f0: f64,
}

impl ZghParams {
    pub fn new(alpha: f64, beta: f64, f0: f64) -> Result<Self, ExactError> {
        if ![alpha, beta, f0].iter().all(|v| v.is_finite()) {
            return Err(ExactError::InvalidParams("parameters must be finite".into()));
        }
        if alpha + beta == 0.0 {
            return Err(ExactError::InvalidParams("alpha + beta must be nonzero".into()));
        }
        if alpha - beta == 0.0 {
            return Err(ExactError::InvalidParams("alpha - beta must be nonzero".into()));
        }
        Ok(Self { alpha, beta, f0 })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn f0(&self) -> f64 {
        self.f0
    }

    pub fn c(&self) -> f64 {
        (self.alpha + self.beta) / (self.alpha - self.beta)
    }

    pub fn blows_up(&self) -> bool {
        self.c() * self.f0 > 0.0
    }

    /// `(α−β)/((α+β)f₀)`; infinite when there is no blowup.
    pub fn t_star(&self) -> f64 {
        if self.blows_up() {
            (self.alpha - self.beta) / ((self.alpha + self.beta) * self.f0)
        } else {
            f64::INFINITY
        }
    }

    /// `1 − c f₀ t`, erroring at or past the pole.
    pub fn denominator(&self, t: f64) -> Result<f64, ExactError> {
        let s = 1.0 - self.c() * self.f0 * t;
        if s <= 0.0 {
            return Err(ExactError::Pole { t });
        }
        Ok(s)
    }

    /// `a(t) = f₀ / (1 − c f₀ t)`.
    pub fn a(&self, t: f64) -> Result<f64, ExactError> {
        Ok(self.f0 / self.denominator(t)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZghFields {
    pub gradu: Matrix2<f64>,
    pub f: Matrix2<f64>,
    /// `p = pressure[0] x₁² + pressure[1] x₂²`
    pub pressure: [f64; 2],
}

/// Corrected blowup-family fields at time `t`.
pub fn zgh_fields(p: &ZghParams, t: f64) -> Result<ZghFields, ExactError> {
    zgh_fields_with(p, t, Fidelity::Corrected)
}

pub fn zgh_fields_with(p: &ZghParams, t: f64, fidelity: Fidelity) -> Result<ZghFields, ExactError> {
    let s = p.denominator(t)?;
    let a = p.f0 / s;
    let c = p.c();
    let (u22, f22) = match fidelity {
        Fidelity::Corrected => (-a, s.powf(1.0 / c)),
        Fidelity::Printed => (a, s.powf(c)),
    };
    let k = a * a / (p.beta - p.alpha);
    Ok(ZghFields {
        gradu: Matrix2::new(a, 0.0, 0.0, u22),
        f: Matrix2::new(s.powf(-1.0 / c), 0.0, 0.0, f22),
        pressure: [p.alpha * k, -p.beta * k],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZghResidual {
    pub momentum: [f64; 2],
    pub deformation: Matrix2<f64>,
    pub div_u: f64,
}

impl ZghResidual {
    pub fn max_abs(&self) -> f64 {
        self.momentum
            .iter()
            .chain(self.deformation.iter())
            .fold(self.div_u.abs(), |m, v| m.max(v.abs()))
    }
}

/// Substitutes the family into the momentum, deformation and
/// incompressibility equations at `(t, x)` using analytic derivatives.
///
/// For a linear velocity `u = G x` with spatially constant `F`: `Δu = 0`,
/// `∇·(FFᵗ) = 0`, `u·∇u = G² x` and `u·∇F = 0`.
pub fn zgh_residual(p: &ZghParams, t: f64, x: [f64; 2], fidelity: Fidelity) -> Result<ZghResidual, ExactError> {
    let fields = zgh_fields_with(p, t, fidelity)?;
    let s = p.denominator(t)?;
    let c = p.c();
    // da/dt = c a², the time derivative of every entry of ∇u
    let a = p.f0 / s;
    let da = c * a * a;
    let dgradu = match fidelity {
        Fidelity::Corrected => Matrix2::new(da, 0.0, 0.0, -da),
        Fidelity::Printed => Matrix2::new(da, 0.0, 0.0, da),
    };
    let ds = -c * p.f0;
    let df22 = match fidelity {
        Fidelity::Corrected => (1.0 / c) * s.powf(1.0 / c - 1.0) * ds,
        Fidelity::Printed => c * s.powf(c - 1.0) * ds,
    };
    let df = Matrix2::new((-1.0 / c) * s.powf(-1.0 / c - 1.0) * ds, 0.0, 0.0, df22);

    let xv = nalgebra::Vector2::new(x[0], x[1]);
    let g = fields.gradu;
    let grad_p = nalgebra::Vector2::new(2.0 * fields.pressure[0] * x[0], 2.0 * fields.pressure[1] * x[1]);
    let momentum = dgradu * xv + g * g * xv + grad_p;
    Ok(ZghResidual {
        momentum: [momentum[0], momentum[1]],
        deformation: df - g * fields.f,
        div_u: g.trace(),
    })
}

/// `∫₀ᵀ |a(s)| ds = |ln(1 − c f₀ T)| / |c|`; `+∞` at or past a blowup time.
pub fn zgh_bkm_integral(p: &ZghParams, t: f64) -> Result<f64, ExactError> {
    if t < 0.0 {
        return Err(ExactError::NegativeTime(t));
    }
    if t >= p.t_star() {
        return Ok(f64::INFINITY);
    }
    let s = 1.0 - p.c() * p.f0 * t;
    Ok(s.ln().abs() / p.c().abs())
}

/// Spatially linear state `u = A x` with constant deformation `F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearProfileState {
    pub a: Matrix2<f64>,
    pub f: Matrix2<f64>,
    pub t: f64,
}

impl LinearProfileState {
    pub fn new(a: Matrix2<f64>, f: Matrix2<f64>, t: f64) -> Result<Self, ExactError> {
        if a.trace().abs() > TRACE_TOLERANCE {
            return Err(ExactError::NotTraceFree(a.trace()));
        }
        Ok(Self { a, f, t })
    }

    pub fn identity(t: f64) -> Self {
        Self {
            a: Matrix2::zeros(),
            f: Matrix2::identity(),
            t,
        }
    }
}

fn stretch(a: f64) -> Matrix2<f64> {
    Matrix2::new(a, 0.0, 0.0, -a)
}

/// One RK4 step of `dF/dt = diag(a(t), −a(t)) F`.
pub fn ode_reduce_step(state: &LinearProfileState, a_of_t: impl Fn(f64) -> f64, dt: f64) -> LinearProfileState {
    let t = state.t;
    let gen = |tau: f64| stretch(a_of_t(tau));
    let f = state.f;
    let k1 = gen(t) * f;
    let k2 = gen(t + 0.5 * dt) * (f + k1 * (0.5 * dt));
    let k3 = gen(t + 0.5 * dt) * (f + k2 * (0.5 * dt));
    let k4 = gen(t + dt) * (f + k3 * dt);
    LinearProfileState {
        a: gen(t + dt),
        f: f + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0),
        t: t + dt,
    }
}

/// Integrates the reduction from `state` to `t_end` in steps of at most
/// `dt`, returning every intermediate state (including the first).
pub fn ode_reduce_trajectory(
    state: LinearProfileState,
    a_of_t: impl Fn(f64) -> f64,
    dt: f64,
    t_end: f64,
) -> Vec<LinearProfileState> {
    let steps = ((t_end - state.t) / dt).round().max(0.0) as usize;
    let h = if steps == 0 {
        0.0
    } else {
        (t_end - state.t) / steps as f64
    };
    let mut out = Vec::with_capacity(steps + 1);
    let mut s = LinearProfileState {
        a: stretch(a_of_t(state.t)),
        ..state
    };
    out.push(s);
    for i in 0..steps {
        s = ode_reduce_step(&s, &a_of_t, h);
        s.t = state.t + (i + 1) as f64 * h;
        out.push(s);
    }
    out
}

/// Diagnostics history of a spatially constant trajectory viewed on the
/// 2π-torus: column norms are the constant column lengths times the torus
/// measure, `‖∇u‖_∞` is the operator norm of `A`, and the BKM integral is
/// accumulated by the trapezoidal rule.
pub fn linear_profile_history(trajectory: &[LinearProfileState]) -> Vec<DiagnosticsRecord> {
    let area = 4.0 * PI * PI;
    let mut out: Vec<DiagnosticsRecord> = Vec::with_capacity(trajectory.len());
    for s in trajectory {
        let mut r = DiagnosticsRecord {
            t: s.t,
            linf_gradu: operator_norm([[s.a[(0, 0)], s.a[(0, 1)]], [s.a[(1, 0)], s.a[(1, 1)]]]),
            ..Default::default()
        };
        for k in 0..2 {
            let col = s.f.column(k).norm();
            for p in LpExponent::ALL {
                let w = if p == LpExponent::Inf {
                    1.0
                } else {
                    area.powf(1.0 / p.value())
                };
                r.set_lp_f_column(k, p, col * w);
            }
        }
        let frob = s.f.norm();
        r.lp_f_2 = frob * area.sqrt();
        r.lp_f_4 = frob * area.powf(0.25);
        r.lp_f_6 = frob * area.powf(1.0 / 6.0);
        r.lp_f_inf = frob;
        r.l2_f = r.lp_f_2;
        if let Some(prev) = out.last() {
            r.bkm = prev.bkm + 0.5 * (r.t - prev.t) * (prev.linf_gradu + r.linf_gradu);
        }
        out.push(r);
    }
    out
}

/// How the manufactured amplitudes vary in time.
#[derive(Debug, Clone, Copy, PartialEq)]
enum TimeProfile {
    Zero,
    Exponential(f64),
    Cosine,
}

impl TimeProfile {
    fn value(self, t: f64) -> f64 {
        match self {
            TimeProfile::Zero => 0.0,
            TimeProfile::Exponential(rate) => (rate * t).exp(),
            TimeProfile::Cosine => t.cos(),
        }
    }

    fn derivative(self, t: f64) -> f64 {
        match self {
            TimeProfile::Zero => 0.0,
            TimeProfile::Exponential(rate) => rate * (rate * t).exp(),
            TimeProfile::Cosine => -t.sin(),
        }
    }
}

/// Analytic field families available for manufactured runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalyticChoice {
    /// `u = 0`, `F = I`.
    SteadyIdentity,
    /// Decaying Taylor–Green velocity with `F = I`.
    TaylorGreenDecay,
    /// Analytic but not band-limited: `u = cos t · U`,
    /// `F_{·k} = e_k + cos t · G_k`, with `U`, `G_k` perpendicular gradients
    /// of Poisson-kernel stream functions.
    Smooth,
}

/// Poisson-kernel radius of [`AnalyticChoice::Smooth`]; Fourier
/// coefficients decay like `r^|k|`.
pub const SMOOTH_RADIUS: f64 = 0.3;
const SMOOTH_U_AMPLITUDE: f64 = 0.5;
const SMOOTH_F_AMPLITUDE: f64 = 0.2;

/// Derivative of `(1−r²)/(1−2r cos x+r²)`.
fn poisson_kernel_derivative(x: f64) -> f64 {
    let r = SMOOTH_RADIUS;
    let d = 1.0 - 2.0 * r * x.cos() + r * r;
    -2.0 * r * (1.0 - r * r) * x.sin() / (d * d)
}

pub type AnalyticFn = Arc<dyn Fn(f64) -> State + Send + Sync>;

pub struct Manufactured {
    pub initial: State,
    pub forcing: ForcingSpec,
    pub analytic: AnalyticFn,
}

/// Builds a forced problem whose exact solution is the chosen analytic
/// pair. With `u = θ(t)U`, `F_{·k} = e_k + φ(t)G_k`:
///
/// ```text
/// g_u   = P[θ'U + θ² U·∇U − νθΔU − φ Σ_k ∂_k G_k − φ² Σ_k G_k·∇G_k]
/// g_F,k = φ'G_k + θφ (U·∇G_k − G_k·∇U) − θ ∂_k U
/// ```
///
/// Both forcings are Leray-projected: the solver projects the momentum
/// right-hand side anyway, and the exact `g_F` is divergence-free so the
/// projection only strips aliasing error from the products. All spatial building blocks are evaluated
/// spectrally on `grid` once.
pub fn manufactured(grid: &GridSpec, nu: f64, choice: AnalyticChoice) -> Manufactured {
    let zero = || VectorField::zeros(grid);
    let (u_shape, g_shapes, theta, phi) = match choice {
        AnalyticChoice::SteadyIdentity => (zero(), [zero(), zero()], TimeProfile::Zero, TimeProfile::Zero),
        AnalyticChoice::TaylorGreenDecay => (
            taylor_green(grid),
            [zero(), zero()],
            TimeProfile::Exponential(-2.0 * nu),
            TimeProfile::Zero,
        ),
        AnalyticChoice::Smooth => {
            let (au, af) = (SMOOTH_U_AMPLITUDE, SMOOTH_F_AMPLITUDE);
            let dq = poisson_kernel_derivative;
            let u = VectorField::from_fns(grid, |_, y| au * dq(y), |x, _| -au * dq(x));
            let g1 = VectorField::from_fns(grid, |x, y| af * dq(x + y), |x, y| -af * dq(x + y));
            let g2 = VectorField::from_fns(grid, |x, y| -af * dq(x - y), |x, y| -af * dq(x - y));
            (u, [g1, g2], TimeProfile::Cosine, TimeProfile::Cosine)
        }
    };

    let partial = |v: &VectorField, axis: usize| -> VectorField {
        v.map(|c| ScalarField::from_spectral(grid, deriv_coeffs(grid, &c.spectral(), axis)).unwrap())
    };

    let u_adv = directional_derivative(&u_shape, &u_shape, false);
    let u_lap = u_shape.map(laplacian);
    let g_stretch = comb_owned(&[(1.0, &partial(&g_shapes[0], 0)), (1.0, &partial(&g_shapes[1], 1))]);
    let g_self = comb_owned(&[
        (1.0, &directional_derivative(&g_shapes[0], &g_shapes[0], false)),
        (1.0, &directional_derivative(&g_shapes[1], &g_shapes[1], false)),
    ]);
    let bracket: Vec<VectorField> = g_shapes
        .iter()
        .map(|g| {
            comb_owned(&[
                (1.0, &directional_derivative(&u_shape, g, false)),
                (-1.0, &directional_derivative(g, &u_shape, false)),
            ])
        })
        .collect();
    let du: Vec<VectorField> = (0..2).map(|k| partial(&u_shape, k)).collect();

    let g_u = {
        let (u_shape, u_adv, u_lap) = (u_shape.clone(), u_adv, u_lap);
        Arc::new(move |t: f64| {
            let (th, dth, ph) = (theta.value(t), theta.derivative(t), phi.value(t));
            leray_project(&comb_owned(&[
                (dth, &u_shape),
                (th * th, &u_adv),
                (-nu * th, &u_lap),
                (-ph, &g_stretch),
                (-ph * ph, &g_self),
            ]))
        }) as Arc<dyn Fn(f64) -> VectorField + Send + Sync>
    };
    let g_f = {
        let g_shapes = g_shapes.clone();
        Arc::new(move |t: f64| {
            let (th, ph, dph) = (theta.value(t), phi.value(t), phi.derivative(t));
            let col = |k: usize| comb_owned(&[(dph, &g_shapes[k]), (th * ph, &bracket[k]), (-th, &du[k])]);
            TensorField::new(leray_project(&col(0)), leray_project(&col(1))).unwrap()
        }) as Arc<dyn Fn(f64) -> TensorField + Send + Sync>
    };

    let analytic: AnalyticFn = {
        let grid = grid.clone();
        let (u_shape, g_shapes) = (u_shape.clone(), g_shapes.clone());
        Arc::new(move |t: f64| {
            let (th, ph) = (theta.value(t), phi.value(t));
            let identity = TensorField::identity(&grid);
            let col = |k: usize| identity.column(k).lin_comb(1.0, &g_shapes[k], ph).unwrap();
            State {
                t,
                u: u_shape.map(|c| c.scaled(th)),
                f: TensorField::new(col(0), col(1)).unwrap(),
            }
        })
    };

    Manufactured {
        initial: analytic(0.0),
        forcing: ForcingSpec { g_u, g_f },
        analytic,
    }
}

fn comb_owned(terms: &[(f64, &VectorField)]) -> VectorField {
    let grid = terms[0].1.grid();
    terms.iter().fold(VectorField::zeros(grid), |acc, (w, v)| {
        acc.lin_comb(1.0, v, *w).unwrap()
    })
}

/// Largest pointwise difference over all six scalar components.
pub fn state_error(a: &State, b: &State) -> f64 {
    a.scalar_fields()
        .iter()
        .zip(b.scalar_fields())
        .map(|(x, y)| x.lin_comb(1.0, y, -1.0).map(|d| d.max_abs()).unwrap_or(f64::NAN))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn standard() -> ZghParams {
        ZghParams::new(2.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn parameter_validation() {
        assert!(ZghParams::new(1.0, 1.0, 1.0).is_err());
        assert!(ZghParams::new(1.0, -1.0, 1.0).is_err());
        assert!(ZghParams::new(f64::NAN, 0.0, 1.0).is_err());
        let p = standard();
        assert_relative_eq!(p.c(), 3.0);
        assert_relative_eq!(p.t_star(), 1.0 / 3.0);
        assert!(!ZghParams::new(2.0, 1.0, -1.0).unwrap().blows_up());
    }

    #[test]
    fn fields_at_initial_time() {
        let p = ZghParams::new(3.0, -0.5, 0.7).unwrap();
        let z = zgh_fields(&p, 0.0).unwrap();
        assert_eq!(z.gradu, Matrix2::new(0.7, 0.0, 0.0, -0.7));
        assert_eq!(z.f, Matrix2::identity());
    }

    #[test]
    fn fields_match_rk4_oracle_at_t_0_3() {
        let p = standard();
        let z = zgh_fields(&p, 0.3).unwrap();
        assert_relative_eq!(z.f[(0, 0)], 0.1f64.powf(-1.0 / 3.0), max_relative = 1e-14);
        assert_relative_eq!(z.f[(0, 0)], 2.15443, epsilon = 1e-5);
        assert_relative_eq!(z.f[(1, 1)], 0.46416, epsilon = 1e-5);
        // classical RK4 with dt = 1e-5 on the diagonal system
        let (mut f1, mut f2, h) = (1.0f64, 1.0f64, 1e-5);
        let a = |t: f64| 1.0 / (1.0 - 3.0 * t);
        for i in 0..30_000 {
            let t = i as f64 * h;
            for (f, sgn) in [(&mut f1, 1.0), (&mut f2, -1.0)] {
                let rate = |tt: f64, y: f64| sgn * a(tt) * y;
                let k1 = rate(t, *f);
                let k2 = rate(t + h / 2.0, *f + h / 2.0 * k1);
                let k3 = rate(t + h / 2.0, *f + h / 2.0 * k2);
                let k4 = rate(t + h, *f + h * k3);
                *f += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
        }
        assert_relative_eq!(z.f[(0, 0)], f1, max_relative = 1e-10);
        assert_relative_eq!(z.f[(1, 1)], f2, max_relative = 1e-10);
    }

    #[test]
    fn pole_is_an_error() {
        let p = standard();
        assert_eq!(
            zgh_fields(&p, 1.0 / 3.0).unwrap_err(),
            ExactError::Pole { t: 1.0 / 3.0 }
        );
        assert!(zgh_residual(&p, 0.5, [0.0, 0.0], Fidelity::Corrected).is_err());
    }

    #[test]
    fn corrected_family_has_zero_residual() {
        let r = zgh_residual(&standard(), 0.2, [1.0, 1.0], Fidelity::Corrected).unwrap();
        assert!(r.max_abs() <= 1e-12, "{r:?}");
        let r0 = zgh_residual(&standard(), 0.0, [0.3, -2.0], Fidelity::Corrected).unwrap();
        assert_eq!(r0.deformation, Matrix2::zeros());
    }

    #[test]
    fn printed_family_is_compressible() {
        let p = standard();
        let r = zgh_residual(&p, 0.2, [1.0, 1.0], Fidelity::Printed).unwrap();
        let a = p.a(0.2).unwrap();
        assert_relative_eq!(r.div_u, 2.0 * a, max_relative = 1e-14);
        assert_relative_eq!(r.momentum[1], 2.0 * p.c() * a * a, max_relative = 1e-12);
    }

    #[test]
    fn determinant_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = ZghParams::new(
                rng.gen_range(0.5..3.0),
                rng.gen_range(-0.4..0.4),
                rng.gen_range(0.2..1.0),
            )
            .unwrap();
            let t = rng.gen_range(0.0..0.95) * p.t_star();
            assert!((zgh_fields(&p, t).unwrap().f.determinant() - 1.0).abs() <= 1e-12);
        }
    }

    /// Adaptive Simpson quadrature, independent of the closed form.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        #[allow(clippy::too_many_arguments)]
        fn rec(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                    + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
        rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
    }

    #[test]
    fn bkm_integral_matches_quadrature() {
        let p = standard();
        assert_eq!(zgh_bkm_integral(&p, 0.0).unwrap(), 0.0);
        let v = zgh_bkm_integral(&p, 0.3).unwrap();
        assert_relative_eq!(v, 10f64.ln() / 3.0, max_relative = 1e-14);
        assert_relative_eq!(v, 0.76753, epsilon = 1e-5);
        assert_eq!(zgh_bkm_integral(&p, 1.0 / 3.0).unwrap(), f64::INFINITY);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let p = ZghParams::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-2.0..2.0),
            )
            .unwrap();
            let t = if p.blows_up() {
                rng.gen_range(0.0..0.9) * p.t_star()
            } else {
                rng.gen_range(0.0..2.0)
            };
            let quad = adaptive_simpson(&|s| p.a(s).unwrap().abs(), 0.0, t, 1e-13);
            assert_relative_eq!(zgh_bkm_integral(&p, t).unwrap(), quad, max_relative = 1e-8);
        }
    }

    #[test]
    fn bkm_integral_is_increasing_and_convex() {
        let p = standard();
        let vals: Vec<f64> = (0..33)
            .map(|i| zgh_bkm_integral(&p, i as f64 * 0.01).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
        assert!(vals.windows(3).all(|w| w[2] - 2.0 * w[1] + w[0] > 0.0));
    }

    #[test]
    fn ode_reduction_cases() {
        let s = LinearProfileState::identity(0.0);
        let f = ode_reduce_step(&s, |_| 0.0, 0.1);
        assert_eq!(f.f, Matrix2::identity());

        let traj = ode_reduce_trajectory(s, |_| 1.0, 1e-4, 1.0);
        let last = traj.last().unwrap();
        assert_relative_eq!(last.t, 1.0, max_relative = 1e-14);
        let e = std::f64::consts::E;
        assert!((last.f - Matrix2::new(e, 0.0, 0.0, 1.0 / e)).abs().max() <= 1e-10);

        assert!(LinearProfileState::new(Matrix2::new(1.0, 0.0, 0.0, 0.0), Matrix2::identity(), 0.0).is_err());
    }

    #[test]
    fn ode_reduction_tracks_closed_form() {
        let p = standard();
        let t_end = p.t_star() - 0.05;
        let traj = ode_reduce_trajectory(LinearProfileState::identity(0.0), |t| p.a(t).unwrap(), 1e-4, t_end);
        for s in traj.iter().step_by(100).chain(traj.last()) {
            let z = zgh_fields(&p, s.t).unwrap();
            assert!((s.f - z.f).abs().max() <= 1e-8, "t = {}", s.t);
        }
    }

    #[test]
    fn linear_history_saturates_column_bound() {
        let p = standard();
        let traj = ode_reduce_trajectory(LinearProfileState::identity(0.0), |t| p.a(t).unwrap(), 1e-3, 0.3);
        let hist = linear_profile_history(&traj);
        let c = crate::diagnostics::lp_growth_certificate(&hist, LpExponent::Inf, 1e-9);
        assert!(c.satisfied);
        assert!(c.margin.abs() < 1e-4, "{}", c.margin);
    }

    #[test]
    fn manufactured_steady_has_zero_forcing() {
        let g = GridSpec::new(16).unwrap();
        let m = manufactured(&g, 0.1, AnalyticChoice::SteadyIdentity);
        assert_eq!((m.forcing.g_u)(0.3).l2_norm(), 0.0);
        assert_eq!((m.forcing.g_f)(0.3).l2_norm(), 0.0);
        assert_eq!(state_error(&m.initial, &State::rest(&g)), 0.0);
    }

    #[test]
    fn manufactured_taylor_green_forcing_is_projected_advection() {
        // u·∇u for Taylor–Green is the gradient of −(cos 2x₁ + cos 2x₂)/4,
        // so its projection, and therefore the forcing, vanishes.
        let g = GridSpec::new(32).unwrap();
        let m = manufactured(&g, 0.05, AnalyticChoice::TaylorGreenDecay);
        let gu = (m.forcing.g_u)(0.0);
        assert!(gu.max_abs().unwrap() < 1e-13);
        let adv = directional_derivative(&taylor_green(&g), &taylor_green(&g), false);
        let hand = VectorField::from_fns(&g, |x, _| 0.5 * (2.0 * x).sin(), |_, y| 0.5 * (2.0 * y).sin());
        assert!(adv.lin_comb(1.0, &hand, -1.0).unwrap().max_abs().unwrap() < 1e-13);
        assert_relative_eq!(
            (m.analytic)(1.0).u.l2_norm(),
            (-0.1f64).exp() * PI * 2f64.sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn smooth_choice_is_divergence_free() {
        let g = GridSpec::new(64).unwrap();
        let m = manufactured(&g, 0.0, AnalyticChoice::Smooth);
        let [du, df1, df2] = m.initial.divergence_defects();
        assert!(du < 1e-10 && df1 < 1e-10 && df2 < 1e-10);
        let gf = (m.forcing.g_f)(0.4);
        for k in 0..2 {
            assert!(crate::spectral::divergence(gf.column(k)).max_abs() < 1e-10);
        }
    }
}
