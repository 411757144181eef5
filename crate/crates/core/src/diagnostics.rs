//! Per-step norms and the regularity certificates evaluated on them.
//!
//! A [`DiagnosticsRecord`] is a flat row of numbers so that a history can
//! round-trip through CSV exactly; every certificate can be recomputed from
//! the file alone.
//!
//! Conventions:
//! * L² and Hˢ norms are spectral (Parseval on the 2π-torus).
//! * Lᵖ norms use the collocation quadrature `((2π/n)² Σ |·|ᵖ)^{1/p}`, with
//!   `|F|` the pointwise Frobenius norm and `|F_{·k}|` the Euclidean norm of
//!   a column.
//! * `‖∇u‖_∞` is the grid maximum of the pointwise operator (spectral) norm
//!   of the velocity gradient, which is what bounds `|F_{·k}·∇u|` by
//!   `‖∇u‖_∞ |F_{·k}|`.
//! * Time integrals are accumulated with the trapezoidal rule.

use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::VectorField;
use crate::solver::State;
use crate::spectral::deriv_coeffs;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("diagnostics history is empty")]
    EmptyHistory,
}

/// Exponents at which `‖F‖_p` is recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LpExponent {
    P2,
    P4,
    P6,
    Inf,
}

impl LpExponent {
    pub const ALL: [LpExponent; 4] = [LpExponent::P2, LpExponent::P4, LpExponent::P6, LpExponent::Inf];

    pub fn value(self) -> f64 {
        match self {
            LpExponent::P2 => 2.0,
            LpExponent::P4 => 4.0,
            LpExponent::P6 => 6.0,
            LpExponent::Inf => f64::INFINITY,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LpExponent::P2 => "2",
            LpExponent::P4 => "4",
            LpExponent::P6 => "6",
            LpExponent::Inf => "inf",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub forced: bool,
    pub l2_u: f64,
    pub l2_f: f64,
    pub h1_u: f64,
    pub h1_f: f64,
    pub h2_u: f64,
    pub h2_f: f64,
    /// `‖∇u‖₂`
    pub grad_l2_u: f64,
    /// `‖∇F‖₂`
    pub grad_l2_f: f64,
    pub lp_f_2: f64,
    pub lp_f_4: f64,
    pub lp_f_6: f64,
    pub lp_f_inf: f64,
    pub lp_f1_2: f64,
    pub lp_f1_4: f64,
    pub lp_f1_6: f64,
    pub lp_f1_inf: f64,
    pub lp_f2_2: f64,
    pub lp_f2_4: f64,
    pub lp_f2_6: f64,
    pub lp_f2_inf: f64,
    pub linf_u: f64,
    pub linf_gradu: f64,
    /// `∫₀ᵗ ‖∇u‖_∞ ds`
    pub bkm: f64,
    /// `2ν ∫₀ᵗ ‖∇u‖₂² ds`
    pub visc: f64,
    /// `‖u₀‖₂² + ‖F₀‖₂²`
    pub energy0: f64,
    pub energy_residual: f64,
    pub div_drift_u: f64,
    pub div_drift_f: f64,
    pub linf_curl_u: f64,
    pub linf_curl_f: f64,
    pub l6_gradf: f64,
    /// Backward-difference `‖u_t‖₂`; zero without a prior state.
    pub l2_ut: f64,
    /// `‖∇u‖²_{H²}`
    pub hs2_gradu: f64,
    /// `∫₀ᵗ ‖∇u‖²_{H²} ds`
    pub hs2_gradu_int: f64,
    /// L² size of the gradient part removed from `u` by the post-step
    /// projection.
    pub projection_u: f64,
    /// Same for the columns of `F`.
    pub projection_f: f64,
}

impl DiagnosticsRecord {
    pub fn lp_f(&self, p: LpExponent) -> f64 {
        match p {
            LpExponent::P2 => self.lp_f_2,
            LpExponent::P4 => self.lp_f_4,
            LpExponent::P6 => self.lp_f_6,
            LpExponent::Inf => self.lp_f_inf,
        }
    }

    /// `‖F_{·k}‖_p` for column `k ∈ {0, 1}`.
    pub fn lp_f_column(&self, k: usize, p: LpExponent) -> f64 {
        match (k, p) {
            (0, LpExponent::P2) => self.lp_f1_2,
            (0, LpExponent::P4) => self.lp_f1_4,
            (0, LpExponent::P6) => self.lp_f1_6,
            (0, LpExponent::Inf) => self.lp_f1_inf,
            (_, LpExponent::P2) => self.lp_f2_2,
            (_, LpExponent::P4) => self.lp_f2_4,
            (_, LpExponent::P6) => self.lp_f2_6,
            (_, LpExponent::Inf) => self.lp_f2_inf,
        }
    }

    pub fn set_lp_f_column(&mut self, k: usize, p: LpExponent, v: f64) {
        let slot = match (k, p) {
            (0, LpExponent::P2) => &mut self.lp_f1_2,
            (0, LpExponent::P4) => &mut self.lp_f1_4,
            (0, LpExponent::P6) => &mut self.lp_f1_6,
            (0, LpExponent::Inf) => &mut self.lp_f1_inf,
            (_, LpExponent::P2) => &mut self.lp_f2_2,
            (_, LpExponent::P4) => &mut self.lp_f2_4,
            (_, LpExponent::P6) => &mut self.lp_f2_6,
            (_, LpExponent::Inf) => &mut self.lp_f2_inf,
        };
        *slot = v;
    }

    /// `‖u‖₂² + ‖F‖₂² + 2ν∫‖∇u‖₂²`
    pub fn energy_lhs(&self) -> f64 {
        self.l2_u * self.l2_u + self.l2_f * self.l2_f + self.visc
    }

    /// `‖∇u‖₂² + ‖∇F‖₂²`
    pub fn h1_energy(&self) -> f64 {
        self.grad_l2_u * self.grad_l2_u + self.grad_l2_f * self.grad_l2_f
    }
}

/// What [`record`] needs from the previous sample.
#[derive(Debug, Clone, Copy)]
pub struct Prior<'a> {
    pub record: &'a DiagnosticsRecord,
    /// Velocity at the prior time, for the backward difference `u_t`.
    pub velocity: Option<&'a VectorField>,
}

/// Largest singular value of a 2×2 matrix.
pub fn operator_norm(a: [[f64; 2]; 2]) -> f64 {
    let [[p, q], [r, s]] = a;
    0.5 * ((p + s).hypot(r - q) + (p - s).hypot(q + r))
}

fn quadrature_norm(values: impl Iterator<Item = f64>, p: LpExponent, cell: f64) -> f64 {
    match p {
        LpExponent::Inf => values.fold(0.0, f64::max),
        _ => {
            let p = p.value();
            (values.map(|v| v.powf(p)).sum::<f64>() * cell).powf(1.0 / p)
        }
    }
}

/// Computes every monitored quantity of `state` and advances the
/// accumulators from `prior`.
pub fn record(state: &State, prior: Option<Prior<'_>>, nu: f64, forced: bool) -> DiagnosticsRecord {
    let grid = state.grid();
    let len = grid.len();
    let coeffs: Vec<Vec<_>> = state
        .scalar_fields()
        .iter()
        .map(|f| f.spectral().into_owned())
        .collect();
    let weighted = |c: &[num_complex::Complex64], w: &dyn Fn(f64) -> f64| -> f64 {
        4.0 * PI
            * PI
            * c.iter()
                .enumerate()
                .map(|(idx, z)| w(grid.k_squared(idx)) * z.norm_sqr())
                .sum::<f64>()
    };
    let sum_over = |range: std::ops::Range<usize>, w: &dyn Fn(f64) -> f64| -> f64 {
        range.map(|q| weighted(&coeffs[q], w)).sum::<f64>()
    };

    let mut r = DiagnosticsRecord {
        t: state.t,
        forced,
        ..Default::default()
    };
    r.l2_u = sum_over(0..2, &|_| 1.0).sqrt();
    r.l2_f = sum_over(2..6, &|_| 1.0).sqrt();
    r.h1_u = sum_over(0..2, &|k2| 1.0 + k2).sqrt();
    r.h1_f = sum_over(2..6, &|k2| 1.0 + k2).sqrt();
    r.h2_u = sum_over(0..2, &|k2| (1.0 + k2).powi(2)).sqrt();
    r.h2_f = sum_over(2..6, &|k2| (1.0 + k2).powi(2)).sqrt();
    r.grad_l2_u = sum_over(0..2, &|k2| k2).sqrt();
    r.grad_l2_f = sum_over(2..6, &|k2| k2).sqrt();
    r.hs2_gradu = sum_over(0..2, &|k2| (1.0 + k2).powi(2) * k2);

    let phys: Vec<Vec<f64>> = coeffs.iter().map(|c| grid.inverse_real(c)).collect();
    let grad: Vec<[Vec<f64>; 2]> = coeffs
        .iter()
        .map(|c| [0, 1].map(|l| grid.inverse_real(&deriv_coeffs(grid, c, l))))
        .collect();

    let cell = grid.cell_area();
    let f_frob: Vec<f64> = (0..len)
        .map(|p| (2..6).map(|q| phys[q][p] * phys[q][p]).sum::<f64>().sqrt())
        .collect();
    let col_norm = |k: usize| -> Vec<f64> { (0..len).map(|p| phys[2 + 2 * k][p].hypot(phys[3 + 2 * k][p])).collect() };
    let cols = [col_norm(0), col_norm(1)];
    for p in LpExponent::ALL {
        let whole = quadrature_norm(f_frob.iter().copied(), p, cell);
        match p {
            LpExponent::P2 => r.lp_f_2 = whole,
            LpExponent::P4 => r.lp_f_4 = whole,
            LpExponent::P6 => r.lp_f_6 = whole,
            LpExponent::Inf => r.lp_f_inf = whole,
        }
        for (k, col) in cols.iter().enumerate() {
            r.set_lp_f_column(k, p, quadrature_norm(col.iter().copied(), p, cell));
        }
    }

    let mut l6 = 0.0;
    for p in 0..len {
        r.linf_u = r.linf_u.max(phys[0][p].hypot(phys[1][p]));
        let gu = [[grad[0][0][p], grad[0][1][p]], [grad[1][0][p], grad[1][1][p]]];
        r.linf_gradu = r.linf_gradu.max(operator_norm(gu));
        r.linf_curl_u = r.linf_curl_u.max((gu[1][0] - gu[0][1]).abs());
        r.div_drift_u = r.div_drift_u.max((gu[0][0] + gu[1][1]).abs());
        let mut gf2 = 0.0;
        for q in 2..6 {
            gf2 += grad[q][0][p].powi(2) + grad[q][1][p].powi(2);
        }
        l6 += gf2.powi(3);
    }
    r.l6_gradf = (l6 * cell).powf(1.0 / 6.0);
    for k in 0..2 {
        let (a, b) = (2 + 2 * k, 3 + 2 * k);
        let mut curl: f64 = 0.0;
        let mut div: f64 = 0.0;
        for p in 0..len {
            curl = curl.max((grad[b][0][p] - grad[a][1][p]).abs());
            div = div.max((grad[a][0][p] + grad[b][1][p]).abs());
        }
        r.linf_curl_f += curl;
        r.div_drift_f = r.div_drift_f.max(div);
    }

    let energy = r.l2_u * r.l2_u + r.l2_f * r.l2_f;
    match prior {
        None => {
            r.energy0 = energy;
        }
        Some(prior) => {
            let prev = prior.record;
            let dt = r.t - prev.t;
            r.energy0 = prev.energy0;
            r.bkm = prev.bkm + 0.5 * dt * (prev.linf_gradu + r.linf_gradu);
            r.visc = prev.visc + nu * dt * (prev.grad_l2_u * prev.grad_l2_u + r.grad_l2_u * r.grad_l2_u);
            r.hs2_gradu_int = prev.hs2_gradu_int + 0.5 * dt * (prev.hs2_gradu + r.hs2_gradu);
            if let (Some(u_prev), true) = (prior.velocity, dt > 0.0) {
                r.l2_ut = state
                    .u
                    .lin_comb(1.0 / dt, u_prev, -1.0 / dt)
                    .map(|d| d.l2_norm())
                    .unwrap_or(f64::NAN);
            }
        }
    }
    r.energy_residual = relative_residual(r.energy_lhs(), r.energy0);
    r
}

fn relative_residual(value: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        value.abs()
    } else {
        (value - reference).abs() / reference.abs()
    }
}

/// Tolerances for the runtime certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertificateSettings {
    /// Halt the run on the first violation.
    pub strict: bool,
    /// Maximum relative residual of the L² energy identity.
    pub energy_tol: f64,
    /// Allowed negative log-margin for the Lᵖ growth bound. Where the bound
    /// is attained (stagnation points), the trapezoidal BKM accumulator
    /// alone produces margins of order `dt²`.
    pub lp_tol: f64,
}

impl Default for CertificateSettings {
    fn default() -> Self {
        Self {
            strict: false,
            energy_tol: 1e-5,
            lp_tol: 1e-5,
        }
    }
}

impl CertificateSettings {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.energy_tol > 0.0) || !(self.lp_tol > 0.0) {
            return Err("certificate tolerances must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub name: String,
    /// False when the certificate does not apply (e.g. energy on a forced
    /// run); such a report is vacuously satisfied.
    pub applicable: bool,
    pub satisfied: bool,
    /// Bound minus observed, normalized; negative means violated.
    pub margin: f64,
    /// Time of the smallest margin.
    pub worst_t: f64,
    /// The certificate's headline statistic (max residual, min log margin,
    /// fitted constant).
    pub value: f64,
}

/// L² energy identity `‖u‖₂² + ‖F‖₂² + 2ν∫‖∇u‖₂² = ‖u₀‖₂² + ‖F₀‖₂²`.
pub fn energy_certificate(history: &[DiagnosticsRecord], tolerance: f64) -> CertificateReport {
    let name = "energy".to_string();
    let Some(first) = history.first() else {
        return vacuous(name);
    };
    if history.iter().any(|r| r.forced) {
        return CertificateReport {
            applicable: false,
            ..vacuous(name)
        };
    }
    let reference = first.l2_u.powi(2) + first.l2_f.powi(2);
    let (worst, worst_t) = history
        .iter()
        .map(|r| (relative_residual(r.energy_lhs(), reference), r.t))
        .fold((0.0, first.t), |acc, x| if x.0 > acc.0 { x } else { acc });
    CertificateReport {
        name,
        applicable: true,
        satisfied: worst <= tolerance,
        margin: tolerance - worst,
        worst_t,
        value: worst,
    }
}

/// Column-wise `‖F_{·k}(t)‖_p ≤ ‖F_{·k}(0)‖_p exp(∫₀ᵗ‖∇u‖_∞)`, checked in
/// log space: margin is `min_t,k [ln bound − ln observed]`.
pub fn lp_growth_certificate(history: &[DiagnosticsRecord], p: LpExponent, tolerance: f64) -> CertificateReport {
    let name = format!("lp_growth_p{}", p.label());
    let Some(first) = history.first() else {
        return vacuous(name);
    };
    let mut margin = f64::INFINITY;
    let mut worst_t = first.t;
    for r in history {
        for k in 0..2 {
            let observed = r.lp_f_column(k, p);
            if observed == 0.0 {
                continue;
            }
            let initial = first.lp_f_column(k, p);
            let m = if initial == 0.0 {
                f64::NEG_INFINITY
            } else {
                initial.ln() + (r.bkm - first.bkm) - observed.ln()
            };
            if m < margin {
                margin = m;
                worst_t = r.t;
            }
        }
    }
    if margin == f64::INFINITY {
        margin = 0.0;
    }
    CertificateReport {
        name,
        applicable: true,
        satisfied: margin >= -tolerance,
        margin,
        worst_t,
        value: margin,
    }
}

/// Smallest `C` with `‖∇u‖₂² + ‖∇F‖₂² ≤ (initial)·exp(C·∫‖∇u‖_∞)` over
/// the history, floored at zero. Satisfied iff finite.
pub fn h1_growth_certificate(history: &[DiagnosticsRecord]) -> CertificateReport {
    let name = "h1_growth".to_string();
    let Some(first) = history.first() else {
        return vacuous(name);
    };
    let x0 = first.h1_energy();
    let mut c_obs: f64 = 0.0;
    let mut worst_t = first.t;
    for r in &history[1..] {
        let x = r.h1_energy();
        let b = r.bkm - first.bkm;
        let c = if x <= x0 {
            0.0
        } else if x0 == 0.0 || b <= 0.0 {
            f64::INFINITY
        } else {
            (x / x0).ln() / b
        };
        if c > c_obs {
            c_obs = c;
            worst_t = r.t;
        }
    }
    CertificateReport {
        name,
        applicable: true,
        satisfied: c_obs.is_finite(),
        margin: if c_obs.is_finite() { 0.0 } else { f64::NEG_INFINITY },
        worst_t,
        value: c_obs,
    }
}

/// Whether two fitted Gronwall constants agree to within `rel_tol`.
pub fn h1_constant_stable(a: f64, b: f64, rel_tol: f64) -> bool {
    if !(a.is_finite() && b.is_finite()) {
        return false;
    }
    let scale = a.abs().max(b.abs());
    scale == 0.0 || (a - b).abs() <= rel_tol * scale
}

fn vacuous(name: String) -> CertificateReport {
    CertificateReport {
        name,
        applicable: true,
        satisfied: true,
        margin: 0.0,
        worst_t: 0.0,
        value: 0.0,
    }
}

/// Every certificate evaluated on a history, in a fixed order.
pub fn all_certificates(history: &[DiagnosticsRecord], settings: &CertificateSettings) -> Vec<CertificateReport> {
    let mut out = vec![energy_certificate(history, settings.energy_tol)];
    out.extend(
        LpExponent::ALL
            .iter()
            .map(|&p| lp_growth_certificate(history, p, settings.lp_tol)),
    );
    out.push(h1_growth_certificate(history));
    out
}

/// Name of the first certificate the newest record breaks, if any. Used by
/// strict runs; checks the energy identity (unforced runs) and the Lᵖ bound
/// at every recorded exponent.
pub fn violated_certificate(history: &[DiagnosticsRecord], settings: &CertificateSettings) -> Option<String> {
    let (first, last) = (history.first()?, history.last()?);
    let pair = [first.clone(), last.clone()];
    let energy = energy_certificate(&pair, settings.energy_tol);
    if energy.applicable && !energy.satisfied {
        return Some(energy.name);
    }
    LpExponent::ALL
        .iter()
        .map(|&p| lp_growth_certificate(&pair, p, settings.lp_tol))
        .find(|c| !c.satisfied)
        .map(|c| c.name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BkmReport {
    pub integral: f64,
    pub extrapolated_t_star: Option<f64>,
}

/// Number of trailing records examined by the blowup extrapolation.
pub const BKM_WINDOW: usize = 10;

/// Accumulated `∫‖∇u‖_∞` and, when `‖∇u‖_∞` grows monotonically over the
/// last [`BKM_WINDOW`] records, the root of a least-squares line through
/// `1/‖∇u‖_∞` versus `t`.
pub fn bkm_report(history: &[DiagnosticsRecord]) -> BkmReport {
    let integral = history.last().map(|r| r.bkm).unwrap_or(0.0);
    let window = &history[history.len().saturating_sub(BKM_WINDOW)..];
    let monotone = window.len() >= 3
        && window
            .windows(2)
            .all(|w| w[1].linf_gradu > w[0].linf_gradu && w[1].t > w[0].t);
    let extrapolated_t_star = if monotone {
        let pts: Vec<(f64, f64)> = window.iter().map(|r| (r.t, 1.0 / r.linf_gradu)).collect();
        let m = pts.len() as f64;
        let (st, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t, b + y));
        let (tm, ym) = (st / m, sy / m);
        let sxx: f64 = pts.iter().map(|(t, _)| (t - tm).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|(t, y)| (t - tm) * (y - ym)).sum();
        let slope = sxy / sxx;
        (slope < 0.0).then(|| tm - ym / slope)
    } else {
        None
    };
    BkmReport {
        integral,
        extrapolated_t_star,
    }
}

/// Grid maxima of the scalar curl of `u` and, summed over columns, of `F`.
pub fn curl_report(state: &State) -> (f64, f64) {
    let curl = |v: &VectorField| crate::spectral::curl(v).max_abs();
    (curl(&state.u), state.f.columns().iter().map(curl).sum())
}

pub fn write_csv<W: Write>(out: W, history: &[DiagnosticsRecord]) -> Result<(), DiagnosticsError> {
    let mut w = csv::Writer::from_writer(out);
    for r in history {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<DiagnosticsRecord>, DiagnosticsError> {
    let mut rdr = csv::Reader::from_reader(input);
    let records = rdr.deserialize().collect::<Result<Vec<DiagnosticsRecord>, _>>()?;
    if records.is_empty() {
        return Err(DiagnosticsError::EmptyHistory);
    }
    Ok(records)
}
