//! Lagrangian particles and their deformation Jacobians.
//!
//! Particles move with `dx/dt = u(t, x)` and carry `J = ∂x/∂X`, which obeys
//! `dJ/dt = ∇u(t, x) J`. Along a trajectory the Eulerian deformation tensor
//! satisfies `F(t, x(t, X)) = J(t, X) F₀(X)`; [`compare_with_eulerian`]
//! measures how far a simulation is from that identity.
//!
//! Velocities at off-grid points come either from the trigonometric
//! interpolant (a direct Fourier sum) or from bicubic Hermite patches built
//! on spectral derivatives. Time dependence comes from stored frames with
//! linear interpolation between them.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fields::{GridSpec, ScalarField, TensorField};
use crate::solver::State;
use crate::spectral::deriv_coeffs;

#[derive(Debug, Error)]
pub enum FlowmapError {
    #[error("no velocity data covering t = {t}")]
    MissingData { t: f64 },
    #[error("frame times must increase strictly ({previous} then {next})")]
    FrameOrder { previous: f64, next: f64 },
    #[error("field at t = {field} compared with particles at t = {particles}")]
    TimeMismatch { field: f64, particles: f64 },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Off-grid evaluation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Direct sum over the retained Fourier modes; exact for band-limited
    /// fields.
    #[default]
    Spectral,
    /// Bicubic Hermite patches on values and spectral derivatives.
    Bicubic,
}

/// Relative size below which Fourier coefficients are skipped.
const PRUNE: f64 = 1e-15;

fn wrap(v: f64) -> f64 {
    let w = v.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

/// Several scalar fields on one grid, evaluated together at arbitrary
/// points.
#[derive(Debug, Clone)]
pub struct FieldSet {
    grid: GridSpec,
    kind: SetKind,
}

#[derive(Debug, Clone)]
enum SetKind {
    /// Per field: `(k₁ + n/2, k₂ + n/2, coefficient)`.
    Spectral(Vec<Vec<(usize, usize, Complex64)>>),
    /// Per field: `[f, ∂₁f, ∂₂f, ∂₁∂₂f]` physical samples.
    Bicubic(Vec<[Vec<f64>; 4]>),
}

impl FieldSet {
    pub fn new(fields: &[&ScalarField], interpolation: Interpolation) -> Self {
        let grid = fields[0].grid().clone();
        let n = grid.n();
        let kind = match interpolation {
            Interpolation::Spectral => SetKind::Spectral(
                fields
                    .iter()
                    .map(|f| {
                        let c = f.spectral();
                        let cmax = c.iter().fold(0.0f64, |m, z| m.max(z.norm()));
                        let shift = |m: usize| (grid.wavenumber(m) as i64 + n as i64 / 2) as usize;
                        c.iter()
                            .enumerate()
                            .filter(|(_, z)| z.norm() > PRUNE * cmax)
                            .map(|(idx, z)| (shift(idx / n), shift(idx % n), *z))
                            .collect()
                    })
                    .collect(),
            ),
            Interpolation::Bicubic => SetKind::Bicubic(
                fields
                    .iter()
                    .map(|f| {
                        let c = f.spectral();
                        let d1 = deriv_coeffs(&grid, &c, 0);
                        let d2 = deriv_coeffs(&grid, &c, 1);
                        let d12 = deriv_coeffs(&grid, &d1, 1);
                        [&c[..], &d1, &d2, &d12].map(|v| grid.inverse_real(v))
                    })
                    .collect(),
            ),
        };
        Self { grid, kind }
    }

    pub fn len(&self) -> usize {
        match &self.kind {
            SetKind::Spectral(v) => v.len(),
            SetKind::Bicubic(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the value of every field at `x` into `out`.
    pub fn eval(&self, x: [f64; 2], out: &mut [f64]) {
        match &self.kind {
            SetKind::Spectral(fields) => self.eval_spectral(fields, x, out),
            SetKind::Bicubic(fields) => self.eval_bicubic(fields, x, out),
        }
    }

    fn eval_spectral(&self, fields: &[Vec<(usize, usize, Complex64)>], x: [f64; 2], out: &mut [f64]) {
        let n = self.grid.n();
        let half = n as i64 / 2;
        let phases = |xi: f64| -> Vec<Complex64> {
            (0..n)
                .map(|j| Complex64::from_polar(1.0, (j as i64 - half) as f64 * xi))
                .collect()
        };
        let (e1, e2) = (phases(x[0]), phases(x[1]));
        for (slot, modes) in out.iter_mut().zip(fields) {
            *slot = modes.iter().map(|&(a, b, c)| (c * e1[a] * e2[b]).re).sum();
        }
    }

    fn eval_bicubic(&self, fields: &[[Vec<f64>; 4]], x: [f64; 2], out: &mut [f64]) {
        let n = self.grid.n();
        let h = self.grid.dx();
        let (s1, s2) = (wrap(x[0]) / h, wrap(x[1]) / h);
        let (i0, j0) = ((s1.floor() as usize) % n, (s2.floor() as usize) % n);
        let (i1, j1) = ((i0 + 1) % n, (j0 + 1) % n);
        let (p, q) = (s1 - s1.floor(), s2 - s2.floor());
        // cubic Hermite basis: value at 0, value at 1, slope at 0, slope at 1
        let basis = |s: f64| {
            let (s2, s3) = (s * s, s * s * s);
            [
                2.0 * s3 - 3.0 * s2 + 1.0,
                -2.0 * s3 + 3.0 * s2,
                s3 - 2.0 * s2 + s,
                s3 - s2,
            ]
        };
        let (bp, bq) = (basis(p), basis(q));
        let corners = [(i0, j0, 0, 0), (i1, j0, 1, 0), (i0, j1, 0, 1), (i1, j1, 1, 1)];
        for (slot, [f, f1, f2, f12]) in out.iter_mut().zip(fields) {
            let mut v = 0.0;
            for &(i, j, a, b) in &corners {
                let idx = i * n + j;
                v += bp[a] * bq[b] * f[idx]
                    + h * bp[2 + a] * bq[b] * f1[idx]
                    + h * bp[a] * bq[2 + b] * f2[idx]
                    + h * h * bp[2 + a] * bq[2 + b] * f12[idx];
            }
            *slot = v;
        }
    }
}

/// Velocity and velocity gradient at one instant, ready for off-grid
/// evaluation.
#[derive(Debug, Clone)]
pub struct VelocityFrame {
    t: f64,
    fields: FieldSet,
}

impl VelocityFrame {
    pub fn new(state: &State, interpolation: Interpolation) -> Self {
        let grid = state.grid();
        let mut fields: Vec<ScalarField> = state.u.components().to_vec();
        for i in 0..2 {
            let c = state.u.component(i).spectral();
            for axis in 0..2 {
                fields.push(ScalarField::from_spectral(grid, deriv_coeffs(grid, &c, axis)).unwrap());
            }
        }
        let refs: Vec<&ScalarField> = fields.iter().collect();
        Self {
            t: state.t,
            fields: FieldSet::new(&refs, interpolation),
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    fn sample(&self, x: [f64; 2]) -> [f64; 6] {
        let mut out = [0.0; 6];
        self.fields.eval(x, &mut out);
        out
    }
}

fn unpack(v: [f64; 6]) -> (Vector2<f64>, Matrix2<f64>) {
    (Vector2::new(v[0], v[1]), Matrix2::new(v[2], v[3], v[4], v[5]))
}

/// Source of `u(t, x)` and `∇u(t, x)` with `(∇u)_{ij} = ∂_j u_i`.
pub trait VelocityProvider: Sync {
    fn sample(&self, t: f64, x: [f64; 2]) -> Result<(Vector2<f64>, Matrix2<f64>), FlowmapError>;

    fn velocity(&self, t: f64, x: [f64; 2]) -> Result<Vector2<f64>, FlowmapError> {
        self.sample(t, x).map(|(u, _)| u)
    }

    fn gradient(&self, t: f64, x: [f64; 2]) -> Result<Matrix2<f64>, FlowmapError> {
        self.sample(t, x).map(|(_, g)| g)
    }
}

/// Frames at increasing times, linearly interpolated in between.
#[derive(Debug, Clone, Default)]
pub struct SnapshotProvider {
    frames: Vec<VelocityFrame>,
}

/// Slack allowed when a request falls just outside the stored time range.
const TIME_SLACK: f64 = 1e-12;

impl SnapshotProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_states<'a>(
        states: impl IntoIterator<Item = &'a State>,
        interpolation: Interpolation,
    ) -> Result<Self, FlowmapError> {
        let mut p = Self::new();
        for s in states {
            p.push(VelocityFrame::new(s, interpolation))?;
        }
        Ok(p)
    }

    pub fn push(&mut self, frame: VelocityFrame) -> Result<(), FlowmapError> {
        if let Some(last) = self.frames.last() {
            if frame.t <= last.t {
                return Err(FlowmapError::FrameOrder {
                    previous: last.t,
                    next: frame.t,
                });
            }
        }
        self.frames.push(frame);
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.t).collect()
    }
}

impl VelocityProvider for SnapshotProvider {
    fn sample(&self, t: f64, x: [f64; 2]) -> Result<(Vector2<f64>, Matrix2<f64>), FlowmapError> {
        let missing = FlowmapError::MissingData { t };
        let (first, last) = match (self.frames.first(), self.frames.last()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(missing),
        };
        let slack = TIME_SLACK * t.abs().max(1.0);
        if t < first.t - slack || t > last.t + slack {
            return Err(missing);
        }
        if self.frames.len() == 1 {
            return Ok(unpack(first.sample(x)));
        }
        let hi = self.frames.partition_point(|f| f.t < t).clamp(1, self.frames.len() - 1);
        let (a, b) = (&self.frames[hi - 1], &self.frames[hi]);
        let w = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        let (va, vb) = (a.sample(x), b.sample(x));
        let mut v = [0.0; 6];
        for i in 0..6 {
            v[i] = (1.0 - w) * va[i] + w * vb[i];
        }
        Ok(unpack(v))
    }
}

/// Provider backed by a closure, for analytic velocity fields.
pub struct FnProvider<F>(pub F);

impl<F> VelocityProvider for FnProvider<F>
where
    F: Fn(f64, [f64; 2]) -> (Vector2<f64>, Matrix2<f64>) + Sync,
{
    fn sample(&self, t: f64, x: [f64; 2]) -> Result<(Vector2<f64>, Matrix2<f64>), FlowmapError> {
        Ok((self.0)(t, x))
    }
}

/// Deformation tensor sampled at arbitrary points.
#[derive(Debug, Clone)]
pub struct TensorSampler {
    fields: FieldSet,
}

impl TensorSampler {
    pub fn new(f: &TensorField, interpolation: Interpolation) -> Self {
        let refs = [f.entry(0, 0), f.entry(0, 1), f.entry(1, 0), f.entry(1, 1)];
        Self {
            fields: FieldSet::new(&refs, interpolation),
        }
    }

    pub fn at(&self, x: [f64; 2]) -> Matrix2<f64> {
        let mut v = [0.0; 4];
        self.fields.eval(x, &mut v);
        Matrix2::new(v[0], v[1], v[2], v[3])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub labels: Vec<[f64; 2]>,
    pub x: Vec<[f64; 2]>,
    pub jac: Vec<Matrix2<f64>>,
    pub t: f64,
}

impl ParticleSet {
    /// Particles at `labels` with `x = X` and `J = I`.
    pub fn new(labels: Vec<[f64; 2]>, t: f64) -> Self {
        let labels: Vec<[f64; 2]> = labels.into_iter().map(|p| [wrap(p[0]), wrap(p[1])]).collect();
        Self {
            x: labels.clone(),
            jac: vec![Matrix2::identity(); labels.len()],
            labels,
            t,
        }
    }

    /// An `m × m` lattice offset from the grid by a quarter cell.
    pub fn lattice(m: usize, t: f64) -> Self {
        let h = 2.0 * PI / m as f64;
        let labels = (0..m * m)
            .map(|p| [h * ((p / m) as f64 + 0.25), h * ((p % m) as f64 + 0.25)])
            .collect();
        Self::new(labels, t)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `max |det J − 1|`.
    pub fn det_defect(&self) -> f64 {
        self.jac
            .iter()
            .map(|j| (j.determinant() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn rk4_particle(
    provider: &dyn VelocityProvider,
    t: f64,
    x: [f64; 2],
    jac: Matrix2<f64>,
    dt: f64,
    with_jacobian: bool,
) -> Result<([f64; 2], Matrix2<f64>), FlowmapError> {
    let x0 = Vector2::new(x[0], x[1]);
    let stage = |tau: f64, xs: Vector2<f64>, js: Matrix2<f64>| {
        provider
            .sample(tau, [xs[0], xs[1]])
            .map(|(u, g)| (u, if with_jacobian { g * js } else { Matrix2::zeros() }))
    };
    let (k1, l1) = stage(t, x0, jac)?;
    let (k2, l2) = stage(t + 0.5 * dt, x0 + k1 * (0.5 * dt), jac + l1 * (0.5 * dt))?;
    let (k3, l3) = stage(t + 0.5 * dt, x0 + k2 * (0.5 * dt), jac + l2 * (0.5 * dt))?;
    let (k4, l4) = stage(t + dt, x0 + k3 * dt, jac + l3 * dt)?;
    let x1 = x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    let j1 = jac + (l1 + l2 * 2.0 + l3 * 2.0 + l4) * (dt / 6.0);
    Ok(([wrap(x1[0]), wrap(x1[1])], j1))
}

fn rk4_all(
    particles: &ParticleSet,
    provider: &dyn VelocityProvider,
    dt: f64,
    with_jacobian: bool,
) -> Result<ParticleSet, FlowmapError> {
    let moved: Vec<([f64; 2], Matrix2<f64>)> = particles
        .x
        .par_iter()
        .zip(particles.jac.par_iter())
        .map(|(x, j)| rk4_particle(provider, particles.t, *x, *j, dt, with_jacobian))
        .collect::<Result<_, _>>()?;
    let (x, jac) = moved.into_iter().unzip();
    Ok(ParticleSet {
        labels: particles.labels.clone(),
        x,
        jac,
        t: particles.t + dt,
    })
}

/// RK4 step of the positions only; Jacobians are carried unchanged.
pub fn advect(particles: &ParticleSet, provider: &dyn VelocityProvider, dt: f64) -> Result<ParticleSet, FlowmapError> {
    rk4_all(particles, provider, dt, false)
}

/// Joint RK4 step of positions and Jacobians.
pub fn evolve_jacobian(
    particles: &ParticleSet,
    provider: &dyn VelocityProvider,
    dt: f64,
) -> Result<ParticleSet, FlowmapError> {
    rk4_all(particles, provider, dt, true)
}

/// Evolves positions and Jacobians through each interval of `times`
/// (which must start at the particles' time), splitting every interval
/// into steps no longer than `max_dt`.
pub fn evolve_through(
    particles: &ParticleSet,
    provider: &dyn VelocityProvider,
    times: &[f64],
    max_dt: f64,
) -> Result<ParticleSet, FlowmapError> {
    let mut p = particles.clone();
    for w in times.windows(2) {
        let span = w[1] - w[0];
        let sub = (span / max_dt).ceil().max(1.0) as usize;
        for _ in 0..sub {
            p = evolve_jacobian(&p, provider, span / sub as f64)?;
        }
        p.t = w[1];
    }
    Ok(p)
}

/// `max_X ‖F(x(t,X)) − J(t,X) F₀(X)‖_F`.
pub fn compare_with_eulerian(
    particles: &ParticleSet,
    f: &TensorField,
    f_time: f64,
    f0_at: &(dyn Fn([f64; 2]) -> Matrix2<f64> + Sync),
    interpolation: Interpolation,
) -> Result<f64, FlowmapError> {
    if (f_time - particles.t).abs() > 1e-9 * f_time.abs().max(1.0) {
        return Err(FlowmapError::TimeMismatch {
            field: f_time,
            particles: particles.t,
        });
    }
    let sampler = TensorSampler::new(f, interpolation);
    Ok(particles
        .x
        .par_iter()
        .zip(particles.labels.par_iter())
        .zip(particles.jac.par_iter())
        .map(|((x, label), j)| (sampler.at(*x) - j * f0_at(*label)).norm())
        .reduce(|| 0.0, f64::max))
}

#[derive(Debug, Serialize)]
struct TrajectoryRow {
    label: usize,
    t: f64,
    label_x1: f64,
    label_x2: f64,
    x1: f64,
    x2: f64,
    j11: f64,
    j12: f64,
    j21: f64,
    j22: f64,
    det_j: f64,
}

/// One CSV row per particle per frame.
pub fn write_trajectories_csv<W: Write>(out: W, frames: &[ParticleSet]) -> Result<(), FlowmapError> {
    let mut w = csv::Writer::from_writer(out);
    for frame in frames {
        for (i, ((label, x), j)) in frame.labels.iter().zip(&frame.x).zip(&frame.jac).enumerate() {
            w.serialize(TrajectoryRow {
                label: i,
                t: frame.t,
                label_x1: label[0],
                label_x2: label[1],
                x1: x[0],
                x2: x[1],
                j11: j[(0, 0)],
                j12: j[(0, 1)],
                j21: j[(1, 0)],
                j22: j[(1, 1)],
                det_j: j.determinant(),
            })?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
