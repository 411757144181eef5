use crate::fields::{GridSpec, ScalarField, TensorField, VectorField};
use crate::spectral::deriv_coeffs;

/// `(∂₂ψ, −∂₁ψ)`, divergence-free by construction.
pub fn perpendicular_gradient(psi: &ScalarField) -> VectorField {
    let grid = psi.grid();
    let c = psi.spectral();
    let d2 = deriv_coeffs(grid, &c, 1);
    let d1: Vec<_> = deriv_coeffs(grid, &c, 0).into_iter().map(|z| -z).collect();
    VectorField::new(
        ScalarField::from_spectral(grid, d2).unwrap(),
        ScalarField::from_spectral(grid, d1).unwrap(),
    )
    .unwrap()
}

/// `u = (sin x₁ cos x₂, −cos x₁ sin x₂)`.
pub fn taylor_green(grid: &GridSpec) -> VectorField {
    VectorField::from_fns(grid, |x, y| x.sin() * y.cos(), |x, y| -x.cos() * y.sin())
}

/// `F = I + ε (∇^⊥ψ₁, ∇^⊥ψ₂)` with the low-mode stream functions
/// `ψ₁ = sin x₁ cos 2x₂`, `ψ₂ = cos 2x₁ sin x₂`.
pub fn perturbed_identity(grid: &GridSpec, amplitude: f64) -> TensorField {
    let identity = TensorField::identity(grid);
    let psi1 = ScalarField::from_fn(grid, |x, y| amplitude * x.sin() * (2.0 * y).cos());
    let psi2 = ScalarField::from_fn(grid, |x, y| amplitude * (2.0 * x).cos() * y.sin());
    let c1 = identity
        .column(0)
        .lin_comb(1.0, &perpendicular_gradient(&psi1), 1.0)
        .unwrap();
    let c2 = identity
        .column(1)
        .lin_comb(1.0, &perpendicular_gradient(&psi2), 1.0)
        .unwrap();
    TensorField::new(c1, c2).unwrap()
}
