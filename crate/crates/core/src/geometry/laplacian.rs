//! Central finite-difference Laplace–Beltrami operator.
//!
//! Both shipped metrics are conformally flat, so `Δf = λ(x)⁻¹ Σ ∂²_i f` with
//! `λ = 1` on flat leaves and `λ = y⁻²` on the half-plane.

use super::{LeafKind, LeafModel, ScalarField};
use crate::error::{Error, Result};

const MIN_STEP: f64 = 1e-9;

/// Laplacian of `f` at `x`. A known Laplacian rule takes precedence over the
/// stencil.
pub fn laplace_beltrami(model: &LeafModel, f: &ScalarField, x: &[f64], h: f64) -> Result<f64> {
    match f.known_laplacian(x) {
        Some(v) => Ok(v),
        None => stencil_laplacian(model, f, x, h),
    }
}

/// The raw second-order stencil, ignoring any known rule. On the half-plane
/// the step shrinks until the stencil stays at height `y − 2h > 0`.
pub fn stencil_laplacian(model: &LeafModel, f: &ScalarField, x: &[f64], h: f64) -> Result<f64> {
    const OP: &str = "geometry::laplace_beltrami";
    if !model.contains(x) {
        return Err(Error::domain(OP, format!("{x:?} is outside the chart")));
    }
    if !(h > 0.0) {
        return Err(Error::domain(OP, format!("step must be positive, got {h}")));
    }
    let mut h = h;
    if let LeafKind::HyperbolicPlane = model.kind() {
        while x[1] - 2.0 * h <= 0.0 {
            h *= 0.5;
        }
    }
    if h < MIN_STEP {
        return Err(Error::numeric(OP, format!("step shrank to {h:e} below the minimum {MIN_STEP:e}")));
    }
    let f0 = f.eval(x);
    let mut p = x.to_vec();
    let mut sum = 0.0;
    for i in 0..x.len() {
        p[i] = x[i] + h;
        let fp = f.eval(&p);
        p[i] = x[i] - h;
        let fm = f.eval(&p);
        p[i] = x[i];
        sum += (fp - 2.0 * f0 + fm) / (h * h);
    }
    let factor = match model.kind() {
        LeafKind::HyperbolicPlane => x[1] * x[1],
        _ => 1.0,
    };
    let v = factor * sum;
    if !v.is_finite() {
        return Err(Error::numeric(OP, format!("non-finite stencil value at {x:?}")));
    }
    Ok(v)
}

/// Stencil at `h` and `h/2` with a Richardson estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaplacianEstimate {
    /// Known-rule value if available, else the extrapolated stencil.
    pub value: f64,
    pub coarse: f64,
    pub fine: f64,
    pub richardson: f64,
    /// Estimated error of `value`: `|fine − coarse|/3`, or the discrepancy
    /// between the known rule and the extrapolation.
    pub error: f64,
}

pub fn laplacian_estimate(model: &LeafModel, f: &ScalarField, x: &[f64], h: f64) -> Result<LaplacianEstimate> {
    let coarse = stencil_laplacian(model, f, x, h)?;
    let fine = stencil_laplacian(model, f, x, 0.5 * h)?;
    let richardson = (4.0 * fine - coarse) / 3.0;
    let (value, error) = match f.known_laplacian(x) {
        Some(k) => (k, (k - richardson).abs()),
        None => (richardson, (fine - coarse).abs() / 3.0),
    };
    Ok(LaplacianEstimate {
        value,
        coarse,
        fine,
        richardson,
        error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn log_y() -> ScalarField {
        ScalarField::new("log-y", |p| p[1].ln())
    }

    #[test]
    fn stencil_examples() {
        let e1 = LeafModel::euclidean(1).unwrap();
        let sq = ScalarField::new("x^2", |p| p[0] * p[0]);
        for &x in &[-3.0, 0.0, 0.5, 7.0] {
            assert!((laplace_beltrami(&e1, &sq, &[x], 1e-3).unwrap() - 2.0).abs() < 1e-5);
        }
        let h = LeafModel::hyperbolic_plane();
        for p in [[0.0, 1.0], [2.0, 0.3], [-1.0, 5.0]] {
            let v = laplace_beltrami(&h, &log_y(), &p, 1e-3 * p[1]).unwrap();
            assert!((v + 1.0).abs() < 1e-5, "{v}");
        }
        let c = ScalarField::new("c", |_| 3.5);
        assert_eq!(stencil_laplacian(&h, &c, &[0.0, 1.0], 1e-3).unwrap(), 0.0);
        assert_eq!(laplace_beltrami(&h, &ScalarField::constant(2.0), &[0.0, 1.0], 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn step_shrinks_near_the_boundary() {
        let h = LeafModel::hyperbolic_plane();
        let v = stencil_laplacian(&h, &log_y(), &[0.0, 0.01], 0.1).unwrap();
        assert!((v + 1.0).abs() < 0.1);
        let err = stencil_laplacian(&h, &log_y(), &[0.0, 1e-12], 0.1).unwrap_err();
        assert!(matches!(err, Error::Numeric { .. }));
    }

    #[test]
    fn known_rule_is_cross_checked() {
        let h = LeafModel::hyperbolic_plane();
        let f = log_y().with_laplacian(|_| -1.0);
        let est = laplacian_estimate(&h, &f, &[0.3, 2.0], 1e-2).unwrap();
        assert_eq!(est.value, -1.0);
        assert!(est.error < 1e-6);
    }

    proptest! {
        #[test]
        fn second_order_convergence(x in -1.0f64..1.0, y in 0.5f64..2.0) {
            let e2 = LeafModel::euclidean(2).unwrap();
            let f = ScalarField::new("sin-cos", |p| p[0].sin() * p[1].cos());
            let exact = -2.0 * x.sin() * y.cos();
            let h = 0.1;
            let e1 = (stencil_laplacian(&e2, &f, &[x, y], h).unwrap() - exact).abs();
            let e2v = (stencil_laplacian(&e2, &f, &[x, y], h / 2.0).unwrap() - exact).abs();
            prop_assume!(e1 > 1e-9);
            let ratio = e1 / e2v;
            prop_assert!((3.5..=4.5).contains(&ratio), "ratio {}", ratio);

            let hp = LeafModel::hyperbolic_plane();
            let g = ScalarField::new("y^3 + x^4", |p| p[1].powi(3) + p[0].powi(4));
            let exact = y * y * (6.0 * y + 12.0 * x * x);
            let hh = 0.05;
            let a = (stencil_laplacian(&hp, &g, &[x, y], hh).unwrap() - exact).abs();
            let b = (stencil_laplacian(&hp, &g, &[x, y], hh / 2.0).unwrap() - exact).abs();
            let ratio = a / b;
            prop_assert!((3.5..=4.5).contains(&ratio), "ratio {}", ratio);
        }
    }
}
