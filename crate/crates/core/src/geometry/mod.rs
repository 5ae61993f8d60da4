//! Model leaves and their closed-form geometry.
//!
//! Three leaves ship: flat `R^n`, the hyperbolic plane in upper half-plane
//! coordinates `(x, y)`, `y > 0`, and the real line used as the leaf of a linear
//! foliation. The Laplacian is the full Laplace–Beltrami operator (generator of
//! Brownian motion is `Δ`, not `Δ/2`), so flat increments have variance `2t`.

mod kernel;
mod laplacian;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use kernel::{heat_kernel, hyperbolic_radial_kernel, HeightKernel, HyperbolicKernelTable};
pub use laplacian::{laplace_beltrami, laplacian_estimate, stencil_laplacian, LaplacianEstimate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LeafKind {
    Euclidean { dim: usize },
    HyperbolicPlane,
    Line,
}

/// Geometry of a model leaf.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LeafModel {
    kind: LeafKind,
}

impl LeafModel {
    pub fn euclidean(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("geometry::LeafModel", "dimension must be positive"));
        }
        Ok(LeafModel {
            kind: LeafKind::Euclidean { dim },
        })
    }

    pub fn hyperbolic_plane() -> Self {
        LeafModel {
            kind: LeafKind::HyperbolicPlane,
        }
    }

    pub fn line() -> Self {
        LeafModel { kind: LeafKind::Line }
    }

    pub fn kind(&self) -> LeafKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            LeafKind::Euclidean { dim } => dim,
            LeafKind::HyperbolicPlane => 2,
            LeafKind::Line => 1,
        }
    }

    pub fn is_flat(&self) -> bool {
        !matches!(self.kind, LeafKind::HyperbolicPlane)
    }

    /// Sectional curvature bounds `(a, b)` with `a <= K <= b`.
    pub fn curvature_bounds(&self) -> (f64, f64) {
        match self.kind {
            LeafKind::HyperbolicPlane => (-1.0, -1.0),
            _ => (0.0, 0.0),
        }
    }

    /// Every shipped leaf is simply connected.
    pub fn injectivity_radius(&self) -> f64 {
        f64::INFINITY
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter().all(|c| c.is_finite())
            && match self.kind {
                LeafKind::HyperbolicPlane => p[1] > 0.0,
                _ => true,
            }
    }

    pub fn point(&self, coords: impl Into<Vec<f64>>) -> Result<LeafPoint> {
        let coords = coords.into();
        if !self.contains(&coords) {
            return Err(Error::domain(
                "geometry::LeafModel::point",
                format!("{coords:?} is not a point of the {} chart", self.name()),
            ));
        }
        Ok(LeafPoint { coords })
    }

    /// Metric tensor in chart coordinates.
    pub fn metric_tensor(&self, p: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        match self.kind {
            LeafKind::HyperbolicPlane => DMatrix::identity(n, n) / (p[1] * p[1]),
            _ => DMatrix::identity(n, n),
        }
    }

    /// Riemannian volume density `sqrt(det g)` in chart coordinates.
    pub fn volume_density(&self, p: &[f64]) -> f64 {
        match self.kind {
            LeafKind::HyperbolicPlane => 1.0 / (p[1] * p[1]),
            _ => 1.0,
        }
    }

    pub fn name(&self) -> String {
        match self.kind {
            LeafKind::Euclidean { dim } => format!("euclidean-{dim}"),
            LeafKind::HyperbolicPlane => "hyperbolic-plane".into(),
            LeafKind::Line => "line".into(),
        }
    }
}

/// A point of a leaf chart.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafPoint {
    coords: Vec<f64>,
}

impl LeafPoint {
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

impl std::ops::Deref for LeafPoint {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.coords
    }
}

type FieldFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Axis-aligned chart box bounding the support of a field.
#[derive(Clone, Debug, PartialEq)]
pub struct Support {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// A real function on a chart, optionally with a known Laplacian and a
/// declared compact support.
#[derive(Clone)]
pub struct ScalarField {
    name: Arc<str>,
    eval: Arc<FieldFn>,
    laplacian: Option<Arc<FieldFn>>,
    support: Option<Support>,
}

impl ScalarField {
    pub fn new(name: &str, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField {
            name: name.into(),
            eval: Arc::new(f),
            laplacian: None,
            support: None,
        }
    }

    pub fn constant(c: f64) -> Self {
        ScalarField::new("constant", move |_| c).with_laplacian(|_| 0.0)
    }

    pub fn with_laplacian(mut self, g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.laplacian = Some(Arc::new(g));
        self
    }

    pub fn with_support(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.support = Some(Support { lower, upper });
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        (self.eval)(p)
    }

    pub fn known_laplacian(&self, p: &[f64]) -> Option<f64> {
        self.laplacian.as_ref().map(|g| g(p))
    }

    pub fn support(&self) -> Option<&Support> {
        self.support.as_ref()
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("name", &self.name)
            .field("known_laplacian", &self.laplacian.is_some())
            .field("support", &self.support)
            .finish()
    }
}

/// Geodesic distance.
pub fn leaf_distance(model: &LeafModel, x: &[f64], y: &[f64]) -> f64 {
    match model.kind {
        LeafKind::HyperbolicPlane => hyperbolic_distance(x, y),
        _ => x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt(),
    }
}

/// `2 asinh(|x - y| / (2 sqrt(y1 y2)))`, stable for nearby points.
pub fn hyperbolic_distance(x: &[f64], y: &[f64]) -> f64 {
    let dx = x[0] - y[0];
    let dy = x[1] - y[1];
    let chord = (dx * dx + dy * dy).sqrt();
    2.0 * (chord / (2.0 * (x[1] * y[1]).sqrt())).asinh()
}

/// Point at geodesic distance `rho` from `center` in direction `theta`
/// (angle measured from the upward vertical).
pub fn hyperbolic_polar_point(center: &[f64], rho: f64, theta: f64) -> [f64; 2] {
    // disk point tanh(rho/2) e^{i theta} mapped by w = i(1+z)/(1-z), then scaled.
    let r = (0.5 * rho).tanh();
    let (zr, zi) = (r * theta.cos(), r * theta.sin());
    // (1+z)/(1-z)
    let nr = 1.0 + zr;
    let ni = zi;
    let dr = 1.0 - zr;
    let di = -zi;
    let den = dr * dr + di * di;
    let qr = (nr * dr + ni * di) / den;
    let qi = (ni * dr - nr * di) / den;
    // multiply by i
    let (wr, wi) = (-qi, qr);
    [center[0] + center[1] * wr, center[1] * wi]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distances() {
        let e2 = LeafModel::euclidean(2).unwrap();
        assert_eq!(leaf_distance(&e2, &[0.0, 0.0], &[3.0, 4.0]), 5.0);
        let h = LeafModel::hyperbolic_plane();
        let d = leaf_distance(&h, &[0.0, 1.0], &[0.0, std::f64::consts::E]);
        assert!((d - 1.0).abs() < 1e-15);
        // arccosh form
        let (p, q): ([f64; 2], [f64; 2]) = ([0.3, 0.7], [-1.1, 2.5]);
        let cosh = 1.0 + ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)) / (2.0 * p[1] * q[1]);
        assert!((hyperbolic_distance(&p, &q) - cosh.acosh()).abs() < 1e-12);
        assert_eq!(leaf_distance(&h, &p, &p), 0.0);
    }

    #[test]
    fn polar_points_sit_at_requested_distance() {
        let c = [0.4, 1.7];
        for &rho in &[0.01, 0.5, 2.0, 6.0] {
            for k in 0..8 {
                let th = k as f64 * 0.8;
                let p = hyperbolic_polar_point(&c, rho, th);
                assert!(p[1] > 0.0);
                assert!((hyperbolic_distance(&c, &p) - rho).abs() < 1e-9 * rho.max(1.0));
            }
        }
        // theta = 0 points straight up
        let p = hyperbolic_polar_point(&[0.0, 1.0], 1.0, 0.0);
        assert!(p[0].abs() < 1e-15 && (p[1] - std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn chart_validation() {
        let h = LeafModel::hyperbolic_plane();
        assert!(h.point(vec![0.0, -1.0]).is_err());
        assert!(h.point(vec![0.0, f64::NAN]).is_err());
        assert!(h.point(vec![0.0, 2.0]).is_ok());
        assert_eq!(h.curvature_bounds(), (-1.0, -1.0));
        assert_eq!(LeafModel::euclidean(3).unwrap().curvature_bounds(), (0.0, 0.0));
        assert!(LeafModel::line().injectivity_radius().is_infinite());
        let g = h.metric_tensor(&[0.0, 2.0]);
        assert!(g == g.transpose() && g.clone().cholesky().is_some());
    }
}
