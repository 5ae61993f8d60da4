//! The exponent functionals `φ(x,u) = E log ‖A(ω,1)u‖` and
//! `φ_n = (1/n) Σ_{i<n} D_i φ`, by Monte Carlo over paths of length `n` and by
//! nested quadrature against the law of the driver increments.

use nalgebra::{DMatrix, DVector};

use crate::cocycle::{evaluate_steps, CocycleSpec, Driver};
use crate::error::{Error, Result};
use crate::geometry::{HeightKernel, LeafModel};
use crate::lyapunov::mean_se;
use crate::quadrature::GaussLegendre;
use crate::rng::map_indexed;
use crate::wiener::Ensemble;

use super::Estimate;

const OP: &str = "bounds::phi_functional";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiOptions {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    /// Panel width of the increment quadrature.
    pub panel: f64,
}

impl Default for PhiOptions {
    fn default() -> Self {
        PhiOptions {
            paths: 4000,
            dt: 1.0 / 16.0,
            seed: 42,
            panel: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiEstimate {
    pub n: usize,
    /// `φ(x,u)` by quadrature.
    pub phi: Estimate,
    /// `(1/n) E log ‖A(ω,n)u‖` by Monte Carlo.
    pub route_a: Estimate,
    /// `(1/n) Σ_{i<n} D_i φ(x,u)` by nested quadrature.
    pub route_b: Estimate,
}

/// Quadrature nodes `(δ, weight·density)` for the driver increment over time `t`.
fn increment_rule(driver: Driver, t: f64, panel: f64) -> Result<Vec<(f64, f64)>> {
    let gl = GaussLegendre::new(8);
    let (lo, hi, density): (f64, f64, Box<dyn Fn(f64) -> f64>) = match driver {
        Driver::LogHeight => {
            let k = HeightKernel::new(t)?;
            let (lo, hi) = k.window();
            (lo, hi, Box::new(move |d| k.density(d)))
        }
        Driver::Coordinate(_) => {
            let var = 2.0 * t;
            let w = 14.0 * var.sqrt();
            (-w, w, Box::new(move |d: f64| (-d * d / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()))
        }
    };
    let (xs, ws) = gl.composite_nodes(lo, hi, ((hi - lo) / panel).ceil() as usize);
    let q: Vec<(f64, f64)> = xs.iter().zip(&ws).map(|(d, w)| (*d, w * density(*d))).collect();
    let top = q.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(q.into_iter().filter(|p| p.1 > 1e-30 * top).collect())
}

pub(crate) struct OneStep {
    rule: Vec<(f64, DMatrix<f64>, f64)>,
}

impl OneStep {
    pub fn new(c: &CocycleSpec, model: &LeafModel, driver: Driver, panel: f64) -> Result<Self> {
        let rule = increment_rule(driver, 1.0, panel)?
            .into_iter()
            .map(|(d, w)| {
                let a = c.driver_step(model, d)?;
                Ok((a.log_scale, a.matrix, w))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(OneStep { rule })
    }

    /// `φ(v) = ∫ K_1(δ) log ‖A(δ) v‖ dδ` for a unit vector `v`.
    pub fn phi(&self, v: &DVector<f64>) -> f64 {
        self.rule.iter().map(|(s, m, w)| w * (s + (m * v).norm().ln())).sum()
    }
}

/// `φ_n(x,u)` by quadrature with panel width `panel`, for a cocycle with a
/// homogeneous driver.
pub(crate) fn phi_quadrature(c: &CocycleSpec, model: &LeafModel, u: &DVector<f64>, n: usize, panel: f64) -> Result<(f64, f64)> {
    let driver = c
        .driver(model)
        .ok_or_else(|| Error::capability(OP, format!("{} has no homogeneous driver on {}; the quadrature route needs one", c.name(), model.name())))?;
    let one = OneStep::new(c, model, driver, panel)?;
    let phi0 = one.phi(u);
    let mut total = phi0;
    for i in 1..n {
        let rule = increment_rule(driver, i as f64, panel)?;
        let parts = map_indexed(rule.len(), |k| {
            let (d, w) = rule[k];
            let a = c.driver_step(model, d)?;
            let v = (&a.matrix * u).normalize();
            Ok(w * one.phi(&v))
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
        total += parts.iter().sum::<f64>();
    }
    Ok((phi0, total / n as f64))
}

pub fn phi_functional(c: &CocycleSpec, model: &LeafModel, x: &[f64], u: &DVector<f64>, n: usize, opts: &PhiOptions) -> Result<PhiEstimate> {
    super::unit_vector(OP, u, c.rank())?;
    c.check_model(model)?;
    if n == 0 || n > 4 {
        return Err(Error::domain(OP, format!("n must lie in 1..=4 for the nested quadrature, got {n}")));
    }
    let (phi, value) = phi_quadrature(c, model, u, n, opts.panel)?;
    let (phi_c, value_c) = phi_quadrature(c, model, u, n, 2.0 * opts.panel)?;
    let ens = Ensemble::new(*model, x.to_vec(), n as f64, opts.dt, opts.paths, opts.seed)?;
    let slopes = ens.map(|_, p| {
        let a = evaluate_steps(c, p, p.steps())?;
        Ok(a.log_norm_of(u) / n as f64)
    })?;
    let (mean, stderr) = mean_se(&slopes);
    Ok(PhiEstimate {
        n,
        phi: Estimate {
            value: phi,
            stderr: 0.0,
            error: (phi - phi_c).abs(),
        },
        route_a: Estimate { value: mean, stderr, error: 0.0 },
        route_b: Estimate {
            value,
            stderr: 0.0,
            error: (value - value_c).abs(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::Potential;

    #[test]
    fn busemann_phi_is_minus_one() {
        let h = LeafModel::hyperbolic_plane();
        let one = DVector::from_element(1, 1.0);
        let e = phi_functional(&CocycleSpec::busemann(), &h, &[0.0, 1.0], &one, 1, &PhiOptions::default()).unwrap();
        assert!((e.phi.value + 1.0).abs() < 1e-6, "{e:?}");
        assert!((e.route_a.value + 1.0).abs() < 3.0 * e.route_a.stderr);
    }

    #[test]
    fn identity_is_zero() {
        let e1 = LeafModel::euclidean(1).unwrap();
        let u = DVector::from_vec(vec![0.6, 0.8]);
        let e = phi_functional(&CocycleSpec::identity(2), &e1, &[0.0], &u, 2, &PhiOptions::default()).unwrap();
        assert!(e.phi.value.abs() < 1e-14 && e.route_b.value.abs() < 1e-14 && e.route_a.value.abs() < 1e-14);
    }

    #[test]
    fn routes_agree_on_a_mixing_direction() {
        let h = LeafModel::hyperbolic_plane();
        let c = CocycleSpec::diagonal_busemann(vec![1.0, 2.0]).unwrap();
        let u = DVector::from_vec(vec![1.0, 1.0]).normalize();
        for n in 1..=3 {
            let e = phi_functional(&c, &h, &[0.0, 1.0], &u, n, &PhiOptions::default()).unwrap();
            let tol = 2.0 * e.route_a.combined().hypot(e.route_b.combined());
            assert!((e.route_a.value - e.route_b.value).abs() < tol, "{e:?}");
            assert!(e.route_b.error < 1e-6);
        }
    }

    #[test]
    fn flat_driver_and_unsupported_specs() {
        let e1 = LeafModel::euclidean(1).unwrap();
        let c = CocycleSpec::one_form(vec![(Potential::Coordinate(0), DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -0.5]))]).unwrap();
        let u = DVector::from_vec(vec![1.0, 1.0]).normalize();
        let e = phi_functional(&c, &e1, &[0.0], &u, 2, &PhiOptions::default()).unwrap();
        assert!((e.route_a.value - e.route_b.value).abs() < 2.0 * e.route_a.combined().hypot(e.route_b.combined()));
        // ½ E log cosh δ over N(0, 2): positive
        assert!(e.phi.value > 0.0);
        let h = LeafModel::hyperbolic_plane();
        let x_coord = CocycleSpec::one_form(vec![(Potential::Coordinate(0), DMatrix::from_element(1, 1, 1.0))]).unwrap();
        let one = DVector::from_element(1, 1.0);
        assert!(matches!(phi_functional(&x_coord, &h, &[0.0, 1.0], &one, 1, &PhiOptions::default()), Err(Error::Capability { .. })));
        assert!(matches!(phi_functional(&CocycleSpec::busemann(), &h, &[0.0, 1.0], &one, 5, &PhiOptions::default()), Err(Error::Domain { .. })));
    }
}
