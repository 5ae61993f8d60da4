//! Integral bounds for the extreme exponents, Candel's formula for rank one,
//! the exponent functionals `φ_n` and the projective fixed-point search.

mod ledrappier;
mod phi;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cocycle::CocycleSpec;
use crate::error::{Error, Result};
use crate::geometry::{LeafKind, LeafModel, ScalarField};
use crate::lamination::HarmonicMeasureModel;
use crate::rng::{map_indexed, StreamSeed};

pub use ledrappier::{ledrappier_check, FixedPoint, LedrappierOptions, LedrappierResult, ProjectiveGrid, ProjectiveState};
pub use phi::{phi_functional, PhiEstimate, PhiOptions};

/// A value with its Monte Carlo standard error and a deterministic error bound
/// (stencil, quadrature or optimization).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub error: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: 0.0, error: 0.0 }
    }

    /// `√(stderr² + error²)`.
    pub fn combined(&self) -> f64 {
        self.stderr.hypot(self.error)
    }

    fn negated(self) -> Self {
        Estimate { value: -self.value, ..self }
    }
}

/// Base points at which pointwise functionals are averaged: one point of a
/// leaf (per-leaf mode) or draws from a harmonic measure mapped to the chart
/// of their leaf.
#[derive(Clone, Debug, PartialEq)]
pub struct Sites {
    model: LeafModel,
    points: Vec<Vec<f64>>,
    sampled: bool,
}

impl Sites {
    pub fn point(model: LeafModel, x: Vec<f64>) -> Result<Self> {
        if !model.contains(&x) {
            return Err(Error::domain("bounds::Sites", format!("{x:?} is outside the {} chart", model.name())));
        }
        Ok(Sites { model, points: vec![x], sampled: false })
    }

    pub fn sample(mu: &HarmonicMeasureModel, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("bounds::Sites", "need at least one sample"));
        }
        let root = StreamSeed::new(seed).tagged("sites");
        let points = (0..n)
            .map(|i| Ok(mu.lamination().leaf_factory(&mu.sample(root.child(i as u64)))?.1.origin()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Sites { model: mu.lamination().leaf(), points, sampled: true })
    }

    pub fn model(&self) -> &LeafModel {
        &self.model
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn is_sampled(&self) -> bool {
        self.sampled
    }

    fn average(&self, values: &[(f64, f64)]) -> Estimate {
        let n = values.len() as f64;
        let mean = values.iter().map(|v| v.0).sum::<f64>() / n;
        let error = values.iter().map(|v| v.1).fold(0.0, f64::max);
        let stderr = if values.len() > 1 {
            (values.iter().map(|v| (v.0 - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Estimate { value: mean, stderr, error }
    }
}

fn unit_vector(op: &'static str, u: &DVector<f64>, d: usize) -> Result<()> {
    if u.len() != d || (u.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::domain(op, format!("u must be a unit vector of length {d}")));
    }
    Ok(())
}

/// The specialization `f_{u,x}(y) = log ‖A(x → y) u‖` on the chart of the leaf.
pub fn specialization(c: &CocycleSpec, model: &LeafModel, x: &[f64], u: &DVector<f64>) -> Result<ScalarField> {
    const OP: &str = "bounds::specialization";
    unit_vector(OP, u, c.rank())?;
    c.check_model(model)?;
    if !model.contains(x) {
        return Err(Error::domain(OP, format!("{x:?} is outside the chart")));
    }
    c.patch_value(model, x, x)?;
    let (c, model, x, u) = (c.clone(), *model, x.to_vec(), u.clone());
    Ok(ScalarField::new(&format!("f_u,x[{}]", c.name()), move |y| match c.patch_value(&model, &x, y) {
        Ok(a) => a.log_norm_of(&u),
        Err(_) => f64::NAN,
    }))
}

/// `u ↦ (Δ f_{u,x})(x)` as a fixed linear combination of `log ‖M_j u‖` over
/// the stencil points `x ± h e_i`, `x ± (h/2) e_i`. The coarse and fine
/// stencils are kept apart for the Richardson error estimate.
pub(crate) struct StencilFunctional {
    mats: Vec<DMatrix<f64>>,
    coarse: Vec<f64>,
    fine: Vec<f64>,
}

impl StencilFunctional {
    pub fn new(c: &CocycleSpec, model: &LeafModel, x: &[f64], rel_step: f64) -> Result<Self> {
        const OP: &str = "bounds::delta_functionals";
        c.check_model(model)?;
        if !model.contains(x) {
            return Err(Error::domain(OP, format!("{x:?} is outside the chart")));
        }
        let (mut h, factor) = match model.kind() {
            LeafKind::HyperbolicPlane => (rel_step * x[1], x[1] * x[1]),
            _ => (rel_step, 1.0),
        };
        if model.kind() == LeafKind::HyperbolicPlane {
            while x[1] - 2.0 * h <= 0.0 {
                h *= 0.5;
            }
        }
        let mut mats = Vec::new();
        let mut coarse = Vec::new();
        let mut fine = Vec::new();
        for i in 0..x.len() {
            for (off, wc, wf) in [(h, 1.0, 0.0), (0.5 * h, 0.0, 4.0)] {
                for s in [1.0, -1.0] {
                    let mut y = x.to_vec();
                    y[i] += s * off;
                    let a = c.patch_value(model, x, &y)?;
                    // stencil points are close, so the scale folds back safely
                    let a = a.matrix * a.log_scale.exp();
                    if !a.iter().all(|v| v.is_finite()) {
                        return Err(Error::numeric(OP, format!("non-finite cocycle value near {x:?}")));
                    }
                    mats.push(a);
                    coarse.push(wc * factor / (h * h));
                    fine.push(wf * factor / (h * h));
                }
            }
        }
        Ok(StencilFunctional { mats, coarse, fine })
    }

    /// `(value, error)` at a nonzero vector.
    pub fn eval(&self, u: &DVector<f64>) -> (f64, f64) {
        let mut c = 0.0;
        let mut f = 0.0;
        let lu = u.norm().ln();
        for ((m, wc), wf) in self.mats.iter().zip(&self.coarse).zip(&self.fine) {
            let l = (m * u).norm().ln() - lu;
            c += wc * l;
            f += wf * l;
        }
        ((4.0 * f - c) / 3.0, (f - c).abs() / 3.0)
    }

    /// Tangential gradient of the Richardson value at a unit vector.
    fn gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(u.len());
        for ((m, wc), wf) in self.mats.iter().zip(&self.coarse).zip(&self.fine) {
            let mu = m * u;
            let w = (4.0 * wf - wc) / 3.0;
            g += (m.transpose() * &mu) * (w / mu.norm_squared());
        }
        let radial = g.dot(u);
        g - u * radial
    }

    /// Projected gradient ascent (`sign = 1`) or descent (`sign = -1`) on the
    /// sphere with step halving.
    fn climb(&self, u0: &DVector<f64>, steps: usize, sign: f64) -> (DVector<f64>, f64) {
        let mut u = u0.clone();
        let mut val = sign * self.eval(&u).0;
        let mut eta = 0.5;
        for _ in 0..steps {
            let g = self.gradient(&u) * sign;
            if g.norm() < 1e-13 {
                break;
            }
            loop {
                let cand = (&u + &g * (eta / g.norm().max(1.0))).normalize();
                let v = sign * self.eval(&cand).0;
                if v > val {
                    u = cand;
                    val = v;
                    eta = (eta * 2.0).min(1.0);
                    break;
                }
                eta *= 0.5;
                if eta < 1e-12 {
                    break;
                }
            }
            if eta < 1e-12 {
                break;
            }
        }
        (u, sign * val)
    }
}

/// Quasi-random unit vectors: equally spaced directions on `P(ℝ²)`, Halton
/// points pushed through the normal quantile and normalized otherwise.
pub fn sphere_samples(d: usize, n: usize) -> Vec<DVector<f64>> {
    match d {
        0 => vec![],
        1 => vec![DVector::from_element(1, 1.0)],
        2 => (0..n)
            .map(|k| {
                let t = std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
                DVector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect(),
        _ => {
            const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
            let normal = Normal::new(0.0, 1.0).expect("standard normal");
            (1..=n as u64)
                .map(|k| DVector::from_fn(d, |i, _| normal.inverse_cdf(halton(k, PRIMES[i]))).normalize())
                .collect()
        }
    }
}

fn halton(mut k: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while k > 0 {
        f /= base as f64;
        r += f * (k % base) as f64;
        k /= base;
    }
    r
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaOptions {
    /// Quasi-random sphere directions.
    pub samples: usize,
    pub ascent_steps: usize,
    /// Local optima refined from the best samples; their spread is the
    /// optimization gap estimate.
    pub refine: usize,
    /// Stencil step, relative to the height on the half-plane.
    pub rel_step: f64,
}

impl Default for DeltaOptions {
    fn default() -> Self {
        DeltaOptions {
            samples: 2048,
            ascent_steps: 50,
            refine: 5,
            rel_step: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeltaFunctionals {
    /// `δ̄(A)(x) = sup_u (Δ f_{u,x})(x)`.
    pub upper: f64,
    /// `δ̲(A)(x) = inf_u (Δ f_{u,x})(x)`.
    pub lower: f64,
    pub argmax: DVector<f64>,
    pub argmin: DVector<f64>,
    /// Stencil error plus optimization gap.
    pub upper_error: f64,
    pub lower_error: f64,
}

pub fn delta_functionals(c: &CocycleSpec, model: &LeafModel, x: &[f64], opts: &DeltaOptions) -> Result<DeltaFunctionals> {
    const OP: &str = "bounds::delta_functionals";
    let d = c.rank();
    if d > 8 {
        return Err(Error::capability(OP, format!("rank {d} exceeds the sphere sampling budget of 8")));
    }
    let st = StencilFunctional::new(c, model, x, opts.rel_step)?;
    let dirs = sphere_samples(d, opts.samples.max(1));
    let vals: Vec<f64> = dirs.iter().map(|u| st.eval(u).0).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(OP, format!("non-finite Laplacian of the specialization at {x:?}")));
    }
    let mut order: Vec<usize> = (0..dirs.len()).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let k = opts.refine.clamp(1, dirs.len());
    let side = |idx: &[usize], sign: f64| {
        let opt: Vec<(DVector<f64>, f64)> = idx.iter().map(|&i| st.climb(&dirs[i], opts.ascent_steps, sign)).collect();
        let best = opt
            .iter()
            .max_by(|a, b| (sign * a.1).total_cmp(&(sign * b.1)))
            .expect("nonempty")
            .clone();
        let lo = opt.iter().map(|o| o.1).fold(f64::INFINITY, f64::min);
        let hi = opt.iter().map(|o| o.1).fold(f64::NEG_INFINITY, f64::max);
        let err = st.eval(&best.0).1 + (hi - lo);
        (best.0, best.1, err)
    };
    let (argmax, upper, upper_error) = side(&order[..k], 1.0);
    let tail: Vec<usize> = order.iter().rev().take(k).copied().collect();
    let (argmin, lower, lower_error) = side(&tail, -1.0);
    Ok(DeltaFunctionals {
        upper,
        lower,
        argmax,
        argmin,
        upper_error,
        lower_error,
    })
}

/// `χ̄_max, χ̲_max, χ̄_min, χ̲_min` with the min side from the dual cocycle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiBounds {
    pub chi_max_upper: Estimate,
    pub chi_max_lower: Estimate,
    pub chi_min_upper: Estimate,
    pub chi_min_lower: Estimate,
}

impl ChiBounds {
    /// Whether `top` and `bottom` exponent estimates (with standard errors)
    /// lie in their brackets within `k` combined standard errors. Exact
    /// ties (zero errors on both sides) are allowed a rounding slack.
    pub fn brackets(&self, top: (f64, f64), bottom: (f64, f64), k: f64) -> bool {
        const ROUNDING: f64 = 1e-12;
        let inside = |x: (f64, f64), lo: &Estimate, hi: &Estimate| {
            x.0 >= lo.value - k * x.1.hypot(lo.combined()) - ROUNDING && x.0 <= hi.value + k * x.1.hypot(hi.combined()) + ROUNDING
        };
        inside(top, &self.chi_max_lower, &self.chi_max_upper) && inside(bottom, &self.chi_min_lower, &self.chi_min_upper)
    }
}

pub fn chi_bounds(c: &CocycleSpec, sites: &Sites, opts: &DeltaOptions) -> Result<ChiBounds> {
    let dual = CocycleSpec::dual(c.clone());
    let run = |spec: &CocycleSpec| -> Result<(Estimate, Estimate)> {
        let per = map_indexed(sites.points.len(), |i| delta_functionals(spec, &sites.model, &sites.points[i], opts))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let up: Vec<(f64, f64)> = per.iter().map(|d| (d.upper, d.upper_error)).collect();
        let lo: Vec<(f64, f64)> = per.iter().map(|d| (d.lower, d.lower_error)).collect();
        Ok((sites.average(&up), sites.average(&lo)))
    };
    let (max_upper, max_lower) = run(c)?;
    let (dual_upper, dual_lower) = run(&dual)?;
    Ok(ChiBounds {
        chi_max_upper: max_upper,
        chi_max_lower: max_lower,
        chi_min_lower: dual_upper.negated(),
        chi_min_upper: dual_lower.negated(),
    })
}

/// `∫ δα dμ` for a rank-one cocycle, `δα(x) = (Δ f)(x)` with `f` the
/// specialization.
pub fn candel_exponent(c: &CocycleSpec, sites: &Sites, rel_step: f64) -> Result<Estimate> {
    const OP: &str = "bounds::candel_exponent";
    if c.rank() != 1 {
        return Err(Error::domain(OP, format!("needs a rank-one cocycle, got rank {}", c.rank())));
    }
    let one = DVector::from_element(1, 1.0);
    let vals = map_indexed(sites.points.len(), |i| {
        let st = StencilFunctional::new(c, &sites.model, &sites.points[i], rel_step)?;
        Ok(st.eval(&one))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(sites.average(&vals))
}
