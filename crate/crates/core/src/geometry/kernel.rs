//! Heat kernels for the generator `Δ`.
//!
//! Flat leaves use the Gaussian `(4πt)^{-n/2} exp(-r²/4t)`. The hyperbolic
//! plane uses McKean's integral
//!
//! ```text
//! p(ρ, t) = √2 e^{-t/4} (4πt)^{-3/2} ∫_ρ^∞ s e^{-s²/4t} / √(cosh s − cosh ρ) ds
//! ```
//!
//! evaluated after the substitution `s = ρ + v²`, which removes the inverse
//! square-root singularity at `s = ρ`.

use std::f64::consts::{LN_2, PI};

use super::{hyperbolic_distance, LeafKind, LeafModel};
use crate::error::{Error, Result};
use crate::quadrature::adaptive;

const REL_TOL: f64 = 1e-8;
const MAX_INTERVALS: usize = 4000;
/// Truncate once the integrand has fallen below `e^{-TAIL_EXPONENT}` ≈ 1e-16
/// of its scale.
const TAIL_EXPONENT: f64 = 37.0;

/// Transition density of leafwise Brownian motion with respect to the
/// Riemannian volume.
pub fn heat_kernel(model: &LeafModel, x: &[f64], y: &[f64], t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain("geometry::heat_kernel", format!("time must be positive, got {t}")));
    }
    if !model.contains(x) || !model.contains(y) {
        return Err(Error::domain("geometry::heat_kernel", "point outside the chart"));
    }
    match model.kind() {
        LeafKind::HyperbolicPlane => hyperbolic_radial_kernel(hyperbolic_distance(x, y), t),
        _ => {
            let n = model.dim() as f64;
            let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok((4.0 * PI * t).powf(-0.5 * n) * (-r2 / (4.0 * t)).exp())
        }
    }
}

fn ln_sinh(a: f64) -> f64 {
    if a > 20.0 {
        a - LN_2
    } else {
        a.sinh().ln()
    }
}

/// Hyperbolic heat kernel as a function of the distance `rho`.
pub fn hyperbolic_radial_kernel(rho: f64, t: f64) -> Result<f64> {
    Ok(log_hyperbolic_kernel(rho, t)?.exp())
}

/// `log p(ρ, t)` on the hyperbolic plane.
fn log_hyperbolic_kernel(rho: f64, t: f64) -> Result<f64> {
    const OP: &str = "geometry::hyperbolic_radial_kernel";
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(OP, format!("time must be positive, got {t}")));
    }
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::domain(OP, format!("distance must be finite and nonnegative, got {rho}")));
    }
    // exponent in v: -(2ρv² + v⁴)/4t; the tail bound solves it = TAIL_EXPONENT
    let v2max = -rho + (rho * rho + 4.0 * t * TAIL_EXPONENT).sqrt();
    let vmax = v2max.sqrt();
    let integrand = |v: f64| {
        if v <= 0.0 {
            return 0.0;
        }
        let v2 = v * v;
        let s = rho + v2;
        let log_den = 0.5 * (LN_2 + ln_sinh(rho + 0.5 * v2) + ln_sinh(0.5 * v2));
        2.0 * v * s * (-(2.0 * rho * v2 + v2 * v2) / (4.0 * t) - log_den).exp()
    };
    let r = adaptive(OP, integrand, 0.0, vmax, REL_TOL, 1e-300, MAX_INTERVALS)?;
    if !(r.value > 0.0) {
        return Err(Error::numeric(OP, format!("nonpositive kernel integral at rho={rho}, t={t}")));
    }
    Ok(0.5 * LN_2 - 0.25 * t - 1.5 * (4.0 * PI * t).ln() - rho * rho / (4.0 * t) + r.value.ln())
}

/// Four-point Lagrange interpolation on a uniform grid.
fn cubic(values: &[f64], x0: f64, h: f64, x: f64) -> f64 {
    let n = values.len();
    let u = (x - x0) / h;
    let i = (u.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let s = u - i as f64;
    let (f0, f1, f2, f3) = (values[i], values[i + 1], values[i + 2], values[i + 3]);
    // nodes at s = 0, 1, 2, 3
    let l0 = -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0;
    let l1 = s * (s - 2.0) * (s - 3.0) / 2.0;
    let l2 = -s * (s - 1.0) * (s - 3.0) / 2.0;
    let l3 = s * (s - 1.0) * (s - 2.0) / 6.0;
    f0 * l0 + f1 * l1 + f2 * l2 + f3 * l3
}

/// Cached `log p(ρ, t)` on a fine radial grid, for bulk evaluation.
#[derive(Clone, Debug)]
pub struct HyperbolicKernelTable {
    t: f64,
    step: f64,
    rho_max: f64,
    /// `log p` at `ρ = (k - 2)·step`, extended evenly to two ghost nodes.
    log_values: Vec<f64>,
}

impl HyperbolicKernelTable {
    pub fn new(t: f64) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::domain("geometry::HyperbolicKernelTable", format!("time must be positive, got {t}")));
        }
        // beyond rho_max, p·sinh ρ < e^{-40}
        let rho_max = t + (t * t + 200.0 * t).sqrt() + 1.0;
        let step = (t.sqrt() / 50.0).min(0.01);
        let n = (rho_max / step).ceil() as usize + 1;
        let mut inner = Vec::with_capacity(n);
        for k in 0..n {
            inner.push(log_hyperbolic_kernel(k as f64 * step, t)?);
        }
        // p is even in ρ
        let mut log_values = vec![inner[2], inner[1]];
        log_values.extend(inner);
        Ok(HyperbolicKernelTable {
            t,
            step,
            rho_max,
            log_values,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Radius beyond which the table reports zero density.
    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    pub fn log_density(&self, rho: f64) -> f64 {
        if rho > self.rho_max {
            return f64::NEG_INFINITY;
        }
        cubic(&self.log_values, -2.0 * self.step, self.step, rho.abs())
    }

    pub fn density(&self, rho: f64) -> f64 {
        self.log_density(rho).exp()
    }

    /// Mass outside the truncation radius, `1 − ∫_0^{ρmax} p 2π sinh ρ dρ`.
    pub fn tail_mass(&self) -> f64 {
        let gl = crate::quadrature::GaussLegendre::new(8);
        let panels = (self.rho_max / 0.05).ceil() as usize;
        let m = gl.integrate(|r| self.density(r) * 2.0 * PI * r.sinh(), 0.0, self.rho_max, panels);
        (1.0 - m).abs()
    }
}

/// Density of the change of `log y` over time `t` for hyperbolic Brownian
/// motion, obtained by integrating the heat kernel over horocycles:
///
/// `K(δ) = 2 ∫_{|δ|}^∞ p(ρ,t) sinh ρ / √(2 e^δ (cosh ρ − cosh δ)) dρ`.
#[derive(Clone, Debug)]
pub struct HeightKernel {
    t: f64,
    lo: f64,
    step: f64,
    log_values: Vec<f64>,
}

impl HeightKernel {
    pub fn new(t: f64) -> Result<Self> {
        const OP: &str = "geometry::HeightKernel";
        let table = HyperbolicKernelTable::new(t)?;
        let sd = (2.0 * t).sqrt();
        let lo = (-t - 14.0 * sd).max(-table.rho_max() + 1e-9);
        let hi = (-t + 14.0 * sd).min(table.rho_max() - 1e-9);
        let step = (sd / 100.0).min(0.01);
        let n = ((hi - lo) / step).ceil() as usize + 1;
        let mut log_values = Vec::with_capacity(n);
        for k in 0..n {
            let delta = lo + k as f64 * step;
            let a = delta.abs();
            let vmax = (table.rho_max() - a).sqrt();
            let integrand = |v: f64| {
                if v <= 0.0 {
                    return 0.0;
                }
                let v2 = v * v;
                let rho = a + v2;
                // 2 p sinh ρ 2v / √(4 e^δ sinh(|δ|+v²/2) sinh(v²/2))
                let ln = table.log_density(rho) + ln_sinh(rho)
                    - 0.5 * (2.0 * LN_2 + delta + ln_sinh(a + 0.5 * v2) + ln_sinh(0.5 * v2));
                4.0 * v * ln.exp()
            };
            let r = adaptive(OP, integrand, 0.0, vmax, REL_TOL, 1e-300, MAX_INTERVALS)?;
            log_values.push(r.value.max(1e-320).ln());
        }
        Ok(HeightKernel {
            t,
            lo,
            step,
            log_values,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Support window `[lo, hi]` of the tabulated density.
    pub fn window(&self) -> (f64, f64) {
        (self.lo, self.lo + (self.log_values.len() - 1) as f64 * self.step)
    }

    pub fn density(&self, delta: f64) -> f64 {
        let (lo, hi) = self.window();
        if delta < lo || delta > hi {
            return 0.0;
        }
        cubic(&self.log_values, self.lo, self.step, delta).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;

    #[test]
    fn gaussian_kernel_value_and_domain() {
        let e1 = LeafModel::euclidean(1).unwrap();
        let v = heat_kernel(&e1, &[0.0], &[0.0], 1.0).unwrap();
        assert!((v - (4.0 * PI).powf(-0.5)).abs() < 1e-15);
        assert!((v - 0.2820948).abs() < 1e-7);
        assert!(heat_kernel(&e1, &[0.0], &[0.0], 0.0).is_err());
        assert!(heat_kernel(&e1, &[0.0], &[0.0], -1.0).is_err());
    }

    /// Direct midpoint rule in `s = ρ + u²` with 10⁶ nodes and the raw
    /// `cosh s − cosh ρ` difference.
    fn mckean_oracle(rho: f64, t: f64) -> f64 {
        let n = 1_000_000;
        let umax = 12.0;
        let h = umax / n as f64;
        let mut sum = 0.0;
        for k in 0..n {
            let u = (k as f64 + 0.5) * h;
            let s = rho + u * u;
            let den = (s.cosh() - rho.cosh()).sqrt();
            sum += 2.0 * u * s * (-s * s / (4.0 * t)).exp() / den * h;
        }
        2f64.sqrt() * (-t / 4.0).exp() / (4.0 * PI * t).powf(1.5) * sum
    }

    #[test]
    fn hyperbolic_kernel_matches_dense_quadrature() {
        let h = LeafModel::hyperbolic_plane();
        let x = [0.0, 1.0];
        let y = [0.0, std::f64::consts::E];
        let p = heat_kernel(&h, &x, &y, 1.0).unwrap();
        let oracle = mckean_oracle(1.0, 1.0);
        assert!((p - oracle).abs() < 1e-7 * oracle, "{p} vs {oracle}");
        let q = heat_kernel(&h, &y, &x, 1.0).unwrap();
        assert!((p - q).abs() < 1e-12);
    }

    #[test]
    fn hyperbolic_kernel_solves_the_radial_heat_equation() {
        // ∂_t p = p'' + coth ρ p'
        let (rho, t, e) = (0.8, 0.7, 1e-3);
        let p = |r: f64, s: f64| hyperbolic_radial_kernel(r, s).unwrap();
        let dt = (p(rho, t + e) - p(rho, t - e)) / (2.0 * e);
        let d1 = (p(rho + e, t) - p(rho - e, t)) / (2.0 * e);
        let d2 = (p(rho + e, t) - 2.0 * p(rho, t) + p(rho - e, t)) / (e * e);
        let lap = d2 + d1 / rho.tanh();
        assert!((dt - lap).abs() < 1e-5, "{dt} vs {lap}");
    }

    #[test]
    fn kernels_are_normalized() {
        let gl = GaussLegendre::new(10);
        for &t in &[0.25, 1.0] {
            let table = HyperbolicKernelTable::new(t).unwrap();
            assert!(table.tail_mass() < 1e-3, "t={t} tail {}", table.tail_mass());
            let e1 = LeafModel::euclidean(1).unwrap();
            let w = 12.0 * (2.0 * t).sqrt();
            let m = gl.integrate(|z| heat_kernel(&e1, &[0.0], &[z], t).unwrap(), -w, w, 40);
            assert!((m - 1.0).abs() < 1e-3);
            let e2 = LeafModel::euclidean(2).unwrap();
            let m2 = gl.integrate(|r| heat_kernel(&e2, &[0.0, 0.0], &[r, 0.0], t).unwrap() * 2.0 * PI * r, 0.0, w, 40);
            assert!((m2 - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn table_interpolates_direct_values() {
        let table = HyperbolicKernelTable::new(0.5).unwrap();
        for &r in &[0.0, 0.0123, 0.7771, 3.3, 6.05] {
            let direct = hyperbolic_radial_kernel(r, 0.5).unwrap();
            assert!((table.density(r) - direct).abs() < 1e-7 * direct, "rho={r}");
        }
    }

    #[test]
    fn chapman_kolmogorov_on_the_hyperbolic_plane() {
        // p(x,y,s+t) = ∫ p(x,z,s) p(z,y,t) dVol(z), in geodesic polar coordinates at x
        let (s, t) = (0.25, 0.5);
        let ps = HyperbolicKernelTable::new(s).unwrap();
        let pt = HyperbolicKernelTable::new(t).unwrap();
        let x = [0.0, 1.0];
        let gl = GaussLegendre::new(10);
        for &target in &[0.3, 1.2] {
            let y = super::super::hyperbolic_polar_point(&x, target, 0.4);
            let inner = |r: f64| {
                gl.integrate(
                    |th| {
                        let z = super::super::hyperbolic_polar_point(&x, r, th);
                        pt.density(hyperbolic_distance(&z, &y))
                    },
                    0.0,
                    2.0 * PI,
                    16,
                ) * ps.density(r)
                    * r.sinh()
            };
            let conv = gl.integrate(inner, 0.0, ps.rho_max(), 60);
            let direct = hyperbolic_radial_kernel(target, s + t).unwrap();
            assert!((conv - direct).abs() < 1e-3, "{conv} vs {direct}");
        }
    }

    #[test]
    fn height_kernel_is_the_log_normal_law() {
        let t = 1.0;
        let k = HeightKernel::new(t).unwrap();
        for &d in &[-4.0, -2.5, -1.0, -0.2, 0.0, 0.6, 2.0] {
            let g = (-(d + t) * (d + t) / (4.0 * t)).exp() / (4.0 * PI * t).sqrt();
            assert!((k.density(d) - g).abs() < 1e-6 * g.max(1e-3), "delta={d}: {} vs {g}", k.density(d));
        }
    }
}
