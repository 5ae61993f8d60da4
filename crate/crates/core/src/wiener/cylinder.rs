//! Cylinder-set probabilities `W_x(ω(t_1) ∈ B_1, …, ω(t_m) ∈ B_m)`.
//!
//! The quadrature route evaluates the nested diffusion
//! `D_{t_1}(χ_{B_1} D_{t_2 − t_1}(χ_{B_2} ⋯))(x)` backwards on Gauss–Legendre
//! nodes inside each set. Boxes on flat leaves factor into one-dimensional
//! problems; on the half-plane only height constraints are supported, where
//! `log y` is itself Markov with the horocyclic kernel.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{HeightKernel, LeafKind, LeafModel};
use crate::quadrature::GaussLegendre;

use super::Ensemble;

#[derive(Clone, Debug, PartialEq)]
pub enum CylinderSet {
    /// `lo ≤ ω(t) ≤ hi` on a one-dimensional flat leaf; ends may be infinite.
    Interval { lo: f64, hi: f64 },
    /// Coordinate box on a flat leaf.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `lo ≤ y(ω(t)) ≤ hi` on the half-plane.
    Heights { lo: f64, hi: f64 },
}

impl CylinderSet {
    fn contains(&self, p: &[f64]) -> bool {
        match self {
            CylinderSet::Interval { lo, hi } => *lo <= p[0] && p[0] <= *hi,
            CylinderSet::Box { lo, hi } => p.iter().zip(lo.iter().zip(hi)).all(|(c, (a, b))| a <= c && c <= b),
            CylinderSet::Heights { lo, hi } => *lo <= p[1] && p[1] <= *hi,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CylinderEvent {
    pub time: f64,
    pub set: CylinderSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CylinderResult {
    /// Reference value; `None` when the quadrature route does not apply
    /// (more than four constraints).
    pub quadrature: Option<f64>,
    /// Change of the quadrature value under panel halving.
    pub quadrature_error: f64,
    pub monte_carlo: f64,
    pub mc_stderr: f64,
    pub paths: usize,
}

const OP: &str = "wiener::cylinder_probability";

/// One-dimensional nested quadrature. `events` hold `(time, lo, hi)`, already
/// clipped to a truncation window; `kernel(τ, a, b)` is the transition density.
fn nested_1d<K: FnMut(f64, f64, f64) -> f64>(x0: f64, events: &[(f64, f64, f64)], panel: f64, mut kernel: K) -> f64 {
    let gl = GaussLegendre::new(8);
    let rules: Vec<(Vec<f64>, Vec<f64>)> = events
        .iter()
        .map(|&(_, lo, hi)| {
            if hi <= lo {
                (vec![], vec![])
            } else {
                gl.composite_nodes(lo, hi, ((hi - lo) / panel).ceil().max(1.0) as usize)
            }
        })
        .collect();
    let m = events.len();
    let mut g = vec![1.0; rules[m - 1].0.len()];
    for k in (0..m - 1).rev() {
        let tau = events[k + 1].0 - events[k].0;
        let (zs, ws) = &rules[k + 1];
        let next: Vec<f64> = rules[k]
            .0
            .iter()
            .map(|&y| zs.iter().zip(ws).zip(&g).map(|((&z, w), gz)| w * kernel(tau, y, z) * gz).sum())
            .collect();
        g = next;
    }
    let (zs, ws) = &rules[0];
    zs.iter().zip(ws).zip(&g).map(|((&z, w), gz)| w * kernel(events[0].0, x0, z) * gz).sum()
}

fn gaussian(tau: f64, a: f64, b: f64) -> f64 {
    (-(b - a) * (b - a) / (4.0 * tau)).exp() / (4.0 * PI * tau).sqrt()
}

fn quadrature(model: &LeafModel, x: &[f64], events: &[CylinderEvent], refine: f64) -> Result<f64> {
    let t_max = events.last().map(|e| e.time).unwrap_or(0.0);
    let min_gap = events
        .iter()
        .scan(0.0, |prev, e| {
            let g = e.time - *prev;
            *prev = e.time;
            Some(g)
        })
        .fold(f64::INFINITY, f64::min);
    let panel = 0.2 * (2.0 * min_gap).sqrt() * refine;
    let reach = 14.0 * (2.0 * t_max).sqrt();
    match model.kind() {
        LeafKind::HyperbolicPlane => {
            let l0 = x[1].ln();
            let (wlo, whi) = (l0 - t_max - reach, l0 + reach);
            let mut clipped = Vec::with_capacity(events.len());
            for e in events {
                let CylinderSet::Heights { lo, hi } = e.set else {
                    return Err(Error::capability(OP, "only height constraints have a quadrature route on the half-plane"));
                };
                let llo = if lo > 0.0 { lo.ln() } else { f64::NEG_INFINITY };
                let lhi = if hi > 0.0 { hi.ln() } else { f64::NEG_INFINITY };
                clipped.push((e.time, llo.max(wlo), lhi.min(whi)));
            }
            let mut kernels: HashMap<u64, HeightKernel> = HashMap::new();
            let mut prev = 0.0;
            for e in events {
                let tau = e.time - prev;
                prev = e.time;
                if let std::collections::hash_map::Entry::Vacant(v) = kernels.entry(tau.to_bits()) {
                    v.insert(HeightKernel::new(tau)?);
                }
            }
            Ok(nested_1d(l0, &clipped, panel, |tau, a, b| kernels[&tau.to_bits()].density(b - a)))
        }
        _ => {
            let mut total = 1.0;
            for c in 0..model.dim() {
                let mut clipped = Vec::with_capacity(events.len());
                for e in events {
                    let (lo, hi) = match &e.set {
                        CylinderSet::Interval { lo, hi } if model.dim() == 1 => (*lo, *hi),
                        CylinderSet::Box { lo, hi } if lo.len() == model.dim() && hi.len() == model.dim() => (lo[c], hi[c]),
                        _ => return Err(Error::domain(OP, "constraint shape does not match the leaf")),
                    };
                    clipped.push((e.time, lo.max(x[c] - reach), hi.min(x[c] + reach)));
                }
                total *= nested_1d(x[c], &clipped, panel, gaussian);
            }
            Ok(total)
        }
    }
}

/// Probability of a cylinder set by nested quadrature and by Monte Carlo on
/// `mc_paths` paths with step `dt` (event times must lie on that grid).
pub fn cylinder_probability(
    model: &LeafModel,
    x: &[f64],
    events: &[CylinderEvent],
    mc_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<CylinderResult> {
    if events.is_empty() {
        return Err(Error::domain(OP, "at least one constraint is required"));
    }
    let mut prev = 0.0;
    for e in events {
        if !(e.time > prev) {
            return Err(Error::domain(OP, "constraint times must be positive and increasing"));
        }
        prev = e.time;
    }
    let (q, qerr) = if events.len() <= 4 {
        let coarse = quadrature(model, x, events, 1.0)?;
        let fine = quadrature(model, x, events, 0.5)?;
        (Some(fine), (fine - coarse).abs())
    } else {
        (None, f64::NAN)
    };
    let horizon = events.last().expect("nonempty").time;
    let ens = Ensemble::new(*model, x.to_vec(), horizon, dt, mc_paths.max(1), seed)?;
    let mut idx = Vec::with_capacity(events.len());
    for e in events {
        let k = (e.time / dt).round();
        if (k * dt - e.time).abs() > 1e-9 * e.time.max(1.0) {
            return Err(Error::domain(OP, format!("constraint time {} is off the dt = {dt} grid", e.time)));
        }
        idx.push(k as usize);
    }
    let hits = ens.map(|_, p| Ok(events.iter().zip(&idx).all(|(e, &k)| e.set.contains(p.point(k)))))?;
    let n = hits.len() as f64;
    let p = hits.iter().filter(|h| **h).count() as f64 / n;
    Ok(CylinderResult {
        quadrature: q,
        quadrature_error: qerr,
        monte_carlo: p,
        mc_stderr: (p * (1.0 - p) / n).sqrt(),
        paths: hits.len(),
    })
}
