//! Diffusion operators `D_t f(x) = ∫ p(x, y, t) f(y) dVol(y)` by quadrature.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{heat_kernel, hyperbolic_polar_point, HeightKernel, HyperbolicKernelTable, LeafKind, LeafModel, ScalarField};
use crate::quadrature::GaussLegendre;

/// Node layout of a diffusion grid.
#[derive(Clone, Debug, PartialEq)]
pub enum GridLayout {
    /// `lo + k·step`, `k < n`, on a one-dimensional flat leaf.
    Line { lo: f64, step: f64, n: usize },
    /// Tensor grid on the plane, first coordinate fastest.
    Plane { lo: [f64; 2], step: [f64; 2], n: [usize; 2] },
    /// Half-plane nodes `(0, e^{lo + k·step})` for functions of the height only.
    Heights { lo: f64, step: f64, n: usize },
    /// Scattered points; evaluation only, never a quadrature source.
    Points(Vec<Vec<f64>>),
}

impl GridLayout {
    pub fn len(&self) -> usize {
        match self {
            GridLayout::Line { n, .. } | GridLayout::Heights { n, .. } => *n,
            GridLayout::Plane { n, .. } => n[0] * n[1],
            GridLayout::Points(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, k: usize) -> Vec<f64> {
        match self {
            GridLayout::Line { lo, step, .. } => vec![lo + k as f64 * step],
            GridLayout::Plane { lo, step, n } => {
                let (i, j) = (k % n[0], k / n[0]);
                vec![lo[0] + i as f64 * step[0], lo[1] + j as f64 * step[1]]
            }
            GridLayout::Heights { lo, step, .. } => vec![0.0, (lo + k as f64 * step).exp()],
            GridLayout::Points(p) => p[k].clone(),
        }
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|k| self.node(k)).collect()
    }

    fn fits(&self, model: &LeafModel) -> bool {
        match self {
            GridLayout::Line { .. } => model.is_flat() && model.dim() == 1,
            GridLayout::Plane { .. } => model.is_flat() && model.dim() == 2,
            GridLayout::Heights { .. } => model.kind() == LeafKind::HyperbolicPlane,
            GridLayout::Points(p) => p.iter().all(|q| model.contains(q)),
        }
    }
}

/// Values of a function on a grid, with the kernel truncation tail of the
/// operation that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionGrid {
    model: LeafModel,
    layout: GridLayout,
    values: Vec<f64>,
    tail: f64,
}

impl DiffusionGrid {
    pub fn new(model: LeafModel, layout: GridLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::domain("wiener::DiffusionGrid", "value count differs from node count"));
        }
        if !layout.fits(&model) {
            return Err(Error::domain("wiener::DiffusionGrid", format!("layout does not fit the {} leaf", model.name())));
        }
        Ok(DiffusionGrid {
            model,
            layout,
            values,
            tail: 0.0,
        })
    }

    pub fn from_field(model: LeafModel, layout: GridLayout, f: &ScalarField) -> Result<Self> {
        let values = layout.nodes().iter().map(|p| f.eval(p)).collect();
        DiffusionGrid::new(model, layout, values)
    }

    pub fn model(&self) -> &LeafModel {
        &self.model
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest `|1 − kernel mass|` seen over the target nodes.
    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub enum DiffusionSource<'a> {
    Field(&'a ScalarField),
    Grid(&'a DiffusionGrid),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusionOptions {
    /// Half-width of the flat integration window in kernel standard
    /// deviations `√(2t)`; on the half-plane, the fraction `width_sds/12` of
    /// the tabulated kernel radius.
    pub width_sds: f64,
    /// Largest tolerated `|1 − kernel mass|`.
    pub max_tail: f64,
}

impl Default for DiffusionOptions {
    fn default() -> Self {
        DiffusionOptions {
            width_sds: 12.0,
            max_tail: 1e-4,
        }
    }
}

const OP: &str = "wiener::diffusion_apply";

fn check_tail(tail: f64, opts: &DiffusionOptions) -> Result<()> {
    if tail > opts.max_tail {
        return Err(Error::domain(
            OP,
            format!("kernel truncation tail {tail:e} exceeds {:e}; enlarge the grid", opts.max_tail),
        ));
    }
    Ok(())
}

/// `D_t` applied to a field or a grid, evaluated on `targets`.
pub fn diffusion_apply(
    model: &LeafModel,
    source: DiffusionSource<'_>,
    t: f64,
    targets: &GridLayout,
    opts: &DiffusionOptions,
) -> Result<DiffusionGrid> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain(OP, format!("time must be nonnegative, got {t}")));
    }
    if !targets.fits(model) {
        return Err(Error::domain(OP, format!("target layout does not fit the {} leaf", model.name())));
    }
    match source {
        DiffusionSource::Field(f) => apply_field(model, f, t, targets, opts),
        DiffusionSource::Grid(g) => {
            if g.model != *model {
                return Err(Error::domain(OP, "grid belongs to a different leaf"));
            }
            apply_grid(model, g, t, targets, opts)
        }
    }
}

fn apply_field(model: &LeafModel, f: &ScalarField, t: f64, targets: &GridLayout, opts: &DiffusionOptions) -> Result<DiffusionGrid> {
    if t == 0.0 {
        return DiffusionGrid::from_field(*model, targets.clone(), f);
    }
    let gl = GaussLegendre::new(8);
    let nodes = targets.nodes();
    let mut values = Vec::with_capacity(nodes.len());
    let worst;
    match (model.kind(), targets) {
        (LeafKind::HyperbolicPlane, GridLayout::Heights { .. }) => {
            let k = HeightKernel::new(t)?;
            let (lo, hi) = k.window();
            let (xs, ws) = gl.composite_nodes(lo, hi, ((hi - lo) / 0.1).ceil() as usize);
            let mass: f64 = xs.iter().zip(&ws).map(|(d, w)| w * k.density(*d)).sum();
            worst = (1.0 - mass).abs();
            for x in &nodes {
                let v: f64 = xs
                    .iter()
                    .zip(&ws)
                    .map(|(d, w)| w * k.density(*d) * f.eval(&[0.0, x[1] * d.exp()]))
                    .sum();
                values.push(v);
            }
        }
        (LeafKind::HyperbolicPlane, _) => {
            let table = HyperbolicKernelTable::new(t)?;
            let cut = table.rho_max() * (opts.width_sds / 12.0).min(1.0);
            let (rs, ws) = gl.composite_nodes(0.0, cut, (cut / 0.1).ceil() as usize);
            let n_theta = 64;
            let mass: f64 = rs.iter().zip(&ws).map(|(r, w)| w * table.density(*r) * 2.0 * PI * r.sinh()).sum();
            worst = (1.0 - mass).abs();
            for x in &nodes {
                let mut v = 0.0;
                for (r, w) in rs.iter().zip(&ws) {
                    let mut ring = 0.0;
                    for j in 0..n_theta {
                        let th = 2.0 * PI * j as f64 / n_theta as f64;
                        ring += f.eval(&hyperbolic_polar_point(x, *r, th));
                    }
                    v += w * table.density(*r) * r.sinh() * ring * 2.0 * PI / n_theta as f64;
                }
                values.push(v);
            }
        }
        _ if model.dim() <= 2 => {
            let half = opts.width_sds * (2.0 * t).sqrt();
            let panels = (2.0 * opts.width_sds).ceil() as usize;
            let (us, ws) = gl.composite_nodes(-half, half, panels);
            let g1: Vec<f64> = us.iter().map(|u| (-u * u / (4.0 * t)).exp() / (4.0 * PI * t).sqrt()).collect();
            let mass1: f64 = g1.iter().zip(&ws).map(|(g, w)| g * w).sum();
            let mass = mass1.powi(model.dim() as i32);
            worst = (1.0 - mass).abs();
            for x in &nodes {
                let mut v = 0.0;
                if model.dim() == 1 {
                    for ((u, w), g) in us.iter().zip(&ws).zip(&g1) {
                        v += w * g * f.eval(&[x[0] + u]);
                    }
                } else {
                    let mut p = [0.0; 2];
                    for ((u, wu), gu) in us.iter().zip(&ws).zip(&g1) {
                        p[0] = x[0] + u;
                        for ((s, ws2), gs) in us.iter().zip(&ws).zip(&g1) {
                            p[1] = x[1] + s;
                            v += wu * ws2 * gu * gs * f.eval(&p);
                        }
                    }
                }
                values.push(v);
            }
        }
        _ => {
            return Err(Error::capability(OP, format!("field diffusion on {} is not supported", model.name())));
        }
    }
    check_tail(worst, opts)?;
    let mut g = DiffusionGrid::new(*model, targets.clone(), values)?;
    g.tail = worst;
    Ok(g)
}

fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    if n > 1 {
        w[0] *= 0.5;
        w[n - 1] *= 0.5;
    }
    w
}

fn apply_grid(model: &LeafModel, g: &DiffusionGrid, t: f64, targets: &GridLayout, opts: &DiffusionOptions) -> Result<DiffusionGrid> {
    if t == 0.0 {
        if *targets == g.layout {
            return Ok(g.clone());
        }
        return Err(Error::domain(OP, "D_0 of a grid is only defined on its own nodes"));
    }
    let nodes = targets.nodes();
    let mut values = Vec::with_capacity(nodes.len());
    let mut worst = 0.0_f64;
    match &g.layout {
        GridLayout::Line { lo, step, n } => {
            let w = trapezoid_weights(*n, *step);
            for x in &nodes {
                let (mut v, mut mass) = (0.0, 0.0);
                for j in 0..*n {
                    let y = lo + j as f64 * step;
                    let p = heat_kernel(model, x, &[y], t)?;
                    v += w[j] * p * g.values[j];
                    mass += w[j] * p;
                }
                worst = worst.max((1.0 - mass).abs());
                values.push(v);
            }
        }
        GridLayout::Plane { lo, step, n } => {
            let w0 = trapezoid_weights(n[0], step[0]);
            let w1 = trapezoid_weights(n[1], step[1]);
            let gauss = |d: f64| (-d * d / (4.0 * t)).exp() / (4.0 * PI * t).sqrt();
            for x in &nodes {
                let k0: Vec<f64> = (0..n[0]).map(|i| w0[i] * gauss(x[0] - lo[0] - i as f64 * step[0])).collect();
                let k1: Vec<f64> = (0..n[1]).map(|j| w1[j] * gauss(x[1] - lo[1] - j as f64 * step[1])).collect();
                let mut v = 0.0;
                for j in 0..n[1] {
                    let mut row = 0.0;
                    for i in 0..n[0] {
                        row += k0[i] * g.values[j * n[0] + i];
                    }
                    v += k1[j] * row;
                }
                let mass = k0.iter().sum::<f64>() * k1.iter().sum::<f64>();
                worst = worst.max((1.0 - mass).abs());
                values.push(v);
            }
        }
        GridLayout::Heights { lo, step, n } => {
            let k = HeightKernel::new(t)?;
            let w = trapezoid_weights(*n, *step);
            for x in &nodes {
                let lx = x[1].ln();
                let (mut v, mut mass) = (0.0, 0.0);
                for j in 0..*n {
                    let p = k.density(lo + j as f64 * step - lx);
                    v += w[j] * p * g.values[j];
                    mass += w[j] * p;
                }
                worst = worst.max((1.0 - mass).abs());
                values.push(v);
            }
        }
        GridLayout::Points(_) => {
            return Err(Error::domain(OP, "scattered points cannot serve as a quadrature source"));
        }
    }
    check_tail(worst, opts)?;
    let mut out = DiffusionGrid::new(*model, targets.clone(), values)?;
    out.tail = worst;
    Ok(out)
}
