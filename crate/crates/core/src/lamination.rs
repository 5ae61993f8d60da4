//! Model laminations, their harmonic measures, and harmonicity checks.
//!
//! Ambient coordinates: the torus and the suspension use `[0, 1)²`; the
//! single-leaf models use the leaf chart itself. For the two compact models
//! the leaves are lines parameterized by arclength `s` from a base point.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{laplace_beltrami, LeafModel, ScalarField};
use crate::quadrature::GaussLegendre;
use crate::rng::StreamSeed;
use crate::wiener::{diffusion_apply, DiffusionOptions, DiffusionSource, Ensemble, GridLayout};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LaminationKind {
    /// Lines of slope `slope` on the flat torus.
    KroneckerTorus { slope: f64 },
    /// The hyperbolic plane as a single leaf with a base point.
    SingleHyperbolicLeaf { base: [f64; 2] },
    /// Suspension of the circle rotation by `rotation`; leaves are the flow
    /// lines of `∂_u`, and crossing `u ∈ ℤ` rotates `θ`.
    SuspensionLine { rotation: f64 },
    /// Flat space as a single leaf with a base point.
    SingleEuclideanLeaf { base: Vec<f64> },
}

impl LaminationKind {
    pub fn leaf(&self) -> LeafModel {
        match self {
            LaminationKind::KroneckerTorus { .. } | LaminationKind::SuspensionLine { .. } => LeafModel::line(),
            LaminationKind::SingleHyperbolicLeaf { .. } => LeafModel::hyperbolic_plane(),
            LaminationKind::SingleEuclideanLeaf { base } => LeafModel::euclidean(base.len()).expect("validated dimension"),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LaminationKind::KroneckerTorus { .. } => "kronecker-torus",
            LaminationKind::SingleHyperbolicLeaf { .. } => "hyperbolic-leaf",
            LaminationKind::SuspensionLine { .. } => "suspension-line",
            LaminationKind::SingleEuclideanLeaf { .. } => "euclidean-leaf",
        }
    }
}

/// A chart of the lamination. Ambient points in the box are written as
/// `(τ, s)`: `τ` labels the plaque (transversal coordinate) and `s` is the
/// leaf coordinate along it, `s = 0` on the transversal.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowBox {
    pub id: usize,
    /// Leaf-coordinate range of every plaque.
    pub plaque: (f64, f64),
    /// Range of the transversal coordinate.
    pub transversal: (f64, f64),
}

/// Embedding of a leaf chart into ambient coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafEmbedding {
    kind: LaminationKind,
    base: Vec<f64>,
}

impl LeafEmbedding {
    pub fn base(&self) -> &[f64] {
        &self.base
    }

    /// Chart origin used for paths started at the base point.
    pub fn origin(&self) -> Vec<f64> {
        match &self.kind {
            LaminationKind::KroneckerTorus { .. } | LaminationKind::SuspensionLine { .. } => vec![0.0],
            _ => self.base.clone(),
        }
    }

    pub fn embed(&self, chart: &[f64]) -> Vec<f64> {
        match &self.kind {
            LaminationKind::KroneckerTorus { slope } => {
                let d = torus_direction(*slope);
                vec![frac(self.base[0] + chart[0] * d[0]), frac(self.base[1] + chart[0] * d[1])]
            }
            LaminationKind::SuspensionLine { rotation } => {
                let u = self.base[0] + chart[0];
                vec![frac(u), frac(self.base[1] + rotation * u.floor())]
            }
            _ => chart.to_vec(),
        }
    }

    /// Number of fundamental-domain crossings per coordinate, the deck record
    /// of the chart point.
    pub fn winding(&self, chart: &[f64]) -> [i64; 2] {
        match &self.kind {
            LaminationKind::KroneckerTorus { slope } => {
                let d = torus_direction(*slope);
                [(self.base[0] + chart[0] * d[0]).floor() as i64, (self.base[1] + chart[0] * d[1]).floor() as i64]
            }
            LaminationKind::SuspensionLine { .. } => [(self.base[0] + chart[0]).floor() as i64, 0],
            _ => [0, 0],
        }
    }

    /// Local inverse of [`embed`](Self::embed) on the plaque through the base
    /// point; `None` off that plaque.
    pub fn chart_of(&self, ambient: &[f64]) -> Option<Vec<f64>> {
        match &self.kind {
            LaminationKind::KroneckerTorus { slope } => {
                let d = torus_direction(*slope);
                let dx = wrap(ambient[0] - self.base[0]);
                let dy = wrap(ambient[1] - self.base[1]);
                let s = dx * d[0] + dy * d[1];
                ((dx - s * d[0]).abs() < 1e-9 && (dy - s * d[1]).abs() < 1e-9).then_some(vec![s])
            }
            LaminationKind::SuspensionLine { rotation } => {
                let s = wrap(ambient[0] - self.base[0]);
                let expect = frac(self.base[1] + rotation * (self.base[0] + s).floor());
                (wrap(ambient[1] - expect).abs() < 1e-9).then_some(vec![s])
            }
            _ => Some(ambient.to_vec()),
        }
    }
}

fn frac(x: f64) -> f64 {
    let f = x - x.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

fn wrap(x: f64) -> f64 {
    x - x.round()
}

fn torus_direction(slope: f64) -> [f64; 2] {
    let n = (1.0 + slope * slope).sqrt();
    [1.0 / n, slope / n]
}

/// A lamination with a finite flow-box atlas.
#[derive(Clone, Debug, PartialEq)]
pub struct LaminationModel {
    kind: LaminationKind,
}

const OP_NEW: &str = "lamination::LaminationModel";

impl LaminationModel {
    pub fn kronecker_torus(slope: f64) -> Result<Self> {
        if !slope.is_finite() || slope <= 0.0 || slope.fract() == 0.0 {
            return Err(Error::domain(OP_NEW, format!("torus slope {slope} must be a positive non-integer")));
        }
        Ok(LaminationModel {
            kind: LaminationKind::KroneckerTorus { slope },
        })
    }

    pub fn single_hyperbolic_leaf(base: [f64; 2]) -> Result<Self> {
        if !(base[1] > 0.0) || !base[0].is_finite() {
            return Err(Error::domain(OP_NEW, format!("base point {base:?} is outside the half-plane")));
        }
        Ok(LaminationModel {
            kind: LaminationKind::SingleHyperbolicLeaf { base },
        })
    }

    pub fn suspension_line(rotation: f64) -> Result<Self> {
        if !rotation.is_finite() {
            return Err(Error::domain(OP_NEW, "rotation must be finite"));
        }
        Ok(LaminationModel {
            kind: LaminationKind::SuspensionLine { rotation },
        })
    }

    pub fn single_euclidean_leaf(base: Vec<f64>) -> Result<Self> {
        if base.is_empty() || base.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain(OP_NEW, "base point must be finite and nonempty"));
        }
        Ok(LaminationModel {
            kind: LaminationKind::SingleEuclideanLeaf { base },
        })
    }

    pub fn from_kind(kind: LaminationKind) -> Result<Self> {
        match kind {
            LaminationKind::KroneckerTorus { slope } => Self::kronecker_torus(slope),
            LaminationKind::SingleHyperbolicLeaf { base } => Self::single_hyperbolic_leaf(base),
            LaminationKind::SuspensionLine { rotation } => Self::suspension_line(rotation),
            LaminationKind::SingleEuclideanLeaf { base } => Self::single_euclidean_leaf(base),
        }
    }

    pub fn kind(&self) -> &LaminationKind {
        &self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn is_compact(&self) -> bool {
        matches!(self.kind, LaminationKind::KroneckerTorus { .. } | LaminationKind::SuspensionLine { .. })
    }

    pub fn ambient_dim(&self) -> usize {
        match &self.kind {
            LaminationKind::SingleEuclideanLeaf { base } => base.len(),
            _ => 2,
        }
    }

    /// Every shipped model has a single leaf type.
    pub fn leaf(&self) -> LeafModel {
        self.kind.leaf()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.ambient_dim()
            && if self.is_compact() {
                p.iter().all(|c| (0.0..1.0).contains(c))
            } else {
                self.leaf().contains(p)
            }
    }

    /// Leaf through `p` and the embedding of its chart, with chart origin at `p`.
    pub fn leaf_factory(&self, p: &[f64]) -> Result<(LeafModel, LeafEmbedding)> {
        if !self.contains(p) {
            return Err(Error::domain("lamination::leaf_factory", format!("{p:?} is not an ambient point of {}", self.name())));
        }
        Ok((
            self.leaf(),
            LeafEmbedding {
                kind: self.kind.clone(),
                base: p.to_vec(),
            },
        ))
    }

    pub fn flow_box_atlas(&self) -> Vec<FlowBox> {
        match &self.kind {
            LaminationKind::KroneckerTorus { slope } => {
                let len = 0.3 * (1.0 + slope * slope).sqrt();
                (0..4)
                    .map(|id| FlowBox {
                        id,
                        plaque: (-len, len),
                        transversal: (0.0, 1.0),
                    })
                    .collect()
            }
            LaminationKind::SuspensionLine { .. } => (0..2)
                .map(|id| FlowBox {
                    id,
                    plaque: (-0.3, 0.3),
                    transversal: (0.0, 1.0),
                })
                .collect(),
            _ => vec![FlowBox {
                id: 0,
                plaque: (f64::NEG_INFINITY, f64::INFINITY),
                transversal: (0.0, 0.0),
            }],
        }
    }

    /// Ambient point of box `id` with transversal coordinate `tau` and leaf
    /// coordinate `s`.
    pub fn plaque_point(&self, id: usize, tau: f64, s: f64) -> Result<Vec<f64>> {
        let atlas = self.flow_box_atlas();
        let b = atlas.get(id).ok_or_else(|| Error::domain("lamination::plaque_point", format!("no flow box {id}")))?;
        if s < b.plaque.0 || s > b.plaque.1 {
            return Err(Error::domain("lamination::plaque_point", format!("leaf coordinate {s} outside the plaque")));
        }
        Ok(match &self.kind {
            LaminationKind::KroneckerTorus { slope } => {
                let d = torus_direction(*slope);
                let x0 = id as f64 / 4.0;
                vec![frac(x0 + s * d[0]), frac(tau + s * d[1])]
            }
            LaminationKind::SuspensionLine { rotation } => {
                let u0 = if id == 0 { 0.5 } else { 0.0 };
                let u = u0 + s;
                vec![frac(u), frac(tau + rotation * u.floor())]
            }
            _ => vec![s],
        })
    }

    /// Flow box containing `p` together with its `(τ, s)` coordinates.
    pub fn locate(&self, p: &[f64]) -> Result<(usize, f64, f64)> {
        if !self.contains(p) {
            return Err(Error::domain("lamination::locate", format!("{p:?} is outside the lamination")));
        }
        Ok(match &self.kind {
            LaminationKind::KroneckerTorus { slope } => {
                let d = torus_direction(*slope);
                let id = ((p[0] * 4.0).round() as usize) % 4;
                let dx = wrap(p[0] - id as f64 / 4.0);
                let s = dx / d[0];
                (id, frac(p[1] - s * d[1]), s)
            }
            LaminationKind::SuspensionLine { rotation } => {
                if (0.2..0.8).contains(&p[0]) {
                    (0, p[1], p[0] - 0.5)
                } else {
                    let s = wrap(p[0]);
                    let tau = if s < 0.0 { frac(p[1] + rotation) } else { p[1] };
                    (1, tau, s)
                }
            }
            _ => (0, 0.0, 0.0),
        })
    }
}

/// Transverse coordinate reached by holonomy: start on the transversal of
/// `base` at offset `tau`, follow the leaf for leaf-length `s`, and read the
/// transversal there. Returned unwrapped.
pub fn transport_transversal(model: &LaminationModel, base: &[f64], s: f64, tau: f64) -> Result<f64> {
    match model.kind() {
        LaminationKind::KroneckerTorus { slope } => Ok(base[1] + tau + s * torus_direction(*slope)[1]),
        LaminationKind::SuspensionLine { rotation } => Ok(base[1] + tau + rotation * (base[0] + s).floor()),
        _ => Err(Error::capability("lamination::transport_transversal", format!("{} has no transverse structure", model.name()))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeasureKind {
    /// Lebesgue measure on the ambient unit square.
    Lebesgue,
    Dirac(Vec<f64>),
}

/// Per-box density: `transversal_weight dτ × leaf_density ds`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxDensity {
    pub box_id: usize,
    pub transversal_weight: f64,
    pub leaf_density: f64,
}

/// A probability measure on a lamination, flagged harmonic or not.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicMeasureModel {
    lamination: LaminationModel,
    measure: MeasureKind,
}

impl HarmonicMeasureModel {
    /// The shipped measure: Lebesgue on the compact models, the Dirac at
    /// the base point on single leaves (per-path mode).
    pub fn canonical(lamination: LaminationModel) -> Self {
        let measure = match lamination.kind() {
            LaminationKind::SingleHyperbolicLeaf { base } => MeasureKind::Dirac(base.to_vec()),
            LaminationKind::SingleEuclideanLeaf { base } => MeasureKind::Dirac(base.clone()),
            _ => MeasureKind::Lebesgue,
        };
        HarmonicMeasureModel { lamination, measure }
    }

    pub fn dirac(lamination: LaminationModel, point: Vec<f64>) -> Result<Self> {
        if !lamination.contains(&point) {
            return Err(Error::domain("lamination::HarmonicMeasureModel", format!("{point:?} is not in the lamination")));
        }
        Ok(HarmonicMeasureModel {
            lamination,
            measure: MeasureKind::Dirac(point),
        })
    }

    pub fn lamination(&self) -> &LaminationModel {
        &self.lamination
    }

    pub fn measure(&self) -> &MeasureKind {
        &self.measure
    }

    /// Whether the pair is expected to pass both harmonicity checks.
    pub fn is_harmonic(&self) -> bool {
        match &self.measure {
            MeasureKind::Lebesgue => true,
            MeasureKind::Dirac(_) => !self.lamination.is_compact(),
        }
    }

    /// Per-box decomposition; every shipped density is constant.
    pub fn density_decomposition(&self) -> Vec<BoxDensity> {
        match &self.measure {
            MeasureKind::Lebesgue => {
                let atlas = self.lamination.flow_box_atlas();
                let n = atlas.len() as f64;
                atlas
                    .iter()
                    .map(|b| BoxDensity {
                        box_id: b.id,
                        transversal_weight: 1.0 / n,
                        leaf_density: 1.0 / (b.plaque.1 - b.plaque.0),
                    })
                    .collect()
            }
            MeasureKind::Dirac(_) => vec![BoxDensity {
                box_id: 0,
                transversal_weight: 1.0,
                leaf_density: 1.0,
            }],
        }
    }

    /// One draw from the measure.
    pub fn sample(&self, seed: StreamSeed) -> Vec<f64> {
        use rand::Rng;
        match &self.measure {
            MeasureKind::Dirac(p) => p.clone(),
            MeasureKind::Lebesgue => {
                let mut rng = seed.rng();
                (0..self.lamination.ambient_dim()).map(|_| rng.random::<f64>()).collect()
            }
        }
    }

    /// Ensemble whose paths start at draws from this measure. Paths live in
    /// the leaf chart of their start; the start is the chart origin.
    pub fn ensemble(&self, horizon: f64, dt: f64, paths: usize, seed: u64) -> Result<Ensemble> {
        let leaf = self.lamination.leaf();
        let origin = match &self.measure {
            MeasureKind::Dirac(p) => self.lamination.leaf_factory(p)?.1.origin(),
            MeasureKind::Lebesgue => vec![0.0; leaf.dim()],
        };
        Ensemble::new(leaf, origin, horizon, dt, paths, seed)
    }
}

/// Residual with its standard error (zero for quadrature estimates).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residual {
    pub value: f64,
    pub stderr: f64,
}

const OP_WEAK: &str = "lamination::check_very_weak_harmonicity";
const OP_LAP: &str = "lamination::check_harmonicity_laplacian";

/// Gauss–Legendre nodes and weights for the leafwise heat kernel at time `t`
/// on a line: `D_t f(p) ≈ Σ w_j f(p + s_j)`.
fn line_heat_rule(t: f64) -> (Vec<f64>, Vec<f64>) {
    let r = 12.0 * (2.0 * t).sqrt();
    let (s, w) = GaussLegendre::new(16).composite_nodes(-r, r, 8);
    let w = s
        .iter()
        .zip(&w)
        .map(|(s, w)| w * (-s * s / (4.0 * t)).exp() / (4.0 * PI * t).sqrt())
        .collect();
    (s, w)
}

/// `|∫ D_t f dμ − ∫ f dμ|` for `f` on ambient coordinates.
pub fn check_very_weak_harmonicity(mu: &HarmonicMeasureModel, f: &ScalarField, t: f64, resolution: usize) -> Result<Residual> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(OP_WEAK, format!("diffusion time {t} must be positive")));
    }
    match &mu.measure {
        MeasureKind::Lebesgue => {
            if t > 1e4 {
                return Err(Error::capability(OP_WEAK, format!("diffusion time {t} exceeds the quadrature window")));
            }
            if resolution < 8 {
                return Err(Error::domain(OP_WEAK, "resolution must be at least 8"));
            }
            let (s, w) = line_heat_rule(t);
            let n = resolution;
            let h = 1.0 / n as f64;
            let (mut plain, mut diffused) = (0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let p = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
                    let (_, emb) = mu.lamination.leaf_factory(&p)?;
                    plain += f.eval(&p);
                    diffused += s.iter().zip(&w).map(|(s, w)| w * f.eval(&emb.embed(&[*s]))).sum::<f64>();
                }
            }
            let cells = (n * n) as f64;
            Ok(Residual {
                value: ((diffused - plain) / cells).abs(),
                stderr: 0.0,
            })
        }
        MeasureKind::Dirac(p) => {
            let (leaf, emb) = mu.lamination.leaf_factory(p)?;
            let x = emb.origin();
            let value = if mu.lamination.is_compact() {
                let (s, w) = line_heat_rule(t);
                s.iter().zip(&w).map(|(s, w)| w * f.eval(&emb.embed(&[*s]))).sum::<f64>()
            } else {
                let e = emb.clone();
                let g = f.clone();
                let pulled = ScalarField::new("pullback", move |c| g.eval(&e.embed(c)));
                diffusion_apply(&leaf, DiffusionSource::Field(&pulled), t, &GridLayout::Points(vec![x]), &DiffusionOptions::default())
                    .map_err(|e| match e {
                        Error::Capability { detail, .. } => Error::capability(OP_WEAK, detail),
                        other => other,
                    })?
                    .values()[0]
            };
            Ok(Residual {
                value: (value - f.eval(p)).abs(),
                stderr: 0.0,
            })
        }
    }
}

/// `|∫ Δ_leaf f dμ|` for compactly supported `f` on ambient coordinates.
pub fn check_harmonicity_laplacian(mu: &HarmonicMeasureModel, f: &ScalarField, resolution: usize) -> Result<Residual> {
    let lam = &mu.lamination;
    match f.support() {
        Some(sup) => {
            let ok = sup.lower.len() == lam.ambient_dim()
                && sup.upper.len() == lam.ambient_dim()
                && if lam.is_compact() {
                    sup.lower.iter().all(|l| *l >= 0.0) && sup.upper.iter().all(|u| *u <= 1.0)
                } else {
                    lam.contains(&sup.lower) && lam.contains(&sup.upper)
                };
            if !ok {
                return Err(Error::domain(OP_LAP, format!("support of {} leaves the atlas", f.name())));
            }
        }
        None if lam.is_compact() => {}
        None => return Err(Error::domain(OP_LAP, format!("{} has no declared compact support", f.name()))),
    }
    let leafwise = |p: &[f64]| -> Result<f64> {
        let (leaf, emb) = lam.leaf_factory(p)?;
        let e = emb.clone();
        let g = f.clone();
        let pulled = ScalarField::new("pullback", move |c| g.eval(&e.embed(c)));
        let pulled = match f.known_laplacian(p) {
            Some(_) if !lam.is_compact() => {
                let g = f.clone();
                pulled.with_laplacian(move |c| g.known_laplacian(c).unwrap_or(f64::NAN))
            }
            _ => pulled,
        };
        laplace_beltrami(&leaf, &pulled, &emb.origin(), 1e-3)
    };
    match &mu.measure {
        MeasureKind::Lebesgue => {
            let n = resolution.max(8);
            let h = 1.0 / n as f64;
            let mut total = 0.0;
            for i in 0..n {
                for j in 0..n {
                    total += leafwise(&[(i as f64 + 0.5) * h, (j as f64 + 0.5) * h])?;
                }
            }
            Ok(Residual {
                value: (total / (n * n) as f64).abs(),
                stderr: 0.0,
            })
        }
        MeasureKind::Dirac(p) => Ok(Residual {
            value: leafwise(p)?.abs(),
            stderr: 0.0,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wiener::sample_path;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    const GOLDEN: f64 = 0.618_033_988_749_894_9;

    fn torus() -> LaminationModel {
        LaminationModel::kronecker_torus(GOLDEN).unwrap()
    }

    #[test]
    fn torus_lebesgue_mean() {
        let mu = HarmonicMeasureModel::canonical(torus());
        let root = StreamSeed::new(42);
        let m: f64 = (0..100_000).map(|i| mu.sample(root.child(i))[0]).sum::<f64>() / 1e5;
        assert!((m - 0.5).abs() < 0.01);
    }

    #[test]
    fn dirac_sampler_is_constant() {
        let mu = HarmonicMeasureModel::canonical(LaminationModel::single_hyperbolic_leaf([0.3, 2.0]).unwrap());
        for i in 0..10 {
            assert_eq!(mu.sample(StreamSeed::new(i)), vec![0.3, 2.0]);
        }
    }

    #[test]
    fn suspension_marginal_passes_chi_square() {
        let mu = HarmonicMeasureModel::canonical(LaminationModel::suspension_line(0.3).unwrap());
        let bins = 10;
        let mut counts = vec![0u32; bins * bins];
        let root = StreamSeed::new(42);
        for i in 0..100_000 {
            let p = mu.sample(root.child(i));
            counts[(p[0] * bins as f64) as usize * bins + (p[1] * bins as f64) as usize] += 1;
        }
        let e = 1e5 / (bins * bins) as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        let p = 1.0 - ChiSquared::new((bins * bins - 1) as f64).unwrap().cdf(chi2);
        assert!(p > 0.001, "p = {p}");
    }

    #[test]
    fn embedding_round_trips() {
        for lam in [torus(), LaminationModel::suspension_line(0.37).unwrap()] {
            for p in [[0.1, 0.2], [0.95, 0.01], [0.5, 0.99]] {
                let (_, emb) = lam.leaf_factory(&p).unwrap();
                let back = emb.embed(&emb.chart_of(&p).unwrap());
                assert!((back[0] - p[0]).abs() < 1e-12 && (back[1] - p[1]).abs() < 1e-12);
                for s in [-0.4, 0.07, 0.3] {
                    let q = emb.embed(&[s]);
                    let c = emb.chart_of(&q).unwrap();
                    assert!((c[0] - s).abs() < 1e-12, "{} {s} {c:?}", lam.name());
                }
            }
        }
        let lam = LaminationModel::single_hyperbolic_leaf([0.0, 1.0]).unwrap();
        let (leaf, emb) = lam.leaf_factory(&[0.5, 3.0]).unwrap();
        assert_eq!(leaf, LeafModel::hyperbolic_plane());
        assert_eq!(emb.embed(&emb.chart_of(&[0.5, 3.0]).unwrap()), vec![0.5, 3.0]);
    }

    #[test]
    fn atlas_covers_and_plaques_are_disjoint() {
        for lam in [torus(), LaminationModel::suspension_line(0.37).unwrap()] {
            for i in 0..20 {
                for j in 0..20 {
                    let p = [i as f64 / 20.0 + 0.013, j as f64 / 20.0 + 0.007];
                    let (id, tau, s) = lam.locate(&p).unwrap();
                    let q = lam.plaque_point(id, tau, s).unwrap();
                    assert!(wrap(q[0] - p[0]).abs() < 1e-12 && wrap(q[1] - p[1]).abs() < 1e-12, "{p:?} {q:?}");
                }
            }
            // distinct plaques of one box never share a point
            let b = &lam.flow_box_atlas()[0];
            let a = lam.plaque_point(b.id, 0.1, 0.05).unwrap();
            let c = lam.plaque_point(b.id, 0.2, 0.05).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn leaf_type_is_constant_along_leaves() {
        let lam = torus();
        let (leaf, emb) = lam.leaf_factory(&[0.2, 0.4]).unwrap();
        let p = sample_path(&leaf, &emb.origin(), 4.0, 1.0 / 16.0, StreamSeed::new(1)).unwrap();
        for k in [0, 10, 64] {
            let q = emb.embed(p.point(k));
            assert_eq!(lam.leaf_factory(&q).unwrap().0, leaf);
        }
    }

    #[test]
    fn lebesgue_is_very_weakly_harmonic_on_the_torus() {
        let mu = HarmonicMeasureModel::canonical(torus());
        let f = ScalarField::new("periodic", |p| (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).cos() + (2.0 * PI * (p[0] + 2.0 * p[1])).cos());
        let r = check_very_weak_harmonicity(&mu, &f, 1.0, 128).unwrap();
        assert!(r.value < 1e-3, "{r:?}");
        let one = check_very_weak_harmonicity(&mu, &ScalarField::constant(1.0), 1.0, 64).unwrap();
        assert!(one.value < 1e-12);
    }

    #[test]
    fn dirac_on_the_torus_is_not_harmonic() {
        let p = vec![0.25, 0.5];
        let mu = HarmonicMeasureModel::dirac(torus(), p.clone()).unwrap();
        assert!(!mu.is_harmonic());
        let bump = ScalarField::new("bump", |q| (-((q[0] - 0.25).powi(2) + (q[1] - 0.5).powi(2)) / 0.02).exp());
        let r = check_very_weak_harmonicity(&mu, &bump, 1.0, 0).unwrap();
        // Monte Carlo oracle for D_1 f at the point
        let (leaf, emb) = torus().leaf_factory(&p).unwrap();
        let root = StreamSeed::new(42);
        let vals: Vec<f64> = (0..4000)
            .map(|i| bump.eval(&emb.embed(sample_path(&leaf, &[0.0], 1.0, 1.0 / 16.0, root.child(i)).unwrap().end())))
            .collect();
        let m = vals.iter().sum::<f64>() / 4000.0;
        let se = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 3999.0 / 4000.0).sqrt();
        assert!((bump.eval(&p) - r.value - m).abs() < 4.0 * se, "{} vs {m} ± {se}", r.value);
        assert!(r.value > 0.05);
    }

    #[test]
    fn laplacian_check() {
        let mu = HarmonicMeasureModel::canonical(torus());
        let f = ScalarField::new("wave", |p| (2.0 * PI * p[0]).sin() * (-(p[1] - 0.5).powi(2) * 20.0).exp())
            .with_support(vec![0.0, 0.0], vec![1.0, 1.0]);
        assert!(check_harmonicity_laplacian(&mu, &f, 128).unwrap().value < 1e-3);
        assert_eq!(check_harmonicity_laplacian(&mu, &ScalarField::constant(0.0), 16).unwrap().value, 0.0);
        let outside = ScalarField::constant(0.0).with_support(vec![-0.5, 0.0], vec![1.0, 1.0]);
        assert!(matches!(check_harmonicity_laplacian(&mu, &outside, 16), Err(Error::Domain { .. })));

        // quadratic bump at a non-critical point: Δ along the leaf is 2|d|²·a
        let d = torus_direction(GOLDEN);
        let q = ScalarField::new("quad", |p| 3.0 * ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)));
        let dirac = HarmonicMeasureModel::dirac(torus(), vec![0.3, 0.6]).unwrap();
        let r = check_harmonicity_laplacian(&dirac, &q, 0).unwrap();
        assert!((r.value - 6.0 * (d[0] * d[0] + d[1] * d[1])).abs() < 1e-5, "{r:?}");
    }

    #[test]
    fn unsupported_combinations() {
        let mu = HarmonicMeasureModel::canonical(LaminationModel::single_euclidean_leaf(vec![0.0; 3]).unwrap());
        let f = ScalarField::new("x", |p| p[0]);
        assert!(matches!(check_very_weak_harmonicity(&mu, &f, 1.0, 0), Err(Error::Capability { .. })));
        let torus_mu = HarmonicMeasureModel::canonical(torus());
        assert!(matches!(check_very_weak_harmonicity(&torus_mu, &f, 1e5, 16), Err(Error::Capability { .. })));
    }

    #[test]
    fn transversal_transport_is_isometric() {
        for lam in [torus(), LaminationModel::suspension_line(0.37).unwrap()] {
            let base = [0.3, 0.4];
            for s in [-1.7, 0.2, 2.9] {
                let eps = 1e-6;
                let d = (transport_transversal(&lam, &base, s, eps).unwrap() - transport_transversal(&lam, &base, s, -eps).unwrap()) / (2.0 * eps);
                assert!((d - 1.0).abs() < 1e-6);
            }
        }
    }
}
