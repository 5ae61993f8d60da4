//! Multiplicative cocycles `A(ω, t)` evaluated along discrete paths.
//!
//! Every shipped cocycle is built from per-step local expressions: the value
//! over one grid step depends only on the two endpoints of the step. The value
//! over a path is the left fold `S_{n−1} ⋯ S_1 S_0`, always in that order, so
//! continuing a fold from `A(ω, t)` reproduces `A(ω, s + t)` bit for bit.

mod holonomy;
mod laws;

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{leaf_distance, LeafKind, LeafModel, ScalarField};
use crate::lamination::LaminationKind;
use crate::linalg;
use crate::wiener::{DiscretePath, ExtendedPath};

pub use holonomy::{holonomy_cocycle, holonomy_map};
pub use laws::{law_check, moderate_check, sample_loops, LawReport, ModerateFit};

const REBALANCE_LO: f64 = 1e-4;
const REBALANCE_HI: f64 = 1e4;

/// `e^{log_scale} · matrix`. The matrix is kept with max-abs entry in
/// `[1e-4, 1e4]`; the rest of the scale lives in `log_scale`.
#[derive(Clone, Debug, PartialEq)]
pub struct CocycleValue {
    pub matrix: DMatrix<f64>,
    pub log_scale: f64,
}

impl CocycleValue {
    pub fn identity(d: usize) -> Self {
        CocycleValue {
            matrix: DMatrix::identity(d, d),
            log_scale: 0.0,
        }
    }

    pub fn new(matrix: DMatrix<f64>, log_scale: f64) -> Self {
        let mut v = CocycleValue { matrix, log_scale };
        v.rebalance();
        v
    }

    pub fn rank(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn rebalance(&mut self) {
        let m = linalg::max_abs(&self.matrix);
        if m > 0.0 && m.is_finite() && !(REBALANCE_LO..=REBALANCE_HI).contains(&m) {
            self.matrix /= m;
            self.log_scale += m.ln();
        }
    }

    /// `self ← step · self`.
    pub fn compose_step(&mut self, step: &CocycleValue, scratch: &mut DMatrix<f64>) {
        step.matrix.mul_to(&self.matrix, scratch);
        std::mem::swap(&mut self.matrix, scratch);
        self.log_scale += step.log_scale;
        self.rebalance();
    }

    /// Plain product `self · other`.
    pub fn mul(&self, other: &CocycleValue) -> CocycleValue {
        CocycleValue::new(&self.matrix * &other.matrix, self.log_scale + other.log_scale)
    }

    pub fn inverse(&self, op: &'static str) -> Result<CocycleValue> {
        Ok(CocycleValue::new(linalg::inverse(op, &self.matrix)?, -self.log_scale))
    }

    pub fn inverse_transpose(&self, op: &'static str) -> Result<CocycleValue> {
        Ok(CocycleValue::new(linalg::inverse_transpose(op, &self.matrix)?, -self.log_scale))
    }

    pub fn wedge(&self, k: usize) -> CocycleValue {
        CocycleValue::new(linalg::wedge(&self.matrix, k), k as f64 * self.log_scale)
    }

    /// `log ‖A‖` in the spectral norm.
    pub fn log_norm(&self) -> f64 {
        let s = if self.rank() == 1 {
            self.matrix[(0, 0)].abs()
        } else {
            self.matrix.clone().singular_values().max()
        };
        self.log_scale + s.ln()
    }

    /// `log ‖A⁻¹‖`.
    pub fn log_norm_inverse(&self) -> f64 {
        let s = if self.rank() == 1 {
            self.matrix[(0, 0)].abs()
        } else {
            self.matrix.clone().singular_values().min()
        };
        -self.log_scale - s.ln()
    }

    /// `log ‖A v‖`.
    pub fn log_norm_of(&self, v: &DVector<f64>) -> f64 {
        self.log_scale + (&self.matrix * v).norm().ln()
    }

    /// `log |det A|`.
    pub fn log_abs_det(&self) -> f64 {
        self.rank() as f64 * self.log_scale + linalg::small_det(&self.matrix).abs().ln()
    }

    /// The full matrix; may overflow for large scales.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        &self.matrix * self.log_scale.exp()
    }

    /// `‖A − B‖_F / ‖B‖_F` computed without forming either at full scale.
    pub fn relative_distance(&self, other: &CocycleValue) -> f64 {
        let a = &self.matrix * (self.log_scale - other.log_scale).exp();
        (a - &other.matrix).norm() / other.matrix.norm()
    }
}

/// A leafwise potential whose increments drive a one-form cocycle.
#[derive(Clone)]
pub enum Potential {
    /// `log y` on the half-plane (Busemann function).
    LogHeight,
    /// A chart coordinate.
    Coordinate(usize),
    /// `Σ a_i x_i` on a flat leaf.
    Linear(Vec<f64>),
    /// Unwrapped polar angle about a puncture in the plane. Multivalued, so
    /// it does not define a cocycle; it exists to exercise the law checks.
    WindingAngle { center: [f64; 2] },
    Field(ScalarField),
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::LogHeight => f.write_str("log-y"),
            Potential::Coordinate(i) => write!(f, "x{i}"),
            Potential::Linear(a) => write!(f, "linear{a:?}"),
            Potential::WindingAngle { center } => write!(f, "winding-angle{center:?}"),
            Potential::Field(s) => write!(f, "field({})", s.name()),
        }
    }
}

impl Potential {
    pub fn name(&self) -> String {
        format!("{self:?}")
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        match self {
            Potential::LogHeight => p[1].ln(),
            Potential::Coordinate(i) => p[*i],
            Potential::Linear(a) => a.iter().zip(p).map(|(a, x)| a * x).sum(),
            Potential::WindingAngle { center } => (p[1] - center[1]).atan2(p[0] - center[0]),
            Potential::Field(f) => f.eval(p),
        }
    }

    /// Potential difference over one step. The winding angle uses the
    /// principal increment, which is what unwraps it along a path.
    pub fn increment(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Potential::LogHeight => (b[1] / a[1]).ln(),
            Potential::WindingAngle { .. } => {
                let d = self.eval(b) - self.eval(a);
                let tau = std::f64::consts::TAU;
                d - tau * (d / tau).round()
            }
            _ => self.eval(b) - self.eval(a),
        }
    }

    fn check(&self, model: &LeafModel) -> Result<()> {
        let ok = match self {
            Potential::LogHeight => model.kind() == LeafKind::HyperbolicPlane,
            Potential::Coordinate(i) => *i < model.dim(),
            Potential::Linear(a) => model.is_flat() && a.len() == model.dim(),
            Potential::WindingAngle { .. } => model.kind() == LeafKind::Euclidean { dim: 2 },
            Potential::Field(_) => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::capability("cocycle::evaluate", format!("potential {self:?} is not defined on the {} leaf", model.name())))
        }
    }

    /// The potential as a field with its Laplacian where known.
    pub fn field(&self, model: &LeafModel) -> ScalarField {
        let p = self.clone();
        let name = self.name();
        let f = ScalarField::new(&name, move |x| p.eval(x));
        match (self, model.kind()) {
            (Potential::LogHeight, LeafKind::HyperbolicPlane) => f.with_laplacian(|_| -1.0),
            (Potential::Coordinate(_), _) | (Potential::Linear(_), _) | (Potential::WindingAngle { .. }, _) => {
                f.with_laplacian(|_| 0.0)
            }
            _ => f,
        }
    }

    /// `Some((coordinate, coefficient))` when the potential is a multiple of a
    /// coordinate whose increments are homogeneous on this leaf: `log y` on
    /// the half-plane, or a flat coordinate.
    pub fn driver(&self, model: &LeafModel) -> Option<(Driver, f64)> {
        match (self, model.kind()) {
            (Potential::LogHeight, LeafKind::HyperbolicPlane) => Some((Driver::LogHeight, 1.0)),
            (Potential::Coordinate(i), k) if k != LeafKind::HyperbolicPlane => Some((Driver::Coordinate(*i), 1.0)),
            (Potential::Linear(a), k) if k != LeafKind::HyperbolicPlane => {
                let nz: Vec<usize> = (0..a.len()).filter(|&i| a[i] != 0.0).collect();
                match nz.as_slice() {
                    [i] => Some((Driver::Coordinate(*i), a[*i])),
                    [] => Some((Driver::Coordinate(0), 0.0)),
                    _ => None,
                }
            }
            _ => None,
        }
    }
}

/// A one-dimensional process on the leaf with stationary independent
/// increments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Driver {
    LogHeight,
    Coordinate(usize),
}

impl Driver {
    pub fn value(&self, p: &[f64]) -> f64 {
        match self {
            Driver::LogHeight => p[1].ln(),
            Driver::Coordinate(i) => p[*i],
        }
    }
}

#[derive(Clone, Debug)]
pub enum CocycleKind {
    Identity,
    /// `exp(Σ_i Δf_i M_i)` per step. With commuting generators the product
    /// telescopes; `ordered = true` drops that requirement.
    OneForm { terms: Vec<(Potential, DMatrix<f64>)>, ordered: bool },
    /// `diag(y^{c_1}, …, y^{c_d})` increments on the half-plane.
    DiagonalBusemann { rates: Vec<f64> },
    Conjugated { base: Box<CocycleSpec>, p: DMatrix<f64>, p_inv: DMatrix<f64> },
    Holonomy { lamination: LaminationKind },
    WedgePower { base: Box<CocycleSpec>, k: usize },
    Dual { base: Box<CocycleSpec> },
}

/// Declarative description of a cocycle of rank `d`.
#[derive(Clone, Debug)]
pub struct CocycleSpec {
    rank: usize,
    kind: CocycleKind,
}

const OP_EVAL: &str = "cocycle::evaluate";

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

impl CocycleSpec {
    pub fn identity(d: usize) -> Self {
        CocycleSpec {
            rank: d,
            kind: CocycleKind::Identity,
        }
    }

    /// One-form cocycle with pairwise commuting generators.
    pub fn one_form(terms: Vec<(Potential, DMatrix<f64>)>) -> Result<Self> {
        const OP: &str = "cocycle::one_form";
        let d = Self::check_terms(OP, &terms)?;
        for i in 0..terms.len() {
            for j in i + 1..terms.len() {
                let (a, b) = (&terms[i].1, &terms[j].1);
                if (a * b - b * a).norm() != 0.0 {
                    return Err(Error::domain(OP, format!("generators {i} and {j} do not commute")));
                }
            }
        }
        Ok(CocycleSpec {
            rank: d,
            kind: CocycleKind::OneForm { terms, ordered: false },
        })
    }

    /// Step-wise ordered product with arbitrary generators.
    pub fn path_ordered(terms: Vec<(Potential, DMatrix<f64>)>) -> Result<Self> {
        let d = Self::check_terms("cocycle::path_ordered", &terms)?;
        Ok(CocycleSpec {
            rank: d,
            kind: CocycleKind::OneForm { terms, ordered: true },
        })
    }

    fn check_terms(op: &'static str, terms: &[(Potential, DMatrix<f64>)]) -> Result<usize> {
        let d = terms.first().map(|t| t.1.nrows()).ok_or_else(|| Error::domain(op, "at least one term is required"))?;
        if d == 0 || terms.iter().any(|t| !t.1.is_square() || t.1.nrows() != d) {
            return Err(Error::domain(op, "generators must be square matrices of one size"));
        }
        Ok(d)
    }

    /// Rank-1 Busemann cocycle `A(ω, t) = y(ω(t)) / y(ω(0))`.
    pub fn busemann() -> Self {
        CocycleSpec::diagonal_busemann(vec![1.0]).expect("one rate")
    }

    pub fn diagonal_busemann(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() || rates.iter().any(|r| !r.is_finite()) {
            return Err(Error::domain("cocycle::diagonal_busemann", "rates must be finite and nonempty"));
        }
        Ok(CocycleSpec {
            rank: rates.len(),
            kind: CocycleKind::DiagonalBusemann { rates },
        })
    }

    /// `P A P⁻¹`.
    pub fn conjugated(base: CocycleSpec, p: DMatrix<f64>) -> Result<Self> {
        const OP: &str = "cocycle::conjugated";
        if p.nrows() != base.rank || p.ncols() != base.rank {
            return Err(Error::domain(OP, "conjugating matrix has the wrong size"));
        }
        let p_inv = linalg::inverse(OP, &p)?;
        Ok(CocycleSpec {
            rank: base.rank,
            kind: CocycleKind::Conjugated {
                base: Box::new(base),
                p,
                p_inv,
            },
        })
    }

    pub fn wedge_power(base: CocycleSpec, k: usize) -> Result<Self> {
        if k == 0 || k > base.rank {
            return Err(Error::domain("cocycle::wedge_power", format!("degree {k} outside 1..={}", base.rank)));
        }
        Ok(CocycleSpec {
            rank: linalg::binomial(base.rank, k),
            kind: CocycleKind::WedgePower { base: Box::new(base), k },
        })
    }

    /// `A*⁻¹`.
    pub fn dual(base: CocycleSpec) -> Self {
        CocycleSpec {
            rank: base.rank,
            kind: CocycleKind::Dual { base: Box::new(base) },
        }
    }

    pub(crate) fn holonomy_of(lamination: LaminationKind) -> Self {
        CocycleSpec {
            rank: 1,
            kind: CocycleKind::Holonomy { lamination },
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn kind(&self) -> &CocycleKind {
        &self.kind
    }

    /// Short identifier used in reports.
    pub fn name(&self) -> String {
        match &self.kind {
            CocycleKind::Identity => format!("identity({})", self.rank),
            CocycleKind::OneForm { terms, ordered } => {
                let t: Vec<String> = terms.iter().map(|(p, _)| p.name()).collect();
                format!("{}({})", if *ordered { "path-ordered" } else { "one-form" }, t.join("+"))
            }
            CocycleKind::DiagonalBusemann { rates } if rates.len() == 1 && rates[0] == 1.0 => "busemann".into(),
            CocycleKind::DiagonalBusemann { rates } => format!("diagonal-busemann({})", fmt_list(rates)),
            CocycleKind::Conjugated { base, .. } => format!("conjugated({})", base.name()),
            CocycleKind::Holonomy { lamination } => format!("holonomy({})", lamination.name()),
            CocycleKind::WedgePower { base, k } => format!("wedge{k}({})", base.name()),
            CocycleKind::Dual { base } => format!("dual({})", base.name()),
        }
    }

    /// Whether the step rule is defined on this leaf.
    pub fn check_model(&self, model: &LeafModel) -> Result<()> {
        match &self.kind {
            CocycleKind::Identity => Ok(()),
            CocycleKind::OneForm { terms, .. } => terms.iter().try_for_each(|(p, _)| p.check(model)),
            CocycleKind::DiagonalBusemann { .. } => {
                if model.kind() == LeafKind::HyperbolicPlane {
                    Ok(())
                } else {
                    Err(Error::capability(OP_EVAL, format!("{} needs the hyperbolic plane", self.name())))
                }
            }
            CocycleKind::Holonomy { lamination } => {
                if lamination.leaf() == *model {
                    Ok(())
                } else {
                    Err(Error::capability(OP_EVAL, "holonomy cocycle evaluated off its lamination's leaves"))
                }
            }
            CocycleKind::Conjugated { base, .. } | CocycleKind::WedgePower { base, .. } | CocycleKind::Dual { base } => {
                base.check_model(model)
            }
        }
    }

    /// Local expression over one step from `a` to `b`.
    pub fn step(&self, model: &LeafModel, a: &[f64], b: &[f64]) -> Result<CocycleValue> {
        let mut out = CocycleValue::identity(self.rank);
        self.step_into(model, a, b, &mut out)?;
        Ok(out)
    }

    /// As [`step`](Self::step), reusing `out`'s storage where possible.
    pub fn step_into(&self, model: &LeafModel, a: &[f64], b: &[f64], out: &mut CocycleValue) -> Result<()> {
        match &self.kind {
            CocycleKind::Identity | CocycleKind::Holonomy { .. } => {
                out.matrix.fill_with_identity();
                out.log_scale = 0.0;
            }
            CocycleKind::DiagonalBusemann { rates } => {
                let delta = (b[1] / a[1]).ln();
                diagonal_exp(rates.iter().map(|c| c * delta), out);
            }
            CocycleKind::OneForm { terms, .. } => {
                if terms.iter().all(|(_, m)| is_diagonal(m)) {
                    let d = self.rank;
                    let mut x = [0.0f64; 16];
                    let mut xs = if d <= 16 { None } else { Some(vec![0.0; d]) };
                    let buf: &mut [f64] = match xs.as_mut() {
                        Some(v) => v,
                        None => &mut x[..d],
                    };
                    for (p, m) in terms {
                        let df = p.increment(a, b);
                        for (j, v) in buf.iter_mut().enumerate() {
                            *v += df * m[(j, j)];
                        }
                    }
                    diagonal_exp(buf.iter().copied(), out);
                } else {
                    let mut x = DMatrix::zeros(self.rank, self.rank);
                    for (p, m) in terms {
                        x += m * p.increment(a, b);
                    }
                    let e = x.exp();
                    if !e.iter().all(|v| v.is_finite()) {
                        return Err(Error::numeric(OP_EVAL, "non-finite step exponential"));
                    }
                    if 2.0 * x.norm() > 1e12f64.ln() && !(linalg::condition_estimate(&e) < 1e12) {
                        return Err(Error::numeric(OP_EVAL, "ill-conditioned step value"));
                    }
                    out.matrix.copy_from(&e);
                    out.log_scale = 0.0;
                }
            }
            CocycleKind::Conjugated { base, p, p_inv } => {
                let s = base.step(model, a, b)?;
                out.matrix.copy_from(&(p * s.matrix * p_inv));
                out.log_scale = s.log_scale;
            }
            CocycleKind::WedgePower { base, k } => {
                let s = base.step(model, a, b)?;
                out.matrix.copy_from(&linalg::wedge(&s.matrix, *k));
                out.log_scale = *k as f64 * s.log_scale;
            }
            CocycleKind::Dual { base } => {
                let s = base.step(model, a, b)?;
                let inv = linalg::inverse_transpose(OP_EVAL, &s.matrix)?;
                out.matrix.copy_from(&inv);
                out.log_scale = -s.log_scale;
            }
        }
        Ok(())
    }

    /// Patch-local closed form `A(path x → y)`; fails for path-ordered specs,
    /// whose value depends on the path.
    pub fn patch_value(&self, model: &LeafModel, x: &[f64], y: &[f64]) -> Result<CocycleValue> {
        if !self.is_path_independent() {
            return Err(Error::capability(
                "bounds::specialization",
                format!("{} has no patch-local closed form", self.name()),
            ));
        }
        self.step(model, x, y)
    }

    fn is_path_independent(&self) -> bool {
        match &self.kind {
            CocycleKind::OneForm { ordered, .. } => !ordered,
            CocycleKind::Conjugated { base, .. } | CocycleKind::WedgePower { base, .. } | CocycleKind::Dual { base } => {
                base.is_path_independent()
            }
            _ => true,
        }
    }

    /// When every step value is a function of the increment of one
    /// homogeneous driver, returns that driver.
    pub fn driver(&self, model: &LeafModel) -> Option<Driver> {
        match &self.kind {
            CocycleKind::Identity | CocycleKind::Holonomy { .. } => Some(match model.kind() {
                LeafKind::HyperbolicPlane => Driver::LogHeight,
                _ => Driver::Coordinate(0),
            }),
            CocycleKind::DiagonalBusemann { .. } => (model.kind() == LeafKind::HyperbolicPlane).then_some(Driver::LogHeight),
            CocycleKind::OneForm { terms, .. } => {
                let mut found: Option<Driver> = None;
                for (p, _) in terms {
                    let (d, _) = p.driver(model)?;
                    if found.is_some_and(|f| f != d) {
                        return None;
                    }
                    found = Some(d);
                }
                found
            }
            CocycleKind::Conjugated { base, .. } | CocycleKind::WedgePower { base, .. } | CocycleKind::Dual { base } => base.driver(model),
        }
    }

    /// Step value for a driver increment `delta` (see [`driver`](Self::driver)).
    pub fn driver_step(&self, model: &LeafModel, delta: f64) -> Result<CocycleValue> {
        let driver = self
            .driver(model)
            .ok_or_else(|| Error::capability("cocycle::driver_step", format!("{} has no homogeneous driver on {}", self.name(), model.name())))?;
        let (a, b) = match (driver, model.kind()) {
            (Driver::LogHeight, _) => (vec![0.0, 1.0], vec![0.0, delta.exp()]),
            (Driver::Coordinate(i), _) => {
                let a = vec![0.0; model.dim()];
                let mut b = a.clone();
                b[i] = delta;
                (a, b)
            }
        };
        self.step(model, &a, &b)
    }
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
}

fn diagonal_exp(xs: impl Iterator<Item = f64> + Clone, out: &mut CocycleValue) {
    let s = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    out.matrix.fill(0.0);
    for (j, x) in xs.enumerate() {
        out.matrix[(j, j)] = (x - s).exp();
    }
    out.log_scale = s;
}

/// Incremental left fold of step values along a path.
pub struct Fold<'a> {
    spec: &'a CocycleSpec,
    value: CocycleValue,
    step: CocycleValue,
    scratch: DMatrix<f64>,
}

impl<'a> Fold<'a> {
    pub fn new(spec: &'a CocycleSpec) -> Self {
        Fold::resume(spec, CocycleValue::identity(spec.rank))
    }

    /// Continue from an already accumulated value.
    pub fn resume(spec: &'a CocycleSpec, value: CocycleValue) -> Self {
        let d = spec.rank;
        Fold {
            spec,
            value,
            step: CocycleValue::identity(d),
            scratch: DMatrix::zeros(d, d),
        }
    }

    /// Apply the step `a → b`; `index` names the step in errors.
    pub fn push(&mut self, model: &LeafModel, a: &[f64], b: &[f64], index: usize) -> Result<()> {
        self.spec.step_into(model, a, b, &mut self.step).map_err(|e| name_step(e, index))?;
        self.value.compose_step(&self.step, &mut self.scratch);
        if !self.value.log_scale.is_finite() {
            return Err(Error::numeric(OP_EVAL, format!("non-finite value at step {index}")));
        }
        Ok(())
    }

    /// Apply an explicit step value.
    pub fn push_value(&mut self, step: &CocycleValue) {
        self.value.compose_step(step, &mut self.scratch);
    }

    pub fn value(&self) -> &CocycleValue {
        &self.value
    }

    /// The most recent step value.
    pub fn last_step(&self) -> &CocycleValue {
        &self.step
    }

    pub fn into_value(self) -> CocycleValue {
        self.value
    }
}

fn name_step(e: Error, index: usize) -> Error {
    match e {
        Error::Numeric { op, detail } => Error::Numeric {
            op,
            detail: format!("{detail} (step {index})"),
        },
        other => other,
    }
}

/// `A(ω, kΔ)` from `A(ω, jΔ)`, folding steps `j..k` onto `start`.
pub fn continue_from(c: &CocycleSpec, path: &DiscretePath, start: CocycleValue, j: usize, k: usize) -> Result<CocycleValue> {
    c.check_model(path.model())?;
    if j > k || k > path.steps() {
        return Err(Error::domain(OP_EVAL, format!("step range {j}..{k} outside 0..{}", path.steps())));
    }
    let model = *path.model();
    let mut fold = Fold::resume(c, start);
    for i in j..k {
        fold.push(&model, path.point(i), path.point(i + 1), i)?;
    }
    Ok(fold.into_value())
}

/// `A(ω, kΔ)`.
pub fn evaluate_steps(c: &CocycleSpec, path: &DiscretePath, k: usize) -> Result<CocycleValue> {
    continue_from(c, path, CocycleValue::identity(c.rank()), 0, k)
}

/// `A(ω, t)` for a grid time `t`.
pub fn evaluate(c: &CocycleSpec, path: &DiscretePath, t: f64) -> Result<CocycleValue> {
    let k = path.index_of(t).map_err(|e| match e {
        Error::Domain { detail, .. } => Error::domain(OP_EVAL, detail),
        other => other,
    })?;
    evaluate_steps(c, path, k)
}

/// Step value used by the backward fold at index `k`:
/// `A(path b_{k+1} → b_k)⁻¹`, which for local expressions equals the forward
/// step `b_k → b_{k+1}`.
pub fn backward_step_into(c: &CocycleSpec, model: &LeafModel, bk: &[f64], bk1: &[f64], out: &mut CocycleValue) -> Result<()> {
    c.step_into(model, bk, bk1, out)
}

/// `A(ω̂, t)` for `t ≤ 0`: `A(π̂(T^t ω̂), |t|)⁻¹`, the inverse of the forward
/// value along the backward half read from `ω̂(t)` to `ω̂(0)`.
pub fn extend_backward(c: &CocycleSpec, path: &ExtendedPath, t: f64) -> Result<CocycleValue> {
    const OP: &str = "cocycle::extend_backward";
    if t > 0.0 {
        return Err(Error::domain(OP, format!("backward time must be nonpositive, got {t}")));
    }
    let b = &path.backward;
    let n = b.index_of(-t).map_err(|e| match e {
        Error::Domain { detail, .. } => Error::domain(OP, detail),
        other => other,
    })?;
    c.check_model(b.model())?;
    let model = *b.model();
    let mut fold = Fold::new(c);
    let mut step = CocycleValue::identity(c.rank());
    for k in 0..n {
        backward_step_into(c, &model, b.point(k), b.point(k + 1), &mut step).map_err(|e| name_step(e, k))?;
        fold.push_value(&step);
    }
    Ok(fold.into_value())
}

/// `A(T^{−t} ω̂, t)`: the forward value along the backward half from `ω̂(−t)`
/// to `ω̂(0)`.
pub fn forward_from_past(c: &CocycleSpec, path: &ExtendedPath, t: f64) -> Result<CocycleValue> {
    let b = &path.backward;
    let n = b.index_of(t)?;
    let model = *b.model();
    let mut fold = Fold::new(c);
    for k in (0..n).rev() {
        fold.push(&model, b.point(k + 1), b.point(k), k)?;
    }
    Ok(fold.into_value())
}

/// Leaf distance covered by a path between grid indices.
pub fn displacement(path: &DiscretePath, k: usize) -> f64 {
    leaf_distance(path.model(), path.start(), path.point(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamSeed;
    use crate::wiener::{sample_extended_path, sample_path};
    use proptest::prelude::*;

    fn h2() -> LeafModel {
        LeafModel::hyperbolic_plane()
    }

    fn random_matrix(d: usize, seed: u64) -> DMatrix<f64> {
        use rand::Rng;
        let mut rng = StreamSeed::new(seed).rng();
        DMatrix::from_fn(d, d, |i, j| rng.random::<f64>() * 2.0 - 1.0 + if i == j { 2.0 } else { 0.0 })
    }

    #[test]
    fn identity_at_time_zero() {
        let p = sample_path(&h2(), &[0.0, 1.0], 1.0, 1.0 / 16.0, StreamSeed::new(1)).unwrap();
        for c in [CocycleSpec::busemann(), CocycleSpec::diagonal_busemann(vec![1.0, 2.0]).unwrap(), CocycleSpec::identity(3)] {
            let v = evaluate(&c, &p, 0.0).unwrap();
            assert_eq!(v, CocycleValue::identity(c.rank()));
        }
        assert!(evaluate(&CocycleSpec::busemann(), &p, 0.03).is_err());
    }

    #[test]
    fn busemann_one_form_over_a_unit_rise() {
        let c = CocycleSpec::one_form(vec![(Potential::LogHeight, DMatrix::from_element(1, 1, 1.0))]).unwrap();
        let path = DiscretePath::from_points(h2(), 1.0 / 16.0, &[vec![0.0, 1.0], vec![0.0, std::f64::consts::E]]).unwrap();
        let v = evaluate(&c, &path, 1.0 / 16.0).unwrap();
        assert_eq!(v.matrix[(0, 0)], 1.0);
        assert!((v.log_scale - 1.0).abs() < 1e-15);
    }

    #[test]
    fn multiplicative_law_is_exact_under_shared_composition() {
        let c = CocycleSpec::conjugated(CocycleSpec::diagonal_busemann(vec![1.0, 2.0, 3.0]).unwrap(), random_matrix(3, 4)).unwrap();
        let p = sample_path(&h2(), &[0.0, 1.0], 4.0, 1.0 / 64.0, StreamSeed::new(2)).unwrap();
        let (s, t) = (1.5, 2.25);
        let whole = evaluate(&c, &p, s + t).unwrap();
        let kt = p.index_of(t).unwrap();
        let first = evaluate(&c, &p, t).unwrap();
        let shared = continue_from(&c, &p, first.clone(), kt, p.index_of(s + t).unwrap()).unwrap();
        assert_eq!(shared, whole);
        let second = evaluate(&c, &p.shift(t).unwrap(), s).unwrap();
        assert!(second.mul(&first).relative_distance(&whole) < 1e-10);
    }

    #[test]
    fn wedge_examples() {
        let a = CocycleValue::new(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])), 0.0);
        let w = a.wedge(2);
        assert!((w.to_matrix()[(0, 0)] - 6.0).abs() < 1e-12);
        assert_eq!(a.wedge(1).to_matrix(), a.to_matrix());
        let m = random_matrix(3, 9);
        let w2 = linalg::wedge(&m, 2);
        let sets = linalg::combinations(3, 2);
        for (r, rs) in sets.iter().enumerate() {
            for (c, cs) in sets.iter().enumerate() {
                let minor = m[(rs[0], cs[0])] * m[(rs[1], cs[1])] - m[(rs[0], cs[1])] * m[(rs[1], cs[0])];
                assert!((w2[(r, c)] - minor).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dual_examples() {
        let q = DMatrix::from_row_slice(2, 2, &[0.6, -0.8, 0.8, 0.6]);
        let v = CocycleValue::new(q.clone(), 0.0);
        assert!((v.inverse_transpose("t").unwrap().to_matrix() - q).norm() < 1e-12);
        let d = CocycleValue::new(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5])), 0.0);
        let dd = d.inverse_transpose("t").unwrap().to_matrix();
        assert!((dd[(0, 0)] - 0.5).abs() < 1e-14 && (dd[(1, 1)] - 2.0).abs() < 1e-14);
        let r = CocycleValue::new(random_matrix(3, 3), 0.0);
        let back = r.inverse_transpose("t").unwrap().inverse_transpose("t").unwrap();
        assert!(back.relative_distance(&r) < 1e-10);
    }

    #[test]
    fn spec_level_dual_and_wedge_agree_with_values() {
        let base = CocycleSpec::conjugated(CocycleSpec::diagonal_busemann(vec![0.5, -1.0, 1.5]).unwrap(), random_matrix(3, 5)).unwrap();
        let p = sample_path(&h2(), &[0.0, 1.0], 2.0, 1.0 / 32.0, StreamSeed::new(3)).unwrap();
        let a = evaluate(&base, &p, 2.0).unwrap();
        let dual = evaluate(&CocycleSpec::dual(base.clone()), &p, 2.0).unwrap();
        assert!(dual.relative_distance(&a.inverse_transpose("t").unwrap()) < 1e-10);
        let dd = evaluate(&CocycleSpec::dual(CocycleSpec::dual(base.clone())), &p, 2.0).unwrap();
        assert!(dd.relative_distance(&a) < 1e-10);
        let w = evaluate(&CocycleSpec::wedge_power(base.clone(), 2).unwrap(), &p, 2.0).unwrap();
        assert!(w.relative_distance(&a.wedge(2)) < 1e-10);
        let top = evaluate(&CocycleSpec::wedge_power(base, 3).unwrap(), &p, 2.0).unwrap();
        assert!((top.log_abs_det() - a.log_abs_det()).abs() < 1e-10 * a.log_abs_det().abs().max(1.0));
    }

    #[test]
    fn backward_extension() {
        let c = CocycleSpec::busemann();
        let e = sample_extended_path(&h2(), &[0.0, 1.0], 2.0, 1.0 / 16.0, StreamSeed::new(11)).unwrap();
        assert_eq!(extend_backward(&c, &e, 0.0).unwrap(), CocycleValue::identity(1));
        let t = 1.5;
        let v = extend_backward(&c, &e, -t).unwrap();
        let k = e.backward.index_of(t).unwrap();
        let delta = (e.backward.point(k)[1] / e.backward.point(0)[1]).ln();
        // the forward value from ω(−t) to ω(0) is e^{−δ}; its inverse is e^{δ}
        assert!((v.log_scale + v.matrix[(0, 0)].ln() - delta).abs() < 1e-12);
        let fwd = forward_from_past(&c, &e, t).unwrap();
        assert!(v.mul(&fwd).relative_distance(&CocycleValue::identity(1)) < 1e-12);

        let c3 = CocycleSpec::conjugated(CocycleSpec::diagonal_busemann(vec![1.0, 2.0, 3.0]).unwrap(), random_matrix(3, 2)).unwrap();
        let v = extend_backward(&c3, &e, -t).unwrap();
        let fwd = forward_from_past(&c3, &e, t).unwrap();
        assert!(v.mul(&fwd).relative_distance(&CocycleValue::identity(3)) < 1e-10);
    }

    #[test]
    fn rejects_noncommuting_one_forms() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let terms = vec![(Potential::LogHeight, a), (Potential::Coordinate(0), b)];
        assert!(CocycleSpec::one_form(terms.clone()).is_err());
        assert!(CocycleSpec::path_ordered(terms).is_ok());
    }

    #[test]
    fn log_scale_tracks_extended_precision_norm() {
        // rank-2 diagonal: the exact log norm is max_i c_i Δlog y.
        let c = CocycleSpec::diagonal_busemann(vec![1.0, 3.0]).unwrap();
        let p = sample_path(&h2(), &[0.0, 1.0], 200.0, 1.0 / 16.0, StreamSeed::new(5)).unwrap();
        let v = evaluate(&c, &p, 200.0).unwrap();
        let delta = p.end()[1].ln();
        let exact = (1.0 * delta).max(3.0 * delta);
        assert!((v.log_norm() - exact).abs() < 1e-8 * exact.abs());
    }

    proptest! {
        #[test]
        fn wedge_is_functorial(seed in 0u64..500, k in 1usize..=3) {
            let a = random_matrix(3, seed);
            let b = random_matrix(3, seed + 1000);
            let lhs = linalg::wedge(&(&a * &b), k);
            let rhs = linalg::wedge(&a, k) * linalg::wedge(&b, k);
            prop_assert!((&lhs - &rhs).norm() <= 1e-10 * lhs.norm().max(1.0));
            let top = linalg::wedge(&a, 3)[(0, 0)];
            prop_assert!((top - a.clone().determinant()).abs() <= 1e-10 * top.abs().max(1.0));
        }

        #[test]
        fn random_bisection_has_zero_residual(seed in 0u64..50, cut in 1usize..63) {
            let c = CocycleSpec::diagonal_busemann(vec![1.0, -0.5]).unwrap();
            let p = sample_path(&LeafModel::hyperbolic_plane(), &[0.0, 1.0], 4.0, 1.0 / 16.0, StreamSeed::new(seed)).unwrap();
            let whole = evaluate_steps(&c, &p, 64).unwrap();
            let head = evaluate_steps(&c, &p, cut).unwrap();
            prop_assert_eq!(continue_from(&c, &p, head, cut, 64).unwrap(), whole);
        }
    }
}
