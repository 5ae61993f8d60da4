//! Experiment configuration: a TOML document whose keys are written dotted,
//! `section.key = value`. Schema in the crate README.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cocycle::{CocycleKind, CocycleSpec, Potential};
use crate::error::{Error, Result};
use crate::lamination::{LaminationKind, LaminationModel};
use crate::wiener::{CylinderEvent, CylinderSet};

const OP: &str = "experiment::load";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub cocycle: CocycleConfig,
    pub estimator: EstimatorConfig,
    pub run: RunConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    KroneckerTorus {
        slope: f64,
    },
    HyperbolicLeaf {
        #[serde(default = "default_h2_base")]
        base: [f64; 2],
    },
    SuspensionLine {
        rotation: f64,
    },
    EuclideanLeaf {
        base: Vec<f64>,
    },
}

fn default_h2_base() -> [f64; 2] {
    [0.0, 1.0]
}

impl ModelConfig {
    pub fn id(&self) -> &'static str {
        match self {
            ModelConfig::KroneckerTorus { .. } => "kronecker-torus",
            ModelConfig::HyperbolicLeaf { .. } => "hyperbolic-leaf",
            ModelConfig::SuspensionLine { .. } => "suspension-line",
            ModelConfig::EuclideanLeaf { .. } => "euclidean-leaf",
        }
    }

    pub fn lamination_kind(&self) -> LaminationKind {
        match self {
            ModelConfig::KroneckerTorus { slope } => LaminationKind::KroneckerTorus { slope: *slope },
            ModelConfig::HyperbolicLeaf { base } => LaminationKind::SingleHyperbolicLeaf { base: *base },
            ModelConfig::SuspensionLine { rotation } => LaminationKind::SuspensionLine { rotation: *rotation },
            ModelConfig::EuclideanLeaf { base } => LaminationKind::SingleEuclideanLeaf { base: base.clone() },
        }
    }

    pub fn build(&self) -> Result<LaminationModel> {
        LaminationModel::from_kind(self.lamination_kind()).map_err(|e| Error::config(OP, format!("model: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialConfig {
    LogHeight,
    Coordinate { index: usize },
    Linear { coefficients: Vec<f64> },
    WindingAngle { center: [f64; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub potential: PotentialConfig,
    /// Rows of the generator.
    pub generator: Vec<Vec<f64>>,
}

/// Cocycle specs in config form; matrices are lists of rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CocycleConfig {
    Identity { rank: usize },
    Busemann,
    DiagonalBusemann { rates: Vec<f64> },
    OneForm { terms: Vec<TermConfig> },
    PathOrdered { terms: Vec<TermConfig> },
    Conjugated { base: Box<CocycleConfig>, p: Vec<Vec<f64>> },
    Wedge { base: Box<CocycleConfig>, k: usize },
    Dual { base: Box<CocycleConfig> },
    Holonomy,
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Error::config(OP, format!("{field}: rows must be nonempty and of equal length")));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::config(OP, format!("{field}: entries must be finite")));
    }
    Ok(DMatrix::from_fn(n, rows[0].len(), |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl PotentialConfig {
    fn build(&self) -> Potential {
        match self {
            PotentialConfig::LogHeight => Potential::LogHeight,
            PotentialConfig::Coordinate { index } => Potential::Coordinate(*index),
            PotentialConfig::Linear { coefficients } => Potential::Linear(coefficients.clone()),
            PotentialConfig::WindingAngle { center } => Potential::WindingAngle { center: *center },
        }
    }

    fn from_potential(p: &Potential) -> Option<Self> {
        Some(match p {
            Potential::LogHeight => PotentialConfig::LogHeight,
            Potential::Coordinate(i) => PotentialConfig::Coordinate { index: *i },
            Potential::Linear(a) => PotentialConfig::Linear { coefficients: a.clone() },
            Potential::WindingAngle { center } => PotentialConfig::WindingAngle { center: *center },
            Potential::Field(_) => return None,
        })
    }
}

impl CocycleConfig {
    pub fn id(&self) -> &'static str {
        match self {
            CocycleConfig::Identity { .. } => "identity",
            CocycleConfig::Busemann => "busemann",
            CocycleConfig::DiagonalBusemann { .. } => "diagonal-busemann",
            CocycleConfig::OneForm { .. } => "one-form",
            CocycleConfig::PathOrdered { .. } => "path-ordered",
            CocycleConfig::Conjugated { .. } => "conjugated",
            CocycleConfig::Wedge { .. } => "wedge",
            CocycleConfig::Dual { .. } => "dual",
            CocycleConfig::Holonomy => "holonomy",
        }
    }

    /// The spec; `lamination` supplies the holonomy cocycle.
    pub fn build(&self, lamination: &LaminationModel) -> Result<CocycleSpec> {
        let wrap = |e: Error| Error::config(OP, format!("cocycle: {e}"));
        let terms = |ts: &[TermConfig]| -> Result<Vec<(Potential, DMatrix<f64>)>> {
            ts.iter()
                .enumerate()
                .map(|(i, t)| Ok((t.potential.build(), matrix(&format!("cocycle.terms[{i}].generator"), &t.generator)?)))
                .collect()
        };
        match self {
            CocycleConfig::Identity { rank } if *rank == 0 => Err(Error::config(OP, "cocycle.rank must be positive")),
            CocycleConfig::Identity { rank } => Ok(CocycleSpec::identity(*rank)),
            CocycleConfig::Busemann => Ok(CocycleSpec::busemann()),
            CocycleConfig::DiagonalBusemann { rates } => CocycleSpec::diagonal_busemann(rates.clone()).map_err(wrap),
            CocycleConfig::OneForm { terms: ts } => CocycleSpec::one_form(terms(ts)?).map_err(wrap),
            CocycleConfig::PathOrdered { terms: ts } => CocycleSpec::path_ordered(terms(ts)?).map_err(wrap),
            CocycleConfig::Conjugated { base, p } => CocycleSpec::conjugated(base.build(lamination)?, matrix("cocycle.p", p)?).map_err(wrap),
            CocycleConfig::Wedge { base, k } => CocycleSpec::wedge_power(base.build(lamination)?, *k).map_err(wrap),
            CocycleConfig::Dual { base } => Ok(CocycleSpec::dual(base.build(lamination)?)),
            CocycleConfig::Holonomy => crate::cocycle::holonomy_cocycle(lamination),
        }
    }

    /// Config form of a spec; `None` for field potentials, which have no
    /// textual form.
    pub fn from_spec(spec: &CocycleSpec) -> Option<Self> {
        let terms = |ts: &[(Potential, DMatrix<f64>)]| -> Option<Vec<TermConfig>> {
            ts.iter()
                .map(|(p, m)| {
                    Some(TermConfig {
                        potential: PotentialConfig::from_potential(p)?,
                        generator: rows(m),
                    })
                })
                .collect()
        };
        Some(match spec.kind() {
            CocycleKind::Identity => CocycleConfig::Identity { rank: spec.rank() },
            CocycleKind::DiagonalBusemann { rates } if rates.as_slice() == [1.0] => CocycleConfig::Busemann,
            CocycleKind::DiagonalBusemann { rates } => CocycleConfig::DiagonalBusemann { rates: rates.clone() },
            CocycleKind::OneForm { terms: ts, ordered: false } => CocycleConfig::OneForm { terms: terms(ts)? },
            CocycleKind::OneForm { terms: ts, ordered: true } => CocycleConfig::PathOrdered { terms: terms(ts)? },
            CocycleKind::Conjugated { base, p, .. } => CocycleConfig::Conjugated {
                base: Box::new(Self::from_spec(base)?),
                p: rows(p),
            },
            CocycleKind::WedgePower { base, k } => CocycleConfig::Wedge {
                base: Box::new(Self::from_spec(base)?),
                k: *k,
            },
            CocycleKind::Dual { base } => CocycleConfig::Dual {
                base: Box::new(Self::from_spec(base)?),
            },
            CocycleKind::Holonomy { .. } => CocycleConfig::Holonomy,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SetConfig {
    Interval { lo: f64, hi: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Heights { lo: f64, hi: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventConfig {
    pub time: f64,
    pub set: SetConfig,
}

impl EventConfig {
    pub fn build(&self) -> CylinderEvent {
        let set = match &self.set {
            SetConfig::Interval { lo, hi } => CylinderSet::Interval { lo: *lo, hi: *hi },
            SetConfig::Box { lo, hi } => CylinderSet::Box { lo: lo.clone(), hi: hi.clone() },
            SetConfig::Heights { lo, hi } => CylinderSet::Heights { lo: *lo, hi: *hi },
        };
        CylinderEvent { time: self.time, set }
    }
}

fn d_held_out() -> usize {
    16
}
fn d_window() -> f64 {
    16.0
}
fn d_every() -> f64 {
    10.0
}
fn d_samples() -> usize {
    2048
}
fn d_ascent() -> usize {
    50
}
fn d_refine() -> usize {
    5
}
fn d_rel_step() -> f64 {
    1e-2
}
fn d_n() -> usize {
    3
}
fn d_panel() -> f64 {
    0.1
}
fn d_angular() -> usize {
    720
}
fn d_level() -> usize {
    4
}
fn d_sweeps() -> usize {
    5000
}
fn d_tol() -> f64 {
    1e-4
}
fn d_trials() -> usize {
    32
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EstimatorConfig {
    Spectrum,
    Oseledec {
        #[serde(default = "d_held_out")]
        held_out: usize,
        #[serde(default)]
        transport_time: Option<f64>,
        /// Window for the angle series; the series is skipped unless
        /// `T ≥ angle_window + angle_every`.
        #[serde(default = "d_window")]
        angle_window: f64,
        #[serde(default = "d_every")]
        angle_every: f64,
    },
    Bounds {
        /// 0 evaluates at the model's base point; otherwise draws from its
        /// harmonic measure.
        #[serde(default)]
        sites: usize,
        #[serde(default = "d_samples")]
        samples: usize,
        #[serde(default = "d_ascent")]
        ascent_steps: usize,
        #[serde(default = "d_refine")]
        refine: usize,
        #[serde(default = "d_rel_step")]
        rel_step: f64,
    },
    Candel {
        #[serde(default)]
        sites: usize,
        #[serde(default = "d_rel_step")]
        rel_step: f64,
    },
    Phi {
        /// Largest `n`; every `1..=n` is reported.
        #[serde(default = "d_n")]
        n: usize,
        /// Direction; normalized. Defaults to `(1, …, 1)`.
        #[serde(default)]
        u: Option<Vec<f64>>,
        #[serde(default = "d_panel")]
        panel: f64,
    },
    Ledrappier {
        #[serde(default = "d_angular")]
        angular_nodes: usize,
        #[serde(default = "d_level")]
        sphere_level: usize,
        #[serde(default = "d_sweeps")]
        max_sweeps: usize,
        #[serde(default = "d_tol")]
        tol: f64,
        #[serde(default = "d_panel")]
        panel: f64,
    },
    Lawcheck {
        #[serde(default = "d_trials")]
        trials: usize,
        /// Declared `(C, R)` of the moderate-growth bound.
        #[serde(default)]
        moderate: Option<[f64; 2]>,
    },
    Cylinder {
        events: Vec<EventConfig>,
    },
}

impl EstimatorConfig {
    pub fn id(&self) -> &'static str {
        match self {
            EstimatorConfig::Spectrum => "spectrum",
            EstimatorConfig::Oseledec { .. } => "oseledec",
            EstimatorConfig::Bounds { .. } => "bounds",
            EstimatorConfig::Candel { .. } => "candel",
            EstimatorConfig::Phi { .. } => "phi",
            EstimatorConfig::Ledrappier { .. } => "ledrappier",
            EstimatorConfig::Lawcheck { .. } => "lawcheck",
            EstimatorConfig::Cylinder { .. } => "cylinder",
        }
    }
}

fn d_workers() -> usize {
    1
}
fn d_output() -> String {
    "out".into()
}
fn d_reject() -> f64 {
    10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Horizon.
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    /// Convergence checkpoint spacing in time units; 0 disables the
    /// convergence file.
    #[serde(default)]
    pub checkpoint: f64,
    #[serde(default = "d_workers")]
    pub workers: usize,
    /// Relative to the directory of the config file.
    #[serde(default = "d_output")]
    pub output: String,
    /// Defaults to the config file stem.
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default = "d_reject")]
    pub reject_sigmas: f64,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config(OP, e.message().to_string() + &location(text, e.span())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(OP, format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Field-level checks that do not need the model.
    pub fn validate(&self) -> Result<()> {
        let r = &self.run;
        let dyadic = r.dt > 0.0 && r.dt.is_finite() && r.dt.to_bits() & ((1u64 << 52) - 1) == 0;
        if !dyadic || r.dt > 1.0 / 16.0 {
            return Err(Error::config(OP, format!("run.dt = {} must be a power of two no larger than 1/16", r.dt)));
        }
        if !(r.horizon > 0.0) || !r.horizon.is_finite() {
            return Err(Error::config(OP, format!("run.T = {} must be positive", r.horizon)));
        }
        if (r.horizon / r.dt).fract() != 0.0 {
            return Err(Error::config(OP, format!("run.T / run.dt = {} / {} is not an integer", r.horizon, r.dt)));
        }
        if r.paths == 0 {
            return Err(Error::config(OP, "run.paths must be at least 1"));
        }
        if r.workers == 0 {
            return Err(Error::config(OP, "run.workers must be at least 1"));
        }
        if r.checkpoint < 0.0 || (r.checkpoint / r.dt).fract() != 0.0 {
            return Err(Error::config(OP, format!("run.checkpoint = {} is not a nonnegative multiple of run.dt", r.checkpoint)));
        }
        if !(r.reject_sigmas > 0.0) {
            return Err(Error::config(OP, "run.reject_sigmas must be positive"));
        }
        match &self.estimator {
            EstimatorConfig::Phi { n, .. } if !(1..=4).contains(n) => Err(Error::config(OP, format!("estimator.n = {n} must lie in 1..=4"))),
            EstimatorConfig::Cylinder { events } if events.is_empty() => Err(Error::config(OP, "estimator.events must not be empty")),
            EstimatorConfig::Cylinder { events } => match events.iter().position(|e| (e.time / r.dt).fract() != 0.0) {
                Some(i) => Err(Error::config(OP, format!("estimator.events[{i}].time is not a multiple of run.dt"))),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

fn location(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(s) => {
            let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BUSEMANN: &str = r#"
model.kind = "hyperbolic-leaf"
cocycle.kind = "busemann"
estimator.kind = "spectrum"
run.T = 4
run.dt = 0.0625
run.paths = 8
run.seed = 42
"#;

    #[test]
    fn parses_dotted_keys_with_defaults() {
        let c = ExperimentConfig::parse(BUSEMANN).unwrap();
        assert_eq!(c.model, ModelConfig::HyperbolicLeaf { base: [0.0, 1.0] });
        assert_eq!(c.run.workers, 1);
        assert_eq!(ExperimentConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn validation_cites_the_field() {
        let bad = BUSEMANN.replace("run.T = 4", "run.T = 4.03125");
        let e = ExperimentConfig::parse(&bad).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("run.T"), "{e}");
        let e = ExperimentConfig::parse(&BUSEMANN.replace("0.0625", "0.001")).unwrap_err();
        assert!(e.to_string().contains("run.dt"), "{e}");
        let e = ExperimentConfig::parse(&BUSEMANN.replace("run.paths = 8", "run.pathz = 8")).unwrap_err();
        assert!(e.to_string().contains("pathz"), "{e}");
    }

    #[test]
    fn nested_cocycles_round_trip_through_specs() {
        let text = r#"
model.kind = "kronecker-torus"
model.slope = 0.6180339887498949
cocycle.kind = "conjugated"
cocycle.p = [[1.0, 1.0], [0.0, 1.0]]
cocycle.base.kind = "one-form"
cocycle.base.terms = [{ potential = { kind = "coordinate", index = 0 }, generator = [[1.0, 0.0], [0.0, -1.0]] }]
estimator.kind = "lawcheck"
run.T = 1
run.dt = 0.0625
run.paths = 1
run.seed = 1
"#;
        let c = ExperimentConfig::parse(text).unwrap();
        let lam = c.model.build().unwrap();
        let spec = c.cocycle.build(&lam).unwrap();
        assert_eq!(spec.name(), "conjugated(one-form(x0))");
        assert_eq!(CocycleConfig::from_spec(&spec).unwrap(), c.cocycle);
    }
}
