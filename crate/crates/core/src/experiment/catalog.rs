//! Shipped models, cocycle kinds and estimators, with a support table
//! derived from the library's own capability checks.

use std::fmt;

use super::config::{CocycleConfig, EstimatorConfig, EventConfig, ExperimentConfig, ModelConfig, PotentialConfig, RunConfig, SetConfig, TermConfig};
use crate::error::{Error, Result};
use crate::geometry::LeafKind;

pub const MODELS: [(&str, &str); 4] = [
    ("kronecker-torus", "slope: real (irrational for dense leaves); leaves are lines, measure Lebesgue"),
    ("hyperbolic-leaf", "base: [x, y] with y > 0, default [0, 1]; single leaf, per-path mode"),
    ("suspension-line", "rotation: real; suspension of a circle rotation, measure Lebesgue"),
    ("euclidean-leaf", "base: [x_1, ..., x_n]; single flat leaf, per-path mode"),
];

pub const COCYCLES: [(&str, &str); 9] = [
    ("identity", "rank: integer >= 1"),
    ("busemann", "none; y(end)/y(start) on the hyperbolic plane"),
    ("diagonal-busemann", "rates: [c_1, ..., c_d]"),
    ("one-form", "terms: [{ potential, generator }], commuting generators"),
    ("path-ordered", "terms: as one-form, any generators"),
    ("conjugated", "base: cocycle, p: invertible matrix"),
    ("wedge", "base: cocycle, k: 1..=rank"),
    ("dual", "base: cocycle"),
    ("holonomy", "none; transverse derivative of the model's holonomy"),
];

pub const POTENTIALS: [(&str, &str); 4] = [
    ("log-height", "log y on the hyperbolic plane"),
    ("coordinate", "index: chart coordinate"),
    ("linear", "coefficients: flat leaves only"),
    ("winding-angle", "center: [x, y]; euclidean 2-leaf, not a cocycle"),
];

pub const ESTIMATORS: [(&str, &str); 8] = [
    ("spectrum", "QR spectrum with multiplicities"),
    ("oseledec", "held_out, transport_time, angle_window, angle_every"),
    ("bounds", "sites, samples, ascent_steps, refine, rel_step"),
    ("candel", "sites, rel_step; rank one"),
    ("phi", "n in 1..=4, u, panel; homogeneous driver"),
    ("ledrappier", "angular_nodes, sphere_level, max_sweeps, tol, panel; homogeneous driver, rank <= 3"),
    ("lawcheck", "trials, moderate = [C, R]"),
    ("cylinder", "events: [{ time, set }]"),
];

fn model(id: &str) -> Result<ModelConfig> {
    Ok(match id {
        "kronecker-torus" => ModelConfig::KroneckerTorus {
            slope: (5f64.sqrt() - 1.0) / 2.0,
        },
        "hyperbolic-leaf" => ModelConfig::HyperbolicLeaf { base: [0.0, 1.0] },
        "suspension-line" => ModelConfig::SuspensionLine {
            rotation: 2f64.sqrt() - 1.0,
        },
        "euclidean-leaf" => ModelConfig::EuclideanLeaf { base: vec![0.0, 0.0] },
        _ => return Err(Error::config("experiment::catalog", format!("unknown model id {id:?}"))),
    })
}

fn diag(v: &[f64]) -> Vec<Vec<f64>> {
    (0..v.len()).map(|i| (0..v.len()).map(|j| if i == j { v[i] } else { 0.0 }).collect()).collect()
}

/// The model's natural driving potential: `log y` on the half-plane, the
/// first coordinate elsewhere.
fn potential(m: &ModelConfig) -> PotentialConfig {
    match m {
        ModelConfig::HyperbolicLeaf { .. } => PotentialConfig::LogHeight,
        _ => PotentialConfig::Coordinate { index: 0 },
    }
}

fn cocycle(id: &str, m: &ModelConfig) -> Result<CocycleConfig> {
    let one_form = |g: Vec<Vec<f64>>| CocycleConfig::OneForm {
        terms: vec![TermConfig { potential: potential(m), generator: g }],
    };
    Ok(match id {
        "identity" => CocycleConfig::Identity { rank: 2 },
        "busemann" => CocycleConfig::Busemann,
        "diagonal-busemann" => CocycleConfig::DiagonalBusemann { rates: vec![1.0, 2.0] },
        "one-form" => one_form(vec![vec![1.0]]),
        "path-ordered" => CocycleConfig::PathOrdered {
            terms: vec![TermConfig {
                potential: potential(m),
                generator: vec![vec![0.5, 1.0], vec![0.0, -0.5]],
            }],
        },
        "conjugated" => CocycleConfig::Conjugated {
            base: Box::new(one_form(diag(&[1.0, 2.0]))),
            p: vec![vec![1.0, 1.0], vec![0.0, 1.0]],
        },
        "wedge" => CocycleConfig::Wedge {
            base: Box::new(one_form(diag(&[1.0, 2.0, 3.0]))),
            k: 2,
        },
        "dual" => CocycleConfig::Dual {
            base: Box::new(one_form(diag(&[1.0, 2.0]))),
        },
        "holonomy" => CocycleConfig::Holonomy,
        _ => return Err(Error::config("experiment::catalog", format!("unknown cocycle id {id:?}"))),
    })
}

fn estimator(id: &str, m: &ModelConfig) -> Result<EstimatorConfig> {
    if id != "cylinder" {
        return toml::from_str(&format!("kind = {id:?}")).map_err(|_| Error::config("experiment::catalog", format!("unknown estimator id {id:?}")));
    }
    let set = match m {
        ModelConfig::HyperbolicLeaf { base } => SetConfig::Heights { lo: base[1], hi: f64::INFINITY },
        ModelConfig::EuclideanLeaf { base } => SetConfig::Box {
            lo: vec![0.0; base.len()],
            hi: vec![f64::INFINITY; base.len()],
        },
        _ => SetConfig::Interval { lo: 0.0, hi: f64::INFINITY },
    };
    Ok(EstimatorConfig::Cylinder {
        events: vec![EventConfig { time: 1.0, set }],
    })
}

/// A small, valid config for the given ids, as TOML with dotted keys.
pub fn minimal_config(model_id: &str, cocycle_id: &str, estimator_id: &str) -> Result<String> {
    let m = model(model_id)?;
    let cfg = ExperimentConfig {
        cocycle: cocycle(cocycle_id, &m)?,
        estimator: estimator(estimator_id, &m)?,
        model: m,
        run: RunConfig {
            horizon: 4.0,
            dt: 1.0 / 16.0,
            paths: 64,
            seed: 42,
            checkpoint: 0.0,
            workers: 1,
            output: "out".into(),
            id: None,
            reject_sigmas: 10.0,
        },
    };
    Ok(dotted(&cfg))
}

/// Flattens a config into `a.b.c = value` lines; arrays of tables stay
/// inline.
fn dotted(cfg: &ExperimentConfig) -> String {
    fn walk(prefix: &str, v: &toml::Value, out: &mut String) {
        match v {
            toml::Value::Table(t) => {
                for (k, v) in t {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, v, out);
                }
            }
            other => out.push_str(&format!("{prefix} = {other}\n")),
        }
    }
    let v = toml::Value::try_from(cfg).expect("config serializes");
    let mut out = String::new();
    walk("", &v, &mut out);
    out
}

/// Why `estimator` cannot run `cocycle` on `model`, if it cannot.
pub fn support(model_id: &str, cocycle_id: &str, estimator_id: &str) -> Result<std::result::Result<(), String>> {
    let m = model(model_id)?;
    let lam = m.build()?;
    let leaf = lam.leaf();
    let spec = match cocycle(cocycle_id, &m)?.build(&lam) {
        Ok(s) => s,
        Err(e) => return Ok(Err(e.to_string())),
    };
    estimator(estimator_id, &m)?;
    if let Err(e) = spec.check_model(&leaf) {
        return Ok(Err(e.to_string()));
    }
    let origin = if leaf.kind() == LeafKind::HyperbolicPlane { vec![0.0, 1.0] } else { vec![0.0; leaf.dim()] };
    let verdict = match estimator_id {
        "bounds" | "candel" => match spec.patch_value(&leaf, &origin, &origin) {
            Err(e) => Err(e.to_string()),
            Ok(_) if estimator_id == "candel" && spec.rank() != 1 => Err("needs a rank-one cocycle".into()),
            Ok(_) if spec.rank() > 8 => Err("rank above 8".into()),
            Ok(_) => Ok(()),
        },
        "phi" | "ledrappier" => match spec.driver(&leaf) {
            None => Err("no homogeneous driver".into()),
            Some(_) if estimator_id == "ledrappier" && spec.rank() > 3 => Err("rank above 3".into()),
            Some(_) => Ok(()),
        },
        _ => Ok(()),
    };
    Ok(verdict)
}

#[derive(Clone, Debug)]
pub struct Catalog {
    /// `(model, cocycle, estimator, verdict)` for every shipped triple.
    pub support: Vec<(&'static str, &'static str, &'static str, std::result::Result<(), String>)>,
}

pub fn catalog() -> Catalog {
    let mut support = Vec::new();
    for (m, _) in MODELS {
        for (c, _) in COCYCLES {
            for (e, _) in ESTIMATORS {
                let v = self::support(m, c, e).expect("shipped ids resolve");
                support.push((m, c, e, v));
            }
        }
    }
    Catalog { support }
}

impl fmt::Display for Catalog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "models")?;
        for (id, p) in MODELS {
            writeln!(f, "  {id:<20} {p}")?;
        }
        writeln!(f, "cocycles")?;
        for (id, p) in COCYCLES {
            writeln!(f, "  {id:<20} {p}")?;
        }
        writeln!(f, "potentials")?;
        for (id, p) in POTENTIALS {
            writeln!(f, "  {id:<20} {p}")?;
        }
        writeln!(f, "estimators")?;
        for (id, p) in ESTIMATORS {
            writeln!(f, "  {id:<20} {p}")?;
        }
        writeln!(f, "support (+ runs, - unsupported with reason)")?;
        for (m, _) in MODELS {
            writeln!(f, "  {m}")?;
            for (c, _) in COCYCLES {
                let rows: Vec<_> = self.support.iter().filter(|s| s.0 == m && s.1 == c).collect();
                if let Some((.., Err(why))) = rows.iter().find(|r| r.2 == "spectrum") {
                    writeln!(f, "    {c:<18} - all estimators: {why}")?;
                    continue;
                }
                let marks: Vec<String> = rows
                    .iter()
                    .map(|r| match &r.3 {
                        Ok(()) => format!("+{}", r.2),
                        Err(_) => format!("-{}", r.2),
                    })
                    .collect();
                writeln!(f, "    {c:<18} {}", marks.join(" "))?;
            }
        }
        Ok(())
    }
}
