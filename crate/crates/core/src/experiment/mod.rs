//! Batch runner: one config, one estimator, three output files.
//!
//! `summary.csv` holds one row per reported quantity, `convergence.csv` the
//! checkpoint series (when `run.checkpoint > 0` or the estimator has one),
//! and `manifest.toml` echoes the config with timings and warnings. The
//! output directory is locked for the duration of a run.

mod catalog;
mod config;

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use serde::Serialize;

use crate::bounds::{self, DeltaOptions, LedrappierOptions, PhiOptions, Sites};
use crate::cocycle::{law_check, moderate_check, CocycleSpec};
use crate::error::{Error, Result};
use crate::lamination::HarmonicMeasureModel;
use crate::lyapunov::{self, AngleOptions, OseledecOptions};
use crate::wiener::{cylinder_probability, Ensemble, SamplerOptions};

pub use catalog::{catalog, minimal_config, support, Catalog, ESTIMATORS};
pub use config::{CocycleConfig, EstimatorConfig, EventConfig, ExperimentConfig, ModelConfig, PotentialConfig, RunConfig, SetConfig, TermConfig};

pub const SUMMARY_HEADER: [&str; 11] = ["run_id", "model", "cocycle", "estimator", "quantity", "value", "stderr", "n_paths", "T", "dt", "seed"];
pub const CONVERGENCE_HEADER: [&str; 4] = ["run_id", "time", "quantity", "value"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub quantity: String,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Checkpoint {
    pub time: f64,
    pub quantity: String,
    pub value: f64,
}

/// Everything an estimator reports, before any file is written.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub cocycle: String,
    pub rows: Vec<Row>,
    pub convergence: Vec<Checkpoint>,
    pub warnings: Vec<String>,
}

impl Outcome {
    fn push(&mut self, quantity: impl Into<String>, value: f64, stderr: f64) {
        self.rows.push(Row {
            quantity: quantity.into(),
            value,
            stderr,
        });
    }

    fn warn(&mut self, w: impl Into<String>) {
        self.warnings.push(w.into());
    }

    fn note_sampler(&mut self, ens: &Ensemble) {
        if ens.resampled_steps() > 0 {
            self.warn(format!("wiener::sample_path: {} wild steps redrawn", ens.resampled_steps()));
        }
        if ens.forced_steps() > 0 {
            self.warn(format!("wiener::sample_path: {} steps kept after exhausting redraws", ens.forced_steps()));
        }
    }

    /// Summary CSV bytes.
    pub fn summary_csv(&self, run_id: &str, cfg: &ExperimentConfig) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::io("experiment::run", e);
        w.write_record(SUMMARY_HEADER).map_err(err)?;
        for r in &self.rows {
            w.write_record([
                run_id,
                cfg.model.id(),
                &self.cocycle,
                cfg.estimator.id(),
                &r.quantity,
                &r.value.to_string(),
                &r.stderr.to_string(),
                &cfg.run.paths.to_string(),
                &cfg.run.horizon.to_string(),
                &cfg.run.dt.to_string(),
                &cfg.run.seed.to_string(),
            ])
            .map_err(err)?;
        }
        w.into_inner().map_err(|e| Error::io("experiment::run", e))
    }

    pub fn convergence_csv(&self, run_id: &str) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::io("experiment::run", e);
        w.write_record(CONVERGENCE_HEADER).map_err(err)?;
        for c in &self.convergence {
            w.write_record([run_id, &c.time.to_string(), &c.quantity, &c.value.to_string()]).map_err(err)?;
        }
        w.into_inner().map_err(|e| Error::io("experiment::run", e))
    }
}

struct Context {
    spec: CocycleSpec,
    mu: HarmonicMeasureModel,
    ens: Ensemble,
    x: Vec<f64>,
    stride: usize,
}

/// Runs the configured estimator on the current rayon pool.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let lam = cfg.model.build()?;
    let spec = cfg.cocycle.build(&lam)?;
    spec.check_model(&lam.leaf())?;
    let mu = HarmonicMeasureModel::canonical(lam);
    let r = &cfg.run;
    let ens = mu.ensemble(r.horizon, r.dt, r.paths, r.seed)?.with_options(SamplerOptions {
        reject_sigmas: r.reject_sigmas,
        ..SamplerOptions::default()
    });
    let steps = ens.steps();
    let stride = if r.checkpoint > 0.0 { (r.checkpoint / r.dt) as usize } else { steps };
    let x = ens.start_for(0);
    let ctx = Context { spec, mu, ens, x, stride };
    let mut out = Outcome {
        cocycle: ctx.spec.name(),
        ..Outcome::default()
    };
    match &cfg.estimator {
        EstimatorConfig::Spectrum => spectrum(&ctx, cfg, &mut out)?,
        EstimatorConfig::Oseledec {
            held_out,
            transport_time,
            angle_window,
            angle_every,
        } => oseledec(&ctx, (*held_out, *transport_time, *angle_window, *angle_every), &mut out)?,
        EstimatorConfig::Bounds {
            sites,
            samples,
            ascent_steps,
            refine,
            rel_step,
        } => {
            let opts = DeltaOptions {
                samples: *samples,
                ascent_steps: *ascent_steps,
                refine: *refine,
                rel_step: *rel_step,
            };
            chi_bounds(&ctx, cfg, *sites, &opts, &mut out)?
        }
        EstimatorConfig::Candel { sites, rel_step } => candel(&ctx, cfg, *sites, *rel_step, &mut out)?,
        EstimatorConfig::Phi { n, u, panel } => phi(&ctx, cfg, *n, u.as_deref(), *panel, &mut out)?,
        EstimatorConfig::Ledrappier {
            angular_nodes,
            sphere_level,
            max_sweeps,
            tol,
            panel,
        } => {
            let opts = LedrappierOptions {
                angular_nodes: *angular_nodes,
                sphere_level: *sphere_level,
                paths: r.paths,
                dt: r.dt,
                max_sweeps: *max_sweeps,
                tol: *tol,
                seed: r.seed,
                panel: *panel,
                ..LedrappierOptions::default()
            };
            ledrappier(&ctx, &opts, &mut out)?
        }
        EstimatorConfig::Lawcheck { trials, moderate } => lawcheck(&ctx, cfg, *trials, *moderate, &mut out)?,
        EstimatorConfig::Cylinder { events } => cylinder(&ctx, cfg, events, &mut out)?,
    }
    Ok(out)
}

fn spectrum_rows(s: &lyapunov::SpectrumEstimate, out: &mut Outcome) {
    for (i, e) in s.exponents.iter().enumerate() {
        out.push(format!("chi_{}", i + 1), *e, s.stderr[i]);
        out.push(format!("multiplicity_{}", i + 1), s.multiplicities[i] as f64, 0.0);
        if s.multiplicities[i] > 1 {
            out.warn(format!(
                "lyapunov::spectrum_qr: block {} merges {} exponents (spread {})",
                i + 1,
                s.multiplicities[i],
                s.spread[i]
            ));
        }
    }
    for b in s.ambiguous_blocks() {
        out.warn(format!("lyapunov::spectrum_qr: block {} is resolved apart by its errors; multiplicity ambiguous", b + 1));
    }
}

fn spectrum(ctx: &Context, cfg: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let s = lyapunov::spectrum_qr(&ctx.spec, &ctx.ens, ctx.stride)?;
    spectrum_rows(&s, out);
    for (j, r) in s.raw.iter().enumerate() {
        out.push(format!("raw_{}", j + 1), *r, s.raw_stderr[j]);
    }
    out.push("telescoping_residual", s.telescoping_residual, 0.0);
    if cfg.run.checkpoint > 0.0 {
        for (t, v) in &s.convergence {
            for (j, x) in v.iter().enumerate() {
                out.convergence.push(Checkpoint {
                    time: *t,
                    quantity: format!("raw_{}", j + 1),
                    value: *x,
                });
            }
        }
    }
    out.note_sampler(&ctx.ens);
    Ok(())
}

fn oseledec(ctx: &Context, (held_out, transport_time, window, every): (usize, Option<f64>, f64, f64), out: &mut Outcome) -> Result<()> {
    let s = lyapunov::spectrum_qr(&ctx.spec, &ctx.ens, ctx.stride)?;
    spectrum_rows(&s, out);
    let dec = lyapunov::oseledec_spaces(&ctx.spec, &ctx.ens, &s, &OseledecOptions { held_out, transport_time })?;
    for (i, h) in dec.subspaces.iter().enumerate() {
        for c in 0..h.ncols() {
            for r in 0..h.nrows() {
                out.push(format!("H{}_r{}c{}", i + 1, r + 1, c + 1), h[(r, c)], 0.0);
            }
        }
        out.push(format!("invariance_residual_{}", i + 1), dec.block_residuals[i], 0.0);
    }
    // Backward in time the last block grows fastest; a vector of any other
    // block is swamped by its rounding error along the faster ones.
    let m = dec.subspaces.len();
    let back = lyapunov::backward_vector_exponent(&ctx.spec, &ctx.ens, &dec.subspaces[m - 1].column(0).into_owned())?;
    out.push(format!("backward_chi_{m}"), back.mean, back.stderr);
    out.push("invariance_residual", dec.invariance_residual, 0.0);
    out.push("transport_time", dec.transport_time, 0.0);
    if dec.subspaces.len() > 1 && ctx.ens.horizon() >= window + every {
        let a = lyapunov::angle_decay(&ctx.spec, &dec, &ctx.ens, &[0], &AngleOptions { window, every })?;
        out.push("angle_terminal", a.terminal, a.terminal_stderr);
        for (t, v) in &a.series {
            out.convergence.push(Checkpoint {
                time: *t,
                quantity: "angle".into(),
                value: *v,
            });
        }
    }
    out.note_sampler(&ctx.ens);
    Ok(())
}

fn sites(ctx: &Context, n: usize, seed: u64) -> Result<Sites> {
    if n == 0 {
        Sites::point(*ctx.ens.model(), ctx.x.clone())
    } else {
        Sites::sample(&ctx.mu, n, seed)
    }
}

fn chi_bounds(ctx: &Context, cfg: &ExperimentConfig, n_sites: usize, opts: &DeltaOptions, out: &mut Outcome) -> Result<()> {
    let b = bounds::chi_bounds(&ctx.spec, &sites(ctx, n_sites, cfg.run.seed)?, opts)?;
    out.push("chi_max_upper", b.chi_max_upper.value, b.chi_max_upper.combined());
    out.push("chi_max_lower", b.chi_max_lower.value, b.chi_max_lower.combined());
    out.push("chi_min_upper", b.chi_min_upper.value, b.chi_min_upper.combined());
    out.push("chi_min_lower", b.chi_min_lower.value, b.chi_min_lower.combined());
    let s = lyapunov::spectrum_qr(&ctx.spec, &ctx.ens, ctx.stride)?;
    let d = s.raw.len();
    let top = (s.raw[0], s.raw_stderr[0]);
    let bottom = (s.raw[d - 1], s.raw_stderr[d - 1]);
    out.push("chi_hat_max", top.0, top.1);
    out.push("chi_hat_min", bottom.0, bottom.1);
    let ok = b.brackets(top, bottom, 3.0);
    out.push("bracketed", if ok { 1.0 } else { 0.0 }, 0.0);
    if !ok {
        out.warn("bounds::chi_bounds: the sampled spectrum falls outside the bracket by more than 3 SE");
    }
    out.note_sampler(&ctx.ens);
    Ok(())
}

fn candel(ctx: &Context, cfg: &ExperimentConfig, n_sites: usize, rel_step: f64, out: &mut Outcome) -> Result<()> {
    let integral = bounds::candel_exponent(&ctx.spec, &sites(ctx, n_sites, cfg.run.seed)?, rel_step)?;
    let mc = lyapunov::vector_exponent(&ctx.spec, &ctx.ens, &DVector::from_element(1, 1.0))?;
    let se = integral.combined().hypot(mc.stderr);
    out.push("candel_integral", integral.value, integral.combined());
    out.push("mc_exponent", mc.mean, mc.stderr);
    out.push("discrepancy", (integral.value - mc.mean).abs(), se);
    if (integral.value - mc.mean).abs() > 2.0 * se {
        out.warn("bounds::candel_exponent: Monte Carlo exponent differs from the integral by more than 2 combined SE");
    }
    if mc.disagreement {
        out.warn("lyapunov::vector_exponent: largest path slope is far above the mean");
    }
    out.note_sampler(&ctx.ens);
    Ok(())
}

fn phi(ctx: &Context, cfg: &ExperimentConfig, n: usize, u: Option<&[f64]>, panel: f64, out: &mut Outcome) -> Result<()> {
    let d = ctx.spec.rank();
    let u = match u {
        Some(v) if v.len() != d => return Err(Error::config("experiment::load", format!("estimator.u must have length {d}"))),
        Some(v) => DVector::from_column_slice(v),
        None => DVector::from_element(d, 1.0),
    };
    if !(u.norm() > 0.0) {
        return Err(Error::config("experiment::load", "estimator.u must be nonzero"));
    }
    let u = u.normalize();
    let opts = PhiOptions {
        paths: cfg.run.paths,
        dt: cfg.run.dt,
        seed: cfg.run.seed,
        panel,
    };
    for k in 1..=n {
        let e = bounds::phi_functional(&ctx.spec, ctx.ens.model(), &ctx.x, &u, k, &opts)?;
        if k == 1 {
            out.push("phi", e.phi.value, e.phi.combined());
        }
        out.push(format!("phi_{k}_route_a"), e.route_a.value, e.route_a.combined());
        out.push(format!("phi_{k}_route_b"), e.route_b.value, e.route_b.combined());
        let tol = 2.0 * e.route_a.combined().hypot(e.route_b.combined());
        if (e.route_a.value - e.route_b.value).abs() > tol {
            out.warn(format!("bounds::phi_functional: routes differ by more than 2 combined SE at n = {k}"));
        }
    }
    Ok(())
}

fn ledrappier(ctx: &Context, opts: &LedrappierOptions, out: &mut Outcome) -> Result<()> {
    let s = lyapunov::spectrum_qr(&ctx.spec, &ctx.ens, ctx.stride)?;
    spectrum_rows(&s, out);
    let res = bounds::ledrappier_check(&ctx.spec, ctx.ens.model(), &ctx.x, Some(&s.exponents), opts)?;
    out.push("grid_nodes", res.grid.len() as f64, 0.0);
    out.push("fixed_points", res.fixed_points.len() as f64, 0.0);
    for (i, f) in res.fixed_points.iter().enumerate() {
        match f.value {
            Some(v) => out.push(format!("fixed_point_{}", i + 1), v.value, v.combined()),
            None => out.warn(format!("bounds::ledrappier_check: fixed point {} did not converge (tv {})", i + 1, f.state.tv)),
        }
    }
    for (j, v) in res.distinct_values(opts.match_tol).iter().enumerate() {
        out.push(format!("distinct_value_{}", j + 1), *v, 0.0);
    }
    out.note_sampler(&ctx.ens);
    Ok(())
}

fn lawcheck(ctx: &Context, cfg: &ExperimentConfig, trials: usize, moderate: Option<[f64; 2]>, out: &mut Outcome) -> Result<()> {
    let leaf = ctx.ens.model();
    let l = law_check(&ctx.spec, leaf, trials, cfg.run.seed)?;
    out.push("identity_residual", l.identity_residual, 0.0);
    out.push("multiplicative_residual", l.multiplicative_residual, 0.0);
    out.push("product_residual", l.product_residual, 0.0);
    out.push("homotopy_residual", l.homotopy_residual, 0.0);
    out.push("flagged", if l.flagged { 1.0 } else { 0.0 }, 0.0);
    if l.flagged {
        out.warn(format!("cocycle::law_check: {} violates a cocycle law", ctx.spec.name()));
    }
    let m = moderate_check(&ctx.spec, leaf, cfg.run.paths, cfg.run.seed, moderate.map(|[c, r]| (c, r)))?;
    out.push("moderate_c", m.c_hat, 0.0);
    out.push("moderate_r", m.r_hat, 0.0);
    out.push("moderate_violations", m.violations.len() as f64, 0.0);
    if !m.violations.is_empty() {
        out.warn(format!("cocycle::moderate_check: {} samples exceed the declared bound", m.violations.len()));
    }
    Ok(())
}

fn cylinder(ctx: &Context, cfg: &ExperimentConfig, events: &[EventConfig], out: &mut Outcome) -> Result<()> {
    let ev: Vec<_> = events.iter().map(EventConfig::build).collect();
    let r = cylinder_probability(ctx.ens.model(), &ctx.x, &ev, cfg.run.paths, cfg.run.dt, cfg.run.seed)?;
    out.push("monte_carlo", r.monte_carlo, r.mc_stderr);
    match r.quadrature {
        Some(q) => {
            out.push("quadrature", q, r.quadrature_error);
            out.push("difference", (q - r.monte_carlo).abs(), r.mc_stderr.hypot(r.quadrature_error));
        }
        None => out.warn("wiener::cylinder_probability: more than four constraints; quadrature skipped"),
    }
    Ok(())
}

/// Files written by [`run`].
#[derive(Clone, Debug)]
pub struct RunReport {
    pub run_id: String,
    pub output: PathBuf,
    pub outcome: Outcome,
}

#[derive(Serialize)]
struct Manifest<'a> {
    run_id: &'a str,
    code_version: &'a str,
    wall_time_seconds: f64,
    config: &'a ExperimentConfig,
    rows: &'a [Row],
    warnings: &'a [String],
}

struct Lock(PathBuf);

impl Lock {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Lock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::io("experiment::run", format!("{} is locked by another run ({})", dir.display(), path.display())))
            }
            Err(e) => Err(Error::io("experiment::run", e)),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Write-then-rename, so readers never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let err = |e: std::io::Error| Error::io("experiment::run", format!("{}: {e}", path.display()));
    let tmp = path.with_extension("partial");
    let mut f = File::create(&tmp).map_err(err)?;
    f.write_all(bytes).map_err(err)?;
    f.sync_all().map_err(err)?;
    fs::rename(&tmp, path).map_err(err)
}

/// Loads, executes and writes a run. `seed` overrides `run.seed`.
pub fn run(config_path: &Path, seed: Option<u64>) -> Result<RunReport> {
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    let base = config_path.parent().unwrap_or(Path::new("."));
    let output = base.join(&cfg.run.output);
    let run_id = cfg
        .run
        .id
        .clone()
        .unwrap_or_else(|| config_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into()));
    fs::create_dir_all(&output).map_err(|e| Error::io("experiment::run", format!("{}: {e}", output.display())))?;
    let _lock = Lock::acquire(&output)?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.workers)
        .build()
        .map_err(|e| Error::io("experiment::run", e))?;
    let outcome = pool.install(|| execute(&cfg))?;
    write_atomic(&output.join("summary.csv"), &outcome.summary_csv(&run_id, &cfg)?)?;
    if !outcome.convergence.is_empty() {
        write_atomic(&output.join("convergence.csv"), &outcome.convergence_csv(&run_id)?)?;
    }
    let manifest = Manifest {
        run_id: &run_id,
        code_version: env!("CARGO_PKG_VERSION"),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        config: &cfg,
        rows: &outcome.rows,
        warnings: &outcome.warnings,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::io("experiment::run", e))?;
    write_atomic(&output.join("manifest.toml"), text.as_bytes())?;
    Ok(RunReport { run_id, output, outcome })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(estimator: &str, extra: &str) -> ExperimentConfig {
        ExperimentConfig::parse(&format!(
            "model.kind = \"hyperbolic-leaf\"\ncocycle.kind = \"busemann\"\nestimator.kind = \"{estimator}\"\n{extra}\nrun.T = 8\nrun.dt = 0.0625\nrun.paths = 64\nrun.seed = 42\nrun.checkpoint = 1\n"
        ))
        .unwrap()
    }

    #[test]
    fn spectrum_rows_and_checkpoints() {
        let out = execute(&cfg("spectrum", "")).unwrap();
        let chi = out.rows.iter().find(|r| r.quantity == "chi_1").unwrap();
        assert!((chi.value + 1.0).abs() < 4.0 * chi.stderr, "{chi:?}");
        assert_eq!(out.convergence.len(), 8);
        let csv = String::from_utf8(out.summary_csv("t", &cfg("spectrum", "")).unwrap()).unwrap();
        assert!(csv.starts_with("run_id,model,cocycle,estimator,quantity,value,stderr,n_paths,T,dt,seed\n"));
        assert!(csv.contains("t,hyperbolic-leaf,busemann,spectrum,chi_1,"));
    }

    #[test]
    fn capability_errors_map_to_exit_four() {
        let mut c = cfg("spectrum", "");
        c.model = ModelConfig::KroneckerTorus { slope: 0.5 };
        assert_eq!(execute(&c).unwrap_err().exit_code(), 4);
    }

    #[test]
    fn fault_injection_reaches_the_warnings() {
        let mut c = cfg("spectrum", "");
        c.run.reject_sigmas = 0.5;
        let out = execute(&c).unwrap();
        assert!(out.warnings.iter().any(|w| w.contains("wild steps redrawn")), "{:?}", out.warnings);
        assert!(execute(&cfg("spectrum", "")).unwrap().warnings.is_empty());
    }
}
