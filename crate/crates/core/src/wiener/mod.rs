//! Leafwise Brownian paths on a dyadic time grid.
//!
//! Paths are stored in leaf chart coordinates (the universal cover for the
//! torus leaves; winding is kept separately as the cover state). Ensembles are
//! lazy: path `i` is regenerated from `(master seed, i)` on demand, so large
//! ensembles never sit in memory at once.

mod cylinder;
mod diffusion;

use std::fmt;
use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{leaf_distance, LeafKind, LeafModel};
use crate::rng::{map_indexed, StreamSeed};

pub use cylinder::{cylinder_probability, CylinderEvent, CylinderResult, CylinderSet};
pub use diffusion::{diffusion_apply, DiffusionGrid, DiffusionOptions, DiffusionSource, GridLayout};

/// Wild-step policy. A step longer than `reject_sigmas · √(2Δn)` in leaf
/// distance is redrawn, at most `max_attempts` times.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerOptions {
    pub reject_sigmas: f64,
    pub max_attempts: u32,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions {
            reject_sigmas: 10.0,
            max_attempts: 64,
        }
    }
}

/// Checks that `dt = 2^{-k}` with `dt ≤ 1/16` and that `horizon/dt` is an
/// integer; returns the step count.
pub fn grid_steps(horizon: f64, dt: f64) -> Result<usize> {
    const OP: &str = "wiener::sample_path";
    let dyadic = dt > 0.0 && dt.is_finite() && dt.to_bits() & ((1u64 << 52) - 1) == 0;
    if !dyadic {
        return Err(Error::domain(OP, format!("time step {dt} is not a power of two")));
    }
    if dt > 1.0 / 16.0 {
        return Err(Error::domain(OP, format!("time step {dt} exceeds 1/16")));
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::domain(OP, format!("horizon must be finite and nonnegative, got {horizon}")));
    }
    let n = (horizon / dt).round();
    if (n * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::domain(OP, format!("horizon {horizon} is not a multiple of dt = {dt}")));
    }
    Ok(n as usize)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Direction {
    /// Plain Brownian motion.
    Forward,
    /// Time reversal of the stationary motion for the harmonic density
    /// `y·dVol` on the half-plane (log-height drift `+1`). Flat leaves are
    /// unchanged.
    Reversed,
}

struct PathData {
    model: LeafModel,
    dt: f64,
    dim: usize,
    coords: Vec<f64>,
    cover: Option<Vec<i64>>,
    seed: u64,
    resampled: u64,
    forced: u64,
}

/// One sampled path `ω` on the grid `0, Δ, …, T`. Shifts share storage.
#[derive(Clone)]
pub struct DiscretePath {
    data: Arc<PathData>,
    offset: usize,
    steps: usize,
}

impl DiscretePath {
    /// A path through given chart points, one per grid time.
    pub fn from_points(model: LeafModel, dt: f64, points: &[Vec<f64>]) -> Result<Self> {
        const OP: &str = "wiener::DiscretePath::from_points";
        if points.is_empty() {
            return Err(Error::domain(OP, "a path needs at least its start point"));
        }
        grid_steps((points.len() - 1) as f64 * dt, dt)?;
        let dim = model.dim();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if !model.contains(p) {
                return Err(Error::domain(OP, format!("{p:?} is outside the chart")));
            }
            coords.extend_from_slice(p);
        }
        Ok(DiscretePath {
            data: Arc::new(PathData {
                model,
                dt,
                dim,
                coords,
                cover: None,
                seed: 0,
                resampled: 0,
                forced: 0,
            }),
            offset: 0,
            steps: points.len() - 1,
        })
    }

    pub fn model(&self) -> &LeafModel {
        &self.data.model
    }

    pub fn dt(&self) -> f64 {
        self.data.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.data.dt
    }

    pub fn dim(&self) -> usize {
        self.data.dim
    }

    /// Chart point at grid index `k` (`0 ≤ k ≤ steps`).
    pub fn point(&self, k: usize) -> &[f64] {
        assert!(k <= self.steps, "grid index {k} beyond {} steps", self.steps);
        let d = self.data.dim;
        let i = (self.offset + k) * d;
        &self.data.coords[i..i + d]
    }

    pub fn start(&self) -> &[f64] {
        self.point(0)
    }

    pub fn end(&self) -> &[f64] {
        self.point(self.steps)
    }

    /// Grid index of time `t`, which must lie on the grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = (t / self.data.dt).round();
        if !(k >= 0.0) || (k * self.data.dt - t).abs() > 1e-9 * t.abs().max(1.0) {
            return Err(Error::domain("wiener::DiscretePath", format!("time {t} is off the grid (dt = {})", self.data.dt)));
        }
        let k = k as usize;
        if k > self.steps {
            return Err(Error::domain("wiener::DiscretePath", format!("time {t} beyond horizon {}", self.horizon())));
        }
        Ok(k)
    }

    pub fn point_at(&self, t: f64) -> Result<&[f64]> {
        Ok(self.point(self.index_of(t)?))
    }

    /// `(T^t ω)(s) = ω(s + t)`.
    pub fn shift(&self, t: f64) -> Result<DiscretePath> {
        let k = self.index_of(t).map_err(|e| match e {
            Error::Domain { detail, .. } => Error::domain("wiener::shift", detail),
            other => other,
        })?;
        Ok(self.shift_steps(k))
    }

    pub fn shift_steps(&self, k: usize) -> DiscretePath {
        assert!(k <= self.steps);
        DiscretePath {
            data: Arc::clone(&self.data),
            offset: self.offset + k,
            steps: self.steps - k,
        }
    }

    /// The restriction to `[0, k·Δ]`.
    pub fn prefix_steps(&self, k: usize) -> DiscretePath {
        assert!(k <= self.steps);
        DiscretePath {
            data: Arc::clone(&self.data),
            offset: self.offset,
            steps: k,
        }
    }

    /// Deck/winding record at grid index `k`, if the leaf carries one.
    pub fn cover_state(&self, k: usize) -> Option<i64> {
        self.data.cover.as_ref().map(|c| c[self.offset + k])
    }

    /// Attach a per-point cover record (one entry per stored grid point).
    pub fn with_cover_state(self, cover: Vec<i64>) -> Result<Self> {
        if cover.len() != self.data.coords.len() / self.data.dim {
            return Err(Error::domain("wiener::DiscretePath", "cover record length differs from path length"));
        }
        let d = &self.data;
        Ok(DiscretePath {
            data: Arc::new(PathData {
                model: d.model,
                dt: d.dt,
                dim: d.dim,
                coords: d.coords.clone(),
                cover: Some(cover),
                seed: d.seed,
                resampled: d.resampled,
                forced: d.forced,
            }),
            offset: self.offset,
            steps: self.steps,
        })
    }

    /// Seed key of the stream that produced this path.
    pub fn seed(&self) -> u64 {
        self.data.seed
    }

    /// Wild steps that were redrawn while sampling.
    pub fn resampled_steps(&self) -> u64 {
        self.data.resampled
    }

    /// Steps accepted after exhausting the redraw budget.
    pub fn forced_steps(&self) -> u64 {
        self.data.forced
    }

    /// Visible coordinates, flattened row by row.
    pub fn coords(&self) -> &[f64] {
        let d = self.data.dim;
        &self.data.coords[self.offset * d..(self.offset + self.steps + 1) * d]
    }
}

impl PartialEq for DiscretePath {
    fn eq(&self, other: &Self) -> bool {
        self.data.model == other.data.model
            && self.data.dt == other.data.dt
            && self.steps == other.steps
            && self.coords() == other.coords()
    }
}

impl fmt::Debug for DiscretePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscretePath")
            .field("model", &self.data.model.name())
            .field("dt", &self.data.dt)
            .field("steps", &self.steps)
            .field("start", &self.start())
            .field("end", &self.end())
            .finish()
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn sample_impl(
    model: &LeafModel,
    x: &[f64],
    horizon: f64,
    dt: f64,
    seed: StreamSeed,
    opts: &SamplerOptions,
    dir: Direction,
) -> Result<DiscretePath> {
    const OP: &str = "wiener::sample_path";
    let n = grid_steps(horizon, dt)?;
    if !model.contains(x) {
        return Err(Error::domain(OP, format!("start {x:?} is outside the chart")));
    }
    let dim = model.dim();
    let mut rng = seed.rng();
    let mut coords = Vec::with_capacity((n + 1) * dim);
    coords.extend_from_slice(x);
    let limit = opts.reject_sigmas * (2.0 * dt * dim as f64).sqrt();
    let sd = (2.0 * dt).sqrt();
    let (mut resampled, mut forced) = (0u64, 0u64);
    let mut cur = x.to_vec();
    let mut next = vec![0.0; dim];
    match model.kind() {
        LeafKind::HyperbolicPlane => {
            let drift = match dir {
                Direction::Forward => -dt,
                Direction::Reversed => dt,
            };
            for _ in 0..n {
                let mut attempt = 0;
                loop {
                    let y0 = cur[1];
                    let y1 = y0 * (sd * normal(&mut rng) + drift).exp();
                    let ybar2 = 0.5 * (y0 * y0 + y1 * y1);
                    next[0] = cur[0] + (2.0 * ybar2 * dt).sqrt() * normal(&mut rng);
                    next[1] = y1;
                    attempt += 1;
                    if leaf_distance(model, &cur, &next) <= limit && y1 > 0.0 && next[0].is_finite() {
                        break;
                    }
                    if attempt >= opts.max_attempts {
                        forced += 1;
                        break;
                    }
                    resampled += 1;
                }
                coords.extend_from_slice(&next);
                std::mem::swap(&mut cur, &mut next);
            }
        }
        _ => {
            for _ in 0..n {
                let mut attempt = 0;
                loop {
                    let mut r2 = 0.0;
                    for i in 0..dim {
                        let dz = sd * normal(&mut rng);
                        next[i] = cur[i] + dz;
                        r2 += dz * dz;
                    }
                    attempt += 1;
                    if r2.sqrt() <= limit {
                        break;
                    }
                    if attempt >= opts.max_attempts {
                        forced += 1;
                        break;
                    }
                    resampled += 1;
                }
                coords.extend_from_slice(&next);
                std::mem::swap(&mut cur, &mut next);
            }
        }
    }
    Ok(DiscretePath {
        data: Arc::new(PathData {
            model: *model,
            dt,
            dim,
            coords,
            cover: None,
            seed: seed.key(),
            resampled,
            forced,
        }),
        offset: 0,
        steps: n,
    })
}

/// Brownian path from `x` (generator `Δ`). Flat leaves use exact Gaussian
/// increments of variance `2Δ`; on the half-plane the height is exact,
/// `Y_t = Y_0 exp(√2 B_t − t)`, and each horizontal increment is Gaussian with
/// variance `2 Ȳ² Δ`, `Ȳ²` the trapezoidal average of `Y²` over the step.
pub fn sample_path(model: &LeafModel, x: &[f64], horizon: f64, dt: f64, seed: StreamSeed) -> Result<DiscretePath> {
    sample_impl(model, x, horizon, dt, seed, &SamplerOptions::default(), Direction::Forward)
}

pub fn sample_path_with(
    model: &LeafModel,
    x: &[f64],
    horizon: f64,
    dt: f64,
    seed: StreamSeed,
    opts: &SamplerOptions,
) -> Result<DiscretePath> {
    sample_impl(model, x, horizon, dt, seed, opts, Direction::Forward)
}

/// Streams used for the two halves of an extended path.
pub fn extended_seeds(seed: StreamSeed) -> (StreamSeed, StreamSeed) {
    (seed.tagged("forward"), seed.tagged("backward"))
}

/// A path on `[−T, T]`: two halves glued at the start point. `backward.point(k)`
/// is `ω(−kΔ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedPath {
    pub forward: DiscretePath,
    pub backward: DiscretePath,
}

impl ExtendedPath {
    pub fn horizon(&self) -> f64 {
        self.forward.horizon()
    }

    /// `ω(kΔ)` for `k` in `−steps..=steps`.
    pub fn point(&self, k: isize) -> &[f64] {
        if k >= 0 {
            self.forward.point(k as usize)
        } else {
            self.backward.point(k.unsigned_abs())
        }
    }
}

/// Extended path from `x`. The backward half is the time reversal of the
/// leaf diffusion that is stationary for the harmonic density (`y·dVol` on
/// the half-plane, volume on flat leaves), sampled from an independent stream.
pub fn sample_extended_path(
    model: &LeafModel,
    x: &[f64],
    horizon: f64,
    dt: f64,
    seed: StreamSeed,
) -> Result<ExtendedPath> {
    sample_extended_path_with(model, x, horizon, dt, seed, &SamplerOptions::default())
}

pub fn sample_extended_path_with(
    model: &LeafModel,
    x: &[f64],
    horizon: f64,
    dt: f64,
    seed: StreamSeed,
    opts: &SamplerOptions,
) -> Result<ExtendedPath> {
    let (fs, bs) = extended_seeds(seed);
    Ok(ExtendedPath {
        forward: sample_impl(model, x, horizon, dt, fs, opts, Direction::Forward)?,
        backward: sample_impl(model, x, horizon, dt, bs, opts, Direction::Reversed)?,
    })
}

type StartFn = dyn Fn(StreamSeed) -> Vec<f64> + Send + Sync;

/// How ensemble paths pick their start point.
#[derive(Clone)]
pub enum Starts {
    /// Every path starts at the same chart point (per-leaf mode).
    Fixed(Vec<f64>),
    /// Start drawn per path from its own stream (lamination mode).
    Sampled(Arc<StartFn>),
}

impl fmt::Debug for Starts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Starts::Fixed(p) => f.debug_tuple("Fixed").field(p).finish(),
            Starts::Sampled(_) => f.write_str("Sampled(..)"),
        }
    }
}

/// A lazily generated ensemble of independent paths.
#[derive(Clone, Debug)]
pub struct Ensemble {
    model: LeafModel,
    starts: Starts,
    horizon: f64,
    dt: f64,
    paths: usize,
    first: usize,
    seed: StreamSeed,
    options: SamplerOptions,
    resampled: Arc<AtomicU64>,
    forced: Arc<AtomicU64>,
}

impl Ensemble {
    pub fn new(model: LeafModel, start: Vec<f64>, horizon: f64, dt: f64, paths: usize, seed: u64) -> Result<Self> {
        grid_steps(horizon, dt)?;
        if !model.contains(&start) {
            return Err(Error::domain("wiener::Ensemble", format!("start {start:?} is outside the chart")));
        }
        if paths == 0 {
            return Err(Error::domain("wiener::Ensemble", "an ensemble needs at least one path"));
        }
        Ok(Ensemble {
            model,
            starts: Starts::Fixed(start),
            horizon,
            dt,
            paths,
            first: 0,
            seed: StreamSeed::new(seed),
            options: SamplerOptions::default(),
            resampled: Arc::new(AtomicU64::new(0)),
            forced: Arc::new(AtomicU64::new(0)),
        })
    }

    pub fn with_starts(mut self, starts: Starts) -> Self {
        self.starts = starts;
        self
    }

    pub fn with_options(mut self, options: SamplerOptions) -> Self {
        self.options = options;
        self
    }

    /// Same streams, different horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        grid_steps(horizon, self.dt)?;
        let mut e = self.clone();
        e.horizon = horizon;
        Ok(e)
    }

    /// Same streams at a different step (paths are then different draws).
    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        grid_steps(self.horizon, dt)?;
        let mut e = self.clone();
        e.dt = dt;
        Ok(e)
    }

    pub fn with_paths(&self, paths: usize) -> Self {
        let mut e = self.clone();
        e.paths = paths;
        e
    }

    /// `n` further paths on streams disjoint from the first `paths`.
    pub fn held_out(&self, n: usize) -> Self {
        let mut e = self.clone();
        e.first = self.first + self.paths;
        e.paths = n;
        e
    }

    pub fn model(&self) -> &LeafModel {
        &self.model
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn options(&self) -> &SamplerOptions {
        &self.options
    }

    pub fn is_fixed_start(&self) -> bool {
        matches!(self.starts, Starts::Fixed(_))
    }

    fn stream(&self, i: usize) -> StreamSeed {
        self.seed.child((self.first + i) as u64)
    }

    pub fn start_for(&self, i: usize) -> Vec<f64> {
        match &self.starts {
            Starts::Fixed(p) => p.clone(),
            Starts::Sampled(f) => f(self.stream(i).tagged("start")),
        }
    }

    fn record(&self, p: &DiscretePath) {
        self.resampled.fetch_add(p.resampled_steps(), Ordering::Relaxed);
        self.forced.fetch_add(p.forced_steps(), Ordering::Relaxed);
    }

    pub fn path(&self, i: usize) -> Result<DiscretePath> {
        let x = self.start_for(i);
        let (fs, _) = extended_seeds(self.stream(i));
        let p = sample_impl(&self.model, &x, self.horizon, self.dt, fs, &self.options, Direction::Forward)?;
        self.record(&p);
        Ok(p)
    }

    /// Extended path `i`; its forward half equals `path(i)`.
    pub fn extended(&self, i: usize) -> Result<ExtendedPath> {
        let x = self.start_for(i);
        let e = sample_extended_path_with(&self.model, &x, self.horizon, self.dt, self.stream(i), &self.options)?;
        self.record(&e.forward);
        self.record(&e.backward);
        Ok(e)
    }

    /// `f(i, path i)` for every path, in index order.
    pub fn map<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize, &DiscretePath) -> Result<T> + Sync + Send,
    {
        map_indexed(self.paths, |i| self.path(i).and_then(|p| f(i, &p)))
            .into_iter()
            .collect()
    }

    pub fn map_extended<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize, &ExtendedPath) -> Result<T> + Sync + Send,
    {
        map_indexed(self.paths, |i| self.extended(i).and_then(|p| f(i, &p)))
            .into_iter()
            .collect()
    }

    /// Redrawn wild steps over every path generated so far.
    pub fn resampled_steps(&self) -> u64 {
        self.resampled.load(Ordering::Relaxed)
    }

    pub fn forced_steps(&self) -> u64 {
        self.forced.load(Ordering::Relaxed)
    }
}

/// Writes a path dump: a header line, then `path_index,time,coords…` rows.
pub fn dump_paths<W: Write>(out: &mut W, paths: &[DiscretePath], master_seed: u64) -> Result<()> {
    const OP: &str = "wiener::dump_paths";
    let Some(first) = paths.first() else {
        return Ok(());
    };
    writeln!(
        out,
        "# model={} T={} dt={} seed={}",
        first.model().name(),
        first.horizon(),
        first.dt(),
        master_seed
    )
    .map_err(|e| Error::io(OP, e))?;
    for (i, p) in paths.iter().enumerate() {
        for k in 0..=p.steps() {
            let mut line = format!("{i},{}", k as f64 * p.dt());
            for c in p.point(k) {
                line.push_str(&format!(",{c}"));
            }
            writeln!(out, "{line}").map_err(|e| Error::io(OP, e))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_sd(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, var.sqrt())
    }

    #[test]
    fn grid_validation() {
        assert_eq!(grid_steps(1.0, 1.0 / 1024.0).unwrap(), 1024);
        assert!(grid_steps(1.0, 1e-3).is_err());
        assert!(grid_steps(1.0, 0.125).is_err());
        assert!(grid_steps(1.0001, 1.0 / 16.0).is_err());
    }

    #[test]
    fn flat_second_moment_is_two_t() {
        let e1 = LeafModel::euclidean(1).unwrap();
        let root = StreamSeed::new(42);
        let ends: Vec<f64> = (0..10_000)
            .map(|i| {
                let p = sample_path(&e1, &[0.0], 1.0, 1.0 / 16.0, root.child(i)).unwrap();
                assert_eq!(p.start(), &[0.0]);
                p.end()[0] * p.end()[0]
            })
            .collect();
        let (m, _) = mean_sd(&ends);
        assert!((m - 2.0).abs() < 0.06, "{m}");
    }

    #[test]
    fn hyperbolic_log_height_law() {
        let h = LeafModel::hyperbolic_plane();
        let root = StreamSeed::new(2);
        let ends: Vec<f64> = (0..10_000)
            .map(|i| sample_path(&h, &[0.0, 1.0], 2.0, 1.0 / 16.0, root.child(i)).unwrap().end()[1].ln())
            .collect();
        let (m, sd) = mean_sd(&ends);
        assert!((m + 2.0).abs() < 0.05, "{m}");
        assert!((sd - 2.0).abs() < 0.05, "{sd}");
    }

    #[test]
    fn shifts_share_storage_and_compose() {
        let h = LeafModel::hyperbolic_plane();
        let p = sample_path(&h, &[0.0, 1.0], 1.0, 1.0 / 16.0, StreamSeed::new(3)).unwrap();
        assert_eq!(p.shift(0.0).unwrap(), p);
        let a = p.shift(0.25).unwrap().shift(0.5).unwrap();
        assert_eq!(a, p.shift(0.75).unwrap());
        assert_eq!(a.horizon(), 0.25);
        assert_eq!(a.start(), p.point(12));
        assert!(p.shift(0.1).is_err());
        assert!(p.shift(2.0).is_err());
    }

    #[test]
    fn extended_halves() {
        let h = LeafModel::hyperbolic_plane();
        let seed = StreamSeed::new(5);
        let e = sample_extended_path(&h, &[0.0, 1.0], 1.0, 1.0 / 16.0, seed).unwrap();
        let (fs, _) = extended_seeds(seed);
        assert_eq!(e.forward, sample_path(&h, &[0.0, 1.0], 1.0, 1.0 / 16.0, fs).unwrap());
        assert_eq!(e.point(0), e.backward.point(0));
        assert_eq!(e.point(0), &[0.0, 1.0]);
    }

    #[test]
    fn extended_halves_are_uncorrelated() {
        let e1 = LeafModel::euclidean(1).unwrap();
        let root = StreamSeed::new(6);
        let pairs: Vec<(f64, f64)> = (0..10_000)
            .map(|i| {
                let e = sample_extended_path(&e1, &[0.0], 1.0, 1.0 / 16.0, root.child(i)).unwrap();
                (e.forward.end()[0], e.backward.end()[0])
            })
            .collect();
        let n = pairs.len() as f64;
        let (ma, mb) = (pairs.iter().map(|p| p.0).sum::<f64>() / n, pairs.iter().map(|p| p.1).sum::<f64>() / n);
        let cov = pairs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum::<f64>() / n;
        let va = pairs.iter().map(|p| (p.0 - ma).powi(2)).sum::<f64>() / n;
        let vb = pairs.iter().map(|p| (p.1 - mb).powi(2)).sum::<f64>() / n;
        let corr = cov / (va * vb).sqrt();
        assert!(corr.abs() < 0.03, "{corr}");
    }

    #[test]
    fn reversed_half_has_upward_drift() {
        let h = LeafModel::hyperbolic_plane();
        let root = StreamSeed::new(8);
        let ends: Vec<f64> = (0..4000)
            .map(|i| {
                let e = sample_extended_path(&h, &[0.0, 1.0], 2.0, 1.0 / 16.0, root.child(i)).unwrap();
                e.backward.end()[1].ln()
            })
            .collect();
        let (m, _) = mean_sd(&ends);
        assert!((m - 2.0).abs() < 0.1, "{m}");
    }

    #[test]
    fn determinism_and_pool_independence() {
        let h = LeafModel::hyperbolic_plane();
        let ens = Ensemble::new(h, vec![0.0, 1.0], 1.0, 1.0 / 64.0, 16, 42).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| ens.map(|_, p| Ok(p.coords().to_vec())).unwrap())
        };
        assert_eq!(run(1), run(4));
        let again = Ensemble::new(h, vec![0.0, 1.0], 1.0, 1.0 / 64.0, 16, 42).unwrap();
        assert_eq!(ens.path(3).unwrap(), again.path(3).unwrap());
        assert_eq!(ens.extended(3).unwrap().forward, ens.path(3).unwrap());
        assert_ne!(ens.path(0).unwrap(), ens.held_out(1).path(0).unwrap());
    }

    #[test]
    fn wild_step_policy_counts_redraws() {
        let e1 = LeafModel::euclidean(1).unwrap();
        let strict = SamplerOptions {
            reject_sigmas: 0.5,
            max_attempts: 64,
        };
        let p = sample_path_with(&e1, &[0.0], 1.0, 1.0 / 16.0, StreamSeed::new(9), &strict).unwrap();
        assert!(p.resampled_steps() > 0);
        let lim = 0.5 * (2.0f64 / 16.0).sqrt();
        for k in 0..p.steps() {
            assert!((p.point(k + 1)[0] - p.point(k)[0]).abs() <= lim + 1e-15 || p.forced_steps() > 0);
        }
        let relaxed = sample_path(&e1, &[0.0], 1.0, 1.0 / 16.0, StreamSeed::new(9)).unwrap();
        assert_eq!(relaxed.resampled_steps(), 0);
    }

    #[test]
    fn dump_has_header_and_rows() {
        let e1 = LeafModel::euclidean(1).unwrap();
        let p = sample_path(&e1, &[0.0], 0.125, 1.0 / 16.0, StreamSeed::new(1)).unwrap();
        let mut buf = Vec::new();
        dump_paths(&mut buf, &[p], 1).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# model=euclidean-1"));
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,0,0"));
    }
}
