//! Forward and backward filtrations and the Oseledec splitting
//! `H_i = V_i ∩ V⁻_i`.
//!
//! Subspaces at a point `ω(t)` along a path are always re-estimated from the
//! future and past windows of that point rather than transported from `ω(0)`:
//! transporting a slow subspace amplifies its error by the exponential gap.

use nalgebra::DMatrix;

use crate::cocycle::{evaluate_steps, CocycleSpec, CocycleValue};
use crate::error::{Error, Result};
use crate::geometry::LeafModel;
use crate::linalg;
use crate::wiener::{DiscretePath, Ensemble, ExtendedPath};

use super::qr::run_qr;
use super::{mean_se, SpectrumEstimate};

const OP: &str = "lyapunov::oseledec_spaces";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OseledecOptions {
    /// Held-out paths for the invariance residual.
    pub held_out: usize,
    /// Transport time; `None` uses `min(T/4, 8)`.
    pub transport_time: Option<f64>,
}

impl Default for OseledecOptions {
    fn default() -> Self {
        OseledecOptions {
            held_out: 16,
            transport_time: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionEstimate {
    pub exponents: Vec<f64>,
    pub multiplicities: Vec<usize>,
    /// Orthonormal bases of `H_i(x)`.
    pub subspaces: Vec<DMatrix<f64>>,
    /// Forward filtration `V_i(x)` paired with each block.
    pub forward: Vec<DMatrix<f64>>,
    /// Backward filtration `V⁻_i(x)` whose intersection with `V_i` gave `H_i`.
    pub backward: Vec<DMatrix<f64>>,
    /// Largest principal angle between `A(ω, t)H_i(x)` and `H_i(ω(t))`,
    /// measured at `x` through `A⁻¹` for blocks in the lower half of the
    /// spectrum.
    pub invariance_residual: f64,
    /// Per-block residuals.
    pub block_residuals: Vec<f64>,
    pub transport_time: f64,
}

/// Per-block `(V_i, V⁻_i, H_i)` at a point from `n_f` future and `n_b` past
/// steps.
fn local_splitting<'p>(
    c: &CocycleSpec,
    model: &LeafModel,
    mult: &[usize],
    future: (usize, &dyn Fn(usize) -> &'p [f64]),
    past: (usize, &dyn Fn(usize) -> &'p [f64]),
    path_index: usize,
) -> Result<Vec<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)>> {
    let d = c.rank();
    let fwd = run_qr(OP, c, model, future.0, future.1, true, path_index, None)?;
    let bwd = run_qr(OP, c, model, past.0, past.1, true, path_index, None)?;
    let m = mult.len();
    let mut out = Vec::with_capacity(m);
    let mut start = 0;
    for (i, &mi) in mult.iter().enumerate() {
        let v = fwd.slow_subspace(OP, start)?;
        // backward exponents come in reversed order; V⁻ for −χ_i starts after
        // the blocks of −χ_1 … −χ_{i−1} reversed, i.e. after blocks i+1..m
        let later: usize = mult[i + 1..m].iter().sum();
        let vm = bwd.slow_subspace(OP, later)?;
        let h = if mi == d { DMatrix::identity(d, d) } else { linalg::intersection(&v, &vm, mi) };
        out.push((v, vm, h));
        start += mi;
    }
    Ok(out)
}

/// Splitting at `ω(kΔ)` along an extended path, with windows of `w` steps.
fn splitting_along(c: &CocycleSpec, e: &ExtendedPath, mult: &[usize], k: usize, w: usize, idx: usize) -> Result<Vec<DMatrix<f64>>> {
    let f = &e.forward;
    let b = &e.backward;
    if k + w > f.steps() || w > k + b.steps() {
        return Err(Error::domain(OP, "paths are too short for the requested windows"));
    }
    let fut = move |j: usize| f.point(k + j);
    let past = move |j: usize| if j <= k { f.point(k - j) } else { b.point(j - k) };
    Ok(local_splitting(c, f.model(), mult, (w, &fut), (w, &past), idx)?.into_iter().map(|t| t.2).collect())
}

/// `A(ω, kΔ)⁻¹` as a fold of step inverses from the far end; inverting the
/// product directly fails once the gap outgrows the precision.
fn pull_back(c: &CocycleSpec, path: &DiscretePath, k: usize) -> Result<CocycleValue> {
    let mut acc = CocycleValue::identity(c.rank());
    let mut scratch = DMatrix::zeros(c.rank(), c.rank());
    for j in (0..k).rev() {
        let s = c.step(path.model(), path.point(j), path.point(j + 1))?.inverse(OP)?;
        acc.compose_step(&s, &mut scratch);
        acc.rebalance();
    }
    Ok(acc)
}

fn average_subspace(projectors: &[DMatrix<f64>], dim: usize) -> DMatrix<f64> {
    let n = projectors.len() as f64;
    let mut acc = DMatrix::zeros(projectors[0].nrows(), projectors[0].ncols());
    for p in projectors {
        acc += p;
    }
    linalg::leading_eigenvectors(&(acc / n), dim)
}

/// Oseledec subspaces at the common start point of the ensemble.
pub fn oseledec_spaces(c: &CocycleSpec, ens: &Ensemble, spectrum: &SpectrumEstimate, opts: &OseledecOptions) -> Result<DecompositionEstimate> {
    c.check_model(ens.model())?;
    if !ens.is_fixed_start() {
        return Err(Error::capability(OP, "subspaces depend on the start point; use a fixed-start ensemble"));
    }
    if let Some(&b) = spectrum.ambiguous_blocks().first() {
        return Err(Error::capability(
            OP,
            format!("multiplicity ambiguity; decomposition skipped for the merged block {b} (spread {:.3})", spectrum.spread[b]),
        ));
    }
    let mult = spectrum.multiplicities.clone();
    if mult.iter().sum::<usize>() != c.rank() {
        return Err(Error::domain(OP, "spectrum does not match the cocycle rank"));
    }
    let m = mult.len();
    let per_path = ens.map_extended(|i, e| {
        let f = &e.forward;
        let b = &e.backward;
        let fut = |j: usize| f.point(j);
        let past = |j: usize| b.point(j);
        local_splitting(c, f.model(), &mult, (f.steps(), &fut), (b.steps(), &past), i)
    })?;
    let mut subspaces = Vec::with_capacity(m);
    let mut forward = Vec::with_capacity(m);
    let mut backward = Vec::with_capacity(m);
    let mut vdim = c.rank();
    for (i, &mi) in mult.iter().enumerate() {
        let hp: Vec<_> = per_path.iter().map(|s| linalg::projector(&s[i].2)).collect();
        let vp: Vec<_> = per_path.iter().map(|s| linalg::projector(&s[i].0)).collect();
        let vmp: Vec<_> = per_path.iter().map(|s| linalg::projector(&s[i].1)).collect();
        let later: usize = mult[i + 1..].iter().sum();
        subspaces.push(average_subspace(&hp, mi));
        forward.push(average_subspace(&vp, vdim));
        backward.push(average_subspace(&vmp, c.rank() - later));
        vdim -= mi;
    }

    // invariance on held-out paths
    let horizon = ens.horizon();
    let tc = opts.transport_time.unwrap_or((horizon / 4.0).min(8.0));
    let kc = (tc / ens.dt()).round() as usize;
    if kc == 0 || kc >= ens.steps() {
        return Err(Error::domain(OP, format!("transport time {tc} must lie inside (0, T)")));
    }
    let held = ens.held_out(opts.held_out.max(1));
    let w = ens.steps() - kc;
    let residuals = held.map_extended(|i, e| {
        let a = evaluate_steps(c, &e.forward, kc)?;
        let there = splitting_along(c, e, &mult, kc, w, i)?;
        let inv = pull_back(c, &e.forward, kc)?;
        let mut r = vec![0.0; m];
        for (bi, h) in subspaces.iter().enumerate() {
            // push forward the upper blocks and pull back the lower ones: a
            // contracting block pushed forward loses all precision
            let e = &spectrum.exponents;
            r[bi] = if e[0] - e[bi] <= e[bi] - e[m - 1] {
                linalg::subspace_distance(&linalg::orthonormal_basis(OP, &(&a.matrix * h))?, &there[bi])
            } else {
                linalg::subspace_distance(h, &linalg::orthonormal_basis(OP, &(&inv.matrix * &there[bi]))?)
            };
        }
        Ok(r)
    })?;
    let block_residuals: Vec<f64> = (0..m).map(|b| residuals.iter().map(|r| r[b]).fold(0.0, f64::max)).collect();
    Ok(DecompositionEstimate {
        exponents: spectrum.exponents.clone(),
        multiplicities: mult,
        subspaces,
        forward,
        backward,
        invariance_residual: block_residuals.iter().copied().fold(0.0, f64::max),
        block_residuals,
        transport_time: kc as f64 * ens.dt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleOptions {
    /// Future and past window length used to re-estimate the splitting.
    pub window: f64,
    /// Checkpoint spacing in time units.
    pub every: f64,
}

impl Default for AngleOptions {
    fn default() -> Self {
        AngleOptions { window: 16.0, every: 10.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AngleDecay {
    /// `(t, ensemble mean of (1/t) log sin ∠(H_S(ω(t)), H_{N∖S}(ω(t))))`.
    pub series: Vec<(f64, f64)>,
    pub terminal: f64,
    pub terminal_stderr: f64,
}

fn span_of(blocks: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let d = blocks[0].nrows();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut m = DMatrix::zeros(d, cols);
    let mut c = 0;
    for b in blocks {
        m.columns_mut(c, b.ncols()).copy_from(b);
        c += b.ncols();
    }
    linalg::orthonormal_basis("lyapunov::angle_decay", &m)
}

/// Angle between the blocks in `subset` and the rest, along the ensemble.
/// The series runs to `T − window`; the last checkpoint is the terminal value.
pub fn angle_decay(
    c: &CocycleSpec,
    decomposition: &DecompositionEstimate,
    ens: &Ensemble,
    subset: &[usize],
    opts: &AngleOptions,
) -> Result<AngleDecay> {
    const OPA: &str = "lyapunov::angle_decay";
    let m = decomposition.multiplicities.len();
    if subset.iter().any(|&s| s >= m) {
        return Err(Error::domain(OPA, format!("block index out of range 0..{m}")));
    }
    let rest: Vec<usize> = (0..m).filter(|i| !subset.contains(i)).collect();
    if subset.is_empty() || rest.is_empty() {
        return Ok(AngleDecay {
            series: vec![],
            terminal: 0.0,
            terminal_stderr: 0.0,
        });
    }
    let dt = ens.dt();
    let w = (opts.window / dt).round() as usize;
    let every = ((opts.every / dt).round() as usize).max(1);
    if w == 0 || w >= ens.steps() {
        return Err(Error::domain(OPA, "window must be positive and shorter than the horizon"));
    }
    let last = ens.steps() - w;
    let ks: Vec<usize> = (1..=last / every).map(|j| j * every).collect();
    if ks.is_empty() {
        return Err(Error::domain(OPA, "horizon leaves no checkpoint after the window"));
    }
    let mult = &decomposition.multiplicities;
    let rows = ens.map_extended(|i, e| {
        ks.iter()
            .map(|&k| {
                let h = splitting_along(c, e, mult, k, w, i)?;
                let a: Vec<_> = subset.iter().map(|&s| h[s].clone()).collect();
                let b: Vec<_> = rest.iter().map(|&s| h[s].clone()).collect();
                let ang = linalg::principal_angles(&span_of(&a)?, &span_of(&b)?)[0];
                Ok(ang.sin().max(f64::MIN_POSITIVE).ln() / (k as f64 * dt))
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let series = ks
        .iter()
        .enumerate()
        .map(|(j, &k)| (k as f64 * dt, rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64))
        .collect();
    let terminal: Vec<f64> = rows.iter().map(|r| *r.last().expect("nonempty")).collect();
    let (t, se) = mean_se(&terminal);
    Ok(AngleDecay {
        series,
        terminal: t,
        terminal_stderr: se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lyapunov::spectrum_qr;
    use nalgebra::DVector;

    fn ens(t: f64, paths: usize) -> Ensemble {
        Ensemble::new(LeafModel::hyperbolic_plane(), vec![0.0, 1.0], t, 1.0 / 64.0, paths, 42).unwrap()
    }

    fn p() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[1.0, 0.4, -0.3, 0.2, 1.0, 0.5, -0.1, 0.3, 1.0])
    }

    #[test]
    fn diagonal_splitting_is_the_axes() {
        let c = CocycleSpec::diagonal_busemann(vec![1.0, 2.0, 3.0]).unwrap();
        let e = ens(32.0, 20);
        let s = spectrum_qr(&c, &e, 64).unwrap();
        let dec = oseledec_spaces(&c, &e, &s, &OseledecOptions::default()).unwrap();
        for (i, h) in dec.subspaces.iter().enumerate() {
            let axis = DMatrix::from_column_slice(3, 1, DVector::from_fn(3, |j, _| if j == i { 1.0 } else { 0.0 }).as_slice());
            assert!(linalg::subspace_distance(h, &axis) < 0.05, "block {i}");
            assert!((h.transpose() * h - DMatrix::identity(1, 1)).norm() < 1e-10);
        }
        assert!(dec.invariance_residual < 0.1, "{:?}", dec.block_residuals);
    }

    #[test]
    fn conjugated_splitting_follows_p() {
        let c = CocycleSpec::conjugated(CocycleSpec::diagonal_busemann(vec![1.0, 2.0, 3.0]).unwrap(), p()).unwrap();
        let e = ens(32.0, 20);
        let s = spectrum_qr(&c, &e, 64).unwrap();
        let dec = oseledec_spaces(&c, &e, &s, &OseledecOptions::default()).unwrap();
        for (i, h) in dec.subspaces.iter().enumerate() {
            let col = linalg::orthonormal_basis("t", &p().columns(i, 1).into_owned()).unwrap();
            assert!(linalg::subspace_distance(h, &col) < 0.1, "block {i}");
        }
        assert!(dec.invariance_residual < 0.1, "{:?}", dec.block_residuals);
        let a = angle_decay(&c, &dec, &ens(48.0, 10), &[0], &AngleOptions { window: 16.0, every: 8.0 }).unwrap();
        assert_eq!(a.series.len(), 4);
        assert!(a.terminal.abs() < 0.05, "{a:?}");
    }

    #[test]
    fn identity_is_one_block_and_has_no_angles() {
        let c = CocycleSpec::identity(3);
        let e = ens(8.0, 4);
        let s = spectrum_qr(&c, &e, 64).unwrap();
        assert_eq!(s.multiplicities, vec![3]);
        let dec = oseledec_spaces(&c, &e, &s, &OseledecOptions::default()).unwrap();
        assert_eq!(dec.subspaces.len(), 1);
        assert_eq!(dec.subspaces[0].ncols(), 3);
        let a = angle_decay(&c, &dec, &e, &[0], &AngleOptions::default()).unwrap();
        assert!(a.series.is_empty());
    }

    #[test]
    fn ambiguous_merge_is_refused() {
        let c = CocycleSpec::diagonal_busemann(vec![1.0, 1.1]).unwrap();
        let e = ens(64.0, 100);
        let s = spectrum_qr(&c, &e, 64).unwrap();
        assert_eq!(s.multiplicities, vec![2]);
        assert!(matches!(oseledec_spaces(&c, &e, &s, &OseledecOptions::default()), Err(Error::Capability { .. })));
    }
}
