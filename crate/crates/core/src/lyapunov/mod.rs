//! Lyapunov exponents, spectra, Oseledec subspaces and angle decay estimated
//! along path ensembles.

mod oseledec;
mod qr;

use nalgebra::DVector;

use crate::cocycle::{backward_step_into, CocycleSpec, CocycleValue};
use crate::error::{Error, Result};
use crate::wiener::Ensemble;

pub use oseledec::{angle_decay, oseledec_spaces, AngleDecay, AngleOptions, DecompositionEstimate, OseledecOptions};
pub(crate) use qr::run_qr;

/// Exponents closer than `max(GAP_FLOOR, GAP_SES · SE)` are merged.
pub const GAP_FLOOR: f64 = 0.15;
pub const GAP_SES: f64 = 4.0;

#[derive(Clone, Debug, PartialEq)]
pub struct VectorExponent {
    pub mean: f64,
    pub stderr: f64,
    /// Largest per-path slope (the essential-supremum aggregate).
    pub max: f64,
    pub slopes: Vec<f64>,
    /// The maximum sits more than five per-path deviations above the mean.
    pub disagreement: bool,
}

pub(crate) fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn summarize(slopes: Vec<f64>) -> VectorExponent {
    let (mean, stderr) = mean_se(&slopes);
    let max = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sd = stderr * (slopes.len() as f64).sqrt();
    VectorExponent {
        mean,
        stderr,
        max,
        disagreement: max - mean > 5.0 * sd + 1e-12,
        slopes,
    }
}

fn check_vector(op: &'static str, c: &CocycleSpec, v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != c.rank() || !(v.norm() > 0.0) {
        return Err(Error::domain(op, format!("vector must be nonzero of length {}", c.rank())));
    }
    Ok(v / v.norm())
}

/// Runs `w ← S w` along a step stream and returns `log ‖A v‖`.
fn propagate<'p>(
    op: &'static str,
    c: &CocycleSpec,
    model: &crate::geometry::LeafModel,
    n: usize,
    point: impl Fn(usize) -> &'p [f64],
    v: &DVector<f64>,
    backward: bool,
) -> Result<f64> {
    let mut step = CocycleValue::identity(c.rank());
    let mut w = v.clone();
    let mut tmp = w.clone();
    let mut log = 0.0;
    for k in 0..n {
        let r = if backward {
            backward_step_into(c, model, point(k), point(k + 1), &mut step)
        } else {
            c.step_into(model, point(k), point(k + 1), &mut step)
        };
        r.map_err(|e| match e {
            Error::Numeric { detail, .. } => Error::numeric(op, format!("{detail} at step {k}")),
            other => other,
        })?;
        if c.rank() == 1 {
            log += step.log_scale + step.matrix[(0, 0)].abs().ln();
            continue;
        }
        step.matrix.mul_to(&w, &mut tmp);
        let nrm = tmp.norm();
        if !(nrm > 0.0) || !nrm.is_finite() {
            return Err(Error::numeric(op, format!("vector collapsed at step {k}")));
        }
        log += step.log_scale + nrm.ln();
        w.copy_from(&tmp);
        w /= nrm;
    }
    Ok(log)
}

/// `(1/T) log(‖A(ω, T) v‖ / ‖v‖)` over the ensemble.
pub fn vector_exponent(c: &CocycleSpec, ens: &Ensemble, v: &DVector<f64>) -> Result<VectorExponent> {
    const OP: &str = "lyapunov::vector_exponent";
    let v = check_vector(OP, c, v)?;
    c.check_model(ens.model())?;
    let slopes = ens.map(|_, p| Ok(propagate(OP, c, p.model(), p.steps(), |k| p.point(k), &v, false)? / p.horizon()))?;
    Ok(summarize(slopes))
}

/// `(1/T) log ‖A(ω, −T) v‖` along the backward halves.
pub fn backward_vector_exponent(c: &CocycleSpec, ens: &Ensemble, v: &DVector<f64>) -> Result<VectorExponent> {
    const OP: &str = "lyapunov::backward_vector_exponent";
    let v = check_vector(OP, c, v)?;
    c.check_model(ens.model())?;
    let slopes = ens.map_extended(|_, e| {
        let b = &e.backward;
        Ok(propagate(OP, c, b.model(), b.steps(), |k| b.point(k), &v, true)? / b.horizon())
    })?;
    Ok(summarize(slopes))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumEstimate {
    /// Distinct exponents, descending.
    pub exponents: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub stderr: Vec<f64>,
    /// Largest distance between members merged into each block.
    pub spread: Vec<f64>,
    /// All `d` QR exponents before grouping, with standard errors.
    pub raw: Vec<f64>,
    pub raw_stderr: Vec<f64>,
    /// Terminal QR slopes per path.
    pub slopes: Vec<Vec<f64>>,
    /// `(t, ensemble mean of (1/t) log R_jj(t))` at each checkpoint.
    pub convergence: Vec<(f64, Vec<f64>)>,
    /// Largest relative gap between `Σ log R_jj` and a direct `log |det|`
    /// accumulation.
    pub telescoping_residual: f64,
}

impl SpectrumEstimate {
    /// Start index of each block in the raw ordering.
    pub fn block_starts(&self) -> Vec<usize> {
        self.multiplicities
            .iter()
            .scan(0, |s, m| {
                let start = *s;
                *s += m;
                Some(start)
            })
            .collect()
    }

    /// A block merged exponents that are resolved apart by their errors.
    pub fn ambiguous_blocks(&self) -> Vec<usize> {
        (0..self.exponents.len())
            .filter(|&b| self.multiplicities[b] > 1 && self.spread[b] > GAP_SES * self.stderr[b] + 1e-9)
            .collect()
    }
}

/// Groups sorted raw exponents into blocks.
pub(crate) fn group(raw: &[f64], raw_se: &[f64], slopes: &[Vec<f64>]) -> (Vec<f64>, Vec<usize>, Vec<f64>, Vec<f64>) {
    let d = raw.len();
    let mut blocks: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for j in 1..=d {
        let split = j == d || {
            let se = (raw_se[j - 1].powi(2) + raw_se[j].powi(2)).sqrt();
            raw[j - 1] - raw[j] >= GAP_FLOOR.max(GAP_SES * se)
        };
        if split {
            blocks.push((start, j));
            start = j;
        }
    }
    let mut ex = Vec::new();
    let mut mult = Vec::new();
    let mut se = Vec::new();
    let mut spread = Vec::new();
    for (a, b) in blocks {
        let per_path: Vec<f64> = slopes.iter().map(|s| s[a..b].iter().sum::<f64>() / (b - a) as f64).collect();
        let (m, e) = mean_se(&per_path);
        ex.push(m);
        mult.push(b - a);
        se.push(e);
        spread.push(raw[a] - raw[b - 1]);
    }
    (ex, mult, se, spread)
}

/// Discrete QR spectrum, convergence series recorded every `stride` steps.
pub fn spectrum_qr(c: &CocycleSpec, ens: &Ensemble, stride: usize) -> Result<SpectrumEstimate> {
    const OP: &str = "lyapunov::spectrum_qr";
    c.check_model(ens.model())?;
    let stride = stride.max(1);
    let rows = ens.map(|i, p| {
        let mut series = Vec::new();
        let st = run_qr(OP, c, p.model(), p.steps(), |k| p.point(k), false, i, Some((stride, &mut series)))?;
        let total: f64 = st.log_diag.iter().sum();
        let tele = (total - st.log_det).abs() / st.log_det.abs().max(1.0);
        let t = p.horizon();
        Ok((st.log_diag.iter().map(|l| l / t).collect::<Vec<f64>>(), series, tele))
    })?;
    let d = c.rank();
    let n = rows.len();
    let slopes: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
    let mut raw = Vec::with_capacity(d);
    let mut raw_se = Vec::with_capacity(d);
    for j in 0..d {
        let col: Vec<f64> = slopes.iter().map(|s| s[j]).collect();
        let (m, e) = mean_se(&col);
        raw.push(m);
        raw_se.push(e);
    }
    let checkpoints = rows[0].1.len();
    let dt = ens.dt();
    let convergence = (0..checkpoints)
        .map(|c| {
            let t = ((c + 1) * stride) as f64 * dt;
            let v = (0..d).map(|j| rows.iter().map(|r| r.1[c][j] / t).sum::<f64>() / n as f64).collect();
            (t, v)
        })
        .collect();
    let telescoping_residual = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let (exponents, multiplicities, stderr, spread) = group(&raw, &raw_se, &slopes);
    Ok(SpectrumEstimate {
        exponents,
        multiplicities,
        stderr,
        spread,
        raw,
        raw_stderr: raw_se,
        slopes,
        convergence,
        telescoping_residual,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct WedgeConsistency {
    pub top_wedge: f64,
    pub top_wedge_stderr: f64,
    pub sum_top_k: f64,
    pub sum_top_k_stderr: f64,
    pub discrepancy: f64,
}

/// Top exponent of `∧^k A` against the sum of the top `k` exponents of `A`.
pub fn wedge_consistency(c: &CocycleSpec, k: usize, ens: &Ensemble, stride: usize) -> Result<WedgeConsistency> {
    let w = CocycleSpec::wedge_power(c.clone(), k)?;
    let sw = spectrum_qr(&w, ens, stride)?;
    let sb = spectrum_qr(c, ens, stride)?;
    let per_path: Vec<f64> = sb.slopes.iter().map(|s| s[..k].iter().sum()).collect();
    let (sum, se) = mean_se(&per_path);
    Ok(WedgeConsistency {
        top_wedge: sw.raw[0],
        top_wedge_stderr: sw.raw_stderr[0],
        sum_top_k: sum,
        sum_top_k_stderr: se,
        discrepancy: (sw.raw[0] - sum).abs(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualConsistency {
    pub dual: Vec<f64>,
    pub base: Vec<f64>,
    /// `max_i |dual_i + base_{d+1−i}|`.
    pub max_discrepancy: f64,
}

/// Spectrum of `A*⁻¹` against the negated, reversed spectrum of `A`.
pub fn dual_consistency(c: &CocycleSpec, ens: &Ensemble, stride: usize) -> Result<DualConsistency> {
    let sd = spectrum_qr(&CocycleSpec::dual(c.clone()), ens, stride)?;
    let sb = spectrum_qr(c, ens, stride)?;
    let d = c.rank();
    let max_discrepancy = (0..d).map(|i| (sd.raw[i] + sb.raw[d - 1 - i]).abs()).fold(0.0, f64::max);
    Ok(DualConsistency {
        dual: sd.raw,
        base: sb.raw,
        max_discrepancy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LeafModel;

    fn h2(t: f64, paths: usize) -> Ensemble {
        Ensemble::new(LeafModel::hyperbolic_plane(), vec![0.0, 1.0], t, 1.0 / 64.0, paths, 42).unwrap()
    }

    #[test]
    fn identity_has_zero_exponent() {
        let e = vector_exponent(&CocycleSpec::identity(2), &h2(4.0, 10), &DVector::from_vec(vec![1.0, 2.0])).unwrap();
        assert!(e.mean.abs() < 1e-12 && e.stderr < 1e-12);
        let b = backward_vector_exponent(&CocycleSpec::identity(1), &h2(4.0, 10), &DVector::from_vec(vec![1.0])).unwrap();
        assert_eq!(b.mean, 0.0);
    }

    #[test]
    fn diagonal_vector_exponents() {
        let c = CocycleSpec::diagonal_busemann(vec![1.0, 2.0]).unwrap();
        let ens = h2(100.0, 200);
        let e2 = vector_exponent(&c, &ens, &DVector::from_vec(vec![0.0, 1.0])).unwrap();
        assert!((e2.mean + 2.0).abs() < 0.08, "{}", e2.mean);
        let e12 = vector_exponent(&c, &ens, &DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!((e12.mean + 1.0).abs() < 0.08, "{}", e12.mean);
        assert!(!e12.disagreement);
        let b = backward_vector_exponent(&c, &ens, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!((b.mean - 1.0).abs() < 0.08, "{}", b.mean);
    }

    #[test]
    fn spectrum_of_diagonal_busemann() {
        let c = CocycleSpec::diagonal_busemann(vec![1.0, 2.0, 3.0]).unwrap();
        let s = spectrum_qr(&c, &h2(100.0, 100), 640).unwrap();
        assert_eq!(s.multiplicities, vec![1, 1, 1]);
        for (e, x) in s.exponents.iter().zip([-1.0, -2.0, -3.0]) {
            assert!((e - x).abs() < 0.08, "{:?}", s.exponents);
        }
        assert!(s.telescoping_residual < 1e-8);
        assert_eq!(s.convergence.len(), 10);
        assert_eq!(s.convergence[9].0, 100.0);
    }

    #[test]
    fn equal_rates_merge() {
        let c = CocycleSpec::diagonal_busemann(vec![1.0, 1.0]).unwrap();
        let s = spectrum_qr(&c, &h2(50.0, 50), 64).unwrap();
        assert_eq!(s.multiplicities, vec![2]);
        assert!((s.exponents[0] + 1.0).abs() < 0.08);
        assert!(s.ambiguous_blocks().is_empty());
    }

    #[test]
    fn wedge_and_dual_consistency() {
        let c = CocycleSpec::diagonal_busemann(vec![1.0, 2.0, 3.0]).unwrap();
        let ens = h2(50.0, 50);
        let w = wedge_consistency(&c, 2, &ens, 64).unwrap();
        assert!((w.top_wedge + 3.0).abs() < 0.1 && w.discrepancy < 0.1, "{w:?}");
        let top = wedge_consistency(&c, 3, &ens, 64).unwrap();
        assert!(top.discrepancy <= 1e-8 * top.sum_top_k.abs());
        let d = dual_consistency(&c, &ens, 64).unwrap();
        for (x, e) in d.dual.iter().zip([3.0, 2.0, 1.0]) {
            assert!((x - e).abs() < 0.1, "{d:?}");
        }
        assert!(d.max_discrepancy < 0.1);
    }
}
