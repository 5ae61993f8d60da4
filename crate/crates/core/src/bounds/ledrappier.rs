//! Fixed points of the projectivized one-step transfer operator on a grid of
//! `P(ℝ^d)` and their exponent values `∫ φ dν`.
//!
//! Unit-time moves `[u] → [A(ω,1)u]` are sampled along paths from the base
//! point and snapped to the nearest grid node. The extreme stationary
//! measures of the resulting finite chain live on its closed communicating
//! classes; each class seeds one power iteration. Directions fixed by most of
//! the sampled matrices are added to the grid so that invariant lines survive
//! the snapping.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::cocycle::{evaluate_steps, CocycleSpec};
use crate::error::{Error, Result};
use crate::geometry::LeafModel;
use crate::rng::map_indexed;
use crate::wiener::Ensemble;

use super::phi::OneStep;
use super::Estimate;

const OP: &str = "bounds::ledrappier_check";

/// Nodes on `P(ℝ^d)`, one unit representative per line.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectiveGrid {
    nodes: Vec<DVector<f64>>,
    regular: usize,
}

impl ProjectiveGrid {
    /// `P(ℝ¹)` is a point; `P(ℝ²)` gets `angular` equally spaced lines through
    /// both axes; `P(ℝ³)` the vertices of an icosphere refined `level` times,
    /// antipodes identified (1281 lines at level 4).
    pub fn regular(d: usize, angular: usize, level: usize) -> Result<Self> {
        let nodes = match d {
            1 => vec![DVector::from_element(1, 1.0)],
            2 => {
                if angular < 4 {
                    return Err(Error::domain(OP, "need at least 4 angular nodes"));
                }
                (0..angular)
                    .map(|k| {
                        let t = std::f64::consts::PI * k as f64 / angular as f64;
                        let (s, c) = t.sin_cos();
                        // exact axes
                        DVector::from_vec(if 2 * k == angular { vec![0.0, 1.0] } else { vec![c, s] })
                    })
                    .collect()
            }
            3 => icosphere_lines(level),
            _ => return Err(Error::capability(OP, format!("projective grid for rank {d} exceeds the budget of 3"))),
        };
        let regular = nodes.len();
        Ok(ProjectiveGrid { nodes, regular })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[DVector<f64>] {
        &self.nodes
    }

    /// Nodes beyond the regular part (sampled invariant directions).
    pub fn extra(&self) -> &[DVector<f64>] {
        &self.nodes[self.regular..]
    }

    fn add(&mut self, v: DVector<f64>) {
        if self.nodes.iter().all(|n| 1.0 - n.dot(&v).abs() > 1e-14) {
            self.nodes.push(v);
        }
    }

    /// Index of the line closest to `[v]`.
    pub fn nearest(&self, v: &DVector<f64>) -> usize {
        let v = v.normalize();
        let (mut best, mut score) = match v.len() {
            1 => return 0,
            2 => {
                let n = self.regular;
                let t = v[1].atan2(v[0]).rem_euclid(std::f64::consts::PI);
                let k = (t / std::f64::consts::PI * n as f64).round() as usize % n;
                (k, self.nodes[k].dot(&v).abs())
            }
            _ => (0, f64::NEG_INFINITY),
        };
        let start = if v.len() == 2 { self.regular } else { 0 };
        for (i, n) in self.nodes.iter().enumerate().skip(start) {
            let s = n.dot(&v).abs();
            if s > score {
                best = i;
                score = s;
            }
        }
        best
    }
}

fn icosphere_lines(level: usize) -> Vec<DVector<f64>> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|v| normalize3(*v))
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (verts[a], verts[b]);
                verts.push(normalize3([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                verts.len() - 1
            })
        };
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let mut lines: Vec<[f64; 3]> = verts
        .into_iter()
        .map(|v| {
            let s = v.iter().find(|c| c.abs() > 1e-12).map_or(1.0, |c| c.signum());
            [s * v[0], s * v[1], s * v[2]]
        })
        .collect();
    lines.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    lines.dedup_by(|a, b| (0..3).all(|i| (a[i] - b[i]).abs() < 1e-12));
    lines.into_iter().map(|v| DVector::from_column_slice(&v)).collect()
}

fn normalize3(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Real eigen-directions of a matrix with a well-separated real eigenvalue,
/// with the relative separation as a quality score.
fn eigen_directions(m: &DMatrix<f64>) -> Vec<(DVector<f64>, f64)> {
    let d = m.nrows();
    let ev = m.clone().complex_eigenvalues();
    let scale = m.norm();
    let mut out = Vec::new();
    for (i, l) in ev.iter().enumerate() {
        if l.im.abs() > 1e-12 * scale {
            continue;
        }
        let sep = ev
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, o)| (o - l).norm())
            .fold(f64::INFINITY, f64::min)
            / scale;
        if sep < 1e-6 {
            continue;
        }
        let shifted = m - DMatrix::identity(d, d) * l.re;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.expect("requested");
        let k = (0..d).min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b])).expect("d > 0");
        out.push((vt.row(k).transpose().normalize(), sep));
    }
    out
}

/// Directions fixed by at least half of the matrices, each represented by
/// its best-separated sample.
fn shared_directions(mats: &[DMatrix<f64>]) -> Vec<DVector<f64>> {
    let mut all: Vec<(DVector<f64>, f64)> = mats.iter().flat_map(eigen_directions).collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut clusters: Vec<(DVector<f64>, usize)> = Vec::new();
    for (v, _) in all {
        match clusters.iter_mut().find(|c| 1.0 - c.0.dot(&v).abs() < 1e-10) {
            Some(c) => c.1 += 1,
            None => clusters.push((v, 1)),
        }
    }
    clusters.into_iter().filter(|c| 2 * c.1 >= mats.len()).map(|c| c.0).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LedrappierOptions {
    /// Lines on `P(ℝ²)`.
    pub angular_nodes: usize,
    /// Icosphere refinement for `P(ℝ³)`.
    pub sphere_level: usize,
    /// Sampled unit-time moves.
    pub paths: usize,
    pub dt: f64,
    pub max_sweeps: usize,
    /// Total-variation change at which a sweep counts as converged.
    pub tol: f64,
    pub seed: u64,
    /// Panel width of the `φ` quadrature.
    pub panel: f64,
    /// Largest distance at which a value is matched to a spectrum exponent.
    pub match_tol: f64,
}

impl Default for LedrappierOptions {
    fn default() -> Self {
        LedrappierOptions {
            angular_nodes: 720,
            sphere_level: 4,
            paths: 256,
            dt: 1.0 / 16.0,
            max_sweeps: 5000,
            tol: 1e-4,
            seed: 42,
            panel: 0.1,
            match_tol: 0.1,
        }
    }
}

/// A probability vector on the grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectiveState {
    pub weights: Vec<f64>,
    pub sweeps: usize,
    /// Total-variation change of the last sweep.
    pub tv: f64,
}

impl ProjectiveState {
    /// Probability-weighted mean of the projector onto the node lines.
    pub fn mean_projector(&self, grid: &ProjectiveGrid) -> DMatrix<f64> {
        let d = grid.nodes[0].len();
        let mut p = DMatrix::zeros(d, d);
        for (w, n) in self.weights.iter().zip(&grid.nodes) {
            if *w > 0.0 {
                p += n * n.transpose() * *w;
            }
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPoint {
    pub state: ProjectiveState,
    pub converged: bool,
    /// `∫ φ dν`; absent without convergence.
    pub value: Option<Estimate>,
    /// Index of the matched exponent in the supplied spectrum.
    pub matched: Option<usize>,
    /// Nodes of the closed class that seeded the iteration.
    pub class: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LedrappierResult {
    pub grid: ProjectiveGrid,
    pub fixed_points: Vec<FixedPoint>,
}

impl LedrappierResult {
    /// Distinct converged values, descending, merged within `tol`.
    pub fn distinct_values(&self, tol: f64) -> Vec<f64> {
        let mut v: Vec<f64> = self.fixed_points.iter().filter_map(|f| f.value.map(|e| e.value)).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v.dedup_by(|a, b| (*a - *b).abs() <= tol);
        v
    }
}

/// Transfer-operator search at the base point `x` of a cocycle whose one-step
/// law does not depend on the base point. `spectrum` (descending exponents)
/// is used only for matching.
pub fn ledrappier_check(
    c: &CocycleSpec,
    model: &LeafModel,
    x: &[f64],
    spectrum: Option<&[f64]>,
    opts: &LedrappierOptions,
) -> Result<LedrappierResult> {
    let d = c.rank();
    c.check_model(model)?;
    let driver = c.driver(model).ok_or_else(|| {
        Error::capability(
            OP,
            format!("{} on {} has a base-point dependent one-step law; the transfer operator is built for homogeneous drivers", c.name(), model.name()),
        )
    })?;
    let mut grid = ProjectiveGrid::regular(d, opts.angular_nodes, opts.sphere_level)?;
    if opts.paths == 0 {
        return Err(Error::domain(OP, "need at least one path"));
    }
    let ens = Ensemble::new(*model, x.to_vec(), 1.0, opts.dt, opts.paths, opts.seed)?;
    let mats = ens.map(|_, p| {
        let a = evaluate_steps(c, p, p.steps())?;
        Ok(a.matrix)
    })?;
    if d > 1 {
        for v in shared_directions(&mats) {
            grid.add(v);
        }
    }
    let n = grid.len();

    // transition counts
    let rows: Vec<Vec<(usize, f64)>> = map_indexed(n, |k| {
        let mut counts: Vec<(usize, usize)> = Vec::new();
        for m in &mats {
            let t = grid.nearest(&(m * &grid.nodes[k]));
            match counts.iter_mut().find(|c| c.0 == t) {
                Some(c) => c.1 += 1,
                None => counts.push((t, 1)),
            }
        }
        counts.sort_unstable();
        counts.into_iter().map(|(t, c)| (t, c as f64 / mats.len() as f64)).collect()
    });

    let mut g: DiGraph<(), ()> = DiGraph::with_capacity(n, n);
    let ids: Vec<NodeIndex> = (0..n).map(|_| g.add_node(())).collect();
    for (k, row) in rows.iter().enumerate() {
        for &(t, _) in row {
            g.add_edge(ids[k], ids[t], ());
        }
    }
    let mut classes: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|scc| {
            let mut v: Vec<usize> = scc.into_iter().map(|i| i.index()).collect();
            v.sort_unstable();
            v
        })
        .filter(|class| class.iter().all(|&k| rows[k].iter().all(|(t, _)| class.binary_search(t).is_ok())))
        .collect();
    classes.sort();

    let one = OneStep::new(c, model, driver, opts.panel)?;
    let coarse = OneStep::new(c, model, driver, 2.0 * opts.panel)?;
    let phi: Vec<(f64, f64)> = map_indexed(n, |k| (one.phi(&grid.nodes[k]), coarse.phi(&grid.nodes[k])));

    let fixed_points = classes
        .into_iter()
        .map(|class| {
            let mut w = vec![0.0; n];
            for &k in &class {
                w[k] = 1.0 / class.len() as f64;
            }
            let mut tv = f64::INFINITY;
            let mut sweeps = 0;
            while sweeps < opts.max_sweeps && tv >= opts.tol {
                let mut next = vec![0.0; n];
                for &k in &class {
                    if w[k] > 0.0 {
                        for &(t, p) in &rows[k] {
                            next[t] += w[k] * p;
                        }
                    }
                }
                let s: f64 = next.iter().sum();
                next.iter_mut().for_each(|v| *v /= s);
                tv = 0.5 * next.iter().zip(&w).map(|(a, b)| (a - b).abs()).sum::<f64>();
                w = next;
                sweeps += 1;
            }
            let converged = tv < opts.tol;
            let value = converged.then(|| {
                let v: f64 = w.iter().zip(&phi).map(|(a, p)| a * p.0).sum();
                let vc: f64 = w.iter().zip(&phi).map(|(a, p)| a * p.1).sum();
                let spread = w.iter().zip(&phi).filter(|(a, _)| **a > 0.0).map(|(_, p)| (p.0 - v).abs()).fold(0.0, f64::max);
                Estimate {
                    value: v,
                    stderr: 0.0,
                    error: (v - vc).abs() + tv * spread,
                }
            });
            let matched = value.and_then(|e| {
                spectrum.and_then(|s| {
                    s.iter()
                        .enumerate()
                        .map(|(i, x)| (i, (x - e.value).abs()))
                        .filter(|p| p.1 <= opts.match_tol)
                        .min_by(|a, b| a.1.total_cmp(&b.1))
                        .map(|p| p.0)
                })
            });
            FixedPoint {
                state: ProjectiveState { weights: w, sweeps, tv },
                converged,
                value,
                matched,
                class,
            }
        })
        .collect();
    Ok(LedrappierResult { grid, fixed_points })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h2() -> LeafModel {
        LeafModel::hyperbolic_plane()
    }

    #[test]
    fn grids() {
        assert_eq!(ProjectiveGrid::regular(2, 720, 0).unwrap().len(), 720);
        let g = ProjectiveGrid::regular(3, 0, 4).unwrap();
        assert_eq!(g.len(), 1281);
        // no antipodal duplicates, all unit
        for (i, a) in g.nodes().iter().enumerate() {
            assert!((a.norm() - 1.0).abs() < 1e-12);
            for b in &g.nodes()[i + 1..] {
                assert!(a.dot(b).abs() < 1.0 - 1e-6);
            }
        }
        let g2 = ProjectiveGrid::regular(2, 720, 0).unwrap();
        let v = DVector::from_vec(vec![-1.0, -1e-9]);
        assert_eq!(g2.nearest(&v), 0);
        assert_eq!(g2.nearest(&DVector::from_vec(vec![0.0, -2.0])), 360);
    }

    #[test]
    fn diagonal_busemann_recovers_both_exponents() {
        let c = CocycleSpec::diagonal_busemann(vec![1.0, 2.0]).unwrap();
        let r = ledrappier_check(&c, &h2(), &[0.0, 1.0], Some(&[-1.0, -2.0]), &LedrappierOptions::default()).unwrap();
        let vals = r.distinct_values(0.05);
        assert_eq!(vals.len(), 2, "{vals:?}");
        assert!((vals[0] + 1.0).abs() < 0.1 && (vals[1] + 2.0).abs() < 0.1);
        for f in &r.fixed_points {
            let s: f64 = f.state.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-12 && f.state.weights.iter().all(|w| *w >= 0.0));
            assert!(f.matched.is_some());
        }
    }

    #[test]
    fn conjugated_fixed_points_sit_on_p_columns() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, -0.3, 1.0]);
        let c = CocycleSpec::conjugated(CocycleSpec::diagonal_busemann(vec![1.0, 2.0]).unwrap(), p.clone()).unwrap();
        let r = ledrappier_check(&c, &h2(), &[0.0, 1.0], Some(&[-1.0, -2.0]), &LedrappierOptions::default()).unwrap();
        let mut found = [false, false];
        for f in &r.fixed_points {
            let e = f.value.unwrap().value;
            let proj = f.state.mean_projector(&r.grid);
            for i in 0..2 {
                let col = p.column(i).normalize();
                let target = -(i as f64) - 1.0;
                if (e - target).abs() < 0.1 && (&proj * &col).norm() > 0.99 {
                    found[i] = true;
                }
            }
        }
        assert_eq!(found, [true, true]);
    }

    #[test]
    fn identity_every_node_is_fixed_with_zero_value() {
        let r = ledrappier_check(
            &CocycleSpec::identity(2),
            &h2(),
            &[0.0, 1.0],
            None,
            &LedrappierOptions { angular_nodes: 36, ..Default::default() },
        )
        .unwrap();
        assert_eq!(r.fixed_points.len(), 36);
        assert!(r.fixed_points.iter().all(|f| f.value.unwrap().value.abs() < 1e-12));
    }

    #[test]
    fn base_dependent_law_is_refused() {
        let c = CocycleSpec::one_form(vec![(crate::cocycle::Potential::Coordinate(0), DMatrix::from_element(1, 1, 1.0))]).unwrap();
        assert!(matches!(
            ledrappier_check(&c, &h2(), &[0.0, 1.0], None, &LedrappierOptions::default()),
            Err(Error::Capability { .. })
        ));
    }
}
