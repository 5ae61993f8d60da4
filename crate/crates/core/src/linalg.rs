//! Small dense linear-algebra helpers on `nalgebra` matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// All `k`-subsets of `0..d` in lexicographic order.
pub fn combinations(d: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k == 0 || k > d {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == i - 1 + d - k {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// `k`-th exterior power of `a` in the lexicographic basis
/// `e_{i1} ∧ … ∧ e_{ik}`, `i1 < … < ik`. Entry `(I, J)` is the minor `det a[I, J]`.
pub fn wedge(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let d = a.nrows();
    assert!(k >= 1 && k <= d, "wedge degree out of range");
    if k == 1 {
        return a.clone();
    }
    let subsets = combinations(d, k);
    let n = subsets.len();
    let mut out = DMatrix::zeros(n, n);
    let mut minor = DMatrix::zeros(k, k);
    for (r, rows) in subsets.iter().enumerate() {
        for (c, cols) in subsets.iter().enumerate() {
            for (i, &ri) in rows.iter().enumerate() {
                for (j, &cj) in cols.iter().enumerate() {
                    minor[(i, j)] = a[(ri, cj)];
                }
            }
            out[(r, c)] = small_det(&minor);
        }
    }
    out
}

/// Determinant of a small square matrix.
pub fn small_det(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    match n {
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        _ => m.clone().lu().determinant(),
    }
}

pub fn inverse(op: &'static str, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let cond = condition_estimate(a);
    if !(cond < 1e12) {
        return Err(Error::numeric(
            op,
            format!("matrix not invertible (condition estimate {cond:e})"),
        ));
    }
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::numeric(op, "matrix not invertible"))
}

pub fn inverse_transpose(op: &'static str, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(inverse(op, a)?.transpose())
}

/// 2-norm condition number from singular values.
pub fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 1 {
        return if a[(0, 0)] == 0.0 { f64::INFINITY } else { 1.0 };
    }
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Thin QR by modified Gram–Schmidt with one reorthogonalization pass.
///
/// `m` is overwritten by `Q` (orthonormal columns) and `r` receives the upper
/// triangular factor with a nonnegative diagonal. Fails if a column collapses
/// below `1e-12` of its original norm.
pub fn qr_in_place(m: &mut DMatrix<f64>, r: &mut DMatrix<f64>) -> std::result::Result<(), usize> {
    let (rows, cols) = m.shape();
    r.fill(0.0);
    for j in 0..cols {
        let orig: f64 = m.column(j).norm();
        for _pass in 0..2 {
            for i in 0..j {
                let mut dot = 0.0;
                for k in 0..rows {
                    dot += m[(k, i)] * m[(k, j)];
                }
                r[(i, j)] += dot;
                for k in 0..rows {
                    let qi = m[(k, i)];
                    m[(k, j)] -= dot * qi;
                }
            }
        }
        let norm = m.column(j).norm();
        if !(norm > 1e-12 * orig) || !norm.is_finite() || orig == 0.0 {
            return Err(j);
        }
        r[(j, j)] = norm;
        for k in 0..rows {
            m[(k, j)] /= norm;
        }
    }
    Ok(())
}

/// Orthonormal basis for the column span of `m` (columns assumed independent).
pub fn orthonormal_basis(op: &'static str, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut q = m.clone();
    let mut r = DMatrix::zeros(m.ncols(), m.ncols());
    qr_in_place(&mut q, &mut r)
        .map_err(|j| Error::numeric(op, format!("rank collapse at column {j}")))?;
    Ok(q)
}

/// Principal angles (ascending, radians) between the column spans of two
/// matrices with orthonormal columns.
pub fn principal_angles(u: &DMatrix<f64>, w: &DMatrix<f64>) -> Vec<f64> {
    let m = u.transpose() * w;
    let mut sv: Vec<f64> = m.singular_values().iter().map(|s| s.clamp(0.0, 1.0)).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv.into_iter().map(f64::acos).collect()
}

/// Largest principal angle between two subspaces of equal dimension.
pub fn subspace_distance(u: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    principal_angles(u, w).into_iter().fold(0.0, f64::max)
}

/// Orthonormal basis of the `dim`-dimensional (numerical) intersection of two
/// subspaces given by orthonormal bases, from the leading principal vectors.
pub fn intersection(u: &DMatrix<f64>, w: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    let m = u.transpose() * w;
    // eigenvectors of M Mᵀ (eigenvalues cos² of the principal angles); the
    // SVD of a nearly rank-deficient M loses the leading vectors
    let lead = leading_eigenvectors(&(&m * m.transpose()), dim);
    u * lead
}

/// Orthogonal projector onto the span of orthonormal columns.
pub fn projector(basis: &DMatrix<f64>) -> DMatrix<f64> {
    basis * basis.transpose()
}

/// The `dim` leading eigenvectors of a symmetric matrix.
pub fn leading_eigenvectors(sym: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    let eig = sym.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut out = DMatrix::zeros(sym.nrows(), dim);
    for (c, &i) in order.iter().take(dim).enumerate() {
        out.set_column(c, &eig.eigenvectors.column(i));
    }
    out
}

pub fn unit(v: &DVector<f64>) -> DVector<f64> {
    let n = v.norm();
    v / n
}

/// Deterministic well-spread orthogonal matrix used as a generic QR start.
pub fn generic_orthogonal(d: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(d, d, |i, j| {
        let x = (i * d + j) as f64;
        (1.3 + 0.7 * x).sin() + if i == j { 0.5 } else { 0.0 }
    });
    orthonormal_basis("linalg::generic_orthogonal", &m).expect("fixed start matrix is well conditioned")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(
            combinations(4, 2),
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(combinations(3, 1).len(), 3);
        for d in 1..7 {
            for k in 1..=d {
                assert_eq!(combinations(d, k).len(), binomial(d, k));
            }
        }
    }

    #[test]
    fn wedge_of_diagonal_is_product() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 5.0]));
        let w = wedge(&a, 2);
        assert_eq!(w.shape(), (1, 1));
        assert!((w[(0, 0)] - 10.0).abs() < 1e-14);
        assert_eq!(wedge(&a, 1), a);
    }

    #[test]
    fn qr_reconstructs() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.5, 1.0, 3.0, 0.0, -0.3, 0.2, 1.7]);
        let mut q = a.clone();
        let mut r = DMatrix::zeros(3, 3);
        qr_in_place(&mut q, &mut r).unwrap();
        assert!((&q * &r - &a).norm() < 1e-13);
        assert!((q.transpose() * &q - DMatrix::identity(3, 3)).norm() < 1e-14);
        for i in 0..3 {
            assert!(r[(i, i)] > 0.0);
        }
    }

    #[test]
    fn intersection_of_planes_is_common_line() {
        let u = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let s = 0.5_f64.sqrt();
        let w = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, s, s]);
        let line = intersection(&u, &w, 1);
        assert!((line[(0, 0)].abs() - 1.0).abs() < 1e-12);
    }
}
