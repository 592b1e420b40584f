//! Small dense linear algebra on top of nalgebra: numerical rank, null
//! spaces, column-space bases and subspace intersections. All routines use
//! singular values with a threshold relative to the largest one.

use nalgebra::{DMatrix, DVector};

/// Default relative threshold for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Singular values of `m`, largest first. Empty matrices have none.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `rel_tol` times the largest one. A zero
/// matrix has rank 0.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&largest) if largest > 0.0 => s.iter().filter(|&&v| v > rel_tol * largest).count(),
        _ => 0,
    }
}

/// Ratio of largest to smallest singular value; infinite when singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Orthonormal basis (as columns) of the null space `{v : m v = 0}`.
pub fn null_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = m.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // Pad to at least n rows so the SVD returns a full right basis.
    let rows = m.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let largest = svd.singular_values.max();
    let cutoff = if largest > 0.0 {
        rel_tol * largest
    } else {
        f64::INFINITY
    };
    let columns: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| !(s > cutoff) || largest == 0.0)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect();
    from_columns(n, &columns)
}

/// Orthonormal basis (as columns) of the column space of `m`.
pub fn column_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if m.ncols() == 0 || n == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let largest = svd.singular_values.max();
    if largest == 0.0 {
        return DMatrix::zeros(n, 0);
    }
    let columns: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > rel_tol * largest)
        .map(|(i, _)| u.column(i).into_owned())
        .collect();
    from_columns(n, &columns)
}

/// Orthonormal basis of `span(a) ∩ span(b)`, with `a` and `b` given as
/// column matrices with the same number of rows.
pub fn intersection(a: &DMatrix<f64>, b: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let qa = column_space(a, rel_tol);
    let qb = column_space(b, rel_tol);
    if qa.ncols() == 0 || qb.ncols() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    // x = qa u = qb w  <=>  [qa | -qb] [u; w] = 0
    let stacked = hstack(&[qa.clone(), -qb]);
    let kernel = null_space(&stacked, rel_tol);
    let vectors = &qa * kernel.rows(0, qa.ncols());
    column_space(&vectors, rel_tol)
}

/// Concatenates column blocks with equal row counts.
pub fn hstack(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, DMatrix::nrows);
    let cols: usize = blocks.iter().map(DMatrix::ncols).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, offset), (rows, b.ncols())).copy_from(b);
        offset += b.ncols();
    }
    out
}

/// Orthonormal basis of `span(q)` (orthonormal columns) built by pivoted
/// Gram-Schmidt on the projected coordinate axes, so it is as close to the
/// coordinate directions as possible. Ties go to the lower index.
pub fn coordinate_aligned_basis(q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = q.nrows();
    let target = q.ncols();
    let mut candidates: Vec<DVector<f64>> = (0..n).map(|i| q * q.row(i).transpose()).collect();
    let mut chosen: Vec<DVector<f64>> = Vec::with_capacity(target);
    while chosen.len() < target {
        let norms: Vec<f64> = candidates.iter().map(DVector::norm).collect();
        let largest = norms.iter().copied().fold(0.0, f64::max);
        if largest <= 0.0 {
            break;
        }
        // Near-ties go to the lower index so rounding cannot reorder axes.
        let best = norms
            .iter()
            .position(|&v| v >= largest * (1.0 - 1e-8))
            .expect("largest exists");
        let norm = norms[best];
        let v = &candidates[best] / norm;
        for c in candidates.iter_mut() {
            let d = v.dot(c);
            *c -= &v * d;
        }
        candidates[best].fill(0.0);
        chosen.push(v);
    }
    from_columns(n, &chosen)
}

pub fn from_columns(rows: usize, columns: &[DVector<f64>]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, columns.len());
    for (j, c) in columns.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

/// Inverse via LU with partial pivoting, or `None` when exactly singular.
pub fn inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().lu().try_inverse()
}

/// Determinant after scaling each row to unit Euclidean norm. Invariant
/// under rescaling of individual rows, so it measures singularity rather
/// than magnitude. Zero rows give 0.
pub fn row_scaled_det(m: &DMatrix<f64>) -> f64 {
    let mut scaled = m.clone();
    for mut row in scaled.row_iter_mut() {
        let norm = row.norm();
        if norm == 0.0 {
            return 0.0;
        }
        row /= norm;
    }
    scaled.determinant()
}

/// Largest absolute entry; 0 for empty matrices.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}
