//! Small dense helpers shared across modules. Vectors are plain slices; matrices are
//! `nalgebra::DMatrix<f64>`.

use nalgebra::{DMatrix, DVectorView};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `out += m * v`
pub fn gemv_acc(out: &mut [f64], m: &DMatrix<f64>, v: &[f64]) {
    debug_assert_eq!(m.ncols(), v.len());
    debug_assert_eq!(m.nrows(), out.len());
    for c in 0..m.ncols() {
        let vc = v[c];
        if vc == 0.0 {
            continue;
        }
        for (r, o) in out.iter_mut().enumerate() {
            *o += m[(r, c)] * vc;
        }
    }
}

/// `out += mᵀ v`
pub fn gemv_t_acc(out: &mut [f64], m: &DMatrix<f64>, v: &[f64]) {
    debug_assert_eq!(m.nrows(), v.len());
    debug_assert_eq!(m.ncols(), out.len());
    for (c, o) in out.iter_mut().enumerate() {
        let col = m.column(c);
        *o += col.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

pub fn matvec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (m * DVectorView::from_slice(v, v.len())).as_slice().to_vec()
}

/// Row-major construction, the layout used by every file format in this crate.
pub fn from_rows(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}
