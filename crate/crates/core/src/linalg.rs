//! Small dense linear-algebra helpers shared by the spectral and
//! reconstruction code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Condition numbers above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

fn one_norm_c(m: &DMatrix<Complex64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverts a complex matrix, rejecting singular or badly conditioned input.
pub fn complex_inverse(m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let inv = m.clone().try_inverse().ok_or(Error::Singular {
        condition: f64::INFINITY,
    })?;
    let condition = one_norm_c(m) * one_norm_c(&inv);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::Singular { condition });
    }
    Ok(inv)
}

pub fn real_part(m: &DMatrix<Complex64>) -> DMatrix<f64> {
    m.map(|z| z.re)
}

pub fn imag_part(m: &DMatrix<Complex64>) -> DMatrix<f64> {
    m.map(|z| z.im)
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn antisymmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m - m.transpose()) * 0.5
}

/// `(S + S^H) / 2`
pub fn hermitian_part(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Row-by-row `y = M x` with a fixed left-to-right summation order.
///
/// The simulator relies on this order so that a clamped full-dimension run
/// and the reduced grounded run produce identical bits.
pub fn matvec_into(m: &DMatrix<f64>, x: &[f64], y: &mut [f64]) {
    let n = m.nrows();
    for (i, yi) in y.iter_mut().enumerate().take(n) {
        let mut acc = 0.0;
        for (j, xj) in x.iter().enumerate() {
            acc += m[(i, j)] * xj;
        }
        *yi = acc;
    }
}

/// Outcome of a clamped principal square root.
#[derive(Debug, Clone)]
pub struct PsdSqrt {
    pub root: DMatrix<f64>,
    /// Sum of magnitudes of the negative eigenvalues that were set to zero.
    pub clamped_mass: f64,
    pub max_eigenvalue: f64,
}

/// Principal square root of a symmetric matrix through its eigendecomposition.
///
/// Negative eigenvalues are clamped to zero and their mass reported;
/// eigenvalues below `1e-12 * max(|lambda|)` are treated as exact zeros.
pub fn psd_sqrt(m: &DMatrix<f64>) -> PsdSqrt {
    let eig = SymmetricEigen::new(symmetrize(m));
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, l| a.max(l.abs()));
    let cutoff = 1e-12 * scale;
    let mut clamped_mass = 0.0;
    let mut max_eigenvalue = f64::NEG_INFINITY;
    let roots = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| {
            max_eigenvalue = max_eigenvalue.max(l);
            if l.abs() <= cutoff {
                0.0
            } else if l < 0.0 {
                clamped_mass += -l;
                0.0
            } else {
                l.sqrt()
            }
        }),
    );
    let v = &eig.eigenvectors;
    let root = v * DMatrix::from_diagonal(&roots) * v.transpose();
    PsdSqrt {
        root: symmetrize(&root),
        clamped_mass,
        max_eigenvalue,
    }
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn max_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .fold(f64::NEG_INFINITY, |a, &l| a.max(l))
}

/// Orthogonal projector onto the complement of `v`.
pub fn complement_projector(v: &DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    let vv = v.dot(v);
    DMatrix::identity(n, n) - (v * v.transpose()) / vv
}

/// Deletes row and column `j`.
pub fn delete_row_col(m: &DMatrix<f64>, j: usize) -> DMatrix<f64> {
    m.clone().remove_row(j).remove_column(j)
}

/// Formats a float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Row-major CSV, 17 significant digits.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt17(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("bad matrix entry {t:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}
