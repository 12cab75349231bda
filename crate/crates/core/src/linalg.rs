//! Dense symmetric helpers shared by the kernel, QP and Green code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Cholesky factorization, or the smallest pivot seen when it breaks down.
pub fn cholesky(m: &Matrix) -> Result<Cholesky<f64, Dyn>, f64> {
    match m.clone().cholesky() {
        Some(c) => Ok(c),
        None => Err(smallest_pivot(m)),
    }
}

/// Runs an unblocked LDLᵀ sweep to report the first nonpositive pivot.
fn smallest_pivot(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut l = m.clone();
    for j in 0..n {
        let mut d = l[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return d;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = l[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    f64::NAN
}

/// Principal submatrix on the given (ordered) index set.
pub fn principal(m: &Matrix, idx: &[usize]) -> Matrix {
    Matrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// Rectangular block `m[rows, cols]`.
pub fn block(m: &Matrix, rows: &[usize], cols: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Fixed-order dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// `max |m - mᵀ|` over all entries.
pub fn asymmetry(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pivot_report_on_indefinite_matrix() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let pivot = cholesky(&m).unwrap_err();
        assert!((pivot - (-3.0)).abs() < 1e-12);
    }

    #[test]
    fn spd_factorizes() {
        let m = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!(cholesky(&m).is_ok());
        assert_eq!(asymmetry(&m), 0.0);
    }
}
