use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{Cholesky, Dyn};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

/// Solves `min xᵀAx − 2bᵀx` over `x ≥ 0` for many right-hand sides sharing `A`.
///
/// Block principal pivoting on the complementarity system. `A` is factorized
/// once; a face with zero set `G` is solved through the Schur complement
/// `(A⁻¹)_GG`, whose columns `A⁻¹e_z` are cached across right-hand sides.
pub struct NonnegSolver {
    a: Matrix,
    chol: Cholesky<f64, Dyn>,
    columns: Mutex<HashMap<usize, Arc<Vec<f64>>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonnegSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `max_i |min(x_i, (Ax − b)_i)|`.
    pub kkt_residual: f64,
}

impl NonnegSolver {
    pub fn new(a: Matrix) -> Result<Self> {
        let chol = linalg::cholesky(&a).map_err(|pivot| Error::NotPositiveDefinite { attempts: 0, pivot })?;
        Ok(NonnegSolver {
            a,
            chol,
            columns: Mutex::new(HashMap::new()),
        })
    }

    pub fn size(&self) -> usize {
        self.a.nrows()
    }

    /// `A⁻¹b` without the sign constraint.
    pub fn unconstrained(&self, b: &[f64]) -> Vec<f64> {
        self.chol.solve(&Vector::from_column_slice(b)).as_slice().to_vec()
    }

    /// `A⁻¹B` for a block of right-hand sides.
    pub fn unconstrained_many(&self, b: &Matrix) -> Matrix {
        self.chol.solve(b)
    }

    pub fn solve(&self, b: &[f64]) -> Result<NonnegSolution> {
        let x0 = self.unconstrained(b);
        self.solve_from(&x0, b)
    }

    /// Same as [`NonnegSolver::solve`] with `x0 = A⁻¹b` already computed.
    pub fn solve_from(&self, x0: &[f64], b: &[f64]) -> Result<NonnegSolution> {
        let m = self.size();
        let scale_x = x0.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
        let scale_y = b.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
        let eps_x = 1e-13 * scale_x;
        let eps_y = 1e-13 * scale_y;

        let mut zero = vec![false; m];
        let mut best_infeasible = m + 1;
        let mut backup = 3usize;
        let max_iter = 10 * m + 100;
        for iteration in 0..max_iter {
            let (x, lambda, gset) = self.face_solution(x0, &zero)?;
            let mut violating: Vec<usize> = (0..m).filter(|&i| !zero[i] && x[i] < -eps_x).collect();
            violating.extend(gset.iter().zip(&lambda).filter(|(_, &l)| l < -eps_y).map(|(&i, _)| i));
            if violating.is_empty() {
                let x: Vec<f64> = x.into_iter().map(|v| v.max(0.0)).collect();
                let kkt_residual = self.kkt(&x, b);
                return Ok(NonnegSolution {
                    x,
                    iterations: iteration,
                    kkt_residual,
                });
            }
            violating.sort_unstable();
            if violating.len() < best_infeasible {
                best_infeasible = violating.len();
                backup = 3;
                for &i in &violating {
                    zero[i] = !zero[i];
                }
            } else if backup > 0 {
                backup -= 1;
                for &i in &violating {
                    zero[i] = !zero[i];
                }
            } else {
                let i = *violating.last().expect("nonempty");
                zero[i] = !zero[i];
            }
        }
        let (x, _, _) = self.face_solution(x0, &zero)?;
        Err(Error::NoConvergence {
            iterations: max_iter,
            residual: self.kkt(&x, b),
            tol: eps_y,
        })
    }

    /// Minimizer on the face `{x_G = 0}` and the gradient `λ = (Ax − b)_G`.
    fn face_solution(&self, x0: &[f64], zero: &[bool]) -> Result<(Vec<f64>, Vec<f64>, Vec<usize>)> {
        let gset: Vec<usize> = (0..zero.len()).filter(|&i| zero[i]).collect();
        let mut x = x0.to_vec();
        if gset.is_empty() {
            return Ok((x, Vec::new(), gset));
        }
        let cols = self.inverse_columns(&gset);
        let k = gset.len();
        let s = Matrix::from_fn(k, k, |a, b| cols[b][gset[a]]);
        let rhs = Vector::from_iterator(k, gset.iter().map(|&i| -x0[i]));
        let chol = linalg::cholesky(&s).map_err(|pivot| Error::NotPositiveDefinite { attempts: 0, pivot })?;
        let lambda = chol.solve(&rhs);
        for (b, col) in cols.iter().enumerate() {
            let l = lambda[b];
            for (xi, ci) in x.iter_mut().zip(col.iter()) {
                *xi += l * ci;
            }
        }
        for &i in &gset {
            x[i] = 0.0;
        }
        Ok((x, lambda.as_slice().to_vec(), gset))
    }

    fn inverse_columns(&self, idx: &[usize]) -> Vec<Arc<Vec<f64>>> {
        let mut cache = self.columns.lock().expect("column cache poisoned");
        let missing: Vec<usize> = idx.iter().copied().filter(|i| !cache.contains_key(i)).collect();
        if !missing.is_empty() {
            let m = self.size();
            let mut e = Matrix::zeros(m, missing.len());
            for (k, &i) in missing.iter().enumerate() {
                e[(i, k)] = 1.0;
            }
            let sol = self.chol.solve(&e);
            for (k, &i) in missing.iter().enumerate() {
                cache.insert(i, Arc::new(sol.column(k).as_slice().to_vec()));
            }
        }
        idx.iter().map(|i| Arc::clone(&cache[i])).collect()
    }

    fn kkt(&self, x: &[f64], b: &[f64]) -> f64 {
        let ax = &self.a * Vector::from_column_slice(x);
        ax.iter()
            .zip(b)
            .zip(x)
            .map(|((a, bi), xi)| xi.min(a - bi).abs())
            .fold(0.0, f64::max)
    }
}
