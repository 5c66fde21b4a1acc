//! Tridiagonal matrices and their LU factorization.
//!
//! Every full-order operator of the 1D P1 discretization is tridiagonal, so the
//! full-order solver never touches a dense `n_dofs x n_dofs` matrix.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Square tridiagonal matrix stored by diagonals.
///
/// `lower[i]` is entry `(i + 1, i)`, `upper[i]` is entry `(i, i + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n.saturating_sub(1)],
            diag: vec![0.0; n],
            upper: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n);
        t.diag.iter_mut().for_each(|d| *d = 1.0);
        t
    }

    pub fn from_diagonals(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        let off = n.saturating_sub(1);
        if lower.len() != off {
            return Err(Error::Dimension {
                expected: off,
                got: lower.len(),
            });
        }
        if upper.len() != off {
            return Err(Error::Dimension {
                expected: off,
                got: upper.len(),
            });
        }
        Ok(Self { lower, diag, upper })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        if row == col {
            self.diag[row]
        } else if row == col + 1 {
            self.lower[col]
        } else if col == row + 1 {
            self.upper[row]
        } else {
            0.0
        }
    }

    pub(crate) fn add_entry(&mut self, row: usize, col: usize, value: f64) {
        if row == col {
            self.diag[row] += value;
        } else if row == col + 1 {
            self.lower[col] += value;
        } else if col == row + 1 {
            self.upper[row] += value;
        } else {
            panic!("entry ({row}, {col}) outside the tridiagonal band");
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            lower: self.upper.clone(),
            diag: self.diag.clone(),
            upper: self.lower.clone(),
        }
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        assert_eq!(x.len(), n);
        assert_eq!(y.len(), n);
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    /// Applies the operator to every column of `x`.
    pub fn mul_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(x.nrows(), x.ncols());
        for j in 0..x.ncols() {
            let col = x.column(j);
            let out = self.mul_vec(col.as_slice());
            y.column_mut(j).copy_from_slice(&out);
        }
        y
    }

    /// `xᵀ A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.mul_vec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    /// Linear combination `Σ cᵢ Aᵢ` of operators with equal dimension.
    pub fn combine(terms: &[(f64, &Tridiagonal)]) -> Self {
        let n = terms.first().map(|(_, t)| t.dim()).unwrap_or(0);
        let mut out = Self::zeros(n);
        for (c, t) in terms {
            assert_eq!(t.dim(), n, "operator dimensions differ");
            for (o, v) in out.lower.iter_mut().zip(&t.lower) {
                *o += c * v;
            }
            for (o, v) in out.diag.iter_mut().zip(&t.diag) {
                *o += c * v;
            }
            for (o, v) in out.upper.iter_mut().zip(&t.upper) {
                *o += c * v;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// LU factorization without pivoting (Thomas algorithm).
    ///
    /// Stable for matrices whose symmetric part is positive definite, which
    /// covers every system assembled in this crate.
    pub fn factorize(&self) -> Result<TridiagonalLu> {
        let n = self.dim();
        let mut multipliers = vec![0.0; n.saturating_sub(1)];
        let mut pivots = vec![0.0; n];
        if n == 0 {
            return Ok(TridiagonalLu {
                multipliers,
                pivots,
                upper: Vec::new(),
            });
        }
        pivots[0] = self.diag[0];
        for i in 1..n {
            let prev = pivots[i - 1];
            if prev == 0.0 || !prev.is_finite() {
                return Err(Error::Singular { row: i - 1 });
            }
            let l = self.lower[i - 1] / prev;
            multipliers[i - 1] = l;
            pivots[i] = self.diag[i] - l * self.upper[i - 1];
        }
        if pivots[n - 1] == 0.0 || !pivots[n - 1].is_finite() {
            return Err(Error::Singular { row: n - 1 });
        }
        Ok(TridiagonalLu {
            multipliers,
            pivots,
            upper: self.upper.clone(),
        })
    }

    /// Number of eigenvalues of the symmetric pencil `(self, mass)` strictly
    /// below `shift`, from the inertia of `self - shift * mass`.
    ///
    /// Both operators must be symmetric and `mass` positive definite.
    pub(crate) fn pencil_count_below(&self, mass: &Tridiagonal, shift: f64) -> usize {
        let n = self.dim();
        let mut count = 0;
        let mut d_prev = 1.0;
        for i in 0..n {
            let a = self.diag[i] - shift * mass.diag[i];
            let mut d = if i == 0 {
                a
            } else {
                let b = self.lower[i - 1] - shift * mass.lower[i - 1];
                a - b * b / d_prev
            };
            if d == 0.0 {
                d = -f64::EPSILON * (a.abs() + 1.0);
            }
            if d < 0.0 {
                count += 1;
            }
            d_prev = d;
        }
        count
    }
}

/// LU factors of a [`Tridiagonal`] matrix, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    multipliers: Vec<f64>,
    pivots: Vec<f64>,
    upper: Vec<f64>,
}

impl TridiagonalLu {
    pub fn dim(&self) -> usize {
        self.pivots.len()
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.dim();
        assert_eq!(rhs.len(), n);
        for i in 1..n {
            rhs[i] -= self.multipliers[i - 1] * rhs[i - 1];
        }
        if n == 0 {
            return;
        }
        rhs[n - 1] /= self.pivots[n - 1];
        for i in (0..n - 1).rev() {
            rhs[i] = (rhs[i] - self.upper[i] * rhs[i + 1]) / self.pivots[i];
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solves for every column of `rhs`.
    pub fn solve_mat(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = rhs.clone();
        for j in 0..x.ncols() {
            let mut col = x.column_mut(j);
            self.solve_in_place(col.as_mut_slice());
        }
        x
    }
}
