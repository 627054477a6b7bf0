//! Small dense real-matrix kernel.
//!
//! Everything here targets the low-dimensional matrices of state-space risk
//! analysis (a handful of states, not thousands): spectral norms via cyclic
//! Jacobi iteration on the Gram matrix, discrete Lyapunov solutions via the
//! vectorized linear system with a squaring fallback for larger sizes, and a
//! reachability rank test with a scale-invariant singular value threshold.
//!
//! No external solver is used; all routines are self-contained `f64` code.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors produced by the matrix kernel.
#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("matrix is not contractive: spectral norm {norm} >= 1")]
    NotContractive { norm: f64 },
    #[error("linear system is singular")]
    Singular,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
}

/// Dense real matrix, row-major.
///
/// Invariants enforced at construction: both dimensions are at least 1 and
/// every entry is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Build a matrix from row-major entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::InvalidInput(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(LinalgError::InvalidInput(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(LinalgError::InvalidInput(format!(
                "matrix entries must be finite, got {bad}"
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Build from nested row slices.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        if rows.is_empty() {
            return Err(LinalgError::InvalidInput("no rows given".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::InvalidInput("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// All-zero matrix. Panics if a dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Identity matrix of size `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Row-major entries.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.get(i, j);
            }
        }
        out
    }

    /// Matrix product. Panics on inner-dimension mismatch.
    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, other.rows,
            "matrix product dimension mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += aik * other.get(k, j);
                }
            }
        }
        out
    }

    /// Matrix-vector product. Panics on dimension mismatch.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// Trace. Panics if not square.
    pub fn trace(&self) -> f64 {
        assert!(self.is_square(), "trace of a non-square matrix");
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self.get(i, j) - self.get(j, i)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Largest singular value (the maximum singular value norm).
    ///
    /// Computed as the square root of the largest eigenvalue of the smaller
    /// Gram matrix, via cyclic Jacobi iteration.
    pub fn spectral_norm(&self) -> f64 {
        let gram = if self.rows <= self.cols {
            self.mul(&self.transpose())
        } else {
            self.transpose().mul(self)
        };
        let eigs = jacobi_eigenvalues(&gram);
        eigs.into_iter().fold(0.0_f64, f64::max).max(0.0).sqrt()
    }

    /// Eigenvalues of a symmetric matrix, descending. Panics if not square.
    pub fn symmetric_eigenvalues(&self) -> Vec<f64> {
        assert!(self.is_square(), "eigenvalues of a non-square matrix");
        let mut eigs = jacobi_eigenvalues(self);
        eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        eigs
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
///
/// Sweeps until the off-diagonal Frobenius mass drops below `1e-12` relative
/// to the matrix scale. The input is symmetrized first, so mild asymmetry from
/// accumulated roundoff is tolerated.
fn jacobi_eigenvalues(m: &Matrix) -> Vec<f64> {
    let n = m.rows();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = 0.5 * (m.get(i, j) + m.get(j, i));
        }
    }
    let scale = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    let tol = 1e-12 * scale;

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}

/// Kronecker product `x ⊗ y`.
pub fn kron(x: &Matrix, y: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(x.rows() * y.rows(), x.cols() * y.cols());
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let xij = x.get(i, j);
            if xij == 0.0 {
                continue;
            }
            for k in 0..y.rows() {
                for l in 0..y.cols() {
                    out.set(i * y.rows() + k, j * y.cols() + l, xij * y.get(k, l));
                }
            }
        }
    }
    out
}

/// `Tr(a b)` without forming the product. Panics unless `a` is m×n and `b` is n×m.
pub fn trace_product(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.rows(), b.cols(), "trace_product dimension mismatch");
    assert_eq!(a.cols(), b.rows(), "trace_product dimension mismatch");
    let mut tr = 0.0;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            tr += a.get(i, j) * b.get(j, i);
        }
    }
    tr
}

/// Solve the discrete Lyapunov equation `a P aᵀ − P + q = 0`.
///
/// Requires `‖a‖ < 1`; the solution is the series `Σ_{k≥0} a^k q (aᵀ)^k`.
/// Dimensions up to 20 use the exact vectorized linear solve on
/// `I − a ⊗ a`; larger systems use the squaring iteration
/// (see [`solve_discrete_lyapunov_doubling`]). The result is symmetrized.
pub fn solve_discrete_lyapunov(a: &Matrix, q: &Matrix) -> Result<Matrix, LinalgError> {
    let n = check_lyapunov_inputs(a, q)?;
    if n <= 20 {
        let ident = Matrix::identity(n * n);
        let system = ident.sub(&kron(a, a));
        let solution = linear_solve(&system, q.data())?;
        let p = Matrix::new(n, n, solution)?;
        Ok(symmetrize(&p))
    } else {
        solve_discrete_lyapunov_doubling(a, q)
    }
}

/// Squaring (doubling) iteration for the discrete Lyapunov equation:
/// `P_{k+1} = P_k + A_k P_k A_kᵀ`, `A_{k+1} = A_k²`.
///
/// Converges quadratically for `‖a‖ < 1`; exposed separately so large systems
/// can opt into it directly.
pub fn solve_discrete_lyapunov_doubling(a: &Matrix, q: &Matrix) -> Result<Matrix, LinalgError> {
    check_lyapunov_inputs(a, q)?;
    let mut p = q.clone();
    let mut ak = a.clone();
    for _ in 0..128 {
        let increment = ak.mul(&p).mul(&ak.transpose());
        p = p.add(&increment);
        if increment.max_abs() <= 1e-16 * p.max_abs().max(1.0) {
            break;
        }
        ak = ak.mul(&ak);
    }
    Ok(symmetrize(&p))
}

fn check_lyapunov_inputs(a: &Matrix, q: &Matrix) -> Result<usize, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::InvalidInput(format!(
            "lyapunov: a must be square, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if q.rows() != a.rows() || q.cols() != a.cols() {
        return Err(LinalgError::InvalidInput(format!(
            "lyapunov: q must be {0}x{0}, got {1}x{2}",
            a.rows(),
            q.rows(),
            q.cols()
        )));
    }
    let norm = a.spectral_norm();
    if norm >= 1.0 {
        return Err(LinalgError::NotContractive { norm });
    }
    Ok(a.rows())
}

fn symmetrize(m: &Matrix) -> Matrix {
    m.add(&m.transpose()).scale(0.5)
}

/// Rank of the reachability matrix `[e, a·e, …, a^{n-1}·e]`.
///
/// Singular values below `1e-10` times the largest are treated as zero, so
/// the test is invariant to overall scaling. `(a, e)` is reachable iff the
/// result equals `a.rows()`.
pub fn reachability_rank(a: &Matrix, e: &Matrix) -> Result<usize, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::InvalidInput(format!(
            "reachability: a must be square, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if e.rows() != a.rows() {
        return Err(LinalgError::InvalidInput(format!(
            "reachability: e must have {} rows, got {}",
            a.rows(),
            e.rows()
        )));
    }
    let n = a.rows();
    let mut blocks = Vec::with_capacity(n);
    let mut block = e.clone();
    for _ in 0..n {
        blocks.push(block.clone());
        block = a.mul(&block);
    }
    let mut ctrl = Matrix::zeros(n, n * e.cols());
    for (k, b) in blocks.iter().enumerate() {
        for i in 0..n {
            for j in 0..e.cols() {
                ctrl.set(i, k * e.cols() + j, b.get(i, j));
            }
        }
    }
    // Singular values of the wide matrix via its n×n Gram matrix.
    let gram = ctrl.mul(&ctrl.transpose());
    let mut svals: Vec<f64> = gram
        .symmetric_eigenvalues()
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    svals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let smax = svals[0];
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(svals.iter().filter(|&&s| s > 1e-10 * smax).count())
}

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
pub fn linear_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if !a.is_square() || a.rows() != b.len() {
        return Err(LinalgError::InvalidInput(format!(
            "linear_solve: need square a matching rhs, got {}x{} and len {}",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    let n = a.rows();
    let mut m = a.data.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let (pivot_row, pivot_val) = (col..n)
            .map(|r| (r, m[r * n + col].abs()))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if pivot_val < 1e-300 {
            return Err(LinalgError::Singular);
        }
        if pivot_row != col {
            for j in 0..n {
                m.swap(col * n + j, pivot_row * n + j);
            }
            x.swap(col, pivot_row);
        }
        let inv = 1.0 / m[col * n + col];
        for r in (col + 1)..n {
            let f = m[r * n + col] * inv;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                m[r * n + j] -= f * m[col * n + j];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        x[col] /= m[col * n + col];
        for r in 0..col {
            x[r] -= m[r * n + col] * x[col];
        }
    }
    Ok(x)
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(m: &Matrix) -> Result<Matrix, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::InvalidInput(
            "cholesky requires a square matrix".into(),
        ));
    }
    let n = m.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = m.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(LinalgError::NotPositiveDefinite);
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Euclidean norm of a vector.
pub fn vec_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
