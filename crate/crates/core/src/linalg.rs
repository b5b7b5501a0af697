//! Small dense linear algebra: Householder QR, application of the orthogonal
//! factor, and upper-triangular back substitution.
//!
//! Every matrix the tracker touches is at most a handful of rows and columns,
//! so [`Mat`] is a plain row-major `Vec<f64>` with no blocking.

use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

/// Relative threshold (against the largest diagonal magnitude) below which a
/// triangular pivot is treated as zero.
pub const SINGULARITY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },
    #[error("triangular matrix is singular at diagonal index {index}")]
    SingularTriangular { index: usize },
    #[error("QR requires rows >= cols, got {rows}x{cols}")]
    Underdetermined { rows: usize, cols: usize },
}

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from equal-length rows.
    ///
    /// Panics if `rows` is empty or ragged.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        assert!(!rows.is_empty(), "need at least one row");
        let cols = rows[0].as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        let m = Self { rows: rows.len(), cols, data };
        assert!(m.cols >= 1);
        m
    }

    pub fn column(values: &[f64]) -> Self {
        assert!(!values.is_empty());
        Self { rows: values.len(), cols: 1, data: values.to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Mat) -> Result<Mat, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::DimensionMismatch {
                expected: format!("{} rows", self.cols),
                got: format!("{} rows", rhs.rows),
            });
        }
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, rhs: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    /// Copies rows `r0..r0+nr` and columns `c0..c0+nc`.
    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Mat {
        assert!(r0 + nr <= self.rows && c0 + nc <= self.cols, "block out of range");
        let mut out = Mat::zeros(nr, nc);
        for i in 0..nr {
            for j in 0..nc {
                out[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        out
    }

    /// Stacks `self` on top of `below`.
    pub fn vstack(&self, below: &Mat) -> Result<Mat, LinalgError> {
        if self.cols != below.cols {
            return Err(LinalgError::DimensionMismatch {
                expected: format!("{} cols", self.cols),
                got: format!("{} cols", below.cols),
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&below.data);
        Ok(Mat { rows: self.rows + below.rows, cols: self.cols, data })
    }

    /// Places `right` to the right of `self`.
    pub fn hstack(&self, right: &Mat) -> Result<Mat, LinalgError> {
        if self.rows != right.rows {
            return Err(LinalgError::DimensionMismatch {
                expected: format!("{} rows", self.rows),
                got: format!("{} rows", right.rows),
            });
        }
        let mut out = Mat::zeros(self.rows, self.cols + right.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self[(i, j)];
            }
            for j in 0..right.cols {
                out[(i, self.cols + j)] = right[(i, j)];
            }
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows).map(|i| (0..self.cols).map(|j| self[(i, j)].abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn column_norm(&self, j: usize) -> f64 {
        (0..self.rows).map(|i| self[(i, j)] * self[(i, j)]).sum::<f64>().sqrt()
    }

    /// Squared Frobenius norm.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| format!("{:>12.6e}", self[(i, j)])).collect();
            writeln!(f, "  {}", row.join(", "))?;
        }
        write!(f, "]")
    }
}

/// A single Householder reflector `H = I - beta * v v^T` acting on rows
/// `offset..offset + v.len()`.
#[derive(Debug, Clone, PartialEq)]
struct Reflector {
    offset: usize,
    v: Vec<f64>,
    beta: f64,
}

impl Reflector {
    fn apply(&self, m: &mut Mat) {
        if self.beta == 0.0 {
            return;
        }
        for j in 0..m.cols {
            let mut dot = 0.0;
            for (t, vi) in self.v.iter().enumerate() {
                dot += vi * m[(self.offset + t, j)];
            }
            let scale = self.beta * dot;
            for (t, vi) in self.v.iter().enumerate() {
                m[(self.offset + t, j)] -= scale * vi;
            }
        }
    }
}

/// Householder QR factor `A = Q [R; 0]` with `Q` kept as its reflectors.
#[derive(Debug, Clone, PartialEq)]
pub struct QrFactor {
    rows: usize,
    reflectors: Vec<Reflector>,
    r: Mat,
}

impl QrFactor {
    /// Number of rows of the factored matrix (order of `Q`).
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// The full `rows x cols` upper trapezoidal factor, zeros written below
    /// the diagonal.
    pub fn r_full(&self) -> &Mat {
        &self.r
    }

    /// The leading square upper triangular block of `R`.
    pub fn r(&self) -> Mat {
        let n = self.r.cols();
        self.r.block(0, 0, n, n)
    }

    /// Explicit `Q`.
    pub fn q(&self) -> Mat {
        let mut q = Mat::identity(self.rows);
        // Q = H_1 H_2 ... H_n, so apply in reverse to the identity.
        for h in self.reflectors.iter().rev() {
            h.apply(&mut q);
        }
        q
    }
}

/// Householder QR without pivoting.
///
/// Rank deficiency is not an error: it shows up as a (near-)zero diagonal of
/// `R` and callers detect it at the triangular solve.
pub fn householder_qr(a: &Mat) -> Result<QrFactor, LinalgError> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(LinalgError::Underdetermined { rows: m, cols: n });
    }
    let mut work = a.clone();
    let mut reflectors = Vec::with_capacity(n);
    // A trailing 1-row column has nothing below the diagonal to annihilate.
    for k in 0..n.min(m - 1) {
        let norm = (k..m).map(|i| work[(i, k)] * work[(i, k)]).sum::<f64>().sqrt();
        if norm == 0.0 {
            reflectors.push(Reflector { offset: k, v: vec![0.0; m - k], beta: 0.0 });
            continue;
        }
        let x0 = work[(k, k)];
        // Sign chosen to avoid cancellation in v[0].
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| work[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm_sq: f64 = v.iter().map(|x| x * x).sum();
        let beta = if vnorm_sq == 0.0 { 0.0 } else { 2.0 / vnorm_sq };
        let h = Reflector { offset: k, v, beta };
        h.apply(&mut work);
        work[(k, k)] = alpha;
        for i in (k + 1)..m {
            work[(i, k)] = 0.0;
        }
        reflectors.push(h);
    }
    Ok(QrFactor { rows: m, reflectors, r: work })
}

/// Returns `Q^T v`.
pub fn apply_qt(f: &QrFactor, v: &Mat) -> Result<Mat, LinalgError> {
    if v.rows() != f.rows {
        return Err(LinalgError::DimensionMismatch {
            expected: format!("{} rows", f.rows),
            got: format!("{} rows", v.rows()),
        });
    }
    let mut out = v.clone();
    for h in &f.reflectors {
        h.apply(&mut out);
    }
    Ok(out)
}

/// Back substitution for `r x = rhs` with `r` square upper triangular.
pub fn solve_upper_triangular(r: &Mat, rhs: &Mat) -> Result<Mat, LinalgError> {
    let n = r.rows();
    if r.cols() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: format!("square matrix ({n}x{n})"),
            got: format!("{}x{}", n, r.cols()),
        });
    }
    if rhs.rows() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: format!("{n} rows"),
            got: format!("{} rows", rhs.rows()),
        });
    }
    let max_diag = (0..n).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    for i in 0..n {
        if !(r[(i, i)].abs() > SINGULARITY_TOL * max_diag) {
            return Err(LinalgError::SingularTriangular { index: i });
        }
    }
    let mut x = rhs.clone();
    for c in 0..rhs.cols() {
        for i in (0..n).rev() {
            let mut acc = x[(i, c)];
            for j in (i + 1)..n {
                acc -= r[(i, j)] * x[(j, c)];
            }
            x[(i, c)] = acc / r[(i, i)];
        }
    }
    Ok(x)
}

/// Singular values `(largest, smallest)` of a 2x2 matrix, closed form.
pub fn singular_values_2x2(m: &Mat) -> (f64, f64) {
    assert_eq!((m.rows(), m.cols()), (2, 2));
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    // sigma_max/min = (sqrt((a+d)^2 + (b-c)^2) +/- sqrt((a-d)^2 + (b+c)^2)) / 2
    let p = ((a + d).powi(2) + (b - c).powi(2)).sqrt();
    let q = ((a - d).powi(2) + (b + c).powi(2)).sqrt();
    ((p + q) / 2.0, ((p - q) / 2.0).abs())
}

/// 2-norm condition number of a 2x2 matrix; infinite when singular.
pub fn condition_2x2(m: &Mat) -> f64 {
    let (hi, lo) = singular_values_2x2(m);
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Operation tally for the optional per-step cost diagnostic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct OpCount {
    pub flops: u64,
    pub sqrts: u64,
}

impl std::ops::AddAssign for OpCount {
    fn add_assign(&mut self, rhs: Self) {
        self.flops += rhs.flops;
        self.sqrts += rhs.sqrts;
    }
}

/// Nominal cost of [`householder_qr`] on an `m x n` input, counting each
/// multiply and each add as one flop.
pub fn householder_qr_cost(m: usize, n: usize) -> OpCount {
    let mut c = OpCount::default();
    for k in 0..n.min(m - 1) {
        let len = (m - k) as u64;
        // column norm, v and beta
        c.flops += 2 * len + 1 + 2 * len + 1;
        c.sqrts += 1;
        // reflector applied to the remaining columns
        c.flops += (n - k - 1) as u64 * 4 * len;
    }
    c
}

/// Nominal cost of applying `n` reflectors of an `m`-row factor to `cols`
/// right-hand columns.
pub fn apply_qt_cost(m: usize, n: usize, cols: usize) -> OpCount {
    let flops = (0..n.min(m - 1)).map(|k| 4 * (m - k) as u64 * cols as u64).sum();
    OpCount { flops, sqrts: 0 }
}

/// Nominal cost of an `n x n` triangular solve with `cols` right-hand sides.
pub fn triangular_solve_cost(n: usize, cols: usize) -> OpCount {
    OpCount { flops: (n * n) as u64 * cols as u64, sqrts: 0 }
}
