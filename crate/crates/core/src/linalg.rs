//! Small dense symmetric matrix kernels.
//!
//! Everything here operates on matrices of order at most a few dozen. The
//! eigensolver is cyclic Jacobi, which keeps the eigenvector basis orthonormal
//! to machine precision; PSD projection, the Moore-Penrose pseudoinverse and
//! subspace definiteness tests are all built on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real symmetric matrix stored densely in row-major order.
///
/// Every constructor symmetrizes its input, so `get(i, j) == get(j, i)` holds
/// bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n);
        for (i, d) in diag.iter().enumerate() {
            m.data[i * n + i] = *d;
        }
        m
    }

    /// Builds from a full row-major buffer, replacing it by `(A + Aᵀ) / 2`.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                context: "symmetric matrix buffer".into(),
                expected: n * n,
                got: data.len(),
            });
        }
        let mut m = Self { n, data };
        m.symmetrize();
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "symmetric matrix row".into(),
                    expected: n,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(n, data)
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        let mut m = Self { n, data };
        m.symmetrize();
        m
    }

    /// Outer product `v vᵀ`.
    pub fn outer(v: &[f64]) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j])
    }

    /// Parses row-major text such as `"1 0; 0 0"`. A single row of one value
    /// gives a 1×1 matrix. Asymmetric input is symmetrized.
    pub fn parse(text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = text
            .split(';')
            .map(|row| {
                row.split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|_| Error::Parse(format!("bad matrix entry `{s}`")))
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        Self::from_rows(&rows)
    }

    fn symmetrize(&mut self) {
        let n = self.n;
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = avg;
                self.data[j * n + i] = avg;
            }
        }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Writes both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n.max(1)).map(|c| c.to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius inner product `A • B = Tr(AB)`.
    pub fn dot(&self, other: &SymMatrix) -> f64 {
        debug_assert_eq!(self.n, other.n);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        debug_assert_eq!(self.n, other.n);
        SymMatrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        debug_assert_eq!(self.n, other.n);
        SymMatrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix {
            n: self.n,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn neg(&self) -> SymMatrix {
        self.scale(-1.0)
    }

    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    pub fn quad_form(&self, v: &[f64]) -> f64 {
        dot(v, &self.mat_vec(v))
    }

    /// General (not necessarily symmetric) product, row-major.
    pub fn matmul(&self, other: &SymMatrix) -> Vec<f64> {
        matmul_raw(self.n, &self.data, &other.data)
    }
}

pub(crate) fn matmul_raw(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Eigenvalues in descending order with matching orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Row-major `n×n`; column `k` is the eigenvector for `eigenvalues[k]`.
    pub eigenvectors: Vec<f64>,
}

impl EigenDecomposition {
    pub fn order(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, k: usize) -> Vec<f64> {
        let n = self.order();
        (0..n).map(|i| self.eigenvectors[i * n + k]).collect()
    }

    /// `Q f(Λ) Qᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.order();
        let mapped: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        SymMatrix::from_fn(n, |i, j| {
            (0..n)
                .map(|k| self.eigenvectors[i * n + k] * mapped[k] * self.eigenvectors[j * n + k])
                .sum()
        })
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.reconstruct_with(|l| l)
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition. Rotations continue until the
/// off-diagonal Frobenius norm is at most `1e-12·‖A‖_F`.
pub fn sym_eigen(a: &SymMatrix) -> Result<EigenDecomposition> {
    let n = a.order();
    if n == 0 {
        return Err(Error::InvalidParameter("matrix order must be at least 1".into()));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("matrix entries for eigendecomposition".into()));
    }
    let mut m = a.data.clone();
    let mut v = SymMatrix::identity(n).data;
    let scale = a.frobenius_norm();
    let target = 1e-12 * scale;

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= target || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]));
    let eigenvalues = order.iter().map(|&k| m[k * n + k]).collect();
    let mut eigenvectors = vec![0.0; n * n];
    for (new_col, &old_col) in order.iter().enumerate() {
        for i in 0..n {
            eigenvectors[i * n + new_col] = v[i * n + old_col];
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Projection onto the PSD cone: clip negative eigenvalues to zero.
pub fn psd_project(a: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eigen(a)?;
    Ok(eig.reconstruct_with(|l| l.max(0.0)))
}

/// `Tr([A]_+²) = Σ max{λᵢ, 0}²`.
pub fn trace_psd_part_sq(a: &SymMatrix) -> Result<f64> {
    let eig = sym_eigen(a)?;
    Ok(eig.eigenvalues.iter().map(|l| l.max(0.0).powi(2)).sum())
}

/// Largest eigenvalue.
pub fn max_eigenvalue(a: &SymMatrix) -> Result<f64> {
    Ok(sym_eigen(a)?.eigenvalues[0])
}

/// Relative tolerance used to decide that an eigenvalue is zero.
pub fn rank_tolerance(a: &SymMatrix) -> f64 {
    1e-8 * (1.0 + a.frobenius_norm())
}

/// Moore-Penrose pseudoinverse of a symmetric matrix. Eigenvalues with
/// `|λ| ≤ rank_tol` are treated as zero (default `1e-10·‖A‖_F`).
pub fn pinv(a: &SymMatrix, rank_tol: Option<f64>) -> Result<SymMatrix> {
    let tol = rank_tol.unwrap_or(1e-10 * a.frobenius_norm());
    if tol < 0.0 {
        return Err(Error::InvalidParameter("rank tolerance must be non-negative".into()));
    }
    let eig = sym_eigen(a)?;
    Ok(eig.reconstruct_with(|l| if l.abs() <= tol { 0.0 } else { 1.0 / l }))
}

/// Orthonormal eigenvectors spanning the (numerical) kernel of `a`.
pub fn kernel_basis(a: &SymMatrix) -> Result<Vec<Vec<f64>>> {
    let tol = rank_tolerance(a);
    let eig = sym_eigen(a)?;
    Ok((0..a.order())
        .filter(|&k| eig.eigenvalues[k].abs() <= tol)
        .map(|k| eig.vector(k))
        .collect())
}

/// Modified Gram-Schmidt; vectors whose residual norm falls below `tol` are
/// dropped.
pub fn orthonormalize(vectors: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let nw = norm(&w);
        let scale = norm(v).max(1.0);
        if nw > tol * scale {
            basis.push(w.iter().map(|x| x / nw).collect());
        }
    }
    basis
}

/// Orthonormal basis of `{v ∈ ℝ^dim : ⟨row, v⟩ = 0 for every row}`.
pub fn null_space(rows: &[Vec<f64>], dim: usize) -> Result<Vec<Vec<f64>>> {
    if rows.is_empty() {
        return Ok((0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect());
    }
    for r in rows {
        crate::error::check_dim("null space row", dim, r.len())?;
    }
    let gram = SymMatrix::from_fn(dim, |i, j| rows.iter().map(|r| r[i] * r[j]).sum());
    let eig = sym_eigen(&gram)?;
    let tol = 1e-10 * (1.0 + eig.eigenvalues[0].abs());
    Ok((0..dim)
        .filter(|&k| eig.eigenvalues[k].abs() <= tol)
        .map(|k| eig.vector(k))
        .collect())
}

/// Outcome of a definiteness test on a subspace.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubspaceDefiniteness {
    /// Smallest eigenvalue of `BᵀMB`; `+∞` when the subspace is trivial.
    pub min_eigenvalue: f64,
    /// Unit vector (in the ambient space) achieving `min_eigenvalue`.
    pub min_direction: Option<Vec<f64>>,
    pub verdict: bool,
    pub reduced_dim: usize,
    /// Number of basis vectors dropped as linearly dependent.
    pub dropped: usize,
}

pub const DEFAULT_PD_TOL: f64 = 1e-9;

/// Positive definiteness of `m` restricted to `span(basis)`.
pub fn pd_on_subspace(m: &SymMatrix, basis: &[Vec<f64>], tol: f64) -> Result<SubspaceDefiniteness> {
    let n = m.order();
    for b in basis {
        crate::error::check_dim("subspace basis vector", n, b.len())?;
    }
    let ortho = orthonormalize(basis, 1e-10);
    let k = ortho.len();
    if k == 0 {
        return Ok(SubspaceDefiniteness {
            min_eigenvalue: f64::INFINITY,
            min_direction: None,
            verdict: true,
            reduced_dim: 0,
            dropped: basis.len(),
        });
    }
    let mb: Vec<Vec<f64>> = ortho.iter().map(|b| m.mat_vec(b)).collect();
    let reduced = SymMatrix::from_fn(k, |i, j| dot(&ortho[i], &mb[j]));
    let eig = sym_eigen(&reduced)?;
    let min_idx = k - 1;
    let coeffs = eig.vector(min_idx);
    let mut dir = vec![0.0; n];
    for (c, b) in coeffs.iter().zip(&ortho) {
        for (d, bi) in dir.iter_mut().zip(b) {
            *d += c * bi;
        }
    }
    let min_eigenvalue = eig.eigenvalues[min_idx];
    Ok(SubspaceDefiniteness {
        min_eigenvalue,
        min_direction: Some(dir),
        verdict: min_eigenvalue > tol,
        reduced_dim: k,
        dropped: basis.len() - k,
    })
}
