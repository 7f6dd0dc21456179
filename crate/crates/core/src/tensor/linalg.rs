use faer::linalg::matmul::matmul;
use faer::{Accum, MatMut, MatRef, Par, Side};
use serde::{Deserialize, Serialize};

use super::{DenseTensor, C64, ONE, ZERO};
use crate::error::{Error, Result};

/// Bond-dimension cap and discarded-weight budget for SVD truncation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationSpec {
    pub max_rank: usize,
    /// Largest allowed discarded weight, as a fraction of the total squared norm.
    pub discard_tol: f64,
}

impl TruncationSpec {
    pub fn new(max_rank: usize, discard_tol: f64) -> Result<Self> {
        let spec = Self {
            max_rank,
            discard_tol,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Keep everything.
    pub fn lossless() -> Self {
        Self {
            max_rank: usize::MAX,
            discard_tol: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_rank < 1 {
            return Err(Error::Validation("max_rank must be at least 1".into()));
        }
        if !(self.discard_tol >= 0.0) {
            return Err(Error::Validation(format!(
                "discard_tol must be non-negative, got {}",
                self.discard_tol
            )));
        }
        Ok(())
    }
}

impl Default for TruncationSpec {
    fn default() -> Self {
        Self {
            max_rank: 64,
            discard_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SVDResult {
    /// `m × r` with orthonormal columns.
    pub left_isometry: DenseTensor,
    pub singular_values: Vec<f64>,
    /// `r × n` with orthonormal rows.
    pub right_isometry: DenseTensor,
    pub discarded_weight: f64,
}

/// Row-major `out = a · b` for `a: m×k`, `b: k×n`.
pub fn matmul_into(out: &mut [C64], a: &[C64], b: &[C64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(out.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.fill(ZERO);
        return;
    }
    let lhs = MatRef::from_row_major_slice(a, m, k);
    let rhs = MatRef::from_row_major_slice(b, k, n);
    let dst = MatMut::from_row_major_slice_mut(out, m, n);
    matmul(dst, Accum::Replace, lhs, rhs, ONE, Par::Seq);
}

fn view(m: &DenseTensor) -> MatRef<'_, C64> {
    MatRef::from_row_major_slice(m.data(), m.nrows(), m.ncols())
}

fn to_dense(m: MatRef<'_, C64>) -> DenseTensor {
    let (r, c) = (m.nrows(), m.ncols());
    let mut data = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            data.push(m[(i, j)]);
        }
    }
    DenseTensor::matrix(r, c, data).expect("faer matrices have positive extents here")
}

/// Truncated SVD `m ≈ U · diag(S) · V`.
///
/// Keeps the smallest rank whose discarded weight fits `discard_tol`, capped at
/// `max_rank`, and never fewer than one singular value. Singular vectors for
/// degenerate singular values are not unique.
pub fn svd_truncate(m: &DenseTensor, spec: &TruncationSpec) -> Result<SVDResult> {
    m.require_matrix("svd_truncate")?;
    spec.validate()?;
    let (rows, cols) = (m.nrows(), m.ncols());
    let svd = view(m)
        .thin_svd()
        .map_err(|e| Error::Numeric(format!("SVD did not converge: {e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().map(|x| x.re).collect();
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("SVD produced non-finite singular values".into()));
    }
    let total: f64 = s.iter().map(|x| x * x).sum();

    // tail[r] = sum of squared singular values with index >= r
    let mut tail = vec![0.0; s.len() + 1];
    for r in (0..s.len()).rev() {
        tail[r] = tail[r + 1] + s[r] * s[r];
    }
    let mut keep = s.len();
    if total > 0.0 {
        for r in 1..=s.len() {
            if tail[r] / total <= spec.discard_tol {
                keep = r;
                break;
            }
        }
    } else {
        keep = 1;
    }
    keep = keep.min(spec.max_rank).max(1);
    let discarded_weight = if total > 0.0 { tail[keep] / total } else { 0.0 };

    let u = svd.U();
    let v = svd.V();
    let mut left = Vec::with_capacity(rows * keep);
    for i in 0..rows {
        for j in 0..keep {
            left.push(u[(i, j)]);
        }
    }
    let mut right = Vec::with_capacity(keep * cols);
    for i in 0..keep {
        for j in 0..cols {
            right.push(v[(j, i)].conj());
        }
    }
    Ok(SVDResult {
        left_isometry: DenseTensor::matrix(rows, keep, left)?,
        singular_values: s[..keep].to_vec(),
        right_isometry: DenseTensor::matrix(keep, cols, right)?,
        discarded_weight,
    })
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct Eigh {
    pub values: Vec<f64>,
    /// Eigenvectors stored as columns.
    pub vectors: DenseTensor,
}

pub fn eigh(h: &DenseTensor) -> Result<Eigh> {
    h.require_square("eigh")?;
    let evd = view(h)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numeric(format!("eigensolver failed: {e:?}")))?;
    let values = evd.S().column_vector().iter().map(|x| x.re).collect();
    Ok(Eigh {
        values,
        vectors: to_dense(evd.U()),
    })
}

fn hermitian_tol(h: &DenseTensor) -> f64 {
    let scale = h.data().iter().map(|x| x.norm()).fold(1.0, f64::max);
    1e-12 * scale
}

/// `exp(-i·h·t)` for Hermitian `h`, by eigendecomposition.
pub fn hermitian_expm(h: &DenseTensor, t: f64) -> Result<DenseTensor> {
    h.require_square("hermitian_expm")?;
    let err = h.hermiticity_error()?;
    if err > hermitian_tol(h) {
        return Err(Error::Validation(format!(
            "generator is not Hermitian (deviation {err:.3e})"
        )));
    }
    let n = h.nrows();
    let e = eigh(h)?;
    let v = &e.vectors;
    let phases: Vec<C64> = e.values.iter().map(|&l| C64::from_polar(1.0, -l * t)).collect();
    let mut vd = v.clone();
    for i in 0..n {
        for j in 0..n {
            vd.data_mut()[i * n + j] *= phases[j];
        }
    }
    vd.matmul(&v.adjoint()?)
}

/// Thin QR: `m = Q · R` with `Q` having orthonormal columns.
pub fn left_qr(m: &DenseTensor) -> Result<(DenseTensor, DenseTensor)> {
    m.require_matrix("qr")?;
    let qr = view(m).qr();
    let q = to_dense(qr.compute_thin_Q().as_ref());
    let r = to_dense(qr.thin_R());
    Ok((q, r))
}

/// Thin LQ: `m = L · Q` with `Q` having orthonormal rows.
pub fn right_lq(m: &DenseTensor) -> Result<(DenseTensor, DenseTensor)> {
    let (q, r) = left_qr(&m.adjoint()?)?;
    Ok((r.adjoint()?, q.adjoint()?))
}
