//! Dense complex tensors in row-major storage.
//!
//! Every numeric object in the crate (MPS site tensors, MPO tensors, gates,
//! density matrices) is a [`DenseTensor`]. Contractions are lowered to a
//! permutation followed by a single GEMM.

mod linalg;

pub use linalg::{
    eigh, hermitian_expm, left_qr, matmul_into, right_lq, svd_truncate, Eigh, SVDResult,
    TruncationSpec,
};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::Shape(format!("zero extent in shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::new(shape.to_vec(), vec![ZERO; n]).expect("extents must be positive")
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = ONE;
        }
        t
    }

    pub fn scalar(z: C64) -> Self {
        Self {
            shape: vec![1],
            data: vec![z],
        }
    }

    /// Matrix from a row-major slice of complex entries.
    pub fn matrix(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::matrix(rows, cols, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn diag(values: &[C64]) -> Self {
        let n = values.len();
        let mut t = Self::zeros(&[n, n]);
        for (i, v) in values.iter().enumerate() {
            t.data[i * n + i] = *v;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    pub fn nrows(&self) -> usize {
        self.shape[0]
    }

    pub fn ncols(&self) -> usize {
        self.shape[1]
    }

    pub fn get(&self, idx: &[usize]) -> C64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: C64) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &e)| acc * e + i)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    pub fn into_shape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data)
    }

    /// Axis permutation: output axis `k` is input axis `perm[k]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if perm.len() != r || perm.iter().any(|&p| p >= r || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::Shape(format!(
                "invalid permutation {perm:?} for rank {r}"
            )));
        }
        if perm.iter().enumerate().all(|(k, &p)| k == p) {
            return Ok(self.clone());
        }
        let in_strides = strides(&self.shape);
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let mut out = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; r];
        let mut src = 0usize;
        let inner = r - 1;
        let inner_len = out_shape[inner];
        let inner_stride = src_strides[inner];
        loop {
            for k in 0..inner_len {
                out.push(self.data[src + k * inner_stride]);
            }
            // advance the outer multi-index
            let mut ax = inner;
            loop {
                if ax == 0 {
                    return Self::new(out_shape, out);
                }
                ax -= 1;
                idx[ax] += 1;
                src += src_strides[ax];
                if idx[ax] < out_shape[ax] {
                    break;
                }
                src -= src_strides[ax] * idx[ax];
                idx[ax] = 0;
            }
        }
    }

    pub fn scale(&self, a: C64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| x * a).collect(),
        }
    }

    pub fn scale_real(&self, a: f64) -> Self {
        self.scale(C64::new(a, 0.0))
    }

    pub fn conj(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| x.conj()).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// In-place `self += a * other`.
    pub fn axpy(&mut self, a: C64, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn adjoint(&self) -> Result<Self> {
        self.require_matrix("adjoint")?;
        Ok(self.permute(&[1, 0])?.conj())
    }

    pub fn transpose(&self) -> Result<Self> {
        self.require_matrix("transpose")?;
        self.permute(&[1, 0])
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.require_matrix("matmul")?;
        other.require_matrix("matmul")?;
        contract(self, other, &[(1, 0)])
    }

    pub fn trace(&self) -> Result<C64> {
        self.require_square("trace")?;
        let n = self.nrows();
        Ok((0..n).map(|i| self.data[i * n + i]).sum())
    }

    pub fn kron(&self, other: &Self) -> Result<Self> {
        self.require_matrix("kron")?;
        other.require_matrix("kron")?;
        let (m, n) = (self.nrows(), self.ncols());
        let (p, q) = (other.nrows(), other.ncols());
        let mut out = Self::zeros(&[m * p, n * q]);
        for i in 0..m {
            for j in 0..n {
                let a = self.data[i * n + j];
                if a == ZERO {
                    continue;
                }
                for k in 0..p {
                    for l in 0..q {
                        out.data[(i * p + k) * (n * q) + j * q + l] = a * other.data[k * q + l];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> Result<f64> {
        self.require_square("hermiticity check")?;
        let n = self.nrows();
        let mut err = 0.0f64;
        for i in 0..n {
            for j in i..n {
                let d = (self.data[i * n + j] - self.data[j * n + i].conj()).norm();
                err = err.max(d);
            }
        }
        Ok(err)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error().is_ok_and(|e| e <= tol)
    }

    pub(crate) fn require_matrix(&self, what: &str) -> Result<()> {
        if self.is_matrix() {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what} needs a matrix, got shape {:?}",
                self.shape
            )))
        }
    }

    pub(crate) fn require_square(&self, what: &str) -> Result<()> {
        self.require_matrix(what)?;
        if self.nrows() == self.ncols() {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what} needs a square matrix, got shape {:?}",
                self.shape
            )))
        }
    }
}

/// Contract `a` and `b` over the paired axes `(axis of a, axis of b)`.
///
/// Free axes of `a` come first in the result, then free axes of `b`, each in
/// their original order. A full contraction returns a rank-1 tensor of extent 1.
pub fn contract(a: &DenseTensor, b: &DenseTensor, axis_pairs: &[(usize, usize)]) -> Result<DenseTensor> {
    let (ra, rb) = (a.rank(), b.rank());
    let mut used_a = vec![false; ra];
    let mut used_b = vec![false; rb];
    for &(ia, ib) in axis_pairs {
        if ia >= ra || ib >= rb {
            return Err(Error::Dimension(format!(
                "axis pair ({ia}, {ib}) out of range for ranks ({ra}, {rb})"
            )));
        }
        if std::mem::replace(&mut used_a[ia], true) || std::mem::replace(&mut used_b[ib], true) {
            return Err(Error::Dimension(format!(
                "axis repeated in pairing ({ia}, {ib})"
            )));
        }
        if a.shape[ia] != b.shape[ib] {
            return Err(Error::Dimension(format!(
                "axis {ia} of a has extent {} but axis {ib} of b has extent {}",
                a.shape[ia], b.shape[ib]
            )));
        }
    }
    let free_a: Vec<usize> = (0..ra).filter(|&k| !used_a[k]).collect();
    let free_b: Vec<usize> = (0..rb).filter(|&k| !used_b[k]).collect();

    let perm_a: Vec<usize> = free_a
        .iter()
        .copied()
        .chain(axis_pairs.iter().map(|p| p.0))
        .collect();
    let perm_b: Vec<usize> = axis_pairs
        .iter()
        .map(|p| p.1)
        .chain(free_b.iter().copied())
        .collect();
    let m: usize = free_a.iter().map(|&k| a.shape[k]).product();
    let n: usize = free_b.iter().map(|&k| b.shape[k]).product();
    let k: usize = axis_pairs.iter().map(|p| a.shape[p.0]).product();

    let pa = a.permute(&perm_a)?;
    let pb = b.permute(&perm_b)?;
    let mut out = vec![ZERO; m * n];
    matmul_into(&mut out, &pa.data, &pb.data, m, k, n);

    let mut shape: Vec<usize> = free_a
        .iter()
        .map(|&ax| a.shape[ax])
        .chain(free_b.iter().map(|&ax| b.shape[ax]))
        .collect();
    if shape.is_empty() {
        shape.push(1);
    }
    DenseTensor::new(shape, out)
}
