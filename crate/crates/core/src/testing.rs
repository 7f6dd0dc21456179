//! Shared fixtures for unit tests.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{DenseTensor, C64};

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> DenseTensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    DenseTensor::new(shape.to_vec(), data).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseTensor {
    random_tensor(rng, &[rows, cols])
}

pub fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> DenseTensor {
    let m = random_matrix(rng, n, n);
    m.add(&m.adjoint().unwrap()).unwrap().scale_real(0.5)
}

/// Random MPS built from a random dense vector (exact, no truncation).
pub fn random_mps(rng: &mut ChaCha8Rng, dims: &[usize]) -> crate::mps::MPSState {
    use crate::tensor::{svd_truncate, TruncationSpec};
    let total: usize = dims.iter().product();
    let v = random_tensor(rng, &[total]);
    let norm = v.norm();
    let mut rest = v.scale_real(1.0 / norm).into_shape(&[1, total]).unwrap();
    let mut tensors = Vec::new();
    for (k, &d) in dims.iter().enumerate() {
        let chi = rest.nrows();
        let remaining = rest.len() / (chi * d);
        if k + 1 == dims.len() {
            tensors.push(rest.into_shape(&[chi, d, 1]).unwrap());
            break;
        }
        let m = rest.reshape(&[chi * d, remaining]).unwrap();
        let svd = svd_truncate(&m, &TruncationSpec::lossless()).unwrap();
        let r = svd.singular_values.len();
        tensors.push(svd.left_isometry.into_shape(&[chi, d, r]).unwrap());
        let s: Vec<C64> = svd.singular_values.iter().map(|&x| C64::new(x, 0.0)).collect();
        rest = DenseTensor::diag(&s).matmul(&svd.right_isometry).unwrap();
    }
    let n = dims.len();
    crate::mps::MPSState::from_tensors(tensors, n - 1, 0.0).unwrap()
}

/// Apply a matrix on sites (site, site+1) of a dense vector.
pub fn dense_apply_pair(v: &[C64], dims: &[usize], site: usize, g: &DenseTensor, out_dims: (usize, usize)) -> (Vec<C64>, Vec<usize>) {
    let left: usize = dims[..site].iter().product();
    let pair = dims[site] * dims[site + 1];
    let right: usize = dims[site + 2..].iter().product();
    let mut out = vec![crate::tensor::ZERO; v.len()];
    for l in 0..left {
        for r in 0..right {
            for o in 0..pair {
                let mut acc = crate::tensor::ZERO;
                for i in 0..pair {
                    acc += g.get(&[o, i]) * v[(l * pair + i) * right + r];
                }
                out[(l * pair + o) * right + r] = acc;
            }
        }
    }
    let mut nd = dims.to_vec();
    nd[site] = out_dims.0;
    nd[site + 1] = out_dims.1;
    (out, nd)
}

/// Embed a single-site operator into the full space.
pub fn dense_site_op(dims: &[usize], site: usize, op: &DenseTensor) -> DenseTensor {
    let mut m = DenseTensor::identity(1);
    for (k, &d) in dims.iter().enumerate() {
        let f = if k == site { op.clone() } else { DenseTensor::identity(d) };
        m = m.kron(&f).unwrap();
    }
    m
}

pub fn dense_expectation(v: &[C64], m: &DenseTensor) -> C64 {
    let n = v.len();
    let mut acc = crate::tensor::ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += v[i].conj() * m.get(&[i, j]) * v[j];
        }
    }
    acc
}

/// Single-site reduced density matrix from a dense vector.
pub fn dense_rdm(v: &[C64], dims: &[usize], site: usize) -> DenseTensor {
    let left: usize = dims[..site].iter().product();
    let d = dims[site];
    let right: usize = dims[site + 1..].iter().product();
    let mut rho = DenseTensor::zeros(&[d, d]);
    for l in 0..left {
        for r in 0..right {
            for s in 0..d {
                for t in 0..d {
                    let z = v[(l * d + s) * right + r] * v[(l * d + t) * right + r].conj();
                    rho.set(&[s, t], rho.get(&[s, t]) + z);
                }
            }
        }
    }
    rho
}

pub fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> DenseTensor {
    let h = random_hermitian(rng, n);
    crate::tensor::hermitian_expm(&h, 1.0).unwrap()
}

pub fn vec_max_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
