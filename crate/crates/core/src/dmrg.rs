//! Two-site DMRG for MPO Hamiltonians.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::MPOOperator;
use crate::mps::MPSState;
use crate::tensor::{contract, eigh, svd_truncate, DenseTensor, TruncationSpec, C64, ZERO};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DmrgConfig {
    pub max_sweeps: usize,
    pub energy_tol: f64,
    pub trunc: TruncationSpec,
    pub seed: u64,
    pub lanczos_max_iter: usize,
    pub lanczos_tol: f64,
}

impl Default for DmrgConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 10,
            energy_tol: 1e-9,
            trunc: TruncationSpec::default(),
            seed: 0,
            lanczos_max_iter: 100,
            lanczos_tol: 1e-10,
        }
    }
}

impl DmrgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 {
            return Err(Error::Validation("max_sweeps must be positive".into()));
        }
        if !(self.energy_tol > 0.0) || !(self.lanczos_tol > 0.0) {
            return Err(Error::Validation("tolerances must be positive".into()));
        }
        if self.lanczos_max_iter < 2 {
            return Err(Error::Validation("lanczos_max_iter must be at least 2".into()));
        }
        self.trunc.validate()
    }
}

#[derive(Clone, Debug)]
pub struct GroundState {
    pub state: MPSState,
    pub energy: f64,
    /// Energy after each full (left-right-left) sweep.
    pub sweep_energies: Vec<f64>,
    pub converged: bool,
}

/// Lowest eigenpair of a Hermitian operator given as a matvec.
pub struct LanczosResult {
    pub value: f64,
    pub vector: Vec<C64>,
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn lanczos_lowest<F>(matvec: F, x0: &[C64], max_iter: usize, tol: f64) -> Result<LanczosResult>
where
    F: Fn(&[C64]) -> Result<Vec<C64>>,
{
    let dim = x0.len();
    let n0 = norm(x0);
    if !(n0 > 0.0) {
        return Err(Error::Numeric("Lanczos start vector is zero".into()));
    }
    let mut basis: Vec<Vec<C64>> = vec![x0.iter().map(|z| z / n0).collect()];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let cap = max_iter.min(dim).max(1);
    let mut best: Option<(f64, Vec<f64>, f64)> = None;

    for k in 0..cap {
        let mut w = matvec(&basis[k])?;
        let a = dot(&basis[k], &w).re;
        alpha.push(a);
        // full reorthogonalization, done twice for stability
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
            }
        }
        let b = norm(&w);
        let m = alpha.len();
        let check = m <= 8 || m % 4 == 0 || m == cap || b < 1e-14;
        if check {
            let (theta, y) = tridiag_lowest(&alpha, &beta)?;
            let res = b * y[m - 1].abs();
            best = Some((theta, y, res));
            if res < tol || b < 1e-14 || m == cap {
                break;
            }
        }
        if b < 1e-14 {
            break;
        }
        beta.push(b);
        basis.push(w.into_iter().map(|z| z / b).collect());
    }
    let (value, y, residual) = best.ok_or_else(|| Error::Numeric("Lanczos did not run".into()))?;
    if !value.is_finite() {
        return Err(Error::Numeric("Lanczos produced a non-finite eigenvalue".into()));
    }
    let mut vector = vec![ZERO; dim];
    for (coef, v) in y.iter().zip(&basis) {
        for (o, vi) in vector.iter_mut().zip(v) {
            *o += vi * *coef;
        }
    }
    let nv = norm(&vector);
    vector.iter_mut().for_each(|z| *z /= nv);
    Ok(LanczosResult {
        value,
        vector,
        iterations: alpha.len(),
        residual,
    })
}

fn tridiag_lowest(alpha: &[f64], beta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let m = alpha.len();
    let mut t = DenseTensor::zeros(&[m, m]);
    for i in 0..m {
        t.set(&[i, i], C64::new(alpha[i], 0.0));
        if i + 1 < m {
            t.set(&[i, i + 1], C64::new(beta[i], 0.0));
            t.set(&[i + 1, i], C64::new(beta[i], 0.0));
        }
    }
    let e = eigh(&t)?;
    // real symmetric input: the eigenvector can be chosen real up to a phase
    let col: Vec<C64> = (0..m).map(|r| e.vectors.get(&[r, 0])).collect();
    let pivot = col.iter().copied().fold(ZERO, |acc, z| if z.norm() > acc.norm() { z } else { acc });
    let phase = pivot.conj() / pivot.norm();
    Ok((e.values[0], col.iter().map(|z| (z * phase).re).collect()))
}

/// Left environment `L(bra, w, ket)` extended by one site.
fn extend_left(l: &DenseTensor, a: &DenseTensor, w: &DenseTensor) -> Result<DenseTensor> {
    let t = contract(l, a, &[(2, 0)])?; // (b', w, s, a)
    let t = contract(&t, w, &[(1, 0), (2, 2)])?; // (b', a, s', w')
    contract(&a.conj(), &t, &[(0, 0), (1, 2)])? // (a', a, w')
        .permute(&[0, 2, 1])
}

/// Right environment `R(bra, w, ket)` extended by one site.
fn extend_right(r: &DenseTensor, a: &DenseTensor, w: &DenseTensor) -> Result<DenseTensor> {
    let t = contract(a, r, &[(2, 2)])?; // (b, s, a', w')
    let t = contract(w, &t, &[(3, 3), (2, 1)])?; // (w, s', b, a')
    contract(&a.conj(), &t, &[(1, 1), (2, 3)]) // (b', w, b)
}

fn apply_heff(
    l: &DenseTensor,
    w1: &DenseTensor,
    w2: &DenseTensor,
    r: &DenseTensor,
    theta: &DenseTensor,
) -> Result<DenseTensor> {
    let t = contract(l, theta, &[(2, 0)])?; // (χl', w, d1, d2, χr)
    let t = contract(&t, w1, &[(1, 0), (2, 2)])?; // (χl', d2, χr, d1', w')
    let t = contract(&t, w2, &[(4, 0), (1, 2)])?; // (χl', χr, d1', d2', w'')
    contract(&t, r, &[(1, 2), (4, 1)]) // (χl', d1', d2', χr')
}

/// `⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩` for an MPO.
pub fn mpo_expectation(state: &MPSState, mpo: &MPOOperator) -> Result<f64> {
    if state.local_dims() != mpo.local_dims() {
        return Err(Error::Dimension(format!(
            "state dims {:?} do not match MPO dims {:?}",
            state.local_dims(),
            mpo.local_dims()
        )));
    }
    let mut env = DenseTensor::new(vec![1, 1, 1], vec![C64::new(1.0, 0.0)])?;
    for (a, w) in state.tensors().iter().zip(mpo.tensors()) {
        env = extend_left(&env, a, w)?;
    }
    Ok(env.data()[0].re / state.norm_sqr())
}

fn random_start(dims: &[usize], seed: u64) -> Result<MPSState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors: Vec<Vec<C64>> = dims
        .iter()
        .map(|&d| (0..d).map(|_| C64::new(rng.random_range(0.1..1.0), 0.0)).collect())
        .collect();
    MPSState::from_local_vectors(&vectors)
}

/// Ground state of `mpo` by two-site sweeps starting from a seeded random
/// product superposition.
pub fn dmrg_ground_state(mpo: &MPOOperator, cfg: &DmrgConfig) -> Result<GroundState> {
    cfg.validate()?;
    let n = mpo.n_sites();
    if n < 2 {
        return Err(Error::Validation("DMRG needs at least two sites".into()));
    }
    let dims = mpo.local_dims();
    let start = random_start(&dims, cfg.seed)?.move_center(0)?;
    let mut tensors: Vec<DenseTensor> = start.tensors().to_vec();
    let ws = mpo.tensors();

    let unit = DenseTensor::new(vec![1, 1, 1], vec![C64::new(1.0, 0.0)])?;
    let mut lenv: Vec<DenseTensor> = vec![unit.clone(); n];
    let mut renv: Vec<DenseTensor> = vec![unit.clone(); n];
    // renv[i] covers sites i+1..n
    for i in (0..n - 1).rev() {
        renv[i] = extend_right(&renv[i + 1], &tensors[i + 1], &ws[i + 1])?;
    }

    let mut discarded = 0.0;
    let mut energy = f64::NAN;
    let mut sweep_energies = Vec::new();
    let mut converged = false;

    let optimize = |i: usize,
                        tensors: &mut Vec<DenseTensor>,
                        lenv: &[DenseTensor],
                        renv: &[DenseTensor],
                        to_right: bool,
                        discarded: &mut f64|
     -> Result<f64> {
        let theta = contract(&tensors[i], &tensors[i + 1], &[(2, 0)])?;
        let shape = theta.shape().to_vec();
        let (l, r, w1, w2) = (&lenv[i], &renv[i + 1], &ws[i], &ws[i + 1]);
        let matvec = |x: &[C64]| -> Result<Vec<C64>> {
            let t = DenseTensor::new(shape.clone(), x.to_vec())?;
            Ok(apply_heff(l, w1, w2, r, &t)?.into_data())
        };
        let res = lanczos_lowest(matvec, theta.data(), cfg.lanczos_max_iter, cfg.lanczos_tol)?;
        let m = DenseTensor::new(shape.clone(), res.vector)?
            .into_shape(&[shape[0] * shape[1], shape[2] * shape[3]])?;
        let svd = svd_truncate(&m, &cfg.trunc)?;
        *discarded += svd.discarded_weight;
        let kept: f64 = svd.singular_values.iter().map(|s| s * s).sum();
        let s: Vec<C64> = svd
            .singular_values
            .iter()
            .map(|x| C64::new(x / kept.sqrt(), 0.0))
            .collect();
        let k = s.len();
        let (left, right) = if to_right {
            (svd.left_isometry, DenseTensor::diag(&s).matmul(&svd.right_isometry)?)
        } else {
            (svd.left_isometry.matmul(&DenseTensor::diag(&s))?, svd.right_isometry)
        };
        tensors[i] = left.into_shape(&[shape[0], shape[1], k])?;
        tensors[i + 1] = right.into_shape(&[k, shape[2], shape[3]])?;
        Ok(res.value)
    };

    for _ in 0..cfg.max_sweeps {
        for i in 0..n - 1 {
            energy = optimize(i, &mut tensors, &lenv, &renv, true, &mut discarded)?;
            if i + 1 < n - 1 {
                lenv[i + 1] = extend_left(&lenv[i], &tensors[i], &ws[i])?;
            }
        }
        for i in (0..n - 1).rev() {
            energy = optimize(i, &mut tensors, &lenv, &renv, false, &mut discarded)?;
            if i > 0 {
                renv[i] = extend_right(&renv[i + 1], &tensors[i + 1], &ws[i + 1])?;
            }
        }
        if !energy.is_finite() {
            return Err(Error::Numeric("DMRG energy is not finite".into()));
        }
        let prev = sweep_energies.last().copied();
        sweep_energies.push(energy);
        if let Some(p) = prev {
            if (p - energy).abs() < cfg.energy_tol {
                converged = true;
                break;
            }
        }
    }
    let state = MPSState::from_tensors(tensors, 0, discarded)?;
    Ok(GroundState {
        state,
        energy,
        sweep_energies,
        converged,
    })
}
