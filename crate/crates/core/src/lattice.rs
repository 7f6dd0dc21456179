//! Bose-Hubbard chain Hamiltonians and local operator factories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, C64, ONE};

/// Default cap on the dense Hilbert-space dimension.
pub const DENSE_DIM_CAP: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoseHubbardParams {
    pub n_sites: usize,
    /// Bosonic truncation: each site holds 0..local_dim-1 particles.
    pub local_dim: usize,
    pub h: f64,
    pub u: f64,
    pub mu: f64,
}

impl BoseHubbardParams {
    pub fn new(n_sites: usize, local_dim: usize, h: f64, u: f64, mu: f64) -> Result<Self> {
        let p = Self {
            n_sites,
            local_dim,
            h,
            u,
            mu,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 sites, got {}",
                self.n_sites
            )));
        }
        if self.local_dim < 2 {
            return Err(Error::Validation(format!(
                "local dim must be at least 2, got {}",
                self.local_dim
            )));
        }
        if ![self.h, self.u, self.mu].iter().all(|x| x.is_finite()) {
            return Err(Error::Validation("couplings must be finite".into()));
        }
        Ok(())
    }
}

/// Truncated bosonic ladder operators `(b, b†, n)` on `d` levels.
#[derive(Clone, Debug)]
pub struct Ladder {
    pub b: DenseTensor,
    pub b_dagger: DenseTensor,
    pub n: DenseTensor,
}

pub fn ladder_operators(d: usize) -> Result<Ladder> {
    if d < 2 {
        return Err(Error::Validation(format!("local dim must be at least 2, got {d}")));
    }
    let mut b = DenseTensor::zeros(&[d, d]);
    for k in 1..d {
        b.set(&[k - 1, k], C64::new((k as f64).sqrt(), 0.0));
    }
    let b_dagger = b.adjoint()?;
    let n = DenseTensor::diag(&(0..d).map(|k| C64::new(k as f64, 0.0)).collect::<Vec<_>>());
    Ok(Ladder { b, b_dagger, n })
}

/// Matrix product operator with site tensors `(w_left, d_out, d_in, w_right)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MPOOperator {
    tensors: Vec<DenseTensor>,
}

impl MPOOperator {
    pub fn new(tensors: Vec<DenseTensor>) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::Validation("an MPO needs at least one site".into()));
        }
        for (i, t) in tensors.iter().enumerate() {
            if t.rank() != 4 || t.shape()[1] != t.shape()[2] {
                return Err(Error::Shape(format!(
                    "MPO tensor {i} has shape {:?}",
                    t.shape()
                )));
            }
        }
        if tensors[0].shape()[0] != 1 || tensors[tensors.len() - 1].shape()[3] != 1 {
            return Err(Error::Shape("MPO boundary bonds must have dimension 1".into()));
        }
        for i in 1..tensors.len() {
            if tensors[i - 1].shape()[3] != tensors[i].shape()[0] {
                return Err(Error::Shape(format!("MPO bond {} mismatch", i - 1)));
            }
        }
        Ok(Self { tensors })
    }

    pub fn tensors(&self) -> &[DenseTensor] {
        &self.tensors
    }

    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn local_dims(&self) -> Vec<usize> {
        self.tensors.iter().map(|t| t.shape()[1]).collect()
    }

    /// Expand into a dense matrix (small chains only).
    pub fn to_dense(&self) -> Result<DenseTensor> {
        let dim: usize = self.local_dims().iter().product();
        if dim > DENSE_DIM_CAP {
            return Err(Error::Resource(format!(
                "dense dimension {dim} exceeds cap {DENSE_DIM_CAP}"
            )));
        }
        // acc: (out, in, w) with out/in the combined indices so far
        let first = &self.tensors[0];
        let s = first.shape();
        let mut acc = first.reshape(&[s[1], s[2], s[3]])?;
        for t in &self.tensors[1..] {
            let (ao, ai) = (acc.shape()[0], acc.shape()[1]);
            let st = t.shape();
            let c = crate::tensor::contract(&acc, t, &[(2, 0)])?; // (ao, ai, o, i, w)
            acc = c
                .permute(&[0, 2, 1, 3, 4])?
                .into_shape(&[ao * st[1], ai * st[2], st[3]])?;
        }
        let (o, i) = (acc.shape()[0], acc.shape()[1]);
        acc.into_shape(&[o, i])
    }
}

/// `H = Σ_i [-h(b_i b†_{i+1} + b†_i b_{i+1}) + (u/2) b†_i b†_i b_i b_i + μ b†_i b_i]`
/// as a bond-dimension-4 MPO.
pub fn build_bose_hubbard_mpo(p: &BoseHubbardParams) -> Result<MPOOperator> {
    p.validate()?;
    let d = p.local_dim;
    let l = ladder_operators(d)?;
    let onsite = onsite_term(p, &l)?;
    let id = DenseTensor::identity(d);
    let hop = C64::new(-p.h, 0.0);

    // Lower-triangular transfer matrix, rows = left bond, cols = right bond:
    //   [ I      0      0      0 ]
    //   [ b†     0      0      0 ]
    //   [ b      0      0      0 ]
    //   [ onsite -h·b   -h·b†  I ]
    let w = 4;
    let bulk = |tensor: &mut DenseTensor, row: usize, col: usize, op: &DenseTensor, coef: C64| {
        for o in 0..d {
            for i in 0..d {
                let v = op.get(&[o, i]) * coef;
                if v != crate::tensor::ZERO {
                    tensor.set(&[row, o, i, col], tensor.get(&[row, o, i, col]) + v);
                }
            }
        }
    };
    let mut full = DenseTensor::zeros(&[w, d, d, w]);
    bulk(&mut full, 0, 0, &id, ONE);
    bulk(&mut full, 1, 0, &l.b_dagger, ONE);
    bulk(&mut full, 2, 0, &l.b, ONE);
    bulk(&mut full, 3, 0, &onsite, ONE);
    bulk(&mut full, 3, 1, &l.b, hop);
    bulk(&mut full, 3, 2, &l.b_dagger, hop);
    bulk(&mut full, 3, 3, &id, ONE);

    let n = p.n_sites;
    let mut tensors = Vec::with_capacity(n);
    for site in 0..n {
        let rows: Vec<usize> = if site == 0 { vec![3] } else { (0..w).collect() };
        let cols: Vec<usize> = if site == n - 1 { vec![0] } else { (0..w).collect() };
        let mut t = DenseTensor::zeros(&[rows.len(), d, d, cols.len()]);
        for (ri, &r) in rows.iter().enumerate() {
            for (ci, &c) in cols.iter().enumerate() {
                for o in 0..d {
                    for i in 0..d {
                        t.set(&[ri, o, i, ci], full.get(&[r, o, i, c]));
                    }
                }
            }
        }
        tensors.push(t);
    }
    MPOOperator::new(tensors)
}

fn onsite_term(p: &BoseHubbardParams, l: &Ladder) -> Result<DenseTensor> {
    let bdbd_bb = l.b_dagger.matmul(&l.b_dagger)?.matmul(&l.b)?.matmul(&l.b)?;
    bdbd_bb.scale_real(p.u / 2.0).add(&l.n.scale_real(p.mu))
}

/// Dense Bose-Hubbard Hamiltonian assembled term by term from Kronecker products.
pub fn build_dense_hamiltonian(p: &BoseHubbardParams) -> Result<DenseTensor> {
    build_dense_hamiltonian_capped(p, DENSE_DIM_CAP)
}

pub fn build_dense_hamiltonian_capped(p: &BoseHubbardParams, cap: usize) -> Result<DenseTensor> {
    p.validate()?;
    let d = p.local_dim;
    let n = p.n_sites;
    let dim = d
        .checked_pow(n as u32)
        .filter(|&x| x <= cap)
        .ok_or_else(|| Error::Resource(format!("{d}^{n} exceeds dense cap {cap}")))?;
    let l = ladder_operators(d)?;
    let onsite = onsite_term(p, &l)?;
    let embed = |ops: &[(usize, &DenseTensor)]| -> Result<DenseTensor> {
        let mut m = DenseTensor::identity(1);
        for site in 0..n {
            let f = ops
                .iter()
                .find(|(s, _)| *s == site)
                .map(|(_, op)| (*op).clone())
                .unwrap_or_else(|| DenseTensor::identity(d));
            m = m.kron(&f)?;
        }
        Ok(m)
    };
    let mut h = DenseTensor::zeros(&[dim, dim]);
    for i in 0..n {
        h = h.add(&embed(&[(i, &onsite)])?)?;
        if i + 1 < n {
            let a = embed(&[(i, &l.b), (i + 1, &l.b_dagger)])?;
            let b = embed(&[(i, &l.b_dagger), (i + 1, &l.b)])?;
            h = h.add(&a.add(&b)?.scale_real(-p.h))?;
        }
    }
    Ok(h)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProbeKind {
    Qubit,
    Boson { levels: usize },
}

impl ProbeKind {
    pub fn local_dim(&self) -> usize {
        match *self {
            ProbeKind::Qubit => 2,
            ProbeKind::Boson { levels } => levels,
        }
    }
}

/// Jump operator and free Hamiltonian of a probe.
#[derive(Clone, Debug)]
pub struct ProbeOperators {
    /// `√γ·σ⁻` or `√γ·a`.
    pub jump: DenseTensor,
    pub hamiltonian: DenseTensor,
    /// The jump operator without the `√γ` factor.
    pub unit_jump: DenseTensor,
    /// `J†J/γ`: the probe population.
    pub population: DenseTensor,
}

pub fn probe_operators(kind: ProbeKind, gamma: f64, h_s: Option<DenseTensor>) -> Result<ProbeOperators> {
    if !(gamma >= 0.0) {
        return Err(Error::Validation(format!("gamma must be non-negative, got {gamma}")));
    }
    let d = kind.local_dim();
    if d < 2 {
        return Err(Error::Validation(format!("probe needs at least 2 levels, got {d}")));
    }
    let l = ladder_operators(d)?;
    let hamiltonian = match h_s {
        Some(h) => {
            if h.shape() != [d, d] {
                return Err(Error::Dimension(format!(
                    "probe Hamiltonian has shape {:?}, expected [{d}, {d}]",
                    h.shape()
                )));
            }
            h
        }
        None => DenseTensor::zeros(&[d, d]),
    };
    Ok(ProbeOperators {
        jump: l.b.scale_real(gamma.sqrt()),
        hamiltonian,
        unit_jump: l.b,
        population: l.n,
    })
}
