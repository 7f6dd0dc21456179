//! Open-boundary matrix product states with a tracked orthogonality center.
//!
//! Site tensors are shaped `(χ_left, d, χ_right)`. Tensors left of the center
//! are left isometries and tensors right of it are right isometries, so local
//! quantities only need the tensors between the center and the sites of
//! interest.

mod gate;
mod io;

pub use gate::{swap_matrix, TwoSiteGate};
pub use io::{MpsDocument, TensorDocument, MPS_FORMAT_VERSION};

use crate::error::{Error, Result};
use crate::tensor::{
    contract, left_qr, right_lq, svd_truncate, DenseTensor, TruncationSpec, C64, ONE, ZERO,
};

/// Largest Hilbert space [`MPSState::to_dense`] will expand.
pub const DENSE_STATE_CAP: usize = 1 << 20;

#[derive(Clone, Debug, PartialEq)]
pub struct MPSState {
    tensors: Vec<DenseTensor>,
    center: usize,
    cumulative_discarded_weight: f64,
}

impl MPSState {
    /// Bond-dimension-one state `|occ_0, occ_1, …⟩`.
    pub fn product_state(local_dims: &[usize], occupations: &[usize]) -> Result<Self> {
        if local_dims.len() != occupations.len() {
            return Err(Error::Validation(format!(
                "{} local dims but {} occupations",
                local_dims.len(),
                occupations.len()
            )));
        }
        let vectors = local_dims
            .iter()
            .zip(occupations)
            .enumerate()
            .map(|(site, (&d, &n))| {
                if d == 0 || n >= d {
                    return Err(Error::Validation(format!(
                        "occupation {n} out of range for local dim {d} at site {site}"
                    )));
                }
                let mut v = vec![ZERO; d];
                v[n] = ONE;
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_local_vectors(&vectors)
    }

    /// Product of (normalized) single-site states.
    pub fn from_local_vectors(vectors: &[Vec<C64>]) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::Validation("an MPS needs at least one site".into()));
        }
        let tensors = vectors
            .iter()
            .enumerate()
            .map(|(site, v)| {
                let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if !(norm > 0.0) {
                    return Err(Error::Validation(format!("zero local state at site {site}")));
                }
                DenseTensor::new(vec![1, v.len(), 1], v.iter().map(|z| z / norm).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            tensors,
            center: 0,
            cumulative_discarded_weight: 0.0,
        })
    }

    /// Wrap raw site tensors, checking bond consistency. Canonical form is the
    /// caller's responsibility.
    pub fn from_tensors(tensors: Vec<DenseTensor>, center: usize, cumulative_discarded_weight: f64) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::Validation("an MPS needs at least one site".into()));
        }
        if center >= tensors.len() {
            return Err(Error::Validation(format!(
                "center {center} outside chain of {} sites",
                tensors.len()
            )));
        }
        for (i, t) in tensors.iter().enumerate() {
            if t.rank() != 3 {
                return Err(Error::Shape(format!(
                    "site tensor {i} has rank {}, expected 3",
                    t.rank()
                )));
            }
        }
        if tensors[0].shape()[0] != 1 || tensors[tensors.len() - 1].shape()[2] != 1 {
            return Err(Error::Shape("boundary bonds must have dimension 1".into()));
        }
        for i in 1..tensors.len() {
            if tensors[i - 1].shape()[2] != tensors[i].shape()[0] {
                return Err(Error::Shape(format!(
                    "bond {} mismatch: {} vs {}",
                    i - 1,
                    tensors[i - 1].shape()[2],
                    tensors[i].shape()[0]
                )));
            }
        }
        if !(cumulative_discarded_weight >= 0.0) {
            return Err(Error::Validation("discarded weight must be non-negative".into()));
        }
        Ok(Self {
            tensors,
            center,
            cumulative_discarded_weight,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn cumulative_discarded_weight(&self) -> f64 {
        self.cumulative_discarded_weight
    }

    pub fn tensors(&self) -> &[DenseTensor] {
        &self.tensors
    }

    pub fn local_dim(&self, site: usize) -> usize {
        self.tensors[site].shape()[1]
    }

    pub fn local_dims(&self) -> Vec<usize> {
        self.tensors.iter().map(|t| t.shape()[1]).collect()
    }

    /// Bond extents `χ_1 … χ_{N-1}` between neighbouring sites.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors[..self.tensors.len() - 1]
            .iter()
            .map(|t| t.shape()[2])
            .collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site < self.n_sites() {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "site {site} outside chain of {} sites",
                self.n_sites()
            )))
        }
    }

    fn check_op(&self, site: usize, op: &DenseTensor) -> Result<()> {
        let d = self.local_dim(site);
        if op.shape() != [d, d] {
            return Err(Error::Dimension(format!(
                "operator shape {:?} does not match local dim {d} at site {site}",
                op.shape()
            )));
        }
        Ok(())
    }

    /// Shift the orthogonality center to `target` with QR/LQ steps.
    pub fn move_center(&self, target: usize) -> Result<Self> {
        self.check_site(target)?;
        let mut out = self.clone();
        out.shift_center(target)?;
        Ok(out)
    }

    pub(crate) fn shift_center(&mut self, target: usize) -> Result<()> {
        while self.center < target {
            let c = self.center;
            let s = self.tensors[c].shape().to_vec();
            let (q, r) = left_qr(&self.tensors[c].reshape(&[s[0] * s[1], s[2]])?)?;
            let k = q.ncols();
            self.tensors[c] = q.into_shape(&[s[0], s[1], k])?;
            self.tensors[c + 1] = contract(&r, &self.tensors[c + 1], &[(1, 0)])?;
            self.center += 1;
        }
        while self.center > target {
            let c = self.center;
            let s = self.tensors[c].shape().to_vec();
            let (l, q) = right_lq(&self.tensors[c].reshape(&[s[0], s[1] * s[2]])?)?;
            let k = q.nrows();
            self.tensors[c] = q.into_shape(&[k, s[1], s[2]])?;
            self.tensors[c - 1] = contract(&self.tensors[c - 1], &l, &[(2, 0)])?;
            self.center -= 1;
        }
        Ok(())
    }

    /// `⟨self|other⟩`.
    pub fn overlap(&self, other: &Self) -> Result<C64> {
        if self.local_dims() != other.local_dims() {
            return Err(Error::Dimension("overlap of states with different local dims".into()));
        }
        let mut env = DenseTensor::identity(1);
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            // env (bra, ket) -> (bra', ket')
            let t = contract(&env, b, &[(1, 0)])?; // (bra, s, ket')
            env = contract(&a.conj(), &t, &[(0, 0), (1, 1)])?; // (bra', ket')
        }
        Ok(env.data()[0])
    }

    pub fn norm_sqr(&self) -> f64 {
        // The center tensor carries the whole norm when the canonical form holds.
        self.overlap(self).map(|z| z.re).unwrap_or(f64::NAN)
    }

    /// Apply a nearest-neighbour gate, truncate, renormalize; center ends on the
    /// gate's left site.
    pub fn apply_two_site_gate(&self, gate: &TwoSiteGate, trunc: &TruncationSpec) -> Result<Self> {
        let mut out = self.clone();
        out.apply_gate_in_place(gate, trunc, false)?;
        Ok(out)
    }

    /// In-place gate application returning the step's discarded weight.
    /// `center_right` leaves the orthogonality center on the right site instead.
    pub fn apply_gate_in_place(
        &mut self,
        gate: &TwoSiteGate,
        trunc: &TruncationSpec,
        center_right: bool,
    ) -> Result<f64> {
        let i = gate.site();
        if i + 1 >= self.n_sites() {
            return Err(Error::Validation(format!(
                "gate on sites ({i}, {}) outside chain of {} sites",
                i + 1,
                self.n_sites()
            )));
        }
        let (dl, dr) = (self.local_dim(i), self.local_dim(i + 1));
        if gate.in_dims() != (dl, dr) {
            return Err(Error::Dimension(format!(
                "gate expects local dims {:?}, sites have ({dl}, {dr})",
                gate.in_dims()
            )));
        }
        if self.center != i && self.center != i + 1 {
            self.shift_center(i)?;
        }
        let chi_l = self.tensors[i].shape()[0];
        let chi_r = self.tensors[i + 1].shape()[2];
        let (ol, or) = gate.out_dims();

        let theta = contract(&self.tensors[i], &self.tensors[i + 1], &[(2, 0)])?; // (χl, dl, dr, χr)
        let g = gate.matrix().reshape(&[ol, or, dl, dr])?;
        let theta = contract(&g, &theta, &[(2, 1), (3, 2)])? // (ol, or, χl, χr)
            .permute(&[2, 0, 1, 3])?
            .into_shape(&[chi_l * ol, or * chi_r])?;
        let svd = svd_truncate(&theta, trunc)?;
        let kept: f64 = svd.singular_values.iter().map(|s| s * s).sum();
        if !(kept > 0.0) {
            return Err(Error::Numeric("gate annihilated the state".into()));
        }
        let inv_norm = 1.0 / kept.sqrt();
        let r = svd.singular_values.len();
        let s: Vec<C64> = svd
            .singular_values
            .iter()
            .map(|&x| C64::new(x * inv_norm, 0.0))
            .collect();
        let (left, right) = if center_right {
            (
                svd.left_isometry,
                DenseTensor::diag(&s).matmul(&svd.right_isometry)?,
            )
        } else {
            (
                svd.left_isometry.matmul(&DenseTensor::diag(&s))?,
                svd.right_isometry,
            )
        };
        self.tensors[i] = left.into_shape(&[chi_l, ol, r])?;
        self.tensors[i + 1] = right.into_shape(&[r, or, chi_r])?;
        self.center = if center_right { i + 1 } else { i };
        self.cumulative_discarded_weight += svd.discarded_weight;
        Ok(svd.discarded_weight)
    }

    /// `⟨ψ|op_site|ψ⟩`.
    pub fn expectation_local(&self, site: usize, op: &DenseTensor) -> Result<C64> {
        self.check_site(site)?;
        self.check_op(site, op)?;
        let centered = self.move_center(site)?;
        let a = &centered.tensors[site];
        let t = contract(op, a, &[(1, 1)])?; // (s', χl, χr)
        let v = contract(&a.conj(), &t, &[(0, 1), (1, 0), (2, 2)])?;
        Ok(v.data()[0])
    }

    /// `⟨ψ| op_a(i) · op_b(j) |ψ⟩` for `i ≤ j`; at `i == j` the product `op_a·op_b`
    /// acts on the single site.
    pub fn two_point(&self, op_a: &DenseTensor, i: usize, op_b: &DenseTensor, j: usize) -> Result<C64> {
        if i > j {
            return Err(Error::Validation(format!("two_point needs i <= j, got {i} > {j}")));
        }
        let row = self.two_point_row(op_a, i, op_b, j)?;
        Ok(row[j - i])
    }

    /// `⟨op_a(i) op_b(j)⟩` for every `j` in `i..=last`, in one left-to-right pass.
    pub fn two_point_row(&self, op_a: &DenseTensor, i: usize, op_b: &DenseTensor, last: usize) -> Result<Vec<C64>> {
        self.check_site(i)?;
        self.check_site(last)?;
        if last < i {
            return Err(Error::Validation(format!("empty range {i}..={last}")));
        }
        self.check_op(i, op_a)?;
        for j in i..=last {
            self.check_op(j, op_b)?;
        }
        let centered = self.move_center(i)?;
        let ts = &centered.tensors;
        let mut out = Vec::with_capacity(last - i + 1);

        let onsite = op_a.matmul(op_b)?;
        let a = &ts[i];
        let t = contract(&onsite, a, &[(1, 1)])?;
        out.push(contract(&a.conj(), &t, &[(0, 1), (1, 0), (2, 2)])?.data()[0]);
        if last == i {
            return Ok(out);
        }
        // env(b', b) after applying op_a at site i; left boundary is the identity.
        let t = contract(op_a, a, &[(1, 1)])?; // (s', χl, χr)
        let mut env = contract(&a.conj(), &t, &[(0, 1), (1, 0)])?; // (χr', χr)
        for (j, a) in ts.iter().enumerate().take(last + 1).skip(i + 1) {
            let t = contract(&env, a, &[(1, 0)])?; // (χl', s, χr)
            let with_op = contract(op_b, &t, &[(1, 1)])?; // (s', χl', χr)
            let closed = contract(&a.conj(), &with_op, &[(0, 1), (1, 0), (2, 2)])?;
            out.push(closed.data()[0]);
            if j < last {
                env = contract(&a.conj(), &t, &[(0, 0), (1, 1)])?;
            }
        }
        Ok(out)
    }

    /// Single-site reduced density matrix `ρ[s, s']`.
    pub fn reduced_density_matrix(&self, site: usize) -> Result<DenseTensor> {
        self.check_site(site)?;
        let centered = self.move_center(site)?;
        let a = &centered.tensors[site];
        contract(a, &a.conj(), &[(0, 0), (2, 2)])
    }

    /// Full state vector, site 0 most significant.
    pub fn to_dense(&self) -> Result<Vec<C64>> {
        let dim: usize = self.local_dims().iter().product();
        if dim > DENSE_STATE_CAP {
            return Err(Error::Resource(format!(
                "dense expansion of dimension {dim} exceeds cap {DENSE_STATE_CAP}"
            )));
        }
        let mut acc = self.tensors[0].reshape(&[self.tensors[0].shape()[1], self.tensors[0].shape()[2]])?;
        for t in &self.tensors[1..] {
            let rows = acc.nrows() * t.shape()[1];
            acc = contract(&acc, t, &[(1, 0)])?.into_shape(&[rows, t.shape()[2]])?;
        }
        Ok(acc.into_data())
    }

    /// Project `site` onto the local state `v` and fold it into a neighbour,
    /// yielding a renormalized state on one fewer site. Returns the squared
    /// norm of the projected state before renormalization.
    pub fn project_out_site(&self, site: usize, v: &[C64]) -> Result<(Self, f64)> {
        self.check_site(site)?;
        if self.n_sites() < 2 {
            return Err(Error::Validation("cannot remove the only site".into()));
        }
        if v.len() != self.local_dim(site) {
            return Err(Error::Dimension("projection vector has wrong length".into()));
        }
        let centered = self.move_center(site)?;
        let bra = DenseTensor::new(vec![v.len()], v.iter().map(|z| z.conj()).collect())?;
        let m = contract(&centered.tensors[site], &bra, &[(1, 0)])?; // (χl, χr)
        let weight = m.norm_sqr();
        if !(weight > 0.0) {
            return Err(Error::Numeric("projection onto a vector with zero weight".into()));
        }
        let m = m.scale_real(1.0 / weight.sqrt());
        let mut tensors = centered.tensors;
        tensors.remove(site);
        let center = if site > 0 {
            tensors[site - 1] = contract(&tensors[site - 1], &m, &[(2, 0)])?;
            site - 1
        } else {
            tensors[0] = contract(&m, &tensors[0], &[(1, 0)])?;
            0
        };
        let out = Self::from_tensors(tensors, center, self.cumulative_discarded_weight)?;
        Ok((out, weight))
    }

    /// Insert a product site holding `v` before position `at`.
    pub fn insert_product_site(&self, at: usize, v: &[C64]) -> Result<Self> {
        if at > self.n_sites() {
            return Err(Error::Validation(format!("insert position {at} out of range")));
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::Validation("zero local state".into()));
        }
        let chi = if at == 0 {
            1
        } else {
            self.tensors[at - 1].shape()[2]
        };
        // |v⟩ ⊗ 1_χ on the bond
        let d = v.len();
        let mut t = DenseTensor::zeros(&[chi, d, chi]);
        for a in 0..chi {
            for (s, z) in v.iter().enumerate() {
                t.set(&[a, s, a], z / norm);
            }
        }
        let mut tensors = self.tensors.clone();
        tensors.insert(at, t);
        let center = if self.center >= at { self.center + 1 } else { self.center };
        Self::from_tensors(tensors, center, self.cumulative_discarded_weight)
    }
}
