use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, ONE};

const UNITARY_TOL: f64 = 1e-11;

/// A unitary acting on sites `site` and `site + 1`.
///
/// The matrix maps the input pair space `(d_l, d_r)` to the output pair space
/// `out_dims`; the two coincide except for gates that exchange sites of
/// different local dimension (SWAP and SWAP-fused gates).
#[derive(Clone, Debug, PartialEq)]
pub struct TwoSiteGate {
    matrix: DenseTensor,
    site: usize,
    in_dims: (usize, usize),
    out_dims: (usize, usize),
}

impl TwoSiteGate {
    pub fn new(matrix: DenseTensor, site: usize, dims: (usize, usize)) -> Result<Self> {
        Self::with_dims(matrix, site, dims, dims)
    }

    pub fn with_dims(
        matrix: DenseTensor,
        site: usize,
        in_dims: (usize, usize),
        out_dims: (usize, usize),
    ) -> Result<Self> {
        let n_in = in_dims.0 * in_dims.1;
        let n_out = out_dims.0 * out_dims.1;
        if matrix.shape() != [n_out, n_in] || n_in != n_out {
            return Err(Error::Dimension(format!(
                "gate matrix has shape {:?}, expected [{n_out}, {n_in}]",
                matrix.shape()
            )));
        }
        let dev = matrix
            .adjoint()?
            .matmul(&matrix)?
            .max_abs_diff(&DenseTensor::identity(n_in));
        if dev > UNITARY_TOL {
            return Err(Error::Validation(format!(
                "gate is not unitary (deviation {dev:.3e})"
            )));
        }
        Ok(Self {
            matrix,
            site,
            in_dims,
            out_dims,
        })
    }

    pub fn identity(site: usize, dims: (usize, usize)) -> Self {
        Self {
            matrix: DenseTensor::identity(dims.0 * dims.1),
            site,
            in_dims: dims,
            out_dims: dims,
        }
    }

    /// Exchange the states of two neighbouring sites.
    pub fn swap(site: usize, dims: (usize, usize)) -> Self {
        Self {
            matrix: swap_matrix(dims.0, dims.1),
            site,
            in_dims: dims,
            out_dims: (dims.1, dims.0),
        }
    }

    /// `SWAP · self`: apply this gate, then exchange the two sites.
    pub fn then_swap(&self) -> Result<Self> {
        let swap = swap_matrix(self.out_dims.0, self.out_dims.1);
        Ok(Self {
            matrix: swap.matmul(&self.matrix)?,
            site: self.site,
            in_dims: self.in_dims,
            out_dims: (self.out_dims.1, self.out_dims.0),
        })
    }

    pub fn matrix(&self) -> &DenseTensor {
        &self.matrix
    }

    pub fn site(&self) -> usize {
        self.site
    }

    pub fn in_dims(&self) -> (usize, usize) {
        self.in_dims
    }

    pub fn out_dims(&self) -> (usize, usize) {
        self.out_dims
    }

    pub fn at_site(mut self, site: usize) -> Self {
        self.site = site;
        self
    }
}

/// Permutation matrix sending `|a⟩|b⟩` (dims `dl`, `dr`) to `|b⟩|a⟩`.
pub fn swap_matrix(dl: usize, dr: usize) -> DenseTensor {
    let n = dl * dr;
    let mut m = DenseTensor::zeros(&[n, n]);
    for a in 0..dl {
        for b in 0..dr {
            m.set(&[b * dl + a, a * dr + b], ONE);
        }
    }
    m
}
