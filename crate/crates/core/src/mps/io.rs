use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MPSState;
use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, C64};

pub const MPS_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorDocument {
    pub shape: Vec<usize>,
    /// Row-major `[re, im]` pairs.
    pub data: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MpsDocument {
    pub version: u32,
    pub local_dims: Vec<usize>,
    pub center: usize,
    pub cumulative_discarded_weight: f64,
    pub tensors: Vec<TensorDocument>,
}

impl From<&DenseTensor> for TensorDocument {
    fn from(t: &DenseTensor) -> Self {
        Self {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

impl TryFrom<&TensorDocument> for DenseTensor {
    type Error = Error;

    fn try_from(doc: &TensorDocument) -> Result<Self> {
        DenseTensor::new(
            doc.shape.clone(),
            doc.data.iter().map(|&[re, im]| C64::new(re, im)).collect(),
        )
    }
}

impl MPSState {
    pub fn to_document(&self) -> MpsDocument {
        MpsDocument {
            version: MPS_FORMAT_VERSION,
            local_dims: self.local_dims(),
            center: self.center(),
            cumulative_discarded_weight: self.cumulative_discarded_weight(),
            tensors: self.tensors().iter().map(TensorDocument::from).collect(),
        }
    }

    pub fn from_document(doc: &MpsDocument) -> Result<Self> {
        if doc.version != MPS_FORMAT_VERSION {
            return Err(Error::Input(format!(
                "unsupported MPS document version {}",
                doc.version
            )));
        }
        let tensors = doc
            .tensors
            .iter()
            .map(DenseTensor::try_from)
            .collect::<Result<Vec<_>>>()?;
        let state = MPSState::from_tensors(tensors, doc.center, doc.cumulative_discarded_weight)?;
        if state.local_dims() != doc.local_dims {
            return Err(Error::Input(format!(
                "local_dims {:?} disagree with tensor shapes {:?}",
                doc.local_dims,
                state.local_dims()
            )));
        }
        Ok(state)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
