use std::path::{Path, PathBuf};

use collisim_core::collision::{CollisionConfig, ProbeSpec};
use collisim_core::dmrg::DmrgConfig;
use collisim_core::error::{Error, Result};
use collisim_core::fit::FitConfig;
use collisim_core::lattice::{BoseHubbardParams, ProbeKind};
use collisim_core::master_eq::{CorrelationAnsatz, Stepper};
use collisim_core::tensor::TruncationSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// One JSON document drives every command; each command reads the groups it needs.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: BoseHubbardParams,
    pub probe: ProbeConfig,
    pub collisions: CollisionGroup,
    #[serde(default)]
    pub dmrg: DmrgConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub me: MeGroup,
    #[serde(default)]
    pub scan: Option<ScanConfig>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    #[serde(default = "default_probe_kind")]
    pub kind: ProbeKind,
    /// Initial Fock level of the probe.
    #[serde(default = "default_occupation")]
    pub occupation: usize,
    pub gamma: f64,
}

fn default_probe_kind() -> ProbeKind {
    ProbeKind::Qubit
}

fn default_occupation() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollisionGroup {
    pub dt: f64,
    pub n_collisions: usize,
    #[serde(default)]
    pub trunc: TruncationSpec,
    #[serde(default)]
    pub record_rho: bool,
    #[serde(default = "default_discard_cap")]
    pub discard_cap: f64,
}

fn default_discard_cap() -> f64 {
    collisim_core::collision::DEFAULT_DISCARD_CAP
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeGroup {
    #[serde(default)]
    pub ansatz: Option<CorrelationAnsatz>,
    /// CSV correlation set; takes precedence over `ansatz`.
    #[serde(default)]
    pub correlations: Option<PathBuf>,
    #[serde(default)]
    pub stepper: Stepper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanParameter {
    Mu,
    U,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    #[serde(default = "default_scan_parameter")]
    pub parameter: ScanParameter,
    pub values: Vec<f64>,
}

fn default_scan_parameter() -> ScanParameter {
    ScanParameter::Mu
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.collision_config()?;
        self.probe_spec()?;
        self.dmrg.validate()?;
        self.fit.validate()?;
        if self.collisions.n_collisions > self.model.n_sites {
            return Err(Error::Validation(format!(
                "n_collisions {} exceeds the {} environment sites",
                self.collisions.n_collisions, self.model.n_sites
            )));
        }
        if let Some(a) = &self.me.ansatz {
            a.validate()?;
        }
        if let Some(scan) = &self.scan {
            if let Some(v) = scan.values.iter().find(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("scan value {v} is not finite")));
            }
        }
        Ok(())
    }

    pub fn collision_config(&self) -> Result<CollisionConfig> {
        let c = &self.collisions;
        let mut cfg = CollisionConfig::new(c.dt, self.probe.gamma, c.n_collisions, c.trunc)?;
        cfg.record_rho = c.record_rho;
        cfg.discard_cap = c.discard_cap;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn probe_spec(&self) -> Result<ProbeSpec> {
        ProbeSpec::fock(self.probe.kind, self.probe.occupation)
    }

    /// Model with the scanned parameter replaced.
    pub fn model_at(&self, parameter: ScanParameter, value: f64) -> Result<BoseHubbardParams> {
        let mut m = self.model;
        match parameter {
            ScanParameter::Mu => m.mu = value,
            ScanParameter::U => m.u = value,
        }
        m.validate()?;
        Ok(m)
    }

    /// SHA-256 of the effective configuration, output location excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let text = serde_json::to_string(&c).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
