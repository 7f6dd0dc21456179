//! Collisional probing: a probe sweeps through the environment chain, colliding
//! with one site at a time.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::correlations::{
    correlation_length, default_reference_site, environment_correlations, fmt_f64, CorrelationKind,
    CorrelationProfile,
};
use crate::error::{Error, Result};
use crate::lattice::{ladder_operators, probe_operators, ProbeKind};
use crate::mps::{MPSState, TensorDocument, TwoSiteGate};
use crate::tensor::{eigh, hermitian_expm, DenseTensor, TruncationSpec, C64, ZERO};

pub const DEFAULT_DISCARD_CAP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionConfig {
    pub dt: f64,
    pub gamma: f64,
    pub n_collisions: usize,
    #[serde(default)]
    pub trunc: TruncationSpec,
    #[serde(default)]
    pub record_rho: bool,
    /// Cumulative discarded weight above which the trajectory is flagged.
    #[serde(default = "default_discard_cap")]
    pub discard_cap: f64,
}

fn default_discard_cap() -> f64 {
    DEFAULT_DISCARD_CAP
}

impl CollisionConfig {
    pub fn new(dt: f64, gamma: f64, n_collisions: usize, trunc: TruncationSpec) -> Result<Self> {
        let c = Self {
            dt,
            gamma,
            n_collisions,
            trunc,
            record_rho: false,
            discard_cap: DEFAULT_DISCARD_CAP,
        };
        c.validate()?;
        Ok(c)
    }

    /// Build from an explicit coupling; rejects `ε²·dt ≠ γ`.
    pub fn with_epsilon(dt: f64, gamma: f64, epsilon: f64, n_collisions: usize, trunc: TruncationSpec) -> Result<Self> {
        let c = Self::new(dt, gamma, n_collisions, trunc)?;
        if (epsilon * epsilon * dt - gamma).abs() > 1e-12 * gamma.max(1.0) {
            return Err(Error::Validation(format!(
                "epsilon {epsilon} inconsistent with gamma {gamma} and dt {dt}"
            )));
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Validation(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::Validation(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        if self.n_collisions == 0 {
            return Err(Error::Validation("n_collisions must be at least 1".into()));
        }
        if !(self.discard_cap >= 0.0) {
            return Err(Error::Validation("discard_cap must be non-negative".into()));
        }
        self.trunc.validate()
    }

    /// `ε = √(γ/dt)`.
    pub fn epsilon(&self) -> f64 {
        (self.gamma / self.dt).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSpec {
    pub kind: ProbeKind,
    pub initial_state: Vec<C64>,
    pub hamiltonian: Option<DenseTensor>,
}

impl ProbeSpec {
    /// Probe starting in the Fock state `|occupation⟩`.
    pub fn fock(kind: ProbeKind, occupation: usize) -> Result<Self> {
        let d = kind.local_dim();
        if occupation >= d {
            return Err(Error::Validation(format!(
                "probe occupation {occupation} needs more than {d} levels"
            )));
        }
        let mut v = vec![ZERO; d];
        v[occupation] = C64::new(1.0, 0.0);
        Ok(Self {
            kind,
            initial_state: v,
            hamiltonian: None,
        })
    }

    pub fn initial_rho(&self) -> DenseTensor {
        let d = self.initial_state.len();
        let mut r = DenseTensor::zeros(&[d, d]);
        for i in 0..d {
            for j in 0..d {
                r.set(&[i, j], self.initial_state[i] * self.initial_state[j].conj());
            }
        }
        r
    }

    fn validate(&self) -> Result<()> {
        if self.initial_state.len() != self.kind.local_dim() {
            return Err(Error::Dimension(format!(
                "probe state has {} amplitudes, probe has {} levels",
                self.initial_state.len(),
                self.kind.local_dim()
            )));
        }
        let n: f64 = self.initial_state.iter().map(|z| z.norm_sqr()).sum();
        if (n - 1.0).abs() > 1e-10 {
            return Err(Error::Validation(format!("probe state is not normalized (norm² = {n})")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Probe population `⟨J†J⟩/γ` after each collision.
    pub observable: Vec<f64>,
    pub rho_snapshots: Option<Vec<DenseTensor>>,
    pub trace_errors: Vec<f64>,
    pub discarded_weights: Vec<f64>,
    pub junction_entropies: Vec<f64>,
    pub truncation_warning: bool,
}

pub const TRAJECTORY_COLUMNS: [&str; 6] = [
    "collision_index",
    "time",
    "population",
    "trace_error",
    "discarded_weight",
    "junction_entropy",
];

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn write_csv(&self, w: impl Write, comment: Option<&str>) -> Result<()> {
        let mut w = w;
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(TRAJECTORY_COLUMNS)?;
        for i in 0..self.len() {
            out.write_record(&[
                (i + 1).to_string(),
                fmt_f64(self.times[i]),
                fmt_f64(self.observable[i]),
                fmt_f64(self.trace_errors[i]),
                fmt_f64(self.discarded_weights[i]),
                fmt_f64(self.junction_entropies[i]),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv(r: impl Read) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let header = rd.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != TRAJECTORY_COLUMNS {
            return Err(Error::Input(format!("unexpected trajectory header {header:?}")));
        }
        let mut t = Trajectory::default();
        for (row, rec) in rd.records().enumerate() {
            let rec = rec?;
            let f = |k: usize| -> Result<f64> {
                rec[k].trim().parse::<f64>().map_err(|e| {
                    Error::Input(format!("row {} column {}: {e}", row + 1, TRAJECTORY_COLUMNS[k]))
                })
            };
            t.times.push(f(1)?);
            t.observable.push(f(2)?);
            t.trace_errors.push(f(3)?);
            t.discarded_weights.push(f(4)?);
            t.junction_entropies.push(f(5)?);
        }
        if t.is_empty() {
            return Err(Error::Input("trajectory has no rows".into()));
        }
        Ok(t)
    }

    pub fn save_csv(&self, path: &Path, comment: Option<&str>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?, comment)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)
            .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
        Self::read_csv(f)
    }

    /// Density-matrix snapshots as a JSON list of tensors.
    pub fn snapshots_json(&self) -> Result<Option<String>> {
        match &self.rho_snapshots {
            None => Ok(None),
            Some(s) => {
                let docs: Vec<TensorDocument> = s.iter().map(TensorDocument::from).collect();
                Ok(Some(serde_json::to_string(&docs)?))
            }
        }
    }

    pub fn snapshots_from_json(text: &str) -> Result<Vec<DenseTensor>> {
        let docs: Vec<TensorDocument> = serde_json::from_str(text)?;
        docs.iter().map(DenseTensor::try_from).collect()
    }
}

/// Joint chain with the probe prepended as site 0.
pub fn attach_probe(env: &MPSState, probe: &ProbeSpec) -> Result<MPSState> {
    probe.validate()?;
    env.move_center(0)?.insert_product_site(0, &probe.initial_state)
}

/// `exp(-i dt [H_S⊗1 + ε(J⊗b† + J†⊗b)])` on (probe, site).
pub fn collision_gate(
    j: &DenseTensor,
    h_s: &DenseTensor,
    b: &DenseTensor,
    epsilon: f64,
    dt: f64,
) -> Result<TwoSiteGate> {
    let dp = j.nrows();
    let de = b.nrows();
    if j.shape() != [dp, dp] || h_s.shape() != [dp, dp] || b.shape() != [de, de] {
        return Err(Error::Dimension(format!(
            "collision operators have shapes {:?}, {:?}, {:?}",
            j.shape(),
            h_s.shape(),
            b.shape()
        )));
    }
    let id_e = DenseTensor::identity(de);
    let h = h_s
        .kron(&id_e)?
        .add(&j.kron(&b.adjoint()?)?.add(&j.adjoint()?.kron(b)?)?.scale_real(epsilon))?;
    let u = hermitian_expm(&h, dt)?;
    TwoSiteGate::new(u, 0, (dp, de))
}

fn von_neumann_entropy(rho: &DenseTensor) -> Result<f64> {
    let e = eigh(rho)?;
    Ok(e
        .values
        .iter()
        .filter(|&&p| p > 1e-300)
        .map(|&p| -p * p.ln())
        .sum())
}

fn dominant_vector(rho: &DenseTensor) -> Result<Vec<C64>> {
    let e = eigh(rho)?;
    let k = e.values.len() - 1;
    Ok((0..rho.nrows()).map(|r| e.vectors.get(&[r, k])).collect())
}

/// Run the collisions. Returns the trajectory and the environment after the
/// probe is projected onto its dominant local state.
pub fn sweep(env: &MPSState, probe: &ProbeSpec, cfg: &CollisionConfig) -> Result<(Trajectory, MPSState)> {
    cfg.validate()?;
    let n_env = env.n_sites();
    if cfg.n_collisions > n_env {
        return Err(Error::Validation(format!(
            "{} collisions requested on a {n_env}-site environment",
            cfg.n_collisions
        )));
    }
    let ops = probe_operators(probe.kind, cfg.gamma, probe.hamiltonian.clone())?;
    let mut joint = attach_probe(env, probe)?;
    let mut traj = Trajectory::default();
    let mut snapshots = cfg.record_rho.then(Vec::new);

    // gates are cached per environment local dimension
    let mut cache: Vec<(usize, TwoSiteGate)> = Vec::new();
    for i in 0..cfg.n_collisions {
        let de = joint.local_dim(i + 1);
        let gate = match cache.iter().find(|(d, _)| *d == de) {
            Some((_, g)) => g.clone(),
            None => {
                let b = ladder_operators(de)?.b;
                let g = collision_gate(&ops.unit_jump, &ops.hamiltonian, &b, cfg.epsilon(), cfg.dt)?
                    .then_swap()?;
                cache.push((de, g.clone()));
                g
            }
        };
        let w = joint.apply_gate_in_place(&gate.at_site(i), &cfg.trunc, true)?;
        let rho = joint.reduced_density_matrix(i + 1)?;
        let tr = rho.trace()?;
        let pop = rho.matmul(&ops.population)?.trace()?.re;
        traj.times.push((i + 1) as f64 * cfg.dt);
        traj.observable.push(pop);
        traj.trace_errors.push((tr.re - 1.0).abs().max(tr.im.abs()));
        traj.discarded_weights.push(w);
        traj.junction_entropies.push(von_neumann_entropy(&rho)?);
        if let Some(s) = snapshots.as_mut() {
            s.push(rho);
        }
    }
    traj.rho_snapshots = snapshots;
    traj.truncation_warning = joint.cumulative_discarded_weight() > cfg.discard_cap;

    let probe_pos = cfg.n_collisions;
    let rho = joint.reduced_density_matrix(probe_pos)?;
    let (env_after, _) = joint.project_out_site(probe_pos, &dominant_vector(&rho)?)?;
    Ok((traj, env_after))
}

#[derive(Clone, Debug)]
pub struct BackAction {
    pub delta_xi: f64,
    pub profile_before: CorrelationProfile,
    pub profile_after: CorrelationProfile,
}

/// Change of the correlation length caused by the sweep.
pub fn back_action(env_before: &MPSState, env_after: &MPSState, kind: CorrelationKind) -> Result<BackAction> {
    if env_before.local_dims() != env_after.local_dims() {
        return Err(Error::Dimension("environment states differ in shape".into()));
    }
    let n = env_before.n_sites();
    let r = default_reference_site(n);
    let profile_before = environment_correlations(env_before, kind, r, n - 1 - r)?;
    let profile_after = environment_correlations(env_after, kind, r, n - 1 - r)?;
    let delta_xi = (correlation_length(&profile_after)? - correlation_length(&profile_before)?).abs();
    Ok(BackAction {
        delta_xi,
        profile_before,
        profile_after,
    })
}
