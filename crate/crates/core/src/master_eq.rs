//! Second-order time-nonlocal master equation for the probe, driven by a
//! discretized set of noise correlation functions.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::correlations::{fmt_f64, CorrelationKind, CorrelationProfile};
use crate::error::{Error, Result};
use crate::tensor::{eigh, hermitian_expm, DenseTensor, C64, ZERO};

/// `C(τ) = A(1+τ)^(-K) + B e^(-τ/l)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationAnsatz {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub l: f64,
}

impl CorrelationAnsatz {
    pub fn new(a: f64, k: f64, b: f64, l: f64) -> Result<Self> {
        let s = Self { a, k, b, l };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.a >= 0.0
            && self.b >= 0.0
            && self.k > 0.0
            && self.l > 0.0
            && [self.a, self.k, self.b, self.l].iter().all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid ansatz parameters {self:?}")))
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.a, self.k, self.b, self.l]
    }

    pub fn from_array(p: [f64; 4]) -> Self {
        Self {
            a: p[0],
            k: p[1],
            b: p[2],
            l: p[3],
        }
    }
}

pub fn ansatz_eval(a: &CorrelationAnsatz, tau: f64) -> f64 {
    a.a * (1.0 + tau).powf(-a.k) + a.b * (-tau / a.l).exp()
}

/// Default kernel prefactor tying the discrete sum to the collision rate.
pub fn default_scale(dt: f64) -> f64 {
    2.0 / dt
}

/// Noise correlations on the lag grid `τ_k = k·dt`, `k = 0..len`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationSet {
    pub dt: f64,
    pub scale: f64,
    pub c1: Vec<C64>,
    pub c2: Vec<C64>,
    pub c3: Vec<C64>,
    pub c4: Vec<C64>,
}

pub const CORRELATION_SET_COLUMNS: [&str; 9] = [
    "lag", "c1_re", "c1_im", "c2_re", "c2_im", "c3_re", "c3_im", "c4_re", "c4_im",
];

impl CorrelationSet {
    pub fn len(&self) -> usize {
        self.c1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c1.is_empty()
    }

    pub fn lag_grid(&self) -> Vec<f64> {
        (0..self.len()).map(|k| k as f64 * self.dt).collect()
    }

    fn check(&self) -> Result<()> {
        let n = self.c1.len();
        if n == 0 || self.c2.len() != n || self.c3.len() != n || self.c4.len() != n {
            return Err(Error::Shape("correlation set columns differ in length".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Validation("correlation set dt must be positive".into()));
        }
        Ok(())
    }

    pub fn write_csv(&self, w: impl Write, comment: Option<&str>) -> Result<()> {
        let mut w = w;
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CORRELATION_SET_COLUMNS)?;
        for k in 0..self.len() {
            let mut row = vec![k.to_string()];
            for c in [&self.c1, &self.c2, &self.c3, &self.c4] {
                row.push(fmt_f64(c[k].re));
                row.push(fmt_f64(c[k].im));
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Parse the CSV form; `dt` and `scale` are not stored in the table.
    pub fn read_csv(r: impl Read, dt: f64, scale: f64) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let header = rd.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != CORRELATION_SET_COLUMNS {
            return Err(Error::Input(format!("unexpected correlation header {header:?}")));
        }
        let mut set = CorrelationSet {
            dt,
            scale,
            c1: vec![],
            c2: vec![],
            c3: vec![],
            c4: vec![],
        };
        for (row, rec) in rd.records().enumerate() {
            let rec = rec?;
            let f = |k: usize| -> Result<f64> {
                rec[k]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Input(format!("row {} column {}: {e}", row + 1, CORRELATION_SET_COLUMNS[k])))
            };
            let lag: usize = rec[0]
                .trim()
                .parse()
                .map_err(|e| Error::Input(format!("row {}: bad lag: {e}", row + 1)))?;
            if lag != row {
                return Err(Error::Input(format!("row {} has lag {lag}", row + 1)));
            }
            set.c1.push(C64::new(f(1)?, f(2)?));
            set.c2.push(C64::new(f(3)?, f(4)?));
            set.c3.push(C64::new(f(5)?, f(6)?));
            set.c4.push(C64::new(f(7)?, f(8)?));
        }
        set.check()?;
        Ok(set)
    }

    pub fn save_csv(&self, path: &Path, comment: Option<&str>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?, comment)
    }

    pub fn load_csv(path: &Path, dt: f64, scale: f64) -> Result<Self> {
        let f = std::fs::File::open(path)
            .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
        Self::read_csv(f, dt, scale)
    }
}

/// Correlation set for lags `0..=n_steps` from the ansatz, with the Gaussian
/// relations `c1 = c2` off the origin, `c1[0] = scale + c2[0]`, `c3 = c4 = 0`.
pub fn build_correlations(a: &CorrelationAnsatz, dt: f64, n_steps: usize, scale: f64) -> Result<CorrelationSet> {
    if !(dt > 0.0) {
        return Err(Error::Validation(format!("dt must be positive, got {dt}")));
    }
    a.validate()?;
    let c2: Vec<C64> = (0..=n_steps)
        .map(|k| C64::new(scale * ansatz_eval(a, k as f64), 0.0))
        .collect();
    let mut c1 = c2.clone();
    c1[0] += scale;
    Ok(CorrelationSet {
        dt,
        scale,
        c1,
        c2,
        c3: vec![ZERO; n_steps + 1],
        c4: vec![ZERO; n_steps + 1],
    })
}

/// Correlation set taken directly from measured profiles of kinds 1..4.
pub fn correlations_from_profile(profiles: &[CorrelationProfile; 4], dt: f64, scale: f64) -> Result<CorrelationSet> {
    let n = profiles[0].values.len();
    for (i, (p, want)) in profiles.iter().zip(CorrelationKind::ALL).enumerate() {
        if p.kind != want {
            return Err(Error::Validation(format!(
                "profile {i} has kind {}, expected {}",
                p.kind.index(),
                want.index()
            )));
        }
        if p.values.len() != n || p.reference_site != profiles[0].reference_site {
            return Err(Error::Shape("profiles do not share a grid".into()));
        }
    }
    let col = |p: &CorrelationProfile| p.values.iter().map(|z| z * scale).collect::<Vec<_>>();
    let set = CorrelationSet {
        dt,
        scale,
        c1: col(&profiles[0]),
        c2: col(&profiles[1]),
        c3: col(&profiles[2]),
        c4: col(&profiles[3]),
    };
    set.check()?;
    Ok(set)
}

/// `e^(iH τ) J e^(-iH τ)`.
pub fn interaction_picture_jump(j: &DenseTensor, h_s: &DenseTensor, tau: f64) -> Result<DenseTensor> {
    let u = hermitian_expm(h_s, tau)?; // e^{-iHτ}
    u.adjoint()?.matmul(j)?.matmul(&u)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MESolution {
    pub times: Vec<f64>,
    pub rho: Vec<DenseTensor>,
    pub observable: Vec<f64>,
    pub trace_errors: Vec<f64>,
}

pub const ME_SOLUTION_COLUMNS: [&str; 4] = ["step", "time", "observable", "trace_error"];

impl MESolution {
    pub fn write_csv(&self, w: impl Write, comment: Option<&str>) -> Result<()> {
        let mut w = w;
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(ME_SOLUTION_COLUMNS)?;
        for i in 0..self.times.len() {
            out.write_record(&[
                i.to_string(),
                fmt_f64(self.times[i]),
                fmt_f64(self.observable[i]),
                fmt_f64(self.trace_errors[i]),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, comment: Option<&str>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?, comment)
    }
}

/// Time stepper for the master equation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stepper {
    /// Explicit second-order Heun on the full right-hand side.
    #[default]
    Heun,
    /// Forward Euler, memory sum ending at the current state. Step `i → i+1`
    /// then equals the second-order expansion of collision `i+1`, lag by lag.
    Collision,
}

/// Everything `integrate_me` needs besides the correlations and grid.
#[derive(Clone, Debug)]
pub struct MeInputs {
    pub jump: DenseTensor,
    pub hamiltonian: DenseTensor,
    /// Operator whose expectation is recorded each step.
    pub observable: DenseTensor,
    /// `⟨B⟩` for the mean-field term `-i[J⟨B⟩* + J†⟨B⟩, ρ]`.
    pub mean_field: C64,
    pub stepper: Stepper,
}

impl MeInputs {
    /// Records the number operator `diag(0, 1, …)` as the observable.
    pub fn new(jump: DenseTensor, hamiltonian: DenseTensor) -> Self {
        let d = jump.nrows();
        let n = DenseTensor::diag(&(0..d).map(|k| C64::new(k as f64, 0.0)).collect::<Vec<_>>());
        Self {
            jump,
            hamiltonian,
            observable: n,
            mean_field: ZERO,
            stepper: Stepper::Heun,
        }
    }
}

pub fn integrate_me(
    j: &DenseTensor,
    h_s: &DenseTensor,
    corr: &CorrelationSet,
    rho0: &DenseTensor,
    dt: f64,
    n_steps: usize,
) -> Result<MESolution> {
    integrate_me_with(&MeInputs::new(j.clone(), h_s.clone()), corr, rho0, dt, n_steps)
}

// Small dense helpers on row-major d×d slices.
fn mm(a: &[C64], b: &[C64], d: usize) -> Vec<C64> {
    let mut out = vec![ZERO; d * d];
    for i in 0..d {
        for k in 0..d {
            let aik = a[i * d + k];
            if aik == ZERO {
                continue;
            }
            for j in 0..d {
                out[i * d + j] += aik * b[k * d + j];
            }
        }
    }
    out
}

fn add_scaled(acc: &mut [C64], x: &[C64], c: C64) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += c * b;
    }
}

fn dagger(a: &[C64], d: usize) -> Vec<C64> {
    let mut out = vec![ZERO; d * d];
    for i in 0..d {
        for j in 0..d {
            out[j * d + i] = a[i * d + j].conj();
        }
    }
    out
}

struct Kernel<'a> {
    d: usize,
    dt: f64,
    corr: &'a CorrelationSet,
    jd: Vec<C64>,
    /// `J_{-kΔt}` for every lag, or a single entry when `H_S = 0`.
    j_lag: Vec<Vec<C64>>,
    /// Coherent generator `H_S + J⟨B⟩* + J†⟨B⟩`.
    h_eff: Vec<C64>,
    stationary: bool,
}

impl Kernel<'_> {
    fn weight(&self, lag: usize) -> f64 {
        if lag == 0 {
            0.5 * self.dt
        } else {
            self.dt
        }
    }

    /// Right-hand side at the last history entry.
    fn rhs(&self, history: &[Vec<C64>]) -> Vec<C64> {
        let d = self.d;
        let i = history.len() - 1;
        let jd = &self.jd;
        let mut x = vec![ZERO; d * d];
        if self.stationary {
            let mut s = [vec![ZERO; d * d], vec![ZERO; d * d], vec![ZERO; d * d], vec![ZERO; d * d]];
            for (jj, rho) in history.iter().enumerate() {
                let k = i - jj;
                let w = self.weight(k);
                let cs = [self.corr.c1[k], self.corr.c2[k], self.corr.c3[k], self.corr.c4[k]];
                for (sn, c) in s.iter_mut().zip(cs) {
                    if c != ZERO {
                        add_scaled(sn, rho, c * w);
                    }
                }
            }
            let j = &self.j_lag[0];
            let one = C64::new(1.0, 0.0);
            let jdj = mm(jd, j, d);
            let jjd = mm(j, jd, d);
            // c1: J†J S − J S J†
            add_scaled(&mut x, &mm(&jdj, &s[0], d), one);
            add_scaled(&mut x, &mm(&mm(j, &s[0], d), jd, d), -one);
            // c2: J J† S − J† S J
            add_scaled(&mut x, &mm(&jjd, &s[1], d), one);
            add_scaled(&mut x, &mm(&mm(jd, &s[1], d), j, d), -one);
            // c3: J J S − J S J
            if s[2].iter().any(|z| *z != ZERO) {
                add_scaled(&mut x, &mm(&mm(j, j, d), &s[2], d), one);
                add_scaled(&mut x, &mm(&mm(j, &s[2], d), j, d), -one);
            }
            // c4: J†J† S − J† S J†
            if s[3].iter().any(|z| *z != ZERO) {
                add_scaled(&mut x, &mm(&mm(jd, jd, d), &s[3], d), one);
                add_scaled(&mut x, &mm(&mm(jd, &s[3], d), jd, d), -one);
            }
        } else {
            for (jj, rho) in history.iter().enumerate() {
                let k = i - jj;
                let w = self.weight(k);
                let jt = &self.j_lag[k];
                let jtd = dagger(jt, d);
                let c1 = self.corr.c1[k] * w;
                let c2 = self.corr.c2[k] * w;
                let c3 = self.corr.c3[k] * w;
                let c4 = self.corr.c4[k] * w;
                let jt_rho = mm(jt, rho, d);
                if c1 != ZERO {
                    add_scaled(&mut x, &mm(jd, &jt_rho, d), c1);
                    add_scaled(&mut x, &mm(&jt_rho, jd, d), -c1);
                }
                let jd_rho = mm(jd, rho, d);
                if c2 != ZERO {
                    add_scaled(&mut x, &mm(jt, &jd_rho, d), c2);
                    add_scaled(&mut x, &mm(&jd_rho, jt, d), -c2);
                }
                if c3 != ZERO {
                    add_scaled(&mut x, &mm(&self.j_lag[0], &jt_rho, d), c3);
                    add_scaled(&mut x, &mm(&jt_rho, &self.j_lag[0], d), -c3);
                }
                if c4 != ZERO {
                    let jtd_rho = mm(&jtd, rho, d);
                    add_scaled(&mut x, &mm(jd, &jtd_rho, d), c4);
                    add_scaled(&mut x, &mm(&jtd_rho, jd, d), -c4);
                }
            }
        }
        // -(1/2)(X + X†) − i[H, ρ]
        let rho = &history[i];
        let hr = mm(&self.h_eff, rho, d);
        let rh = mm(rho, &self.h_eff, d);
        let mut out = vec![ZERO; d * d];
        let mi = C64::new(0.0, -1.0);
        for r in 0..d {
            for c in 0..d {
                let idx = r * d + c;
                out[idx] = -0.5 * (x[idx] + x[c * d + r].conj()) + mi * (hr[idx] - rh[idx]);
            }
        }
        out
    }
}

fn check_density_matrix(rho: &DenseTensor, d: usize) -> Result<()> {
    if rho.shape() != [d, d] {
        return Err(Error::Dimension(format!(
            "rho0 has shape {:?}, expected [{d}, {d}]",
            rho.shape()
        )));
    }
    if rho.hermiticity_error()? > 1e-10 {
        return Err(Error::Validation("rho0 is not Hermitian".into()));
    }
    let tr = rho.trace()?;
    if (tr - C64::new(1.0, 0.0)).norm() > 1e-10 {
        return Err(Error::Validation(format!("rho0 has trace {tr}")));
    }
    if eigh(rho)?.values[0] < -1e-10 {
        return Err(Error::Validation("rho0 is not positive semidefinite".into()));
    }
    Ok(())
}

/// Integration on `t_i = i·dt`, `i = 0..=n_steps`, Heun unless `inputs.stepper` says otherwise. The memory sum at step
/// `i` runs over the stored history `ρ_0 … ρ_i` with weight `dt/2` on the
/// current entry and `dt` on earlier ones.
pub fn integrate_me_with(
    inputs: &MeInputs,
    corr: &CorrelationSet,
    rho0: &DenseTensor,
    dt: f64,
    n_steps: usize,
) -> Result<MESolution> {
    let d = inputs.jump.nrows();
    if inputs.jump.shape() != [d, d] || inputs.hamiltonian.shape() != [d, d] || inputs.observable.shape() != [d, d] {
        return Err(Error::Dimension("jump, Hamiltonian and observable must be square and equal size".into()));
    }
    if inputs.hamiltonian.hermiticity_error()? > 1e-12 {
        return Err(Error::Validation("probe Hamiltonian is not Hermitian".into()));
    }
    check_density_matrix(rho0, d)?;
    corr.check()?;
    if !(dt > 0.0) {
        return Err(Error::Validation(format!("dt must be positive, got {dt}")));
    }
    if (corr.dt - dt).abs() > 1e-12 * dt {
        return Err(Error::Validation(format!(
            "correlation grid spacing {} does not match dt {dt}",
            corr.dt
        )));
    }
    if corr.len() < n_steps + 1 {
        return Err(Error::Validation(format!(
            "correlation set covers {} lags, {n_steps} steps need {}",
            corr.len(),
            n_steps + 1
        )));
    }

    let stationary = inputs.hamiltonian.data().iter().all(|z| *z == ZERO);
    let j_lag = if stationary {
        vec![inputs.jump.data().to_vec()]
    } else {
        (0..=n_steps)
            .map(|k| {
                interaction_picture_jump(&inputs.jump, &inputs.hamiltonian, -(k as f64) * dt)
                    .map(|m| m.into_data())
            })
            .collect::<Result<Vec<_>>>()?
    };
    let mf = inputs.jump.scale(inputs.mean_field.conj()).add(&inputs.jump.adjoint()?.scale(inputs.mean_field))?;
    let kernel = Kernel {
        d,
        dt,
        corr,
        jd: inputs.jump.adjoint()?.into_data(),
        j_lag,
        h_eff: inputs.hamiltonian.add(&mf)?.into_data(),
        stationary,
    };

    let obs = inputs.observable.data();
    let measure = |rho: &[C64]| -> (f64, f64) {
        let mut tr = ZERO;
        let mut o = ZERO;
        for r in 0..d {
            tr += rho[r * d + r];
            for c in 0..d {
                o += obs[r * d + c] * rho[c * d + r];
            }
        }
        (o.re, (tr - C64::new(1.0, 0.0)).norm())
    };

    let mut history: Vec<Vec<C64>> = Vec::with_capacity(n_steps + 1);
    history.push(rho0.data().to_vec());
    let (o0, e0) = measure(&history[0]);
    let mut observable = vec![o0];
    let mut trace_errors = vec![e0];
    for _ in 0..n_steps {
        let f0 = kernel.rhs(&history);
        let cur = history.last().unwrap().clone();
        let next: Vec<C64> = match inputs.stepper {
            Stepper::Collision => {
                history.push(Vec::new());
                cur.iter().zip(&f0).map(|(r, f)| r + f * dt).collect()
            }
            Stepper::Heun => {
                let pred: Vec<C64> = cur.iter().zip(&f0).map(|(r, f)| r + f * dt).collect();
                history.push(pred);
                let f1 = kernel.rhs(&history);
                cur.iter()
                    .zip(f0.iter().zip(&f1))
                    .map(|(r, (a, b))| r + (a + b) * (0.5 * dt))
                    .collect()
            }
        };
        if next.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numeric("master equation diverged".into()));
        }
        let (o, e) = measure(&next);
        observable.push(o);
        trace_errors.push(e);
        *history.last_mut().unwrap() = next;
    }
    let rho = history
        .into_iter()
        .map(|v| DenseTensor::new(vec![d, d], v))
        .collect::<Result<Vec<_>>>()?;
    Ok(MESolution {
        times: (0..=n_steps).map(|i| i as f64 * dt).collect(),
        rho,
        observable,
        trace_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{ladder_operators, probe_operators, ProbeKind};
    use crate::testing::{random_hermitian, random_matrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn excited_qubit() -> DenseTensor {
        DenseTensor::from_real(2, 2, &[0.0, 0.0, 0.0, 1.0]).unwrap()
    }

    fn vacuum_set(dt: f64, n: usize) -> CorrelationSet {
        build_correlations(&CorrelationAnsatz::new(0.0, 1.0, 0.0, 1.0).unwrap(), dt, n, default_scale(dt)).unwrap()
    }

    #[test]
    fn ansatz_values() {
        let a = CorrelationAnsatz::new(0.0, 1.0, 1.0, 2.0).unwrap();
        assert_eq!(ansatz_eval(&a, 0.0), 1.0);
        let a = CorrelationAnsatz::new(1.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(ansatz_eval(&a, 3.0), 0.25);
        let a = CorrelationAnsatz::new(0.3, 1.7, 0.5, 4.0).unwrap();
        let want = 0.3 * 3f64.powf(-1.7) + 0.5 * (-0.5f64).exp();
        assert!((ansatz_eval(&a, 2.0) - want).abs() < 1e-14);
        assert!(CorrelationAnsatz::new(-0.1, 1.0, 0.0, 1.0).is_err());
        assert!(CorrelationAnsatz::new(0.1, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn ansatz_json_names() {
        let a = CorrelationAnsatz::new(0.5, 1.0, 0.3, 2.0).unwrap();
        let v: serde_json::Value = serde_json::to_value(a).unwrap();
        assert_eq!(v["A"], 0.5);
        assert_eq!(v["l"], 2.0);
    }

    #[test]
    fn vacuum_relations() {
        let set = vacuum_set(0.1, 5);
        assert_eq!(set.c1[0], C64::new(20.0, 0.0));
        assert!(set.c1[1..].iter().chain(&set.c2).all(|z| *z == ZERO));
        let s = build_correlations(&CorrelationAnsatz::new(0.0, 1.0, 1.0, 3.0).unwrap(), 0.1, 3, 1.0).unwrap();
        assert_eq!(s.c1[0], C64::new(2.0, 0.0));
        assert_eq!(s.c2[0], C64::new(1.0, 0.0));
    }

    #[test]
    fn jump_in_rotating_frame() {
        let w = 1.7;
        let h = DenseTensor::from_real(2, 2, &[-w / 2.0, 0.0, 0.0, w / 2.0]).unwrap();
        let sm = ladder_operators(2).unwrap().b;
        for tau in [0.0, 0.3, -1.1] {
            let jt = interaction_picture_jump(&sm, &h, tau).unwrap();
            let want = sm.scale(C64::new(0.0, -w * tau).exp());
            assert!(jt.max_abs_diff(&want) < 1e-12);
        }
        let jt = interaction_picture_jump(&sm, &DenseTensor::zeros(&[2, 2]), 2.0).unwrap();
        assert!(jt.max_abs_diff(&sm) < 1e-15);
    }

    #[test]
    fn no_noise_keeps_rho() {
        let dt = 0.05;
        let zero = CorrelationSet {
            dt,
            scale: 0.0,
            c1: vec![ZERO; 21],
            c2: vec![ZERO; 21],
            c3: vec![ZERO; 21],
            c4: vec![ZERO; 21],
        };
        let sm = ladder_operators(2).unwrap().b;
        let rho0 = DenseTensor::from_real(2, 2, &[0.5, 0.5, 0.5, 0.5]).unwrap();
        let sol = integrate_me(&sm, &DenseTensor::zeros(&[2, 2]), &zero, &rho0, dt, 20).unwrap();
        assert!(sol.rho.iter().all(|r| r.max_abs_diff(&rho0) < 1e-15));

        let w = 2.0;
        let h = DenseTensor::from_real(2, 2, &[-w / 2.0, 0.0, 0.0, w / 2.0]).unwrap();
        let dt = 0.01;
        let zero = CorrelationSet { dt, ..zero };
        let sol = integrate_me(&sm, &h, &zero, &rho0, dt, 20).unwrap();
        for (t, r) in sol.times.iter().zip(&sol.rho) {
            let c = r.get(&[0, 1]);
            assert!((c.norm() - 0.5).abs() < 1e-4);
            // ρ01 ∝ e^{iωt} for H = diag(-ω/2, ω/2)
            let phase = c.arg();
            let want = (w * t + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
            assert!((phase - want).abs() < 1e-3, "{phase} vs {want}");
        }
    }

    #[test]
    fn markovian_qubit_decay() {
        let (gamma, dt, n) = (1.0, 0.01, 400);
        let ops = probe_operators(ProbeKind::Qubit, gamma, None).unwrap();
        let sol = integrate_me(&ops.jump, &ops.hamiltonian, &vacuum_set(dt, n), &excited_qubit(), dt, n).unwrap();
        for (t, p) in sol.times.iter().zip(&sol.observable) {
            let want = (-gamma * t).exp();
            assert!((p - want).abs() / want < 0.005, "t={t}: {p} vs {want}");
        }
    }

    #[test]
    fn markovian_boson_decay() {
        let (gamma, dt, n) = (0.5, 0.02, 300);
        let ops = probe_operators(ProbeKind::Boson { levels: 4 }, gamma, None).unwrap();
        let rho0 = DenseTensor::diag(&[ZERO, ZERO, ZERO, C64::new(1.0, 0.0)]);
        let sol = integrate_me(&ops.jump, &ops.hamiltonian, &vacuum_set(dt, n), &rho0, dt, n).unwrap();
        for (t, p) in sol.times.iter().zip(&sol.observable) {
            let want = 3.0 * (-gamma * t).exp();
            assert!((p - want).abs() / want < 0.005);
        }
    }

    #[test]
    fn boson_population_follows_kernel_sum() {
        // with H_S = 0: d⟨n⟩/dt = 2γ Σ_j w_j C(i-j)/dt − γ⟨n⟩
        // enough levels that the truncated ladder does not matter over this horizon
        let (gamma, dt, n) = (1.0, 0.01, 30);
        let ans = CorrelationAnsatz::new(0.2, 1.5, 0.1, 3.0).unwrap();
        let levels = 14;
        let ops = probe_operators(ProbeKind::Boson { levels }, gamma, None).unwrap();
        let mut occ = vec![ZERO; levels];
        occ[1] = C64::new(1.0, 0.0);
        let rho0 = DenseTensor::diag(&occ);
        let corr = build_correlations(&ans, dt, n, default_scale(dt)).unwrap();
        let sol = integrate_me(&ops.jump, &ops.hamiltonian, &corr, &rho0, dt, n).unwrap();
        // reference scalar Heun on the same discretization
        let src = |i: usize| -> f64 {
            (0..=i)
                .map(|j| {
                    let w = if j == i { 0.5 } else { 1.0 };
                    2.0 * gamma * w * ansatz_eval(&ans, (i - j) as f64)
                })
                .sum()
        };
        let mut m = 1.0;
        for i in 0..n {
            let f0 = src(i) - gamma * m;
            let pred = m + dt * f0;
            let f1 = src(i + 1) - gamma * pred;
            m += 0.5 * dt * (f0 + f1);
            assert!((sol.observable[i + 1] - m).abs() < 1e-9, "step {i}: {} vs {m}", sol.observable[i + 1]);
        }
    }

    #[test]
    fn collision_stepper_is_forward_euler() {
        let (gamma, dt, n) = (1.0, 0.01, 30);
        let ops = probe_operators(ProbeKind::Qubit, gamma, None).unwrap();
        let mut inputs = MeInputs::new(ops.jump, ops.hamiltonian);
        inputs.stepper = Stepper::Collision;
        let sol = integrate_me_with(&inputs, &vacuum_set(dt, n), &excited_qubit(), dt, n).unwrap();
        for (i, p) in sol.observable.iter().enumerate() {
            assert!((p - (1.0 - gamma * dt).powi(i as i32)).abs() < 1e-13);
        }

        let levels = 14;
        let ans = CorrelationAnsatz::new(0.2, 1.5, 0.1, 3.0).unwrap();
        let ops = probe_operators(ProbeKind::Boson { levels }, gamma, None).unwrap();
        let mut inputs = MeInputs::new(ops.jump, ops.hamiltonian);
        inputs.stepper = Stepper::Collision;
        let mut occ = vec![ZERO; levels];
        occ[1] = C64::new(1.0, 0.0);
        let corr = build_correlations(&ans, dt, n, default_scale(dt)).unwrap();
        let sol = integrate_me_with(&inputs, &corr, &DenseTensor::diag(&occ), dt, n).unwrap();
        let mut m = 1.0;
        for i in 0..n {
            let src: f64 = (0..=i)
                .map(|j| if j == i { 1.0 } else { 2.0 } * gamma * ansatz_eval(&ans, (i - j) as f64))
                .sum();
            m += dt * (src - gamma * m);
            assert!((sol.observable[i + 1] - m).abs() < 1e-9);
        }
    }

    #[test]
    fn trace_and_hermiticity_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..5 {
            let d = 3;
            let j = random_matrix(&mut rng, d, d).scale_real(0.5);
            let h = random_hermitian(&mut rng, d);
            let n = 40;
            let dt = 0.02;
            let rnd = |rng: &mut ChaCha8Rng| -> Vec<C64> {
                (0..=n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
            };
            let corr = CorrelationSet {
                dt,
                scale: 1.0,
                c1: rnd(&mut rng),
                c2: rnd(&mut rng),
                c3: rnd(&mut rng),
                c4: rnd(&mut rng),
            };
            let psi = random_matrix(&mut rng, d, 1);
            let rho0 = psi.matmul(&psi.adjoint().unwrap()).unwrap();
            let rho0 = rho0.scale_real(1.0 / rho0.trace().unwrap().re);
            let sol = integrate_me(&j, &h, &corr, &rho0, dt, n).unwrap();
            assert!(sol.trace_errors.iter().all(|e| *e < 1e-8));
            assert!(sol.rho.iter().all(|r| r.hermiticity_error().unwrap() < 1e-10));
        }
    }

    #[test]
    fn halving_dt_converges() {
        let ans = CorrelationAnsatz::new(0.1, 2.0, 0.2, 1.5).unwrap();
        let ops = probe_operators(ProbeKind::Qubit, 1.0, None).unwrap();
        let run = |dt: f64, n: usize| {
            let mut c = build_correlations(&ans, dt, n, default_scale(dt)).unwrap();
            // smooth part has a fixed physical scale; only the delta part scales with 1/dt
            for k in 0..=n {
                let v = 50.0 * ansatz_eval(&ans, k as f64 * dt / 0.02);
                c.c2[k] = C64::new(v, 0.0);
                c.c1[k] = c.c2[k] + if k == 0 { C64::new(default_scale(dt), 0.0) } else { ZERO };
            }
            integrate_me(&ops.jump, &ops.hamiltonian, &c, &excited_qubit(), dt, n).unwrap()
        };
        let coarse = run(0.02, 50);
        let fine = run(0.01, 100);
        let finer = run(0.005, 200);
        let diff = |a: &MESolution, b: &MESolution, stride: usize| {
            a.observable
                .iter()
                .enumerate()
                .map(|(i, x)| (x - b.observable[i * stride]).abs())
                .fold(0.0, f64::max)
        };
        let e1 = diff(&coarse, &fine, 2);
        let e2 = diff(&fine, &finer, 2);
        assert!(e2 < 0.7 * e1, "{e1} then {e2}");
    }

    #[test]
    fn grid_mismatch_rejected() {
        let ops = probe_operators(ProbeKind::Qubit, 1.0, None).unwrap();
        let set = vacuum_set(0.01, 10);
        assert!(integrate_me(&ops.jump, &ops.hamiltonian, &set, &excited_qubit(), 0.01, 11).is_err());
        assert!(integrate_me(&ops.jump, &ops.hamiltonian, &set, &excited_qubit(), 0.02, 5).is_err());
        let bad = DenseTensor::from_real(2, 2, &[0.5, 0.0, 0.0, 0.6]).unwrap();
        assert!(integrate_me(&ops.jump, &ops.hamiltonian, &set, &bad, 0.01, 5).is_err());
    }

    #[test]
    fn profiles_drive_the_same_set() {
        let mk = |kind, vals: &[f64]| CorrelationProfile {
            kind,
            reference_site: 0,
            values: vals.iter().map(|&x| C64::new(x, 0.0)).collect(),
        };
        let profiles = [
            mk(CorrelationKind::One, &[1.0, 0.0, 0.0]),
            mk(CorrelationKind::Two, &[0.0, 0.0, 0.0]),
            mk(CorrelationKind::Three, &[0.0, 0.0, 0.0]),
            mk(CorrelationKind::Four, &[0.0, 0.0, 0.0]),
        ];
        let set = correlations_from_profile(&profiles, 0.1, 20.0).unwrap();
        assert_eq!(set, vacuum_set(0.1, 2));
        let mut swapped = profiles.clone();
        swapped.swap(0, 1);
        assert!(correlations_from_profile(&swapped, 0.1, 20.0).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let ans = CorrelationAnsatz::new(0.2, 1.1, 0.3, 2.0).unwrap();
        let set = build_correlations(&ans, 0.01, 7, 200.0).unwrap();
        let mut buf = Vec::new();
        set.write_csv(&mut buf, Some("collisim")).unwrap();
        let back = CorrelationSet::read_csv(buf.as_slice(), 0.01, 200.0).unwrap();
        assert_eq!(back, set);
    }

    proptest::proptest! {
        #[test]
        fn ansatz_sets_satisfy_relations(a in 0.0f64..1.0, k in 0.1f64..3.0, b in 0.0f64..1.0, l in 0.1f64..10.0, scale in 0.1f64..300.0) {
            let set = build_correlations(&CorrelationAnsatz::new(a, k, b, l).unwrap(), 0.01, 30, scale).unwrap();
            proptest::prop_assert!((set.c1[0] - set.c2[0] - C64::new(scale, 0.0)).norm() < 1e-12 * scale.max(1.0));
            for i in 1..=30 {
                proptest::prop_assert_eq!(set.c1[i], set.c2[i]);
            }
            proptest::prop_assert!(set.c3.iter().chain(&set.c4).all(|z| *z == ZERO));
        }
    }
}
