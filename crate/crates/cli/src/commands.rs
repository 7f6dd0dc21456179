use std::fs;
use std::path::{Path, PathBuf};

use collisim_core::collision::{sweep, Trajectory};
use collisim_core::correlations::{
    default_reference_site, environment_correlations, CorrelationKind,
};
use collisim_core::derive_seed;
use collisim_core::dmrg::{dmrg_ground_state, DmrgConfig, GroundState};
use collisim_core::error::{Error, Result};
use collisim_core::fit::{direct_xi, fit_trajectory, FitConfig, FitResult, MeProblem};
use collisim_core::lattice::{build_bose_hubbard_mpo, BoseHubbardParams};
use collisim_core::master_eq::{build_correlations, default_scale, integrate_me_with, CorrelationSet};
use collisim_core::mps::MPSState;
use collisim_core::parallel::Exec;
use serde::Serialize;

use crate::config::ExperimentConfig;

pub const GROUND_STATE_FILE: &str = "ground_state.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";

const KINDS: [CorrelationKind; 4] = [
    CorrelationKind::One,
    CorrelationKind::Two,
    CorrelationKind::Three,
    CorrelationKind::Four,
];

/// Everything a command needs besides its own input paths.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub exec: Exec,
    comment: String,
}

impl Context {
    pub fn new(cfg: ExperimentConfig, out: PathBuf, exec: Exec) -> Result<Self> {
        fs::create_dir_all(&out)
            .map_err(|e| Error::Input(format!("cannot create output dir {}: {e}", out.display())))?;
        let comment = format!("collisim {} config={}", env!("CARGO_PKG_VERSION"), cfg.hash());
        Ok(Self {
            cfg,
            out,
            exec,
            comment,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.path(name), text)?;
        Ok(())
    }

    fn csv_writer(&self, name: &str) -> Result<csv::Writer<fs::File>> {
        use std::io::Write;
        let mut f = fs::File::create(self.path(name))?;
        writeln!(f, "# {}", self.comment)?;
        Ok(csv::Writer::from_writer(f))
    }
}

// Scan point k uses streams 2k (DMRG) and 2k+1 (GA); single commands are point 0.
fn dmrg_seed(global: u64, point: usize) -> u64 {
    derive_seed(global, 2 * point as u64)
}

fn fit_seed(global: u64, point: usize) -> u64 {
    derive_seed(global, 2 * point as u64 + 1)
}

fn solve_ground_state(model: &BoseHubbardParams, dmrg: &DmrgConfig, seed: u64) -> Result<GroundState> {
    let cfg = DmrgConfig { seed, ..dmrg.clone() };
    dmrg_ground_state(&build_bose_hubbard_mpo(model)?, &cfg)
}

/// Direct `ξ` from the centre of the chain, `None` on an empty profile.
fn xi_or_none(state: &MPSState) -> Result<Option<f64>> {
    match direct_xi(state) {
        Ok((xi, _)) => Ok(Some(xi)),
        Err(Error::UndefinedLength(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn xi_max_lag(n_sites: usize) -> usize {
    n_sites - 1 - default_reference_site(n_sites)
}

fn fit_config(cfg: &FitConfig, seed: u64) -> FitConfig {
    FitConfig { seed, ..cfg.clone() }
}

#[derive(Serialize)]
struct GroundStateSummary {
    collisim: &'static str,
    config_hash: String,
    energy: f64,
    xi_direct: Option<f64>,
    converged: bool,
    sweeps: usize,
    max_bond_dim: usize,
    discarded_weight: f64,
    dmrg_seed: u64,
}

pub fn ground_state(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let seed = dmrg_seed(cfg.seed, 0);
    let gs = solve_ground_state(&cfg.model, &cfg.dmrg, seed)?;
    gs.state.save(&ctx.path(GROUND_STATE_FILE))?;

    let n = gs.state.n_sites();
    let r = default_reference_site(n);
    for kind in KINDS {
        let profile = environment_correlations(&gs.state, kind, r, n - 1 - r)?;
        profile.save_csv(&ctx.path(&format!("correlations_c{}.csv", kind.index())), Some(&ctx.comment))?;
    }

    let mut log = ctx.csv_writer("dmrg_log.csv")?;
    log.write_record(["sweep", "energy"])?;
    for (i, e) in gs.sweep_energies.iter().enumerate() {
        log.write_record([(i + 1).to_string(), e.to_string()])?;
    }
    log.flush()?;

    let summary = GroundStateSummary {
        collisim: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.hash(),
        energy: gs.energy,
        xi_direct: xi_or_none(&gs.state)?,
        converged: gs.converged,
        sweeps: gs.sweep_energies.len(),
        max_bond_dim: gs.state.max_bond_dim(),
        discarded_weight: gs.state.cumulative_discarded_weight(),
        dmrg_seed: seed,
    };
    ctx.write_json("summary.json", &summary)?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

fn load_environment(ctx: &Context, path: Option<&Path>) -> Result<MPSState> {
    let path = path.map(Path::to_path_buf).unwrap_or_else(|| ctx.path(GROUND_STATE_FILE));
    if !path.exists() {
        return Err(Error::Input(format!("ground state {} not found", path.display())));
    }
    let state = MPSState::load(&path)?;
    let m = &ctx.cfg.model;
    if state.n_sites() != m.n_sites || state.local_dims().iter().any(|&d| d != m.local_dim) {
        return Err(Error::Validation(format!(
            "ground state {} has {} sites with local dims {:?}, config wants {} sites of dim {}",
            path.display(),
            state.n_sites(),
            state.local_dims(),
            m.n_sites,
            m.local_dim
        )));
    }
    Ok(state)
}

#[derive(Serialize)]
struct BackActionReport {
    collisim: &'static str,
    config_hash: String,
    xi_before: Option<f64>,
    xi_after: Option<f64>,
    delta_xi: Option<f64>,
    final_population: f64,
    truncation_warning: bool,
}

fn delta(before: Option<f64>, after: Option<f64>) -> Option<f64> {
    Some((after? - before?).abs())
}

pub fn run_sweep(ctx: &Context, ground_state: Option<&Path>) -> Result<()> {
    let env = load_environment(ctx, ground_state)?;
    let (traj, env_after) = sweep(&env, &ctx.cfg.probe_spec()?, &ctx.cfg.collision_config()?)?;
    traj.save_csv(&ctx.path(TRAJECTORY_FILE), Some(&ctx.comment))?;
    if let Some(json) = traj.snapshots_json()? {
        fs::write(ctx.path("rho_snapshots.json"), json)?;
    }
    env_after.save(&ctx.path("env_after.json"))?;

    let xi_before = xi_or_none(&env)?;
    let xi_after = xi_or_none(&env_after)?;
    let report = BackActionReport {
        collisim: env!("CARGO_PKG_VERSION"),
        config_hash: ctx.cfg.hash(),
        xi_before,
        xi_after,
        delta_xi: delta(xi_before, xi_after),
        final_population: *traj.observable.last().expect("at least one collision"),
        truncation_warning: traj.truncation_warning,
    };
    ctx.write_json("backaction.json", &report)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn check_trajectory_grid(traj: &Trajectory, ctx: &Context) -> Result<()> {
    let c = &ctx.cfg.collisions;
    if traj.len() != c.n_collisions {
        return Err(Error::Input(format!(
            "trajectory has {} rows, config expects {} collisions",
            traj.len(),
            c.n_collisions
        )));
    }
    for (i, t) in traj.times.iter().enumerate() {
        let want = (i + 1) as f64 * c.dt;
        if (t - want).abs() > 1e-9 * want.max(1.0) {
            return Err(Error::Input(format!("trajectory time {t} at row {} does not match dt {}", i + 1, c.dt)));
        }
    }
    Ok(())
}

pub fn fit(ctx: &Context, trajectory: Option<&Path>, ground_state: Option<&Path>) -> Result<()> {
    let cfg = &ctx.cfg;
    let path = trajectory.map(Path::to_path_buf).unwrap_or_else(|| ctx.path(TRAJECTORY_FILE));
    let traj = Trajectory::load_csv(&path)?;
    check_trajectory_grid(&traj, ctx)?;
    let xi_direct = match ground_state {
        Some(p) => xi_or_none(&load_environment(ctx, Some(p))?)?,
        None => None,
    };
    let problem = MeProblem::for_sweep(&cfg.probe_spec()?, &cfg.collision_config()?, cfg.fit.stepper)?;
    let fit_cfg = fit_config(&cfg.fit, fit_seed(cfg.seed, 0));
    let mut result = fit_trajectory(&traj, &problem, &fit_cfg, xi_max_lag(cfg.model.n_sites), &ctx.exec)?;
    result.xi_direct = xi_direct;
    ctx.write_json("fit.json", &result)?;
    println!(
        "{}",
        serde_json::json!({"objective": result.objective, "xi_fitted": result.xi_fitted, "xi_direct": result.xi_direct})
    );
    Ok(())
}

pub fn me(ctx: &Context, correlations: Option<&Path>) -> Result<()> {
    let cfg = &ctx.cfg;
    let collisions = cfg.collision_config()?;
    let (dt, n) = (collisions.dt, collisions.n_collisions);
    let csv_path = correlations.map(Path::to_path_buf).or_else(|| cfg.me.correlations.clone());
    let corr = match (&csv_path, &cfg.me.ansatz) {
        (Some(p), _) => CorrelationSet::load_csv(p, dt, default_scale(dt))?,
        (None, Some(a)) => build_correlations(a, dt, n, default_scale(dt))?,
        (None, None) => {
            return Err(Error::Validation(
                "me needs a correlation CSV (--correlations or me.correlations) or me.ansatz".into(),
            ))
        }
    };
    if corr.len() < n + 1 {
        return Err(Error::Input(format!("correlation set has {} lags, {} steps need {}", corr.len(), n, n + 1)));
    }
    let problem = MeProblem::for_sweep(&cfg.probe_spec()?, &collisions, cfg.me.stepper)?;
    let sol = integrate_me_with(&problem.inputs, &corr, &problem.rho0, dt, n)?;
    sol.save_csv(&ctx.path("me_solution.csv"), Some(&ctx.comment))?;
    let max_trace_error = sol.trace_errors.iter().copied().fold(0.0, f64::max);
    println!(
        "{}",
        serde_json::json!({"final_population": sol.observable.last(), "max_trace_error": max_trace_error})
    );
    Ok(())
}

/// One phase-scan row. Failed points keep NaN in the numeric columns.
#[derive(Clone, Debug)]
pub struct ScanRow {
    pub model: BoseHubbardParams,
    pub energy: f64,
    pub xi_direct: f64,
    pub fit: Option<FitResult>,
    pub final_population: f64,
    pub delta_xi_backaction: f64,
    pub dmrg_converged: bool,
    pub status: String,
}

pub const SCAN_COLUMNS: [&str; 15] = [
    "mu",
    "u",
    "h",
    "energy",
    "xi_direct",
    "xi_fitted",
    "A",
    "K",
    "B",
    "l",
    "objective",
    "final_population",
    "delta_xi_backaction",
    "dmrg_converged",
    "status",
];

impl ScanRow {
    fn failed(model: BoseHubbardParams, e: &Error) -> Self {
        Self {
            model,
            energy: f64::NAN,
            xi_direct: f64::NAN,
            fit: None,
            final_population: f64::NAN,
            delta_xi_backaction: f64::NAN,
            dmrg_converged: false,
            status: format!("{} {e}", e.tag()),
        }
    }

    fn record(&self) -> Vec<String> {
        let p = self.fit.as_ref().map(|f| f.params.to_array()).unwrap_or([f64::NAN; 4]);
        let (xi_fitted, objective) = self.fit.as_ref().map_or((f64::NAN, f64::NAN), |f| (f.xi_fitted, f.objective));
        let mut r: Vec<String> = [
            self.model.mu,
            self.model.u,
            self.model.h,
            self.energy,
            self.xi_direct,
            xi_fitted,
            p[0],
            p[1],
            p[2],
            p[3],
            objective,
            self.final_population,
            self.delta_xi_backaction,
        ]
        .iter()
        .map(|x| x.to_string())
        .collect();
        r.push(self.dmrg_converged.to_string());
        r.push(self.status.clone());
        r
    }
}

/// Ground state, sweep and fit for one scan point: the same steps as running
/// the single commands in sequence.
pub fn scan_point(cfg: &ExperimentConfig, model: &BoseHubbardParams, point: usize, exec: &Exec) -> Result<ScanRow> {
    let gs = solve_ground_state(model, &cfg.dmrg, dmrg_seed(cfg.seed, point))?;
    let collisions = cfg.collision_config()?;
    let probe = cfg.probe_spec()?;
    let (traj, env_after) = sweep(&gs.state, &probe, &collisions)?;
    let xi_before = xi_or_none(&gs.state)?;
    let xi_after = xi_or_none(&env_after)?;
    let problem = MeProblem::for_sweep(&probe, &collisions, cfg.fit.stepper)?;
    let fit_cfg = fit_config(&cfg.fit, fit_seed(cfg.seed, point));
    let mut fit = fit_trajectory(&traj, &problem, &fit_cfg, xi_max_lag(model.n_sites), exec)?;
    fit.xi_direct = xi_before;
    let status = if traj.truncation_warning { "ok truncation_warning" } else { "ok" };
    Ok(ScanRow {
        model: *model,
        energy: gs.energy,
        xi_direct: xi_before.unwrap_or(f64::NAN),
        final_population: *traj.observable.last().expect("at least one collision"),
        delta_xi_backaction: delta(xi_before, xi_after).unwrap_or(f64::NAN),
        dmrg_converged: gs.converged,
        fit: Some(fit),
        status: status.into(),
    })
}

pub fn phase_scan(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let scan = cfg
        .scan
        .as_ref()
        .filter(|s| !s.values.is_empty())
        .ok_or_else(|| Error::Validation("phase-scan needs a non-empty scan.values list".into()))?;
    let models = scan
        .values
        .iter()
        .map(|&v| cfg.model_at(scan.parameter, v))
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<(usize, BoseHubbardParams)> = models.into_iter().enumerate().collect();
    // points run on the pool; each point's GA runs sequentially inside it
    let rows = ctx.exec.map(&points, |(k, model)| {
        scan_point(cfg, model, *k, &Exec::sequential()).unwrap_or_else(|e| ScanRow::failed(*model, &e))
    });

    let mut w = ctx.csv_writer("scan.csv")?;
    w.write_record(SCAN_COLUMNS)?;
    for row in &rows {
        w.write_record(row.record())?;
    }
    w.flush()?;
    let failed = rows.iter().filter(|r| !r.status.starts_with("ok")).count();
    println!("{}", serde_json::json!({"points": rows.len(), "failed": failed}));
    Ok(())
}
