//! Genetic-algorithm fit of the correlation ansatz to a probe trajectory.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::collision::{sweep, CollisionConfig, ProbeSpec, Trajectory};
use crate::correlations::{
    correlation_length, default_reference_site, environment_correlations, length_of_magnitudes, CorrelationKind,
};
use crate::error::{Error, Result};
use crate::lattice::probe_operators;
use crate::master_eq::{ansatz_eval, build_correlations, default_scale, integrate_me_with, CorrelationAnsatz, MeInputs, Stepper};
use crate::mps::MPSState;
use crate::parallel::Exec;
use crate::tensor::{eigh, DenseTensor};

const ANNEAL_FLOOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    #[serde(rename = "A")]
    pub a: (f64, f64),
    #[serde(rename = "K")]
    pub k: (f64, f64),
    #[serde(rename = "B")]
    pub b: (f64, f64),
    pub l: (f64, f64),
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            a: (0.0, 1.0),
            k: (0.1, 4.0),
            b: (0.0, 1.0),
            l: (0.1, 10.0),
        }
    }
}

impl ParamBounds {
    fn as_array(&self) -> [(f64, f64); 4] {
        [self.a, self.k, self.b, self.l]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    #[default]
    Observable,
    State,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub bounds: ParamBounds,
    pub population_size: usize,
    pub generations: usize,
    /// Mutation standard deviation as a fraction of each bound's width; it
    /// decays geometrically towards `1e-3` of this value over the run.
    pub mutation_scale: f64,
    /// Per-gene probability of a Gaussian mutation.
    pub mutation_rate: f64,
    /// Per-gene probability of snapping to the lower bound.
    pub boundary_rate: f64,
    pub crossover_rate: f64,
    pub elitism_count: usize,
    /// Independent populations; the best result across them is kept.
    pub restarts: usize,
    /// Nelder-Mead iterations spent refining the GA winner; `0` disables.
    pub polish_iterations: usize,
    pub seed: u64,
    pub objective_kind: ObjectiveKind,
    /// Stepper for the candidate master equations.
    pub stepper: Stepper,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            bounds: ParamBounds::default(),
            population_size: 64,
            generations: 60,
            mutation_scale: 0.15,
            mutation_rate: 0.3,
            boundary_rate: 0.02,
            crossover_rate: 0.9,
            elitism_count: 2,
            restarts: 4,
            polish_iterations: 2000,
            seed: 0,
            objective_kind: ObjectiveKind::Observable,
            stepper: Stepper::Collision,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let b = self.bounds;
        for (name, (lo, hi)) in ["A", "K", "B", "l"].iter().zip(b.as_array()) {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Validation(format!("bounds for {name} must satisfy lo < hi")));
            }
        }
        if b.a.0 < 0.0 || b.b.0 < 0.0 || b.k.0 <= 0.0 || b.l.0 <= 0.0 {
            return Err(Error::Validation("bounds must keep A, B ≥ 0 and K, l > 0".into()));
        }
        if self.population_size < 4 {
            return Err(Error::Validation("population_size must be at least 4".into()));
        }
        if self.elitism_count >= self.population_size {
            return Err(Error::Validation("elitism_count must be below population_size".into()));
        }
        if self.generations == 0 || self.restarts == 0 {
            return Err(Error::Validation("generations and restarts must be positive".into()));
        }
        for (name, p) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
            ("boundary_rate", self.boundary_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Validation(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.mutation_scale >= 0.0) {
            return Err(Error::Validation("mutation_scale must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: CorrelationAnsatz,
    pub objective: f64,
    pub xi_fitted: f64,
    pub xi_direct: Option<f64>,
    pub seed: u64,
    pub generations: usize,
    pub best_per_generation: Vec<f64>,
}

/// Correlation length of the ansatz sampled on lags `0..=max_lag`; zero when
/// both amplitudes vanish.
pub fn fitted_xi(params: &CorrelationAnsatz, max_lag: usize) -> Result<f64> {
    if params.a == 0.0 && params.b == 0.0 {
        return Ok(0.0);
    }
    length_of_magnitudes((0..=max_lag).map(|k| ansatz_eval(params, k as f64).abs()))
}

/// The ME side of a fit: everything fixed except the ansatz.
#[derive(Clone, Debug)]
pub struct MeProblem {
    pub inputs: MeInputs,
    pub rho0: DenseTensor,
    pub dt: f64,
    pub n_steps: usize,
    pub scale: f64,
}

impl MeProblem {
    /// Problem matching a collision sweep of `probe` under `cfg`.
    pub fn for_sweep(probe: &ProbeSpec, cfg: &CollisionConfig, stepper: Stepper) -> Result<Self> {
        let ops = probe_operators(probe.kind, cfg.gamma, probe.hamiltonian.clone())?;
        let mut inputs = MeInputs::new(ops.jump, ops.hamiltonian);
        inputs.observable = ops.population;
        inputs.stepper = stepper;
        Ok(Self {
            inputs,
            rho0: probe.initial_rho(),
            dt: cfg.dt,
            n_steps: cfg.n_collisions,
            scale: default_scale(cfg.dt),
        })
    }

    pub fn solve(&self, candidate: &CorrelationAnsatz) -> Result<crate::master_eq::MESolution> {
        let corr = build_correlations(candidate, self.dt, self.n_steps, self.scale)?;
        integrate_me_with(&self.inputs, &corr, &self.rho0, self.dt, self.n_steps)
    }
}

fn check_grid(measured_len: usize, problem: &MeProblem) -> Result<()> {
    if measured_len != problem.n_steps {
        return Err(Error::Validation(format!(
            "measured grid has {measured_len} steps, ME grid has {}",
            problem.n_steps
        )));
    }
    Ok(())
}

/// Signed per-step differences between measured and ME observables on steps `1..=N`.
pub fn residuals_observable(measured: &Trajectory, candidate: &CorrelationAnsatz, problem: &MeProblem) -> Result<Vec<f64>> {
    check_grid(measured.observable.len(), problem)?;
    let sol = problem.solve(candidate)?;
    Ok(measured.observable.iter().zip(&sol.observable[1..]).map(|(m, o)| m - o).collect())
}

/// Mean absolute difference between measured and ME observables on steps `1..=N`.
pub fn objective_observable(measured: &Trajectory, candidate: &CorrelationAnsatz, problem: &MeProblem) -> Result<f64> {
    residuals_observable(measured, candidate, problem).map(|r| mean_abs(&r))
}

pub fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

fn mean_abs(r: &[f64]) -> f64 {
    r.iter().map(|x| x.abs()).sum::<f64>() / r.len() as f64
}

fn mean_square(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64
}

/// Sum of singular values of a Hermitian difference.
pub fn trace_norm_distance(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    let diff = a.sub(b)?;
    let herm = diff.add(&diff.adjoint()?)?.scale_real(0.5);
    Ok(eigh(&herm)?.values.iter().map(|x| x.abs()).sum())
}

/// Per-step trace-norm distances between snapshots and ME states on steps `1..=N`.
pub fn residuals_state(snapshots: Option<&[DenseTensor]>, candidate: &CorrelationAnsatz, problem: &MeProblem) -> Result<Vec<f64>> {
    let snaps = snapshots.ok_or_else(|| Error::Input("state objective needs density-matrix snapshots".into()))?;
    check_grid(snaps.len(), problem)?;
    let sol = problem.solve(candidate)?;
    snaps.iter().zip(&sol.rho[1..]).map(|(s, r)| trace_norm_distance(s, r)).collect()
}

/// Mean trace-norm distance between snapshots and ME states on steps `1..=N`.
pub fn objective_state(snapshots: Option<&[DenseTensor]>, candidate: &CorrelationAnsatz, problem: &MeProblem) -> Result<f64> {
    residuals_state(snapshots, candidate, problem).map(|r| mean_abs(&r))
}

fn order_key(f: f64) -> f64 {
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

struct Island {
    best: [f64; 4],
    best_fit: f64,
    history: Vec<f64>,
}

fn run_island<E>(eval: &E, cfg: &FitConfig, rng: &mut ChaCha8Rng) -> Island
where
    E: Fn(&[[f64; 4]]) -> Vec<f64>,
{
    let bounds = cfg.bounds.as_array();
    let mut pop: Vec<[f64; 4]> = (0..cfg.population_size)
        .map(|_| {
            let mut g = [0.0; 4];
            for (x, (lo, hi)) in g.iter_mut().zip(bounds) {
                *x = rng.random_range(lo..hi);
            }
            g
        })
        .collect();
    let mut fit = eval(&pop);
    let mut history = Vec::with_capacity(cfg.generations);

    for gen in 0..cfg.generations {
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&i, &j| fit[i].total_cmp(&fit[j]).then(i.cmp(&j)));
        history.push(fit[order[0]]);
        if gen + 1 == cfg.generations {
            return Island {
                best: pop[order[0]],
                best_fit: fit[order[0]],
                history,
            };
        }

        let anneal = ANNEAL_FLOOR.powf(gen as f64 / cfg.generations as f64);
        let tournament = |rng: &mut ChaCha8Rng| -> usize {
            let mut best = rng.random_range(0..pop.len());
            for _ in 0..2 {
                let c = rng.random_range(0..pop.len());
                if fit[c] < fit[best] || (fit[c] == fit[best] && c < best) {
                    best = c;
                }
            }
            best
        };
        let mut next: Vec<[f64; 4]> = order[..cfg.elitism_count].iter().map(|&i| pop[i]).collect();
        let mut next_fit: Vec<f64> = order[..cfg.elitism_count].iter().map(|&i| fit[i]).collect();
        while next.len() < cfg.population_size {
            let p1 = tournament(rng);
            let p2 = tournament(rng);
            let mut child = pop[p1];
            if rng.random_bool(cfg.crossover_rate) {
                for (g, o) in child.iter_mut().zip(pop[p2]) {
                    if rng.random_bool(0.5) {
                        *g = o;
                    }
                }
            }
            for (g, (lo, hi)) in child.iter_mut().zip(bounds) {
                if rng.random_bool(cfg.mutation_rate) {
                    let z: f64 = StandardNormal.sample(rng);
                    *g += z * cfg.mutation_scale * anneal * (hi - lo);
                }
                if rng.random_bool(cfg.boundary_rate) {
                    *g = lo;
                }
                *g = g.clamp(lo, hi);
            }
            next.push(child);
        }
        let fresh = eval(&next[cfg.elitism_count..]);
        next_fit.extend(fresh);
        pop = next;
        fit = next_fit;
    }
    unreachable!("generations is validated to be positive")
}

struct Clamped<'a, F> {
    objective: &'a F,
    bounds: [(f64, f64); 4],
}

impl<F> Clamped<'_, F> {
    fn clamp(&self, p: &[f64]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for ((o, x), (lo, hi)) in out.iter_mut().zip(p).zip(self.bounds) {
            *o = x.clamp(lo, hi);
        }
        out
    }
}

impl<F> CostFunction for Clamped<'_, F>
where
    F: Fn(&CorrelationAnsatz) -> Result<f64>,
{
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let x = CorrelationAnsatz::from_array(self.clamp(p));
        Ok((self.objective)(&x).map(order_key).unwrap_or(f64::INFINITY))
    }
}

/// Nelder-Mead run on `target` inside the box, started from the GA winner.
/// The result replaces the start only if `judge` strictly improves.
fn polish<F, G>(target: &F, judge: &G, cfg: &FitConfig, start: [f64; 4], start_fit: f64) -> ([f64; 4], f64)
where
    F: Fn(&CorrelationAnsatz) -> Result<f64>,
    G: Fn(&CorrelationAnsatz) -> Result<f64>,
{
    let bounds = cfg.bounds.as_array();
    let mut simplex = vec![start.to_vec()];
    for (i, (lo, hi)) in bounds.iter().enumerate() {
        let mut v = start.to_vec();
        let step = 0.05 * (hi - lo);
        v[i] = if v[i] + step <= *hi { v[i] + step } else { v[i] - step };
        simplex.push(v);
    }
    let run = NelderMead::new(simplex).with_sd_tolerance(0.0).and_then(|solver| {
        Executor::new(Clamped { objective: target, bounds }, solver)
            .configure(|state| state.max_iters(cfg.polish_iterations as u64))
            .run()
    });
    let Some(p) = run.ok().and_then(|res| res.state().get_best_param().cloned()) else {
        return (start, start_fit);
    };
    let p = Clamped { objective: judge, bounds }.clamp(&p);
    let f = judge(&CorrelationAnsatz::from_array(p)).map(order_key).unwrap_or(f64::INFINITY);
    if f < start_fit {
        (p, f)
    } else {
        (start, start_fit)
    }
}

/// Seeded genetic algorithm over the ansatz box. Failed evaluations count as
/// `+∞`. `xi_max_lag` sets the lag grid for `xi_fitted`.
///
/// `cfg.restarts` independent populations run one after another, each on its
/// own stream of the seeded generator; the best final individual wins (lowest
/// restart index on ties) and `best_per_generation` is the running minimum
/// across restarts.
pub fn ga_minimize<F>(objective: F, cfg: &FitConfig, xi_max_lag: usize, exec: &Exec) -> Result<FitResult>
where
    F: Fn(&CorrelationAnsatz) -> Result<f64> + Sync + Send,
{
    cfg.validate()?;
    let eval = |pop: &[[f64; 4]]| -> Vec<f64> {
        exec.map(pop, |p| {
            objective(&CorrelationAnsatz::from_array(*p))
                .map(order_key)
                .unwrap_or(f64::INFINITY)
        })
    };
    let mut winner: Option<Island> = None;
    let mut best_per_generation = vec![f64::INFINITY; cfg.generations];
    for r in 0..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(r as u64);
        let island = run_island(&eval, cfg, &mut rng);
        for (b, h) in best_per_generation.iter_mut().zip(&island.history) {
            *b = b.min(*h);
        }
        if winner.as_ref().is_none_or(|w| island.best_fit < w.best_fit) {
            winner = Some(island);
        }
    }
    let winner = winner.expect("restarts is validated to be positive");
    let (best, objective) = if cfg.polish_iterations > 0 && winner.best_fit.is_finite() {
        polish(&objective, &objective, cfg, winner.best, winner.best_fit)
    } else {
        (winner.best, winner.best_fit)
    };
    let best = CorrelationAnsatz::from_array(best);
    Ok(FitResult {
        params: best,
        objective,
        xi_fitted: fitted_xi(&best, xi_max_lag)?,
        xi_direct: None,
        seed: cfg.seed,
        generations: cfg.generations,
        best_per_generation,
    })
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub fit: FitResult,
    pub xi_direct: f64,
    pub trajectory: Trajectory,
    pub env_after: MPSState,
}

/// Direct correlation length of the `C2` profile from the chain center to its end.
pub fn direct_xi(env: &MPSState) -> Result<(f64, usize)> {
    let n = env.n_sites();
    let r = default_reference_site(n);
    let profile = environment_correlations(env, CorrelationKind::Two, r, n - 1 - r)?;
    Ok((correlation_length(&profile)?, n - 1 - r))
}

/// Sweep the probe through `env`, fit the ansatz to the trajectory, and report
/// both the fitted and the direct correlation length.
pub fn probe_fit_pipeline(
    env: &MPSState,
    probe: &ProbeSpec,
    collisions: &CollisionConfig,
    fit_cfg: &FitConfig,
    exec: &Exec,
) -> Result<PipelineOutput> {
    let (trajectory, env_after) = sweep(env, probe, collisions)?;
    let (xi_direct, j_max) = direct_xi(env)?;
    let problem = MeProblem::for_sweep(probe, collisions, fit_cfg.stepper)?;
    let mut fit = fit_trajectory(&trajectory, &problem, fit_cfg, j_max, exec)?;
    fit.xi_direct = Some(xi_direct);
    Ok(PipelineOutput {
        fit,
        xi_direct,
        trajectory,
        env_after,
    })
}

/// GA on the mean absolute residual, then a Nelder-Mead polish on the mean
/// squared residual (smooth, so the simplex does not stall on the kinks of the
/// absolute value). The polish is kept only if it lowers the absolute objective.
pub fn fit_trajectory(
    trajectory: &Trajectory,
    problem: &MeProblem,
    cfg: &FitConfig,
    xi_max_lag: usize,
    exec: &Exec,
) -> Result<FitResult> {
    check_grid(trajectory.len(), problem)?;
    let snaps = trajectory.rho_snapshots.as_deref();
    if cfg.objective_kind == ObjectiveKind::State && snaps.is_none() {
        return Err(Error::Input("state objective needs record_rho = true".into()));
    }
    let residuals = |c: &CorrelationAnsatz| match cfg.objective_kind {
        ObjectiveKind::Observable => residuals_observable(trajectory, c, problem),
        ObjectiveKind::State => residuals_state(snaps, c, problem),
    };
    let absolute = |c: &CorrelationAnsatz| residuals(c).map(|r| mean_abs(&r));
    let squared = |c: &CorrelationAnsatz| residuals(c).map(|r| mean_square(&r));
    let ga_cfg = FitConfig {
        polish_iterations: 0,
        ..cfg.clone()
    };
    let mut result = ga_minimize(absolute, &ga_cfg, xi_max_lag, exec)?;
    if cfg.polish_iterations > 0 && result.objective.is_finite() {
        let (p, f) = polish(&squared, &absolute, cfg, result.params.to_array(), result.objective);
        result.params = CorrelationAnsatz::from_array(p);
        result.objective = f;
        result.xi_fitted = fitted_xi(&result.params, xi_max_lag)?;
    }
    Ok(result)
}
