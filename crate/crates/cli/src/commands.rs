//! One function per subcommand. Each writes its data series and returns the
//! command-specific part of the run summary.

use log::warn;
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};
use symlqr::feedback::{
    average_trials, collect_data, default_t_bar, recover_gain, DataMatrices, GainEstimate,
};
use symlqr::linalg::{inf_norm, spectral_abscissa, to_rows};
use symlqr::lti::{
    check_external_symmetry, check_internal_symmetry, gain_l2, gain_pk, hinf_norm, simulate, Horizon,
};
use symlqr::noise_study::{run_unbiasedness_study, trial_seed, NoiseStudyConfig};
use symlqr::pontryagin::{
    contraction_l2, contraction_linf, estimate_alpha_bar, recommended_alpha, safe_step_size, OperatorConfig,
};
use symlqr::riccati::{
    cost_j, log_slope, optimal_control_fh, riccati_tail_error, solve_are_hamiltonian, solve_riccati_fh, LqrProblem,
    RiccatiSolution,
};
use symlqr::solver::{run_iterations, solve, SolverConfig};
use symlqr::{InitialState, Norm, Plant, SimulatedPlant, Signal, TimeGrid};

use crate::config::{AlphaRule, AlphaSpec, Resolved};
use crate::error::CliError;
use crate::output::OutputDir;

/// Largest accepted `‖Σe G(s)' − G(s) Σe‖` at the probe points.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// State shared by every command while it runs.
pub struct Context<'a> {
    pub cfg: &'a Resolved,
    pub out: &'a OutputDir,
    pub plant_runs: u64,
    pub warnings: Vec<String>,
    pub alpha: Option<f64>,
    pub contraction: Option<f64>,
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a Resolved, out: &'a OutputDir) -> Self {
        Self { cfg, out, plant_runs: 0, warnings: Vec::new(), alpha: None, contraction: None }
    }

    fn warn(&mut self, msg: String) {
        warn!("{msg}");
        self.warnings.push(msg);
    }

    fn plant(&self, grid: TimeGrid, trial: u64) -> Result<SimulatedPlant, CliError> {
        let c = self.cfg;
        let noise = c.config.noise.with_seed(c.noise_seed(trial));
        Ok(SimulatedPlant::new(&c.system, &c.config.problem.x0, c.sigma_e.clone(), grid, noise)?)
    }

    fn clean_plant(&self, grid: TimeGrid) -> Result<SimulatedPlant, CliError> {
        let c = self.cfg;
        Ok(SimulatedPlant::new(&c.system, &c.config.problem.x0, c.sigma_e.clone(), grid, Default::default())?)
    }

    fn operator(&self, grid: TimeGrid) -> Result<OperatorConfig, CliError> {
        let c = self.cfg;
        Ok(OperatorConfig::new(c.q.clone(), c.r.clone(), c.sigma_e.clone(), grid)?)
    }

    fn problem(&self) -> Result<LqrProblem, CliError> {
        let c = self.cfg;
        Ok(LqrProblem::new(c.system.clone(), c.q.clone(), c.r.clone(), c.config.problem.x0.clone())?)
    }

    fn require_symmetry(&self) -> Result<f64, CliError> {
        let residual = check_external_symmetry(&self.cfg.system, &self.cfg.sigma_e)?;
        if residual > SYMMETRY_TOL {
            return Err(CliError::Config(format!(
                "system is not externally symmetric under sigma_e (defect {residual:.3e})"
            )));
        }
        Ok(residual)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepInfo {
    pub alpha: f64,
    pub alpha_bar: f64,
    pub norm: f64,
    pub rule: &'static str,
}

/// Resolves the configured step and estimates `‖R^{1/2} S R^{-1/2}‖`.
///
/// `auto-power` measures on the experiment plant; otherwise the estimate
/// comes from a noise-free twin and is not counted as experiments.
fn resolve_step(ctx: &mut Context, plant: &mut SimulatedPlant, op: &OperatorConfig) -> Result<StepInfo, CliError> {
    let iters = ctx.cfg.config.solver.power_iterations;
    let info = match ctx.cfg.config.solver.alpha {
        AlphaSpec::Rule(AlphaRule::AutoPower) => {
            let est = estimate_alpha_bar(plant, op, iters)?;
            ctx.plant_runs += est.plant_runs as u64;
            if !est.sign_consistent {
                ctx.warn("power iteration saw an indefinite Rayleigh quotient; the norm estimate may be loose".into());
            }
            StepInfo { alpha: (est.alpha_bar / 2.0).min(1.0), alpha_bar: est.alpha_bar, norm: est.norm, rule: "auto-power" }
        }
        spec => {
            let est = estimate_alpha_bar(&mut ctx.clean_plant(op.grid())?, op, iters)?;
            let (alpha, rule) = match spec {
                AlphaSpec::Value(a) => (a, "value"),
                _ => {
                    let hinf = hinf_norm(&ctx.cfg.system).map_err(|e| {
                        CliError::Config(format!("auto-safe needs a stable system: {e}"))
                    })?;
                    (recommended_alpha(safe_step_size(hinf, &ctx.cfg.q, &ctx.cfg.r)), "auto-safe")
                }
            };
            StepInfo { alpha, alpha_bar: est.alpha_bar, norm: est.norm, rule }
        }
    };
    if info.alpha >= info.alpha_bar {
        ctx.warn(format!(
            "alpha = {} is not below the estimated bound {:.6}; convergence is not guaranteed",
            info.alpha, info.alpha_bar
        ));
    }
    ctx.alpha = Some(info.alpha);
    Ok(info)
}

/// Step and contraction for commands that run no learning iterations.
/// Everything is measured on a noise-free twin, so no experiments are counted.
fn describe_step(ctx: &mut Context) -> Result<Option<StepInfo>, CliError> {
    if check_external_symmetry(&ctx.cfg.system, &ctx.cfg.sigma_e)? > SYMMETRY_TOL {
        return Ok(None);
    }
    let grid = ctx.cfg.grid;
    let op = ctx.operator(grid)?;
    let mut twin = ctx.clean_plant(grid)?;
    let runs = ctx.plant_runs;
    let step = resolve_step(ctx, &mut twin, &op)?;
    ctx.plant_runs = runs;
    ctx.contraction = Some(contraction_l2(step.alpha, step.norm));
    Ok(Some(step))
}

fn matrix_json(m: &DMatrix<f64>) -> Value {
    json!(to_rows(m))
}

fn are_solution(ctx: &mut Context) -> Result<Option<RiccatiSolution>, CliError> {
    if ctx.cfg.system.d().iter().any(|&v| v != 0.0) {
        ctx.warn("infinite-horizon oracle skipped: the Hamiltonian solver needs D = 0".into());
        return Ok(None);
    }
    Ok(Some(solve_are_hamiltonian(&ctx.problem()?)?))
}

pub fn solve_fh(ctx: &mut Context) -> Result<Value, CliError> {
    ctx.require_symmetry()?;
    let grid = ctx.cfg.grid;
    let op = ctx.operator(grid)?;
    let mut plant = ctx.plant(grid, 0)?;
    let step = resolve_step(ctx, &mut plant, &op)?;
    let s = &ctx.cfg.config.solver;
    let rho = contraction_l2(step.alpha, step.norm);
    ctx.contraction = Some(rho);

    let oracle = match optimal_control_fh(&ctx.problem()?, grid) {
        Ok(o) => Some(o),
        Err(e) => {
            ctx.warn(format!("finite-horizon oracle unavailable: {e}"));
            None
        }
    };
    let mut solver = SolverConfig::new(step.alpha, s.tolerance, s.max_iter, s.norm);
    solver.record_history = true;
    let before = plant.runs();
    let result = solve(&mut plant, &op, &solver, oracle.as_ref().map(|o| &o.control))?;
    ctx.plant_runs += plant.runs() - before;

    let history = result.history.as_deref().unwrap_or_default();
    let mut details = json!({
        "step": step,
        "iterations": result.iterations,
        "termination": result.termination,
        "final_residual": result.residuals.last(),
    });
    ctx.out.signal("control.csv", &result.control, "u")?;

    let x0 = &ctx.cfg.config.problem.x0;
    let cost = |u: &Signal| -> Result<f64, CliError> {
        let y = simulate(&ctx.cfg.system, x0, u)?.output;
        Ok(cost_j(&y, u, &ctx.cfg.q, &ctx.cfg.r)?)
    };
    let mut header = vec!["k", "residual", "cost"];
    let mut rows = Vec::with_capacity(history.len());
    if let Some(o) = &oracle {
        header.extend(["error", "relative_error", "gap", "relative_gap"]);
        let j_star = cost(&o.control)?;
        let scale = o.control.norm(s.norm).max(f64::MIN_POSITIVE);
        let errors = result.errors.as_deref().unwrap_or_default();
        let mut gaps = Vec::with_capacity(history.len());
        for (k, u) in history.iter().enumerate() {
            let j = cost(u)?;
            let gap = j - j_star;
            gaps.push(gap);
            let residual = if k == 0 { f64::NAN } else { result.residuals[k - 1] };
            rows.push(vec![k as f64, residual, j, errors[k], errors[k] / scale, gap, gap / j_star.abs().max(f64::MIN_POSITIVE)]);
        }
        let decreasing = gaps.len() < 3 || gaps[1..].windows(2).all(|w| w[1] < w[0]);
        if !decreasing {
            ctx.warn("optimality gap is not strictly decreasing after the first iteration".into());
        }
        details["optimal_cost"] = json!(j_star);
        details["final_cost"] = json!(gaps.last().map(|g| g + j_star));
        details["final_relative_error"] = json!(errors.last().map(|e| e / scale));
        details["gap_strictly_decreasing"] = json!(decreasing);
        ctx.out.signal("optimal.csv", &o.control, "u_star")?;
        let mut columns = vec![("u_star".to_string(), &o.control)];
        columns.extend(history.iter().enumerate().map(|(k, u)| (format!("u{k}"), u)));
        ctx.out.signals("history.csv", &columns)?;
    } else {
        for (k, u) in history.iter().enumerate() {
            let residual = if k == 0 { f64::NAN } else { result.residuals[k - 1] };
            rows.push(vec![k as f64, residual, cost(u)?]);
        }
        let columns: Vec<_> = history.iter().enumerate().map(|(k, u)| (format!("u{k}"), u)).collect();
        ctx.out.signals("history.csv", &columns)?;
    }
    ctx.out.table("iterations.csv", &header, rows)?;
    Ok(details)
}

struct GainRun {
    estimate: GainEstimate,
    per_trial: Vec<DMatrix<f64>>,
    control: Signal,
    data: DataMatrices,
}

fn gain_on_grid(ctx: &mut Context, grid: TimeGrid, alpha: f64) -> Result<GainRun, CliError> {
    let g = ctx.cfg.config.gain.clone();
    let op = ctx.operator(grid)?;
    let t_bar = match g.t_bar {
        Some(t) if t <= grid.horizon() => t,
        _ => default_t_bar(grid.horizon()),
    };
    let samples = ctx.cfg.samples();
    let mut trials = Vec::with_capacity(g.trials);
    let mut per_trial = Vec::with_capacity(g.trials);
    let mut control = None;
    for trial in 0..g.trials as u64 {
        let mut plant = ctx.plant(grid, trial)?;
        let learned = run_iterations(&mut plant, &op, alpha, g.iterations, Norm::Linf, None, None)?;
        let state_seed = trial_seed(ctx.cfg.config.seed ^ g.state_noise.seed, trial.wrapping_add(1 << 32));
        let data = collect_data(&mut plant, &learned.control, samples, t_bar, &g.state_noise.with_seed(state_seed))?;
        ctx.plant_runs += plant.runs();
        if g.trials > 1 {
            per_trial.push(recover_gain(&data).map(|e| e.k).unwrap_or_else(|_| DMatrix::from_element(1, 1, f64::NAN)));
        }
        control.get_or_insert(learned.control);
        trials.push(data);
    }
    let noisy = !ctx.cfg.config.noise.is_zero() || !g.state_noise.is_zero();
    let estimate = if g.trials > 1 || noisy { average_trials(&trials)? } else { recover_gain(&trials[0])? };
    if g.trials == 1 {
        per_trial.push(estimate.k.clone());
    }
    Ok(GainRun { estimate, per_trial, control: control.expect("at least one trial"), data: trials.swap_remove(0) })
}

fn gain_error(k: &DMatrix<f64>, k_inf: Option<&DMatrix<f64>>) -> Option<f64> {
    k_inf.filter(|r| r.shape() == k.shape()).map(|r| inf_norm(&(k - r)))
}

pub fn solve_ih(ctx: &mut Context) -> Result<Value, CliError> {
    ctx.require_symmetry()?;
    let grid = ctx.cfg.grid;
    let tf = grid.horizon();
    let op = ctx.operator(grid)?;
    let mut probe = ctx.plant(grid, u64::MAX)?;
    let step = resolve_step(ctx, &mut probe, &op)?;

    let pk = gain_pk(&ctx.cfg.system, Horizon::Finite(tf))?;
    let lemma = inf_norm(&ctx.cfg.q) * pk * pk * inf_norm(op.r_inv());
    if lemma >= 1.0 {
        ctx.warn(format!("sup-norm contraction condition fails: ‖Q‖‖G‖²‖R⁻¹‖ = {lemma:.4} >= 1"));
    }
    ctx.contraction = Some(contraction_linf(step.alpha, pk, &ctx.cfg.q, op.r_inv()));

    let are = are_solution(ctx)?;
    let k_inf = are.as_ref().map(|a| a.k_inf.clone());
    let run = gain_on_grid(ctx, grid, step.alpha)?;
    let error = gain_error(&run.estimate.k, k_inf.as_ref());

    ctx.out.signal("control.csv", &run.control, "u")?;
    let entries = run.estimate.k.len();
    let mut header: Vec<String> = vec!["trial".into()];
    header.extend((0..run.estimate.k.nrows()).flat_map(|r| (0..run.estimate.k.ncols()).map(move |c| format!("k_{}{}", r + 1, c + 1))));
    header.push("error".into());
    let rows = run.per_trial.iter().enumerate().map(|(i, k)| {
        let mut row = vec![i as f64];
        if k.len() == entries {
            row.extend(to_rows(k).concat());
        } else {
            row.extend(std::iter::repeat(f64::NAN).take(entries));
        }
        row.push(gain_error(k, k_inf.as_ref()).unwrap_or(f64::NAN));
        row
    });
    ctx.out.table("trials.csv", &header, rows)?;

    let mut details = json!({
        "step": step,
        "contraction_condition": lemma,
        "gain_pk": pk,
        "k": matrix_json(&run.estimate.k),
        "k_inf": k_inf.as_ref().map(matrix_json),
        "error": error,
        "provenance": run.estimate.provenance,
        "trials": run.estimate.trials,
        "residual": run.estimate.residual,
        "condition_number": run.data.condition_number,
        "sample_times": run.data.sample_times,
    });
    if run.per_trial.len() > 1 {
        let mut errs: Vec<f64> = run.per_trial.iter().filter_map(|k| gain_error(k, k_inf.as_ref())).filter(|e| e.is_finite()).collect();
        errs.sort_by(f64::total_cmp);
        details["median_trial_error"] = json!(errs.get(errs.len() / 2));
    }

    if let Some(horizons) = ctx.cfg.config.gain.horizons.clone() {
        let density = ctx.cfg.config.problem.intervals as f64 / tf;
        let mut rows = Vec::with_capacity(horizons.len());
        let mut errors = Vec::with_capacity(horizons.len());
        for &h in &horizons {
            let g = TimeGrid::new(h, ((h * density).round() as usize).max(1))?;
            let run = gain_on_grid(ctx, g, step.alpha)?;
            let e = gain_error(&run.estimate.k, k_inf.as_ref()).unwrap_or(f64::NAN);
            errors.push(e);
            let mut row = vec![h, e];
            row.extend(to_rows(&run.estimate.k).concat());
            rows.push(row);
        }
        let mut header: Vec<String> = vec!["horizon".into(), "error".into()];
        header.extend((0..entries).map(|i| format!("k{}", i + 1)));
        ctx.out.table("sweep.csv", &header, rows)?;
        let monotone = errors.windows(2).all(|w| w[1] < w[0]);
        if !monotone {
            ctx.warn("gain error is not monotone in the horizon".into());
        }
        details["sweep"] = json!({
            "horizons": horizons,
            "errors": errors,
            "slope": log_slope(&horizons, &errors),
            "predicted_slope": are.as_ref().map(|a| -a.l2_rate),
            "monotone": monotone,
        });
    }
    Ok(details)
}

pub fn oracle(ctx: &mut Context) -> Result<Value, CliError> {
    let grid = ctx.cfg.grid;
    let prob = ctx.problem()?;
    let are = are_solution(ctx)?;
    let traj = solve_riccati_fh(&prob, grid)?;
    let opt = optimal_control_fh(&prob, grid)?;
    let n = ctx.cfg.system.states();
    let header: Vec<String> =
        std::iter::once("t".to_string()).chain((0..n * n).map(|i| format!("p_{}{}", i / n + 1, i % n + 1))).collect();
    let rows = (0..grid.len()).map(|i| {
        let mut row = vec![grid.time(i)];
        row.extend(to_rows(traj.at(i)).concat());
        row
    });
    ctx.out.table("riccati.csv", &header, rows)?;
    ctx.out.signals("optimal.csv", &[("u_star".into(), &opt.control), ("y_star".into(), &opt.output)])?;

    let step = describe_step(ctx)?;
    let mut details = json!({
        "step": step,
        "p0": matrix_json(traj.at(0)),
        "optimal_cost": opt.cost,
        "are": are,
    });
    if let Some(horizons) = &ctx.cfg.config.oracle.tail_horizons {
        let o = &ctx.cfg.config.oracle;
        let decay = riccati_tail_error(&prob, horizons, o.t_bar, o.step)?;
        ctx.out.table("tail.csv", &["horizon", "error"], decay.horizons.iter().zip(&decay.errors).map(|(h, e)| vec![*h, *e]))?;
        details["tail"] = json!(decay);
    }
    Ok(details)
}

pub fn noise_study(ctx: &mut Context) -> Result<Value, CliError> {
    ctx.require_symmetry()?;
    let grid = ctx.cfg.grid;
    let op = ctx.operator(grid)?;
    let mut probe = ctx.plant(grid, u64::MAX)?;
    let step = resolve_step(ctx, &mut probe, &op)?;
    let c = &ctx.cfg.config;
    let study = NoiseStudyConfig {
        noise: c.noise,
        iterations: c.study.iterations,
        trials: c.study.trials,
        alpha: step.alpha,
        seed: c.seed ^ c.noise.seed,
    };
    let report = run_unbiasedness_study(&ctx.cfg.system, &c.problem.x0, &op, &study)?;
    ctx.plant_runs += 2 * (study.trials as u64 + 1) * study.iterations as u64;
    ctx.contraction = Some(report.contraction);
    let rows = (0..grid.len()).map(|i| {
        vec![grid.time(i), report.mean_deviation[i], report.standard_error[i], report.node_variance[i]]
    });
    ctx.out.table("nodes.csv", &["t", "mean_deviation", "standard_error", "variance"], rows)?;
    ctx.out.signal("nominal.csv", &report.noise_free_control, "u")?;
    let details = json!({ "step": step, "report": report, "passed": report.passed() });
    if !report.passed() {
        ctx.warn("noise study checks failed".into());
    }
    Ok(details)
}

pub fn simulate_cmd(ctx: &mut Context) -> Result<Value, CliError> {
    let grid = ctx.cfg.grid;
    let m = ctx.cfg.system.channels();
    let value = ctx.cfg.config.simulate.input.clone().unwrap_or_else(|| vec![0.0; m]);
    let u = Signal::constant(grid, &value);
    let mut plant = ctx.plant(grid, 0)?;
    let y = plant.run(InitialState::Problem, &u)?;
    ctx.plant_runs += plant.runs();
    let clean = simulate(&ctx.cfg.system, &ctx.cfg.config.problem.x0, &u)?;
    ctx.out.signals("simulation.csv", &[("u".into(), &u), ("y".into(), &y), ("x".into(), &clean.state)])?;
    let step = describe_step(ctx)?;
    Ok(json!({
        "step": step,
        "cost": cost_j(&clean.output, &u, &ctx.cfg.q, &ctx.cfg.r)?,
        "output_peak": y.norm(Norm::Linf),
    }))
}

pub fn check_symmetry(ctx: &mut Context) -> Result<Value, CliError> {
    let sys = &ctx.cfg.system;
    let external = check_external_symmetry(sys, &ctx.cfg.sigma_e)?;
    let internal = ctx.cfg.sigma_i.as_ref().map(|si| check_internal_symmetry(sys, si, &ctx.cfg.sigma_e)).transpose()?;
    let hurwitz = sys.is_hurwitz();
    let grid = ctx.cfg.grid;
    let symmetric = external <= SYMMETRY_TOL;
    let l2 = gain_l2(sys, grid, symmetric.then_some(&ctx.cfg.sigma_e))?;
    let hinf = if hurwitz { Some(hinf_norm(sys)?) } else { None };
    let pk = gain_pk(sys, Horizon::Finite(grid.horizon()))?;
    let step = describe_step(ctx)?;
    let details = json!({
        "step": step,
        "external_defect": external,
        "internal_defect": internal,
        "externally_symmetric": symmetric,
        "hurwitz": hurwitz,
        "spectral_abscissa": spectral_abscissa(ctx.cfg.system.a()),
        "hinf_norm": hinf,
        "gain_pk": pk,
        "gain_l2": l2,
    });
    ctx.out.json("symmetry.json", &details)?;
    if !symmetric {
        return Err(CliError::Config(format!(
            "system is not externally symmetric under sigma_e (defect {external:.3e})"
        )));
    }
    Ok(details)
}
