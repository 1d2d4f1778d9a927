//! Recovery of the infinite-horizon feedback gain from learned open-loop data.
//!
//! Along the optimal trajectory `u(t) = −K(t)·x(t)` and `K(t) → K∞` away from
//! the end of the horizon, so `n` state/control samples taken early on give
//! `K·X = −U`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, inf_norm};
use crate::plant::{NoiseModel, StateSampling};
use crate::pontryagin::OperatorConfig;
use crate::signals::{Norm, Signal, TimeGrid};
use crate::solver::{run_iterations, SolveResult};

/// Sampled states and controls, column-aligned with `sample_times`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrices {
    pub x: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub sample_times: Vec<f64>,
    /// Ratio of extreme singular values of `X`.
    pub condition_number: f64,
    /// State measurements carried noise.
    pub noisy: bool,
}

impl DataMatrices {
    pub fn new(x: DMatrix<f64>, u: DMatrix<f64>, sample_times: Vec<f64>) -> Result<Self> {
        if x.ncols() != u.ncols() || x.ncols() != sample_times.len() {
            return Err(Error::Dimension(format!(
                "X has {} columns, U {} and there are {} sample times",
                x.ncols(),
                u.ncols(),
                sample_times.len()
            )));
        }
        let condition_number = condition(&x);
        Ok(Self { x, u, sample_times, condition_number, noisy: false })
    }
}

fn condition(x: &DMatrix<f64>) -> f64 {
    if x.is_empty() {
        return f64::INFINITY;
    }
    let sv = x.clone().svd(false, false).singular_values;
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    NoiseFree,
    SingleTrial,
    Averaged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainEstimate {
    pub k: DMatrix<f64>,
    pub provenance: Provenance,
    pub trials: usize,
    /// `‖K·X + U‖_∞`
    pub residual: f64,
}

/// Default sampling window `min(1, t_f/4)`.
pub fn default_t_bar(horizon: f64) -> f64 {
    (horizon / 4.0).min(1.0)
}

/// Grid nodes nearest to `t_i = i·t̄/n_s`, `i = 0..n_s`.
pub fn sample_nodes(grid: &TimeGrid, samples: usize, t_bar: f64) -> Result<Vec<usize>> {
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    if !(t_bar >= 0.0 && t_bar <= grid.horizon()) {
        return Err(Error::InvalidArgument(format!(
            "t_bar = {t_bar} must lie in [0, {}]",
            grid.horizon()
        )));
    }
    Ok((0..samples)
        .map(|i| grid.nearest_node(i as f64 * t_bar / samples as f64))
        .collect())
}

/// Applies `u_k` once and records `n_s` state samples and the matching controls.
pub fn collect_data<P: StateSampling + ?Sized>(
    plant: &mut P,
    u_k: &Signal,
    samples: usize,
    t_bar: f64,
    state_noise: &NoiseModel,
) -> Result<DataMatrices> {
    let n = plant.states();
    if samples < n {
        return Err(Error::InvalidArgument(format!("need at least {n} samples, got {samples}")));
    }
    let grid = plant.grid();
    let nodes = sample_nodes(&grid, samples, t_bar)?;
    let x = plant.sample_states(u_k, &nodes, state_noise)?;
    let u = DMatrix::from_fn(u_k.channels(), nodes.len(), |r, c| u_k.at(nodes[c])[r]);
    let times = nodes.iter().map(|&i| grid.time(i)).collect();
    let mut data = DataMatrices::new(x, u, times)?;
    data.noisy = !state_noise.is_zero();
    Ok(data)
}

fn solve_gain(x: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let svd = x.clone().svd(true, true);
    let largest = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * largest).count();
    if x.ncols() < n || rank < n || largest == 0.0 {
        return Err(Error::RankDeficient { rank, required: n });
    }
    if x.ncols() == n {
        return Ok(-u * linalg::inverse(x, "X")?);
    }
    // least squares on X'·K' = −U'
    let kt = x
        .transpose()
        .svd(true, true)
        .solve(&(-u.transpose()), 0.0)
        .map_err(|_| Error::Singular("X"))?;
    Ok(kt.transpose())
}

/// Solves `K·X = −U`, exactly for square `X` and in least squares otherwise.
pub fn recover_gain(data: &DataMatrices) -> Result<GainEstimate> {
    let k = solve_gain(&data.x, &data.u)?;
    let residual = inf_norm(&(&k * &data.x + &data.u));
    let provenance = if data.noisy { Provenance::SingleTrial } else { Provenance::NoiseFree };
    Ok(GainEstimate { k, provenance, trials: 1, residual })
}

/// Averages the data matrices over trials, then recovers one gain.
pub fn average_trials(trials: &[DataMatrices]) -> Result<GainEstimate> {
    let first = trials
        .first()
        .ok_or_else(|| Error::InvalidArgument("need at least one trial".into()))?;
    let mut x = DMatrix::zeros(first.x.nrows(), first.x.ncols());
    let mut u = DMatrix::zeros(first.u.nrows(), first.u.ncols());
    for t in trials {
        if t.x.shape() != first.x.shape() || t.u.shape() != first.u.shape() || t.sample_times != first.sample_times {
            return Err(Error::Dimension("trials have inconsistent shapes or sample times".into()));
        }
        x += &t.x;
        u += &t.u;
    }
    let count = trials.len() as f64;
    let mean = DataMatrices::new(x / count, u / count, first.sample_times.clone())?;
    let mut estimate = recover_gain(&mean)?;
    if trials.len() > 1 || first.noisy {
        estimate.provenance = Provenance::Averaged;
    }
    estimate.trials = trials.len();
    Ok(estimate)
}

/// Settings for one learn-then-sample pass.
#[derive(Debug, Clone)]
pub struct GainRecoveryConfig {
    pub iterations: usize,
    pub alpha: f64,
    pub samples: usize,
    pub t_bar: f64,
    pub state_noise: NoiseModel,
}

/// Runs `iterations` steps of the fixed-point solver, then collects data.
pub fn learn_and_collect<P: StateSampling + ?Sized>(
    plant: &mut P,
    op: &OperatorConfig,
    cfg: &GainRecoveryConfig,
) -> Result<(DataMatrices, SolveResult)> {
    let solve = run_iterations(plant, op, cfg.alpha, cfg.iterations, Norm::Linf, None, None)?;
    let data = collect_data(plant, &solve.control, cfg.samples, cfg.t_bar, &cfg.state_noise)?;
    Ok((data, solve))
}
