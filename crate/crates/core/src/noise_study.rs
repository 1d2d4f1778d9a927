//! Monte Carlo check that measurement noise leaves the learned control
//! unbiased with bounded variance.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{inf_norm, spectral_norm};
use crate::lti::{gain_l2, gain_pk, Horizon, StateSpace};
use crate::plant::{NoiseKind, NoiseModel, SimulatedPlant};
use crate::pontryagin::{contraction_l2, contraction_linf, estimate_alpha_bar, OperatorConfig};
use crate::signals::{Norm, Signal};
use crate::solver::run_iterations;

#[derive(Debug, Clone)]
pub struct NoiseStudyConfig {
    pub noise: NoiseModel,
    pub iterations: usize,
    pub trials: usize,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseStudyReport {
    pub trials: usize,
    pub iterations: usize,
    pub alpha: f64,
    /// Norm in which the variance bound is stated.
    pub variance_norm: Norm,
    /// `‖mean(ũ_k)(t_i) − u_k(t_i)‖_∞` per node.
    pub mean_deviation: Vec<f64>,
    /// Largest per-channel standard error of the mean, per node.
    pub standard_error: Vec<f64>,
    /// `‖Cov(ν_k; t_i)‖` per node, in `variance_norm`'s matrix norm.
    pub node_variance: Vec<f64>,
    /// Share of (node, channel) pairs whose mean lies within 4 standard errors of zero.
    pub mean_pass_fraction: f64,
    pub mean_check: bool,
    /// Integrated covariance norm (L2 noise) or its supremum over nodes (bounded noise).
    pub empirical_variance: f64,
    pub variance_bound: f64,
    pub variance_check: bool,
    /// Contraction factor used in the bound.
    pub contraction: f64,
    #[serde(skip)]
    pub noise_free_control: Signal,
}

impl NoiseStudyReport {
    pub fn passed(&self) -> bool {
        self.mean_check && self.variance_check
    }
}

/// Deterministic per-trial seed.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = master ^ trial.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct Bound {
    value: f64,
    contraction: f64,
    norm: Norm,
}

fn variance_bound(sys: &StateSpace, x0: &[f64], op: &OperatorConfig, cfg: &NoiseStudyConfig) -> Result<Bound> {
    let m = op.channels() as f64;
    let alpha = cfg.alpha;
    let inadmissible = |rho: f64| {
        Error::InvalidArgument(format!(
            "step size {alpha} is inadmissible for the variance bound (contraction {rho:.4} >= 1)"
        ))
    };
    match cfg.noise.kind {
        NoiseKind::None => Ok(Bound { value: 0.0, contraction: 0.0, norm: Norm::L2 }),
        NoiseKind::GaussianL2 => {
            let grid = op.grid();
            let mut clean = SimulatedPlant::new(sys, x0, op.sigma_e().clone(), grid, NoiseModel::none())?;
            let norm = estimate_alpha_bar(&mut clean, op, 500)?.norm;
            let rho = contraction_l2(alpha, norm);
            if rho >= 1.0 {
                return Err(inadmissible(rho));
            }
            let g = gain_l2(sys, grid, Some(op.sigma_e()))?;
            let r_inv = spectral_norm(op.r_inv());
            let q = spectral_norm(op.q());
            let sigma = cfg.noise.sigma;
            let value = m * sigma * sigma * alpha * alpha * grid.horizon() * r_inv * r_inv * (g * g * q * q + 1.0)
                / (1.0 - rho * rho);
            Ok(Bound { value, contraction: rho, norm: Norm::L2 })
        }
        NoiseKind::UniformBounded => {
            let pk = if sys.is_hurwitz() {
                gain_pk(sys, Horizon::Infinite)?
            } else {
                gain_pk(sys, Horizon::Finite(op.grid().horizon()))?
            };
            let rho = contraction_linf(alpha, pk, op.q(), op.r_inv());
            if rho >= 1.0 {
                return Err(inadmissible(rho));
            }
            let r_inv = inf_norm(op.r_inv());
            let q = inf_norm(op.q());
            let e = cfg.noise.bound;
            let value = m.powf(1.5) * e * e * alpha * alpha * r_inv * r_inv * (pk * pk * q * q + 1.0) / (1.0 - rho * rho);
            Ok(Bound { value, contraction: rho, norm: Norm::Linf })
        }
    }
}

/// Runs the solver `trials` times under independent noise and once without.
pub fn run_unbiasedness_study(
    sys: &StateSpace,
    x0: &[f64],
    op: &OperatorConfig,
    cfg: &NoiseStudyConfig,
) -> Result<NoiseStudyReport> {
    if cfg.trials < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 trials, got {}", cfg.trials)));
    }
    cfg.noise.validate()?;
    let grid = op.grid();
    let m = op.channels();
    let bound = variance_bound(sys, x0, op, cfg)?;

    let mut clean = SimulatedPlant::new(sys, x0, op.sigma_e().clone(), grid, NoiseModel::none())?;
    let nominal = run_iterations(&mut clean, op, cfg.alpha, cfg.iterations, Norm::L2, None, None)?.control;

    let deviations: Vec<Signal> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let noise = cfg.noise.with_seed(trial_seed(cfg.seed, trial));
            let mut plant = SimulatedPlant::new(sys, x0, op.sigma_e().clone(), grid, noise)?;
            let u = run_iterations(&mut plant, op, cfg.alpha, cfg.iterations, Norm::L2, None, None)?.control;
            u.sub(&nominal)
        })
        .collect::<Result<_>>()?;

    let count = cfg.trials as f64;
    let nodes = grid.len();
    let mut mean = vec![0.0; nodes * m];
    for d in &deviations {
        mean.iter_mut().zip(d.values()).for_each(|(a, b)| *a += b);
    }
    mean.iter_mut().for_each(|v| *v /= count);

    let mut cov = vec![DMatrix::<f64>::zeros(m, m); nodes];
    for d in &deviations {
        for (i, c) in cov.iter_mut().enumerate() {
            let row = d.at(i);
            for a in 0..m {
                for b in 0..m {
                    c[(a, b)] += (row[a] - mean[i * m + a]) * (row[b] - mean[i * m + b]);
                }
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= count - 1.0);

    let mut passes = 0usize;
    let mut mean_deviation = Vec::with_capacity(nodes);
    let mut standard_error = Vec::with_capacity(nodes);
    for (i, c) in cov.iter().enumerate() {
        let mut node_dev = 0.0_f64;
        let mut node_se = 0.0_f64;
        for a in 0..m {
            let mu = mean[i * m + a];
            let se = (c[(a, a)] / count).sqrt();
            if mu.abs() <= 4.0 * se {
                passes += 1;
            }
            node_dev = node_dev.max(mu.abs());
            node_se = node_se.max(se);
        }
        mean_deviation.push(node_dev);
        standard_error.push(node_se);
    }
    let mean_pass_fraction = passes as f64 / (nodes * m) as f64;

    let node_variance: Vec<f64> = cov
        .iter()
        .map(|c| match bound.norm {
            Norm::L2 => spectral_norm(c),
            Norm::Linf => inf_norm(c),
        })
        .collect();
    let empirical_variance = match bound.norm {
        Norm::L2 => node_variance.iter().enumerate().map(|(i, v)| grid.weight(i) * v).sum(),
        Norm::Linf => node_variance.iter().copied().fold(0.0, f64::max),
    };

    Ok(NoiseStudyReport {
        trials: cfg.trials,
        iterations: cfg.iterations,
        alpha: cfg.alpha,
        variance_norm: bound.norm,
        mean_deviation,
        standard_error,
        node_variance,
        mean_pass_fraction,
        mean_check: mean_pass_fraction >= 0.99,
        empirical_variance,
        variance_bound: bound.value,
        variance_check: empirical_variance <= 1.1 * bound.value,
        contraction: bound.contraction,
        noise_free_control: nominal,
    })
}
