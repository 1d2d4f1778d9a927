//! The two-experiment operator `T` whose fixed point is the optimal control.
//!
//! `T(u) = −R⁻¹Σe·J·ŵ` where `y` is the plant response to `u` from `x₀` and
//! `ŵ` is the response from rest to `Σe·Q·J·y`. Everything here goes through
//! [`Plant`] only.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, sym_eig_range, sym_fn};
use crate::lti::SignatureMatrix;
use crate::plant::{InitialState, Plant};
use crate::signals::{Norm, Signal, TimeGrid};

/// Weights, signature and grid of the output-regulation problem.
#[derive(Debug, Clone)]
pub struct OperatorConfig {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    sigma_e: SignatureMatrix,
    grid: TimeGrid,
    r_inv: DMatrix<f64>,
    r_sqrt: DMatrix<f64>,
    r_inv_sqrt: DMatrix<f64>,
    // Σe·Q and −R⁻¹·Σe
    k1: DMatrix<f64>,
    k2: DMatrix<f64>,
}

impl OperatorConfig {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>, sigma_e: SignatureMatrix, grid: TimeGrid) -> Result<Self> {
        let m = sigma_e.len();
        if q.shape() != (m, m) || r.shape() != (m, m) {
            return Err(Error::Dimension(format!(
                "Q and R must be {m}x{m}, got {:?} and {:?}",
                q.shape(),
                r.shape()
            )));
        }
        if !linalg::is_finite(&q) || !linalg::is_finite(&r) {
            return Err(Error::NonFinite("weights"));
        }
        check_weight(&q, "Q", -1e-12)?;
        check_weight(&r, "R", 1e-12)?;
        let r_inv = sym_fn(&r, |x| 1.0 / x);
        let r_sqrt = sym_fn(&r, |x| x.max(1e-14).sqrt());
        let r_inv_sqrt = sym_fn(&r, |x| 1.0 / x.max(1e-14).sqrt());
        let se = sigma_e.matrix();
        let k1 = &se * &q;
        let k2 = -(&r_inv * &se);
        Ok(Self { q, r, sigma_e, grid, r_inv, r_sqrt, r_inv_sqrt, k1, k2 })
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }
    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }
    pub fn r_inv(&self) -> &DMatrix<f64> {
        &self.r_inv
    }
    pub fn r_sqrt(&self) -> &DMatrix<f64> {
        &self.r_sqrt
    }
    pub fn r_inv_sqrt(&self) -> &DMatrix<f64> {
        &self.r_inv_sqrt
    }
    pub fn sigma_e(&self) -> &SignatureMatrix {
        &self.sigma_e
    }
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }
    pub fn channels(&self) -> usize {
        self.sigma_e.len()
    }

    fn check<P: Plant + ?Sized>(&self, plant: &P, u: &Signal) -> Result<()> {
        if plant.grid() != self.grid || *u.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        if plant.channels() != self.channels() || u.channels() != self.channels() {
            return Err(Error::Dimension(format!(
                "operator has {} channels, plant {} and signal {}",
                self.channels(),
                plant.channels(),
                u.channels()
            )));
        }
        if plant.external_signature() != &self.sigma_e {
            return Err(Error::InvalidArgument(
                "operator signature differs from the plant's external signature".into(),
            ));
        }
        Ok(())
    }
}

/// Checks symmetry and an eigenvalue floor of a weight matrix.
pub fn check_weight(w: &DMatrix<f64>, name: &str, floor: f64) -> Result<()> {
    if linalg::asymmetry(w) > 1e-12 * (1.0 + linalg::inf_norm(w)) {
        return Err(Error::InvalidArgument(format!("{name} must be symmetric")));
    }
    let (lo, _) = sym_eig_range(w);
    if lo < floor {
        let what = if floor > 0.0 { "positive definite" } else { "positive semidefinite" };
        return Err(Error::InvalidArgument(format!(
            "{name} must be {what} (smallest eigenvalue {lo:e})"
        )));
    }
    Ok(())
}

/// Result of one evaluation of `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorEval {
    pub input: Signal,
    /// `y`: response to the input from `x₀`.
    pub first_output: Signal,
    /// `ŵ`: response from rest to `Σe·Q·J·y`.
    pub second_output: Signal,
    pub result: Signal,
    pub plant_runs: usize,
}

fn two_runs<P: Plant + ?Sized>(
    plant: &mut P,
    cfg: &OperatorConfig,
    start: InitialState,
    u: &Signal,
) -> Result<(Signal, Signal, Signal)> {
    cfg.check(plant, u)?;
    let y = plant.run(start, u)?;
    let w_hat = plant.run(InitialState::Origin, &y.time_reverse().map_channels(&cfg.k1)?)?;
    let result = w_hat.time_reverse().map_channels(&cfg.k2)?;
    Ok((y, w_hat, result))
}

/// `T(u)`: two plant runs, the first from `x₀`.
pub fn apply_t<P: Plant + ?Sized>(plant: &mut P, cfg: &OperatorConfig, u: &Signal) -> Result<OperatorEval> {
    let (first_output, second_output, result) = two_runs(plant, cfg, InitialState::Problem, u)?;
    Ok(OperatorEval { input: u.clone(), first_output, second_output, result, plant_runs: 2 })
}

/// `S(u)`, the linear part of `T`: both runs from rest.
pub fn apply_s<P: Plant + ?Sized>(plant: &mut P, cfg: &OperatorConfig, u: &Signal) -> Result<Signal> {
    Ok(two_runs(plant, cfg, InitialState::Origin, u)?.2)
}

/// `S*v = −Σe·J·G·Σe·Q·J·G·(R⁻¹v)`, valid for externally symmetric plants.
pub fn apply_s_adjoint<P: Plant + ?Sized>(plant: &mut P, cfg: &OperatorConfig, v: &Signal) -> Result<Signal> {
    cfg.check(plant, v)?;
    let first = plant.run(InitialState::Origin, &v.map_channels(&cfg.r_inv)?)?;
    let second = plant.run(InitialState::Origin, &first.time_reverse().map_channels(&cfg.k1)?)?;
    second.time_reverse().map_channels(&(-cfg.sigma_e.matrix()))
}

/// Power-iteration estimate of `‖R^{1/2}·S·R^{−1/2}‖` and the step bound `ᾱ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaEstimate {
    pub alpha_bar: f64,
    pub norm: f64,
    pub iterations: usize,
    pub plant_runs: usize,
    /// Every Rayleigh quotient was non-positive, as it must be without noise.
    pub sign_consistent: bool,
}

/// `ᾱ` from a deterministic pseudo-random start.
pub fn estimate_alpha_bar<P: Plant + ?Sized>(
    plant: &mut P,
    cfg: &OperatorConfig,
    max_power_iters: usize,
) -> Result<AlphaEstimate> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa1fa);
    let g = cfg.grid();
    let start = Signal::from_fn(g, cfg.channels(), |_, out| {
        out.iter_mut().for_each(|v| *v = rng.random_range(0.5..1.5))
    })?;
    estimate_alpha_bar_from(plant, cfg, &start, max_power_iters)
}

pub fn estimate_alpha_bar_from<P: Plant + ?Sized>(
    plant: &mut P,
    cfg: &OperatorConfig,
    start: &Signal,
    max_power_iters: usize,
) -> Result<AlphaEstimate> {
    let start_norm = start.norm(Norm::L2);
    if start_norm == 0.0 {
        return Err(Error::InvalidArgument("power iteration needs a non-zero start vector".into()));
    }
    let mut v = start.scale(1.0 / start_norm);
    let mut estimate = 0.0;
    let mut sign_consistent = true;
    let mut iterations = 0;
    while iterations < max_power_iters.max(1) {
        iterations += 1;
        let w = apply_s(plant, cfg, &v.map_channels(&cfg.r_inv_sqrt)?)?.map_channels(&cfg.r_sqrt)?;
        let quotient = v.inner_product(&w)?;
        sign_consistent &= quotient <= 1e-10 * w.norm(Norm::L2).max(f64::MIN_POSITIVE);
        let previous = estimate;
        estimate = quotient.abs();
        let w_norm = w.norm(Norm::L2);
        if w_norm == 0.0 {
            estimate = 0.0;
            break;
        }
        if iterations > 1 && (estimate - previous).abs() < 1e-6 * estimate {
            break;
        }
        v = w.scale(1.0 / w_norm);
    }
    Ok(AlphaEstimate {
        alpha_bar: 2.0 / (estimate * estimate + 1.0),
        norm: estimate,
        iterations,
        plant_runs: 2 * iterations,
        sign_consistent,
    })
}

/// `β = 2/(1 + ‖G‖⁴_{H∞}·λmax(Q)²/λmin(R)²)`.
pub fn safe_step_size(hinf_gain: f64, q: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
    let (_, q_max) = sym_eig_range(q);
    let (r_min, _) = sym_eig_range(r);
    let ratio = hinf_gain.powi(2) * q_max.max(0.0) / r_min;
    2.0 / (1.0 + ratio * ratio)
}

/// A step strictly inside `(0, min{1, bound})`.
pub fn recommended_alpha(bound: f64) -> f64 {
    bound.min(1.0) * (1.0 - 1e-6)
}

/// L2 contraction bound `√((1−α)² + α²·norm²)`.
pub fn contraction_l2(alpha: f64, norm: f64) -> f64 {
    ((1.0 - alpha).powi(2) + (alpha * norm).powi(2)).sqrt()
}

/// L∞ contraction bound `1 − α + α·‖R⁻¹‖_∞·‖G‖²_pk·‖Q‖_∞`.
pub fn contraction_linf(alpha: f64, gain_pk: f64, q: &DMatrix<f64>, r_inv: &DMatrix<f64>) -> f64 {
    1.0 - alpha + alpha * linalg::inf_norm(r_inv) * gain_pk * gain_pk * linalg::inf_norm(q)
}
