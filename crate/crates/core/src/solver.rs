//! Fixed-point iteration `u_{k+1} = (1−α)·u_k + α·T(u_k)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::plant::Plant;
use crate::pontryagin::{apply_t, OperatorConfig};
use crate::signals::{Norm, Signal};

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub alpha: f64,
    /// Stop once `‖u_{k+1} − u_k‖ < tolerance`.
    pub tolerance: f64,
    pub max_iter: usize,
    pub norm: Norm,
    /// Starting control; zero when `None`.
    pub initial: Option<Signal>,
    pub record_history: bool,
}

impl SolverConfig {
    pub fn new(alpha: f64, tolerance: f64, max_iter: usize, norm: Norm) -> Self {
        Self { alpha, tolerance, max_iter, norm, initial: None, record_history: false }
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::new(1.0, 1e-8, 1000, Norm::L2)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("step size must lie in (0, 1], got {alpha}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Tolerance,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub control: Signal,
    pub iterations: usize,
    /// `‖u_{k+1} − u_k‖` for each iteration.
    pub residuals: Vec<f64>,
    /// `u_0, …, u_K` when history recording is on.
    pub history: Option<Vec<Signal>>,
    /// `‖u_k − u*‖` for `k = 0..=K` when a reference control is supplied.
    pub errors: Option<Vec<f64>>,
    pub plant_runs: usize,
    pub termination: Termination,
}

/// One update step: `(1−α)·u_k + α·T(u_k)`.
pub fn iterate_once<P: Plant + ?Sized>(plant: &mut P, cfg: &OperatorConfig, u_k: &Signal, alpha: f64) -> Result<Signal> {
    check_alpha(alpha)?;
    let t = apply_t(plant, cfg, u_k)?.result;
    if alpha == 1.0 {
        return Ok(t);
    }
    u_k.lincomb(1.0 - alpha, &t, alpha)
}

struct Tracker<'a> {
    norm: Norm,
    limit: f64,
    reference: Option<&'a Signal>,
    errors: Vec<f64>,
    history: Option<Vec<Signal>>,
}

impl<'a> Tracker<'a> {
    fn new(u0: &Signal, norm: Norm, reference: Option<&'a Signal>, record: bool) -> Result<Self> {
        let mut t = Self {
            norm,
            limit: 1e6 * (1.0 + u0.norm(Norm::Linf)),
            reference,
            errors: Vec::new(),
            history: record.then(Vec::new),
        };
        t.record(0, u0)?;
        Ok(t)
    }

    fn record(&mut self, iteration: usize, u: &Signal) -> Result<()> {
        let size = u.norm(Norm::Linf);
        if !size.is_finite() || size > self.limit {
            return Err(Error::Divergence { iteration, norm: size });
        }
        if let Some(r) = self.reference {
            self.errors.push(u.sub(r)?.norm(self.norm));
        }
        if let Some(h) = &mut self.history {
            h.push(u.clone());
        }
        Ok(())
    }
}

fn initial_control(op: &OperatorConfig, initial: Option<&Signal>) -> Signal {
    initial.cloned().unwrap_or_else(|| Signal::zeros(op.grid(), op.channels()))
}

/// Iterates until the update falls below the tolerance or `max_iter` is reached.
pub fn solve<P: Plant + ?Sized>(
    plant: &mut P,
    op: &OperatorConfig,
    cfg: &SolverConfig,
    oracle: Option<&Signal>,
) -> Result<SolveResult> {
    cfg.validate()?;
    let mut u = initial_control(op, cfg.initial.as_ref());
    let mut tracker = Tracker::new(&u, cfg.norm, oracle, cfg.record_history)?;
    let mut residuals = Vec::new();
    let mut termination = Termination::MaxIter;
    for k in 1..=cfg.max_iter {
        let next = iterate_once(plant, op, &u, cfg.alpha)?;
        tracker.record(k, &next)?;
        let residual = next.sub(&u)?.norm(cfg.norm);
        residuals.push(residual);
        u = next;
        if residual < cfg.tolerance {
            termination = Termination::Tolerance;
            break;
        }
    }
    let iterations = residuals.len();
    Ok(SolveResult {
        control: u,
        iterations,
        residuals,
        history: tracker.history,
        errors: oracle.map(|_| tracker.errors),
        plant_runs: 2 * iterations,
        termination,
    })
}

/// Exactly `iterations` updates with no early stop.
pub fn run_iterations<P: Plant + ?Sized>(
    plant: &mut P,
    op: &OperatorConfig,
    alpha: f64,
    iterations: usize,
    norm: Norm,
    initial: Option<&Signal>,
    oracle: Option<&Signal>,
) -> Result<SolveResult> {
    check_alpha(alpha)?;
    let mut u = initial_control(op, initial);
    let mut tracker = Tracker::new(&u, norm, oracle, false)?;
    let mut residuals = Vec::with_capacity(iterations);
    for k in 1..=iterations {
        let next = iterate_once(plant, op, &u, alpha)?;
        tracker.record(k, &next)?;
        residuals.push(next.sub(&u)?.norm(norm));
        u = next;
    }
    Ok(SolveResult {
        control: u,
        iterations,
        residuals,
        history: None,
        errors: oracle.map(|_| tracker.errors),
        plant_runs: 2 * iterations,
        termination: Termination::MaxIter,
    })
}

/// Least-squares slope of `ln e_k` against `k`, returned as a ratio `exp(slope)`.
pub fn fitted_ratio(errors: &[f64]) -> Option<f64> {
    let points: Vec<(f64, f64)> = errors
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0.0 && e.is_finite())
        .map(|(k, &e)| (k as f64, e.ln()))
        .collect();
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some((sxy / sxx).exp())
}
