//! The experiment interface that learning code talks to.
//!
//! A [`Plant`] accepts an input signal and returns the measured output. Nothing
//! else about the system is visible through it: no state, no matrices.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{SignatureMatrix, Simulator, StateSpace};
use crate::signals::{Signal, TimeGrid};

/// Where an experiment starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    /// The problem's initial state `x₀`.
    Problem,
    /// Rest.
    Origin,
}

/// Run-an-experiment access to an unknown system.
pub trait Plant {
    fn grid(&self) -> TimeGrid;
    fn channels(&self) -> usize;
    fn external_signature(&self) -> &SignatureMatrix;
    /// Applies `u` from the chosen start and returns the measured output.
    fn run(&mut self, start: InitialState, u: &Signal) -> Result<Signal>;
    /// Number of runs performed so far.
    fn runs(&self) -> u64;
}

/// Plants that can also report (noisy) state samples for gain recovery.
pub trait StateSampling: Plant {
    fn states(&self) -> usize;
    /// Applies `u` from `x₀` and returns the measured states at `nodes` as columns.
    fn sample_states(&mut self, u: &Signal, nodes: &[usize], noise: &NoiseModel) -> Result<DMatrix<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    None,
    /// Zero-mean Gaussian with standard deviation `sigma` per component.
    GaussianL2,
    /// Uniform on `[-bound, bound]` per component.
    UniformBounded,
}

/// Measurement noise, independent across grid nodes and across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    #[serde(default)]
    pub kind: NoiseKind,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub bound: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self { kind: NoiseKind::GaussianL2, sigma, bound: 0.0, seed }
    }

    pub fn uniform(bound: f64, seed: u64) -> Self {
        Self { kind: NoiseKind::UniformBounded, sigma: 0.0, bound, seed }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("noise {name} must be finite and >= 0, got {v}")))
            }
        };
        check("sigma", self.sigma)?;
        check("bound", self.bound)
    }

    /// True when every sample path is identically zero.
    pub fn is_zero(&self) -> bool {
        match self.kind {
            NoiseKind::None => true,
            NoiseKind::GaussianL2 => self.sigma == 0.0,
            NoiseKind::UniformBounded => self.bound == 0.0,
        }
    }
}

/// One noise realization, deterministic in `(model.seed, run_index)`.
pub fn noise_sample_path(model: &NoiseModel, grid: TimeGrid, channels: usize, run_index: u64) -> Signal {
    let len = grid.len() * channels;
    if model.is_zero() {
        return Signal::zeros(grid, channels);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    rng.set_stream(run_index);
    let values = match model.kind {
        NoiseKind::None => unreachable!("zero noise handled above"),
        NoiseKind::GaussianL2 => (0..len)
            .map(|_| model.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect(),
        NoiseKind::UniformBounded => (0..len)
            .map(|_| rng.random_range(-model.bound..=model.bound))
            .collect(),
    };
    Signal::from_raw(grid, channels, values)
}

/// A simulated system behind the [`Plant`] interface.
#[derive(Debug, Clone)]
pub struct SimulatedPlant {
    simulator: Simulator,
    channels: usize,
    states: usize,
    x0: Vec<f64>,
    sigma_e: SignatureMatrix,
    noise: NoiseModel,
    runs: u64,
}

impl SimulatedPlant {
    pub fn new(
        sys: &StateSpace,
        x0: &[f64],
        sigma_e: SignatureMatrix,
        grid: TimeGrid,
        noise: NoiseModel,
    ) -> Result<Self> {
        if x0.len() != sys.states() {
            return Err(Error::Dimension(format!(
                "x0 has length {}, system has {} states",
                x0.len(),
                sys.states()
            )));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("x0"));
        }
        if sigma_e.len() != sys.channels() {
            return Err(Error::Dimension(format!(
                "external signature has size {}, system has {} channels",
                sigma_e.len(),
                sys.channels()
            )));
        }
        noise.validate()?;
        Ok(Self {
            simulator: Simulator::new(sys, grid),
            channels: sys.channels(),
            states: sys.states(),
            x0: x0.to_vec(),
            sigma_e,
            noise,
            runs: 0,
        })
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    fn start(&self, start: InitialState) -> Vec<f64> {
        match start {
            InitialState::Problem => self.x0.clone(),
            InitialState::Origin => vec![0.0; self.states],
        }
    }

    fn next_run(&mut self) -> u64 {
        let index = self.runs;
        self.runs += 1;
        index
    }
}

impl Plant for SimulatedPlant {
    fn grid(&self) -> TimeGrid {
        *self.simulator.grid()
    }

    fn channels(&self) -> usize {
        self.channels
    }

    fn external_signature(&self) -> &SignatureMatrix {
        &self.sigma_e
    }

    fn run(&mut self, start: InitialState, u: &Signal) -> Result<Signal> {
        let y = self.simulator.output(&self.start(start), u)?;
        let index = self.next_run();
        if self.noise.is_zero() {
            return Ok(y);
        }
        y.add(&noise_sample_path(&self.noise, self.grid(), self.channels, index))
    }

    fn runs(&self) -> u64 {
        self.runs
    }
}

impl StateSampling for SimulatedPlant {
    fn states(&self) -> usize {
        self.states
    }

    fn sample_states(&mut self, u: &Signal, nodes: &[usize], noise: &NoiseModel) -> Result<DMatrix<f64>> {
        noise.validate()?;
        let grid = self.grid();
        if let Some(&bad) = nodes.iter().find(|&&i| i >= grid.len()) {
            return Err(Error::InvalidArgument(format!("sample node {bad} outside the grid")));
        }
        let trajectory = self.simulator.run(&self.x0, u)?;
        let index = self.next_run();
        let eta = noise_sample_path(noise, grid, self.states, index);
        Ok(DMatrix::from_fn(self.states, nodes.len(), |r, c| {
            trajectory.state.at(nodes[c])[r] + eta.at(nodes[c])[r]
        }))
    }
}
