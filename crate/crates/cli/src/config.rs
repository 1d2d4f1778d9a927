//! Run configuration: a TOML document validated before any computation.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use symlqr::lti::{random_state_feedback_system, random_symmetric_system, SymmetryKind};
use symlqr::plant::{NoiseKind, NoiseModel};
use symlqr::pontryagin::check_weight;
use symlqr::{Norm, SignatureMatrix, StateSpace, TimeGrid};

use crate::error::CliError;

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed for every noise stream in the run.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub system: SystemSpec,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub gain: GainSpec,
    #[serde(default)]
    pub study: StudySpec,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub simulate: SimulateSpec,
}

/// Either inline matrices or a generator, never both.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Rows>,
    /// External signature diagonal; defaults to the identity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_e: Option<Vec<f64>>,
    /// Internal signature diagonal, only used by `check-symmetry`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_i: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// `A = A'`, `B = C = I`.
    StateFeedback,
    CompletelySymmetric,
    SignatureSymmetric,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub states: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub stability_margin: f64,
}

/// A weight given as a scalar multiple of the identity or as a full matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weight {
    Scalar(f64),
    Matrix(Rows),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub q: Weight,
    pub r: Weight,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaRule {
    /// Safe step from the H∞ norm of the simulated system.
    AutoSafe,
    /// Half the power-iteration bound `ᾱ`, capped at one.
    AutoPower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Value(f64),
    Rule(AlphaRule),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_alpha")]
    pub alpha: AlphaSpec,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_norm")]
    pub norm: Norm,
    #[serde(default = "default_power_iterations")]
    pub power_iterations: usize,
}

fn default_alpha() -> AlphaSpec {
    AlphaSpec::Value(1.0)
}
fn default_tolerance() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    1000
}
fn default_norm() -> Norm {
    Norm::L2
}
fn default_power_iterations() -> usize {
    500
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            tolerance: default_tolerance(),
            max_iter: default_max_iter(),
            norm: default_norm(),
            power_iterations: default_power_iterations(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSpec {
    /// Solver iterations `k` before sampling.
    #[serde(default = "default_gain_iterations")]
    pub iterations: usize,
    /// Number of samples; defaults to the state dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Sampling window; defaults to `min(1, t_f/4)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_bar: Option<f64>,
    /// Independent experiments averaged into one estimate.
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub state_noise: NoiseModel,
    /// Optional sweep over horizons, reusing every other setting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizons: Option<Vec<f64>>,
}

fn default_gain_iterations() -> usize {
    11
}
fn default_trials() -> usize {
    1
}

impl Default for GainSpec {
    fn default() -> Self {
        Self {
            iterations: default_gain_iterations(),
            samples: None,
            t_bar: None,
            trials: default_trials(),
            state_noise: NoiseModel::none(),
            horizons: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    #[serde(default = "default_study_iterations")]
    pub iterations: usize,
    #[serde(default = "default_study_trials")]
    pub trials: usize,
}

fn default_study_iterations() -> usize {
    5
}
fn default_study_trials() -> usize {
    2000
}

impl Default for StudySpec {
    fn default() -> Self {
        Self { iterations: default_study_iterations(), trials: default_study_trials() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    /// Horizons for the Riccati tail-decay sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_horizons: Option<Vec<f64>>,
    #[serde(default = "default_tail_t_bar")]
    pub t_bar: f64,
    #[serde(default = "default_tail_step")]
    pub step: f64,
}

fn default_tail_t_bar() -> f64 {
    0.5
}
fn default_tail_step() -> f64 {
    0.002
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self { tail_horizons: None, t_bar: default_tail_t_bar(), step: default_tail_step() }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    /// Constant input value per channel; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<Vec<f64>>,
}

/// A validated configuration together with the objects built from it.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub system: StateSpace,
    pub sigma_e: SignatureMatrix,
    pub sigma_i: Option<SignatureMatrix>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub grid: TimeGrid,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn matrix(rows: &Rows, name: &str) -> Result<DMatrix<f64>, CliError> {
    symlqr::linalg::from_rows(rows, name).map_err(|e| invalid(e.to_string()))
}

fn weight(w: &Weight, m: usize, name: &str) -> Result<DMatrix<f64>, CliError> {
    let mat = match w {
        Weight::Scalar(s) => DMatrix::identity(m, m) * *s,
        Weight::Matrix(rows) => matrix(rows, name)?,
    };
    if mat.shape() != (m, m) {
        return Err(invalid(format!("{name} must be {m}x{m}, got {}x{}", mat.nrows(), mat.ncols())));
    }
    Ok(mat)
}

fn check_noise(noise: &NoiseModel, name: &str) -> Result<(), CliError> {
    noise.validate().map_err(|e| invalid(format!("{name}: {e}")))?;
    let active = match noise.kind {
        NoiseKind::None => noise.sigma == 0.0 && noise.bound == 0.0,
        NoiseKind::GaussianL2 => noise.bound == 0.0,
        NoiseKind::UniformBounded => noise.sigma == 0.0,
    };
    if !active {
        return Err(invalid(format!("{name}: parameter does not match noise kind {:?}", noise.kind)));
    }
    Ok(())
}

fn build_system(spec: &SystemSpec) -> Result<(StateSpace, Option<SignatureMatrix>, Option<SignatureMatrix>), CliError> {
    let inline = spec.a.is_some() || spec.b.is_some() || spec.c.is_some() || spec.d.is_some();
    match (&spec.generator, inline) {
        (Some(_), true) => Err(invalid("system: give either matrices or a generator, not both")),
        (None, false) => Err(invalid("system: missing matrices a, b, c or a generator")),
        (Some(g), false) => {
            let generated = match g.kind {
                GeneratorKind::StateFeedback => {
                    if g.channels.is_some_and(|m| m != g.states) {
                        return Err(invalid("system.generator: state_feedback systems have channels = states"));
                    }
                    random_state_feedback_system(g.states, g.seed, g.stability_margin)
                }
                GeneratorKind::CompletelySymmetric | GeneratorKind::SignatureSymmetric => {
                    let kind = if g.kind == GeneratorKind::CompletelySymmetric {
                        SymmetryKind::CompletelySymmetric
                    } else {
                        SymmetryKind::SignatureSymmetric
                    };
                    let m = g.channels.ok_or_else(|| invalid("system.generator: channels is required"))?;
                    random_symmetric_system(g.states, m, g.seed, kind, g.stability_margin)
                }
            }
            .map_err(|e| invalid(format!("system.generator: {e}")))?;
            Ok((generated.system, Some(generated.external_signature), Some(generated.internal_signature)))
        }
        (None, true) => {
            let (Some(a), Some(b), Some(c)) = (&spec.a, &spec.b, &spec.c) else {
                return Err(invalid("system: a, b and c are all required"));
            };
            let (a, b, c) = (matrix(a, "system.a")?, matrix(b, "system.b")?, matrix(c, "system.c")?);
            let d = match &spec.d {
                Some(d) => matrix(d, "system.d")?,
                None => DMatrix::zeros(c.nrows(), b.ncols()),
            };
            let sys = StateSpace::new(a, b, c, d).map_err(|e| invalid(format!("system: {e}")))?;
            Ok((sys, None, None))
        }
    }
}

fn signature(diag: &[f64], name: &str) -> Result<SignatureMatrix, CliError> {
    SignatureMatrix::new(diag.to_vec()).map_err(|e| invalid(format!("{name}: {e}")))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| invalid(format!("invalid configuration: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks the schema constraints and builds the system, weights and grid.
    pub fn resolve(self) -> Result<Resolved, CliError> {
        let (system, generated_se, generated_si) = build_system(&self.system)?;
        let m = system.channels();
        let sigma_e = match (&self.system.sigma_e, generated_se) {
            (Some(diag), _) => signature(diag, "system.sigma_e")?,
            (None, Some(se)) => se,
            (None, None) => SignatureMatrix::identity(m),
        };
        if sigma_e.len() != m {
            return Err(invalid(format!("system.sigma_e has {} entries, system has {m} channels", sigma_e.len())));
        }
        let sigma_i = match (&self.system.sigma_i, generated_si) {
            (Some(diag), _) => Some(signature(diag, "system.sigma_i")?),
            (None, si) => si,
        };
        if sigma_i.as_ref().is_some_and(|s| s.len() != system.states()) {
            return Err(invalid("system.sigma_i must have one entry per state"));
        }

        let p = &self.problem;
        let q = weight(&p.q, m, "problem.q")?;
        let r = weight(&p.r, m, "problem.r")?;
        check_weight(&q, "Q", -1e-12).map_err(|e| invalid(format!("problem.q: {e}")))?;
        check_weight(&r, "R", 1e-12).map_err(|e| invalid(format!("problem.r: {e}")))?;
        if p.x0.len() != system.states() {
            return Err(invalid(format!("problem.x0 has {} entries, system has {} states", p.x0.len(), system.states())));
        }
        if p.x0.iter().any(|v| !v.is_finite()) {
            return Err(invalid("problem.x0 must be finite"));
        }
        let grid = TimeGrid::new(p.horizon, p.intervals).map_err(|e| invalid(format!("problem: {e}")))?;

        let s = &self.solver;
        if let AlphaSpec::Value(a) = s.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(invalid(format!("solver.alpha must be positive, got {a}")));
            }
        }
        if !(s.tolerance > 0.0) || s.max_iter == 0 || s.power_iterations == 0 {
            return Err(invalid("solver: tolerance, max_iter and power_iterations must be positive"));
        }
        check_noise(&self.noise, "noise")?;
        check_noise(&self.gain.state_noise, "gain.state_noise")?;
        let g = &self.gain;
        if g.trials == 0 || g.iterations == 0 {
            return Err(invalid("gain: trials and iterations must be positive"));
        }
        if g.samples.is_some_and(|n| n < system.states()) {
            return Err(invalid(format!("gain.samples must be at least {}", system.states())));
        }
        if let Some(t) = g.t_bar {
            if !(t >= 0.0 && t <= p.horizon) {
                return Err(invalid(format!("gain.t_bar must lie in [0, {}]", p.horizon)));
            }
        }
        if let Some(h) = &g.horizons {
            if h.len() < 2 || h.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
                return Err(invalid("gain.horizons needs at least two positive horizons"));
            }
        }
        if self.study.trials < 2 || self.study.iterations == 0 {
            return Err(invalid("study: need at least 2 trials and 1 iteration"));
        }
        if let Some(h) = &self.oracle.tail_horizons {
            if h.len() < 2 || h.iter().any(|&t| !(t >= self.oracle.t_bar && t.is_finite())) {
                return Err(invalid("oracle.tail_horizons needs at least two horizons, each at least oracle.t_bar"));
            }
        }
        if self.simulate.input.as_ref().is_some_and(|u| u.len() != m || u.iter().any(|v| !v.is_finite())) {
            return Err(invalid(format!("simulate.input must have {m} finite entries")));
        }
        Ok(Resolved { config: self, system, sigma_e, sigma_i, q, r, grid })
    }
}

impl Resolved {
    /// Seed for the noise streams of trial `index`.
    pub fn noise_seed(&self, index: u64) -> u64 {
        symlqr::noise_study::trial_seed(self.config.seed ^ self.config.noise.seed, index)
    }

    pub fn samples(&self) -> usize {
        self.config.gain.samples.unwrap_or(self.system.states())
    }
}
