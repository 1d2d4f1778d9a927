//! Ground-truth linear time-invariant systems.
//!
//! Holds the `(A, B, C, D)` realization, exact first-order-hold simulation,
//! impulse responses, finite- and infinite-horizon system gains, and the
//! symmetry checks and generators used to build test plants.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, inf_norm, to_complex};
use crate::signals::{Signal, TimeGrid};

/// Square-channel state-space realization: `m` inputs, `m` outputs, `n` states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        if n == 0 || m == 0 {
            return Err(Error::Dimension("system needs n >= 1 and m >= 1".into()));
        }
        if a.ncols() != n {
            return Err(Error::Dimension(format!("A is {}x{}, must be square", n, a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::Dimension(format!("B has {} rows, expected {n}", b.nrows())));
        }
        if c.shape() != (m, n) {
            return Err(Error::Dimension(format!(
                "C is {}x{}, expected {m}x{n} (outputs must match inputs)",
                c.nrows(),
                c.ncols()
            )));
        }
        if d.shape() != (m, m) {
            return Err(Error::Dimension(format!(
                "D is {}x{}, expected {m}x{m}",
                d.nrows(),
                d.ncols()
            )));
        }
        if ![&a, &b, &c, &d].iter().all(|x| linalg::is_finite(x)) {
            return Err(Error::NonFinite("state-space matrices"));
        }
        Ok(Self { a, b, c, d })
    }

    /// Realization with `D = 0`.
    pub fn strictly_proper(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let m = b.ncols();
        Self::new(a, b, c, DMatrix::zeros(m, m))
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn channels(&self) -> usize {
        self.b.ncols()
    }

    /// The dual realization `(A', C', B', D')`, whose transfer function is `G(s)'`.
    pub fn transposed(&self) -> StateSpace {
        StateSpace {
            a: self.a.transpose(),
            b: self.c.transpose(),
            c: self.b.transpose(),
            d: self.d.transpose(),
        }
    }

    pub fn is_hurwitz(&self) -> bool {
        linalg::spectral_abscissa(&self.a) < 0.0
    }

    fn require_hurwitz(&self) -> Result<()> {
        let max_real_part = linalg::spectral_abscissa(&self.a);
        if max_real_part < 0.0 {
            Ok(())
        } else {
            Err(Error::NotHurwitz { max_real_part })
        }
    }

    /// `G(s) = C (sI − A)⁻¹ B + D`; `None` when `s` is an eigenvalue of `A`.
    pub fn transfer_at(&self, s: Complex64) -> Option<DMatrix<Complex64>> {
        let n = self.states();
        let resolvent = DMatrix::<Complex64>::identity(n, n) * s - to_complex(&self.a);
        let x = resolvent.lu().solve(&to_complex(&self.b))?;
        if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return None;
        }
        Some(to_complex(&self.c) * x + to_complex(&self.d))
    }
}

/// Diagonal matrix with `±1` entries; equal to its transpose and inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SignatureMatrix {
    diag: Vec<f64>,
}

impl SignatureMatrix {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::Dimension("signature matrix must be non-empty".into()));
        }
        if let Some(bad) = diag.iter().find(|&&s| s != 1.0 && s != -1.0) {
            return Err(Error::InvalidArgument(format!(
                "signature entries must be +1 or -1, got {bad}"
            )));
        }
        Ok(Self { diag })
    }

    pub fn identity(m: usize) -> Self {
        Self { diag: vec![1.0; m] }
    }

    pub fn negative_identity(m: usize) -> Self {
        Self { diag: vec![-1.0; m] }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.diag))
    }
}

impl TryFrom<Vec<f64>> for SignatureMatrix {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SignatureMatrix> for Vec<f64> {
    fn from(s: SignatureMatrix) -> Self {
        s.diag
    }
}

/// One-step propagation matrices for a first-order-hold input on a fixed step.
///
/// `x_{i+1} = Φ x_i + Γ₀ u_i + Γ₁ u_{i+1}`, exact when `u` is linear between nodes.
#[derive(Debug, Clone)]
struct Discretization {
    n: usize,
    m: usize,
    phi: Vec<f64>,
    gamma_cur: Vec<f64>,
    gamma_next: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl Discretization {
    fn new(sys: &StateSpace, step: f64) -> Self {
        let n = sys.states();
        let m = sys.channels();
        // exp of [[A, B, 0], [0, 0, I], [0, 0, 0]]·Δ carries the ramp integrals.
        let size = n + 2 * m;
        let mut aug = DMatrix::<f64>::zeros(size, size);
        aug.view_mut((0, 0), (n, n)).copy_from(sys.a());
        aug.view_mut((0, n), (n, m)).copy_from(sys.b());
        aug.view_mut((n, n + m), (m, m)).fill_with_identity();
        let e = (aug * step).exp();
        let phi = e.view((0, 0), (n, n)).into_owned();
        let f1 = e.view((0, n), (n, m)).into_owned();
        let f2 = e.view((0, n + m), (n, m)).into_owned() / step;
        Self {
            n,
            m,
            phi: row_major(&phi),
            gamma_cur: row_major(&(&f1 - &f2)),
            gamma_next: row_major(&f2),
            c: row_major(sys.c()),
            d: row_major(sys.d()),
        }
    }
}

fn matvec_acc(out: &mut [f64], mat: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &mat[r * cols..(r + 1) * cols];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// State and output trajectories of one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub state: Signal,
    pub output: Signal,
}

/// Simulator with step matrices precomputed once for a `(system, grid)` pair.
#[derive(Debug, Clone)]
pub struct Simulator {
    grid: TimeGrid,
    disc: Discretization,
}

impl Simulator {
    pub fn new(sys: &StateSpace, grid: TimeGrid) -> Self {
        Self { grid, disc: Discretization::new(sys, grid.step()) }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn check(&self, x0: &[f64], u: &Signal) -> Result<()> {
        if *u.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        if u.channels() != self.disc.m {
            return Err(Error::Dimension(format!(
                "input has {} channels, system has {}",
                u.channels(),
                self.disc.m
            )));
        }
        if x0.len() != self.disc.n {
            return Err(Error::Dimension(format!(
                "initial state has length {}, system has {} states",
                x0.len(),
                self.disc.n
            )));
        }
        if !u.is_finite() || x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("simulation input"));
        }
        Ok(())
    }

    fn propagate(&self, x0: &[f64], u: &Signal, mut visit: impl FnMut(usize, &[f64])) {
        let d = &self.disc;
        let mut x = x0.to_vec();
        let mut next = vec![0.0; d.n];
        let last = self.grid.intervals();
        for i in 0..=last {
            visit(i, &x);
            if i == last {
                break;
            }
            next.iter_mut().for_each(|v| *v = 0.0);
            matvec_acc(&mut next, &d.phi, &x);
            matvec_acc(&mut next, &d.gamma_cur, u.at(i));
            matvec_acc(&mut next, &d.gamma_next, u.at(i + 1));
            std::mem::swap(&mut x, &mut next);
        }
    }

    fn output_row(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        matvec_acc(out, &self.disc.c, x);
        matvec_acc(out, &self.disc.d, u);
    }

    /// Output `y = Cx + Du` only.
    pub fn output(&self, x0: &[f64], u: &Signal) -> Result<Signal> {
        self.check(x0, u)?;
        let m = self.disc.m;
        let mut y = vec![0.0; self.grid.len() * m];
        self.propagate(x0, u, |i, x| {
            self.output_row(x, u.at(i), &mut y[i * m..(i + 1) * m]);
        });
        Ok(Signal::from_raw(self.grid, m, y))
    }

    pub fn run(&self, x0: &[f64], u: &Signal) -> Result<Trajectory> {
        self.check(x0, u)?;
        let (n, m) = (self.disc.n, self.disc.m);
        let mut xs = vec![0.0; self.grid.len() * n];
        let mut y = vec![0.0; self.grid.len() * m];
        self.propagate(x0, u, |i, x| {
            xs[i * n..(i + 1) * n].copy_from_slice(x);
            self.output_row(x, u.at(i), &mut y[i * m..(i + 1) * m]);
        });
        Ok(Trajectory {
            state: Signal::from_raw(self.grid, n, xs),
            output: Signal::from_raw(self.grid, m, y),
        })
    }
}

/// Simulates `sys` from `x0` under the piecewise-linear input `u`.
pub fn simulate(sys: &StateSpace, x0: &[f64], u: &Signal) -> Result<Trajectory> {
    Simulator::new(sys, *u.grid()).run(x0, u)
}

/// `g(t) = C exp(At) B·1(t) + D δ(t)` with the Dirac part kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    /// `C exp(A t_i) B`, stored row-major as `m·m` channels.
    pub proper_part: Signal,
    pub delta_gain: DMatrix<f64>,
}

impl ImpulseResponse {
    pub fn at(&self, i: usize) -> DMatrix<f64> {
        let m = self.delta_gain.nrows();
        DMatrix::from_row_slice(m, m, self.proper_part.at(i))
    }
}

pub fn impulse_response(sys: &StateSpace, grid: TimeGrid) -> ImpulseResponse {
    let m = sys.channels();
    let phi = (sys.a() * grid.step()).exp();
    let mut eb = sys.b().clone();
    let mut values = Vec::with_capacity(grid.len() * m * m);
    for i in 0..grid.len() {
        if i > 0 {
            eb = &phi * &eb;
        }
        values.extend(row_major(&(sys.c() * &eb)));
    }
    ImpulseResponse {
        proper_part: Signal::from_raw(grid, m * m, values),
        delta_gain: sys.d().clone(),
    }
}

/// Horizon for the peak-to-peak gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Finite(f64),
    Infinite,
}

/// Composite Simpson integral of `|C exp(At) B|` over `[t0, t1]`.
fn integrate_abs_impulse(sys: &StateSpace, t0: f64, t1: f64, radius: f64) -> DMatrix<f64> {
    let m = sys.channels();
    let len = t1 - t0;
    if len <= 0.0 {
        return DMatrix::zeros(m, m);
    }
    let mut steps = 4096usize.max((len * radius * 40.0).ceil() as usize);
    steps += steps % 2;
    let h = len / steps as f64;
    let phi = (sys.a() * h).exp();
    let mut eb = (sys.a() * t0).exp() * sys.b();
    let mut acc = DMatrix::<f64>::zeros(m, m);
    for k in 0..=steps {
        if k > 0 {
            eb = &phi * &eb;
        }
        let w = if k == 0 || k == steps {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += (sys.c() * &eb).abs() * w;
    }
    acc * (h / 3.0)
}

/// Peak-to-peak (L∞-induced) gain `‖∫₀^{t_f} |g(t)| dt + |D|‖_∞`.
pub fn gain_pk(sys: &StateSpace, horizon: Horizon) -> Result<f64> {
    let radius = linalg::eigenvalues(sys.a()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let total = match horizon {
        Horizon::Finite(tf) => {
            if !(tf >= 0.0 && tf.is_finite()) {
                return Err(Error::InvalidArgument(format!("horizon must be finite and >= 0, got {tf}")));
            }
            integrate_abs_impulse(sys, 0.0, tf, radius)
        }
        Horizon::Infinite => {
            sys.require_hurwitz()?;
            let mut total = integrate_abs_impulse(sys, 0.0, 1.0, radius);
            let (mut start, mut width) = (1.0, 1.0);
            loop {
                let chunk = integrate_abs_impulse(sys, start, start + width, radius);
                total += &chunk;
                let tail = inf_norm(&chunk);
                if tail <= 1e-10 * inf_norm(&total) || tail == 0.0 || start > 1e7 {
                    break;
                }
                start += width;
                width *= 2.0;
            }
            total
        }
    };
    Ok(inf_norm(&(total + sys.d().abs())))
}

fn seeded_start(grid: TimeGrid, m: usize, seed: u64) -> Signal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.len() * m).map(|_| rng.random_range(0.5..1.5)).collect();
    Signal::from_raw(grid, m, values)
}

/// Finite-horizon L2-induced gain `‖G‖_{2,t_f}` by power iteration on `G*G`.
///
/// With a signature `Σe` under which the system is externally symmetric, the
/// adjoint is applied as `G* = Σe J G Σe J`; otherwise through the dual
/// realization as `G* = J Gᵀ J`.
pub fn gain_l2(sys: &StateSpace, grid: TimeGrid, sigma_e: Option<&SignatureMatrix>) -> Result<f64> {
    let m = sys.channels();
    let zero = vec![0.0; sys.states()];
    let forward = Simulator::new(sys, grid);
    let symmetric = match sigma_e {
        Some(s) if check_external_symmetry(sys, s)? < 1e-8 => Some(s.matrix()),
        _ => None,
    };
    let dual = Simulator::new(&sys.transposed(), grid);
    let adjoint = |w: &Signal| -> Result<Signal> {
        match &symmetric {
            Some(se) => Ok(forward
                .output(&zero, &w.time_reverse().map_channels(se)?)?
                .map_channels(se)?
                .time_reverse()),
            None => Ok(dual.output(&zero, &w.time_reverse())?.time_reverse()),
        }
    };

    let mut v = seeded_start(grid, m, 0x5eed);
    v = v.scale(1.0 / v.norm(crate::signals::Norm::L2));
    let mut previous = f64::NAN;
    for _ in 0..20_000 {
        let w = forward.output(&zero, &v)?;
        let z = adjoint(&w)?;
        let quotient = v.inner_product(&z)?;
        let z_norm = z.norm(crate::signals::Norm::L2);
        if z_norm == 0.0 || quotient <= 0.0 {
            return Ok(0.0);
        }
        if (quotient - previous).abs() < 1e-9 * quotient {
            return Ok(quotient.sqrt());
        }
        previous = quotient;
        v = z.scale(1.0 / z_norm);
    }
    Ok(previous.sqrt())
}

fn sigma_max(g: &DMatrix<Complex64>) -> f64 {
    g.clone().svd(false, false).singular_values.max()
}

/// H∞ norm by a log-spaced frequency sweep plus golden-section refinement.
pub fn hinf_norm(sys: &StateSpace) -> Result<f64> {
    sys.require_hurwitz()?;
    let gain_at = |w: f64| -> f64 {
        sys.transfer_at(Complex64::new(0.0, w)).map_or(f64::INFINITY, |g| sigma_max(&g))
    };
    let points = 400;
    let logs: Vec<f64> = (0..points)
        .map(|k| -4.0 + 8.0 * k as f64 / (points - 1) as f64)
        .collect();
    let values: Vec<f64> = logs.iter().map(|&l| gain_at(10f64.powf(l))).collect();
    let mut best = gain_at(0.0);
    let (k, &peak) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty sweep");
    if peak > best {
        best = peak;
        let f = |l: f64| gain_at(10f64.powf(l));
        let (mut lo, mut hi) = (logs[k.saturating_sub(1)], logs[(k + 1).min(points - 1)]);
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = hi - ratio * (hi - lo);
        let mut x2 = lo + ratio * (hi - lo);
        let (mut f1, mut f2) = (f(x1), f(x2));
        while hi - lo > 1e-10 {
            if f1 > f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - ratio * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + ratio * (hi - lo);
                f2 = f(x2);
            }
        }
        best = best.max(f1).max(f2);
    }
    Ok(best)
}

const SYMMETRY_PROBES: [(f64, f64); 12] = [
    (0.3, 0.0),
    (1.7, 0.0),
    (6.1, 0.0),
    (0.0, 0.9),
    (0.0, 2.3),
    (0.0, 11.0),
    (0.4, 0.8),
    (1.2, 3.1),
    (5.0, 0.5),
    (-0.2, 1.4),
    (0.05, 0.05),
    (2.9, 7.7),
];

/// `max_s ‖Σe G(s)' − G(s) Σe‖_∞` over a fixed set of probe frequencies.
pub fn check_external_symmetry(sys: &StateSpace, sigma_e: &SignatureMatrix) -> Result<f64> {
    let m = sys.channels();
    if sigma_e.len() != m {
        return Err(Error::Dimension(format!(
            "external signature has size {}, system has {m} channels",
            sigma_e.len()
        )));
    }
    let eigs = linalg::eigenvalues(sys.a());
    let se = to_complex(&sigma_e.matrix());
    let mut residual = 0.0_f64;
    for &(re, im) in &SYMMETRY_PROBES {
        let mut s = Complex64::new(re, im);
        let mut g = None;
        for _ in 0..100 {
            let near = eigs.iter().any(|l| (s - l).norm() < 1e-6 * (1.0 + l.norm()));
            if !near {
                g = sys.transfer_at(s);
                if g.is_some() {
                    break;
                }
            }
            s += Complex64::new(0.0137, 0.0071);
        }
        let g = g.ok_or_else(|| Error::InvalidArgument("could not place symmetry probe".into()))?;
        let defect = &se * g.transpose() - &g * &se;
        let norm = defect
            .row_iter()
            .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max);
        residual = residual.max(norm);
    }
    Ok(residual)
}

/// Symmetry defect of `[[−Σi A, −Σi B], [Σe C, Σe D]]`.
pub fn check_internal_symmetry(
    sys: &StateSpace,
    sigma_i: &SignatureMatrix,
    sigma_e: &SignatureMatrix,
) -> Result<f64> {
    let (n, m) = (sys.states(), sys.channels());
    if sigma_i.len() != n || sigma_e.len() != m {
        return Err(Error::Dimension(format!(
            "signatures must be {n}x{n} and {m}x{m}, got {} and {}",
            sigma_i.len(),
            sigma_e.len()
        )));
    }
    let si = sigma_i.matrix();
    let se = sigma_e.matrix();
    let mut block = DMatrix::<f64>::zeros(n + m, n + m);
    block.view_mut((0, 0), (n, n)).copy_from(&(-&si * sys.a()));
    block.view_mut((0, n), (n, m)).copy_from(&(-&si * sys.b()));
    block.view_mut((n, 0), (m, n)).copy_from(&(&se * sys.c()));
    block.view_mut((n, n), (m, m)).copy_from(&(&se * sys.d()));
    Ok(linalg::asymmetry(&block))
}

/// Families of symmetric test systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryKind {
    /// `A = A'`, `B = C'`, `D = D'` (`Σi = −I`, `Σe = I`).
    CompletelySymmetric,
    /// Internally symmetric with random signatures `Σi`, `Σe`.
    SignatureSymmetric,
}

/// A generated system together with the signatures it is symmetric under.
#[derive(Debug, Clone)]
pub struct SymmetricSystem {
    pub system: StateSpace,
    pub internal_signature: SignatureMatrix,
    pub external_signature: SignatureMatrix,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_signs(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect()
}

fn symmetric_hurwitz(rng: &mut ChaCha8Rng, n: usize, margin: f64) -> DMatrix<f64> {
    let q = gaussian(rng, n, n).qr().q();
    let spread: Vec<f64> = (0..n).map(|_| -(margin + rng.random_range(0.0..2.0))).collect();
    linalg::symmetrize(&(&q * DMatrix::from_diagonal(&DVector::from_vec(spread)) * q.transpose()))
}

fn check_margin(stability_margin: f64) -> Result<()> {
    if stability_margin > 0.0 && stability_margin.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("stability margin must be positive, got {stability_margin}")))
    }
}

/// Random state-measured system `A = A'`, `B = C = I`, `D = 0`, like a
/// linearized bank of interconnected tanks. Eigenvalues of `A` lie in
/// `[-(margin + 2), -margin]`, so `‖G‖_{H∞} ≤ 1/margin`.
pub fn random_state_feedback_system(n: usize, seed: u64, stability_margin: f64) -> Result<SymmetricSystem> {
    if n == 0 {
        return Err(Error::Dimension("need at least one state".into()));
    }
    check_margin(stability_margin)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = symmetric_hurwitz(&mut rng, n, stability_margin);
    Ok(SymmetricSystem {
        system: StateSpace::strictly_proper(a, DMatrix::identity(n, n), DMatrix::identity(n, n))?,
        internal_signature: SignatureMatrix::negative_identity(n),
        external_signature: SignatureMatrix::identity(n),
    })
}

/// Random stable symmetric system, deterministic in `seed`.
///
/// All eigenvalues of `A` have real part at most `-stability_margin`; `D = 0`.
pub fn random_symmetric_system(
    n: usize,
    m: usize,
    seed: u64,
    kind: SymmetryKind,
    stability_margin: f64,
) -> Result<SymmetricSystem> {
    if m == 0 || n < m {
        return Err(Error::Dimension(format!("need n >= m >= 1, got n = {n}, m = {m}")));
    }
    check_margin(stability_margin)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        SymmetryKind::CompletelySymmetric => {
            let a = symmetric_hurwitz(&mut rng, n, stability_margin);
            let b = gaussian(&mut rng, n, m);
            let c = b.transpose();
            Ok(SymmetricSystem {
                system: StateSpace::strictly_proper(a, b, c)?,
                internal_signature: SignatureMatrix::negative_identity(n),
                external_signature: SignatureMatrix::identity(m),
            })
        }
        SymmetryKind::SignatureSymmetric => {
            let si = random_signs(&mut rng, n);
            let se = random_signs(&mut rng, m);
            // Same-sign coupling is symmetric negative definite, cross-sign coupling
            // is skew, so Σi·A is symmetric and A + A' ⪯ −2·margin·I.
            let l = gaussian(&mut rng, n, n);
            let psd = &l * l.transpose() / n as f64;
            let skew = gaussian(&mut rng, n, n);
            let a = DMatrix::from_fn(n, n, |i, j| {
                if si[i] == si[j] {
                    -psd[(i, j)] - if i == j { stability_margin } else { 0.0 }
                } else if i < j {
                    skew[(i, j)]
                } else {
                    -skew[(j, i)]
                }
            });
            let b = gaussian(&mut rng, n, m);
            let sigma_i = SignatureMatrix::new(si)?;
            let sigma_e = SignatureMatrix::new(se)?;
            let c = -sigma_e.matrix() * b.transpose() * sigma_i.matrix();
            Ok(SymmetricSystem {
                system: StateSpace::strictly_proper(a, b, c)?,
                internal_signature: sigma_i,
                external_signature: sigma_e,
            })
        }
    }
}
