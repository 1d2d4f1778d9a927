//! Model-based LQR oracles: the finite-horizon Riccati ODE, the algebraic
//! Riccati equation through the Hamiltonian eigenvectors, optimal trajectories
//! and costs.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, complex_null_space, inf_norm, inverse, symmetrize, to_complex};
use crate::lti::StateSpace;
use crate::pontryagin::check_weight;
use crate::signals::{Signal, TimeGrid};

/// Output-regulation LQR problem with its state-space expansion.
#[derive(Debug, Clone)]
pub struct LqrProblem {
    sys: StateSpace,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    x0: Vec<f64>,
    qx: DMatrix<f64>,
    sc: DMatrix<f64>,
    r_eff: DMatrix<f64>,
    r_eff_inv: DMatrix<f64>,
}

impl LqrProblem {
    pub fn new(sys: StateSpace, q: DMatrix<f64>, r: DMatrix<f64>, x0: Vec<f64>) -> Result<Self> {
        let (n, m) = (sys.states(), sys.channels());
        if q.shape() != (m, m) || r.shape() != (m, m) {
            return Err(Error::Dimension(format!("Q and R must be {m}x{m}")));
        }
        if x0.len() != n {
            return Err(Error::Dimension(format!("x0 has length {}, expected {n}", x0.len())));
        }
        check_weight(&q, "Q", -1e-12)?;
        check_weight(&r, "R", 1e-12)?;
        let qx = symmetrize(&(sys.c().transpose() * &q * sys.c()));
        let sc = sys.c().transpose() * &q * sys.d();
        let r_eff = symmetrize(&(&r + sys.d().transpose() * &q * sys.d()));
        let r_eff_inv = symmetrize(&inverse(&r_eff, "R + D'QD")?);
        Ok(Self { sys, q, r, x0, qx, sc, r_eff, r_eff_inv })
    }

    pub fn system(&self) -> &StateSpace {
        &self.sys
    }
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }
    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }
    pub fn x0(&self) -> &[f64] {
        &self.x0
    }
    /// `C'QC`
    pub fn qx(&self) -> &DMatrix<f64> {
        &self.qx
    }
    /// `C'QD`
    pub fn cross(&self) -> &DMatrix<f64> {
        &self.sc
    }
    /// `R + D'QD`
    pub fn r_eff(&self) -> &DMatrix<f64> {
        &self.r_eff
    }

    /// Feedback gain `R̃⁻¹(B'P + S_c')` for a Riccati value `P`.
    pub fn gain(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        &self.r_eff_inv * (self.sys.b().transpose() * p + self.sc.transpose())
    }

    /// `Ṗ` of the generalized Riccati differential equation.
    fn riccati_rate(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let a = self.sys.a();
        let pb = p * self.sys.b() + &self.sc;
        -(a.transpose() * p + p * a + &self.qx - &pb * &self.r_eff_inv * pb.transpose())
    }

    fn with_horizon_check(&self) -> Result<()> {
        if !self.sys.d().iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidArgument(
                "the algebraic Riccati path requires D = 0".into(),
            ));
        }
        Ok(())
    }
}

/// Riccati solution on every node of a grid.
#[derive(Debug, Clone)]
pub struct RiccatiTrajectory {
    grid: TimeGrid,
    values: Vec<DMatrix<f64>>,
    midpoints: Vec<DMatrix<f64>>,
}

impl RiccatiTrajectory {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn at(&self, i: usize) -> &DMatrix<f64> {
        &self.values[i]
    }

    pub fn values(&self) -> &[DMatrix<f64>] {
        &self.values
    }
}

fn rk4_backward(prob: &LqrProblem, start: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    // integrates dP/dt backward by a step of length h
    let f = |p: &DMatrix<f64>| -prob.riccati_rate(p);
    let k1 = f(start);
    let k2 = f(&(start + &k1 * (h / 2.0)));
    let k3 = f(&(start + &k2 * (h / 2.0)));
    let k4 = f(&(start + &k3 * h));
    symmetrize(&(start + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)))
}

/// Integrates the Riccati ODE backward from `P(t_f) = 0` with classical RK4.
///
/// Half-step values are kept as well so that the closed loop can be driven by
/// an RK4 scheme of matching order.
pub fn solve_riccati_fh(prob: &LqrProblem, grid: TimeGrid) -> Result<RiccatiTrajectory> {
    let n = prob.sys.states();
    let steps = grid.intervals();
    let h = grid.step() / 2.0;
    let mut values = vec![DMatrix::zeros(n, n); steps + 1];
    let mut midpoints = vec![DMatrix::zeros(n, n); steps];
    let mut p = DMatrix::zeros(n, n);
    for i in (0..steps).rev() {
        let mid = rk4_backward(prob, &p, h);
        p = rk4_backward(prob, &mid, h);
        let scale = inf_norm(&p);
        if !linalg::is_finite(&p) || scale > 1e12 {
            return Err(Error::RiccatiBlowUp { time: grid.time(i) });
        }
        midpoints[i] = mid;
        values[i] = p.clone();
    }
    Ok(RiccatiTrajectory { grid, values, midpoints })
}

/// Stabilizing ARE solution and its Hamiltonian data.
#[derive(Debug, Clone, Serialize)]
pub struct RiccatiSolution {
    #[serde(serialize_with = "ser_matrix")]
    pub p_inf: DMatrix<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub k_inf: DMatrix<f64>,
    /// Hamiltonian eigenvalues in the right half plane, sorted by real part.
    #[serde(serialize_with = "ser_complex")]
    pub lambda: Vec<Complex64>,
    #[serde(skip)]
    pub w11: DMatrix<f64>,
    #[serde(skip)]
    pub w12: DMatrix<f64>,
    #[serde(skip)]
    pub w21: DMatrix<f64>,
    #[serde(skip)]
    pub w22: DMatrix<f64>,
    /// Hamiltonian restricted to the stable subspace, in the `W` basis.
    #[serde(skip)]
    pub stable_block: DMatrix<f64>,
    #[serde(skip)]
    pub antistable_block: DMatrix<f64>,
    pub l2_rate: f64,
    pub are_residual: f64,
    pub w11_condition: f64,
}

fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&linalg::to_rows(m), s)
}

fn ser_complex<S: serde::Serializer>(v: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let pairs: Vec<[f64; 2]> = v.iter().map(|z| [z.re, z.im]).collect();
    serde::Serialize::serialize(&pairs, s)
}

impl RiccatiSolution {
    /// `P(t)` from the eigenvector form with `τ = t_f − t`.
    pub fn p_analytic(&self, tau: f64) -> Result<DMatrix<f64>> {
        let decay_a = (&self.antistable_block * -tau).exp();
        let decay_s = (&self.stable_block * tau).exp();
        let v = -(decay_a * inverse(&self.w22, "W22")? * &self.w21 * decay_s);
        let num = &self.w21 + &self.w22 * &v;
        let den = &self.w11 + &self.w12 * &v;
        Ok(symmetrize(&(num * inverse(&den, "W11 + W12 V")?)))
    }
}

const AXIS_TOL: f64 = 1e-9;

/// Real basis of the invariant subspace for a set of eigenvalues of `h`.
fn real_invariant_basis(h: &DMatrix<f64>, eigs: &[Complex64]) -> DMatrix<f64> {
    let n2 = h.nrows();
    let hc = to_complex(h);
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut used = vec![false; eigs.len()];
    for i in 0..eigs.len() {
        if used[i] || eigs[i].im < -AXIS_TOL * (1.0 + eigs[i].norm()) {
            continue;
        }
        let close = |z: &Complex64| (z - eigs[i]).norm() <= 1e-6 * (1.0 + eigs[i].norm());
        let group: Vec<usize> = (0..eigs.len()).filter(|&j| !used[j] && close(&eigs[j])).collect();
        group.iter().for_each(|&j| used[j] = true);
        let lambda = group.iter().map(|&j| eigs[j]).sum::<Complex64>() / group.len() as f64;
        let shifted = &hc - DMatrix::<Complex64>::identity(n2, n2) * lambda;
        let basis = complex_null_space(&shifted, group.len());
        let real = lambda.im.abs() <= AXIS_TOL * (1.0 + lambda.norm());
        for v in basis.column_iter() {
            if real {
                // rotate so the largest entry is real, then take the real part
                let pivot = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
                let phase = pivot.conj() / pivot.norm();
                cols.push(v.iter().map(|z| (z * phase).re).collect());
            } else {
                cols.push(v.iter().map(|z| z.re).collect());
                cols.push(v.iter().map(|z| z.im).collect());
            }
        }
        if !real {
            // mark the conjugates as handled
            for j in 0..eigs.len() {
                if !used[j] && (eigs[j] - lambda.conj()).norm() <= 1e-6 * (1.0 + lambda.norm()) {
                    used[j] = true;
                }
            }
        }
    }
    DMatrix::from_fn(n2, cols.len(), |r, c| cols[c][r])
}

fn restricted_block(h: &DMatrix<f64>, basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let hb = h * basis;
    basis
        .clone()
        .svd(true, true)
        .solve(&hb, 1e-14)
        .map_err(|_| Error::Singular("invariant subspace basis"))
}

/// Stabilizing ARE solution from the Hamiltonian eigenvectors (`D = 0`).
pub fn solve_are_hamiltonian(prob: &LqrProblem) -> Result<RiccatiSolution> {
    prob.with_horizon_check()?;
    let sys = &prob.sys;
    let n = sys.states();
    let a = sys.a();
    let brb = sys.b() * &prob.r_eff_inv * sys.b().transpose();
    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&brb));
    h.view_mut((n, 0), (n, n)).copy_from(&(-&prob.qx));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let eigs = linalg::eigenvalues(&h);
    let on_axis = eigs.iter().filter(|z| z.re.abs() <= AXIS_TOL).count();
    if on_axis > 0 {
        return Err(Error::ImaginaryAxisEigenvalue { count: on_axis, tol: AXIS_TOL });
    }
    let stable: Vec<Complex64> = eigs.iter().copied().filter(|z| z.re < 0.0).collect();
    let mut lambda: Vec<Complex64> = eigs.iter().copied().filter(|z| z.re > 0.0).collect();
    lambda.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    if stable.len() != n {
        return Err(Error::ImaginaryAxisEigenvalue { count: 2 * n - stable.len(), tol: AXIS_TOL });
    }

    let ws = real_invariant_basis(&h, &stable);
    let wa = real_invariant_basis(&h, &lambda);
    if ws.ncols() != n || wa.ncols() != n {
        return Err(Error::Singular("Hamiltonian eigenvector basis"));
    }
    let w11 = ws.rows(0, n).into_owned();
    let w21 = ws.rows(n, n).into_owned();
    let w12 = wa.rows(0, n).into_owned();
    let w22 = wa.rows(n, n).into_owned();
    let w11_inv = inverse(&w11, "W11")?;
    let p_inf = symmetrize(&(&w21 * &w11_inv));
    let k_inf = prob.gain(&p_inf);
    let are_residual = inf_norm(&(a.transpose() * &p_inf + &p_inf * a - &p_inf * &brb * &p_inf + &prob.qx));
    let l2_rate = 2.0 * lambda.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    let w11_condition = {
        let sv = w11.clone().svd(false, false).singular_values;
        sv.max() / sv.min()
    };
    Ok(RiccatiSolution {
        p_inf,
        k_inf,
        lambda,
        stable_block: restricted_block(&h, &ws)?,
        antistable_block: restricted_block(&h, &wa)?,
        w11,
        w12,
        w21,
        w22,
        l2_rate,
        are_residual,
        w11_condition,
    })
}

/// Optimal finite-horizon trajectories.
#[derive(Debug, Clone)]
pub struct OptimalControl {
    pub control: Signal,
    pub state: Signal,
    pub output: Signal,
    pub cost: f64,
    pub riccati: RiccatiTrajectory,
}

/// Closed-loop optimal control from the Riccati solution, integrated with RK4.
pub fn optimal_control_fh(prob: &LqrProblem, grid: TimeGrid) -> Result<OptimalControl> {
    let riccati = solve_riccati_fh(prob, grid)?;
    let sys = &prob.sys;
    let (n, m) = (sys.states(), sys.channels());
    let closed = |p: &DMatrix<f64>| {
        let k = prob.gain(p);
        (sys.a() - sys.b() * &k, k)
    };
    let h = grid.step();
    let mut x = linalg::vector(&prob.x0);
    let mut xs = Vec::with_capacity(grid.len() * n);
    let mut us = Vec::with_capacity(grid.len() * m);
    for i in 0..grid.len() {
        let (a_i, k_i) = closed(riccati.at(i));
        xs.extend(x.iter());
        us.extend((-(&k_i * &x)).iter());
        if i == grid.intervals() {
            break;
        }
        let (a_mid, _) = closed(&riccati.midpoints[i]);
        let (a_next, _) = closed(riccati.at(i + 1));
        let k1 = &a_i * &x;
        let k2 = &a_mid * (&x + &k1 * (h / 2.0));
        let k3 = &a_mid * (&x + &k2 * (h / 2.0));
        let k4 = &a_next * (&x + &k3 * h);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    let state = Signal::new(grid, n, xs)?;
    let control = Signal::new(grid, m, us)?;
    let output = state.map_channels(sys.c())?.add(&control.map_channels(sys.d())?)?;
    let cost = cost_j(&output, &control, &prob.q, &prob.r)?;
    Ok(OptimalControl { control, state, output, cost, riccati })
}

/// `½ ∫ (y'Qy + u'Ru) dt` by the trapezoidal rule.
pub fn cost_j(y: &Signal, u: &Signal, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<f64> {
    if y.grid() != u.grid() {
        return Err(Error::GridMismatch);
    }
    if q.shape() != (y.channels(), y.channels()) || r.shape() != (u.channels(), u.channels()) {
        return Err(Error::Dimension("weights do not match signal channels".into()));
    }
    let quad = |m: &DMatrix<f64>, v: &[f64]| -> f64 {
        let k = v.len();
        (0..k).map(|i| (0..k).map(|j| v[i] * m[(i, j)] * v[j]).sum::<f64>()).sum()
    };
    let grid = y.grid();
    let total: f64 = (0..grid.len())
        .map(|i| grid.weight(i) * (quad(q, y.at(i)) + quad(r, u.at(i))))
        .sum();
    Ok(0.5 * total)
}

/// Decay of `max_{t ≤ t̄} ‖P(t) − P∞‖_∞` with the horizon.
#[derive(Debug, Clone, Serialize)]
pub struct TailDecay {
    pub horizons: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub predicted_slope: f64,
}

/// Least-squares slope of `ln y` against `x`.
pub fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Sweeps horizons with the ODE solution on grids of spacing near `step`.
pub fn riccati_tail_error(prob: &LqrProblem, horizons: &[f64], t_bar: f64, step: f64) -> Result<TailDecay> {
    if horizons.len() < 2 {
        return Err(Error::InvalidArgument("need at least two horizons".into()));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let are = solve_are_hamiltonian(prob)?;
    let mut errors = Vec::with_capacity(horizons.len());
    for &tf in horizons {
        if !(t_bar >= 0.0 && t_bar <= tf) {
            return Err(Error::InvalidArgument(format!("t_bar = {t_bar} outside [0, {tf}]")));
        }
        let grid = TimeGrid::new(tf, ((tf / step).ceil() as usize).max(1))?;
        let traj = solve_riccati_fh(prob, grid)?;
        let err = (0..grid.len())
            .take_while(|&i| grid.time(i) <= t_bar + 1e-12)
            .map(|i| inf_norm(&(traj.at(i) - &are.p_inf)))
            .fold(0.0, f64::max);
        errors.push(err);
    }
    Ok(TailDecay {
        slope: log_slope(horizons, &errors),
        predicted_slope: -are.l2_rate,
        horizons: horizons.to_vec(),
        errors,
    })
}
