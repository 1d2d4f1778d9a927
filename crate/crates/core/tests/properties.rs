mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use symlqr::feedback::{learn_and_collect, recover_gain, GainRecoveryConfig};
use symlqr::linalg::{asymmetry, inf_norm};
use symlqr::lti::{gain_l2, gain_pk, random_symmetric_system, simulate, Horizon, SymmetryKind};
use symlqr::noise_study::{run_unbiasedness_study, NoiseStudyConfig};
use symlqr::plant::{NoiseModel, SimulatedPlant};
use symlqr::pontryagin::{apply_s, apply_s_adjoint, apply_t, estimate_alpha_bar, OperatorConfig};
use symlqr::riccati::{solve_riccati_fh, LqrProblem};
use symlqr::solver::{run_iterations, solve, SolverConfig, Termination};
use symlqr::{Norm, Plant, Signal, TimeGrid};

fn kind(signature: bool) -> SymmetryKind {
    if signature {
        SymmetryKind::SignatureSymmetric
    } else {
        SymmetryKind::CompletelySymmetric
    }
}

fn weights() -> (DMatrix<f64>, DMatrix<f64>) {
    (
        DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.6]),
        DMatrix::from_row_slice(2, 2, &[1.5, -0.3, -0.3, 0.8]),
    )
}

fn setup(seed: u64, signature: bool, grid: TimeGrid) -> (symlqr::StateSpace, SimulatedPlant, OperatorConfig) {
    let gen = random_symmetric_system(3, 2, seed, kind(signature), 0.4).unwrap();
    let x0 = [1.0, -0.5, 0.25];
    let plant = SimulatedPlant::new(&gen.system, &x0, gen.external_signature.clone(), grid, NoiseModel::none()).unwrap();
    let (q, r) = weights();
    let op = OperatorConfig::new(q, r, gen.external_signature, grid).unwrap();
    (gen.system, plant, op)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulation_is_linear(seed in 0u64..1000, signature: bool, a in -3.0..3.0f64, b in -3.0..3.0f64, draw in 0u64..1000) {
        let grid = TimeGrid::new(2.0, 200).unwrap();
        let sys = random_symmetric_system(3, 2, seed, kind(signature), 0.3).unwrap().system;
        let mut r = rng(draw);
        let u = smooth_signal(grid, 2, &mut r);
        let v = smooth_signal(grid, 2, &mut r);
        let zero = [0.0; 3];
        let y = |x0: &[f64], s: &Signal| simulate(&sys, x0, s).unwrap().output;
        let lhs = y(&zero, &u.lincomb(a, &v, b).unwrap());
        let rhs = y(&zero, &u).lincomb(a, &y(&zero, &v), b).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().norm(Norm::Linf) <= 1e-10 * (1.0 + rhs.norm(Norm::Linf)));

        let x0 = [0.3, -1.0, 0.7];
        let full = y(&x0, &u);
        let parts = y(&x0, &Signal::zeros(grid, 2)).add(&y(&zero, &u)).unwrap();
        prop_assert!(full.sub(&parts).unwrap().norm(Norm::Linf) <= 1e-10 * full.norm(Norm::Linf));
    }

    #[test]
    fn gains_grow_with_horizon(seed in 0u64..1000, signature: bool, t1 in 0.2..2.0f64, extra in 0.1..2.0f64) {
        let sys = random_symmetric_system(3, 2, seed, kind(signature), 0.3).unwrap();
        let t2 = t1 + extra;
        let pk = |t| gain_pk(&sys.system, Horizon::Finite(t)).unwrap();
        prop_assert!(pk(t2) >= pk(t1));
        // same step on both grids so the discretizations are nested
        let h = 0.01;
        let l2 = |t: f64| {
            let n = (t / h).round() as usize;
            gain_l2(&sys.system, TimeGrid::new(n as f64 * h, n).unwrap(), Some(&sys.external_signature)).unwrap()
        };
        prop_assert!(l2(t2) >= l2(t1) * (1.0 - 1e-9));
    }

    #[test]
    fn reversed_system_is_self_adjoint_up_to_signature(seed in 0u64..1000, signature: bool, draw in 0u64..1000) {
        let sys = random_symmetric_system(3, 2, seed, kind(signature), 0.3).unwrap();
        let n = 800;
        let grid = TimeGrid::new(1.5, n).unwrap();
        let se = sys.external_signature.matrix();
        let mut r = rng(draw);
        let u = smooth_signal(grid, 2, &mut r);
        let v = smooth_signal(grid, 2, &mut r);
        let g = |s: &Signal| simulate(&sys.system, &[0.0; 3], s).unwrap().output;
        let lhs = g(&u).time_reverse().inner_product(&v).unwrap();
        let rhs = u.inner_product(&g(&v.map_channels(&se).unwrap()).time_reverse().map_channels(&se).unwrap()).unwrap();
        let tol = 10.0 / (n * n) as f64;
        prop_assert!((lhs - rhs).abs() <= tol * u.norm(Norm::L2) * v.norm(Norm::L2));
    }

    #[test]
    fn weighted_operator_sign_and_run_accounting(seed in 0u64..1000, signature: bool, draw in 0u64..1000) {
        let grid = TimeGrid::new(1.0, 300).unwrap();
        let (_, mut plant, op) = setup(seed, signature, grid);
        let u = smooth_signal(grid, 2, &mut rng(draw));
        let before = plant.runs();
        let w = apply_s(&mut plant, &op, &u.map_channels(op.r_inv_sqrt()).unwrap())
            .unwrap()
            .map_channels(op.r_sqrt())
            .unwrap();
        prop_assert_eq!(plant.runs() - before, 2);
        prop_assert!(-u.inner_product(&w).unwrap() >= -1e-8 * u.norm(Norm::L2).powi(2));

        apply_t(&mut plant, &op, &u).unwrap();
        prop_assert_eq!(plant.runs() - before, 4);
        apply_s_adjoint(&mut plant, &op, &u).unwrap();
        prop_assert_eq!(plant.runs() - before, 6);
        let est = estimate_alpha_bar(&mut plant, &op, 5).unwrap();
        prop_assert_eq!(est.plant_runs, 2 * est.iterations);
        prop_assert_eq!(plant.runs() - before, 6 + est.plant_runs as u64);
    }

    #[test]
    fn riccati_solutions_stay_symmetric(seed in 0u64..1000, signature: bool, tf in 0.5..4.0f64) {
        let sys = random_symmetric_system(3, 2, seed, kind(signature), 0.2).unwrap().system;
        let (q, r) = weights();
        let prob = LqrProblem::new(sys, q, r, vec![1.0; 3]).unwrap();
        let traj = solve_riccati_fh(&prob, TimeGrid::new(tf, 200).unwrap()).unwrap();
        for p in traj.values() {
            prop_assert!(asymmetry(p) <= 1e-10);
        }
    }

    #[test]
    fn solver_bookkeeping(seed in 0u64..1000, signature: bool, fraction in 0.5..1.0f64) {
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let (_, mut plant, op) = setup(seed, signature, grid);
        let est = estimate_alpha_bar(&mut plant.clone(), &op, 200).unwrap();
        let alpha = fraction * (est.alpha_bar / 2.0).min(1.0);
        let cfg = SolverConfig::new(alpha, 1e-6, 400, Norm::L2);
        let result = solve(&mut plant, &op, &cfg, None).unwrap();
        prop_assert_eq!(result.plant_runs, 2 * result.iterations);
        prop_assert_eq!(plant.runs(), result.plant_runs as u64);
        prop_assert_eq!(result.residuals.len(), result.iterations);
        if result.termination == Termination::Tolerance {
            prop_assert!(*result.residuals.last().unwrap() < cfg.tolerance);
        }
    }
}

#[test]
fn gain_error_decreases_with_iterations() {
    let grid = TimeGrid::new(4.0, 2000).unwrap();
    let se = symlqr::SignatureMatrix::identity(1);
    let exact = DMatrix::from_row_slice(1, 2, &motor_k_inf());
    let errors: Vec<f64> = [1, 3, 6, 11]
        .iter()
        .map(|&iterations| {
            let mut plant = SimulatedPlant::new(&motor(), &[1.0, 1.0], se.clone(), grid, NoiseModel::none()).unwrap();
            let op = OperatorConfig::new(scalar(1.0), scalar(2.0), se.clone(), grid).unwrap();
            let cfg = GainRecoveryConfig { iterations, alpha: 1.0, samples: 2, t_bar: 1.0, state_noise: NoiseModel::none() };
            let data = learn_and_collect(&mut plant, &op, &cfg).unwrap().0;
            inf_norm(&(recover_gain(&data).unwrap().k - &exact))
        })
        .collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
}

#[test]
fn noise_free_replicate_matches_the_solver_bitwise() {
    let grid = TimeGrid::new(2.0, 200).unwrap();
    let se = symlqr::SignatureMatrix::identity(1);
    let op = OperatorConfig::new(scalar(1.0), scalar(2.0), se.clone(), grid).unwrap();
    let cfg = NoiseStudyConfig { noise: NoiseModel::gaussian(0.05, 3), iterations: 4, trials: 10, alpha: 1.0, seed: 9 };
    let report = run_unbiasedness_study(&motor(), &[1.0, 1.0], &op, &cfg).unwrap();
    let mut plant = SimulatedPlant::new(&motor(), &[1.0, 1.0], se, grid, NoiseModel::none()).unwrap();
    let standalone = run_iterations(&mut plant, &op, 1.0, 4, Norm::L2, None, None).unwrap().control;
    assert_eq!(report.noise_free_control, standalone);
}
