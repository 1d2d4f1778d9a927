#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symlqr::{Signal, StateSpace, TimeGrid};

pub fn motor() -> StateSpace {
    StateSpace::strictly_proper(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 2.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
    )
    .unwrap()
}

pub fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// `[p12, p22]` of the motor ARE with Q = 1, R = 2 and `K∞ = [p12, p22]`.
pub fn motor_k_inf() -> [f64; 2] {
    [(6f64.sqrt() - 2.0) / 2.0, (2f64.sqrt() + 3f64.sqrt() - 3.0) / 2.0]
}

/// Gauss–Legendre nodes and weights on [-1, 1] (Golub–Welsch).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            let k = i.max(j) as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// `∫_a^b f` with a fixed Gauss–Legendre rule.
pub fn integrate(a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>), mut f: impl FnMut(f64) -> DMatrix<f64>) -> DMatrix<f64> {
    let half = (b - a) / 2.0;
    let mid = (a + b) / 2.0;
    let mut acc: Option<DMatrix<f64>> = None;
    for (x, w) in rule.0.iter().zip(&rule.1) {
        let v = f(mid + half * x) * (w * half);
        acc = Some(match acc {
            None => v,
            Some(s) => s + v,
        });
    }
    acc.unwrap()
}

/// Convolution matrix of the system on the grid for piecewise-linear inputs,
/// assembled by quadrature of `C exp(At) B` against hat functions.
/// Node-major layout: entry block `(i, j)` maps `u_j` to `y_i`.
pub fn dense_convolution(sys: &StateSpace, grid: TimeGrid) -> DMatrix<f64> {
    let (m, n_int) = (sys.channels(), grid.intervals());
    let h = grid.step();
    let rule = gauss_legendre(16);
    let g = |t: f64| sys.c() * (sys.a() * t).exp() * sys.b();
    // rising half of a hat ending at lag L and falling half starting at lag L
    let rising: Vec<DMatrix<f64>> = (0..=n_int)
        .map(|lag| integrate(0.0, h, &rule, |s| g(lag as f64 * h + h - s) * (s / h)))
        .collect();
    let falling: Vec<DMatrix<f64>> = (0..=n_int)
        .map(|lag| {
            if lag == 0 {
                DMatrix::zeros(m, m)
            } else {
                integrate(0.0, h, &rule, |s| g(lag as f64 * h - s) * ((h - s) / h))
            }
        })
        .collect();
    let size = m * (n_int + 1);
    let mut big = DMatrix::zeros(size, size);
    for i in 0..=n_int {
        for j in 0..=i {
            let lag = i - j;
            let mut block = sys.d() * if i == j { 1.0 } else { 0.0 };
            if j > 0 {
                block += &rising[lag];
            }
            if j < n_int {
                block += &falling[lag];
            }
            big.view_mut((i * m, j * m), (m, m)).copy_from(&block);
        }
    }
    big
}

/// Node-major time reversal matrix.
pub fn reversal(grid: TimeGrid, m: usize) -> DMatrix<f64> {
    let n = grid.intervals();
    let mut j = DMatrix::zeros(m * (n + 1), m * (n + 1));
    for i in 0..=n {
        for c in 0..m {
            j[(i * m + c, (n - i) * m + c)] = 1.0;
        }
    }
    j
}

/// Block-diagonal repetition of a channel matrix.
pub fn per_node(grid: TimeGrid, mat: &DMatrix<f64>) -> DMatrix<f64> {
    let m = mat.nrows();
    let len = grid.len();
    let mut big = DMatrix::zeros(m * len, m * len);
    for i in 0..len {
        big.view_mut((i * m, i * m), (m, m)).copy_from(mat);
    }
    big
}

/// Diagonal trapezoid weights, node-major.
pub fn trapezoid(grid: TimeGrid, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m * grid.len(), m * grid.len(), |r, c| if r == c { grid.weight(r / m) } else { 0.0 })
}

pub fn as_vector(u: &Signal) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_column_slice(u.values())
}

/// Random smooth signal: a few random harmonics plus a random affine trend.
pub fn smooth_signal(grid: TimeGrid, m: usize, rng: &mut ChaCha8Rng) -> Signal {
    let tf = grid.horizon();
    let coeffs: Vec<[f64; 6]> = (0..m)
        .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
        .collect();
    Signal::from_fn(grid, m, |t, out| {
        let s = t / tf;
        for (o, c) in out.iter_mut().zip(&coeffs) {
            *o = c[0] + c[1] * s
                + c[2] * (std::f64::consts::PI * s).sin()
                + c[3] * (2.0 * std::f64::consts::PI * s).cos()
                + c[4] * (3.0 * std::f64::consts::PI * s).sin()
                + c[5] * (5.0 * s).cos();
        }
    })
    .unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
