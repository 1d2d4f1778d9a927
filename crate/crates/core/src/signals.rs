//! Vector-valued signals sampled on a uniform time grid.
//!
//! A [`Signal`] stores `N + 1` samples of an `m`-channel function on
//! `[0, t_f]`. Integrals use the trapezoidal rule, so time reversal is an
//! exact node reflection and the quadrature error is `O(Δ²)`.

use std::io::{self, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `t_i = i·Δ`, `Δ = t_f / N`, `i = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    intervals: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, intervals: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if intervals < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2 intervals, got {intervals}"
            )));
        }
        Ok(Self { horizon, intervals })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of intervals `N`.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Number of nodes `N + 1`.
    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.intervals as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.intervals {
            self.horizon
        } else {
            i as f64 * self.step()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.time(i))
    }

    /// Trapezoidal quadrature weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.intervals {
            0.5 * self.step()
        } else {
            self.step()
        }
    }

    /// Index of the node closest to `t`, clamped to the grid.
    pub fn nearest_node(&self, t: f64) -> usize {
        let i = (t / self.step()).round();
        if i <= 0.0 {
            0
        } else {
            (i as usize).min(self.intervals)
        }
    }
}

/// Norms used on signal spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L2,
    Linf,
}

/// An `m`-channel signal on a [`TimeGrid`]. Values are stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    grid: TimeGrid,
    channels: usize,
    values: Vec<f64>,
}

impl Signal {
    pub fn new(grid: TimeGrid, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Dimension("signal needs at least one channel".into()));
        }
        if values.len() != grid.len() * channels {
            return Err(Error::Dimension(format!(
                "expected {} values ({} nodes x {} channels), got {}",
                grid.len() * channels,
                grid.len(),
                channels,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("signal values"));
        }
        Ok(Self { grid, channels, values })
    }

    pub(crate) fn from_raw(grid: TimeGrid, channels: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len() * channels);
        Self { grid, channels, values }
    }

    pub fn zeros(grid: TimeGrid, channels: usize) -> Self {
        Self::from_raw(grid, channels, vec![0.0; grid.len() * channels])
    }

    pub fn constant(grid: TimeGrid, value: &[f64]) -> Self {
        let values = (0..grid.len()).flat_map(|_| value.iter().copied()).collect();
        Self::from_raw(grid, value.len(), values)
    }

    /// Samples `f(t, out)` at every node.
    pub fn from_fn(
        grid: TimeGrid,
        channels: usize,
        mut f: impl FnMut(f64, &mut [f64]),
    ) -> Result<Self> {
        let mut values = vec![0.0; grid.len() * channels];
        for (i, chunk) in values.chunks_mut(channels).enumerate() {
            f(grid.time(i), chunk);
        }
        Self::new(grid, channels, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Sample vector at node `i`.
    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i * self.channels..(i + 1) * self.channels]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.channels)
    }

    /// Single channel as a vector over nodes.
    pub fn channel(&self, j: usize) -> Vec<f64> {
        self.nodes().map(|x| x[j]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check_compatible(&self, other: &Signal) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.channels != other.channels {
            return Err(Error::Dimension(format!(
                "channel counts differ ({} vs {})",
                self.channels, other.channels
            )));
        }
        Ok(())
    }

    /// `(Ju)(t) = u(t_f − t)`, exact on the grid.
    pub fn time_reverse(&self) -> Signal {
        let values = self.values.chunks(self.channels).rev().flatten().copied().collect();
        Self::from_raw(self.grid, self.channels, values)
    }

    /// Trapezoidal approximation of `∫ u'(t) v(t) dt`.
    pub fn inner_product(&self, other: &Signal) -> Result<f64> {
        self.check_compatible(other)?;
        let m = self.channels;
        let sum = self
            .values
            .chunks(m)
            .zip(other.values.chunks(m))
            .enumerate()
            .map(|(i, (a, b))| {
                self.grid.weight(i) * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
            })
            .sum();
        Ok(sum)
    }

    pub fn norm(&self, p: Norm) -> f64 {
        match p {
            Norm::L2 => {
                let m = self.channels;
                self.values
                    .chunks(m)
                    .enumerate()
                    .map(|(i, a)| self.grid.weight(i) * a.iter().map(|x| x * x).sum::<f64>())
                    .sum::<f64>()
                    .sqrt()
            }
            Norm::Linf => self.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())),
        }
    }

    /// `a·self + b·other`.
    pub fn lincomb(&self, a: f64, other: &Signal, b: f64) -> Result<Signal> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Ok(Self::from_raw(self.grid, self.channels, values))
    }

    pub fn add(&self, other: &Signal) -> Result<Signal> {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Signal) -> Result<Signal> {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn scale(&self, a: f64) -> Signal {
        Self::from_raw(self.grid, self.channels, self.values.iter().map(|x| a * x).collect())
    }

    /// Applies a constant matrix to every sample: `(Mu)(t) = M·u(t)`.
    pub fn map_channels(&self, matrix: &DMatrix<f64>) -> Result<Signal> {
        if matrix.ncols() != self.channels {
            return Err(Error::Dimension(format!(
                "matrix has {} columns, signal has {} channels",
                matrix.ncols(),
                self.channels
            )));
        }
        let out = matrix.nrows();
        let mut values = vec![0.0; self.grid.len() * out];
        for (dst, src) in values.chunks_mut(out).zip(self.values.chunks(self.channels)) {
            for (r, d) in dst.iter_mut().enumerate() {
                *d = src.iter().enumerate().map(|(c, x)| matrix[(r, c)] * x).sum();
            }
        }
        Ok(Self::from_raw(self.grid, out, values))
    }

    /// Writes `t,u_1,...,u_m` rows with round-trip precision.
    pub fn write_csv<W: Write>(&self, mut w: W, prefix: &str) -> io::Result<()> {
        write!(w, "t")?;
        for j in 1..=self.channels {
            write!(w, ",{prefix}_{j}")?;
        }
        writeln!(w)?;
        for (i, row) in self.nodes().enumerate() {
            write!(w, "{:?}", self.grid.time(i))?;
            for v in row {
                write!(w, ",{v:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn time_reverse(u: &Signal) -> Signal {
    u.time_reverse()
}

pub fn inner_product(u: &Signal, v: &Signal) -> Result<f64> {
    u.inner_product(v)
}

pub fn norm(u: &Signal, p: Norm) -> f64 {
    u.norm(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(grid: TimeGrid) -> Signal {
        Signal::from_fn(grid, 1, |t, out| out[0] = t).unwrap()
    }

    #[test]
    fn grid_endpoints_and_spacing() {
        let g = TimeGrid::new(3.0, 7).unwrap();
        assert_eq!(g.time(0), 0.0);
        assert_eq!(g.time(7), 3.0);
        assert_eq!(g.len(), 8);
        for i in 0..7 {
            assert!((g.time(i + 1) - g.time(i) - g.step()).abs() < 1e-15);
        }
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 1).is_err());
    }

    #[test]
    fn reversal_of_constant_and_ramp() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let c = Signal::constant(g, &[2.5, -1.0]);
        assert_eq!(c.time_reverse(), c);
        let r = ramp(g).time_reverse();
        for (i, t) in g.times().enumerate() {
            assert!((r.at(i)[0] - (1.0 - t)).abs() < 1e-15);
        }
    }

    #[test]
    fn reversal_is_an_involution() {
        let g = TimeGrid::new(2.0, 13).unwrap();
        let u = Signal::from_fn(g, 2, |t, o| {
            o[0] = t.sin() * 1e-3 + 0.1;
            o[1] = (3.0 * t).exp();
        })
        .unwrap();
        assert_eq!(u.time_reverse().time_reverse().values(), u.values());
    }

    #[test]
    fn inner_product_examples() {
        let g = TimeGrid::new(2.0, 10).unwrap();
        let one = Signal::constant(g, &[1.0]);
        assert!((one.inner_product(&one).unwrap() - 2.0).abs() < 1e-14);

        let g = TimeGrid::new(1.0, 10).unwrap();
        let one = Signal::constant(g, &[1.0]);
        // trapezoid is exact for a linear integrand
        assert!((ramp(g).inner_product(&one).unwrap() - 0.5).abs() < 1e-14);
        let u = ramp(g);
        assert!((u.inner_product(&u).unwrap() - u.norm(Norm::L2).powi(2)).abs() < 1e-14);
    }

    #[test]
    fn inner_product_rejects_mismatch() {
        let a = Signal::zeros(TimeGrid::new(1.0, 10).unwrap(), 1);
        let b = Signal::zeros(TimeGrid::new(1.0, 11).unwrap(), 1);
        let c = Signal::zeros(TimeGrid::new(1.0, 10).unwrap(), 2);
        assert_eq!(a.inner_product(&b), Err(Error::GridMismatch));
        assert!(matches!(a.inner_product(&c), Err(Error::Dimension(_))));
    }

    #[test]
    fn norm_examples() {
        let g = TimeGrid::new(4.0, 8).unwrap();
        assert!((Signal::constant(g, &[1.0]).norm(Norm::L2) - 2.0).abs() < 1e-14);
        let n = 200;
        let g = TimeGrid::new(1.0, n).unwrap();
        let u = ramp(g);
        assert_eq!(u.norm(Norm::Linf), 1.0);
        let exact = (1.0_f64 / 3.0).sqrt();
        assert!((u.norm(Norm::L2) - exact).abs() < 1.0 / (n * n) as f64);
    }

    #[test]
    fn rejects_non_finite() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        assert!(Signal::new(g, 1, vec![0.0, f64::NAN, 1.0]).is_err());
        assert!(Signal::new(g, 1, vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        let u = Signal::new(g, 2, vec![0.0, 1.0, 0.1, 0.2, 1.0 / 3.0, -4.0]).unwrap();
        let mut buf = Vec::new();
        u.write_csv(&mut buf, "u").unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,u_1,u_2");
        assert_eq!(lines[1], "0.0,0.0,1.0");
        let last: Vec<f64> = lines[3].split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(last, vec![1.0, 1.0 / 3.0, -4.0]);
    }

    fn signal_strategy(m: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        let len = 21 * m;
        (
            proptest::collection::vec(-10.0..10.0f64, len),
            proptest::collection::vec(-10.0..10.0f64, len),
        )
    }

    proptest! {
        #[test]
        fn norms_are_seminorms((a, b) in signal_strategy(2), s in -5.0..5.0f64) {
            let g = TimeGrid::new(1.7, 20).unwrap();
            let u = Signal::new(g, 2, a).unwrap();
            let v = Signal::new(g, 2, b).unwrap();
            for p in [Norm::L2, Norm::Linf] {
                let lhs = u.add(&v).unwrap().norm(p);
                prop_assert!(lhs <= (u.norm(p) + v.norm(p)) * (1.0 + 1e-12));
                let hom = u.scale(s).norm(p);
                prop_assert!((hom - s.abs() * u.norm(p)).abs() <= 1e-12 * (1.0 + hom));
                prop_assert!((u.time_reverse().norm(p) - u.norm(p)).abs() <= 1e-13 * (1.0 + u.norm(p)));
            }
        }

        #[test]
        fn reversal_is_self_adjoint((a, b) in signal_strategy(3)) {
            let g = TimeGrid::new(0.9, 20).unwrap();
            let u = Signal::new(g, 3, a).unwrap();
            let v = Signal::new(g, 3, b).unwrap();
            let lhs = u.time_reverse().inner_product(&v).unwrap();
            let rhs = u.inner_product(&v.time_reverse()).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + u.norm(Norm::L2) * v.norm(Norm::L2)));
        }
    }
}
