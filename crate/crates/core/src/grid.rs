//! Periodic space grid on the unit torus together with a uniform time grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid on `[0, 1)` (periodic) times `[0, T]`.
///
/// Space points are `x_i = i h` with `h = 1/n`; time points are `t_k = k dt`
/// with `dt = T / n_t`, `k = 0..=n_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    horizon: f64,
    n_t: usize,
}

impl Grid {
    pub fn new(n: usize, horizon: f64, n_t: usize) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::Grid(format!(
                "points per axis must be a power of two >= 2, got {n}"
            )));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Grid(format!("time horizon must be positive, got {horizon}")));
        }
        if n_t == 0 {
            return Err(Error::Grid("number of time steps must be positive".into()));
        }
        Ok(Self { n, horizon, n_t })
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Space step. Exact since `n` is a power of two.
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_t as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }

    pub fn t(&self, k: usize) -> f64 {
        if k == self.n_t {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Same space grid with a different number of time steps.
    pub fn with_time_steps(&self, n_t: usize) -> Result<Self> {
        Self::new(self.n, self.horizon, n_t)
    }

    /// Same space grid with a different horizon and time steps.
    pub fn with_time(&self, horizon: f64, n_t: usize) -> Result<Self> {
        Self::new(self.n, horizon, n_t)
    }

    /// Index of `i + j` on the torus.
    #[inline]
    pub fn wrap(&self, i: isize) -> usize {
        i.rem_euclid(self.n as isize) as usize
    }

    /// Periodic distance between grid indices, in index units.
    #[inline]
    pub fn index_distance(&self, i: usize, j: usize) -> usize {
        let d = i.abs_diff(j);
        d.min(self.n - d)
    }

    /// Nearest grid index to a point of the real line (wrapped).
    pub fn nearest_index(&self, x: f64) -> usize {
        let y = x.rem_euclid(1.0) * self.n as f64;
        (y.round() as usize) % self.n
    }
}

/// Periodic distance on the unit circle.
pub fn torus_distance(x: f64, y: f64) -> f64 {
    let d = (x - y).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// A real function sampled on `time index × space index`.
///
/// Row `k` holds the space slice at `t_k`; there are `n_t + 1` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    n: usize,
    rows: usize,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::filled(grid, 0.0)
    }

    pub fn filled(grid: &Grid, value: f64) -> Self {
        let rows = grid.n_t() + 1;
        Self { n: grid.n(), rows, values: vec![value; rows * grid.n()] }
    }

    /// Sample `f(t, x)` on the grid.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for k in 0..out.rows {
            let t = grid.t(k);
            for (i, v) in out.slice_mut(k).iter_mut().enumerate() {
                *v = f(t, grid.x(i));
            }
        }
        out
    }

    /// Every time row equal to `slice`.
    pub fn constant_in_time(grid: &Grid, slice: &[f64]) -> Result<Self> {
        check_len(grid.n(), slice.len())?;
        let rows = grid.n_t() + 1;
        let mut values = Vec::with_capacity(rows * slice.len());
        for _ in 0..rows {
            values.extend_from_slice(slice);
        }
        Ok(Self { n: grid.n(), rows, values })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.first().map(Vec::len).unwrap_or(0);
        if n == 0 {
            return Err(Error::Invalid("space-time field needs at least one nonempty row".into()));
        }
        let count = rows.len();
        let mut values = Vec::with_capacity(count * n);
        for r in rows {
            check_len(n, r.len())?;
            values.extend(r);
        }
        Ok(Self { n, rows: count, values })
    }

    pub fn n_space(&self) -> usize {
        self.n
    }

    pub fn n_times(&self) -> usize {
        self.rows
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        &self.values[k * self.n..(k + 1) * self.n]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.n..(k + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { n: self.n, rows: self.rows, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.values)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `sup |self - other|` over all entries.
    pub fn sup_distance(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        check_len(grid.n(), self.n)?;
        check_len(grid.n_t() + 1, self.rows)
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        check_len(self.n, other.n)?;
        check_len(self.rows, other.rows)
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// `Σ_i a_i b_i`.
pub fn pairing(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_power_of_two() {
        assert!(Grid::new(12, 1.0, 10).is_err());
        assert!(Grid::new(1, 1.0, 10).is_err());
        assert!(Grid::new(16, 0.0, 10).is_err());
        assert!(Grid::new(16, 1.0, 0).is_err());
    }

    #[test]
    fn spacing_is_exact() {
        for p in 1..14 {
            let g = Grid::new(1 << p, 0.7, 33).unwrap();
            assert_eq!(g.h() * g.n() as f64, 1.0);
            assert_eq!(g.t(g.n_t()), 0.7);
            assert!((g.dt() * g.n_t() as f64 - 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn periodic_indexing() {
        let g = Grid::new(8, 1.0, 1).unwrap();
        assert_eq!(g.wrap(-1), 7);
        assert_eq!(g.wrap(9), 1);
        assert_eq!(g.index_distance(1, 7), 2);
        assert_eq!(g.nearest_index(0.99), 0);
        assert_eq!(g.nearest_index(-0.25), 6);
        assert!((torus_distance(0.05, 0.95) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn field_shapes() {
        let g = Grid::new(4, 1.0, 3).unwrap();
        let f = SpaceTimeField::from_fn(&g, |t, x| t + x);
        assert_eq!(f.n_times(), 4);
        assert_eq!(f.slice(3), &[1.0, 1.25, 1.5, 1.75]);
        assert!(f.check_grid(&g).is_ok());
        let other = Grid::new(8, 1.0, 3).unwrap();
        assert!(f.check_grid(&other).is_err());
    }
}
