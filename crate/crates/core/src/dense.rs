//! Small dense linear algebra: generator matrices and the matrix exponential.
//! Meant for reference solutions on coarse grids only.

use crate::operator::DiscreteOperator;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { n: self.n, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn mul(&self, other: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let row = &other.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.data[i * self.n..(i + 1) * self.n].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.data[i * self.n..(i + 1) * self.n].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Dense matrix `A` with `(Aφ)_i = Σ_j w_j (φ_{i+j} − φ_i)`.
pub fn generator_matrix(op: &DiscreteOperator) -> Matrix {
    let n = op.n();
    let mut a = Matrix::zeros(n);
    for i in 0..n {
        for &(j, w) in op.nonzero_weights() {
            let k = (i + j) % n;
            a.set(i, k, a.get(i, k) + w);
            a.set(i, i, a.get(i, i) - w);
        }
    }
    a
}

/// Diagonal matrix from a vector.
pub fn diag(v: &[f64]) -> Matrix {
    let mut d = Matrix::zeros(v.len());
    for (i, x) in v.iter().enumerate() {
        d.set(i, i, *x);
    }
    d
}

/// `exp(A)` by scaling and squaring with a degree-18 Taylor polynomial.
pub fn expm(a: &Matrix) -> Matrix {
    let norm = a.norm_inf();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = a.scale(0.5f64.powi(squarings as i32));
    let n = a.n();
    let mut result = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for k in 1..=18 {
        term = term.mul(&scaled).scale(1.0 / k as f64);
        result = result.add(&term);
    }
    for _ in 0..squarings {
        result = result.mul(&result);
    }
    result
}
