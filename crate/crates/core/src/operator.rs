//! Quadrature discretisation of pure-jump Lévy operators on the torus.
//!
//! The operator `𝓛φ(x) = ∫ (φ(x+z) − φ(x)) ν(dz)` is replaced by
//!
//! ```text
//! (𝓛_h φ)_i = Σ_{j≠0} w_j (φ_{i+j} − φ_i),     w_j = ν_per(cell_j)
//! ```
//!
//! where `cell_j = [(j − ½)h, (j + ½)h) + ℤ`. The cell around the origin is
//! dropped, which costs `O(h^{1−2σ})`. Weights are nonnegative and the
//! difference form makes the action on constants vanish exactly.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_len, sup_norm, Grid};
use crate::holder::holder_seminorm;
use crate::levy::LevyMeasureSpec;
use crate::special::GaussRule;

/// Circulant operator with nonnegative jump weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperator {
    n: usize,
    /// `weights[j]` for offsets `j = 0..n` (mod n); `weights[0] = 0`.
    weights: Vec<f64>,
    nonzero: Vec<(usize, f64)>,
    total: f64,
    inner_radius: f64,
    meta: OperatorMeta,
}

/// Constants carried over from the source measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorMeta {
    pub two_sigma: f64,
    pub symmetric: bool,
    pub symmetric_at_origin: bool,
    /// `K` of the small-jump bound.
    pub small_jump_constant: f64,
    /// `ν(B_1^c)`.
    pub tail_mass: f64,
    pub spec: Option<LevyMeasureSpec>,
}

/// Quadrature order for kinds without closed-form cell masses.
const CELL_RULE_ORDER: usize = 16;

/// Assemble `𝓛_h` for `spec` on the space grid of `grid`.
pub fn assemble_operator(spec: &LevyMeasureSpec, grid: &Grid) -> Result<DiscreteOperator> {
    spec.validate()?;
    let n = grid.n();
    let h = grid.h();
    let mut weights = vec![0.0; n];
    match spec {
        LevyMeasureSpec::Atomic { atoms, .. } => {
            for a in atoms {
                let j = grid.nearest_index(a.location);
                if j != 0 {
                    weights[j] += a.mass;
                }
            }
        }
        _ => {
            let rule = GaussRule::new(CELL_RULE_ORDER);
            for (j, w) in weights.iter_mut().enumerate().skip(1) {
                let a = (j as f64 - 0.5) * h;
                let b = (j as f64 + 0.5) * h;
                *w = spec.periodized_cell_mass(a, b, &rule);
            }
        }
    }
    if let Some(bad) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::NonIntegrable(format!("cell mass {bad} is not a finite nonnegative number")));
    }
    let meta = OperatorMeta {
        two_sigma: spec.two_sigma(),
        symmetric: spec.is_symmetric(),
        symmetric_at_origin: spec.is_symmetric_at_origin(),
        small_jump_constant: spec.small_jump_constant(),
        tail_mass: spec.tail_mass(),
        spec: Some(spec.clone()),
    };
    Ok(DiscreteOperator::from_weights(weights, 0.5 * h, meta))
}

impl DiscreteOperator {
    /// Build from raw weights indexed by offset mod `n`. Entry 0 is ignored.
    pub fn from_weights(mut weights: Vec<f64>, inner_radius: f64, meta: OperatorMeta) -> Self {
        let n = weights.len();
        weights[0] = 0.0;
        let nonzero: Vec<(usize, f64)> =
            weights.iter().enumerate().filter(|(_, w)| **w != 0.0).map(|(j, w)| (j, *w)).collect();
        let total = nonzero.iter().map(|(_, w)| w).sum();
        Self { n, weights, nonzero, total, inner_radius, meta }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Weight at offset `j` (mod n).
    pub fn weight(&self, j: isize) -> f64 {
        self.weights[j.rem_euclid(self.n as isize) as usize]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn nonzero_weights(&self) -> &[(usize, f64)] {
        &self.nonzero
    }

    /// `W = Σ_j w_j`.
    pub fn total_weight(&self) -> f64 {
        self.total
    }

    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    pub fn meta(&self) -> &OperatorMeta {
        &self.meta
    }

    pub fn two_sigma(&self) -> f64 {
        self.meta.two_sigma
    }

    /// Offset `j` as a signed integer in `(−n/2, n/2]`.
    pub fn signed_offset(&self, j: usize) -> isize {
        signed_offset(j, self.n)
    }

    /// `(𝓛_h φ)_i = Σ_j w_j (φ_{i+j} − φ_i)`.
    pub fn apply(&self, field: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n];
        self.apply_into(field, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, field: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.n, field.len())?;
        check_len(self.n, out.len())?;
        out.fill(0.0);
        let n = self.n;
        for &(j, w) in &self.nonzero {
            let (head, tail) = out.split_at_mut(n - j);
            for (i, o) in head.iter_mut().enumerate() {
                *o += w * (field[i + j] - field[i]);
            }
            for (k, o) in tail.iter_mut().enumerate() {
                let i = n - j + k;
                *o += w * (field[k] - field[i]);
            }
        }
        Ok(())
    }

    /// Transposed action `(𝓛_hᵀ y)_i = Σ_j w_j (y_{i−j} − y_i)`.
    ///
    /// Columns of `𝓛_h` sum to zero, so `Σ_i (𝓛_hᵀ y)_i = 0`.
    pub fn apply_transpose(&self, field: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n];
        self.apply_transpose_into(field, &mut out)?;
        Ok(out)
    }

    pub fn apply_transpose_into(&self, field: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.n, field.len())?;
        check_len(self.n, out.len())?;
        out.fill(0.0);
        let n = self.n;
        for &(j, w) in &self.nonzero {
            // i − j for i < j wraps to i − j + n
            let (head, tail) = out.split_at_mut(j);
            for (i, o) in head.iter_mut().enumerate() {
                *o += w * (field[i + n - j] - field[i]);
            }
            for (k, o) in tail.iter_mut().enumerate() {
                let i = j + k;
                *o += w * (field[k] - field[i]);
            }
        }
        Ok(())
    }

    /// Split into the part with jumps inside the ball of radius `r` and the
    /// part outside it. On the unit torus `r ≥ 1/2` covers every offset.
    pub fn split(&self, r: f64) -> Result<(DiscreteOperator, DiscreteOperator)> {
        if !(r > 0.0 && r <= 0.5) {
            return Err(Error::Invalid(format!("split radius must lie in (0, 1/2], got {r}")));
        }
        let h = self.h();
        let mut inner = vec![0.0; self.n];
        let mut outer = vec![0.0; self.n];
        for (j, &w) in self.weights.iter().enumerate().skip(1) {
            let z = self.signed_offset(j).unsigned_abs() as f64 * h;
            if r >= 0.5 || z < r {
                inner[j] = w;
            } else {
                outer[j] = w;
            }
        }
        Ok((
            DiscreteOperator::from_weights(inner, self.inner_radius, self.meta.clone()),
            DiscreteOperator::from_weights(outer, r.max(self.inner_radius), self.meta.clone()),
        ))
    }

    /// CSV weight table: `offset,z,weight` with signed offsets.
    pub fn weights_csv(&self) -> String {
        let mut rows: Vec<(isize, f64)> =
            self.nonzero.iter().map(|&(j, w)| (self.signed_offset(j), w)).collect();
        rows.sort_by_key(|r| r.0);
        let mut s = String::from("offset,z,weight\n");
        for (j, w) in rows {
            let _ = writeln!(s, "{},{:.16e},{:.16e}", j, j as f64 * self.h(), w);
        }
        s
    }
}

pub(crate) fn signed_offset(j: usize, n: usize) -> isize {
    if j <= n / 2 {
        j as isize
    } else {
        j as isize - n as isize
    }
}

/// Measured norms of `𝓛_h φ` against the right-hand sides of the operator
/// bounds `‖𝓛φ‖_∞ ≤ K/(p−2σ)[φ]_p + 2‖φ‖_∞ ν(B_1^c)` and
/// `[𝓛φ]_{p−2σ} ≤ 2(K/(p−2σ) + ν(B_1^c)) [φ]_p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorBoundReport {
    pub p: f64,
    pub sup_norm: f64,
    pub seminorm: f64,
    pub sup_bound: f64,
    pub seminorm_bound: f64,
    pub tolerance: f64,
    pub violated: bool,
}

/// Compare `𝓛_h φ` with the operator bounds at exponent `p ∈ (2σ, 1]`.
///
/// The violation flag allows a discretisation tolerance of
/// `10·h^{1−2σ}·‖φ‖_p`.
pub fn check_operator_bounds(op: &DiscreteOperator, field: &[f64], p: f64) -> Result<OperatorBoundReport> {
    let s = op.two_sigma();
    if !(p > s && p <= 1.0) {
        return Err(Error::Invalid(format!("bound exponent p = {p} must lie in (2σ, 1] = ({s}, 1]")));
    }
    let lphi = op.apply(field)?;
    let sup = sup_norm(&lphi);
    let semi = holder_seminorm(&lphi, p - s)?;
    let phi_sup = sup_norm(field);
    let phi_semi = holder_seminorm(field, p)?;
    let k = op.meta.small_jump_constant;
    let tail = op.meta.tail_mass;
    let sup_bound = k / (p - s) * phi_semi + 2.0 * phi_sup * tail;
    let seminorm_bound = 2.0 * (k / (p - s) + tail) * phi_semi;
    let tolerance = 10.0 * op.h().powf(1.0 - s) * (phi_sup + phi_semi);
    let violated = sup > sup_bound + tolerance || semi > seminorm_bound + tolerance;
    Ok(OperatorBoundReport { p, sup_norm: sup, seminorm: semi, sup_bound, seminorm_bound, tolerance, violated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{DensityProfile, LevyMeasureSpec};
    use std::f64::consts::PI;

    fn cos_field(n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * i as f64 / n as f64).cos()).collect()
    }

    #[test]
    fn single_atom_falls_in_one_cell() {
        let g = Grid::new(8, 1.0, 1).unwrap();
        let op = assemble_operator(&LevyMeasureSpec::atomic(&[(0.5, 1.0)]), &g).unwrap();
        assert_eq!(op.nonzero_weights(), &[(4, 1.0)]);
        assert_eq!(op.total_weight(), 1.0);
    }

    #[test]
    fn atom_acts_as_shift() {
        let n = 64;
        let g = Grid::new(n, 1.0, 1).unwrap();
        let op = assemble_operator(&LevyMeasureSpec::atomic(&[(0.5, 1.0)]), &g).unwrap();
        let phi = cos_field(n);
        let out = op.apply(&phi).unwrap();
        for (o, p) in out.iter().zip(&phi) {
            assert!((o + 2.0 * p).abs() < 1e-14);
        }
    }

    #[test]
    fn constants_are_annihilated() {
        let g = Grid::new(128, 1.0, 1).unwrap();
        for spec in [
            LevyMeasureSpec::fractional_laplacian(0.5).unwrap(),
            LevyMeasureSpec::TemperedStable { two_sigma: 0.3, c_plus: 1.0, c_minus: 0.2, lambda: 3.0 },
            LevyMeasureSpec::BoundedDensity {
                density: DensityProfile::Gaussian { center: 0.1, width: 0.3, mass: 2.0 },
                order: 0.0,
            },
        ] {
            let op = assemble_operator(&spec, &g).unwrap();
            assert!(op.weights().iter().all(|w| *w >= 0.0));
            let out = op.apply(&[0.7; 128]).unwrap();
            assert!(out.iter().all(|v| *v == 0.0));
            let out_t = op.apply_transpose(&[0.7; 128]).unwrap();
            assert!(out_t.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn symmetric_specs_give_symmetric_weights() {
        let g = Grid::new(64, 1.0, 1).unwrap();
        let op = assemble_operator(&LevyMeasureSpec::fractional_laplacian(0.4).unwrap(), &g).unwrap();
        for j in 1..64 {
            let (a, b) = (op.weight(j), op.weight(-j));
            assert!((a - b).abs() <= 1e-13 * a, "j={j}");
        }
        let skew = LevyMeasureSpec::Stable { two_sigma: 0.4, c_plus: 1.0, c_minus: 0.25 };
        let op = assemble_operator(&skew, &g).unwrap();
        assert!((op.weight(1) - op.weight(-1)).abs() > 0.1 * op.weight(1));
    }

    #[test]
    fn periodized_uniform_density_matches_closed_form() {
        // rate 1 on [-2, 2] periodises to 4 per unit length
        let g = Grid::new(16, 1.0, 1).unwrap();
        let spec = LevyMeasureSpec::BoundedDensity {
            density: DensityProfile::Uniform { lo: -2.0, hi: 2.0, rate: 1.0 },
            order: 0.0,
        };
        let op = assemble_operator(&spec, &g).unwrap();
        for j in 1..16 {
            assert!((op.weight(j) - 4.0 / 16.0).abs() < 1e-14);
        }
    }

    #[test]
    fn split_partitions_exactly() {
        let n = 512;
        let g = Grid::new(n, 1.0, 1).unwrap();
        let op = assemble_operator(&LevyMeasureSpec::fractional_laplacian(0.3).unwrap(), &g).unwrap();
        let phi: Vec<f64> = (0..n)
            .map(|i| {
                let x = i as f64 / n as f64;
                (2.0 * PI * x).sin() + 0.3 * (6.0 * PI * x).cos()
            })
            .collect();
        let (inner, outer) = op.split(0.1).unwrap();
        let full = op.apply(&phi).unwrap();
        let a = inner.apply(&phi).unwrap();
        let b = outer.apply(&phi).unwrap();
        for i in 0..n {
            assert!((a[i] + b[i] - full[i]).abs() < 1e-12);
        }
        let (inner, outer) = op.split(0.5 * g.h() * 0.9).unwrap();
        assert!(inner.nonzero_weights().is_empty());
        assert_eq!(outer.weights(), op.weights());
        let (inner, outer) = op.split(0.5).unwrap();
        assert!(outer.nonzero_weights().is_empty());
        assert_eq!(inner.weights(), op.weights());
        assert!(op.split(0.0).is_err());
    }

    #[test]
    fn transpose_pairing() {
        let n = 64;
        let g = Grid::new(n, 1.0, 1).unwrap();
        let skew = LevyMeasureSpec::Stable { two_sigma: 0.4, c_plus: 1.0, c_minus: 0.25 };
        let op = assemble_operator(&skew, &g).unwrap();
        let x: Vec<f64> = (0..n).map(|i| ((i * 7 % 13) as f64).sin()).collect();
        let y: Vec<f64> = (0..n).map(|i| ((i * 5 % 11) as f64).cos()).collect();
        let lhs: f64 = op.apply(&x).unwrap().iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(op.apply_transpose(&y).unwrap()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = Grid::new(8, 1.0, 1).unwrap();
        let op = assemble_operator(&LevyMeasureSpec::atomic(&[(0.25, 1.0)]), &g).unwrap();
        assert!(matches!(op.apply(&[0.0; 4]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn bound_check_on_constant_field() {
        let g = Grid::new(64, 1.0, 1).unwrap();
        let op = assemble_operator(&LevyMeasureSpec::fractional_laplacian(0.2).unwrap(), &g).unwrap();
        let r = check_operator_bounds(&op, &[1.0; 64], 1.0).unwrap();
        assert_eq!(r.sup_norm, 0.0);
        assert_eq!(r.seminorm, 0.0);
        assert!(r.sup_bound >= 0.0 && r.seminorm_bound >= 0.0);
        assert!(!r.violated);
        assert!(check_operator_bounds(&op, &[1.0; 64], 0.2).is_err());
    }

    #[test]
    fn csv_lists_signed_offsets() {
        let g = Grid::new(8, 1.0, 1).unwrap();
        let op = assemble_operator(&LevyMeasureSpec::atomic(&[(0.25, 1.0), (-0.125, 0.5)]), &g).unwrap();
        let csv = op.weights_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "offset,z,weight");
        assert!(lines[1].starts_with("-1,"));
        assert!(lines[2].starts_with("2,"));
    }
}
