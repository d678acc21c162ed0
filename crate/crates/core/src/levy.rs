//! Parametric Lévy measures of order less than one on the real line.
//!
//! A measure is described by [`LevyMeasureSpec`]. Besides validation it knows
//! the two constants that enter every operator estimate: the small-jump
//! constant `K` of the bound
//!
//! ```text
//! ∫_{B_1} (1 ∧ |z|^p / r^p) ν(dz) ≤ K/(p − 2σ) · r^{−2σ},   p ∈ (2σ, 1], r ∈ (0, 1)
//! ```
//!
//! and the tail mass `ν(B_1^c)`. It also computes masses of the periodised
//! measure `ν_per(A) = Σ_k ν(A + k)` used to assemble operators on the torus.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::special::{fractional_laplacian_constant, hurwitz_zeta_difference, GaussRule};

/// A point mass `mass · δ_location`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

/// Shape of a bounded Lévy density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum DensityProfile {
    /// `rate` on `[lo, hi]`.
    Uniform { lo: f64, hi: f64, rate: f64 },
    /// `mass` times the normal density with the given center and width.
    Gaussian { center: f64, width: f64, mass: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevyMeasureSpec {
    /// `c₊ z^{-1-2σ}` for `z > 0`, `c₋ |z|^{-1-2σ}` for `z < 0`.
    Stable { two_sigma: f64, c_plus: f64, c_minus: f64 },
    /// Stable density damped by `e^{-λ|z|}`.
    TemperedStable { two_sigma: f64, c_plus: f64, c_minus: f64, lambda: f64 },
    /// Bounded density; `order` is the declared `2σ` used by the estimates.
    BoundedDensity { density: DensityProfile, order: f64 },
    /// Finite sum of point masses; `order` as above.
    Atomic { atoms: Vec<Atom>, order: f64 },
}

const SYMMETRY_TOL: f64 = 1e-14;

impl LevyMeasureSpec {
    /// The measure of `−(−Δ)^σ` in one dimension.
    pub fn fractional_laplacian(two_sigma: f64) -> Result<Self> {
        if !(two_sigma > 0.0 && two_sigma < 1.0) {
            return Err(Error::OrderTooLarge(two_sigma));
        }
        let c = fractional_laplacian_constant(two_sigma);
        Ok(Self::Stable { two_sigma, c_plus: c, c_minus: c })
    }

    pub fn atomic(atoms: &[(f64, f64)]) -> Self {
        Self::Atomic {
            atoms: atoms.iter().map(|&(location, mass)| Atom { location, mass }).collect(),
            order: 0.0,
        }
    }

    /// Order `2σ` of the operator.
    pub fn two_sigma(&self) -> f64 {
        match self {
            Self::Stable { two_sigma, .. } | Self::TemperedStable { two_sigma, .. } => *two_sigma,
            Self::BoundedDensity { order, .. } | Self::Atomic { order, .. } => *order,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.two_sigma();
        if !s.is_finite() || s >= 1.0 {
            return Err(Error::OrderTooLarge(s));
        }
        if s < 0.0 {
            return Err(Error::Levy(format!("order 2σ must be nonnegative, got {s}")));
        }
        match self {
            Self::Stable { two_sigma, c_plus, c_minus }
            | Self::TemperedStable { two_sigma, c_plus, c_minus, .. } => {
                if *two_sigma <= 0.0 {
                    return Err(Error::NonIntegrable(
                        "stable density needs 2σ > 0 for a finite tail".into(),
                    ));
                }
                check_coefficient("c_plus", *c_plus)?;
                check_coefficient("c_minus", *c_minus)?;
                if let Self::TemperedStable { lambda, .. } = self {
                    if !(lambda.is_finite() && *lambda > 0.0) {
                        return Err(Error::Levy(format!("tempering rate must be positive, got {lambda}")));
                    }
                }
            }
            Self::BoundedDensity { density, .. } => match *density {
                DensityProfile::Uniform { lo, hi, rate } => {
                    if !(lo.is_finite() && hi.is_finite()) {
                        return Err(Error::NonIntegrable("uniform profile with unbounded support".into()));
                    }
                    if lo >= hi {
                        return Err(Error::Levy(format!("uniform profile needs lo < hi, got [{lo}, {hi}]")));
                    }
                    if !rate.is_finite() {
                        return Err(Error::NonIntegrable("uniform profile with infinite rate".into()));
                    }
                    check_coefficient("rate", rate)?;
                }
                DensityProfile::Gaussian { center, width, mass } => {
                    if !(center.is_finite() && width.is_finite() && mass.is_finite()) {
                        return Err(Error::NonIntegrable("gaussian profile with non-finite parameters".into()));
                    }
                    if width <= 0.0 {
                        return Err(Error::Levy(format!("gaussian width must be positive, got {width}")));
                    }
                    check_coefficient("mass", mass)?;
                }
            },
            Self::Atomic { atoms, .. } => {
                for a in atoms {
                    if !(a.location.is_finite() && a.mass.is_finite()) {
                        return Err(Error::NonIntegrable("atom with non-finite location or mass".into()));
                    }
                    check_coefficient("atom mass", a.mass)?;
                    if a.location == 0.0 && a.mass > 0.0 {
                        return Err(Error::Levy("a Lévy measure carries no mass at the origin".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// `ν(A) = ν(−A)` for every Borel `A` (full reflection symmetry).
    pub fn is_symmetric(&self) -> bool {
        match self {
            Self::Stable { c_plus, c_minus, .. } | Self::TemperedStable { c_plus, c_minus, .. } => {
                c_plus == c_minus
            }
            Self::BoundedDensity { density, .. } => match *density {
                DensityProfile::Uniform { lo, hi, .. } => lo == -hi,
                DensityProfile::Gaussian { center, .. } => center == 0.0,
            },
            Self::Atomic { atoms, .. } => atoms_symmetric(atoms, f64::INFINITY),
        }
    }

    /// Symmetry restricted to subsets of the unit ball, the notion used by the
    /// uniqueness thresholds.
    pub fn is_symmetric_at_origin(&self) -> bool {
        match self {
            Self::Atomic { atoms, .. } => atoms_symmetric(atoms, 1.0),
            Self::BoundedDensity { density: DensityProfile::Uniform { lo, hi, .. }, .. } => {
                lo.max(-1.0) == -(hi.min(1.0))
            }
            _ => self.is_symmetric(),
        }
    }

    /// Density at `z ≠ 0` for absolutely continuous kinds.
    pub fn density(&self, z: f64) -> Option<f64> {
        match *self {
            Self::Stable { two_sigma, c_plus, c_minus } => {
                let c = if z > 0.0 { c_plus } else { c_minus };
                Some(c * z.abs().powf(-1.0 - two_sigma))
            }
            Self::TemperedStable { two_sigma, c_plus, c_minus, lambda } => {
                let c = if z > 0.0 { c_plus } else { c_minus };
                Some(c * (-lambda * z.abs()).exp() * z.abs().powf(-1.0 - two_sigma))
            }
            Self::BoundedDensity { density, .. } => Some(match density {
                DensityProfile::Uniform { lo, hi, rate } => {
                    if z >= lo && z <= hi {
                        rate
                    } else {
                        0.0
                    }
                }
                DensityProfile::Gaussian { center, width, mass } => {
                    let u = (z - center) / width;
                    mass * (-0.5 * u * u).exp() / (width * (2.0 * std::f64::consts::PI).sqrt())
                }
            }),
            Self::Atomic { .. } => None,
        }
    }

    /// `ν(B_1^c)`.
    pub fn tail_mass(&self) -> f64 {
        match self {
            Self::Stable { two_sigma, c_plus, c_minus } => (c_plus + c_minus) / two_sigma,
            Self::TemperedStable { .. } => {
                let rule = GaussRule::new(20);
                let f = |z: f64| self.density(z).unwrap() + self.density(-z).unwrap();
                rule.integrate_to_infinity(1.0, f)
            }
            Self::BoundedDensity { density, .. } => {
                self.bounded_mass_in(density, f64::NEG_INFINITY, -1.0)
                    + self.bounded_mass_in(density, 1.0, f64::INFINITY)
            }
            Self::Atomic { atoms, .. } => {
                atoms.iter().filter(|a| a.location.abs() >= 1.0).map(|a| a.mass).sum()
            }
        }
    }

    /// Mass of the open unit ball; infinite for stable kinds.
    pub fn unit_ball_mass(&self) -> f64 {
        match self {
            Self::Stable { .. } | Self::TemperedStable { .. } => f64::INFINITY,
            Self::BoundedDensity { density, .. } => self.bounded_mass_in(density, -1.0, 1.0),
            Self::Atomic { atoms, .. } => {
                atoms.iter().filter(|a| a.location.abs() < 1.0).map(|a| a.mass).sum()
            }
        }
    }

    /// Small-jump constant `K`.
    ///
    /// For stable and tempered kinds this is `(c₊ + c₋)/(2σ)`, the sharp
    /// constant of the pure stable density (tempering only lowers the
    /// left-hand side). For bounded kinds `K = ν(B_1)`.
    pub fn small_jump_constant(&self) -> f64 {
        match self {
            Self::Stable { two_sigma, c_plus, c_minus }
            | Self::TemperedStable { two_sigma, c_plus, c_minus, .. } => (c_plus + c_minus) / two_sigma,
            _ => self.unit_ball_mass(),
        }
    }

    /// `∫ (1 ∧ |z|) ν(dz)`.
    pub fn first_absolute_moment(&self) -> f64 {
        match self {
            Self::Stable { two_sigma, c_plus, c_minus } => {
                (c_plus + c_minus) * (1.0 / (1.0 - two_sigma) + 1.0 / two_sigma)
            }
            Self::TemperedStable { .. } | Self::BoundedDensity { .. } => {
                let rule = GaussRule::new(20);
                let sym = |z: f64| self.density(z).unwrap() + self.density(-z).unwrap();
                let mut inner = 0.0;
                // geometric panels towards the origin
                let mut hi = 1.0;
                for _ in 0..200 {
                    let lo = hi * 0.5;
                    inner += rule.integrate(lo, hi, |z| z * sym(z));
                    hi = lo;
                }
                inner + self.tail_mass()
            }
            Self::Atomic { atoms, .. } => atoms.iter().map(|a| a.mass * a.location.abs().min(1.0)).sum(),
        }
    }

    /// Total mass if finite.
    pub fn total_mass(&self) -> Option<f64> {
        match self {
            Self::Stable { .. } | Self::TemperedStable { .. } => None,
            _ => Some(self.unit_ball_mass() + self.tail_mass()),
        }
    }

    /// Mass of `⋃_k ([a, b) + k)` for `0 < a < b < 1`, i.e. of the cell
    /// `[a, b)` under the periodised measure. Atomic measures are handled by
    /// the operator assembly directly.
    pub(crate) fn periodized_cell_mass(&self, a: f64, b: f64, rule: &GaussRule) -> f64 {
        debug_assert!(0.0 < a && a < b && b < 1.0);
        match *self {
            Self::Stable { two_sigma, c_plus, c_minus } => {
                // positive images [a+k, b+k), k ≥ 0, and negative images
                // with |z| ∈ (m − b, m − a], m ≥ 1
                let pos = c_plus * hurwitz_zeta_difference(two_sigma, a, b);
                let neg = c_minus * hurwitz_zeta_difference(two_sigma, 1.0 - b, 1.0 - a);
                (pos + neg) / two_sigma
            }
            Self::TemperedStable { lambda, .. } => {
                let k_max = tempered_image_count(lambda);
                let mut total = 0.0;
                for k in 0..=k_max {
                    let k = k as f64;
                    total += rule.integrate(a + k, b + k, |z| self.density(z).unwrap());
                    total += rule.integrate(a - k - 1.0, b - k - 1.0, |z| self.density(z).unwrap());
                }
                total
            }
            Self::BoundedDensity { density, .. } => {
                let (lo, hi) = self.bounded_support(&density);
                let k_lo = (lo - b).floor() as i64 - 1;
                let k_hi = (hi - a).ceil() as i64 + 1;
                (k_lo..=k_hi)
                    .map(|k| self.bounded_mass_in(&density, a + k as f64, b + k as f64))
                    .sum()
            }
            Self::Atomic { .. } => unreachable!("atomic measures are assembled from their atoms"),
        }
    }

    fn bounded_support(&self, density: &DensityProfile) -> (f64, f64) {
        match *density {
            DensityProfile::Uniform { lo, hi, .. } => (lo, hi),
            DensityProfile::Gaussian { center, width, .. } => (center - 40.0 * width, center + 40.0 * width),
        }
    }

    fn bounded_mass_in(&self, density: &DensityProfile, a: f64, b: f64) -> f64 {
        match *density {
            DensityProfile::Uniform { lo, hi, rate } => rate * (b.min(hi) - a.max(lo)).max(0.0),
            DensityProfile::Gaussian { center, width, mass } => {
                let s = std::f64::consts::SQRT_2 * width;
                let cdf = |x: f64| {
                    if x == f64::INFINITY {
                        1.0
                    } else if x == f64::NEG_INFINITY {
                        0.0
                    } else {
                        0.5 * (1.0 + erf((x - center) / s))
                    }
                };
                mass * (cdf(b) - cdf(a)).max(0.0)
            }
        }
    }
}

fn tempered_image_count(lambda: f64) -> usize {
    ((45.0 / lambda).ceil() as usize).clamp(8, 100_000)
}

fn check_coefficient(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Levy(format!("{name} must be finite and nonnegative, got {v}")))
    }
}

fn atoms_symmetric(atoms: &[Atom], radius: f64) -> bool {
    let inside: Vec<&Atom> = atoms.iter().filter(|a| a.location.abs() < radius && a.mass > 0.0).collect();
    inside.iter().all(|a| {
        let mirrored: f64 = inside
            .iter()
            .filter(|b| (b.location + a.location).abs() <= SYMMETRY_TOL)
            .map(|b| b.mass)
            .sum();
        let own: f64 = inside
            .iter()
            .filter(|b| (b.location - a.location).abs() <= SYMMETRY_TOL)
            .map(|b| b.mass)
            .sum();
        (mirrored - own).abs() <= SYMMETRY_TOL * own.max(1.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_order_one_and_above() {
        assert!(matches!(LevyMeasureSpec::fractional_laplacian(1.0), Err(Error::OrderTooLarge(_))));
        let s = LevyMeasureSpec::Stable { two_sigma: 1.2, c_plus: 1.0, c_minus: 1.0 };
        assert!(matches!(s.validate(), Err(Error::OrderTooLarge(_))));
        let a = LevyMeasureSpec::Atomic { atoms: vec![Atom { location: 0.5, mass: 1.0 }], order: 1.0 };
        assert!(matches!(a.validate(), Err(Error::OrderTooLarge(_))));
    }

    #[test]
    fn rejects_nonintegrable_and_invalid_profiles() {
        let u = LevyMeasureSpec::BoundedDensity {
            density: DensityProfile::Uniform { lo: 0.0, hi: f64::INFINITY, rate: 1.0 },
            order: 0.0,
        };
        assert!(matches!(u.validate(), Err(Error::NonIntegrable(_))));
        let neg = LevyMeasureSpec::atomic(&[(0.3, -1.0)]);
        assert!(neg.validate().is_err());
        let origin = LevyMeasureSpec::atomic(&[(0.0, 1.0)]);
        assert!(origin.validate().is_err());
        let zero_order = LevyMeasureSpec::Stable { two_sigma: 0.0, c_plus: 1.0, c_minus: 1.0 };
        assert!(matches!(zero_order.validate(), Err(Error::NonIntegrable(_))));
    }

    #[test]
    fn symmetry_flags() {
        let s = LevyMeasureSpec::fractional_laplacian(0.4).unwrap();
        assert!(s.is_symmetric() && s.is_symmetric_at_origin());
        let skew = LevyMeasureSpec::Stable { two_sigma: 0.4, c_plus: 1.0, c_minus: 0.5 };
        assert!(!skew.is_symmetric());
        let a = LevyMeasureSpec::atomic(&[(0.25, 1.0), (-0.25, 1.0), (1.5, 2.0)]);
        assert!(!a.is_symmetric());
        assert!(a.is_symmetric_at_origin());
        let b = LevyMeasureSpec::atomic(&[(0.5, 1.0)]);
        assert!(!b.is_symmetric_at_origin());
    }

    #[test]
    fn stable_constants_closed_form() {
        let s = LevyMeasureSpec::Stable { two_sigma: 0.5, c_plus: 1.0, c_minus: 3.0 };
        assert!((s.tail_mass() - 8.0).abs() < 1e-14);
        assert!((s.small_jump_constant() - 8.0).abs() < 1e-14);
        assert!((s.first_absolute_moment() - 4.0 * (2.0 + 2.0)).abs() < 1e-14);
    }

    #[test]
    fn bounded_and_atomic_masses() {
        let a = LevyMeasureSpec::atomic(&[(0.5, 1.0), (-2.0, 0.25)]);
        assert_eq!(a.tail_mass(), 0.25);
        assert_eq!(a.unit_ball_mass(), 1.0);
        assert_eq!(a.first_absolute_moment(), 0.75);
        let u = LevyMeasureSpec::BoundedDensity {
            density: DensityProfile::Uniform { lo: -2.0, hi: 2.0, rate: 0.5 },
            order: 0.0,
        };
        assert!((u.tail_mass() - 1.0).abs() < 1e-15);
        assert!((u.unit_ball_mass() - 1.0).abs() < 1e-15);
        assert!((u.first_absolute_moment() - (0.5 + 1.0)).abs() < 1e-12);
        let g = LevyMeasureSpec::BoundedDensity {
            density: DensityProfile::Gaussian { center: 0.0, width: 1.0, mass: 2.0 },
            order: 0.0,
        };
        assert!((g.total_mass().unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn tempered_tail_is_below_stable_tail() {
        let t = LevyMeasureSpec::TemperedStable { two_sigma: 0.3, c_plus: 1.0, c_minus: 1.0, lambda: 2.0 };
        let s = LevyMeasureSpec::Stable { two_sigma: 0.3, c_plus: 1.0, c_minus: 1.0 };
        assert!(t.tail_mass() < s.tail_mass());
        assert!(t.tail_mass() > 0.0);
    }
}
