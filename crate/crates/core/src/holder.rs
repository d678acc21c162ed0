//! Hölder seminorms and empirical Hölder exponents of periodic grid functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `osc[d] = max_i |φ_{i+d} − φ_i|` for lags `d = 0..=n/2` (periodic).
pub fn oscillation_modulus(field: &[f64]) -> Vec<f64> {
    let n = field.len();
    let half = n / 2;
    let mut osc = vec![0.0; half + 1];
    for (d, slot) in osc.iter_mut().enumerate().skip(1) {
        let mut m = 0.0f64;
        for i in 0..n {
            let j = if i + d < n { i + d } else { i + d - n };
            m = m.max((field[j] - field[i]).abs());
        }
        *slot = m;
    }
    osc
}

/// Discrete Hölder seminorm on the unit torus: the maximum over grid pairs of
/// `|φ_i − φ_j| / dist(i, j)^α` with periodic distance. Pairs are restricted
/// to distance at most one, which on the unit torus is every pair.
pub fn holder_seminorm(field: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Invalid(format!("Hölder exponent must lie in (0, 1], got {alpha}")));
    }
    Ok(seminorm_from_modulus(&oscillation_modulus(field), field.len(), alpha))
}

pub(crate) fn seminorm_from_modulus(osc: &[f64], n: usize, alpha: f64) -> f64 {
    let h = 1.0 / n as f64;
    osc.iter()
        .enumerate()
        .skip(1)
        .map(|(d, o)| o / (d as f64 * h).powf(alpha))
        .fold(0.0, f64::max)
}

/// `‖φ‖_α = ‖φ‖_∞ + [φ]_α`.
pub fn holder_norm(field: &[f64], alpha: f64) -> Result<f64> {
    Ok(crate::grid::sup_norm(field) + holder_seminorm(field, alpha)?)
}

/// Log–log regression of the oscillation modulus against the lag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub exponent: f64,
    pub r_squared: f64,
    /// Number of lags that entered the fit.
    pub samples: usize,
}

/// Fit `osc(δ) ≈ C δ^β` over dyadic lags `δ ∈ [δ_min, δ_max]`.
///
/// Lags with zero oscillation are skipped; if none remain the function is
/// constant on the window and the exponent is reported as 1.
pub fn fit_holder_exponent(field: &[f64], delta_min: f64, delta_max: f64) -> ExponentFit {
    fit_from_modulus(&oscillation_modulus(field), field.len(), delta_min, delta_max)
}

pub(crate) fn fit_from_modulus(osc: &[f64], n: usize, delta_min: f64, delta_max: f64) -> ExponentFit {
    let h = 1.0 / n as f64;
    let mut pts = Vec::new();
    let mut d = 1usize;
    while d <= n / 2 {
        let delta = d as f64 * h;
        if delta >= delta_min * (1.0 - 1e-12) && delta <= delta_max * (1.0 + 1e-12) && osc[d] > 0.0 {
            pts.push((delta.ln(), osc[d].ln()));
        }
        d *= 2;
    }
    linear_fit(&pts)
}

pub(crate) fn linear_fit(pts: &[(f64, f64)]) -> ExponentFit {
    if pts.len() < 2 {
        return ExponentFit { exponent: 1.0, r_squared: 1.0, samples: pts.len() };
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    ExponentFit { exponent: slope, r_squared, samples: pts.len() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::torus_distance;

    #[test]
    fn constant_field_has_zero_seminorm() {
        assert_eq!(holder_seminorm(&[3.0; 64], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_exponent() {
        assert!(holder_seminorm(&[0.0; 8], 0.0).is_err());
        assert!(holder_seminorm(&[0.0; 8], 1.5).is_err());
    }

    #[test]
    fn distance_function_is_one_lipschitz() {
        let n = 256;
        let f: Vec<f64> = (0..n).map(|i| torus_distance(i as f64 / n as f64, 0.5)).collect();
        let s = holder_seminorm(&f, 1.0).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn square_root_of_distance_is_half_holder() {
        let eval = |n: usize| {
            let f: Vec<f64> = (0..n).map(|i| torus_distance(i as f64 / n as f64, 0.5).sqrt()).collect();
            holder_seminorm(&f, 0.5).unwrap()
        };
        let coarse = eval(1024);
        let fine = eval(4096);
        assert!((coarse - 1.0).abs() < 0.02);
        assert!((fine - coarse).abs() < 0.02);
    }

    #[test]
    fn exponent_fit_recovers_power() {
        let n = 2048;
        let f: Vec<f64> = (0..n).map(|i| torus_distance(i as f64 / n as f64, 0.0).powf(0.6)).collect();
        let fit = fit_holder_exponent(&f, 1.0 / 1024.0, 1.0 / 64.0);
        assert!((fit.exponent - 0.6).abs() < 0.01, "{fit:?}");
        assert!(fit.r_squared > 0.999);
    }
}
