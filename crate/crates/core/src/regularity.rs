//! Exponent recursions, dual regularity exponents and uniqueness thresholds.
//!
//! Throughout, `two_sigma` is the order `2σ` of the Lévy measure.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Comparison guard band for double-precision verdicts.
pub const GUARD_BAND: f64 = 1e-12;

/// Outcome of a strict inequality check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Within the guard band (or exactly equal): the strict inequality is
    /// neither confirmed nor refuted.
    Boundary,
}

impl Verdict {
    /// Verdict for `margin > 0`.
    pub fn from_margin(margin: f64) -> Self {
        if margin > GUARD_BAND {
            Self::Pass
        } else if margin < -GUARD_BAND {
            Self::Fail
        } else {
            Self::Boundary
        }
    }

    fn from_exact(margin: &BigRational) -> Self {
        if margin.is_positive() {
            Self::Pass
        } else if margin.is_negative() {
            Self::Fail
        } else {
            Self::Boundary
        }
    }

    pub fn passed(self) -> bool {
        self == Self::Pass
    }
}

/// The exponent sequences of the dual bootstrap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentState {
    pub two_sigma: f64,
    pub beta: f64,
    pub c: f64,
    pub horizon: f64,
    pub omega: Vec<f64>,
    pub c_seq: Vec<f64>,
    /// `(2−2σ)/(1−2σ) − β`.
    pub omega_limit: f64,
    /// `β − 2σ/(1−2σ)`, the Hölder exponent of the dual solution.
    pub beta0: f64,
    /// `β > 2σ/(1−2σ)`; outside it the sequences are computed but unsupported.
    pub in_regime: bool,
    pub strictly_decreasing: bool,
    pub omega_in_range: bool,
    pub limit_error: f64,
    /// `Π_n = Π_{k=1}^n 1/ω_k` at the last step.
    pub pi_last: f64,
    /// `Σ_n = Π_n + Σ_{k=1}^n Π_n/Π_k` at the last step, and its bound.
    pub sigma_last: f64,
    pub sigma_bound: f64,
    /// `|C_n − C_{n−1}|` at the last step.
    pub c_increment: f64,
}

/// One step of the exponent map `ω ↦ 2ω/((β+ω)(1−2σ)+2σ)`.
pub fn recursion_map(two_sigma: f64, beta: f64, omega: f64) -> f64 {
    2.0 * omega / ((beta + omega) * (1.0 - two_sigma) + two_sigma)
}

/// Iterate `ω_{n+1} = 2ω_n/((β+ω_n)(1−2σ)+2σ)` from `ω₀ = 2` together with
/// `C_{n+1} = max{1, 32·C·T·C_n^{1/ω_n}}` from `C₀ = c0`.
pub fn bootstrap_recursion(two_sigma: f64, beta: f64, c: f64, horizon: f64, c0: f64, n_max: usize) -> Result<ExponentState> {
    if !(two_sigma > 0.0 && two_sigma < 1.0) {
        return Err(Error::Regularity(format!("2σ must lie in (0, 1), got {two_sigma}")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Regularity(format!("β must lie in (0, 1], got {beta}")));
    }
    if !(c > 0.0 && horizon > 0.0 && c0.is_finite()) {
        return Err(Error::Regularity("C and T must be positive".into()));
    }
    let mut omega = Vec::with_capacity(n_max + 1);
    let mut c_seq = Vec::with_capacity(n_max + 1);
    omega.push(2.0);
    c_seq.push(c0.max(1.0));
    let factor = 32.0 * c * horizon;
    for n in 0..n_max {
        omega.push(recursion_map(two_sigma, beta, omega[n]));
        c_seq.push((factor * c_seq[n].powf(1.0 / omega[n])).max(1.0));
    }
    let omega_limit = (2.0 - two_sigma) / (1.0 - two_sigma) - beta;
    let beta0 = beta - two_sigma / (1.0 - two_sigma);

    // Π_n and Σ_n with Π_k/Π_n accumulated backwards to avoid underflow
    let mut pi = 1.0;
    for w in &omega[1..] {
        pi /= w;
    }
    let mut tail = 0.0;
    let mut prod = 1.0;
    for w in omega[1..].iter().rev() {
        tail += prod;
        prod /= w;
    }
    let sigma_last = pi + tail;

    let last = omega[n_max];
    Ok(ExponentState {
        two_sigma,
        beta,
        c,
        horizon,
        strictly_decreasing: omega.windows(2).all(|w| w[1] < w[0] || (w[0] - omega_limit).abs() < 1e-15),
        omega_in_range: omega.iter().all(|&w| w > 1.0 && w <= 2.0),
        in_regime: beta > two_sigma / (1.0 - two_sigma),
        limit_error: (last - omega_limit).abs(),
        pi_last: pi,
        sigma_last,
        sigma_bound: 1.0 + (1.0 - two_sigma) / (1.0 - beta * (1.0 - two_sigma)),
        c_increment: if n_max > 0 { (c_seq[n_max] - c_seq[n_max - 1]).abs() } else { f64::INFINITY },
        omega,
        c_seq,
        omega_limit,
        beta0,
    })
}

/// `2σ + 2σ/(1−2σ)` (or `2σ + 2σ/(1−σ)` in the symmetric case): the lower
/// end of the drift exponents for which the FP equation is uniquely solvable.
pub fn fp_beta_lower(two_sigma: f64, symmetric: bool) -> f64 {
    two_sigma + dual_loss(two_sigma, symmetric)
}

/// Exponent lost by the dual equation: `2σ/(1−2σ)`, or `2σ/(1−σ)` if symmetric.
pub fn dual_loss(two_sigma: f64, symmetric: bool) -> f64 {
    if symmetric {
        two_sigma / (1.0 - 0.5 * two_sigma)
    } else {
        two_sigma / (1.0 - two_sigma)
    }
}

/// Left side of the MFG uniqueness condition `(2σ/(α−2σ))(1 + 1/(1−2σ)) < γ`
/// (`1−σ` in place of `1−2σ` when symmetric).
pub fn mfg_threshold_lhs(two_sigma: f64, alpha: f64, symmetric: bool) -> f64 {
    let denom = if symmetric { 1.0 - 0.5 * two_sigma } else { 1.0 - two_sigma };
    two_sigma / (alpha - two_sigma) * (1.0 + 1.0 / denom)
}

/// Upper end of the admissible orders for the FP uniqueness interval.
pub fn fp_order_cap(symmetric: bool) -> f64 {
    if symmetric {
        (5.0 - 17f64.sqrt()) / 2.0
    } else {
        (3.0 - 5f64.sqrt()) / 2.0
    }
}

/// Order at which the `γ = α = 1` MFG condition flips.
pub fn mfg_order_cap(symmetric: bool) -> f64 {
    if symmetric {
        (7.0 - 33f64.sqrt()) / 4.0
    } else {
        (2.0 - 2f64.sqrt()) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub two_sigma: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub symmetric: bool,
    pub mfg_lhs: f64,
    /// `γ − lhs`.
    pub mfg_margin: f64,
    pub mfg_unique: Verdict,
    /// Open lower end of the drift-exponent interval `(lower, 1]`.
    pub fp_beta_lower: f64,
    /// `1 − lower`.
    pub fp_margin: f64,
    pub fp_interval_nonempty: Verdict,
    pub fp_order_cap: f64,
    /// Verdicts recomputed in exact rational arithmetic from the binary
    /// values of the inputs.
    pub exact: ExactVerdicts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactVerdicts {
    pub mfg_unique: Verdict,
    pub fp_interval_nonempty: Verdict,
}

pub fn uniqueness_thresholds(two_sigma: f64, alpha: f64, gamma: f64, symmetric: bool) -> Result<ThresholdReport> {
    if !(two_sigma > 0.0 && two_sigma < 1.0) {
        return Err(Error::Regularity(format!("2σ must lie in (0, 1), got {two_sigma}")));
    }
    if !(alpha > two_sigma && alpha <= 1.0) {
        return Err(Error::Regularity(format!("α must lie in (2σ, 1], got α = {alpha}, 2σ = {two_sigma}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Regularity(format!("γ must be positive, got {gamma}")));
    }
    let mfg_lhs = mfg_threshold_lhs(two_sigma, alpha, symmetric);
    let lower = fp_beta_lower(two_sigma, symmetric);
    Ok(ThresholdReport {
        two_sigma,
        alpha,
        gamma,
        symmetric,
        mfg_lhs,
        mfg_margin: gamma - mfg_lhs,
        mfg_unique: Verdict::from_margin(gamma - mfg_lhs),
        fp_beta_lower: lower,
        fp_margin: 1.0 - lower,
        fp_interval_nonempty: Verdict::from_margin(1.0 - lower),
        fp_order_cap: fp_order_cap(symmetric),
        exact: exact_thresholds(&rational(two_sigma), &rational(alpha), &rational(gamma), symmetric),
    })
}

/// Whether a drift with exponent `β` lies in the FP uniqueness interval.
pub fn fp_unique_for_beta(two_sigma: f64, beta: f64, symmetric: bool) -> Verdict {
    Verdict::from_margin(beta - fp_beta_lower(two_sigma, symmetric))
}

/// Exact value of a finite double.
pub fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite input")
}

/// Threshold verdicts in exact arithmetic.
pub fn exact_thresholds(two_sigma: &BigRational, alpha: &BigRational, gamma: &BigRational, symmetric: bool) -> ExactVerdicts {
    let one = BigRational::one();
    let two = BigRational::from_integer(BigInt::from(2));
    let denom = if symmetric { &one - two_sigma / &two } else { &one - two_sigma };
    let lhs = two_sigma / (alpha - two_sigma) * (&one + &one / &denom);
    let lower = two_sigma + two_sigma / &denom;
    ExactVerdicts {
        mfg_unique: Verdict::from_exact(&(gamma - lhs)),
        fp_interval_nonempty: Verdict::from_exact(&(&one - lower)),
    }
}

/// Locate, among doubles, the largest order for which the exact verdict
/// still passes, by bisection on `[lo, hi]` with `pass(lo)` and `!pass(hi)`.
pub fn locate_flip(mut lo: f64, mut hi: f64, pass: impl Fn(f64) -> bool) -> f64 {
    assert!(pass(lo) && !pass(hi), "bracket does not straddle the flip point");
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return lo;
        }
        if pass(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Critical control exponent `q_c(σ) = (1+σ)/(2σ(2−σ))` for `σ ∈ (0, 1/2]`.
pub fn critical_q(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma <= 0.5) {
        return Err(Error::Regularity(format!("σ must lie in (0, 1/2], got {sigma}")));
    }
    Ok((1.0 + sigma) / (2.0 * sigma * (2.0 - sigma)))
}

/// The three balancing exponents as functions of `a` (for `r = ε^a`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub two_sigma: f64,
    pub beta: f64,
    pub omega: f64,
    pub symmetric: bool,
    /// `(slope, intercept)` of `(2−2σ)a−1`, `(1−2σ)a+1/ω−1`, `−2σa+β/ω`.
    pub lines: [(f64, f64); 3],
    /// Maximiser of the lower envelope.
    pub a_star: f64,
    /// Value of the lower envelope at `a_star`.
    pub value: f64,
    /// `a_star == (β+ω−1)/ω`, expected whenever `β + ω > 2`.
    pub second_intersection: bool,
    /// Interval of `a` compatible with `r^{2σ} = ε^{β/2}`; empty if `lo > hi`.
    pub first_step_interval: (f64, f64),
}

impl ScalingReport {
    pub fn envelope(&self, a: f64) -> f64 {
        self.lines.iter().map(|(s, c)| s * a + c).fold(f64::INFINITY, f64::min)
    }
}

pub fn optimal_scaling_exponents(two_sigma: f64, beta: f64, omega: f64, symmetric: bool) -> Result<ScalingReport> {
    if !(two_sigma > 0.0 && two_sigma < 1.0 && beta > 0.0 && beta <= 1.0 && omega > 0.0) {
        return Err(Error::Regularity("scaling parameters out of range".into()));
    }
    let lines = [
        (2.0 - two_sigma, -1.0),
        (1.0 - two_sigma, 1.0 / omega - 1.0),
        (-two_sigma, beta / omega),
    ];
    let a13 = (beta + omega) / (2.0 * omega);
    let a23 = (beta + omega - 1.0) / omega;
    let a_star = a13.max(a23);
    let lower = if symmetric { 1.0 / (2.0 - two_sigma) } else { 1.0 / (2.0 * (1.0 - two_sigma)) };
    let mut report = ScalingReport {
        two_sigma,
        beta,
        omega,
        symmetric,
        lines,
        a_star,
        value: 0.0,
        second_intersection: a23 >= a13,
        first_step_interval: (lower, beta / (2.0 * two_sigma)),
    };
    report.value = report.envelope(a_star);
    Ok(report)
}

impl ExponentState {
    /// Whether `C_n` has settled: last increment below `tol·C_n`.
    pub fn c_is_cauchy(&self, tol: f64) -> bool {
        let last = *self.c_seq.last().unwrap_or(&1.0);
        self.c_increment <= tol * last.max(1.0)
    }
}

/// Sign of `x − y` in exact arithmetic, for callers that need boundary tests.
pub fn exact_cmp(x: &BigRational, y: &BigRational) -> std::cmp::Ordering {
    (x - y).cmp(&BigRational::zero())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recursion_limit_small_order() {
        let s = bootstrap_recursion(0.1, 1.0, 1.0, 1.0, 1.0, 200).unwrap();
        assert!((s.omega_limit - (1.9 / 0.9 - 1.0)).abs() < 1e-15);
        assert!((s.beta0 - (1.0 - 0.1 / 0.9)).abs() < 1e-15);
        assert!(s.limit_error < 1e-10);
        assert!(s.strictly_decreasing && s.omega_in_range && s.in_regime);
        assert!(s.sigma_last <= s.sigma_bound);
        assert!(s.pi_last < 1e-8);
        // C_n contracts at rate 1/ω_∞ ≈ 0.9 per step
        assert!(!s.c_is_cauchy(1e-12));
        let long = bootstrap_recursion(0.1, 1.0, 1.0, 1.0, 1.0, 500).unwrap();
        assert!(long.c_is_cauchy(1e-12));
    }

    #[test]
    fn limit_is_fixed_point() {
        for (x, b) in [(0.1, 1.0), (0.3, 0.9), (0.05, 0.2)] {
            let lim = (2.0 - x) / (1.0 - x) - b;
            assert!((recursion_map(x, b, lim) - lim).abs() < 1e-14);
        }
    }

    #[test]
    fn recursion_outside_regime_is_flagged() {
        let s = bootstrap_recursion(0.4, 0.5, 1.0, 1.0, 1.0, 50).unwrap();
        assert!(!s.in_regime);
        assert!(bootstrap_recursion(1.0, 0.5, 1.0, 1.0, 1.0, 5).is_err());
    }

    #[test]
    fn remark_boundaries() {
        let r = uniqueness_thresholds(0.2, 1.0, 1.0, false).unwrap();
        assert_eq!(r.mfg_unique, Verdict::Pass);
        assert_eq!(r.exact.mfg_unique, Verdict::Pass);
        // 8σ(1−σ) = 1 exactly at the flip point
        let x = mfg_order_cap(false);
        let s = 0.5 * x;
        assert!((8.0 * s * (1.0 - s) - 1.0).abs() < 1e-14);
        let y = mfg_order_cap(true);
        let s = 0.5 * y;
        assert!((s * (7.0 - 4.0 * s) - 1.0).abs() < 1e-14);
        for sym in [false, true] {
            let cap = mfg_order_cap(sym);
            let flip = locate_flip(0.01, 0.5, |x| {
                exact_thresholds(&rational(x), &BigRational::one(), &BigRational::one(), sym).mfg_unique.passed()
            });
            assert!((flip - cap).abs() < 1e-12, "{sym}: {flip} vs {cap}");
        }
    }

    #[test]
    fn symmetric_half_holder_example() {
        let r = uniqueness_thresholds(0.2, 1.0, 0.5, true).unwrap();
        assert!((r.mfg_lhs - 0.25 * (1.0 + 1.0 / 0.9)).abs() < 1e-15);
        assert_eq!(r.mfg_unique, Verdict::Fail);
    }

    #[test]
    fn fp_interval_caps() {
        for sym in [false, true] {
            let cap = fp_order_cap(sym);
            assert!((fp_beta_lower(cap, sym) - 1.0).abs() < 1e-14);
            let flip = locate_flip(0.01, 0.9, |x| {
                let one = BigRational::one();
                exact_thresholds(&rational(x), &one, &one, sym).fp_interval_nonempty.passed()
            });
            assert!((flip - cap).abs() < 1e-12);
        }
        for k in 1..10_000 {
            let x = fp_order_cap(false) * k as f64 / 10_000.0;
            assert!(fp_beta_lower(x, false) < 1.0);
            let y = fp_order_cap(true) * k as f64 / 10_000.0;
            assert!(fp_beta_lower(y, true) < 1.0);
        }
    }

    #[test]
    fn boundary_is_reported() {
        // 2σ = 1/4, α = 1: lhs = (1/3)(1 + 4/3) = 7/9
        let r = uniqueness_thresholds(0.25, 1.0, 7.0 / 9.0, false).unwrap();
        assert_eq!(r.mfg_unique, Verdict::Boundary);
        let one = BigRational::one();
        let quarter = BigRational::new(1.into(), 4.into());
        let g = BigRational::new(7.into(), 9.into());
        assert_eq!(exact_thresholds(&quarter, &one, &g, false).mfg_unique, Verdict::Boundary);
    }

    #[test]
    fn critical_exponent() {
        assert_eq!(critical_q(0.5).unwrap(), 1.0);
        let qc = critical_q(0.1).unwrap();
        assert!((qc - 1.1 / (0.2 * 1.9)).abs() < 1e-14);
        let check = |q: f64| uniqueness_thresholds(0.2, 1.0, 1.0 / (q - 1.0), true).unwrap().mfg_unique;
        assert_eq!(check(2.8), Verdict::Pass);
        assert_eq!(check(3.0), Verdict::Fail);
        let mut prev = f64::INFINITY;
        for k in 1..=500 {
            let q = critical_q(k as f64 * 1e-3).unwrap();
            assert!(q < prev);
            prev = q;
        }
        assert!(critical_q(1e-6).unwrap() > 1e5);
        assert!(critical_q(0.6).is_err());
    }

    #[test]
    fn scaling_intersection() {
        let r = optimal_scaling_exponents(0.1, 1.0, 2.0, false).unwrap();
        assert_eq!(r.a_star, 1.0);
        assert!(r.second_intersection);
        // brute force max-min over a ∈ [0, 3]
        let (mut best_a, mut best) = (0.0, f64::NEG_INFINITY);
        for k in 0..=30_000 {
            let a = k as f64 * 1e-4;
            let v = r.envelope(a);
            if v > best {
                best = v;
                best_a = a;
            }
        }
        assert!((best_a - r.a_star).abs() <= 1e-4);
        assert!((best - r.value).abs() < 1e-3);
        // first step: ω = 2 gives r = ε^{(β+1)/2}
        for beta in [0.3, 0.7, 1.0] {
            let r = optimal_scaling_exponents(0.1, beta, 2.0, false).unwrap();
            assert!((2.0 * r.a_star - (beta + 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn first_step_interval_nonempty_iff_regime() {
        for i in 1..40 {
            let x = i as f64 * 0.01;
            for j in 1..=50 {
                let beta = j as f64 * 0.02;
                let r = optimal_scaling_exponents(x, beta, 2.0, false).unwrap();
                let (lo, hi) = r.first_step_interval;
                let margin = beta - x / (1.0 - x);
                if margin.abs() > 1e-12 {
                    assert_eq!(lo <= hi, margin > 0.0, "x={x} β={beta}");
                }
            }
        }
    }

    #[test]
    fn verdicts_monotone_in_gamma() {
        for i in 1..30 {
            let x = i as f64 * 0.01;
            let mut was_pass = false;
            for j in 1..=100 {
                let v = uniqueness_thresholds(x, 1.0, j as f64 * 0.01, false).unwrap().mfg_unique;
                if was_pass {
                    assert_eq!(v, Verdict::Pass);
                }
                was_pass = v == Verdict::Pass;
            }
        }
    }
}
