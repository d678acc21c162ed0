//! Special functions and quadrature rules used by operator assembly.

use statrs::function::gamma::gamma;

/// Even-index Bernoulli numbers `B_2, B_4, ..., B_20`.
const BERNOULLI_EVEN: [f64; 10] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
];

/// Hurwitz zeta `ζ(s, a) = Σ_{k≥0} (a + k)^{-s}` for `a > 0`, `s ≠ 1`,
/// analytically continued to `s < 1` through Euler–Maclaurin summation.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    assert!(a > 0.0, "hurwitz_zeta needs a > 0");
    assert!((s - 1.0).abs() > 1e-12, "hurwitz_zeta has a pole at s = 1");
    const N: usize = 16;
    let mut sum = 0.0;
    for k in 0..N {
        sum += (a + k as f64).powf(-s);
    }
    let x = a + N as f64;
    sum += x.powf(1.0 - s) / (s - 1.0);
    sum += 0.5 * x.powf(-s);
    // Σ_j B_{2j}/(2j)! · s(s+1)…(s+2j−2) · x^{−s−2j+1}
    let mut rising = s; // s(s+1)…(s+2j−2) for j = 1
    let mut factorial = 2.0; // (2j)!
    let mut power = x.powf(-s - 1.0);
    for (j, b) in BERNOULLI_EVEN.iter().enumerate() {
        let term = b / factorial * rising * power;
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
        let m = 2.0 * (j + 1) as f64;
        rising *= (s + m - 1.0) * (s + m);
        factorial *= (m + 1.0) * (m + 2.0);
        power /= x * x;
    }
    sum
}

/// `ζ(s, a) − ζ(s, b)`, i.e. `Σ_{k≥0} [(a+k)^{-s} − (b+k)^{-s}]`.
pub fn hurwitz_zeta_difference(s: f64, a: f64, b: f64) -> f64 {
    hurwitz_zeta(s, a) - hurwitz_zeta(s, b)
}

/// Normalising constant `C_{1,σ}` of the one-dimensional fractional Laplacian
/// with symbol `|ξ|^{2σ}`, so that `ν(dz) = C_{1,σ} |z|^{-1-2σ} dz`.
pub fn fractional_laplacian_constant(two_sigma: f64) -> f64 {
    let sigma = 0.5 * two_sigma;
    // |Γ(−σ)| = Γ(1−σ)/σ
    sigma * 4f64.powf(sigma) * gamma(0.5 + sigma) / (std::f64::consts::PI.sqrt() * gamma(1.0 - sigma))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

/// Fixed-order Gauss–Legendre rule mapped onto `[a, b]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Self { nodes, weights }
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(mid + half * x)).sum::<f64>()
    }

    /// Integral over `[a, ∞)` for integrands decaying at least like `z^{-1-ε}`
    /// times an exponential, using geometrically growing panels.
    pub fn integrate_to_infinity(&self, a: f64, f: impl Fn(f64) -> f64) -> f64 {
        assert!(a > 0.0);
        let mut total = 0.0;
        let mut lo = a;
        for _ in 0..400 {
            let hi = lo * 2.0;
            let piece = self.integrate(lo, hi, &f);
            total += piece;
            if piece.abs() <= 1e-17 * total.abs() {
                break;
            }
            lo = hi;
        }
        total
    }
}
