//! Control costs `L`, Hamiltonians `F(z) = sup_{ζ≥0} (ζz − L(ζ))` and checks
//! of the regularity hypotheses placed on `F`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::holder::{linear_fit, ExponentFit};

/// A Legendre–Fenchel pair `(L, F)` with `L` defined on `[0, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum ConjugatePair {
    /// `L = χ_{κ}`, `F(z) = κz`: the control is frozen at `κ`.
    Linear { kappa: f64 },
    /// `L = χ_{[0,κ]}`, `F(z) = κz⁺`. Not differentiable at 0.
    CappedLinear { kappa: f64 },
    /// `L = (χ_{[0,κ]} + ε)(ζ²/κ − ζ)`; `C¹` smoothing of the capped pair.
    Smoothed { kappa: f64, epsilon: f64 },
    /// `L = ζ^q/q`, `F(z) = ((q−1)/q)(z⁺)^{q/(q−1)}`.
    Power { q: f64 },
    /// `L = ζ log ζ − ζ`, `F(z) = e^z`.
    Entropic,
    /// `L(ζ) = L₀(ζ − κ)` on `[κ, ∞)`, `F = F₀ + κz`.
    Shifted { kappa: f64, base: Box<ConjugatePair> },
    /// Cost sampled on a control grid; `F` by brute-force maximisation.
    Numeric(NumericPair),
}

/// Sampled cost `(ζ_k, L(ζ_k))` with `L` possibly `+∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericPair {
    pub zeta: Vec<f64>,
    pub cost: Vec<f64>,
}

/// Row tag of the closed-form catalogue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairTag {
    A,
    B,
    C,
    D,
    E,
    F,
}

/// Parameters for [`make_pair`]; unused entries are ignored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairParams {
    pub kappa: Option<f64>,
    pub epsilon: Option<f64>,
    pub q: Option<f64>,
    /// Base pair for the shift combinator.
    pub base: Option<Box<ConjugatePair>>,
}

pub fn make_pair(tag: PairTag, params: &PairParams) -> Result<ConjugatePair> {
    let kappa = || -> Result<f64> {
        let k = params.kappa.ok_or_else(|| Error::Hamiltonian("κ is required".into()))?;
        if k.is_finite() && k > 0.0 {
            Ok(k)
        } else {
            Err(Error::Hamiltonian(format!("κ must be positive, got {k}")))
        }
    };
    let pair = match tag {
        PairTag::A => ConjugatePair::Linear { kappa: kappa()? },
        PairTag::B => ConjugatePair::CappedLinear { kappa: kappa()? },
        PairTag::C => {
            let epsilon = params.epsilon.ok_or_else(|| Error::Hamiltonian("ε is required".into()))?;
            if !(epsilon.is_finite() && epsilon > 0.0) {
                return Err(Error::Hamiltonian(format!("ε must be positive, got {epsilon}")));
            }
            ConjugatePair::Smoothed { kappa: kappa()?, epsilon }
        }
        PairTag::D => {
            let q = params.q.ok_or_else(|| Error::Hamiltonian("q is required".into()))?;
            if !(q.is_finite() && q > 1.0) {
                return Err(Error::Hamiltonian(format!("power cost needs q > 1, got {q}")));
            }
            ConjugatePair::Power { q }
        }
        PairTag::E => ConjugatePair::Entropic,
        PairTag::F => {
            let base = params.base.clone().ok_or_else(|| Error::Hamiltonian("base pair is required".into()))?;
            ConjugatePair::Shifted { kappa: kappa()?, base }
        }
    };
    Ok(pair)
}

impl ConjugatePair {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::Linear { .. } => "linear",
            Self::CappedLinear { .. } => "capped_linear",
            Self::Smoothed { .. } => "smoothed",
            Self::Power { .. } => "power",
            Self::Entropic => "entropic",
            Self::Shifted { .. } => "shifted",
            Self::Numeric(_) => "numeric",
        }
    }

    /// `L(ζ)` for `ζ ≥ 0`; `+∞` outside the effective domain.
    pub fn cost(&self, zeta: f64) -> f64 {
        if zeta < 0.0 {
            return f64::INFINITY;
        }
        match self {
            Self::Linear { kappa } => {
                if zeta == *kappa {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Self::CappedLinear { kappa } => {
                if zeta <= *kappa {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Self::Smoothed { kappa, epsilon } => {
                if zeta <= *kappa {
                    epsilon * (zeta * zeta / kappa - zeta)
                } else {
                    f64::INFINITY
                }
            }
            Self::Power { q } => zeta.powf(*q) / q,
            Self::Entropic => {
                if zeta == 0.0 {
                    0.0
                } else {
                    zeta * zeta.ln() - zeta
                }
            }
            Self::Shifted { kappa, base } => {
                if zeta >= *kappa {
                    base.cost(zeta - kappa)
                } else {
                    f64::INFINITY
                }
            }
            Self::Numeric(p) => {
                // exact grid lookup only; off-grid values are outside the sampled domain
                match p.zeta.iter().position(|z| *z == zeta) {
                    Some(k) => p.cost[k],
                    None => f64::INFINITY,
                }
            }
        }
    }

    /// `F(z)`.
    pub fn hamiltonian(&self, z: f64) -> f64 {
        match self {
            Self::Linear { kappa } => kappa * z,
            Self::CappedLinear { kappa } => kappa * z.max(0.0),
            Self::Smoothed { kappa, epsilon } => {
                if z < -epsilon {
                    0.0
                } else if z < *epsilon {
                    kappa / (4.0 * epsilon) * (z + epsilon).powi(2)
                } else {
                    kappa * z
                }
            }
            Self::Power { q } => (q - 1.0) / q * z.max(0.0).powf(q / (q - 1.0)),
            Self::Entropic => z.exp(),
            Self::Shifted { kappa, base } => base.hamiltonian(z) + kappa * z,
            Self::Numeric(p) => p.sup(z).0,
        }
    }

    /// `F′(z)`; the right derivative where `F` has a kink. Equals the
    /// maximising control `ζ*(z)` whenever the maximiser is unique.
    pub fn derivative(&self, z: f64) -> f64 {
        match self {
            Self::Linear { kappa } => *kappa,
            Self::CappedLinear { kappa } => {
                if z >= 0.0 {
                    *kappa
                } else {
                    0.0
                }
            }
            Self::Smoothed { kappa, epsilon } => {
                if z < -epsilon {
                    0.0
                } else if z < *epsilon {
                    kappa * (z + epsilon) / (2.0 * epsilon)
                } else {
                    *kappa
                }
            }
            Self::Power { q } => z.max(0.0).powf(1.0 / (q - 1.0)),
            Self::Entropic => z.exp(),
            Self::Shifted { kappa, base } => base.derivative(z) + kappa,
            Self::Numeric(p) => p.sup(z).1,
        }
    }

    /// Hölder exponent `γ` of `F′` (1 for constant or Lipschitz `F′`).
    pub fn holder_exponent(&self) -> Option<f64> {
        match self {
            Self::CappedLinear { .. } => None,
            Self::Power { q } => Some((1.0 / (q - 1.0)).min(1.0)),
            Self::Shifted { base, .. } => base.holder_exponent(),
            Self::Numeric(_) => None,
            _ => Some(1.0),
        }
    }

    /// Whether `F ∈ C¹` with Hölder `F′ ≥ 0` holds in closed form.
    pub fn satisfies_a1(&self) -> bool {
        match self {
            Self::CappedLinear { .. } | Self::Numeric(_) => false,
            Self::Shifted { base, .. } => base.satisfies_a1(),
            _ => true,
        }
    }

    /// `inf_ℝ F′` when known in closed form.
    pub fn derivative_infimum(&self) -> Option<f64> {
        match self {
            Self::Linear { kappa } => Some(*kappa),
            Self::CappedLinear { .. } | Self::Smoothed { .. } | Self::Power { .. } | Self::Entropic => Some(0.0),
            Self::Shifted { kappa, base } => base.derivative_infimum().map(|b| b + kappa),
            Self::Numeric(_) => None,
        }
    }

    /// `sup F′` over `[lo, hi]`; `F′` is nondecreasing for every convex pair.
    pub fn derivative_sup_on(&self, lo: f64, hi: f64) -> f64 {
        self.derivative(lo).abs().max(self.derivative(hi).abs())
    }
}

impl NumericPair {
    pub fn new(zeta: Vec<f64>, cost: Vec<f64>) -> Result<Self> {
        if zeta.len() != cost.len() || zeta.is_empty() {
            return Err(Error::Hamiltonian("numeric cost needs equally long nonempty columns".into()));
        }
        if zeta.windows(2).any(|w| w[1] <= w[0]) || zeta[0] < 0.0 {
            return Err(Error::Hamiltonian("control grid must be increasing and nonnegative".into()));
        }
        if cost.iter().all(|c| !c.is_finite()) {
            return Err(Error::Hamiltonian("cost has empty effective domain".into()));
        }
        Ok(Self { zeta, cost })
    }

    /// Parse a two-column CSV `(ζ, L)`; lines starting with `#` and a
    /// non-numeric header are skipped, `inf` marks points outside the domain.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut zeta = Vec::new();
        let mut cost = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let mut cols = line.split(',').map(str::trim);
            let (Some(a), Some(b)) = (cols.next(), cols.next()) else {
                return Err(Error::Hamiltonian(format!("expected two columns in `{line}`")));
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(z), Ok(c)) => {
                    zeta.push(z);
                    cost.push(c);
                }
                _ if zeta.is_empty() => continue,
                _ => return Err(Error::Hamiltonian(format!("unparsable row `{line}`"))),
            }
        }
        Self::new(zeta, cost)
    }

    /// `(max_k ζ_k z − L_k, argmax ζ)`; ties resolve to the smallest control.
    fn sup(&self, z: f64) -> (f64, f64) {
        let mut best = (f64::NEG_INFINITY, 0.0);
        for (&zeta, &c) in self.zeta.iter().zip(&self.cost) {
            if c.is_finite() {
                let v = zeta * z - c;
                if v > best.0 {
                    best = (v, zeta);
                }
            }
        }
        best
    }
}

/// Brute-force conjugate of a sampled cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledConjugate {
    pub z: Vec<f64>,
    pub value: Vec<f64>,
    /// Maximising control at each `z`.
    pub argmax: Vec<f64>,
    /// The supremum was attained at the largest sampled control, so the
    /// value is only a lower bound for the untruncated conjugate.
    pub truncated: Vec<bool>,
}

/// `F(z_i) = max_k (ζ_k z_i − L(ζ_k))` over the sampled controls.
pub fn numeric_conjugate(zeta: &[f64], cost: &[f64], z: &[f64]) -> Result<SampledConjugate> {
    if zeta.len() != cost.len() {
        return Err(Error::DimensionMismatch { expected: zeta.len(), got: cost.len() });
    }
    if zeta.windows(2).any(|w| w[1] <= w[0]) || z.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Hamiltonian("sample grids must be increasing".into()));
    }
    let finite: Vec<usize> = (0..zeta.len()).filter(|&k| cost[k].is_finite()).collect();
    let Some(&last) = finite.last() else {
        return Err(Error::Hamiltonian("cost has empty effective domain".into()));
    };
    let mut out = SampledConjugate {
        z: z.to_vec(),
        value: Vec::with_capacity(z.len()),
        argmax: Vec::with_capacity(z.len()),
        truncated: Vec::with_capacity(z.len()),
    };
    for &zi in z {
        let mut best = (f64::NEG_INFINITY, finite[0]);
        for &k in &finite {
            let v = zeta[k] * zi - cost[k];
            if v > best.0 {
                best = (v, k);
            }
        }
        out.value.push(best.0);
        out.argmax.push(zeta[best.1]);
        out.truncated.push(best.1 == last && last + 1 == zeta.len() && finite.len() > 1);
    }
    Ok(out)
}

/// Regularity report for `F` on a finite working range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub tag: String,
    pub range: (f64, f64),
    /// Regression estimate of the Hölder exponent of `F′`.
    pub gamma_measured: f64,
    pub gamma_fit: Option<ExponentFit>,
    /// `F′` was constant on the range; `γ` reported as 1.
    pub gamma_degenerate: bool,
    pub derivative_min: f64,
    pub derivative_nonnegative: bool,
    /// `F′ ≥ κ > 0` on the sampled range.
    pub strictly_increasing_on_range: bool,
    /// `inf_ℝ F′ > 0`, when known.
    pub strictly_increasing_globally: Option<bool>,
    pub convex: bool,
    pub a1_closed_form: bool,
    pub notes: Vec<String>,
}

/// Sample `F` and `F′` on `[lo, hi]` and check nonnegativity and Hölder
/// regularity of `F′`, strict monotonicity and convexity of `F`.
///
/// The exponent is the slope of `log ω(δ)` against `log δ`, where
/// `ω(δ) = max_z |F′(z+δ) − F′(z)|` and `δ` runs over lags in `[10⁻³, 1]`.
pub fn check_pair(pair: &ConjugatePair, lo: f64, hi: f64, samples: usize) -> Result<PairReport> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) || samples < 3 {
        return Err(Error::Hamiltonian(format!("invalid working range [{lo}, {hi}]")));
    }
    let step = (hi - lo) / (samples - 1) as f64;
    let zs: Vec<f64> = (0..samples).map(|i| lo + i as f64 * step).collect();
    let fp: Vec<f64> = zs.iter().map(|&z| pair.derivative(z)).collect();
    let f: Vec<f64> = zs.iter().map(|&z| pair.hamiltonian(z)).collect();
    let derivative_min = fp.iter().copied().fold(f64::INFINITY, f64::min);

    // Hölder exponent of F′
    let width = hi - lo;
    let mut pts = Vec::new();
    let lags = 25;
    let (dmin, dmax) = (1e-3f64, 1f64.min(0.5 * width));
    for k in 0..lags {
        let delta = dmin * (dmax / dmin).powf(k as f64 / (lags - 1) as f64);
        let omega = zs
            .iter()
            .filter(|&&z| z + delta <= hi)
            .map(|&z| (pair.derivative(z + delta) - pair.derivative(z)).abs())
            .fold(0.0, f64::max);
        if omega > 0.0 {
            pts.push((delta.ln(), omega.ln()));
        }
    }
    let (gamma_measured, gamma_fit, gamma_degenerate) = if pts.len() < 2 {
        (1.0, None, true)
    } else {
        let fit = linear_fit(&pts);
        (fit.exponent.min(1.0), Some(fit), false)
    };

    // midpoint convexity over all sampled pairs with a grid midpoint
    let scale = f.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut convex = true;
    'outer: for i in 0..samples {
        for j in ((i + 2)..samples).step_by(2) {
            let m = (i + j) / 2;
            if f[m] > 0.5 * (f[i] + f[j]) + 1e-12 * scale {
                convex = false;
                break 'outer;
            }
        }
    }

    let mut notes = Vec::new();
    if !pair.satisfies_a1() {
        notes.push("F is not C¹ with Hölder derivative in closed form: fails (A1)".into());
    }
    let global = pair.derivative_infimum().map(|inf| inf > 0.0);
    if derivative_min > 0.0 && global == Some(false) {
        notes.push("F′ > 0 on the range but inf F′ = 0 over ℝ: A1′ fails globally".into());
    }
    Ok(PairReport {
        tag: pair.tag().into(),
        range: (lo, hi),
        gamma_measured,
        gamma_fit,
        gamma_degenerate,
        derivative_min,
        derivative_nonnegative: derivative_min >= 0.0,
        strictly_increasing_on_range: derivative_min > 0.0,
        strictly_increasing_globally: global,
        convex,
        a1_closed_form: pair.satisfies_a1(),
        notes,
    })
}
