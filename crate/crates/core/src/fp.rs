//! Forward Fokker–Planck solver `∂_t m − 𝓛*(b m) = 0`, the dual equation
//! `∂_t w − b𝓛w = 0` and the duality residual between them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_len, pairing, Grid, SpaceTimeField};
use crate::holder::{fit_from_modulus, oscillation_modulus, seminorm_from_modulus};
use crate::operator::DiscreteOperator;
use crate::regularity::{fp_beta_lower, fp_unique_for_beta, Verdict};

/// Tolerance on the total mass of a grid measure.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Nonnegative grid masses summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    mass: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::Invalid("empty measure".into()));
        }
        if let Some(bad) = mass.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Invalid(format!("measure has entry {bad}")));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Invalid(format!("measure has total mass {total}")));
        }
        Ok(Self { mass })
    }

    /// Normalise nonnegative weights to a probability vector.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Invalid("weights must be nonnegative with positive finite total".into()));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn point_mass(n: usize, i: usize) -> Self {
        let mut mass = vec![0.0; n];
        mass[i % n] = 1.0;
        Self { mass }
    }

    pub fn uniform(n: usize) -> Self {
        Self { mass: vec![1.0 / n as f64; n] }
    }

    /// Periodic Gaussian bump centred at `x0` with standard deviation `width`.
    pub fn gaussian(grid: &Grid, x0: f64, width: f64) -> Result<Self> {
        let w: Vec<f64> = (0..grid.n())
            .map(|i| {
                let d = crate::grid::torus_distance(grid.x(i), x0);
                (-0.5 * (d / width).powi(2)).exp()
            })
            .collect();
        Self::from_weights(&w)
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn n(&self) -> usize {
        self.mass.len()
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Convex combination `(1−τ)·self + τ·other`.
    pub fn blend(&self, other: &Self, tau: f64) -> Result<Self> {
        check_len(self.n(), other.n())?;
        Ok(Self { mass: self.mass.iter().zip(&other.mass).map(|(a, b)| (1.0 - tau) * a + tau * b).collect() })
    }

    /// Periodic convolution with a Gaussian of the given width.
    pub fn mollify(&self, width: f64) -> Result<Self> {
        if width <= 0.0 {
            return Ok(self.clone());
        }
        let n = self.n();
        let h = 1.0 / n as f64;
        let kernel: Vec<f64> = (0..n)
            .map(|j| {
                let d = crate::grid::torus_distance(j as f64 * h, 0.0);
                (-0.5 * (d / width).powi(2)).exp()
            })
            .collect();
        let norm: f64 = kernel.iter().sum();
        let mut out = vec![0.0; n];
        for (i, &m) in self.mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (j, k) in kernel.iter().enumerate() {
                out[(i + j) % n] += m * k / norm;
            }
        }
        Self::from_weights(&out)
    }
}

/// Discrete total variation `Σ_i |μ_i − ν_i|`.
pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Dual-Lipschitz distance on the unit circle, `min_c h·Σ_i |F_i − c|` with
/// `F` the cumulative sum of `a − b`.
pub fn flat_distance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut cum = Vec::with_capacity(n);
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x - y;
        cum.push(acc);
    }
    let mut sorted = cum.clone();
    sorted.sort_by(f64::total_cmp);
    let c = sorted[n / 2];
    cum.iter().map(|f| (f - c).abs()).sum::<f64>() / n as f64
}

/// Sampled drift `b ∈ [0, B]` with measured Hölder data.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftField {
    b: SpaceTimeField,
    bound: f64,
    beta_hat: f64,
    seminorm: f64,
}

/// Lag window used for the drift exponent regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub delta_min: f64,
    pub delta_max: f64,
}

impl FitWindow {
    pub fn for_grid(n: usize) -> Self {
        Self { delta_min: 2.0 / n as f64, delta_max: 1.0 / 16.0 }
    }
}

impl DriftField {
    pub fn new(b: SpaceTimeField) -> Result<Self> {
        let window = FitWindow::for_grid(b.n_space());
        Self::with_window(b, window)
    }

    pub fn with_window(b: SpaceTimeField, window: FitWindow) -> Result<Self> {
        if !b.is_finite() {
            return Err(Error::NonFinite { module: "fp", detail: "drift".into() });
        }
        if b.min() < 0.0 {
            return Err(Error::Invalid(format!("drift must be nonnegative, min is {}", b.min())));
        }
        let n = b.n_space();
        let mut beta_hat = 1.0f64;
        let mut moduli = Vec::with_capacity(b.n_times());
        for row in b.rows() {
            let osc = oscillation_modulus(row);
            beta_hat = beta_hat.min(fit_from_modulus(&osc, n, window.delta_min, window.delta_max).exponent);
            moduli.push(osc);
        }
        let beta_hat = beta_hat.clamp(1e-6, 1.0);
        let seminorm = moduli.iter().map(|o| seminorm_from_modulus(o, n, beta_hat)).fold(0.0, f64::max);
        Ok(Self { bound: b.max(), b, beta_hat, seminorm })
    }

    /// Drift with the bound checked but no exponent measurement; `beta_hat`
    /// and `seminorm` are NaN. Used inside fixed-point loops.
    pub fn unmeasured(b: SpaceTimeField) -> Result<Self> {
        if !b.is_finite() {
            return Err(Error::NonFinite { module: "fp", detail: "drift".into() });
        }
        if b.min() < 0.0 {
            return Err(Error::Invalid(format!("drift must be nonnegative, min is {}", b.min())));
        }
        Ok(Self { bound: b.max(), b, beta_hat: f64::NAN, seminorm: f64::NAN })
    }

    /// Measure the Hölder data of an [`unmeasured`](Self::unmeasured) drift.
    pub fn measured(self) -> Result<Self> {
        Self::new(self.b)
    }

    /// Constant drift `b ≡ value`.
    pub fn constant(grid: &Grid, value: f64) -> Result<Self> {
        Self::new(SpaceTimeField::filled(grid, value))
    }

    pub fn field(&self) -> &SpaceTimeField {
        &self.b
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn beta_hat(&self) -> f64 {
        self.beta_hat
    }

    pub fn seminorm(&self) -> f64 {
        self.seminorm
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        self.b.slice(k)
    }
}

/// Random periodic field with spectral envelope `|k|^{−(β+1/2)}`, rescaled
/// to `[lo, lo + amplitude]`.
pub fn spectral_field(n: usize, beta: f64, lo: f64, amplitude: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut spec = vec![Complex::new(0.0, 0.0); n];
    for k in 1..n / 2 {
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        let env = (k as f64).powf(-(beta + 0.5));
        spec[k] = Complex::new(a * env, b * env);
        spec[n - k] = spec[k].conj();
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(n).process(&mut spec);
    let raw: Vec<f64> = spec.iter().map(|c| c.re).collect();
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (max - min).max(f64::MIN_POSITIVE);
    raw.iter().map(|v| lo + amplitude * (v - min) / span).collect()
}

/// Drift interpolating linearly in time between two independent spectral
/// fields with envelope exponent `beta`, so that it varies in time but keeps
/// its spatial regularity.
///
/// The sup-modulus exponent measured on such fields sits below `beta` by a
/// logarithmic correction; use [`calibrate_drift`] to hit a measured target.
pub fn generate_drift(grid: &Grid, beta: f64, lo: f64, amplitude: f64, seed: u64) -> Result<DriftField> {
    let (a, b) = drift_endpoints(grid.n(), beta, lo, amplitude, seed)?;
    DriftField::new(interpolate_rows(grid, &a, &b)?)
}

fn drift_endpoints(n: usize, beta: f64, lo: f64, amplitude: f64, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(beta > 0.0 && beta.is_finite()) || lo < 0.0 || amplitude < 0.0 {
        return Err(Error::Invalid("drift needs a positive envelope exponent and nonnegative range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = spectral_field(n, beta, lo, amplitude, &mut rng);
    let b = spectral_field(n, beta, lo, amplitude, &mut rng);
    Ok((a, b))
}

fn interpolate_rows(grid: &Grid, a: &[f64], b: &[f64]) -> Result<SpaceTimeField> {
    let horizon = grid.horizon();
    let rows = (0..=grid.n_t())
        .map(|k| {
            let s = grid.t(k) / horizon;
            a.iter().zip(b).map(|(x, y)| (1.0 - s) * x + s * y).collect()
        })
        .collect();
    SpaceTimeField::from_rows(rows)
}

/// Generated drift together with its envelope exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedDrift {
    pub drift: DriftField,
    pub envelope: f64,
}

/// Bisect on the envelope exponent until the measured exponent of the
/// generated drift is within `tol` of `target`.
pub fn calibrate_drift(grid: &Grid, target: f64, lo: f64, amplitude: f64, seed: u64, tol: f64) -> Result<CalibratedDrift> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Invalid(format!("target exponent must lie in (0, 1), got {target}")));
    }
    let measure = |env: f64| -> Result<f64> { Ok(generate_drift(grid, env, lo, amplitude, seed)?.beta_hat()) };
    let (mut a, mut b) = (0.05, 3.0);
    let mut env = 0.5 * (a + b);
    for _ in 0..40 {
        env = 0.5 * (a + b);
        let got = measure(env)?;
        if (got - target).abs() <= tol {
            break;
        }
        if got < target {
            a = env;
        } else {
            b = env;
        }
    }
    Ok(CalibratedDrift { drift: generate_drift(grid, env, lo, amplitude, seed)?, envelope: env })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpOptions {
    /// Target for `dt·B·W`; must not exceed one for positivity.
    pub theta: f64,
    pub max_substeps: usize,
    /// Extra refinement factor on top of the CFL count.
    pub refine: usize,
}

impl Default for FpOptions {
    fn default() -> Self {
        Self { theta: 0.9, max_substeps: 1 << 16, refine: 1 }
    }
}

fn substeps_for(dt: f64, bound: f64, w: f64, opts: &FpOptions) -> Result<usize> {
    if !(opts.theta > 0.0 && opts.theta <= 1.0) {
        return Err(Error::Invalid(format!("CFL target must lie in (0, 1], got {}", opts.theta)));
    }
    let s = ((dt * bound * w / opts.theta).ceil() as usize).max(1) * opts.refine.max(1);
    if s > opts.max_substeps {
        return Err(Error::Cfl { module: "fp", detail: format!("{s} sub-steps needed, limit is {}", opts.max_substeps) });
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpSolution {
    /// Row `k` is `m(t_k)`.
    pub m: SpaceTimeField,
    pub substeps: usize,
    /// Largest change of total mass over one time step.
    pub max_mass_defect: f64,
    pub min_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpSummary {
    pub substeps: usize,
    pub max_mass_defect: f64,
    pub min_value: f64,
}

impl FpSolution {
    pub fn measure(&self, k: usize) -> Result<DiscreteMeasure> {
        DiscreteMeasure::new(self.m.slice(k).to_vec())
    }

    pub fn summary(&self) -> FpSummary {
        FpSummary { substeps: self.substeps, max_mass_defect: self.max_mass_defect, min_value: self.min_value }
    }
}

/// `out_i = m_i(1 − dt·b_i·W) + dt·Σ_j w_j b_{i−j} m_{i−j}`, i.e.
/// `m + dt·𝓛_hᵀ(b ⊙ m)` written with nonnegative coefficients.
pub fn fp_step(op: &DiscreteOperator, b: &[f64], m: &[f64], dt: f64, y: &mut [f64], out: &mut [f64]) {
    let n = m.len();
    let w = op.total_weight();
    for i in 0..n {
        y[i] = b[i] * m[i];
        out[i] = 0.0;
    }
    for &(j, wj) in op.nonzero_weights() {
        let (head, tail) = out.split_at_mut(j);
        for (i, o) in head.iter_mut().enumerate() {
            *o += wj * y[i + n - j];
        }
        for (k, o) in tail.iter_mut().enumerate() {
            *o += wj * y[k];
        }
    }
    for i in 0..n {
        out[i] = m[i] * (1.0 - dt * b[i] * w) + dt * out[i];
    }
}

pub fn solve_fp(grid: &Grid, op: &DiscreteOperator, b: &DriftField, m0: &DiscreteMeasure) -> Result<FpSolution> {
    solve_fp_with(grid, op, b, m0, &FpOptions::default())
}

pub fn solve_fp_with(
    grid: &Grid,
    op: &DiscreteOperator,
    b: &DriftField,
    m0: &DiscreteMeasure,
    opts: &FpOptions,
) -> Result<FpSolution> {
    check_len(grid.n(), op.n())?;
    check_len(grid.n(), m0.n())?;
    b.field().check_grid(grid)?;
    let substeps = substeps_for(grid.dt(), b.bound(), op.total_weight(), opts)?;
    let dt = grid.dt() / substeps as f64;
    let n = grid.n();
    let mut m = SpaceTimeField::zeros(grid);
    m.slice_mut(0).copy_from_slice(m0.masses());
    let mut cur = m0.masses().to_vec();
    let mut next = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut max_mass_defect = 0.0f64;
    let mut min_value = cur.iter().copied().fold(f64::INFINITY, f64::min);
    for k in 0..grid.n_t() {
        let before: f64 = cur.iter().sum();
        for _ in 0..substeps {
            fp_step(op, b.slice(k), &cur, dt, &mut y, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        let after: f64 = cur.iter().sum();
        if !after.is_finite() {
            return Err(Error::NonFinite { module: "fp", detail: format!("mass at t = {}", grid.t(k + 1)) });
        }
        max_mass_defect = max_mass_defect.max((after - before).abs());
        min_value = cur.iter().copied().fold(min_value, f64::min);
        m.slice_mut(k + 1).copy_from_slice(&cur);
    }
    Ok(FpSolution { m, substeps, max_mass_defect, min_value })
}

/// Stepping of the dual equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualMode {
    /// Plain explicit scheme for the time-reversed problem with
    /// `b̃(s) = b(t₀ − s)`.
    Independent,
    /// Transpose of the FP step, so that `⟨m^n, w^n⟩` is constant in `n`.
    ExactAdjoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualDirection {
    /// `∂_t w − b𝓛w = 0` on `[0, T]` with `w(0) = φ`.
    ForwardFromZero,
    /// `∂_t w + b𝓛w = 0` on `[0, t_{k0}]` with `w(t_{k0}) = φ`.
    BackwardFrom { k0: usize, mode: DualMode },
}

/// `out = w + dt·b ⊙ 𝓛_h w`.
fn dual_step(op: &DiscreteOperator, b: &[f64], w: &[f64], dt: f64, lap: &mut [f64], out: &mut [f64]) -> Result<()> {
    op.apply_into(w, lap)?;
    for i in 0..w.len() {
        out[i] = w[i] + dt * b[i] * lap[i];
    }
    Ok(())
}

/// Solve the dual equation. Forward runs return `n_t + 1` rows; backward runs
/// return rows `0..=k0`.
pub fn solve_dual(
    grid: &Grid,
    op: &DiscreteOperator,
    b: &DriftField,
    phi: &[f64],
    direction: DualDirection,
) -> Result<SpaceTimeField> {
    solve_dual_with(grid, op, b, phi, direction, &FpOptions::default())
}

pub fn solve_dual_with(
    grid: &Grid,
    op: &DiscreteOperator,
    b: &DriftField,
    phi: &[f64],
    direction: DualDirection,
    opts: &FpOptions,
) -> Result<SpaceTimeField> {
    check_len(grid.n(), op.n())?;
    check_len(grid.n(), phi.len())?;
    b.field().check_grid(grid)?;
    let substeps = substeps_for(grid.dt(), b.bound(), op.total_weight(), opts)?;
    let dt = grid.dt() / substeps as f64;
    let n = grid.n();
    let mut cur = phi.to_vec();
    let mut next = vec![0.0; n];
    let mut lap = vec![0.0; n];
    match direction {
        DualDirection::ForwardFromZero => {
            let mut rows = vec![cur.clone()];
            for k in 0..grid.n_t() {
                for _ in 0..substeps {
                    dual_step(op, b.slice(k), &cur, dt, &mut lap, &mut next)?;
                    std::mem::swap(&mut cur, &mut next);
                }
                rows.push(cur.clone());
            }
            SpaceTimeField::from_rows(rows)
        }
        DualDirection::BackwardFrom { k0, mode } => {
            if k0 == 0 || k0 > grid.n_t() {
                return Err(Error::Invalid(format!("dual start index {k0} outside 1..={}", grid.n_t())));
            }
            let mut rows = vec![Vec::new(); k0 + 1];
            rows[k0] = cur.clone();
            for k in (0..k0).rev() {
                // exact adjoint of the FP step k → k+1 uses b(t_k); the reversed
                // explicit scheme evaluates b̃ at the start of its step, b(t_{k+1})
                let bk = match mode {
                    DualMode::ExactAdjoint => b.slice(k),
                    DualMode::Independent => b.slice(k + 1),
                };
                for _ in 0..substeps {
                    dual_step(op, bk, &cur, dt, &mut lap, &mut next)?;
                    std::mem::swap(&mut cur, &mut next);
                }
                rows[k] = cur.clone();
            }
            SpaceTimeField::from_rows(rows)
        }
    }
}

/// Grid index of `t0`; `t0` must be a positive grid time.
pub fn time_index(grid: &Grid, t0: f64) -> Result<usize> {
    let k = (t0 / grid.dt()).round();
    if !(k >= 1.0 && k <= grid.n_t() as f64) || (k * grid.dt() - t0).abs() > 1e-9 * grid.horizon() {
        return Err(Error::Invalid(format!("t0 = {t0} is not a positive grid time")));
    }
    Ok(k as usize)
}

/// `|⟨m(t₀), φ⟩ − ⟨m₀, w(0)⟩|` with `w` the dual solution from `w(t₀) = φ`.
pub fn holmgren_residual(
    grid: &Grid,
    op: &DiscreteOperator,
    b: &DriftField,
    m0: &DiscreteMeasure,
    phi: &[f64],
    t0: f64,
    mode: DualMode,
) -> Result<f64> {
    let k0 = time_index(grid, t0)?;
    let m = solve_fp(grid, op, b, m0)?;
    let w = solve_dual(grid, op, b, phi, DualDirection::BackwardFrom { k0, mode })?;
    Ok((pairing(m.m.slice(k0), phi) - pairing(m0.masses(), w.slice(0))).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRun {
    pub label: String,
    /// `sup_t` TV distance to the reference run.
    pub tv: f64,
    /// `sup_t` flat distance to the reference run.
    pub flat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessProbeReport {
    pub beta_hat: f64,
    pub two_sigma: f64,
    pub symmetric: bool,
    pub beta_lower: f64,
    pub verdict: Verdict,
    /// `false` reports "outside the uniqueness regime": distances are
    /// informational only.
    pub in_regime: bool,
    pub substep_runs: Vec<ProbeRun>,
    pub mollified_runs: Vec<ProbeRun>,
    /// Distances of the mollified runs decrease with the mollification width.
    pub contracting: bool,
}

fn sup_distances(a: &SpaceTimeField, b: &SpaceTimeField) -> (f64, f64) {
    a.rows().zip(b.rows()).fold((0.0f64, 0.0f64), |(tv, fl), (x, y)| {
        (tv.max(tv_distance(x, y)), fl.max(flat_distance(x, y)))
    })
}

/// Compare FP runs from `m0` with refined sub-stepping and from Gaussian
/// mollifications of `m0` of widths `scale·2^{−k}`, `k = 0..4`.
pub fn uniqueness_probe(
    grid: &Grid,
    op: &DiscreteOperator,
    b: &DriftField,
    m0: &DiscreteMeasure,
    scale: f64,
) -> Result<UniquenessProbeReport> {
    let meta = op.meta();
    let symmetric = meta.symmetric_at_origin;
    let reference = solve_fp(grid, op, b, m0)?;
    let mut substep_runs = Vec::new();
    for refine in [2, 4] {
        let run = solve_fp_with(grid, op, b, m0, &FpOptions { refine, ..Default::default() })?;
        let (tv, flat) = sup_distances(&reference.m, &run.m);
        substep_runs.push(ProbeRun { label: format!("substeps x{refine}"), tv, flat });
    }
    let mut mollified_runs = Vec::new();
    for k in 0..4 {
        let width = scale * 0.5f64.powi(k);
        let run = solve_fp(grid, op, b, &m0.mollify(width)?)?;
        let (tv, flat) = sup_distances(&reference.m, &run.m);
        mollified_runs.push(ProbeRun { label: format!("mollified {width:.3e}"), tv, flat });
    }
    let contracting = mollified_runs.windows(2).all(|w| w[1].flat <= w[0].flat);
    let verdict = fp_unique_for_beta(meta.two_sigma, b.beta_hat(), symmetric);
    Ok(UniquenessProbeReport {
        beta_hat: b.beta_hat(),
        two_sigma: meta.two_sigma,
        symmetric,
        beta_lower: fp_beta_lower(meta.two_sigma, symmetric),
        verdict,
        in_regime: verdict == Verdict::Pass,
        substep_runs,
        mollified_runs,
        contracting,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{expm, generator_matrix};
    use crate::holder::fit_holder_exponent;
    use crate::levy::LevyMeasureSpec;
    use crate::operator::assemble_operator;
    use rand::Rng;
    use std::f64::consts::PI;

    fn setup(n: usize, t: f64, n_t: usize, two_sigma: f64) -> (Grid, DiscreteOperator) {
        let grid = Grid::new(n, t, n_t).unwrap();
        let op = assemble_operator(&LevyMeasureSpec::fractional_laplacian(two_sigma).unwrap(), &grid).unwrap();
        (grid, op)
    }

    fn random_measure(n: usize, rng: &mut ChaCha8Rng) -> DiscreteMeasure {
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0f64).powi(4)).collect();
        DiscreteMeasure::from_weights(&w).unwrap()
    }

    #[test]
    fn measure_validation() {
        assert!(DiscreteMeasure::new(vec![0.5, 0.4]).is_err());
        assert!(DiscreteMeasure::new(vec![1.5, -0.5]).is_err());
        assert_eq!(DiscreteMeasure::point_mass(4, 5).masses(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn distances() {
        let a = DiscreteMeasure::point_mass(8, 0);
        let b = DiscreteMeasure::point_mass(8, 2);
        assert_eq!(tv_distance(a.masses(), b.masses()), 2.0);
        assert!((flat_distance(a.masses(), b.masses()) - 0.25).abs() < 1e-15);
        // the short way round the circle
        let c = DiscreteMeasure::point_mass(8, 7);
        assert!((flat_distance(a.masses(), c.masses()) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn zero_drift_is_stationary() {
        let (grid, op) = setup(64, 1.0, 10, 0.3);
        let b = DriftField::constant(&grid, 0.0).unwrap();
        let m0 = DiscreteMeasure::gaussian(&grid, 0.3, 0.05).unwrap();
        let sol = solve_fp(&grid, &op, &b, &m0).unwrap();
        for row in sol.m.rows() {
            assert_eq!(row, m0.masses());
        }
        let w = solve_dual(&grid, &op, &b, m0.masses(), DualDirection::ForwardFromZero).unwrap();
        assert!(w.rows().all(|r| r == m0.masses()));
        let r = holmgren_residual(&grid, &op, &b, &m0, &vec![1.0; 64], 0.5, DualMode::Independent).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn mass_and_positivity() {
        let (grid, op) = setup(128, 1.0, 20, 0.5);
        let b = generate_drift(&grid, 0.7, 0.0, 3.0, 11).unwrap();
        let m0 = DiscreteMeasure::point_mass(128, 17);
        let sol = solve_fp(&grid, &op, &b, &m0).unwrap();
        assert!(sol.max_mass_defect <= 1e-12);
        assert!(sol.min_value >= 0.0);
        for k in 0..=20 {
            assert!((sol.m.slice(k).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_case_matches_matrix_exponential() {
        let n = 64;
        let spec = LevyMeasureSpec::atomic(&[(0.5, 1.0), (-0.5, 1.0)]);
        let err = |n_t: usize| {
            let grid = Grid::new(n, 1.0, n_t).unwrap();
            let op = assemble_operator(&spec, &grid).unwrap();
            let gen = generator_matrix(&op).transpose();
            let m0 = DiscreteMeasure::point_mass(n, 3);
            let sol = solve_fp(&grid, &op, &DriftField::constant(&grid, 1.0).unwrap(), &m0).unwrap();
            let exact = expm(&gen).mul_vec(m0.masses());
            tv_distance(sol.m.slice(n_t), &exact)
        };
        let e1 = err(20);
        let e2 = err(40);
        assert!(e1 < 0.1);
        assert!((e1 / e2 - 2.0).abs() < 0.2, "{e1} {e2}");
    }

    #[test]
    fn dual_maximum_principle_and_oracle() {
        let n = 64;
        let spec = LevyMeasureSpec::atomic(&[(0.25, 1.0), (-0.125, 0.5)]);
        let grid = Grid::new(n, 1.0, 40).unwrap();
        let op = assemble_operator(&spec, &grid).unwrap();
        let phi: Vec<f64> = (0..n).map(|i| (2.0 * PI * i as f64 / n as f64).sin()).collect();
        let w = solve_dual(&grid, &op, &DriftField::constant(&grid, 1.0).unwrap(), &phi, DualDirection::ForwardFromZero)
            .unwrap();
        assert!(w.sup_norm() <= 1.0 + 1e-15);
        let exact = expm(&generator_matrix(&op)).mul_vec(&phi);
        let err = w.slice(40).iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 0.05, "{err}");
        let c = solve_dual(&grid, &op, &generate_drift(&grid, 0.5, 0.0, 2.0, 1).unwrap(), &[2.5; 64], DualDirection::ForwardFromZero)
            .unwrap();
        assert!(c.values().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn transpose_pairing() {
        let (grid, op) = setup(128, 1.0, 1, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..128).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..128).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs = pairing(&op.apply(&x).unwrap(), &y);
        let rhs = pairing(&x, &op.apply_transpose(&y).unwrap());
        assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        let _ = grid;
    }

    #[test]
    fn exact_adjoint_telescopes() {
        let (grid, op) = setup(128, 1.0, 40, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..3 {
            let b = generate_drift(&grid, 0.8, 0.1, 2.0, seed).unwrap();
            let m0 = random_measure(128, &mut rng);
            let phi: Vec<f64> = (0..128).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r = holmgren_residual(&grid, &op, &b, &m0, &phi, 0.75, DualMode::ExactAdjoint).unwrap();
            assert!(r <= 1e-10, "{r}");
        }
    }

    #[test]
    fn independent_mode_defect_is_first_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m0 = random_measure(64, &mut rng);
        let phi: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let residual = |n_t: usize| {
            let (grid, op) = setup(64, 1.0, n_t, 0.3);
            let b = generate_drift(&grid, 0.8, 0.1, 2.0, 21).unwrap();
            holmgren_residual(&grid, &op, &b, &m0, &phi, 0.5, DualMode::Independent).unwrap()
        };
        let r1 = residual(32);
        let r2 = residual(64);
        assert!(r1 > 0.0);
        assert!(r1 / r2 >= 1.8, "{r1} {r2}");
    }

    #[test]
    fn generated_drift_has_target_exponent() {
        let grid = Grid::new(1024, 1.0, 4).unwrap();
        let c = calibrate_drift(&grid, 0.9, 0.0, 1.0, 42, 0.005).unwrap();
        let b = &c.drift;
        assert!(b.bound() <= 1.0 + 1e-12 && b.field().min() >= 0.0);
        assert!((b.beta_hat() - 0.9).abs() < 0.02, "{}", b.beta_hat());
        assert!(c.envelope > 0.9);
        let single = fit_holder_exponent(b.slice(0), 2.0 / 1024.0, 1.0 / 16.0);
        assert!(single.r_squared > 0.9);
    }

    #[test]
    fn probe_zero_drift() {
        let (grid, op) = setup(64, 1.0, 10, 0.2);
        let b = DriftField::constant(&grid, 0.0).unwrap();
        let m0 = DiscreteMeasure::gaussian(&grid, 0.5, 0.1).unwrap();
        let r = uniqueness_probe(&grid, &op, &b, &m0, 0.0).unwrap();
        assert!(r.substep_runs.iter().chain(&r.mollified_runs).all(|p| p.tv == 0.0));
    }

    #[test]
    fn probe_flags_regime() {
        let (grid, op) = setup(128, 0.5, 20, 0.1);
        let b = generate_drift(&grid, 1.0, 0.0, 1.0, 2).unwrap();
        let m0 = DiscreteMeasure::point_mass(128, 0);
        let r = uniqueness_probe(&grid, &op, &b, &m0, 0.05).unwrap();
        assert!(r.in_regime, "{r:?}");
        assert!(r.contracting, "{r:?}");

        let (grid, op) = setup(128, 0.5, 20, 0.6);
        let b = generate_drift(&grid, 0.5, 0.0, 1.0, 2).unwrap();
        let r = uniqueness_probe(&grid, &op, &b, &m0, 0.05).unwrap();
        assert!(!r.in_regime);
    }
}
