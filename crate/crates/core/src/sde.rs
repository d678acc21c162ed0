//! Monte Carlo simulation of `dZ = b(t, Z) dX` on the torus, the gain
//! functional of the time-changed control problem, and the self-similar
//! change of control variables.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp::{DiscreteMeasure, DriftField};
use crate::grid::{check_len, Grid, SpaceTimeField};
use crate::hamiltonian::ConjugatePair;
use crate::levy::LevyMeasureSpec;
use crate::operator::DiscreteOperator;
use crate::special::fractional_laplacian_constant;

/// Paths per RNG stream. Each chunk owns one ChaCha stream derived from the
/// master seed, so results do not depend on the worker count.
pub const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMethod {
    /// Jumps drawn from the discretised measure at total rate `W`.
    CompoundPoisson,
    /// Symmetric `2σ`-stable increments (Chambers–Mallows–Stuck).
    StableIncrement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpSampler {
    method: SamplingMethod,
    /// Signed jump sizes and cumulative rates for the compound Poisson mode.
    jumps: Vec<f64>,
    cumulative: Vec<f64>,
    total_rate: f64,
    /// `X_t = (t·scale)^{1/α} S` with `S` standard symmetric `α`-stable.
    alpha: f64,
    scale: f64,
}

impl JumpSampler {
    /// Compound Poisson sampler for the jump law of a discrete operator.
    pub fn compound_poisson(op: &DiscreteOperator) -> Self {
        let h = op.h();
        let mut jumps = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for &(j, w) in op.nonzero_weights() {
            acc += w;
            jumps.push(op.signed_offset(j) as f64 * h);
            cumulative.push(acc);
        }
        Self { method: SamplingMethod::CompoundPoisson, jumps, cumulative, total_rate: acc, alpha: 0.0, scale: 0.0 }
    }

    /// Stable increments for a symmetric stable spec.
    pub fn stable(spec: &LevyMeasureSpec) -> Result<Self> {
        match *spec {
            LevyMeasureSpec::Stable { two_sigma, c_plus, c_minus } => {
                spec.validate()?;
                if c_plus != c_minus {
                    return Err(Error::Sde("stable increments are only sampled for symmetric measures".into()));
                }
                let c = fractional_laplacian_constant(two_sigma);
                Ok(Self {
                    method: SamplingMethod::StableIncrement,
                    jumps: Vec::new(),
                    cumulative: Vec::new(),
                    total_rate: 0.0,
                    alpha: two_sigma,
                    scale: c_plus / c,
                })
            }
            _ => Err(Error::Sde("stable increments need a stable spec".into())),
        }
    }

    /// Default sampler: stable increments for symmetric stable specs,
    /// compound Poisson on the discretised measure otherwise.
    pub fn for_spec(spec: &LevyMeasureSpec, op: &DiscreteOperator) -> Result<Self> {
        match spec {
            LevyMeasureSpec::Stable { c_plus, c_minus, .. } if c_plus == c_minus => Self::stable(spec),
            LevyMeasureSpec::Stable { .. } => {
                Err(Error::Sde("asymmetric stable specs have no supported sampler".into()))
            }
            _ => Ok(Self::compound_poisson(op)),
        }
    }

    pub fn method(&self) -> SamplingMethod {
        self.method
    }

    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    fn draw_jump(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u = rng.random_range(0.0..self.total_rate);
        let k = self.cumulative.partition_point(|&c| c <= u).min(self.jumps.len() - 1);
        self.jumps[k]
    }

    fn poisson_count(rate: f64, rng: &mut ChaCha8Rng) -> u64 {
        if rate <= 0.0 {
            return 0;
        }
        Poisson::new(rate).map(|p| p.sample(rng) as u64).unwrap_or(0)
    }

    fn standard_stable(&self, rng: &mut ChaCha8Rng) -> f64 {
        let a = self.alpha;
        let u = rng.random_range(-0.5..0.5) * std::f64::consts::PI;
        let w: f64 = -(1.0 - rng.random::<f64>()).ln();
        (a * u).sin() / u.cos().powf(1.0 / a) * (((1.0 - a) * u).cos() / w).powf((1.0 - a) / a)
    }

    /// Increment of `X` over a time span `duration`.
    pub fn increment(&self, duration: f64, rng: &mut ChaCha8Rng) -> f64 {
        if duration <= 0.0 {
            return 0.0;
        }
        match self.method {
            SamplingMethod::CompoundPoisson => {
                if self.jumps.is_empty() {
                    return 0.0;
                }
                let k = Self::poisson_count(self.total_rate * duration, rng);
                (0..k).map(|_| self.draw_jump(rng)).sum()
            }
            SamplingMethod::StableIncrement => (duration * self.scale).powf(1.0 / self.alpha) * self.standard_stable(rng),
        }
    }

    /// Increment of the time-changed process run at rate `zeta` over `dt`.
    /// Compound Poisson: candidate jumps at rate `zeta_max·W`, each kept with
    /// probability `zeta/zeta_max`. Stable: increment over `zeta·dt`.
    pub fn time_changed_increment(&self, dt: f64, zeta: f64, zeta_max: f64, rng: &mut ChaCha8Rng) -> f64 {
        match self.method {
            SamplingMethod::StableIncrement => self.increment(zeta * dt, rng),
            SamplingMethod::CompoundPoisson => {
                if self.jumps.is_empty() || zeta_max <= 0.0 {
                    return 0.0;
                }
                let k = Self::poisson_count(zeta_max * self.total_rate * dt, rng);
                let keep = zeta / zeta_max;
                let mut x = 0.0;
                for _ in 0..k {
                    let jump = self.draw_jump(rng);
                    if rng.random::<f64>() < keep {
                        x += jump;
                    }
                }
                x
            }
        }
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn run_chunks<T: Send>(n_paths: usize, threads: usize, f: impl Fn(usize, usize) -> T + Sync + Send) -> Result<Vec<T>> {
    let chunks = n_paths.div_ceil(CHUNK);
    let size = |c: usize| CHUNK.min(n_paths - c * CHUNK);
    if threads <= 1 {
        return Ok((0..chunks).map(|c| f(c, size(c))).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Sde(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..chunks).into_par_iter().map(|c| f(c, size(c))).collect()))
}

fn sample_index(cumulative: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
}

fn wrap(x: f64) -> f64 {
    x - x.floor()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    /// Euler step `Z ← Z + b(t, Z)·ΔX`.
    Multiplicative,
    /// `X` run at rate `b(t, Z)`: the process whose law solves the
    /// Fokker–Planck equation with drift `b`.
    TimeChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub n_paths: usize,
    pub seed: u64,
    pub threads: usize,
    pub dynamics: Dynamics,
}

impl Default for McOptions {
    fn default() -> Self {
        Self { n_paths: 100_000, seed: 0, threads: 1, dynamics: Dynamics::Multiplicative }
    }
}

/// Empirical laws on the grid at every time level.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeHistograms {
    pub laws: SpaceTimeField,
    pub n_paths: usize,
    pub seed: u64,
}

impl SdeHistograms {
    pub fn law(&self, k: usize) -> &[f64] {
        self.laws.slice(k)
    }
}

/// Simulate paths with `Z_0 ∼ m_0` on grid points and histogram them at
/// every time level of the grid.
pub fn simulate_sde(
    grid: &Grid,
    sampler: &JumpSampler,
    b: &DriftField,
    m0: &DiscreteMeasure,
    options: &McOptions,
) -> Result<SdeHistograms> {
    b.field().check_grid(grid)?;
    check_len(grid.n(), m0.n())?;
    if options.n_paths == 0 {
        return Err(Error::Sde("n_paths must be positive".into()));
    }
    let n = grid.n();
    let n_t = grid.n_t();
    let dt = grid.dt();
    let bound = b.bound();
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &m in m0.masses() {
        acc += m;
        cumulative.push(acc);
    }
    let field = b.field();
    let counts = run_chunks(options.n_paths, options.threads, |chunk, size| {
        let mut rng = chunk_rng(options.seed, chunk);
        let mut counts = vec![0u64; (n_t + 1) * n];
        for _ in 0..size {
            let mut z = grid.x(sample_index(&cumulative, &mut rng));
            counts[grid.nearest_index(z)] += 1;
            for k in 0..n_t {
                let bz = field.slice(k)[grid.nearest_index(z)];
                let dx = match options.dynamics {
                    Dynamics::Multiplicative => bz * sampler.increment(dt, &mut rng),
                    Dynamics::TimeChange => sampler.time_changed_increment(dt, bz, bound, &mut rng),
                };
                z = wrap(z + dx);
                counts[(k + 1) * n + grid.nearest_index(z)] += 1;
            }
        }
        counts
    })?;
    let mut total = vec![0u64; (n_t + 1) * n];
    for c in &counts {
        for (t, v) in total.iter_mut().zip(c) {
            *t += v;
        }
    }
    let scale = 1.0 / options.n_paths as f64;
    let rows = total.chunks(n).map(|r| r.iter().map(|&c| c as f64 * scale).collect()).collect();
    Ok(SdeHistograms { laws: SpaceTimeField::from_rows(rows)?, n_paths: options.n_paths, seed: options.seed })
}

/// Gain estimates at selected starting points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainEstimate {
    pub start: Vec<usize>,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
}

/// Monte Carlo estimate of `J(0, x, ζ)` for the feedback policy `ζ(t, x)`.
/// On `[t_k, t_{k+1}]` the running reward `−L(ζ) + f` and the rate are read
/// at `t_{k+1}`, matching the explicit backward HJB scheme.
#[allow(clippy::too_many_arguments)]
pub fn estimate_gain(
    grid: &Grid,
    sampler: &JumpSampler,
    policy: &SpaceTimeField,
    f: &SpaceTimeField,
    g: &[f64],
    pair: &ConjugatePair,
    start: &[usize],
    options: &McOptions,
) -> Result<GainEstimate> {
    policy.check_grid(grid)?;
    f.check_grid(grid)?;
    check_len(grid.n(), g.len())?;
    if options.n_paths < 2 {
        return Err(Error::Sde("need at least two paths for an error bar".into()));
    }
    if let Some(bad) = policy.values().iter().find(|z| !(z.is_finite() && **z >= 0.0)) {
        return Err(Error::Sde(format!("policy must be finite and nonnegative, got {bad}")));
    }
    let zeta_max = policy.max();
    let n_t = grid.n_t();
    let dt = grid.dt();
    let mut cost = vec![0.0; policy.values().len()];
    for (c, &z) in cost.iter_mut().zip(policy.values()) {
        *c = pair.cost(z);
        if !c.is_finite() {
            return Err(Error::Sde(format!("cost is infinite at policy value {z}")));
        }
    }
    let n = grid.n();
    let mut mean = Vec::with_capacity(start.len());
    let mut std_error = Vec::with_capacity(start.len());
    for (s, &i0) in start.iter().enumerate() {
        if i0 >= n {
            return Err(Error::Sde(format!("start index {i0} outside the grid")));
        }
        let seed = options.seed.wrapping_add((s as u64) << 32);
        let sums = run_chunks(options.n_paths, options.threads, |chunk, size| {
            let mut rng = chunk_rng(seed, chunk);
            let (mut count, mut mean, mut m2) = (0.0, 0.0, 0.0);
            for _ in 0..size {
                let mut y = grid.x(i0);
                let mut j = 0.0;
                for k in 0..n_t {
                    let i = grid.nearest_index(y);
                    let z = policy.slice(k + 1)[i];
                    j += dt * (f.slice(k + 1)[i] - cost[(k + 1) * n + i]);
                    y = wrap(y + sampler.time_changed_increment(dt, z, zeta_max, &mut rng));
                }
                j += g[grid.nearest_index(y)];
                count += 1.0;
                let d = j - mean;
                mean += d / count;
                m2 += d * (j - mean);
            }
            (count, mean, m2)
        })?;
        // pairwise merge of chunk moments in chunk order
        let (np, m, m2) = sums.iter().fold((0.0, 0.0, 0.0), |(na, ma, sa), &(nb, mb, sb)| {
            let n = na + nb;
            let d = mb - ma;
            (n, ma + d * nb / n, sa + sb + d * d * na * nb / n)
        });
        mean.push(m);
        std_error.push((m2 / (np - 1.0) / np).sqrt());
    }
    Ok(GainEstimate { start: start.to_vec(), mean, std_error, n_paths: options.n_paths, seed: options.seed })
}

/// Scheme tolerance of the dynamic-programming comparison on compound
/// Poisson samplers: `N·2(dt·ζ_max·W)²·(T·ℓ_max + g_max)`.
pub fn gain_scheme_tolerance(grid: &Grid, sampler: &JumpSampler, zeta_max: f64, ell_max: f64, g_max: f64) -> f64 {
    let x = grid.dt() * zeta_max * sampler.total_rate();
    grid.n_t() as f64 * 2.0 * x * x * (grid.horizon() * ell_max + g_max)
}

/// Scheme tolerance of the law comparison with a drift bounded by `bound`:
/// `2·T·dt·(W·B)²`.
pub fn law_scheme_tolerance(grid: &Grid, sampler: &JumpSampler, bound: f64, substeps: usize) -> f64 {
    let x = sampler.total_rate() * bound;
    2.0 * grid.horizon() * grid.dt() / substeps.max(1) as f64 * x * x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfSimilarReport {
    /// `sup_ζ (ζz − L(ζ))` per grid point.
    pub zeta_sup: Vec<f64>,
    /// `sup_λ (λ^{2σ}z − L̂(λ))` per grid point.
    pub lambda_sup: Vec<f64>,
    /// Closed form `F(z)`.
    pub closed_form: Vec<f64>,
    pub max_discrepancy: f64,
    pub max_error_vs_closed_form: f64,
    /// Largest pointwise estimate `δ²|ψ''|` of the brute-force error of the
    /// two suprema, from the local control spacing at the maximisers.
    pub resolution: f64,
    /// Slack added on top of the resolution estimate.
    pub tolerance: f64,
    pub passed: bool,
}

/// How the `λ` control grid is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaGrid {
    /// Uniform in `λ`, independent of the `ζ` grid.
    Uniform,
    /// `λ_k = ζ_k^{1/2σ}`.
    Substituted,
}

/// Cost of the spatial-scaling control `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaledCost {
    /// `L̂(λ) = L(λ^{2σ}) = λ^{2σq}/q`.
    Composed,
    /// `L̂(λ) = λ^{q/2σ}/q`; agrees with `L(λ^{2σ})` only when `4σ² = 1`.
    Reciprocal,
}

/// Compare the two brute-force suprema `sup_ζ (ζz − ζ^q/q)` and
/// `sup_λ (λ^{2σ}z − L̂(λ))` on `z = 𝓛_h u`.
#[allow(clippy::too_many_arguments)]
pub fn check_selfsimilar_equivalence(
    op: &DiscreteOperator,
    q: f64,
    u: &[f64],
    samples: usize,
    lambda_grid: LambdaGrid,
    scaled_cost: ScaledCost,
    tolerance: f64,
) -> Result<SelfSimilarReport> {
    let s = op.two_sigma();
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Sde(format!("self-similarity needs 2σ in (0, 1), got {s}")));
    }
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::Sde(format!("q must exceed 1, got {q}")));
    }
    if samples < 2 {
        return Err(Error::Sde("need at least two control samples".into()));
    }
    let z = op.apply(u)?;
    let zpos = z.iter().fold(0.0f64, |a, &v| a.max(v));
    let zeta_max = 2.0 * zpos.powf(1.0 / (q - 1.0)) + 1.0;
    let zetas: Vec<f64> = (0..samples).map(|k| zeta_max * k as f64 / (samples - 1) as f64).collect();
    let lambdas: Vec<f64> = match lambda_grid {
        LambdaGrid::Substituted => zetas.iter().map(|z| z.powf(1.0 / s)).collect(),
        LambdaGrid::Uniform => {
            let top = zeta_max.powf(1.0 / s);
            (0..samples).map(|k| top * k as f64 / (samples - 1) as f64).collect()
        }
    };
    let zeta_sup: Vec<f64> = z
        .iter()
        .map(|&zi| zetas.iter().map(|&c| c * zi - c.powf(q) / q).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let power = match scaled_cost {
        ScaledCost::Composed => s * q,
        ScaledCost::Reciprocal => q / s,
    };
    let lambda_sup: Vec<f64> = z
        .iter()
        .map(|&zi| lambdas.iter().map(|&l| l.powf(s) * zi - l.powf(power) / q).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let closed_form: Vec<f64> = z.iter().map(|&zi| (q - 1.0) / q * zi.max(0.0).powf(q / (q - 1.0))).collect();
    let d_zeta = zeta_max / (samples - 1) as f64;
    let resolution = z
        .iter()
        .map(|&zi| {
            if zi <= 0.0 {
                return 0.0;
            }
            let zs = zi.powf(1.0 / (q - 1.0));
            let curv_zeta = (q - 1.0) * zs.powf(q - 2.0);
            let ls = (s * q * zi / power).powf(1.0 / (power - s));
            let curv_lambda =
                (s * (s - 1.0) * ls.powf(s - 2.0) * zi - power * (power - 1.0) / q * ls.powf(power - 2.0)).abs();
            let d_lambda = match lambda_grid {
                LambdaGrid::Uniform => lambdas[1],
                LambdaGrid::Substituted => ls.powf(s).powf(1.0 / s - 1.0) / s * d_zeta,
            };
            // both grids contain 0, so neither error exceeds the true supremum
            let cap = zs * zi - zs.powf(q) / q + ls.powf(s) * zi - ls.powf(power) / q;
            (d_zeta * d_zeta * curv_zeta + d_lambda * d_lambda * curv_lambda).min(cap)
        })
        .fold(0.0, f64::max);
    let max_discrepancy = zeta_sup.iter().zip(&lambda_sup).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let max_error_vs_closed_form = zeta_sup
        .iter()
        .chain(&lambda_sup)
        .zip(closed_form.iter().chain(&closed_form))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(SelfSimilarReport {
        passed: max_discrepancy <= resolution + tolerance,
        resolution,
        zeta_sup,
        lambda_sup,
        closed_form,
        max_discrepancy,
        max_error_vs_closed_form,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{expm, generator_matrix};
    use crate::fp::{solve_fp, tv_distance};
    use crate::hamiltonian::{make_pair, PairParams, PairTag};
    use crate::hjb::{solve_hjb, HjbProblem};
    use crate::operator::assemble_operator;

    fn atomic_setup(n: usize, horizon: f64, n_t: usize) -> (Grid, DiscreteOperator, JumpSampler) {
        let grid = Grid::new(n, horizon, n_t).unwrap();
        let h = grid.h();
        let spec = LevyMeasureSpec::atomic(&[(2.0 * h, 1.0), (-2.0 * h, 1.0), (5.0 * h, 0.5)]);
        let op = assemble_operator(&spec, &grid).unwrap();
        let sampler = JumpSampler::for_spec(&spec, &op).unwrap();
        (grid, op, sampler)
    }

    fn exact_law(op: &DiscreteOperator, m0: &[f64], t: f64) -> Vec<f64> {
        expm(&generator_matrix(op).transpose().scale(t)).mul_vec(m0)
    }

    #[test]
    fn zero_drift_keeps_initial_law() {
        let (grid, _, sampler) = atomic_setup(32, 1.0, 8);
        let m0 = DiscreteMeasure::gaussian(&grid, 0.3, 0.1).unwrap();
        let b = DriftField::constant(&grid, 0.0).unwrap();
        let opts = McOptions { n_paths: 5000, seed: 1, ..Default::default() };
        let hist = simulate_sde(&grid, &sampler, &b, &m0, &opts).unwrap();
        for k in 1..=8 {
            assert_eq!(hist.law(k), hist.law(0));
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let (grid, _, sampler) = atomic_setup(32, 0.5, 10);
        let m0 = DiscreteMeasure::point_mass(32, 3);
        let b = DriftField::constant(&grid, 1.0).unwrap();
        let mut opts = McOptions { n_paths: 3 * CHUNK + 17, seed: 9, ..Default::default() };
        let a = simulate_sde(&grid, &sampler, &b, &m0, &opts).unwrap();
        opts.threads = 3;
        let c = simulate_sde(&grid, &sampler, &b, &m0, &opts).unwrap();
        assert_eq!(a.laws, c.laws);
    }

    #[test]
    fn unit_drift_matches_fokker_planck() {
        let (grid, op, sampler) = atomic_setup(64, 0.5, 50);
        let m0 = DiscreteMeasure::point_mass(64, 10);
        let b = DriftField::constant(&grid, 1.0).unwrap();
        let opts = McOptions { n_paths: 100_000, seed: 3, ..Default::default() };
        let hist = simulate_sde(&grid, &sampler, &b, &m0, &opts).unwrap();
        let fp = solve_fp(&grid, &op, &b, &m0).unwrap();
        let tol = 3.0 / (opts.n_paths as f64).sqrt() + law_scheme_tolerance(&grid, &sampler, 1.0, fp.substeps);
        let d = tv_distance(hist.law(50), fp.m.slice(50));
        assert!(d <= tol, "{d} > {tol}");
        // both modes coincide for b ≡ 1
        let tc = simulate_sde(&grid, &sampler, &b, &m0, &McOptions { dynamics: Dynamics::TimeChange, ..opts }).unwrap();
        assert!(tv_distance(tc.law(50), fp.m.slice(50)) <= tol);
    }

    #[test]
    fn monte_carlo_error_rate() {
        let (grid, op, sampler) = atomic_setup(16, 0.25, 5);
        let m0 = DiscreteMeasure::point_mass(16, 0);
        let exact = exact_law(&op, m0.masses(), 0.25);
        let b = DriftField::constant(&grid, 1.0).unwrap();
        let mut pts = Vec::new();
        for &np in &[1000usize, 4000, 16000] {
            let mut err = 0.0;
            for seed in 0..40 {
                let opts = McOptions { n_paths: np, seed, ..Default::default() };
                err += tv_distance(simulate_sde(&grid, &sampler, &b, &m0, &opts).unwrap().law(5), &exact);
            }
            pts.push(((np as f64).ln(), (err / 40.0).ln()));
        }
        let slope = (pts[2].1 - pts[0].1) / (pts[2].0 - pts[0].0);
        assert!((-0.6..=-0.4).contains(&slope), "slope {slope}");
    }

    #[test]
    fn stable_increments_have_the_right_characteristic_function() {
        let spec = LevyMeasureSpec::fractional_laplacian(0.5).unwrap();
        let sampler = JumpSampler::stable(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let t = 0.3;
        let xs: Vec<f64> = (0..n).map(|_| sampler.increment(t, &mut rng)).collect();
        for xi in [0.5, 1.0, 3.0] {
            let emp = xs.iter().map(|x| (xi * x).cos()).sum::<f64>() / n as f64;
            let exact = (-t * f64::powf(xi, 0.5)).exp();
            assert!((emp - exact).abs() < 5.0 / (n as f64).sqrt(), "{xi}: {emp} vs {exact}");
        }
        let odd = xs.iter().map(|x| x.sin()).sum::<f64>() / n as f64;
        assert!(odd.abs() < 5.0 / (n as f64).sqrt());
    }

    #[test]
    fn asymmetric_stable_is_unsupported() {
        let spec = LevyMeasureSpec::Stable { two_sigma: 0.5, c_plus: 1.0, c_minus: 0.5 };
        let grid = Grid::new(16, 1.0, 1).unwrap();
        let op = assemble_operator(&spec, &grid).unwrap();
        assert!(matches!(JumpSampler::for_spec(&spec, &op), Err(Error::Sde(_))));
    }

    #[test]
    fn thinning_matches_rate_scaling() {
        let (_, _, sampler) = atomic_setup(32, 1.0, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let a: f64 = (0..n).map(|_| sampler.time_changed_increment(0.2, 0.5, 2.0, &mut rng)).sum::<f64>() / n as f64;
        let b: f64 = (0..n).map(|_| sampler.increment(0.1, &mut rng)).sum::<f64>() / n as f64;
        // mean jump size per unit time: 0.5·5h
        let exact = 0.1 * 0.5 * 5.0 / 32.0;
        assert!((a - exact).abs() < 3e-4 && (b - exact).abs() < 3e-4, "{a} {b} {exact}");
    }

    #[test]
    fn zero_policy_gain_is_deterministic() {
        let (grid, _, sampler) = atomic_setup(16, 1.0, 10);
        let pair = make_pair(PairTag::D, &PairParams { q: Some(2.0), ..Default::default() }).unwrap();
        let f = SpaceTimeField::from_fn(&grid, |t, x| t + (2.0 * std::f64::consts::PI * x).cos());
        let g: Vec<f64> = grid.xs().iter().map(|x| x * x).collect();
        let zero = SpaceTimeField::zeros(&grid);
        let opts = McOptions { n_paths: 100, seed: 0, ..Default::default() };
        let est = estimate_gain(&grid, &sampler, &zero, &f, &g, &pair, &[3, 7], &opts).unwrap();
        for (k, &i) in est.start.iter().enumerate() {
            let exact: f64 = (1..=10).map(|s| grid.dt() * f.slice(s)[i]).sum::<f64>() + g[i];
            assert!((est.mean[k] - exact).abs() < 1e-12);
            assert!(est.std_error[k] < 1e-12);
        }
    }

    #[test]
    fn dynamic_programming_upper_bound() {
        let pair = make_pair(PairTag::D, &PairParams { q: Some(2.0), ..Default::default() }).unwrap();
        let mut n_t = 100;
        let (grid, op, sampler, f, g, sol) = loop {
            let (grid, op, sampler) = atomic_setup(32, 0.5, n_t);
            let f = SpaceTimeField::from_fn(&grid, |_, x| 0.5 * (2.0 * std::f64::consts::PI * x).sin());
            let g: Vec<f64> = grid.xs().iter().map(|x| (2.0 * std::f64::consts::PI * x).cos()).collect();
            let problem = HjbProblem::new(grid, op.clone(), pair.clone(), f.clone(), g.clone()).unwrap();
            let sol = solve_hjb(&problem).unwrap();
            if sol.substeps == 1 {
                break (grid, op, sampler, f, g, sol);
            }
            n_t *= sol.substeps;
        };
        let optimal = crate::hjb::extract_drift(&sol.u, &op, &pair).unwrap();
        let opts = McOptions { n_paths: 20_000, seed: 17, ..Default::default() };
        let start = [0, 8, 20];
        let best = estimate_gain(&grid, &sampler, &optimal, &f, &g, &pair, &start, &opts).unwrap();
        let ell = f.sup_norm() + pair.cost(optimal.max());
        let tol = gain_scheme_tolerance(&grid, &sampler, optimal.max().max(1.0), ell, 1.0);
        for (k, &i) in start.iter().enumerate() {
            let u0 = sol.u.slice(0)[i];
            assert!(best.mean[k] <= u0 + 3.0 * best.std_error[k] + tol);
            assert!(best.mean[k] >= u0 - 3.0 * best.std_error[k] - tol, "{} vs {u0}", best.mean[k]);
        }
        let other = SpaceTimeField::filled(&grid, 1.0);
        let alt = estimate_gain(&grid, &sampler, &other, &f, &g, &pair, &start, &opts).unwrap();
        for k in 0..start.len() {
            assert!(alt.mean[k] <= sol.u.slice(0)[start[k]] + 3.0 * alt.std_error[k] + tol);
        }
    }

    #[test]
    fn selfsimilar_equivalence() {
        let grid = Grid::new(64, 1.0, 1).unwrap();
        let op = assemble_operator(&LevyMeasureSpec::fractional_laplacian(0.5).unwrap(), &grid).unwrap();
        let u: Vec<f64> = grid.xs().iter().map(|x| (2.0 * std::f64::consts::PI * x).cos()).collect();
        let r = check_selfsimilar_equivalence(&op, 2.0, &u, 20_001, LambdaGrid::Uniform, ScaledCost::Composed, 1e-12).unwrap();
        assert!(r.passed, "{} > {}", r.max_discrepancy, r.resolution);
        assert!(r.resolution < 1e-4);
        assert!(r.max_error_vs_closed_form < r.resolution);
        let exact = check_selfsimilar_equivalence(&op, 2.0, &u, 2001, LambdaGrid::Substituted, ScaledCost::Composed, 1e-12).unwrap();
        assert!(exact.passed);
        let literal = check_selfsimilar_equivalence(&op, 2.0, &u, 2001, LambdaGrid::Substituted, ScaledCost::Reciprocal, 1e-12).unwrap();
        assert!(!literal.passed && literal.max_discrepancy > 0.1);
        // nonpositive argument: both suprema vanish at the origin
        let v: Vec<f64> = vec![0.0; 64];
        let zero = check_selfsimilar_equivalence(&op, 3.0, &v, 11, LambdaGrid::Uniform, ScaledCost::Reciprocal, 0.0).unwrap();
        assert!(zero.zeta_sup.iter().chain(&zero.lambda_sup).all(|&s| s == 0.0));
    }
}
