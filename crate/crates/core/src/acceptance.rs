//! End-to-end verification suite. Each criterion returns measured metrics
//! and a verdict; [`verify_all`] runs them in order and [`determinism_check`]
//! compares two stable-output runs byte for byte.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::dense::{expm, generator_matrix};
use crate::error::Result;
use crate::fp::{
    calibrate_drift, generate_drift, holmgren_residual, solve_dual, solve_fp, tv_distance, DiscreteMeasure, DriftField,
    DualDirection, DualMode,
};
use crate::grid::{sup_norm, Grid, SpaceTimeField};
use crate::hamiltonian::{make_pair, ConjugatePair, PairParams, PairTag};
use crate::hjb::{extract_drift, holder_propagation_report, solve_hjb, stability_gap, HjbProblem};
use crate::holder::{fit_holder_exponent, holder_seminorm};
use crate::levy::LevyMeasureSpec;
use crate::mfg::{picard_defect, solve_mfg, uniqueness_experiment, MfgProblem};
use crate::operator::{assemble_operator, check_operator_bounds, DiscreteOperator};
use crate::regularity::{
    bootstrap_recursion, critical_q, exact_thresholds, fp_beta_lower, fp_order_cap, locate_flip, mfg_order_cap,
    rational,
};
use crate::sde::{estimate_gain, gain_scheme_tolerance, law_scheme_tolerance, simulate_sde, Dynamics, JumpSampler, McOptions};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub metrics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub runtime_limit_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

impl CriterionResult {
    fn new(id: u8, name: &str, limit: f64) -> Self {
        Self {
            id,
            name: name.into(),
            passed: true,
            metrics: BTreeMap::new(),
            notes: Vec::new(),
            runtime_limit_seconds: limit,
            seconds: None,
        }
    }

    fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.into(), value);
    }

    /// Record a sub-check; any failing one fails the criterion.
    fn check(&mut self, label: &str, ok: bool) {
        if !ok {
            self.passed = false;
            self.notes.push(format!("failed: {label}"));
        }
    }

    pub fn within_runtime(&self) -> Option<bool> {
        self.seconds.map(|s| s <= self.runtime_limit_seconds)
    }

    /// One summary line: `criterion N [name]: PASS|FAIL ...`.
    pub fn line(&self) -> String {
        let time = match self.seconds {
            Some(s) => format!(" ({s:.2}s, limit {}s)", self.runtime_limit_seconds),
            None => String::new(),
        };
        let verdict = if self.passed && self.within_runtime() != Some(false) { "PASS" } else { "FAIL" };
        format!("criterion {:>2} [{}]: {verdict}{time}", self.id, self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub criteria: Vec<CriterionResult>,
    pub all_passed: bool,
}

impl AcceptanceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }
}

fn linspace(lo: f64, hi: f64, k: usize) -> impl Iterator<Item = f64> {
    (0..k).map(move |i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn power_pair(q: f64) -> Result<ConjugatePair> {
    make_pair(PairTag::D, &PairParams { q: Some(q), ..Default::default() })
}

fn fractional(grid: &Grid, two_sigma: f64) -> Result<DiscreteOperator> {
    assemble_operator(&LevyMeasureSpec::fractional_laplacian(two_sigma)?, grid)
}

/// Threshold arithmetic: flip points of the uniqueness conditions.
pub fn criterion_1() -> Result<CriterionResult> {
    let mut r = CriterionResult::new(1, "threshold arithmetic", 1.0);
    let one = num_rational::BigRational::one();
    let targets = [
        ("mfg_flip_nonsymmetric", false, (2.0 - 2f64.sqrt()) / 2.0),
        ("mfg_flip_symmetric", true, (7.0 - 33f64.sqrt()) / 4.0),
    ];
    for (key, sym, target) in targets {
        let flip = locate_flip(0.01, 0.5, |x| exact_thresholds(&rational(x), &one, &one, sym).mfg_unique.passed());
        r.metric(key, flip);
        r.metric(&format!("{key}_error"), (flip - target).abs());
        r.check(key, (flip - target).abs() <= 1e-12 && (mfg_order_cap(sym) - target).abs() <= 1e-12);
    }
    let fp_targets = [
        ("fp_interval_flip_nonsymmetric", false, (3.0 - 5f64.sqrt()) / 2.0),
        ("fp_interval_flip_symmetric", true, (5.0 - 17f64.sqrt()) / 2.0),
    ];
    for (key, sym, target) in fp_targets {
        let flip =
            locate_flip(0.01, 0.9, |x| exact_thresholds(&rational(x), &one, &one, sym).fp_interval_nonempty.passed());
        r.metric(key, flip);
        r.metric(&format!("{key}_error"), (flip - target).abs());
        let lower_at_cap = fp_beta_lower(fp_order_cap(sym), sym);
        r.check(key, (flip - target).abs() <= 1e-12 && (lower_at_cap - 1.0).abs() <= 1e-12);
    }
    let qc = critical_q(0.5)?;
    r.metric("q_c_half", qc);
    r.check("q_c(1/2) = 1", qc == 1.0);
    Ok(r)
}

/// Bootstrap recursion on a 20×20 grid of (2σ, β) inside the regime.
pub fn criterion_2() -> Result<CriterionResult> {
    let mut r = CriterionResult::new(2, "bootstrap recursion", 1.0);
    let mut worst_limit = 0.0f64;
    let mut worst_increment = 0.0f64;
    let (mut decreasing, mut cauchy, mut cases) = (0usize, 0usize, 0usize);
    for s in linspace(0.1, 0.45, 20) {
        let lower = s / (1.0 - s);
        for k in 1..=20 {
            let beta = lower + (1.0 - lower) * k as f64 / 20.0;
            let st = bootstrap_recursion(s, beta, 1.0, 1.0, 1.0, 500)?;
            cases += 1;
            worst_limit = worst_limit.max(st.limit_error);
            worst_increment = worst_increment.max(st.c_increment);
            decreasing += usize::from(st.strictly_decreasing && st.in_regime);
            cauchy += usize::from(st.c_is_cauchy(1e-10));
        }
    }
    r.metric("cases", cases as f64);
    r.metric("max_limit_error", worst_limit);
    r.metric("max_c_increment", worst_increment);
    r.metric("strictly_decreasing_cases", decreasing as f64);
    r.metric("cauchy_cases", cauchy as f64);
    r.check("|ω_500 − ω_∞| < 1e-10", worst_limit < 1e-10);
    r.check("ω_n strictly decreasing", decreasing == cases);
    r.check("C_n Cauchy", cauchy == cases);
    Ok(r)
}

/// Operator correctness: spectral convergence order and exact atomic action.
pub fn criterion_3() -> Result<CriterionResult> {
    let mut r = CriterionResult::new(3, "operator correctness", 10.0);
    for s in [0.2, 0.5] {
        let mut errs = Vec::new();
        for n in [128usize, 256, 512] {
            let grid = Grid::new(n, 1.0, 1)?;
            let op = fractional(&grid, s)?;
            let mut e = 0.0f64;
            for k in 1..=4 {
                let phi: Vec<f64> = grid.xs().iter().map(|x| (2.0 * PI * k as f64 * x).cos()).collect();
                let eig = -(2.0 * PI * k as f64).powf(s);
                let lphi = op.apply(&phi)?;
                e = e.max(lphi.iter().zip(&phi).map(|(a, b)| (a - eig * b).abs()).fold(0.0, f64::max));
            }
            errs.push(e);
        }
        let o1 = (errs[0] / errs[1]).log2();
        let o2 = (errs[1] / errs[2]).log2();
        r.metric(&format!("order_{s}_128_256"), o1);
        r.metric(&format!("order_{s}_256_512"), o2);
        r.metric(&format!("error_{s}_512"), errs[2]);
        r.check(&format!("order ≥ 0.7 at 2σ = {s}"), o1 >= 0.7 && o2 >= 0.7);
    }
    let n = 256;
    let grid = Grid::new(n, 1.0, 1)?;
    let h = grid.h();
    let atoms = [(3.0 * h, 0.7), (-10.0 * h, 1.3), (0.25, 0.4)];
    let op = assemble_operator(&LevyMeasureSpec::atomic(&atoms), &grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let phi: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let lphi = op.apply(&phi)?;
    let exact: Vec<f64> = (0..n)
        .map(|i| {
            atoms
                .iter()
                .map(|&(a, m)| m * (phi[grid.wrap(i as isize + (a / h).round() as isize)] - phi[i]))
                .sum()
        })
        .collect();
    let err = max_abs_diff(&lphi, &exact);
    r.metric("atomic_action_error", err);
    r.check("atomic action exact", err <= 8.0 * f64::EPSILON);
    Ok(r)
}

/// Random Lipschitz field normalised to `‖φ‖_∞ + [φ]_1 = 1`.
fn random_lipschitz(grid: &Grid, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let modes: Vec<(f64, f64, f64)> = (1..=6)
        .map(|k| (k as f64, rng.random_range(-1.0..1.0) / (k * k) as f64, rng.random_range(0.0..2.0 * PI)))
        .collect();
    let kink = rng.random_range(0.0..1.0);
    let weight = rng.random_range(0.0..1.0);
    let raw: Vec<f64> = grid
        .xs()
        .iter()
        .map(|&x| {
            modes.iter().map(|&(k, a, th)| a * (2.0 * PI * k * x + th).cos()).sum::<f64>()
                + weight * (PI * (x - kink)).sin().abs()
        })
        .collect();
    let norm = sup_norm(&raw) + holder_seminorm(&raw, 1.0)?;
    Ok(raw.iter().map(|v| v / norm).collect())
}

/// Operator bounds on random Lipschitz fields.
pub fn criterion_4(seed: u64) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(4, "operator bounds", 30.0);
    let grid = Grid::new(256, 1.0, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4);
    let ops = [fractional(&grid, 0.2)?, fractional(&grid, 0.5)?];
    let mut violations = 0;
    let (mut sup_ratio, mut semi_ratio) = (0.0f64, 0.0f64);
    for k in 0..50 {
        let phi = random_lipschitz(&grid, &mut rng)?;
        let rep = check_operator_bounds(&ops[k % 2], &phi, 1.0)?;
        violations += usize::from(rep.violated);
        sup_ratio = sup_ratio.max(rep.sup_norm / rep.sup_bound);
        semi_ratio = semi_ratio.max(rep.seminorm / rep.seminorm_bound);
    }
    r.metric("violations", violations as f64);
    r.metric("max_sup_over_bound", sup_ratio);
    r.metric("max_seminorm_over_bound", semi_ratio);
    r.check("no bound exceeded", violations == 0);
    Ok(r)
}

/// HJB contract: comparison, stability, constant shifts, Hölder bounds.
pub fn criterion_5(seed: u64) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(5, "hjb contract", 60.0);
    let n = 256;
    let grid = Grid::new(n, 0.5, 20)?;
    let op = fractional(&grid, 0.2)?;
    let pair = power_pair(2.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5);
    let (mut comparison, mut stability) = (0usize, 0usize);
    let mut worst_excess = f64::NEG_INFINITY;
    for _ in 0..50 {
        let g1 = random_lipschitz(&grid, &mut rng)?;
        let a = rng.random_range(0.0..0.5);
        let ph = rng.random_range(0.0..1.0);
        let f1 = SpaceTimeField::from_fn(&grid, |t, x| a * (2.0 * PI * (x - ph - t)).sin());
        let dg: Vec<f64> = random_lipschitz(&grid, &mut rng)?.iter().map(|v| 0.1 * (v + 1.0)).collect();
        let g2: Vec<f64> = g1.iter().zip(&dg).map(|(a, b)| a + b).collect();
        let bump = rng.random_range(0.0..0.2);
        let f2 = f1.map(|v| v + bump);
        let p1 = HjbProblem::new(grid, op.clone(), pair.clone(), f1, g1)?;
        let p2 = HjbProblem::new(grid, op.clone(), pair.clone(), f2, g2)?;
        let u1 = solve_hjb(&p1)?.u;
        let u2 = solve_hjb(&p2)?.u;
        comparison += u1.values().iter().zip(u2.values()).filter(|(a, b)| a > b).count();
        let st = stability_gap(&p1, &u1, &p2, &u2)?;
        stability += usize::from(st.violated);
        worst_excess = worst_excess.max(st.max_excess);
    }
    r.metric("comparison_violations", comparison as f64);
    r.metric("stability_violations", stability as f64);
    r.metric("max_stability_excess", worst_excess);
    r.check("comparison principle", comparison == 0);
    r.check("stability bound", stability == 0);

    let g: Vec<f64> = grid.xs().iter().map(|x| (2.0 * PI * x).cos()).collect();
    let mut base = HjbProblem::new(
        grid,
        op.clone(),
        pair.clone(),
        SpaceTimeField::from_fn(&grid, |_, x| 0.5 * (2.0 * PI * x).sin()),
        g,
    )?;
    base.options.range = Some(10.0);
    let mut shifted_g = base.clone();
    shifted_g.terminal.iter_mut().for_each(|v| *v += 0.75);
    let mut shifted_f = base.clone();
    shifted_f.source = base.source.map(|v| v + 0.4);
    let u = solve_hjb(&base)?.u;
    let ug = solve_hjb(&shifted_g)?.u;
    let uf = solve_hjb(&shifted_f)?.u;
    let mut shift_err = 0.0f64;
    for k in 0..=grid.n_t() {
        let t = grid.t(k);
        for i in 0..n {
            shift_err = shift_err.max((ug.slice(k)[i] - u.slice(k)[i] - 0.75).abs());
            shift_err = shift_err.max((uf.slice(k)[i] - u.slice(k)[i] - 0.4 * (grid.horizon() - t)).abs());
        }
    }
    r.metric("constant_shift_error", shift_err);
    r.check("constant shifts exact", shift_err < 1e-12);

    let mut holder_violations = 0;
    for k in 1..=3 {
        let kf = k as f64;
        // ‖cos(2πkx)‖_1 = 1 + 2πk
        let scale = 1.0 / (1.0 + 2.0 * PI * kf);
        let g: Vec<f64> = grid.xs().iter().map(|x| scale * (2.0 * PI * kf * x).cos()).collect();
        let f = SpaceTimeField::from_fn(&grid, |_, x| 0.5 * scale * (2.0 * PI * kf * x).sin());
        let p = HjbProblem::new(grid, op.clone(), pair.clone(), f, g)?;
        let sol = solve_hjb(&p)?;
        holder_violations += holder_propagation_report(&p, &sol.u, 1.0)?.violations;
    }
    r.metric("holder_violations", holder_violations as f64);
    r.check("Hölder propagation bounds", holder_violations == 0);
    Ok(r)
}

/// FP contract: mass, positivity and the matrix-exponential oracle.
pub fn criterion_6(seed: u64) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(6, "fp contract", 60.0);
    let grid = Grid::new(128, 1.0, 20)?;
    let op = fractional(&grid, 0.5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6);
    let (mut defect, mut min_value) = (0.0f64, f64::INFINITY);
    for k in 0..10 {
        let b = generate_drift(&grid, 0.7, 0.0, 3.0, seed.wrapping_add(k))?;
        let w: Vec<f64> = (0..128).map(|_| rng.random_range(0.0..1.0f64).powi(4)).collect();
        let m0 = if k % 2 == 0 { DiscreteMeasure::point_mass(128, rng.random_range(0..128)) } else { DiscreteMeasure::from_weights(&w)? };
        let sol = solve_fp(&grid, &op, &b, &m0)?;
        defect = defect.max(sol.max_mass_defect);
        min_value = min_value.min(sol.min_value);
    }
    r.metric("max_mass_defect", defect);
    r.metric("min_value", min_value);
    r.check("mass defect ≤ 1e-12", defect <= 1e-12);
    r.check("nonnegativity", min_value >= 0.0);

    let n = 64;
    let spec = LevyMeasureSpec::atomic(&[(0.5, 1.0), (-0.25, 0.5), (3.0 / 64.0, 2.0)]);
    let err = |n_t: usize| -> Result<f64> {
        let grid = Grid::new(n, 1.0, n_t)?;
        let op = assemble_operator(&spec, &grid)?;
        let m0 = DiscreteMeasure::point_mass(n, 3);
        let sol = solve_fp(&grid, &op, &DriftField::constant(&grid, 1.0)?, &m0)?;
        let exact = expm(&generator_matrix(&op).transpose()).mul_vec(m0.masses());
        Ok(tv_distance(sol.m.slice(n_t), &exact))
    };
    let (e1, e2, e3) = (err(40)?, err(80)?, err(160)?);
    r.metric("oracle_error_40", e1);
    r.metric("oracle_error_80", e2);
    r.metric("oracle_error_160", e3);
    r.metric("halving_ratio_1", e1 / e2);
    r.metric("halving_ratio_2", e2 / e3);
    let halves = |x: f64| (1.8..=2.2).contains(&x);
    r.check("oracle error halves with dt", halves(e1 / e2) && halves(e2 / e3));
    Ok(r)
}

/// Duality: exact-adjoint telescoping and first-order independent defect.
pub fn criterion_7(seed: u64) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(7, "holmgren duality", 60.0);
    let n = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7);
    let (mut exact_worst, mut ratio_min, mut ratio_max) = (0.0f64, f64::INFINITY, 0.0f64);
    for k in 0..10 {
        let s = rng.random_range(0.1..0.6);
        let beta = rng.random_range(0.6..1.0);
        let drift_seed = rng.random::<u64>();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0f64).powi(3)).collect();
        let m0 = DiscreteMeasure::from_weights(&w)?;
        let phi: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let steps = rng.random_range(8..=24usize);
        let t0 = steps as f64 / 32.0;
        let base_nt = 256;
        let residual = |n_t: usize, mode: DualMode| -> Result<f64> {
            let grid = Grid::new(n, 1.0, n_t)?;
            let op = fractional(&grid, s)?;
            let b = generate_drift(&grid, beta, 0.1, 2.0, drift_seed)?;
            holmgren_residual(&grid, &op, &b, &m0, &phi, t0, mode)
        };
        exact_worst = exact_worst.max(residual(base_nt, DualMode::ExactAdjoint)?);
        let r1 = residual(base_nt, DualMode::Independent)?;
        let r2 = residual(2 * base_nt, DualMode::Independent)?;
        let ratio = r1 / r2;
        ratio_min = ratio_min.min(ratio);
        ratio_max = ratio_max.max(ratio);
        r.metric(&format!("independent_ratio_{k}"), ratio);
    }
    r.metric("max_exact_adjoint_residual", exact_worst);
    r.metric("min_halving_ratio", ratio_min);
    r.metric("max_halving_ratio", ratio_max);
    r.check("exact adjoint ≤ 1e-10", exact_worst <= 1e-10);
    r.check("independent defect halves", ratio_min >= 1.8 && ratio_max <= 2.2);
    Ok(r)
}

/// Dual regularity with a drift of measured exponent 0.9 at 2σ = 0.1.
pub fn criterion_8(seed: u64) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(8, "dual regularity", 120.0);
    let n = 1024;
    let s = 0.1;
    let grid = Grid::new(n, 1.0, 20)?;
    let op = fractional(&grid, s)?;
    let cal = calibrate_drift(&grid, 0.9, 0.0, 1.0, seed ^ 0x8, 0.005)?;
    let beta_hat = cal.drift.beta_hat();
    let phi: Vec<f64> = grid.xs().iter().map(|x| (x - 0.5).abs()).collect();
    let w = solve_dual(&grid, &op, &cal.drift, &phi, DualDirection::ForwardFromZero)?;
    let fit = fit_holder_exponent(w.slice(grid.n_t()), 2.0 * grid.h(), 1.0 / 16.0);
    let target = 0.9 - s / (1.0 - s) - 0.1;
    r.metric("beta_hat", beta_hat);
    r.metric("envelope", cal.envelope);
    r.metric("dual_exponent", fit.exponent);
    r.metric("dual_fit_r_squared", fit.r_squared);
    r.metric("target", target);
    r.check("β̂ = 0.9 ± 0.02", (beta_hat - 0.9).abs() <= 0.02);
    r.check("dual exponent ≥ 0.689", fit.exponent >= target);
    Ok(r)
}

/// Degenerate MFG example: convergence, residuals and multi-start agreement.
pub fn criterion_9(cfg: &ExperimentConfig) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(9, "mfg example", 300.0);
    let mut cfg = cfg.clone();
    cfg.grid.n = 128;
    cfg.grid.horizon = 0.25;
    cfg.levy.kind = crate::config::LevyKind::FractionalLaplacian;
    cfg.levy.two_sigma = 0.2;
    cfg.hamiltonian = crate::config::HamiltonianBlock { q: Some(2.8), ..Default::default() };
    cfg.solver.damping = 0.5;
    cfg.solver.tol = cfg.solver.tol.min(1e-9);
    cfg.validate()?;
    let grid = cfg.grid()?;
    let problem = MfgProblem::new(grid, cfg.operator(&grid)?, cfg.pair()?, cfg.coupling(&grid)?, cfg.initial_measure(&grid)?)?
        .with_options(cfg.mfg_options());
    let sol = solve_mfg(&problem, None)?;
    let increment = sol.history.last().copied().unwrap_or(f64::INFINITY);
    let defect = picard_defect(&problem, &sol)?;
    r.metric("iterations", sol.iterations as f64);
    r.metric("final_increment", increment);
    r.metric("hjb_residual", sol.hjb_residual);
    r.metric("fp_residual", sol.fp_residual);
    r.metric("undamped_defect", defect);
    r.metric("q_c", critical_q(0.1)?);
    r.check("converged with increment < 1e-6", sol.converged && increment < 1e-6);
    r.check("residuals < 1e-6", sol.hjb_residual < 1e-6 && sol.fp_residual < 1e-6);
    if let Some(t) = &sol.thresholds {
        r.metric("threshold_margin", t.mfg_margin);
        r.notes.push(format!("threshold verdict: {:?}", t.mfg_unique));
    }
    let exp = uniqueness_experiment(&problem, 4, cfg.mc.seed)?;
    r.metric("multistart_max_u_distance", exp.max_u_distance);
    r.metric("multistart_max_m_distance", exp.max_m_distance);
    r.notes.push(exp.note.clone());
    r.check("4 multi-start runs agree within 1e-5", exp.all_converged && exp.max_u_distance.max(exp.max_m_distance) < 1e-5);
    Ok(r)
}

/// Monte Carlo cross-validation against the FP law and the HJB value.
pub fn criterion_10(seed: u64, threads: usize) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(10, "monte carlo cross-validation", 180.0);
    let n_paths = 100_000;
    let n = 64;
    let grid = Grid::new(n, 0.5, 50)?;
    let h = grid.h();
    let spec = LevyMeasureSpec::atomic(&[(2.0 * h, 1.0), (-2.0 * h, 1.0), (5.0 * h, 0.5)]);
    let op = assemble_operator(&spec, &grid)?;
    let sampler = JumpSampler::for_spec(&spec, &op)?;
    let b = DriftField::constant(&grid, 1.0)?;
    let m0 = DiscreteMeasure::point_mass(n, 10);
    let opts = McOptions { n_paths, seed, threads, dynamics: Dynamics::Multiplicative };
    let hist = simulate_sde(&grid, &sampler, &b, &m0, &opts)?;
    let fp = solve_fp(&grid, &op, &b, &m0)?;
    let tol = 3.0 / (n_paths as f64).sqrt() + law_scheme_tolerance(&grid, &sampler, 1.0, fp.substeps);
    let tv = (1..=grid.n_t()).map(|k| tv_distance(hist.law(k), fp.m.slice(k))).fold(0.0, f64::max);
    r.metric("law_tv_max_over_time", tv);
    r.metric("law_tolerance", tol);
    r.check("empirical law within tolerance", tv <= tol);

    // gain estimates for five feedback policies against the value function
    let pair = power_pair(2.0)?;
    let mut n_t = 100;
    let (grid, op, sampler, f, g, u) = loop {
        let grid = Grid::new(n, 0.5, n_t)?;
        let op = assemble_operator(&spec, &grid)?;
        let sampler = JumpSampler::for_spec(&spec, &op)?;
        let f = SpaceTimeField::from_fn(&grid, |_, x| 0.5 * (2.0 * PI * x).sin());
        let g: Vec<f64> = grid.xs().iter().map(|x| (2.0 * PI * x).cos()).collect();
        let sol = solve_hjb(&HjbProblem::new(grid, op.clone(), pair.clone(), f.clone(), g.clone())?)?;
        if sol.substeps == 1 {
            break (grid, op, sampler, f, g, sol.u);
        }
        n_t *= sol.substeps;
    };
    let optimal = extract_drift(&u, &op, &pair)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa);
    let (a, ph) = (rng.random_range(0.5..1.5), rng.random_range(0.0..1.0));
    let policies = [
        ("optimal", optimal.clone()),
        ("zero", SpaceTimeField::zeros(&grid)),
        ("unit", SpaceTimeField::filled(&grid, 1.0)),
        ("double_optimal", optimal.map(|v| 2.0 * v)),
        ("wave", SpaceTimeField::from_fn(&grid, |t, x| a * (1.0 + (2.0 * PI * (x - ph) + t).sin()))),
    ];
    let start = [0usize, 16, 40];
    let g_max = sup_norm(&g);
    let mut worst = f64::NEG_INFINITY;
    let mut optimal_mean = Vec::new();
    for (label, policy) in &policies {
        let zmax = policy.max();
        let ell = f.sup_norm() + pair.cost(zmax);
        let tol = gain_scheme_tolerance(&grid, &sampler, zmax, ell, g_max);
        let est = estimate_gain(&grid, &sampler, policy, &f, &g, &pair, &start, &McOptions { n_paths, ..opts.clone() })?;
        let mut ok = true;
        for (k, &i) in start.iter().enumerate() {
            let slack = est.mean[k] - u.slice(0)[i] - 3.0 * est.std_error[k] - tol;
            worst = worst.max(slack);
            ok &= slack <= 0.0;
        }
        r.metric(&format!("gain_{label}_scheme_tol"), tol);
        r.metric(&format!("gain_{label}_mean_x0"), est.mean[0]);
        r.metric(&format!("gain_{label}_se_x0"), est.std_error[0]);
        r.check(&format!("dynamic programming bound for policy {label}"), ok);
        if *label == "optimal" {
            optimal_mean = est.mean.clone();
        } else {
            let beats = est.mean.iter().zip(&optimal_mean).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
            r.metric(&format!("gain_{label}_minus_optimal_max"), beats);
        }
    }
    r.metric("max_bound_slack", worst);
    r.metric("value_x0", u.slice(0)[0]);
    Ok(r)
}

fn timed(stable: bool, f: impl FnOnce() -> Result<CriterionResult>) -> Result<CriterionResult> {
    let start = Instant::now();
    let mut r = f()?;
    if !stable {
        r.seconds = Some(start.elapsed().as_secs_f64());
    }
    Ok(r)
}

/// Run one criterion (1–10) with the seed and worker count of `cfg`.
pub fn run_criterion(id: u8, cfg: &ExperimentConfig, stable: bool) -> Result<CriterionResult> {
    let seed = cfg.mc.seed;
    let threads = cfg.mc.threads.max(1);
    timed(stable, || match id {
        1 => criterion_1(),
        2 => criterion_2(),
        3 => criterion_3(),
        4 => criterion_4(seed),
        5 => criterion_5(seed),
        6 => criterion_6(seed),
        7 => criterion_7(seed),
        8 => criterion_8(seed),
        9 => criterion_9(cfg),
        10 => criterion_10(seed, threads),
        other => Err(crate::Error::Invalid(format!("no criterion {other}"))),
    })
}

/// Criteria 1–10; `on_result` sees each result as soon as it is available.
pub fn verify_all_with(
    cfg: &ExperimentConfig,
    stable: bool,
    mut on_result: impl FnMut(&CriterionResult),
) -> Result<AcceptanceReport> {
    let mut criteria = Vec::with_capacity(10);
    for id in 1..=10 {
        let r = run_criterion(id, cfg, stable)?;
        on_result(&r);
        criteria.push(r);
    }
    let all_passed = criteria.iter().all(|c| c.passed);
    Ok(AcceptanceReport { version: VERSION.into(), config_hash: cfg.hash(), seed: cfg.mc.seed, criteria, all_passed })
}

pub fn verify_all(cfg: &ExperimentConfig, stable: bool) -> Result<AcceptanceReport> {
    verify_all_with(cfg, stable, |_| {})
}

/// Two stable-output runs with the same configuration; byte comparison of
/// their JSON summaries.
pub fn determinism_check(cfg: &ExperimentConfig, first: Option<&AcceptanceReport>) -> Result<CriterionResult> {
    let start = Instant::now();
    let mut r = CriterionResult::new(11, "determinism", 600.0);
    let a = match first {
        Some(rep) => rep.clone(),
        None => verify_all(cfg, true)?,
    };
    let b = verify_all(cfg, true)?;
    let (ja, jb) = (a.to_json(), b.to_json());
    r.metric("summary_bytes", ja.len() as f64);
    r.check("byte-identical summaries", ja == jb && a.criteria.iter().all(|c| c.seconds.is_none()));
    r.seconds = Some(start.elapsed().as_secs_f64());
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_criteria_pass() {
        for r in [criterion_1().unwrap(), criterion_2().unwrap()] {
            assert!(r.passed, "{:?}", r);
        }
    }

    #[test]
    fn line_format() {
        let mut r = CriterionResult::new(3, "x", 1.0);
        assert_eq!(r.line(), "criterion  3 [x]: PASS");
        r.seconds = Some(2.0);
        assert!(r.line().contains("FAIL"));
        r.seconds = None;
        r.check("thing", false);
        assert_eq!(r.notes, vec!["failed: thing".to_string()]);
        assert!(r.line().ends_with("FAIL"));
    }
}
