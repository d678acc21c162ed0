//! Monotone explicit scheme for `−∂_t u − F(𝓛u) = f`, `u(T) = g`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_len, sup_norm, Grid, SpaceTimeField};
use crate::hamiltonian::ConjugatePair;
use crate::holder::holder_seminorm;
use crate::operator::DiscreteOperator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HjbOptions {
    /// Target for `dt·sup|F′|·W`.
    pub theta: f64,
    /// Override for the working range `R` of `𝓛u`.
    pub range: Option<f64>,
    /// Hölder exponent used to certify the data and derive `R`.
    pub alpha: f64,
    pub max_substeps: usize,
}

impl Default for HjbOptions {
    fn default() -> Self {
        Self { theta: 0.9, range: None, alpha: 1.0, max_substeps: 1 << 16 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HjbProblem {
    pub grid: Grid,
    pub operator: DiscreteOperator,
    pub pair: ConjugatePair,
    pub source: SpaceTimeField,
    pub terminal: Vec<f64>,
    pub options: HjbOptions,
}

impl HjbProblem {
    pub fn new(
        grid: Grid,
        operator: DiscreteOperator,
        pair: ConjugatePair,
        source: SpaceTimeField,
        terminal: Vec<f64>,
    ) -> Result<Self> {
        check_len(grid.n(), operator.n())?;
        source.check_grid(&grid)?;
        check_len(grid.n(), terminal.len())?;
        if !source.is_finite() || terminal.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { module: "hjb", detail: "source or terminal data".into() });
        }
        if matches!(pair, ConjugatePair::CappedLinear { .. }) {
            return Err(Error::Hamiltonian(
                "F(z) = κz⁺ is not differentiable at 0; use the smoothed pair instead".into(),
            ));
        }
        Ok(Self { grid, operator, pair, source, terminal, options: HjbOptions::default() })
    }

    pub fn with_options(mut self, options: HjbOptions) -> Self {
        self.options = options;
        self
    }

    /// `M = sup_t ‖f(t)‖_α + ‖g‖_α`.
    pub fn data_bound(&self, alpha: f64) -> Result<f64> {
        let mut f_max = 0.0f64;
        for row in self.source.rows() {
            f_max = f_max.max(sup_norm(row) + holder_seminorm(row, alpha)?);
        }
        Ok(f_max + sup_norm(&self.terminal) + holder_seminorm(&self.terminal, alpha)?)
    }

    /// `4(K/(α−2σ) + ν(B_1^c))·M·(T+1)`, the a priori bound on `‖𝓛u‖`.
    pub fn lap_bound_constant(&self, alpha: f64) -> Result<f64> {
        let s = self.operator.two_sigma();
        if alpha <= s {
            return Err(Error::Invalid(format!("α = {alpha} must exceed the order 2σ = {s}")));
        }
        let meta = self.operator.meta();
        Ok(4.0 * (meta.small_jump_constant / (alpha - s) + meta.tail_mass))
    }

    pub fn working_range(&self) -> Result<f64> {
        if let Some(r) = self.options.range {
            return Ok(r);
        }
        let alpha = self.options.alpha;
        Ok(self.lap_bound_constant(alpha)? * self.data_bound(alpha)? * (self.grid.horizon() + 1.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HjbSolution {
    pub u: SpaceTimeField,
    pub substeps: usize,
    pub range: f64,
    /// Largest `dt_sub·F′(𝓛_h u)·W` met during the run.
    pub cfl_number: f64,
    /// `‖𝓛_h u(t_k)‖_∞` per stored time.
    pub lap_sup: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HjbSummary {
    pub substeps: usize,
    pub range: f64,
    pub cfl_number: f64,
    pub sup_norm: Vec<f64>,
    pub lap_sup: Vec<f64>,
}

impl HjbSolution {
    pub fn summary(&self) -> HjbSummary {
        HjbSummary {
            substeps: self.substeps,
            range: self.range,
            cfl_number: self.cfl_number,
            sup_norm: self.u.rows().map(sup_norm).collect(),
            lap_sup: self.lap_sup.clone(),
        }
    }
}

/// One explicit step `out = u + dt·(F(𝓛_h u) + f)`; returns `max F′(𝓛_h u)`.
pub fn hjb_step(
    op: &DiscreteOperator,
    pair: &ConjugatePair,
    u: &[f64],
    f: &[f64],
    dt: f64,
    lap: &mut [f64],
    out: &mut [f64],
) -> Result<f64> {
    op.apply_into(u, lap)?;
    let mut fmax = 0.0f64;
    for i in 0..u.len() {
        fmax = fmax.max(pair.derivative(lap[i]));
        out[i] = u[i] + dt * (pair.hamiltonian(lap[i]) + f[i]);
    }
    Ok(fmax)
}

pub fn solve_hjb(problem: &HjbProblem) -> Result<HjbSolution> {
    let opts = &problem.options;
    let range = problem.working_range()?;
    let w = problem.operator.total_weight();
    let dt = problem.grid.dt();
    let fmax = problem.pair.derivative_sup_on(-range, range);
    if !fmax.is_finite() {
        return Err(Error::Cfl { module: "hjb", detail: format!("sup F′ on [−{range}, {range}] is not finite") });
    }
    let mut substeps = ((dt * fmax * w / opts.theta).ceil() as usize).max(1);
    loop {
        if substeps > opts.max_substeps {
            return Err(Error::Cfl {
                module: "hjb",
                detail: format!("{substeps} sub-steps needed, limit is {}", opts.max_substeps),
            });
        }
        match run(problem, substeps)? {
            Some((u, cfl_number, lap_sup)) => {
                return Ok(HjbSolution { u, substeps, range, cfl_number, lap_sup });
            }
            // the a priori range underestimated 𝓛u
            None => substeps *= 2,
        }
    }
}

type RunOutput = (SpaceTimeField, f64, Vec<f64>);

fn run(problem: &HjbProblem, substeps: usize) -> Result<Option<RunOutput>> {
    let grid = &problem.grid;
    let n = grid.n();
    let w = problem.operator.total_weight();
    let dt = grid.dt() / substeps as f64;
    let mut u = SpaceTimeField::zeros(grid);
    u.slice_mut(grid.n_t()).copy_from_slice(&problem.terminal);
    let mut cur = problem.terminal.clone();
    let mut next = vec![0.0; n];
    let mut lap = vec![0.0; n];
    let mut cfl_number = 0.0f64;
    let mut lap_sup = vec![0.0; grid.n_t() + 1];
    for k in (0..grid.n_t()).rev() {
        let f = problem.source.slice(k + 1);
        for s in 0..substeps {
            let fmax = hjb_step(&problem.operator, &problem.pair, &cur, f, dt, &mut lap, &mut next)?;
            if s == 0 {
                lap_sup[k + 1] = sup_norm(&lap);
            }
            let c = dt * fmax * w;
            cfl_number = cfl_number.max(c);
            if c > problem.options.theta {
                return Ok(None);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        if cur.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { module: "hjb", detail: format!("value at t = {}", grid.t(k)) });
        }
        u.slice_mut(k).copy_from_slice(&cur);
    }
    problem.operator.apply_into(u.slice(0), &mut lap)?;
    lap_sup[0] = sup_norm(&lap);
    Ok(Some((u, cfl_number, lap_sup)))
}

/// Largest defect `|u^k − Φ(u^{k+1})|` when the step map is re-applied.
pub fn hjb_residual(problem: &HjbProblem, solution: &HjbSolution) -> Result<f64> {
    let grid = &problem.grid;
    solution.u.check_grid(grid)?;
    let n = grid.n();
    let dt = grid.dt() / solution.substeps as f64;
    let mut lap = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut worst = 0.0f64;
    for k in 0..grid.n_t() {
        let mut cur = solution.u.slice(k + 1).to_vec();
        for _ in 0..solution.substeps {
            hjb_step(&problem.operator, &problem.pair, &cur, problem.source.slice(k + 1), dt, &mut lap, &mut next)?;
            std::mem::swap(&mut cur, &mut next);
        }
        let defect = cur.iter().zip(solution.u.slice(k)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(defect);
    }
    let terminal = solution.u.slice(grid.n_t()).iter().zip(&problem.terminal).map(|(a, b)| (a - b).abs());
    Ok(terminal.fold(worst, f64::max))
}

/// `b(t, x) = F′(𝓛_h u(t, x))`.
pub fn extract_drift(u: &SpaceTimeField, op: &DiscreteOperator, pair: &ConjugatePair) -> Result<SpaceTimeField> {
    let mut rows = Vec::with_capacity(u.n_times());
    let mut lap = vec![0.0; u.n_space()];
    for row in u.rows() {
        op.apply_into(row, &mut lap)?;
        rows.push(lap.iter().map(|&z| pair.derivative(z)).collect());
    }
    SpaceTimeField::from_rows(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub times: Vec<f64>,
    pub measured: Vec<f64>,
    /// `(T−t)‖f1−f2‖_∞ + ‖g1−g2‖_∞`.
    pub bound: Vec<f64>,
    /// `max_t (measured − bound)`.
    pub max_excess: f64,
    pub violated: bool,
}

/// Compare two solutions on the same grid with the stability estimate.
pub fn stability_gap(p1: &HjbProblem, u1: &SpaceTimeField, p2: &HjbProblem, u2: &SpaceTimeField) -> Result<StabilityReport> {
    if p1.grid != p2.grid || p1.operator != p2.operator || p1.pair != p2.pair {
        return Err(Error::Invalid("stability comparison needs a common grid, operator and pair".into()));
    }
    u1.check_grid(&p1.grid)?;
    u2.check_grid(&p2.grid)?;
    let df = p1.source.sup_distance(&p2.source)?;
    let dg = p1.terminal.iter().zip(&p2.terminal).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let grid = &p1.grid;
    let mut report = StabilityReport {
        times: Vec::new(),
        measured: Vec::new(),
        bound: Vec::new(),
        max_excess: f64::NEG_INFINITY,
        violated: false,
    };
    for k in 0..=grid.n_t() {
        let t = grid.t(k);
        let gap = u1.slice(k).iter().zip(u2.slice(k)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let bound = (grid.horizon() - t) * df + dg;
        report.times.push(t);
        report.measured.push(gap);
        report.bound.push(bound);
        report.max_excess = report.max_excess.max(gap - bound);
        // rounding of the two runs
        let slack = 1e-12 * (1.0 + u1.sup_norm() + u2.sup_norm());
        report.violated |= gap > bound + slack;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderRow {
    pub t: f64,
    pub sup: f64,
    pub seminorm: f64,
    /// `M(T−t+1)`.
    pub value_bound: f64,
    /// `‖𝓛_h u(t)‖_{α−2σ}`.
    pub lap_norm: f64,
    /// `4(K/(α−2σ)+ν(B_1^c))·M(T−t+1)`.
    pub lap_bound: f64,
    pub value_ok: bool,
    pub lap_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderPropagationReport {
    pub alpha: f64,
    pub m: f64,
    pub lap_tolerance: f64,
    pub rows: Vec<HolderRow>,
    pub violations: usize,
}

/// Measure `‖u(t)‖_∞`, `[u(t)]_α` and `‖𝓛_h u(t)‖_{α−2σ}` against the
/// propagation bounds with `M` certified from the data of `problem`.
pub fn holder_propagation_report(problem: &HjbProblem, u: &SpaceTimeField, alpha: f64) -> Result<HolderPropagationReport> {
    let s = problem.operator.two_sigma();
    if !(alpha > s && alpha <= 1.0) {
        return Err(Error::Invalid(format!("α = {alpha} must lie in (2σ, 1] with 2σ = {s}")));
    }
    u.check_grid(&problem.grid)?;
    let m = problem.data_bound(alpha)?;
    let c = problem.lap_bound_constant(alpha)?;
    let grid = &problem.grid;
    let h = grid.h();
    let mut rows = Vec::with_capacity(grid.n_t() + 1);
    let mut violations = 0;
    let mut lap = vec![0.0; grid.n()];
    let lap_tolerance = 10.0 * h.powf(1.0 - s);
    for k in 0..=grid.n_t() {
        let t = grid.t(k);
        let row = u.slice(k);
        let sup = sup_norm(row);
        let seminorm = holder_seminorm(row, alpha)?;
        let value_bound = m * (grid.horizon() - t + 1.0);
        problem.operator.apply_into(row, &mut lap)?;
        let lap_norm = sup_norm(&lap) + holder_seminorm(&lap, alpha - s)?;
        let lap_bound = c * value_bound;
        let slack = 1e-12 * value_bound.max(1.0);
        let value_ok = sup.max(seminorm) <= value_bound + slack;
        let lap_ok = lap_norm <= lap_bound + lap_tolerance * value_bound;
        violations += usize::from(!value_ok) + usize::from(!lap_ok);
        rows.push(HolderRow { t, sup, seminorm, value_bound, lap_norm, lap_bound, value_ok, lap_ok });
    }
    Ok(HolderPropagationReport { alpha, m, lap_tolerance, rows, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{expm, generator_matrix};
    use crate::hamiltonian::{make_pair, PairParams, PairTag};
    use crate::levy::LevyMeasureSpec;
    use crate::operator::assemble_operator;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn power(q: f64) -> ConjugatePair {
        make_pair(PairTag::D, &PairParams { q: Some(q), ..Default::default() }).unwrap()
    }

    fn linear(kappa: f64) -> ConjugatePair {
        make_pair(PairTag::A, &PairParams { kappa: Some(kappa), ..Default::default() }).unwrap()
    }

    fn stable_problem(n: usize, t: f64, n_t: usize, pair: ConjugatePair, g: Vec<f64>) -> HjbProblem {
        let grid = Grid::new(n, t, n_t).unwrap();
        let op = assemble_operator(&LevyMeasureSpec::fractional_laplacian(0.2).unwrap(), &grid).unwrap();
        let f = SpaceTimeField::zeros(&grid);
        HjbProblem::new(grid, op, pair, f, g).unwrap()
    }

    fn cos(n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * i as f64 / n as f64).cos()).collect()
    }

    #[test]
    fn constants_are_exact() {
        let p = stable_problem(64, 1.0, 20, power(2.0), vec![3.0; 64]);
        let sol = solve_hjb(&p).unwrap();
        assert!(sol.u.values().iter().all(|&v| v == 3.0));
        assert_eq!(hjb_residual(&p, &sol).unwrap(), 0.0);
        let b = extract_drift(&sol.u, &p.operator, &p.pair).unwrap();
        assert!(b.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn refuses_nondifferentiable_pair() {
        let grid = Grid::new(16, 1.0, 4).unwrap();
        let op = assemble_operator(&LevyMeasureSpec::fractional_laplacian(0.2).unwrap(), &grid).unwrap();
        let b = make_pair(PairTag::B, &PairParams { kappa: Some(1.0), ..Default::default() }).unwrap();
        let err = HjbProblem::new(grid, op, b, SpaceTimeField::zeros(&grid), vec![0.0; 16]).unwrap_err();
        assert!(matches!(err, Error::Hamiltonian(_)));
    }

    #[test]
    fn bounded_by_data_cos_example() {
        let p = stable_problem(256, 0.5, 50, power(2.0), cos(256));
        let sol = solve_hjb(&p).unwrap();
        assert!(sol.u.sup_norm() <= 1.0 + 1e-14);
        assert!(sol.cfl_number <= 0.9);
        assert_eq!(hjb_residual(&p, &sol).unwrap(), 0.0);
        let b = extract_drift(&sol.u, &p.operator, &p.pair).unwrap();
        assert!(b.min() >= 0.0);
        // q = 2: b = (𝓛u)⁺
        let lap = p.operator.apply(sol.u.slice(3)).unwrap();
        for (bi, li) in b.slice(3).iter().zip(&lap) {
            assert_eq!(*bi, li.max(0.0));
        }
    }

    #[test]
    fn linear_pair_drift_is_constant() {
        let p = stable_problem(32, 1.0, 10, linear(2.0), cos(32));
        let sol = solve_hjb(&p).unwrap();
        let b = extract_drift(&sol.u, &p.operator, &p.pair).unwrap();
        assert!(b.values().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn linear_case_matches_matrix_exponential() {
        let n = 32;
        let spec = LevyMeasureSpec::atomic(&[(0.5, 1.0)]);
        let g0: Vec<f64> = (0..n).map(|i| (2.0 * PI * i as f64 / n as f64).sin() + 0.3 * (i as f64 / n as f64)).collect();
        let err_at = |n_t: usize| {
            let grid = Grid::new(n, 1.0, n_t).unwrap();
            let op = assemble_operator(&spec, &grid).unwrap();
            let oracle = expm(&generator_matrix(&op)).mul_vec(&g0);
            let p = HjbProblem::new(grid, op, linear(1.0), SpaceTimeField::zeros(&grid), g0.clone()).unwrap();
            let sol = solve_hjb(&p).unwrap();
            sol.u.slice(0).iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let e1 = err_at(40);
        let e2 = err_at(80);
        assert!(e1 < 0.05, "{e1}");
        assert!(e2 < 0.6 * e1, "{e1} {e2}");
    }

    #[test]
    fn comparison_and_stability() {
        let n = 64;
        let grid = Grid::new(n, 1.0, 40).unwrap();
        let op = assemble_operator(&LevyMeasureSpec::fractional_laplacian(0.2).unwrap(), &grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let g1: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f1 = SpaceTimeField::from_fn(&grid, |t, x| 0.3 * (2.0 * PI * (x - t)).sin());
            let g2: Vec<f64> = g1.iter().map(|v| v + rng.random_range(0.0..0.05)).collect();
            let f2 = f1.map(|v| v + 0.1);
            let p1 = HjbProblem::new(grid, op.clone(), power(2.0), f1, g1).unwrap();
            let p2 = HjbProblem::new(grid, op.clone(), power(2.0), f2, g2).unwrap();
            let u1 = solve_hjb(&p1).unwrap().u;
            let u2 = solve_hjb(&p2).unwrap().u;
            assert!(u1.values().iter().zip(u2.values()).all(|(a, b)| a <= b));
            let r = stability_gap(&p1, &u1, &p2, &u2).unwrap();
            assert!(!r.violated, "{}", r.max_excess);
            assert!(r.measured[0] <= 0.15 + 1e-12);
        }
    }

    #[test]
    fn shift_equivariance() {
        let n = 64;
        let mut p1 = stable_problem(n, 1.0, 32, power(2.0), cos(n));
        p1.source = SpaceTimeField::from_fn(&p1.grid, |_, x| (2.0 * PI * x).sin());
        let mut p2 = p1.clone();
        p2.terminal = p1.terminal.iter().map(|v| v + 0.25).collect();
        let mut p3 = p1.clone();
        p3.source = p1.source.map(|v| v + 0.5);
        for p in [&mut p1, &mut p2, &mut p3] {
            p.options.range = Some(10.0);
        }
        let u1 = solve_hjb(&p1).unwrap().u;
        let u2 = solve_hjb(&p2).unwrap().u;
        let u3 = solve_hjb(&p3).unwrap().u;
        for k in 0..=32 {
            let t = p1.grid.t(k);
            for i in 0..n {
                assert!((u2.slice(k)[i] - u1.slice(k)[i] - 0.25).abs() < 1e-12);
                assert!((u3.slice(k)[i] - u1.slice(k)[i] - 0.5 * (1.0 - t)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn time_refinement_is_first_order() {
        let n = 64;
        let run = |n_t: usize| {
            let mut p = stable_problem(n, 0.5, n_t, power(2.0), cos(n));
            p.options.range = Some(5.0);
            solve_hjb(&p).unwrap().u.slice(0).to_vec()
        };
        let a = run(16);
        let b = run(32);
        let c = run(64);
        let d1 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let d2 = b.iter().zip(&c).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(d2 <= 0.6 * d1 + 1e-14, "{d1} {d2}");
    }

    #[test]
    fn holder_bounds_on_cos_data() {
        let n = 256;
        // ‖cos(2πx)‖_1 = 1 + 2π
        let scale = 1.0 / (1.0 + 2.0 * PI);
        let g: Vec<f64> = cos(n).iter().map(|v| v * scale).collect();
        let p = stable_problem(n, 0.5, 25, power(2.0), g);
        let sol = solve_hjb(&p).unwrap();
        let r = holder_propagation_report(&p, &sol.u, 1.0).unwrap();
        assert!((r.m - 1.0).abs() < 1e-3);
        assert_eq!(r.violations, 0);
        assert!(holder_propagation_report(&p, &sol.u, 0.2).is_err());

        let zero = stable_problem(n, 0.5, 5, power(2.0), vec![0.0; n]);
        let z = solve_hjb(&zero).unwrap();
        let r = holder_propagation_report(&zero, &z.u, 1.0).unwrap();
        assert!(r.rows.iter().all(|row| row.sup == 0.0 && row.lap_norm == 0.0));
    }
}
