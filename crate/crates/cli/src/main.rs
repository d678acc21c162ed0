use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{json, Map, Value};

use levy_mfg::acceptance::{determinism_check, verify_all_with, VERSION};
use levy_mfg::config::{ExperimentConfig, DEFAULT_CONFIG};
use levy_mfg::fp::{solve_dual, solve_fp_with, tv_distance, DualDirection, FpOptions};
use levy_mfg::grid::{Grid, SpaceTimeField};
use levy_mfg::holder::fit_holder_exponent;
use levy_mfg::hjb::solve_hjb;
use levy_mfg::mfg::{solve_mfg, uniqueness_experiment, MfgProblem};
use levy_mfg::regularity::{critical_q, dual_loss, fp_unique_for_beta, uniqueness_thresholds};
use levy_mfg::sde::{law_scheme_tolerance, simulate_sde, JumpSampler};
use levy_mfg::Error;

const EXIT_ACCEPTANCE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_NONCONVERGENCE: u8 = 4;

#[derive(Parser)]
#[command(name = "levy-mfg", version, about = "Degenerate nonlocal mean field game toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (flat `section.key = value` lines or JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; defaults to `output.directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides `mc.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Omit timings so that summaries are byte-reproducible.
    #[arg(long, global = true)]
    stable_output: bool,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    SolveHjb,
    SolveFp,
    SolveDual,
    SolveMfg,
    Diagnose,
    SimulateSde,
    VerifyAll,
    /// Print the shipped default configuration.
    DefaultConfig,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::SolveHjb => "solve-hjb",
            Self::SolveFp => "solve-fp",
            Self::SolveDual => "solve-dual",
            Self::SolveMfg => "solve-mfg",
            Self::Diagnose => "diagnose",
            Self::SimulateSde => "simulate-sde",
            Self::VerifyAll => "verify-all",
            Self::DefaultConfig => "default-config",
        }
    }
}

enum Failure {
    Validation(String),
    Numerical(String),
    NotConverged(String),
    Acceptance(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Artifact writer bound to one output directory and config.
struct Artifacts {
    dir: PathBuf,
    hash: String,
    csv: bool,
    json: bool,
}

impl Artifacts {
    fn header(&self, kind: &str) -> String {
        format!("# levy-mfg {VERSION}\n# config_hash {}\n# artifact {kind}\n", self.hash)
    }

    /// Space-time field in long format: `k,t,i,x,value`.
    fn field(&self, name: &str, grid: &Grid, f: &SpaceTimeField) -> Outcome {
        if !self.csv {
            return Ok(());
        }
        let mut out = self.header(name);
        out.push_str("k,t,i,x,value\n");
        for k in 0..f.n_times() {
            let t = grid.t(k);
            for (i, v) in f.slice(k).iter().enumerate() {
                out.push_str(&format!("{k},{t:.16e},{i},{:.16e},{v:.16e}\n", grid.x(i)));
            }
        }
        Ok(fs::write(self.dir.join(format!("{name}.csv")), out)?)
    }

    /// Plain table with one row per entry.
    fn table(&self, name: &str, columns: &[&str], rows: &[Vec<f64>]) -> Outcome {
        if !self.csv {
            return Ok(());
        }
        let mut out = self.header(name);
        out.push_str(&columns.join(","));
        out.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        Ok(fs::write(self.dir.join(format!("{name}.csv")), out)?)
    }

    fn summary(&self, command: Command, cfg: &ExperimentConfig, body: Value, timings: Option<Value>) -> Outcome {
        if !self.json {
            return Ok(());
        }
        let mut doc = Map::new();
        doc.insert("tool".into(), json!("levy-mfg"));
        doc.insert("version".into(), json!(VERSION));
        doc.insert("command".into(), json!(command.name()));
        doc.insert("config_hash".into(), json!(self.hash));
        doc.insert("seed".into(), json!(cfg.mc.seed));
        doc.insert("config".into(), serde_json::to_value(cfg).unwrap_or(Value::Null));
        if let Value::Object(m) = body {
            doc.extend(m);
        }
        if let Some(t) = timings {
            doc.insert("timings".into(), t);
        }
        let text = serde_json::to_string_pretty(&Value::Object(doc)).map_err(|e| Failure::Io(e.to_string()))?;
        let mut file = fs::File::create(self.dir.join("summary.json"))?;
        file.write_all(text.as_bytes())?;
        file.write_all(b"\n")?;
        Ok(())
    }
}

fn load_config(cli: &Cli) -> std::result::Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::parse(DEFAULT_CONFIG)?,
    };
    if let Some(seed) = cli.seed {
        cfg.mc.seed = seed;
    }
    if let Some(cap) = thread_cap()? {
        cfg.mc.threads = cfg.mc.threads.min(cap);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn thread_cap() -> std::result::Result<Option<usize>, Failure> {
    match std::env::var("LEVY_MFG_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::Validation(format!("LEVY_MFG_THREADS: expected a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(None),
    }
}

fn mfg_problem(cfg: &ExperimentConfig, grid: Grid) -> Result<MfgProblem, Error> {
    Ok(MfgProblem::new(grid, cfg.operator(&grid)?, cfg.pair()?, cfg.coupling(&grid)?, cfg.initial_measure(&grid)?)?
        .with_options(cfg.mfg_options()))
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn fp_options(cfg: &ExperimentConfig) -> FpOptions {
    FpOptions { theta: cfg.solver.theta, ..FpOptions::default() }
}

fn run(cli: &Cli) -> Outcome {
    if cli.command == Command::DefaultConfig {
        print!("{DEFAULT_CONFIG}");
        return Ok(());
    }
    let cfg = load_config(cli)?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    fs::create_dir_all(&dir)?;
    let out = Artifacts {
        dir,
        hash: cfg.hash(),
        csv: cfg.output.formats.iter().any(|f| f == "csv"),
        json: cfg.output.formats.iter().any(|f| f == "json"),
    };
    let start = Instant::now();
    let timings = |start: Instant| (!cli.stable_output).then(|| json!({ "total_seconds": start.elapsed().as_secs_f64() }));
    let grid = cfg.grid()?;

    match cli.command {
        Command::SolveHjb => {
            // running and terminal costs from the initial law frozen in time
            let problem = mfg_problem(&cfg, grid)?;
            let m = SpaceTimeField::constant_in_time(&grid, problem.m0.masses())?;
            let sol = solve_hjb(&problem.hjb_problem(&m)?)?;
            out.field("u", &grid, &sol.u)?;
            out.summary(cli.command, &cfg, json!({ "hjb": to_json(&sol.summary()) }), timings(start))?;
        }
        Command::SolveFp => {
            let op = cfg.operator(&grid)?;
            let b = cfg.drift(&grid)?;
            let sol = solve_fp_with(&grid, &op, &b, &cfg.initial_measure(&grid)?, &fp_options(&cfg))?;
            out.field("m", &grid, &sol.m)?;
            let body = json!({
                "fp": to_json(&sol.summary()),
                "drift": { "bound": b.bound(), "beta_hat": b.beta_hat(), "seminorm": b.seminorm() },
            });
            out.summary(cli.command, &cfg, body, timings(start))?;
        }
        Command::SolveDual => {
            let op = cfg.operator(&grid)?;
            let b = cfg.drift(&grid)?;
            let phi: Vec<f64> = grid.xs().iter().map(|x| (x - 0.5).abs()).collect();
            let w = solve_dual(&grid, &op, &b, &phi, DualDirection::ForwardFromZero)?;
            out.field("w", &grid, &w)?;
            let fit = fit_holder_exponent(w.slice(grid.n_t()), 2.0 * grid.h(), 1.0 / 16.0);
            let symmetric = op.meta().symmetric_at_origin;
            let body = json!({
                "dual": {
                    "terminal_exponent": fit.exponent,
                    "fit_r_squared": fit.r_squared,
                    "beta_hat": b.beta_hat(),
                    "predicted_exponent": b.beta_hat() - dual_loss(op.two_sigma(), symmetric),
                },
            });
            out.summary(cli.command, &cfg, body, timings(start))?;
        }
        Command::SolveMfg => {
            let problem = mfg_problem(&cfg, grid)?;
            let sol = solve_mfg(&problem, None)?;
            out.field("u", &grid, &sol.u)?;
            out.field("m", &grid, &sol.m)?;
            out.field("b", &grid, sol.b.field())?;
            let rows: Vec<Vec<f64>> = sol.history.iter().enumerate().map(|(k, v)| vec![(k + 1) as f64, *v]).collect();
            out.table("history", &["iteration", "sup_tv_increment"], &rows)?;
            let mut body = json!({ "mfg": to_json(&sol.summary()) });
            if sol.converged && cfg.solver.multistart > 1 {
                let exp = uniqueness_experiment(&problem, cfg.solver.multistart, cfg.mc.seed)?;
                body["multistart"] = to_json(&exp);
            }
            out.summary(cli.command, &cfg, body, timings(start))?;
            if !sol.converged {
                return Err(Failure::NotConverged(format!(
                    "mfg: no convergence after {} iterations (last increment {:e})",
                    sol.iterations,
                    sol.history.last().copied().unwrap_or(f64::NAN)
                )));
            }
        }
        Command::Diagnose => {
            let op = cfg.operator(&grid)?;
            let pair = cfg.pair()?;
            let d = &cfg.diagnose;
            let gamma = d.gamma.or_else(|| pair.holder_exponent()).ok_or_else(|| {
                Failure::Validation("diagnose.gamma: the pair has no closed-form Hölder exponent; set it".into())
            })?;
            let symmetric = d.symmetric.unwrap_or(op.meta().symmetric_at_origin);
            let report = uniqueness_thresholds(op.two_sigma(), d.alpha, gamma, symmetric)?;
            let mut body = json!({
                "mfg_unique": report.mfg_unique.passed(),
                "fp_interval_nonempty": report.fp_interval_nonempty.passed(),
                "critical_q": critical_q(op.two_sigma() / 2.0)?,
                "thresholds": to_json(&report),
            });
            if let Some(beta) = d.beta {
                body["fp_unique_for_beta"] = json!(fp_unique_for_beta(op.two_sigma(), beta, symmetric).passed());
            }
            println!("mfg_unique = {}", report.mfg_unique.passed());
            out.summary(cli.command, &cfg, body, timings(start))?;
        }
        Command::SimulateSde => {
            let op = cfg.operator(&grid)?;
            let spec = cfg.levy_spec()?;
            let sampler = JumpSampler::for_spec(&spec, &op)?;
            let b = cfg.drift(&grid)?;
            let m0 = cfg.initial_measure(&grid)?;
            let hist = simulate_sde(&grid, &sampler, &b, &m0, &cfg.mc_options())?;
            out.field("law", &grid, &hist.laws)?;
            let fp = solve_fp_with(&grid, &op, &b, &m0, &fp_options(&cfg))?;
            let rows: Vec<Vec<f64>> =
                (0..=grid.n_t()).map(|k| vec![grid.t(k), tv_distance(hist.law(k), fp.m.slice(k))]).collect();
            out.table("tv", &["t", "tv_distance"], &rows)?;
            let tv_max = rows.iter().map(|r| r[1]).fold(0.0, f64::max);
            let tol = 3.0 / (hist.n_paths as f64).sqrt() + law_scheme_tolerance(&grid, &sampler, b.bound(), fp.substeps);
            let body = json!({
                "sde": {
                    "n_paths": hist.n_paths,
                    "method": format!("{:?}", sampler.method()),
                    "tv_max": tv_max,
                    "tolerance": tol,
                    "within_tolerance": tv_max <= tol,
                },
            });
            out.summary(cli.command, &cfg, body, timings(start))?;
        }
        Command::VerifyAll => {
            let report = verify_all_with(&cfg, cli.stable_output, |r| println!("{}", r.line()))?;
            let mut det = determinism_check(&cfg, cli.stable_output.then_some(&report))?;
            println!("{}", det.line());
            if cli.stable_output {
                det.seconds = None;
            }
            let mut all = report.criteria.clone();
            all.push(det.clone());
            let criteria = to_json(&all);
            let failed: Vec<u8> = report
                .criteria
                .iter()
                .chain(std::iter::once(&det))
                .filter(|c| !c.passed || (!cli.stable_output && c.within_runtime() == Some(false)))
                .map(|c| c.id)
                .collect();
            let body = json!({ "criteria": criteria, "all_passed": failed.is_empty() });
            out.summary(cli.command, &cfg, body, timings(start))?;
            if !failed.is_empty() {
                return Err(Failure::Acceptance(format!("verify-all: failed criteria {failed:?}")));
            }
        }
        Command::DefaultConfig => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, msg) = match f {
                Failure::Validation(m) => (EXIT_VALIDATION, m),
                Failure::Numerical(m) => (EXIT_NUMERICAL, m),
                Failure::NotConverged(m) => (EXIT_NONCONVERGENCE, m),
                Failure::Acceptance(m) => (EXIT_ACCEPTANCE, m),
                Failure::Io(m) => (EXIT_VALIDATION, format!("io: {m}")),
            };
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
