//! The four subcommands. Each writes a human summary to `out` and returns the process exit code.

use std::fmt;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use hilfer_lab::picard_solver::raw_solution;
use hilfer_lab::problem_model::{check_theta_horizon_variant, hypothesis_report};
use hilfer_lab::psi_calculus::{frac_integral_grid, power_rule_error, semigroup_error};
use hilfer_lab::{solve, Error, Grid, GridSpacing, NormKind, PsiFunction, StabilityLab};

use crate::config::{build_psi, ConfigError, ExperimentConfig, Format, FunctionSpec};
use crate::output::{format_float, Cell, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_UNCERTIFIED: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// Random pairs drawn for the Lipschitz spot check.
const LIPSCHITZ_SAMPLES: usize = 4096;

#[derive(Debug)]
pub enum CommandError {
    Config(ConfigError),
    Output(io::Error),
    Solver(Error),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) | CommandError::Output(_) => EXIT_CONFIG,
            CommandError::Solver(_) => EXIT_DIVERGED,
        }
    }
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommandError::Config(e) => write!(f, "config error: {e}"),
            CommandError::Output(e) => write!(f, "output error: {e}"),
            CommandError::Solver(e) => write!(f, "solver error: {e}"),
        }
    }
}

impl std::error::Error for CommandError {}

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        CommandError::Config(e)
    }
}

impl From<io::Error> for CommandError {
    fn from(e: io::Error) -> Self {
        CommandError::Output(e)
    }
}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        CommandError::Solver(e)
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub grid: Option<usize>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub format: Option<Format>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(n) = self.grid {
            config.solve.grid_size = n;
        }
        if let Some(tol) = self.tol {
            config.solve.tol = tol;
        }
        if let Some(dir) = &self.out {
            config.output.dir = dir.clone();
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(format) = self.format {
            config.output.format = format;
        }
    }
}

/// Read, override, then validate.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let mut config = ExperimentConfig::read_unchecked(path)?;
    overrides.apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn yes_no(flag: bool) -> &'static str {
    if flag {
        "yes"
    } else {
        "no"
    }
}

pub fn cmd_check(config: &ExperimentConfig, debug: bool, out: &mut dyn Write) -> Result<i32, CommandError> {
    let problem = config.build_problem()?;
    let delta = match config.solve_config()?.norm_kind {
        NormKind::Bielecki(d) if d > 0.0 => Some(d),
        _ => None,
    };
    let report = hypothesis_report(&problem, delta, LIPSCHITZ_SAMPLES, config.seed)?;
    writeln!(out, "theta            {} (< 1: {})", format_float(report.theta), yes_no(report.theta_ok))?;
    writeln!(out, "theta (inf psi') {}", format_float(report.theta_inf))?;
    writeln!(
        out,
        "bielecki         {} at delta = {} (< 1: {})",
        format_float(report.bielecki_lhs),
        format_float(report.delta_used),
        yes_no(report.bielecki_ok)
    )?;
    writeln!(
        out,
        "psi' range       [{}, {}]",
        format_float(report.zeta_inf),
        format_float(report.zeta)
    )?;
    let (f_ratio, h_ratio) = report.lipschitz_spot_check;
    writeln!(
        out,
        "lipschitz f      observed {} declared {}",
        format_float(f_ratio),
        format_float(problem.lipschitz_f)
    )?;
    writeln!(
        out,
        "lipschitz h      observed {} declared {}",
        format_float(h_ratio),
        format_float(problem.lipschitz_h)
    )?;
    if report.lipschitz_exceeded {
        writeln!(out, "warning: observed difference quotients exceed the declared Lipschitz constants")?;
    }
    if debug {
        writeln!(
            out,
            "theta (L_h/(b gamma) variant) {}",
            format_float(check_theta_horizon_variant(&problem))
        )?;
    }
    writeln!(out, "certified        {}", yes_no(report.certified()))?;

    let mut table = Table::new(&[
        "theta",
        "theta_ok",
        "theta_inf",
        "bielecki_lhs",
        "bielecki_ok",
        "delta_used",
        "zeta",
        "zeta_inf",
        "lipschitz_f_observed",
        "lipschitz_h_observed",
        "lipschitz_exceeded",
        "certified",
    ]);
    table.push(vec![
        Cell::Num(report.theta),
        Cell::Bool(report.theta_ok),
        Cell::Num(report.theta_inf),
        Cell::Num(report.bielecki_lhs),
        Cell::Bool(report.bielecki_ok),
        Cell::Num(report.delta_used),
        Cell::Num(report.zeta),
        Cell::Num(report.zeta_inf),
        Cell::Num(f_ratio),
        Cell::Num(h_ratio),
        Cell::Bool(report.lipschitz_exceeded),
        Cell::Bool(report.certified()),
    ]);
    table.write(&config.output.dir, "hypotheses", config.output.format)?;
    Ok(if report.certified() { EXIT_OK } else { EXIT_UNCERTIFIED })
}

pub fn cmd_solve(config: &ExperimentConfig, out: &mut dyn Write) -> Result<i32, CommandError> {
    let problem = config.build_problem()?;
    let solve_config = config.solve_config()?;
    let result = match solve(&problem, &solve_config) {
        Ok(result) => result,
        Err(e @ Error::Divergence { .. }) => {
            writeln!(out, "converged        false")?;
            writeln!(out, "{e}")?;
            return Ok(EXIT_DIVERGED);
        }
        Err(e) => return Err(e.into()),
    };
    let traj = &result.trajectory;
    let grid = &traj.grid;
    let iterations = result.iterations as u64;

    let mut table = Table::new(&["t", "psi_t", "weighted_u", "u", "residual_iter_count"]);
    let history = grid.history_nodes();
    // the history grid ends at t = 0, which the solution rows already cover
    for (&t, &u) in history.iter().zip(&traj.history_values).take(history.len().saturating_sub(1)) {
        table.push(vec![
            Cell::Num(t),
            Cell::Num(problem.psi.eval(t)),
            Cell::Empty,
            Cell::Num(u),
            Cell::Int(iterations),
        ]);
    }
    for ((&t, &w), u) in grid.nodes().iter().zip(&traj.weighted).zip(raw_solution(&result)) {
        table.push(vec![
            Cell::Num(t),
            Cell::Num(problem.psi.eval(t)),
            Cell::Num(w),
            Cell::Num(u),
            Cell::Int(iterations),
        ]);
    }
    let path = table.write(&config.output.dir, "solution", config.output.format)?;

    let mut residuals = Table::new(&["iteration", "residual"]);
    for (k, &r) in result.residual_history.iter().enumerate() {
        residuals.push(vec![Cell::Int(k as u64 + 1), Cell::Num(r)]);
    }
    residuals.write(&config.output.dir, "residuals", config.output.format)?;

    writeln!(out, "converged        {}", result.converged)?;
    writeln!(out, "iterations       {}", result.iterations)?;
    if let Some(last) = result.residual_history.last() {
        writeln!(out, "final residual   {}", format_float(*last))?;
    }
    writeln!(out, "observed ratio   {}", format_float(result.observed_ratio))?;
    if result.outside_guarantee {
        writeln!(out, "warning: neither contraction condition holds; convergence is not guaranteed")?;
    }
    if let Some(delta) = result.certifying_delta {
        writeln!(out, "certified by the Bielecki condition at delta = {}", format_float(delta))?;
    }
    writeln!(out, "wrote {}", path.display())?;
    Ok(if result.converged { EXIT_OK } else { EXIT_DIVERGED })
}

pub fn cmd_stability(config: &ExperimentConfig, out: &mut dyn Write) -> Result<i32, CommandError> {
    let problem = config.build_problem()?;
    let solve_config = config.solve_config()?;
    let perts = config.perturbations()?;
    if perts.is_empty() {
        return Err(ConfigError::Invalid {
            field: "stability.perturbation".into(),
            message: "at least one perturbation is required".into(),
        }
        .into());
    }
    let certified = hypothesis_report(&problem, None, LIPSCHITZ_SAMPLES, config.seed)?.certified();
    let lab = match StabilityLab::new(&problem, &solve_config) {
        Ok(lab) => lab,
        Err(e @ Error::Divergence { .. }) => {
            writeln!(out, "{e}")?;
            return Ok(EXIT_DIVERGED);
        }
        Err(e) => return Err(e.into()),
    };
    let reports = match lab.verify_all(&perts) {
        Ok(reports) => reports,
        Err(e @ Error::Divergence { .. }) => {
            writeln!(out, "{e}")?;
            return Ok(EXIT_DIVERGED);
        }
        Err(e) => return Err(e.into()),
    };
    let grid = lab.reference().grid.clone();
    let dir = &config.output.dir;
    let format = config.output.format;

    let mut table = Table::new(&[
        "shape",
        "epsilon",
        "c_theoretical",
        "c_empirical",
        "passed",
        "kappa_used",
        "a_used",
        "slack",
    ]);
    for (k, report) in reports.iter().enumerate() {
        table.push(vec![
            Cell::Text(report.shape.clone()),
            Cell::Num(report.epsilon),
            Cell::Num(report.c_theoretical),
            Cell::Num(report.c_empirical),
            Cell::Bool(report.passed),
            Cell::Num(report.kappa_used),
            Cell::Num(report.a_used),
            Cell::Num(report.slack()),
        ]);
        write_profile(&grid, report, dir, &format!("profile_{k:03}"), format)?;
        writeln!(
            out,
            "{:<24} eps={} c_emp={} c_theory={} {}",
            report.shape,
            format_float(report.epsilon),
            format_float(report.c_empirical),
            format_float(report.c_theoretical),
            if report.passed { "passed" } else { "FAILED" }
        )?;
    }
    let path = table.write(dir, "stability", format)?;
    if reports.first().is_some_and(|r| r.small_span) {
        writeln!(out, "note: psi(b) - psi(0) < 1; the constant's derivation assumes a span of at least 1")?;
    }
    if !certified {
        writeln!(out, "note: contraction hypotheses not certified; results are advisory")?;
    }
    writeln!(out, "wrote {}", path.display())?;
    Ok(EXIT_OK)
}

fn write_profile(
    grid: &Grid,
    report: &hilfer_lab::StabilityReport,
    dir: &Path,
    stem: &str,
    format: Format,
) -> io::Result<PathBuf> {
    let mut table = Table::new(&["t", "ratio"]);
    let history = grid.history_nodes();
    // envelope equals 1 on the history window
    for (&t, &gap) in history.iter().zip(&report.history_gap).take(history.len().saturating_sub(1)) {
        table.push(vec![Cell::Num(t), Cell::Num(gap / report.epsilon)]);
    }
    for (&t, &ratio) in grid.nodes().iter().zip(&report.ratio_profile) {
        table.push(vec![Cell::Num(t), Cell::Num(ratio)]);
    }
    table.write(dir, stem, format)
}

/// `identity`, `exponential`, `shifted-power` (rho = 2) or `shifted-power:<rho>`.
pub fn parse_psi_name(name: &str) -> Result<PsiFunction, String> {
    let (kind, params) = match name.split_once(':') {
        Some((kind, rho)) => {
            let rho: f64 = rho.trim().parse().map_err(|_| format!("`{rho}` is not a number"))?;
            (kind.trim(), vec![rho])
        }
        None if name.trim() == "shifted-power" => ("shifted-power", vec![2.0]),
        None => (name.trim(), Vec::new()),
    };
    build_psi(&FunctionSpec {
        kind: kind.to_string(),
        params,
    })
    .map_err(|e| e.to_string())
}

const ALPHAS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
const SIGMAS: [f64; 4] = [0.875, 1.25, 1.625, 2.0];

fn classical_error(psi: &PsiFunction, n: usize) -> hilfer_lab::Result<f64> {
    let grid = Grid::new(psi, 1.0, 0.0, n, GridSpacing::Psi)?;
    let omega: Vec<f64> = grid.offsets().iter().map(|x| 1.0 + 2.0 * x).collect();
    let integral = frac_integral_grid(1.0, &omega, &grid)?;
    let scale = grid.total_offset() + grid.total_offset().powi(2);
    Ok(grid
        .offsets()
        .iter()
        .zip(&integral)
        .fold(0.0f64, |m, (x, v)| m.max((v - (x + x * x)).abs() / scale)))
}

/// One row per (identity, psi, N).
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorRow {
    pub identity: &'static str,
    pub psi: String,
    pub n: usize,
    pub error: f64,
    /// `log(e_prev / e) / log(n / n_prev)` against the previous grid size.
    pub order: Option<f64>,
}

pub fn operator_table(psis: &[(String, PsiFunction)], grids: &[usize]) -> hilfer_lab::Result<Vec<OperatorRow>> {
    let mut rows = Vec::new();
    for identity in ["power-rule", "semigroup", "classical"] {
        for (name, psi) in psis {
            let mut previous: Option<(usize, f64)> = None;
            for &n in grids {
                let error = match identity {
                    "power-rule" => {
                        let mut worst = 0.0f64;
                        for alpha in ALPHAS {
                            for sigma in SIGMAS {
                                worst = worst.max(power_rule_error(psi, alpha, sigma, 1.0, n)?);
                            }
                        }
                        worst
                    }
                    "semigroup" => {
                        let mut worst = 0.0f64;
                        for sigma in SIGMAS {
                            worst = worst.max(semigroup_error(psi, 0.3, 0.4, sigma, 1.0, n)?);
                        }
                        worst
                    }
                    _ => classical_error(psi, n)?,
                };
                let order = previous.map(|(m, e)| (e / error).ln() / (n as f64 / m as f64).ln());
                rows.push(OperatorRow {
                    identity,
                    psi: name.clone(),
                    n,
                    error,
                    order,
                });
                previous = Some((n, error));
            }
        }
    }
    Ok(rows)
}

pub fn cmd_verify_operators(
    psi_names: &[String],
    grids: &[usize],
    save: Option<(&Path, Format)>,
    out: &mut dyn Write,
) -> Result<i32, CommandError> {
    let names: Vec<String> = if psi_names.is_empty() {
        vec!["identity".into(), "exponential".into(), "shifted-power".into()]
    } else {
        psi_names.to_vec()
    };
    let mut psis = Vec::new();
    for name in names {
        let psi = parse_psi_name(&name).map_err(|message| ConfigError::Invalid {
            field: "--psi".into(),
            message,
        })?;
        psis.push((name, psi));
    }
    let rows = operator_table(&psis, grids)?;
    let mut table = Table::new(&["identity", "psi", "n", "max_rel_error", "order"]);
    writeln!(out, "{:<12} {:<20} {:>8} {:>24} {:>10}", "identity", "psi", "N", "max rel error", "order")?;
    for row in &rows {
        let order = row.order.map_or(String::from("-"), |p| format!("{p:.3}"));
        writeln!(
            out,
            "{:<12} {:<20} {:>8} {:>24} {:>10}",
            row.identity,
            row.psi,
            row.n,
            format_float(row.error),
            order
        )?;
        table.push(vec![
            Cell::Text(row.identity.into()),
            Cell::Text(row.psi.clone()),
            Cell::Int(row.n as u64),
            Cell::Num(row.error),
            row.order.map_or(Cell::Empty, Cell::Num),
        ]);
    }
    if let Some((dir, format)) = save {
        table.write(dir, "operators", format)?;
    }
    Ok(EXIT_OK)
}
