//! Picard iteration on the equivalent integral equation
//!
//! ```text
//! u(t) = (psi(t)-psi(0))^(gamma-1)/Gamma(gamma) u0 + I^{alpha;psi} F(t),
//! F(s) = f(s, u(s), u(g(s)), int_0^s h(s, tau, u(tau), u(g(tau))) dtau)
//! ```
//!
//! carried out on weighted values `W = (psi(t)-psi(0))^(1-gamma) u`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::problem_model::{check_theta, search_delta, DelayFFIDE};
use crate::psi_calculus::{unweight, weighted_difference_norm, FractionalIntegral, Grid, GridSpacing, Trajectory};
use crate::special_functions::gamma;

/// Distance used for the stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum NormKind {
    #[default]
    Weighted,
    Bielecki(f64),
}

impl NormKind {
    fn delta(self) -> f64 {
        match self {
            NormKind::Weighted => 0.0,
            NormKind::Bielecki(delta) => delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    /// Number of intervals `N` on `[0, b]`.
    pub grid_size: usize,
    pub inner_quad_nodes: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub norm_kind: NormKind,
    pub spacing: GridSpacing,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            grid_size: 1000,
            inner_quad_nodes: 64,
            tol: 1e-10,
            max_iter: 200,
            norm_kind: NormKind::Weighted,
            spacing: GridSpacing::Psi,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(Error::InvalidProblem(format!("grid_size must be >= 2, got {}", self.grid_size)));
        }
        if self.inner_quad_nodes < 2 {
            return Err(Error::InvalidProblem(format!(
                "inner_quad_nodes must be >= 2, got {}",
                self.inner_quad_nodes
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidProblem(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidProblem("max_iter must be >= 1".into()));
        }
        if let NormKind::Bielecki(delta) = self.norm_kind {
            if !(delta >= 0.0 && delta.is_finite()) {
                return Err(Error::InvalidProblem(format!("Bielecki delta must be >= 0, got {delta}")));
            }
        }
        Ok(())
    }

    pub fn build_grid(&self, problem: &DelayFFIDE) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::new(&problem.psi, problem.b, problem.r, self.grid_size, self.spacing)?))
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub trajectory: Trajectory,
    pub residual_history: Vec<f64>,
    pub observed_ratio: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Neither Theta < 1 nor the Bielecki condition held for the searched `delta`.
    pub outside_guarantee: bool,
    /// `delta` certifying the Bielecki condition, when Theta alone does not.
    pub certifying_delta: Option<f64>,
}

/// `u(t)` for any `t` in `[-r, b]`: history on `[-r, 0]`, weighted interpolation after.
fn value_at(problem: &DelayFFIDE, traj: &Trajectory, t: f64) -> f64 {
    if t <= 0.0 {
        (problem.phi)(t)
    } else {
        traj.raw_at_offset(problem.psi.offset(t))
    }
}

fn delayed_value(problem: &DelayFFIDE, traj: &Trajectory, s: f64) -> Result<f64> {
    let gs = (problem.g)(s);
    if gs < -problem.r - 1e-12 || gs.is_nan() {
        return Err(Error::DelayOutOfRange { t: s, value: gs, r: problem.r });
    }
    if gs == 0.0 && s == 0.0 {
        // undelayed argument at the origin: the weighted limit, not the history
        return Ok(traj.weighted[0]);
    }
    Ok(value_at(problem, traj, gs.max(-problem.r)))
}

/// Volterra term `int_0^s h(s, tau, u(tau), u(g(tau))) dtau`.
///
/// Trapezoid in `y` with `x(tau) = x_s y^(1/gamma)`, which absorbs the
/// `x^(gamma-1)` growth of `u` near the origin; for `gamma = 1` and `psi(t) = t`
/// this is the plain trapezoid on `[0, s]`.
fn inner_integral(problem: &DelayFFIDE, traj: &Trajectory, s: f64, x_s: f64, nodes: usize) -> Result<f64> {
    let Some(h) = &problem.h_kernel else {
        return Ok(0.0);
    };
    if x_s <= 0.0 {
        return Ok(0.0);
    }
    let gamma_ = traj.gamma;
    let exponent = 1.0 / gamma_;
    let integrand = |y: f64| -> Result<f64> {
        let x = x_s * y.powf(exponent);
        let tau = problem.psi.invert_offset(x, problem.b);
        let dx_dy = x_s * exponent * y.powf(exponent - 1.0);
        let u_tau = if tau <= 0.0 { traj.weighted[0] } else { traj.raw_at_offset(x) };
        let u_delay = delayed_value(problem, traj, tau)?;
        Ok(h(s, tau, u_tau, u_delay) * dx_dy / problem.psi.deriv(tau))
    };
    let m = nodes as f64;
    let mut total = 0.0;
    for k in 1..nodes {
        total += integrand(k as f64 / m)?;
    }
    let first = if gamma_ < 1.0 {
        2.0 * integrand(1.0 / m)? - integrand(2.0 / m)?
    } else {
        integrand(0.0)?
    };
    total += 0.5 * (first + integrand(1.0)?);
    Ok(total / m)
}

/// `F(s) = f(s, u(s), u(g(s)), Q(s))` with the Volterra term by trapezoid.
pub fn eval_f(problem: &DelayFFIDE, traj: &Trajectory, s: f64, inner_quad_nodes: usize) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("F is evaluated on (0, b], got s={s}")));
    }
    let x_s = problem.psi.offset(s);
    eval_f_at(problem, traj, s, x_s, inner_quad_nodes)
}

fn eval_f_at(problem: &DelayFFIDE, traj: &Trajectory, s: f64, x_s: f64, inner: usize) -> Result<f64> {
    let u_s = if x_s > 0.0 { traj.raw_at_offset(x_s) } else { traj.weighted[0] };
    let u_delay = delayed_value(problem, traj, s)?;
    let q = inner_integral(problem, traj, s, x_s, inner)?;
    Ok((problem.f)(s, u_s, u_delay, q))
}

/// The fixed-point map on a fixed grid, with its quadrature weights precomputed.
#[derive(Debug, Clone)]
pub struct PicardMap {
    grid: Arc<Grid>,
    integral: FractionalIntegral,
    initial_weight: f64,
    history: Vec<f64>,
    inner_quad_nodes: usize,
}

impl PicardMap {
    pub fn new(problem: &DelayFFIDE, grid: Arc<Grid>, inner_quad_nodes: usize) -> Result<Self> {
        let gamma_ = problem.order.gamma();
        let integral = FractionalIntegral::new(problem.order.alpha, 1.0 - gamma_, &grid)?;
        let history = grid.history_nodes().iter().map(|&t| (problem.phi)(t)).collect();
        Ok(Self {
            initial_weight: problem.u0 / gamma(gamma_)?,
            integral,
            history,
            inner_quad_nodes,
            grid,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `x^(1-gamma) u0/Gamma(gamma) x^(gamma-1)`: the homogeneous solution in weighted form.
    pub fn homogeneous(&self, gamma_: f64) -> Trajectory {
        Trajectory {
            grid: Arc::clone(&self.grid),
            gamma: gamma_,
            weighted: vec![self.initial_weight; self.grid.len()],
            history_values: self.history.clone(),
        }
    }

    /// `x^(1-gamma) F` at every node; the origin value is a limit probe when `gamma < 1`.
    pub fn weighted_forcing(&self, problem: &DelayFFIDE, traj: &Trajectory) -> Result<Vec<f64>> {
        let mu = 1.0 - traj.gamma;
        let offsets = self.grid.offsets();
        let nodes = self.grid.nodes();
        let inner = self.inner_quad_nodes;
        let mut samples = (1..nodes.len())
            .into_par_iter()
            .map(|i| {
                let value = eval_f_at(problem, traj, nodes[i], offsets[i], inner)?;
                Ok(if mu > 0.0 { offsets[i].powf(mu) * value } else { value })
            })
            .collect::<Result<Vec<f64>>>()?;
        let origin = if mu > 0.0 {
            let x = 1e-9 * offsets[1];
            let t = problem.psi.invert_offset(x, problem.b).max(f64::MIN_POSITIVE);
            x.powf(mu) * eval_f_at(problem, traj, t, x, inner)?
        } else {
            eval_f_at(problem, traj, 0.0, 0.0, inner)?
        };
        samples.insert(0, origin);
        Ok(samples)
    }

    /// One Picard step; `extra` adds weighted samples `x^(1-gamma) eta` to the forcing.
    pub fn apply(&self, problem: &DelayFFIDE, traj: &Trajectory, extra: Option<&[f64]>) -> Result<Trajectory> {
        if !Arc::ptr_eq(&traj.grid, &self.grid) && *traj.grid != *self.grid {
            return Err(Error::GridMismatch);
        }
        let mut forcing = self.weighted_forcing(problem, traj)?;
        if let Some(extra) = extra {
            if extra.len() != forcing.len() {
                return Err(Error::GridMismatch);
            }
            forcing.iter_mut().zip(extra).for_each(|(f, e)| *f += e);
        }
        let mu = 1.0 - traj.gamma;
        let integral = self.integral.apply(&forcing);
        let offsets = self.grid.offsets();
        let weighted: Vec<f64> = integral
            .iter()
            .zip(offsets)
            .enumerate()
            .map(|(i, (&value, &x))| {
                if i == 0 {
                    self.initial_weight
                } else if mu > 0.0 {
                    self.initial_weight + x.powf(mu) * value
                } else {
                    self.initial_weight + value
                }
            })
            .collect();
        Ok(Trajectory {
            grid: Arc::clone(&self.grid),
            gamma: traj.gamma,
            weighted,
            history_values: self.history.clone(),
        })
    }
}

/// A single application of the fixed-point map on the grid of `traj`.
pub fn picard_step(problem: &DelayFFIDE, traj: &Trajectory, config: &SolveConfig) -> Result<Trajectory> {
    config.validate()?;
    PicardMap::new(problem, Arc::clone(&traj.grid), config.inner_quad_nodes)?.apply(problem, traj, None)
}

/// Geometric mean of successive residual ratios, ignoring trailing zeros.
pub fn observed_ratio(residuals: &[f64]) -> f64 {
    let positive: Vec<f64> = residuals.iter().copied().take_while(|&r| r > 0.0).collect();
    if positive.len() < 2 {
        return 0.0;
    }
    let n = (positive.len() - 1) as f64;
    (positive[positive.len() - 1] / positive[0]).powf(1.0 / n)
}

/// Iterate `map` from `start` until the residual drops below `config.tol`.
pub fn iterate(
    problem: &DelayFFIDE,
    map: &PicardMap,
    start: Trajectory,
    extra: Option<&[f64]>,
    config: &SolveConfig,
) -> Result<(Trajectory, Vec<f64>, bool)> {
    let delta = config.norm_kind.delta();
    let mut current = start;
    let mut residuals = Vec::new();
    for iteration in 1..=config.max_iter {
        let next = map.apply(problem, &current, extra)?;
        if let Some(bad) = next.weighted.iter().position(|w| !w.is_finite()) {
            return Err(Error::Divergence {
                iteration,
                reason: format!("non-finite weighted value at node {bad}"),
            });
        }
        let residual = weighted_difference_norm(&next.weighted, &current.weighted, map.grid().offsets(), delta);
        if !residual.is_finite() {
            return Err(Error::Divergence {
                iteration,
                reason: "residual overflowed".into(),
            });
        }
        residuals.push(residual);
        current = next;
        if residual <= config.tol {
            return Ok((current, residuals, true));
        }
    }
    Ok((current, residuals, false))
}

/// Solve by Picard iteration from the homogeneous solution.
pub fn solve(problem: &DelayFFIDE, config: &SolveConfig) -> Result<SolveResult> {
    problem.validate()?;
    config.validate()?;
    let grid = config.build_grid(problem)?;
    let map = PicardMap::new(problem, grid, config.inner_quad_nodes)?;
    let start = map.homogeneous(problem.order.gamma());
    let (trajectory, residual_history, converged) = iterate(problem, &map, start, None, config)?;
    let theta_ok = check_theta(problem) < 1.0;
    let (delta, lhs) = search_delta(problem);
    let bielecki_ok = lhs < 1.0;
    Ok(SolveResult {
        observed_ratio: observed_ratio(&residual_history),
        iterations: residual_history.len(),
        trajectory,
        residual_history,
        converged,
        outside_guarantee: !theta_ok && !bielecki_ok,
        certifying_delta: (!theta_ok && bielecki_ok).then_some(delta),
    })
}

/// `u` at every node, `(psi(t)-psi(0))^(gamma-1) W`; infinite at the origin when `gamma < 1`.
pub fn raw_solution(result: &SolveResult) -> Vec<f64> {
    let traj = &result.trajectory;
    traj.weighted
        .iter()
        .zip(traj.grid.offsets())
        .map(|(&w, &x)| unweight(w, x, traj.weight_exponent()))
        .collect()
}
