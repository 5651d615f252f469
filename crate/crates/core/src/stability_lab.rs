//! Ulam-Hyers-Mittag-Leffler stability experiments.
//!
//! A perturbation `eta_v = eps * shape(t) * E_alpha((psi(t)-psi(0))^alpha)` is added
//! to the forcing of the integral equation; the perturbed and unperturbed solutions
//! share history and initial datum, and their gap is compared against
//! `C * eps * E_alpha((psi(t)-psi(0))^alpha)`.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::picard_solver::{iterate, PicardMap, SolveConfig};
use crate::problem_model::{estimate_zeta, DelayFFIDE};
use crate::psi_calculus::{unweight, FractionalIntegral, Grid, Trajectory};
use crate::special_functions::{gamma, mittag_leffler, mittag_leffler_one, MlfParams};

/// Normalised shape `eta_hat` with `|eta_hat| <= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerturbationShape {
    Constant,
    Sine { omega: f64 },
    Square { omega: f64 },
    /// Seeded random Fourier sum scaled so its grid maximum is exactly one.
    RandomSmooth { seed: u64, modes: usize },
}

impl fmt::Display for PerturbationShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerturbationShape::Constant => write!(f, "constant"),
            PerturbationShape::Sine { omega } => write!(f, "sine({omega})"),
            PerturbationShape::Square { omega } => write!(f, "square({omega})"),
            PerturbationShape::RandomSmooth { seed, modes } => write!(f, "random({seed},{modes})"),
        }
    }
}

impl PerturbationShape {
    /// `eta_hat` at the grid nodes.
    pub fn sample(&self, nodes: &[f64]) -> Vec<f64> {
        match *self {
            PerturbationShape::Constant => vec![1.0; nodes.len()],
            PerturbationShape::Sine { omega } => nodes.iter().map(|t| (omega * t).sin()).collect(),
            PerturbationShape::Square { omega } => nodes
                .iter()
                .map(|t| if (omega * t).sin() >= 0.0 { 1.0 } else { -1.0 })
                .collect(),
            PerturbationShape::RandomSmooth { seed, modes } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let span = nodes.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
                let terms: Vec<(f64, f64, f64)> = (1..=modes.max(1))
                    .map(|k| {
                        let amplitude = rng.random_range(-1.0..1.0) / k as f64;
                        let phase = rng.random_range(0.0..2.0 * PI);
                        (k as f64 * PI / span, amplitude, phase)
                    })
                    .collect();
                let raw: Vec<f64> = nodes
                    .iter()
                    .map(|&t| terms.iter().map(|&(w, a, p)| a * (w * t + p).sin()).sum())
                    .collect();
                let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if peak == 0.0 {
                    return vec![1.0; nodes.len()];
                }
                raw.iter().map(|v| v / peak).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub epsilon: f64,
    pub shape: PerturbationShape,
}

impl Perturbation {
    pub fn new(epsilon: f64, shape: PerturbationShape) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidProblem(format!("perturbation epsilon must be > 0, got {epsilon}")));
        }
        Ok(Self { epsilon, shape })
    }

    /// `eta_v` at the grid nodes.
    pub fn realize(&self, grid: &Grid, alpha: f64) -> Result<Vec<f64>> {
        let envelope = envelope(grid, alpha)?;
        Ok(self
            .shape
            .sample(grid.nodes())
            .iter()
            .zip(&envelope)
            .map(|(s, e)| self.epsilon * s * e)
            .collect())
    }
}

/// `E_alpha((psi(t)-psi(0))^alpha)` at the grid nodes, checked to be nondecreasing.
pub fn envelope(grid: &Grid, alpha: f64) -> Result<Vec<f64>> {
    let values = grid
        .offsets()
        .iter()
        .map(|&x| mittag_leffler_one(alpha, x.powf(alpha)))
        .collect::<Result<Vec<f64>>>()?;
    if values.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("Mittag-Leffler envelope is not nondecreasing on the grid".into()));
    }
    Ok(values)
}

/// The theoretical constant and its ingredients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UhmlConstant {
    pub value: f64,
    pub kappa: f64,
    pub a: f64,
    /// `psi(b) - psi(0) < 1`, where the bound's derivation needs extra care.
    pub small_span: bool,
}

/// `C = 1 + 2 L_f X^alpha E_{1,alpha+1}(A X)` with `A = 2 L_f/Gamma(alpha+1) + L_h/kappa`, `kappa = sup psi'`.
pub fn uhml_constant(problem: &DelayFFIDE) -> Result<UhmlConstant> {
    let alpha = problem.order.alpha;
    let kappa = estimate_zeta(problem).1;
    let span = problem.span();
    let a = 2.0 * problem.lipschitz_f / gamma(alpha + 1.0)? + problem.lipschitz_h / kappa;
    let value = if problem.lipschitz_f == 0.0 {
        1.0
    } else {
        let ml = mittag_leffler(&MlfParams::two(1.0, alpha + 1.0), a * span)?;
        1.0 + 2.0 * problem.lipschitz_f * span.powf(alpha) * ml
    };
    Ok(UhmlConstant {
        value,
        kappa,
        a,
        small_span: span < 1.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub shape: String,
    pub epsilon: f64,
    pub c_theoretical: f64,
    /// `|v - u| / (eps E_alpha(x^alpha))` at the nodes of `[0, b]`.
    pub ratio_profile: Vec<f64>,
    /// `|v - u|` on the history nodes.
    pub history_gap: Vec<f64>,
    pub c_empirical: f64,
    pub passed: bool,
    pub kappa_used: f64,
    pub a_used: f64,
    pub small_span: bool,
}

impl StabilityReport {
    /// `c_theoretical / c_empirical`, informational.
    pub fn slack(&self) -> f64 {
        self.c_theoretical / self.c_empirical
    }
}

fn weighted_perturbation(grid: &Grid, eta: &[f64], mu: f64) -> Vec<f64> {
    eta.iter()
        .zip(grid.offsets())
        .enumerate()
        .map(|(i, (&e, &x))| {
            if mu == 0.0 {
                e
            } else if i == 0 {
                0.0
            } else {
                x.powf(mu) * e
            }
        })
        .collect()
}

/// Shared state for several experiments on one problem: the map and the unperturbed solution.
pub struct StabilityLab<'a> {
    problem: &'a DelayFFIDE,
    config: SolveConfig,
    map: PicardMap,
    reference: Trajectory,
    constant: UhmlConstant,
}

impl<'a> StabilityLab<'a> {
    pub fn new(problem: &'a DelayFFIDE, config: &SolveConfig) -> Result<Self> {
        problem.validate()?;
        config.validate()?;
        let map = PicardMap::new(problem, config.build_grid(problem)?, config.inner_quad_nodes)?;
        let start = map.homogeneous(problem.order.gamma());
        let (reference, residuals, converged) = iterate(problem, &map, start, None, config)?;
        if !converged {
            return Err(Error::Divergence {
                iteration: residuals.len(),
                reason: "unperturbed solve did not reach tolerance".into(),
            });
        }
        Ok(Self {
            problem,
            config: *config,
            map,
            reference,
            constant: uhml_constant(problem)?,
        })
    }

    pub fn reference(&self) -> &Trajectory {
        &self.reference
    }

    pub fn constant(&self) -> UhmlConstant {
        self.constant
    }

    pub fn solve_perturbed(&self, pert: &Perturbation) -> Result<Trajectory> {
        let grid = self.map.grid();
        let eta = pert.realize(grid, self.problem.order.alpha)?;
        let extra = weighted_perturbation(grid, &eta, 1.0 - self.problem.order.gamma());
        let start = self.map.homogeneous(self.problem.order.gamma());
        let (traj, residuals, converged) = iterate(self.problem, &self.map, start, Some(&extra), &self.config)?;
        if !converged {
            return Err(Error::Divergence {
                iteration: residuals.len(),
                reason: "perturbed solve did not reach tolerance".into(),
            });
        }
        Ok(traj)
    }

    pub fn verify(&self, pert: &Perturbation) -> Result<StabilityReport> {
        let perturbed = self.solve_perturbed(pert)?;
        compare(&self.reference, &perturbed, pert, self.problem.order.alpha, self.constant)
    }

    /// Experiments in parallel; reports come back in input order.
    pub fn verify_all(&self, perts: &[Perturbation]) -> Result<Vec<StabilityReport>> {
        perts.par_iter().map(|p| self.verify(p)).collect()
    }
}

/// Gap profile of two trajectories on the same grid.
pub fn compare(
    reference: &Trajectory,
    perturbed: &Trajectory,
    pert: &Perturbation,
    alpha: f64,
    constant: UhmlConstant,
) -> Result<StabilityReport> {
    if *reference.grid != *perturbed.grid || reference.gamma != perturbed.gamma {
        return Err(Error::GridMismatch);
    }
    let grid = &reference.grid;
    let envelope = envelope(grid, alpha)?;
    let mu = reference.weight_exponent();
    let ratio_profile: Vec<f64> = reference
        .weighted
        .iter()
        .zip(&perturbed.weighted)
        .zip(grid.offsets())
        .zip(&envelope)
        .map(|(((u, v), &x), e)| unweight(v - u, x, mu).abs() / (pert.epsilon * e))
        .collect();
    let history_gap: Vec<f64> = reference
        .history_values
        .iter()
        .zip(&perturbed.history_values)
        .map(|(u, v)| (v - u).abs())
        .collect();
    let c_empirical = ratio_profile.iter().fold(0.0f64, |m, &r| m.max(r));
    Ok(StabilityReport {
        shape: pert.shape.to_string(),
        epsilon: pert.epsilon,
        c_theoretical: constant.value,
        passed: ratio_profile.iter().all(|&r| r <= constant.value) && history_gap.iter().all(|&g| g == 0.0),
        c_empirical,
        ratio_profile,
        history_gap,
        kappa_used: constant.kappa,
        a_used: constant.a,
        small_span: constant.small_span,
    })
}

/// Perturbed solution on the grid `config` describes.
pub fn solve_perturbed(problem: &DelayFFIDE, pert: &Perturbation, config: &SolveConfig) -> Result<Trajectory> {
    StabilityLab::new(problem, config)?.solve_perturbed(pert)
}

/// Solve both problems and compare against the theoretical constant.
pub fn verify_uhml(problem: &DelayFFIDE, pert: &Perturbation, config: &SolveConfig) -> Result<StabilityReport> {
    StabilityLab::new(problem, config)?.verify(pert)
}

/// `max |I^alpha[E] - (E - 1)| / max |E - 1|` for the envelope `E = E_alpha(x^alpha)`.
pub fn envelope_integral_residual(grid: &Grid, alpha: f64) -> Result<f64> {
    let env = envelope(grid, alpha)?;
    let integral = FractionalIntegral::new(alpha, 0.0, grid)?.apply(&env);
    let (mut err, mut scale) = (0.0f64, 0.0f64);
    for (i, e) in integral.iter().zip(&env) {
        err = err.max((i - (e - 1.0)).abs());
        scale = scale.max((e - 1.0).abs());
    }
    Ok(err / scale)
}

fn cumulative_trapezoid(values: &[f64], t: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for i in 1..values.len() {
        out[i] = out[i - 1] + 0.5 * (t[i] - t[i - 1]) * (values[i] + values[i - 1]);
    }
    out
}

fn check_envelope_inputs(eta: &[f64], p: &[f64], q: &[f64], t: &[f64]) -> Result<()> {
    let n = t.len();
    if eta.len() != n || p.len() != n || q.len() != n || n < 2 {
        return Err(Error::InvalidGrid("envelope inputs must share a grid of at least 2 nodes".into()));
    }
    if t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid("abscissae must be strictly increasing".into()));
    }
    if eta.iter().chain(p).chain(q).any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain("envelope inputs must be finite and nonnegative".into()));
    }
    if eta.windows(2).any(|w| w[1] < w[0]) || eta[0] <= 0.0 {
        return Err(Error::Domain("eta must be positive and nondecreasing".into()));
    }
    Ok(())
}

/// `eta(t) [1 + int_0^t p(s) exp(int_0^s (p + q)) ds]` by cumulative trapezoid.
pub fn pachpatte_envelope(eta: &[f64], p: &[f64], q: &[f64], t: &[f64]) -> Result<Vec<f64>> {
    check_envelope_inputs(eta, p, q, t)?;
    let sum: Vec<f64> = p.iter().zip(q).map(|(a, b)| a + b).collect();
    let inner = cumulative_trapezoid(&sum, t);
    let integrand: Vec<f64> = p.iter().zip(&inner).map(|(a, i)| a * i.exp()).collect();
    let outer = cumulative_trapezoid(&integrand, t);
    Ok(eta.iter().zip(&outer).map(|(e, o)| e * (1.0 + o)).collect())
}

/// A function satisfying `x <= eta + int_0^t p(s) [x(s) + int_0^s q x] ds`, built by
/// forward left-rectangle iteration with seeded slack factors in `[0, 1]`.
pub fn pachpatte_witness(eta: &[f64], p: &[f64], q: &[f64], t: &[f64], seed: u64) -> Result<Vec<f64>> {
    check_envelope_inputs(eta, p, q, t)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; t.len()];
    let (mut outer, mut inner) = (0.0, 0.0);
    for i in 0..t.len() {
        if i > 0 {
            let h = t[i] - t[i - 1];
            outer += h * p[i - 1] * (x[i - 1] + inner);
            inner += h * q[i - 1] * x[i - 1];
        }
        x[i] = rng.random_range(0.0..=1.0) * (eta[i] + outer);
    }
    Ok(x)
}
