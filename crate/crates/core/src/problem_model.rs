//! The delay integrodifferential problem, its hypotheses and constant estimates.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::psi_calculus::PsiFunction;
use crate::special_functions::{beta_fn, gamma};

/// `f(t, u(t), u(g(t)), Q)`.
pub type ForcingFn = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;
/// `h(t, s, u(s), u(g(s)))`.
pub type KernelFn = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Derivative orders `(alpha, beta)` and `gamma = alpha + beta (1 - alpha)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalOrder {
    pub alpha: f64,
    pub beta: f64,
    gamma: f64,
}

impl FractionalOrder {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidProblem(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidProblem(format!("beta must lie in [0, 1], got {beta}")));
        }
        Ok(Self {
            alpha,
            beta,
            gamma: alpha + beta * (1.0 - alpha),
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Hilfer-type delay problem on `[-r, b]`.
#[derive(Clone)]
pub struct DelayFFIDE {
    pub order: FractionalOrder,
    pub psi: PsiFunction,
    pub f: ForcingFn,
    /// `None` drops the Volterra term entirely.
    pub h_kernel: Option<KernelFn>,
    pub g: ScalarFn,
    pub phi: ScalarFn,
    pub u0: f64,
    pub b: f64,
    pub r: f64,
    pub lipschitz_f: f64,
    pub lipschitz_h: f64,
}

impl fmt::Debug for DelayFFIDE {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DelayFFIDE")
            .field("order", &self.order)
            .field("psi", &self.psi)
            .field("has_kernel", &self.h_kernel.is_some())
            .field("u0", &self.u0)
            .field("b", &self.b)
            .field("r", &self.r)
            .field("lipschitz_f", &self.lipschitz_f)
            .field("lipschitz_h", &self.lipschitz_h)
            .finish()
    }
}

impl DelayFFIDE {
    /// Problem with `f = 0`, no kernel, `g(t) = t`, `phi = 0`, `u0 = 0`.
    pub fn new(order: FractionalOrder, psi: PsiFunction, b: f64, r: f64) -> Self {
        Self {
            order,
            psi,
            f: Arc::new(|_, _, _, _| 0.0),
            h_kernel: None,
            g: Arc::new(|t| t),
            phi: Arc::new(|_| 0.0),
            u0: 0.0,
            b,
            r,
            lipschitz_f: 0.0,
            lipschitz_h: 0.0,
        }
    }

    pub fn with_forcing(mut self, f: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.f = Arc::new(f);
        self
    }

    pub fn with_kernel(mut self, h: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.h_kernel = Some(Arc::new(h));
        self
    }

    pub fn with_delay(mut self, g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.g = Arc::new(g);
        self
    }

    pub fn with_history(mut self, phi: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.phi = Arc::new(phi);
        self
    }

    pub fn with_initial(mut self, u0: f64) -> Self {
        self.u0 = u0;
        self
    }

    pub fn with_lipschitz(mut self, lipschitz_f: f64, lipschitz_h: f64) -> Self {
        self.lipschitz_f = lipschitz_f;
        self.lipschitz_h = lipschitz_h;
        self
    }

    /// `psi(b) - psi(0)`.
    pub fn span(&self) -> f64 {
        self.psi.offset(self.b)
    }

    /// Check the structural invariants on a sample of `[-r, b]`.
    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::InvalidProblem(format!("horizon b must be positive, got {}", self.b)));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::InvalidProblem(format!("delay depth r must be positive, got {}", self.r)));
        }
        if !self.u0.is_finite() {
            return Err(Error::InvalidProblem("u0 must be finite".into()));
        }
        if !(self.lipschitz_f >= 0.0 && self.lipschitz_f.is_finite()) {
            return Err(Error::InvalidProblem(format!("L_f must be >= 0, got {}", self.lipschitz_f)));
        }
        if !(self.lipschitz_h >= 0.0 && self.lipschitz_h.is_finite()) {
            return Err(Error::InvalidProblem(format!("L_h must be >= 0, got {}", self.lipschitz_h)));
        }
        const SAMPLES: usize = 512;
        let nodes: Vec<f64> = (0..=SAMPLES).map(|i| self.b * i as f64 / SAMPLES as f64).collect();
        self.psi.validate_on(&nodes)?;
        for &t in &nodes {
            let value = (self.g)(t);
            if !value.is_finite() || value > t + 1e-12 {
                return Err(Error::InvalidProblem(format!("delay must satisfy g(t) <= t, got g({t}) = {value}")));
            }
            if value < -self.r - 1e-12 {
                return Err(Error::DelayOutOfRange { t, value, r: self.r });
            }
        }
        for i in 0..=SAMPLES {
            let t = -self.r + self.r * i as f64 / SAMPLES as f64;
            if !(self.phi)(t).is_finite() {
                return Err(Error::InvalidProblem(format!("history is not finite at t={t}")));
            }
        }
        Ok(())
    }
}

/// Grid estimates `(inf psi', sup psi')` on `[0, b]`.
pub fn estimate_zeta(problem: &DelayFFIDE) -> (f64, f64) {
    const SAMPLES: usize = 2000;
    (0..=SAMPLES)
        .map(|i| problem.psi.deriv(problem.b * i as f64 / SAMPLES as f64))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)))
}

/// Theta for an explicit `zeta`.
pub fn theta_with_zeta(problem: &DelayFFIDE, zeta: f64) -> f64 {
    theta_formula(problem, zeta)
}

fn theta_formula(problem: &DelayFFIDE, divisor: f64) -> f64 {
    if problem.lipschitz_f == 0.0 {
        return 0.0;
    }
    let (alpha, gamma_) = (problem.order.alpha, problem.order.gamma());
    let ga = gamma(alpha).expect("alpha in (0, 1)");
    let b1 = beta_fn(gamma_, alpha).expect("positive arguments");
    let b2 = beta_fn(gamma_ + 1.0, alpha).expect("positive arguments");
    2.0 * problem.lipschitz_f
        * (b1 / ga + problem.lipschitz_h / (divisor * gamma_) * b2 / ga)
        * problem.span().powf(alpha + 1.0)
}

/// `Theta = 2 L_f (B(gamma, alpha)/Gamma(alpha) + L_h/(zeta gamma) B(gamma+1, alpha)/Gamma(alpha)) X^(alpha+1)`
/// with `zeta = sup psi'` and `X = psi(b) - psi(0)`.
pub fn check_theta(problem: &DelayFFIDE) -> f64 {
    theta_formula(problem, estimate_zeta(problem).1)
}

/// Variant with `L_h / (b gamma)` in place of `L_h / (zeta gamma)`.
pub fn check_theta_horizon_variant(problem: &DelayFFIDE) -> f64 {
    theta_formula(problem, problem.b)
}

/// Left side of the Bielecki condition
/// `2 L_f e^(delta X) Gamma(gamma)/Gamma(gamma+alpha) (1 + L_h/(zeta (gamma+alpha))) X^(alpha+1)`.
pub fn check_bielecki(problem: &DelayFFIDE, delta: f64) -> f64 {
    if problem.lipschitz_f == 0.0 {
        return 0.0;
    }
    let (alpha, gamma_) = (problem.order.alpha, problem.order.gamma());
    let zeta = estimate_zeta(problem).1;
    let span = problem.span();
    let ratio = gamma(gamma_).expect("gamma in (0, 1]") / gamma(gamma_ + alpha).expect("positive");
    2.0 * problem.lipschitz_f
        * (delta * span).exp()
        * ratio
        * (1.0 + problem.lipschitz_h / (zeta * (gamma_ + alpha)))
        * span.powf(alpha + 1.0)
}

/// Candidate `delta` values: zero followed by a logarithmic sweep of `[1e-3, 1e3]`.
pub fn delta_search_grid() -> Vec<f64> {
    std::iter::once(0.0)
        .chain((0..=24).map(|k| 10f64.powf(-3.0 + 0.25 * k as f64)))
        .collect()
}

/// Smallest searched `delta` certifying the Bielecki condition, or the minimiser when none does.
pub fn search_delta(problem: &DelayFFIDE) -> (f64, f64) {
    let mut best = (0.0, f64::INFINITY);
    for delta in delta_search_grid() {
        let value = check_bielecki(problem, delta);
        if value < 1.0 {
            return (delta, value);
        }
        if value < best.1 {
            best = (delta, value);
        }
    }
    best
}

/// Sampling box for [`estimate_lipschitz`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzBox {
    pub t: (f64, f64),
    pub u: (f64, f64),
}

impl LipschitzBox {
    pub fn for_problem(problem: &DelayFFIDE, amplitude: f64) -> Self {
        Self {
            t: (0.0, problem.b),
            u: (-amplitude, amplitude),
        }
    }
}

/// Largest observed difference quotients `(f ratio, h ratio)` over seeded random pairs.
///
/// This is a lower-bound witness for the Lipschitz constants, not a certificate.
pub fn estimate_lipschitz(
    problem: &DelayFFIDE,
    sample_count: usize,
    bounds: &LipschitzBox,
    seed: u64,
) -> Result<(f64, f64)> {
    if sample_count < 2 {
        return Err(Error::InvalidProblem(format!("need at least 2 samples, got {sample_count}")));
    }
    for (name, (lo, hi)) in [("t", bounds.t), ("u", bounds.u)] {
        if !(lo.is_finite() && hi.is_finite()) || !(hi > lo) {
            return Err(Error::InvalidProblem(format!("degenerate sampling interval for {name}: [{lo}, {hi}]")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut f_ratio, mut h_ratio) = (0.0f64, 0.0f64);
    for _ in 0..sample_count {
        let t = rng.random_range(bounds.t.0..bounds.t.1);
        let u: [f64; 3] = std::array::from_fn(|_| rng.random_range(bounds.u.0..bounds.u.1));
        let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(bounds.u.0..bounds.u.1));
        let dist: f64 = u.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        if dist > 0.0 {
            let df = ((problem.f)(t, u[0], u[1], u[2]) - (problem.f)(t, v[0], v[1], v[2])).abs();
            f_ratio = f_ratio.max(df / dist);
        }
        if let Some(h) = &problem.h_kernel {
            let s = t * rng.random::<f64>();
            let dist = (u[0] - v[0]).abs() + (u[1] - v[1]).abs();
            if dist > 0.0 {
                h_ratio = h_ratio.max((h(t, s, u[0], u[1]) - h(t, s, v[0], v[1])).abs() / dist);
            }
        }
    }
    Ok((f_ratio, h_ratio))
}

/// Summary of the contraction hypotheses for one problem.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub theta: f64,
    pub theta_ok: bool,
    /// Theta recomputed with `inf psi'` in place of `sup psi'`.
    pub theta_inf: f64,
    pub bielecki_lhs: f64,
    pub bielecki_ok: bool,
    pub zeta: f64,
    pub zeta_inf: f64,
    pub delta_used: f64,
    /// Observed `(f, h)` difference quotients.
    pub lipschitz_spot_check: (f64, f64),
    /// Set when a spot check exceeds the declared constant.
    pub lipschitz_exceeded: bool,
}

impl HypothesisReport {
    pub fn certified(&self) -> bool {
        self.theta_ok || self.bielecki_ok
    }
}

/// Evaluate Theta, the Bielecki condition (searching `delta` unless given) and a Lipschitz spot check.
pub fn hypothesis_report(
    problem: &DelayFFIDE,
    delta: Option<f64>,
    lipschitz_samples: usize,
    seed: u64,
) -> Result<HypothesisReport> {
    problem.validate()?;
    let (zeta_inf, zeta) = estimate_zeta(problem);
    let theta = theta_formula(problem, zeta);
    let theta_inf = theta_formula(problem, zeta_inf);
    let (delta_used, bielecki_lhs) = match delta {
        Some(d) if d >= 0.0 => (d, check_bielecki(problem, d)),
        Some(d) => return Err(Error::InvalidProblem(format!("delta must be >= 0, got {d}"))),
        None => search_delta(problem),
    };
    let spot = estimate_lipschitz(problem, lipschitz_samples, &LipschitzBox::for_problem(problem, 10.0), seed)?;
    let slack = 1e-9;
    Ok(HypothesisReport {
        theta,
        theta_ok: theta < 1.0,
        theta_inf,
        bielecki_lhs,
        bielecki_ok: bielecki_lhs < 1.0,
        zeta,
        zeta_inf,
        delta_used,
        lipschitz_spot_check: spot,
        lipschitz_exceeded: spot.0 > problem.lipschitz_f * (1.0 + slack) + slack
            || spot.1 > problem.lipschitz_h * (1.0 + slack) + slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn worked(lf: f64, lh: f64, b: f64) -> DelayFFIDE {
        DelayFFIDE::new(FractionalOrder::new(0.5, 1.0).unwrap(), PsiFunction::identity(), b, 0.5)
            .with_forcing(move |_, u1, u2, u3| lf * (u1 + u2 + u3))
            .with_kernel(move |_, _, v1, v2| lh * (v1 + v2))
            .with_delay(|t| t - 0.5)
            .with_history(|_| 1.0)
            .with_initial(1.0)
            .with_lipschitz(lf, lh)
    }

    // 0.1 * (2/sqrt(pi) + 0.1 * (4/3)/sqrt(pi)), evaluated in 30-digit arithmetic
    const WORKED_THETA: f64 = 0.120_360_444_490_188_01;

    #[test]
    fn order_validation() {
        let o = FractionalOrder::new(0.5, 0.5).unwrap();
        assert_eq!(o.gamma(), 0.75);
        assert_eq!(FractionalOrder::new(0.3, 1.0).unwrap().gamma(), 1.0);
        assert!(FractionalOrder::new(0.0, 0.5).is_err());
        assert!(FractionalOrder::new(1.0, 0.5).is_err());
        assert!(FractionalOrder::new(0.5, 1.5).is_err());
    }

    #[test]
    fn theta_worked_example() {
        let p = worked(0.05, 0.1, 1.0);
        assert!((check_theta(&p) - WORKED_THETA).abs() < 1e-12);
        assert_eq!(check_theta(&worked(0.0, 0.1, 1.0)), 0.0);
        let doubled = check_theta(&worked(0.1, 0.1, 1.0));
        assert!((doubled - 2.0 * WORKED_THETA).abs() < 1e-12);
    }

    #[test]
    fn bielecki_worked_example() {
        let p = worked(0.05, 0.1, 1.0);
        // 0.1 / Gamma(1.5) * (1 + 0.1 / 1.5)
        let expected = 0.1 / 0.886_226_925_452_758 * (1.0 + 0.1 / 1.5);
        assert!((check_bielecki(&p, 0.0) - expected).abs() < 1e-12);
        assert!((check_bielecki(&p, 0.0) - check_theta(&p)).abs() < 1e-12);
        assert!(check_bielecki(&p, 0.5) > check_bielecki(&p, 0.0));
        assert_eq!(check_bielecki(&worked(0.0, 0.1, 1.0), 3.0), 0.0);
    }

    #[test]
    fn delta_search_prefers_zero() {
        let p = worked(0.05, 0.1, 1.0);
        assert_eq!(search_delta(&p).0, 0.0);
        let hard = worked(1.0, 0.1, 1.0);
        let (delta, value) = search_delta(&hard);
        assert!(value >= 1.0);
        assert_eq!(delta, 0.0);
    }

    #[test]
    fn lipschitz_estimates() {
        let p = worked(0.05, 0.0, 1.0).with_kernel(|_, _, _, _| 0.0);
        let bounds = LipschitzBox::for_problem(&p, 5.0);
        let (lf, lh) = estimate_lipschitz(&p, 2000, &bounds, 7).unwrap();
        assert!(lf <= 0.05 + 1e-12 && lf > 0.0499);
        assert_eq!(lh, 0.0);
        let zero = DelayFFIDE::new(FractionalOrder::new(0.5, 1.0).unwrap(), PsiFunction::identity(), 1.0, 0.5);
        assert_eq!(estimate_lipschitz(&zero, 100, &bounds, 1).unwrap(), (0.0, 0.0));
        let sine = zero.clone().with_forcing(|_, u1, _, _| u1.sin());
        assert!(estimate_lipschitz(&sine, 500, &bounds, 3).unwrap().0 <= 1.0);
        let flat = LipschitzBox { t: (0.0, 1.0), u: (2.0, 2.0) };
        assert!(estimate_lipschitz(&p, 10, &flat, 1).is_err());
        assert_eq!(
            estimate_lipschitz(&p, 300, &bounds, 11).unwrap(),
            estimate_lipschitz(&p, 300, &bounds, 11).unwrap()
        );
    }

    #[test]
    fn validation_catches_bad_delay() {
        let p = worked(0.05, 0.1, 1.0).with_delay(|t| t + 0.1);
        assert!(matches!(p.validate(), Err(Error::InvalidProblem(_))));
        let deep = worked(0.05, 0.1, 1.0).with_delay(|t| t - 2.0);
        assert!(matches!(deep.validate(), Err(Error::DelayOutOfRange { .. })));
        assert!(worked(0.05, 0.1, 1.0).validate().is_ok());
    }

    #[test]
    fn report_fields() {
        let report = hypothesis_report(&worked(0.05, 0.1, 1.0), None, 200, 1).unwrap();
        assert!(report.theta_ok && report.bielecki_ok && report.certified());
        assert_eq!(report.zeta, 1.0);
        assert!(!report.lipschitz_exceeded);
        let lying = worked(0.05, 0.1, 1.0).with_lipschitz(0.01, 0.1);
        assert!(hypothesis_report(&lying, None, 200, 1).unwrap().lipschitz_exceeded);
    }

    proptest! {
        #[test]
        fn theta_monotone(lf in 0.01f64..1.0, lh in 0.0f64..1.0, b in 0.1f64..3.0, d in 0.0f64..0.5) {
            let base = check_theta(&worked(lf, lh, b));
            prop_assert!(check_theta(&worked(lf + d, lh, b)) >= base);
            prop_assert!(check_theta(&worked(lf, lh + d, b)) >= base);
            prop_assert!(check_theta(&worked(lf, lh, b + d)) >= base);
        }
    }
}
