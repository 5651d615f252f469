//! Gamma, beta and Mittag-Leffler functions on the positive real line.
//!
//! The Mittag-Leffler function is evaluated by its power series only:
//!
//! ```text
//! E_{a,b}(z) = sum_{k>=0} z^k / Gamma(a k + b)
//! ```
//!
//! which is adequate for the bounded arguments produced by the solver and
//! the stability envelope. Arguments beyond [`MlfParams::z_max`] are rejected
//! rather than silently evaluated with a poorly conditioned series.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Largest argument accepted by [`gamma`]. `Gamma(171.7)` overflows `f64`.
pub const GAMMA_MAX_ARG: f64 = 170.0;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_sum(xm1: f64) -> f64 {
    LANCZOS_COEFFS[1..]
        .iter()
        .enumerate()
        .fold(LANCZOS_COEFFS[0], |acc, (i, c)| acc + c / (xm1 + (i + 1) as f64))
}

/// `Gamma(x)` for `0 < x <= 170`.
pub fn gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("gamma requires x > 0, got {x}")));
    }
    if x > GAMMA_MAX_ARG {
        return Err(Error::Overflow(format!("gamma({x}) exceeds f64 range")));
    }
    Ok(gamma_unchecked(x))
}

pub(crate) fn gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        return gamma_unchecked(x + 1.0) / x;
    }
    if x == x.floor() && x <= 23.0 {
        // exact in f64 up to 22!
        return (1..x as u64).fold(1.0, |acc, k| acc * k as f64);
    }
    let xm1 = x - 1.0;
    let t = xm1 + LANCZOS_G + 0.5;
    // split the power so t^(x-1/2) does not overflow before e^-t pulls it back
    let half = t.powf((xm1 + 0.5) / 2.0);
    (2.0 * PI).sqrt() * half * ((-t).exp() * half) * lanczos_sum(xm1)
}

/// Natural log of `Gamma(x)` for `x > 0`; finite well beyond the range of [`gamma`].
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("ln_gamma requires finite x > 0, got {x}")));
    }
    Ok(ln_gamma_unchecked(x))
}

fn ln_gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        return ln_gamma_unchecked(x + 1.0) - x.ln();
    }
    if x < 20.0 {
        return gamma_unchecked(x).ln();
    }
    let xm1 = x - 1.0;
    let t = xm1 + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (xm1 + 0.5) * t.ln() - t + lanczos_sum(xm1).ln()
}

/// Euler beta function `B(a, b) = Gamma(a) Gamma(b) / Gamma(a + b)`.
pub fn beta_fn(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::Domain(format!(
            "beta requires a > 0 and b > 0, got ({a}, {b})"
        )));
    }
    if a + b <= GAMMA_MAX_ARG {
        return Ok(gamma_unchecked(a) * gamma_unchecked(b) / gamma_unchecked(a + b));
    }
    Ok((ln_gamma_unchecked(a) + ln_gamma_unchecked(b) - ln_gamma_unchecked(a + b)).exp())
}

/// Parameters of the two-parameter Mittag-Leffler function `E_{alpha,beta}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlfParams {
    pub alpha: f64,
    pub beta: f64,
    /// Absolute magnitude below which a series term counts as negligible.
    pub series_tol: f64,
    pub max_terms: usize,
}

impl MlfParams {
    pub const DEFAULT_TOL: f64 = 1e-17;
    pub const DEFAULT_MAX_TERMS: usize = 10_000;

    /// `E_alpha`, i.e. `beta = 1`.
    pub fn one(alpha: f64) -> Self {
        Self::two(alpha, 1.0)
    }

    pub fn two(alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            series_tol: Self::DEFAULT_TOL,
            max_terms: Self::DEFAULT_MAX_TERMS,
        }
    }

    pub fn with_tol(mut self, series_tol: f64) -> Self {
        self.series_tol = series_tol;
        self
    }

    pub fn with_max_terms(mut self, max_terms: usize) -> Self {
        self.max_terms = max_terms;
        self
    }

    /// Largest `|z|` the series evaluation accepts for this order.
    pub fn z_max(&self) -> f64 {
        if self.alpha >= 0.3 {
            30.0
        } else {
            10.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !(self.beta > 0.0) {
            return Err(Error::Domain(format!(
                "Mittag-Leffler parameters must be positive, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        if !(self.series_tol > 0.0) || self.max_terms == 0 {
            return Err(Error::Domain(format!(
                "series_tol must be > 0 and max_terms >= 1 (got {}, {})",
                self.series_tol, self.max_terms
            )));
        }
        Ok(())
    }
}

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.carry += (self.sum - t) + value;
        } else {
            self.carry += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn series_term(z: f64, k: usize, alpha: f64, beta: f64) -> f64 {
    if k == 0 {
        return 1.0 / gamma_unchecked(beta);
    }
    if z == 0.0 {
        return 0.0;
    }
    let arg = alpha * k as f64 + beta;
    let k_i32 = i32::try_from(k).unwrap_or(i32::MAX);
    if arg <= GAMMA_MAX_ARG {
        let zk = z.powi(k_i32);
        if zk.is_finite() && zk != 0.0 {
            return zk / gamma_unchecked(arg);
        }
    }
    let sign = if z < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 };
    sign * (k as f64 * z.abs().ln() - ln_gamma_unchecked(arg)).exp()
}

/// `E_{alpha,beta}(z)` by compensated series summation.
///
/// Summation stops once three consecutive terms fall below `series_tol` in
/// magnitude; the first terms at small `alpha` can grow before they decay, so
/// a single small term is not enough.
pub fn mittag_leffler(params: &MlfParams, z: f64) -> Result<f64> {
    params.validate()?;
    if !z.is_finite() || z.abs() > params.z_max() {
        return Err(Error::Domain(format!(
            "Mittag-Leffler argument {z} outside supported range |z| <= {}",
            params.z_max()
        )));
    }
    let mut acc = CompensatedSum::default();
    let mut small_run = 0;
    for k in 0..params.max_terms {
        let term = series_term(z, k, params.alpha, params.beta);
        if !term.is_finite() {
            return Err(Error::Overflow(format!(
                "Mittag-Leffler series term {k} overflowed for alpha={} beta={} z={z}",
                params.alpha, params.beta
            )));
        }
        acc.add(term);
        if term.abs() < params.series_tol {
            small_run += 1;
            if small_run == 3 {
                let value = acc.value();
                if !value.is_finite() {
                    return Err(Error::Overflow(format!(
                        "E_{{{},{}}}({z}) exceeds f64 range",
                        params.alpha, params.beta
                    )));
                }
                return Ok(value);
            }
        } else {
            small_run = 0;
        }
    }
    Err(Error::NonConvergence(format!(
        "Mittag-Leffler series did not converge in {} terms (alpha={}, beta={}, z={z})",
        params.max_terms, params.alpha, params.beta
    )))
}

/// `E_alpha(z)`, the one-parameter function.
pub fn mittag_leffler_one(alpha: f64, z: f64) -> Result<f64> {
    mittag_leffler(&MlfParams::one(alpha), z)
}
