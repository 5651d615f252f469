//! psi-fractional integrals and the psi-Hilfer derivative on grids.
//!
//! Every operator is evaluated in the transformed variable `x = psi(s) - psi(0)`,
//! where the psi-Riemann-Liouville integral becomes the classical one:
//!
//! ```text
//! I^{a;psi} w(t) = 1/Gamma(a) * int_0^X (X - x)^(a-1) w(x) dx,   X = psi(t) - psi(0)
//! ```
//!
//! Quadrature is product integration: the sampled function is interpolated
//! piecewise-linearly in `x` and integrated exactly against the kernel, so the
//! kernel singularity at `x = X` costs no accuracy. Functions that blow up at the
//! origin like `x^(-mu)` are passed in weighted form `w = x^mu * omega`; on the
//! first panel `omega` is modelled as `w(0) x^(-mu)` plus a linear remainder, and
//! that model is integrated exactly.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::problem_model::FractionalOrder;
use crate::special_functions::{beta_fn, gamma, gamma_unchecked};

type RealMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// An increasing C^1 transform `psi` together with its derivative.
#[derive(Clone)]
pub struct PsiFunction {
    eval: RealMap,
    deriv: RealMap,
    inverse: Option<RealMap>,
    label: String,
}

impl fmt::Debug for PsiFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PsiFunction").field("label", &self.label).finish()
    }
}

impl PsiFunction {
    pub fn new(
        label: impl Into<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            eval: Arc::new(eval),
            deriv: Arc::new(deriv),
            inverse: None,
            label: label.into(),
        }
    }

    /// Attach a closed-form inverse; without one, grids uniform in psi-space
    /// invert by bisection.
    pub fn with_inverse(mut self, inverse: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.inverse = Some(Arc::new(inverse));
        self
    }

    /// `psi(t) = t`.
    pub fn identity() -> Self {
        Self::new("identity", |t| t, |_| 1.0).with_inverse(|y| y)
    }

    /// `psi(t) = e^t`.
    pub fn exponential() -> Self {
        Self::new("exponential", f64::exp, f64::exp).with_inverse(f64::ln)
    }

    /// `psi(t) = (t + 1)^rho`, `rho > 0`.
    pub fn shifted_power(rho: f64) -> Self {
        Self::new(
            format!("shifted-power({rho})"),
            move |t| (t + 1.0).powf(rho),
            move |t| rho * (t + 1.0).powf(rho - 1.0),
        )
        .with_inverse(move |y| y.powf(1.0 / rho) - 1.0)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.eval)(t)
    }

    pub fn deriv(&self, t: f64) -> f64 {
        (self.deriv)(t)
    }

    /// `psi(t) - psi(0)`.
    pub fn offset(&self, t: f64) -> f64 {
        self.eval(t) - self.eval(0.0)
    }

    /// Solve `psi(t) - psi(0) = x` for `t` in `[0, b]`.
    pub fn invert_offset(&self, x: f64, b: f64) -> f64 {
        if let Some(inv) = &self.inverse {
            return inv(x + self.eval(0.0)).clamp(0.0, b);
        }
        let (mut lo, mut hi) = (0.0, b);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.offset(mid) < x {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * b {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Check strict monotonicity and finiteness on the sampled nodes of `[0, b]`.
    pub fn validate_on(&self, nodes: &[f64]) -> Result<()> {
        for &t in nodes {
            let (v, d) = (self.eval(t), self.deriv(t));
            if !v.is_finite() || !d.is_finite() {
                return Err(Error::Domain(format!(
                    "psi '{}' is not finite at t={t}",
                    self.label
                )));
            }
            if d <= 0.0 {
                return Err(Error::Domain(format!(
                    "psi '{}' must be strictly increasing, psi'({t}) = {d}",
                    self.label
                )));
            }
        }
        Ok(())
    }
}

/// Node placement on `(0, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GridSpacing {
    /// Uniform in `x = psi(t) - psi(0)`.
    #[default]
    Psi,
    /// Uniform in `t`.
    Time,
}

/// Discretisation of `[-r, 0] U (0, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nodes: Vec<f64>,
    offsets: Vec<f64>,
    psi_prime: Vec<f64>,
    history_nodes: Vec<f64>,
}

impl Grid {
    /// `intervals + 1` nodes on `[0, b]` and a history grid of comparable spacing on `[-r, 0]`.
    pub fn new(
        psi: &PsiFunction,
        b: f64,
        r: f64,
        intervals: usize,
        spacing: GridSpacing,
    ) -> Result<Self> {
        if intervals < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 intervals, got {intervals}")));
        }
        if !(b > 0.0) || !b.is_finite() || !(r >= 0.0) || !r.is_finite() {
            return Err(Error::InvalidGrid(format!("need b > 0 and r >= 0, got b={b}, r={r}")));
        }
        let n = intervals as f64;
        let nodes: Vec<f64> = match spacing {
            GridSpacing::Time => (0..=intervals).map(|i| b * i as f64 / n).collect(),
            GridSpacing::Psi => {
                let total = psi.offset(b);
                let mut nodes: Vec<f64> = (0..=intervals)
                    .map(|i| psi.invert_offset(total * i as f64 / n, b))
                    .collect();
                nodes[0] = 0.0;
                nodes[intervals] = b;
                nodes
            }
        };
        let history_count = ((r / b) * n).ceil().max(2.0) as usize;
        let history_nodes = if r > 0.0 {
            (0..=history_count)
                .map(|i| -r + r * i as f64 / history_count as f64)
                .collect()
        } else {
            vec![0.0]
        };
        Self::from_nodes(psi, nodes, history_nodes)
    }

    pub fn from_nodes(psi: &PsiFunction, nodes: Vec<f64>, history_nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::InvalidGrid("need at least 3 nodes on [0, b]".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidGrid(format!("first node must be 0, got {}", nodes[0])));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) || nodes.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid("nodes must be finite and strictly increasing".into()));
        }
        if history_nodes.last() != Some(&0.0)
            || history_nodes.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(Error::InvalidGrid(
                "history nodes must be strictly increasing and end at 0".into(),
            ));
        }
        psi.validate_on(&nodes)?;
        let origin = psi.eval(0.0);
        let offsets: Vec<f64> = nodes.iter().map(|&t| psi.eval(t) - origin).collect();
        if offsets.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("psi offsets are not strictly increasing".into()));
        }
        let psi_prime = nodes.iter().map(|&t| psi.deriv(t)).collect();
        Ok(Self {
            nodes,
            offsets,
            psi_prime,
            history_nodes,
        })
    }

    /// Nodes `t_0 = 0 < ... < t_N = b`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// `psi(t_i) - psi(0)` for every node.
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn history_nodes(&self) -> &[f64] {
        &self.history_nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of intervals `N`.
    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().expect("grid is non-empty")
    }

    pub fn total_offset(&self) -> f64 {
        *self.offsets.last().expect("grid is non-empty")
    }

    /// Grid estimates `(inf psi', sup psi')` over `[0, b]`.
    pub fn psi_prime_bounds(&self) -> (f64, f64) {
        self.psi_prime
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| (lo.min(d), hi.max(d)))
    }

    /// Index `j` with `offsets[j] <= x <= offsets[j + 1]`, clamped to the grid.
    pub(crate) fn locate_offset(&self, x: f64) -> usize {
        let last = self.offsets.len() - 2;
        self.offsets.partition_point(|&o| o <= x).saturating_sub(1).min(last)
    }
}

/// Grid-sampled solution in weighted form.
///
/// `weighted[i] = (psi(t_i) - psi(0))^(1 - gamma) * u(t_i)` for `i >= 1`;
/// `weighted[0]` holds the `t -> 0+` limit of that product.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Arc<Grid>,
    pub gamma: f64,
    pub weighted: Vec<f64>,
    pub history_values: Vec<f64>,
}

impl Trajectory {
    pub fn new(grid: Arc<Grid>, gamma: f64, weighted: Vec<f64>, history_values: Vec<f64>) -> Result<Self> {
        if weighted.len() != grid.len() || history_values.len() != grid.history_nodes().len() {
            return Err(Error::GridMismatch);
        }
        if weighted.iter().any(|w| !w.is_finite()) {
            return Err(Error::Domain("weighted values must be finite".into()));
        }
        Ok(Self {
            grid,
            gamma,
            weighted,
            history_values,
        })
    }

    pub fn initial_weight(&self) -> f64 {
        self.weighted[0]
    }

    /// Exponent `mu = 1 - gamma` of the weight `x^mu`.
    pub fn weight_exponent(&self) -> f64 {
        1.0 - self.gamma
    }

    /// Raw `u(t_i)` at grid node `i`; infinite at `i = 0` when `gamma < 1`.
    pub fn raw_at_node(&self, i: usize) -> f64 {
        unweight(self.weighted[i], self.grid.offsets()[i], self.weight_exponent())
    }

    /// Raw values at all nodes on `[0, b]`.
    pub fn raw_values(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|i| self.raw_at_node(i)).collect()
    }

    /// Weighted value at offset `x`, linear in `x` between nodes.
    pub fn weighted_at_offset(&self, x: f64) -> f64 {
        let offsets = self.grid.offsets();
        let j = self.grid.locate_offset(x);
        let (x0, x1) = (offsets[j], offsets[j + 1]);
        let s = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
        self.weighted[j] + s * (self.weighted[j + 1] - self.weighted[j])
    }

    /// `u` at offset `x > 0` via weighted interpolation.
    pub fn raw_at_offset(&self, x: f64) -> f64 {
        unweight(self.weighted_at_offset(x), x, self.weight_exponent())
    }

    /// `u` on the history window by linear interpolation of `history_values`.
    pub fn history_at(&self, t: f64) -> f64 {
        let nodes = self.grid.history_nodes();
        if nodes.len() == 1 {
            return self.history_values[0];
        }
        let j = nodes.partition_point(|&s| s <= t).saturating_sub(1).min(nodes.len() - 2);
        let s = ((t - nodes[j]) / (nodes[j + 1] - nodes[j])).clamp(0.0, 1.0);
        self.history_values[j] + s * (self.history_values[j + 1] - self.history_values[j])
    }
}

pub(crate) fn unweight(weighted: f64, x: f64, mu: f64) -> f64 {
    if mu == 0.0 {
        weighted
    } else if x > 0.0 {
        weighted * x.powf(-mu)
    } else if weighted == 0.0 {
        0.0
    } else {
        weighted.signum() * f64::INFINITY
    }
}

/// `a^p - c^p` for `a = c + h`, without cancellation when `h << c`.
fn power_difference(c: f64, h: f64, p: f64) -> f64 {
    if c == 0.0 {
        h.powf(p)
    } else {
        c.powf(p) * (p * (h / c).ln_1p()).exp_m1()
    }
}

/// `int_0^{x1} (X - x)^(a-1) x^(m - mu) dx` for `X >= x1`.
fn first_panel_moment(big_x: f64, x1: f64, order: f64, mu: f64, m: f64) -> f64 {
    if big_x <= x1 {
        // X == x1: a complete beta integral
        return x1.powf(order - mu + m) * beta_fn(m - mu + 1.0, order).expect("positive arguments");
    }
    // (1 - tau)^(a-1) = sum_k c_k tau^k with c_k = c_{k-1} (k - a) / k, tau <= x1 / X < 1
    let ratio = x1 / big_x;
    let mut coeff = 1.0;
    let mut power = 1.0;
    let mut sum = 1.0 / (m - mu + 1.0);
    for k in 1..20_000 {
        let kf = k as f64;
        coeff *= (kf - order) / kf;
        power *= ratio;
        let term = coeff * power / (kf + m - mu + 1.0);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    big_x.powf(order - 1.0) * x1.powf(m - mu + 1.0) * sum
}

/// Precomputed product-integration weights for `I^{order;psi}` on a grid.
///
/// Row `i` holds the weights applied to the weighted samples `w_0..w_i` (and `w_2`
/// on row 1 when `mu > 0`), where the integrand is `omega(x) = x^(-mu) w(x)`.
#[derive(Debug, Clone)]
pub struct FractionalIntegral {
    order: f64,
    exponent: f64,
    rows: Vec<Vec<f64>>,
}

impl FractionalIntegral {
    pub fn new(order: f64, singular_exponent: f64, grid: &Grid) -> Result<Self> {
        if !(order > 0.0 && order <= 1.0) {
            return Err(Error::Domain(format!("integral order must lie in (0, 1], got {order}")));
        }
        if !(0.0..1.0).contains(&singular_exponent) {
            return Err(Error::Domain(format!(
                "singular exponent must lie in [0, 1), got {singular_exponent}"
            )));
        }
        let x = grid.offsets();
        let mu = singular_exponent;
        let scale = 1.0 / gamma_unchecked(order);
        let x_pow: Vec<f64> = x.iter().map(|&xi| if xi > 0.0 { xi.powf(-mu) } else { 0.0 }).collect();
        let rows = (0..x.len())
            .into_par_iter()
            .map(|i| {
                if i == 0 {
                    return Vec::new();
                }
                // the first panel looks ahead to node 2 when mu > 0
                let mut row = vec![0.0; if mu > 0.0 { (i + 1).max(3) } else { i + 1 }];
                let big_x = x[i];
                let first = if mu > 0.0 { 1 } else { 0 };
                if mu > 0.0 {
                    // omega = w0 x^(-mu) + a + b x on [0, x1], with a + b x through the
                    // remainders at x1 and x2
                    let (x1, x2) = (x[1], x[2]);
                    let singular = first_panel_moment(big_x, x1, order, mu, 0.0);
                    let q0 = first_panel_moment(big_x, x1, order, 0.0, 0.0);
                    let q1 = first_panel_moment(big_x, x1, order, 0.0, 1.0);
                    let d = (q1 - x1 * q0) / (x2 - x1);
                    let (c1, c2) = ((q0 - d) * x_pow[1], d * x_pow[2]);
                    row[0] += singular - c1 - c2;
                    row[1] += c1;
                    row[2] += c2;
                }
                for j in first..i {
                    let h = x[j + 1] - x[j];
                    let c = big_x - x[j + 1];
                    let a = big_x - x[j];
                    let d0 = power_difference(c, h, order);
                    let d1 = power_difference(c, h, order + 1.0);
                    let right = (a * d0 / order - d1 / (order + 1.0)) / h;
                    let left = d0 / order - right;
                    if mu > 0.0 {
                        row[j] += left * x_pow[j];
                        row[j + 1] += right * x_pow[j + 1];
                    } else {
                        row[j] += left;
                        row[j + 1] += right;
                    }
                }
                row.iter_mut().for_each(|v| *v *= scale);
                row
            })
            .collect();
        Ok(Self {
            order,
            exponent: mu,
            rows,
        })
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Grid size this operator was built for.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `t -> 0+` limit of `I^{order} [x^(-mu) w]` given the weighted value at the origin.
    fn origin_limit(&self, w0: f64) -> f64 {
        let gap = self.order - self.exponent;
        if gap > 1e-12 {
            0.0
        } else if gap.abs() <= 1e-12 {
            w0 * gamma_unchecked(1.0 - self.exponent)
        } else if w0 == 0.0 {
            0.0
        } else {
            w0.signum() * f64::INFINITY
        }
    }

    /// Plain values of the integral at every node from weighted samples.
    pub fn apply(&self, weighted: &[f64]) -> Vec<f64> {
        assert_eq!(weighted.len(), self.rows.len(), "sample count must match the grid");
        let mut out: Vec<f64> = self
            .rows
            .par_iter()
            .map(|row| row.iter().zip(weighted).map(|(c, w)| c * w).sum())
            .collect();
        out[0] = self.origin_limit(weighted[0]);
        out
    }
}

fn check_samples(samples: &[f64], grid: &Grid) -> Result<()> {
    if samples.len() != grid.len() {
        return Err(Error::InvalidGrid(format!(
            "{} samples for a grid of {} nodes",
            samples.len(),
            grid.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("samples must be finite".into()));
    }
    Ok(())
}

/// `I^{alpha;psi} omega` at every node from finite samples of a continuous `omega`.
pub fn frac_integral_grid(alpha: f64, samples: &[f64], grid: &Grid) -> Result<Vec<f64>> {
    check_samples(samples, grid)?;
    Ok(FractionalIntegral::new(alpha, 0.0, grid)?.apply(samples))
}

/// `I^{alpha;psi} omega` for `omega = x^(-mu) w`, given `w` at every node.
pub fn frac_integral_weighted(alpha: f64, mu: f64, weighted: &[f64], grid: &Grid) -> Result<Vec<f64>> {
    check_samples(weighted, grid)?;
    Ok(FractionalIntegral::new(alpha, mu, grid)?.apply(weighted))
}

/// Closed form `I^{alpha;psi} [psi - psi(0)]^(sigma-1) = Gamma(sigma)/Gamma(alpha+sigma) (psi(t)-psi(0))^(alpha+sigma-1)`.
pub fn power_rule_reference(alpha: f64, sigma: f64, psi: &PsiFunction, t: f64) -> Result<f64> {
    if !(alpha > 0.0) || !(sigma > 0.0) {
        return Err(Error::Domain(format!(
            "power rule needs alpha > 0 and sigma > 0, got ({alpha}, {sigma})"
        )));
    }
    let coeff = gamma(sigma)? / gamma(alpha + sigma)?;
    Ok(coeff * psi.offset(t).powf(alpha + sigma - 1.0))
}

/// `d/dx` on a nonuniform grid: three-point centred stencil inside, second-order one-sided at the ends.
fn differentiate(values: &[f64], x: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        let (h0, h1) = (x[i] - x[i - 1], x[i + 1] - x[i]);
        out[i] = (-h1 / (h0 * (h0 + h1))) * values[i - 1]
            + ((h1 - h0) / (h0 * h1)) * values[i]
            + (h0 / (h1 * (h0 + h1))) * values[i + 1];
    }
    let one_sided = |i0: usize, i1: usize, i2: usize| {
        let (h0, h1) = (x[i1] - x[i0], x[i2] - x[i1]);
        let s = h0 + h1;
        -(2.0 * h0 + h1) / (h0 * s) * values[i0] + s / (h0 * h1) * values[i1] - h0 / (h1 * s) * values[i2]
    };
    out[0] = if values[0].is_finite() {
        one_sided(0, 1, 2)
    } else {
        out[1]
    };
    // mirror of the left stencil
    let (h0, h1) = (x[n - 1] - x[n - 2], x[n - 2] - x[n - 3]);
    let s = h0 + h1;
    out[n - 1] = (2.0 * h0 + h1) / (h0 * s) * values[n - 1] - s / (h0 * h1) * values[n - 2]
        + h0 / (h1 * s) * values[n - 3];
    out
}

/// `^H D^{alpha,beta;psi} omega` at every node via
/// `I^{beta(1-alpha)} (1/psi' d/dt) I^{(1-beta)(1-alpha)} omega`.
///
/// `weighted` holds `w = x^mu omega`; pass `mu = 0` for continuous data. The
/// derivative step works in `x` (where `d/dx = (1/psi') d/dt`): with an outer
/// integral the difference quotients of the inner values are integrated exactly
/// panel by panel, otherwise three-point finite differences are returned. Both
/// lose accuracy near the origin when the inner integral is not smooth.
pub fn hilfer_derivative_grid(
    order: &FractionalOrder,
    mu: f64,
    weighted: &[f64],
    grid: &Grid,
) -> Result<Vec<f64>> {
    check_samples(weighted, grid)?;
    let x = grid.offsets();
    let inner_order = (1.0 - order.beta) * (1.0 - order.alpha);
    let inner = if inner_order > 0.0 {
        FractionalIntegral::new(inner_order, mu, grid)?.apply(weighted)
    } else {
        weighted.iter().zip(x).map(|(&w, &xi)| unweight(w, xi, mu)).collect()
    };
    let outer_order = order.beta * (1.0 - order.alpha);
    if outer_order > 0.0 {
        Ok(integrate_difference_quotients(outer_order, &inner, x))
    } else {
        Ok(differentiate(&inner, x))
    }
}

/// `I^q v'` with `v` piecewise linear in `x`: the slopes are constant per panel, so
/// each panel integrates exactly against the kernel.
fn integrate_difference_quotients(q: f64, values: &[f64], x: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut slopes: Vec<f64> = (0..n - 1)
        .map(|j| (values[j + 1] - values[j]) / (x[j + 1] - x[j]))
        .collect();
    if !slopes[0].is_finite() {
        slopes[0] = slopes[1];
    }
    let scale = 1.0 / gamma_unchecked(q + 1.0);
    let mut out = vec![0.0; n];
    out.par_iter_mut().enumerate().skip(1).for_each(|(i, slot)| {
        let big_x = x[i];
        *slot = scale
            * (0..i)
                .map(|j| slopes[j] * power_difference(big_x - x[j + 1], x[j + 1] - x[j], q))
                .sum::<f64>();
    });
    out
}

/// `max_i |w_i|` over the grid, including the `t -> 0+` weighted limit.
pub fn weighted_norm(traj: &Trajectory) -> f64 {
    traj.weighted.iter().fold(0.0, |m, w| m.max(w.abs()))
}

/// `max_i e^(-delta x_i) |w_i|`.
pub fn bielecki_norm(delta: f64, traj: &Trajectory) -> f64 {
    weighted_difference_norm(&traj.weighted, &vec![0.0; traj.weighted.len()], traj.grid.offsets(), delta)
}

/// Bielecki-type distance between two weighted vectors; `delta = 0` gives the weighted norm.
pub(crate) fn weighted_difference_norm(a: &[f64], b: &[f64], offsets: &[f64], delta: f64) -> f64 {
    a.iter()
        .zip(b)
        .zip(offsets)
        .map(|((p, q), x)| (-delta * x).exp() * (p - q).abs())
        .fold(0.0, f64::max)
}

/// Check nodes `x = k/8 * X`, `k = 1..8`, as grid indices; `None` unless `8 | N` on a psi-uniform grid.
/// Nodes nearest `x = k X / 8`, `k = 1..=8`.
fn check_indices(grid: &Grid) -> Vec<usize> {
    let n = grid.intervals();
    let mut indices: Vec<usize> = (1..=8).map(|k| ((k * n + 4) / 8).max(1)).collect();
    indices.dedup();
    indices
}

/// Max relative error of the quadrature against the power rule for
/// `omega = (psi - psi(0))^(sigma-1)` at the nodes nearest `x = k X / 8` of an `n`-interval grid on `[0, b]`.
pub fn power_rule_error(psi: &PsiFunction, alpha: f64, sigma: f64, b: f64, n: usize) -> Result<f64> {
    let grid = Grid::new(psi, b, 0.0, n, GridSpacing::Psi)?;
    let mu = (1.0 - sigma).max(0.0);
    let weighted: Vec<f64> = grid
        .offsets()
        .iter()
        .map(|&x| if mu > 0.0 { 1.0 } else { x.powf(sigma - 1.0) })
        .collect();
    let out = FractionalIntegral::new(alpha, mu, &grid)?.apply(&weighted);
    let mut worst = 0.0f64;
    for i in check_indices(&grid) {
        let exact = power_rule_reference(alpha, sigma, psi, grid.nodes()[i])?;
        worst = worst.max((out[i] - exact).abs() / exact.abs());
    }
    Ok(worst)
}

/// `max |I^a I^c omega - I^(a+c) omega| / max |I^(a+c) omega|` on the grid for
/// `omega = (psi - psi(0))^(sigma-1)`, `sigma + c >= 1`.
pub fn semigroup_error(psi: &PsiFunction, a: f64, c: f64, sigma: f64, b: f64, n: usize) -> Result<f64> {
    if sigma + c < 1.0 {
        return Err(Error::Domain(format!("semigroup check needs sigma + c >= 1, got {}", sigma + c)));
    }
    let grid = Grid::new(psi, b, 0.0, n, GridSpacing::Psi)?;
    let mu = (1.0 - sigma).max(0.0);
    let weighted: Vec<f64> = grid
        .offsets()
        .iter()
        .map(|&x| if mu > 0.0 { 1.0 } else { x.powf(sigma - 1.0) })
        .collect();
    let inner = FractionalIntegral::new(c, mu, &grid)?.apply(&weighted);
    let nested = FractionalIntegral::new(a, 0.0, &grid)?.apply(&inner);
    let direct = FractionalIntegral::new(a + c, mu, &grid)?.apply(&weighted);
    let scale = direct.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = nested.iter().zip(&direct).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    Ok(err / scale)
}

#[cfg(test)]
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quadratic_psi() -> PsiFunction {
        PsiFunction::new("t^2+t", |t| t * t + t, |t| 2.0 * t + 1.0)
    }

    fn trajectory(weighted: Vec<f64>, gamma: f64) -> Trajectory {
        let grid = Arc::new(Grid::new(&PsiFunction::identity(), 1.0, 0.5, weighted.len() - 1, GridSpacing::Psi).unwrap());
        let history = vec![0.0; grid.history_nodes().len()];
        Trajectory::new(grid, gamma, weighted, history).unwrap()
    }

    #[test]
    fn integral_of_zero_is_zero() {
        let grid = Grid::new(&PsiFunction::exponential(), 1.0, 0.0, 50, GridSpacing::Psi).unwrap();
        let out = frac_integral_grid(0.4, &vec![0.0; grid.len()], &grid).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn half_integral_of_one() {
        let grid = Grid::new(&PsiFunction::identity(), 1.0, 0.0, 100, GridSpacing::Psi).unwrap();
        let out = frac_integral_grid(0.5, &vec![1.0; grid.len()], &grid).unwrap();
        // 1 / Gamma(1.5)
        assert!((out[100] - 1.128_379_167_095_512_6).abs() < 1e-12);
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn order_one_is_ordinary_integral() {
        let grid = Grid::new(&PsiFunction::identity(), 1.0, 0.0, 64, GridSpacing::Psi).unwrap();
        let samples: Vec<f64> = grid.nodes().to_vec();
        let out = frac_integral_grid(1.0, &samples, &grid).unwrap();
        assert!((out[64] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_order_and_samples() {
        let grid = Grid::new(&PsiFunction::identity(), 1.0, 0.0, 10, GridSpacing::Psi).unwrap();
        let ones = vec![1.0; grid.len()];
        assert!(matches!(frac_integral_grid(0.0, &ones, &grid), Err(Error::Domain(_))));
        assert!(matches!(frac_integral_grid(1.5, &ones, &grid), Err(Error::Domain(_))));
        assert!(frac_integral_grid(0.5, &ones[..5], &grid).is_err());
        let mut bad = ones.clone();
        bad[3] = f64::NAN;
        assert!(frac_integral_grid(0.5, &bad, &grid).is_err());
    }

    #[test]
    fn grid_validation() {
        let psi = PsiFunction::identity();
        assert!(Grid::new(&psi, 1.0, 0.0, 1, GridSpacing::Psi).is_err());
        assert!(Grid::new(&psi, -1.0, 0.0, 10, GridSpacing::Psi).is_err());
        assert!(Grid::from_nodes(&psi, vec![0.0, 0.5, 0.5, 1.0], vec![0.0]).is_err());
        assert!(Grid::from_nodes(&psi, vec![0.0, 0.5, 1.0], vec![-1.0, -0.5]).is_err());
        let decreasing = PsiFunction::new("neg", |t| -t, |_| -1.0);
        assert!(Grid::new(&decreasing, 1.0, 0.0, 10, GridSpacing::Time).is_err());
    }

    #[test]
    fn psi_uniform_grid_inverts_without_closed_form() {
        let grid = Grid::new(&quadratic_psi(), 1.0, 0.0, 8, GridSpacing::Psi).unwrap();
        let x = grid.offsets();
        for w in x.windows(2) {
            assert!((w[1] - w[0] - 0.25).abs() < 1e-12);
        }
        assert_eq!(grid.horizon(), 1.0);
    }

    #[test]
    fn power_rule_examples() {
        let id = PsiFunction::identity();
        assert!((power_rule_reference(0.5, 1.0, &id, 1.0).unwrap() - 1.128_379_167_095_512_6).abs() < 1e-14);
        assert!((power_rule_reference(1.0, 1.0, &id, 2.0).unwrap() - 2.0).abs() < 1e-14);
        // Gamma(0.7) / Gamma(1.0)
        assert!((power_rule_reference(0.3, 0.7, &id, 1.0).unwrap() - 1.298_055_332_647_557_8).abs() < 1e-12);
        assert!(power_rule_reference(0.0, 1.0, &id, 1.0).is_err());
        assert!(power_rule_reference(0.5, -1.0, &id, 1.0).is_err());
    }

    #[test]
    fn weighted_samples_are_exact_for_pure_powers() {
        // x^(-mu) with w == 1 is integrated exactly by the weighted first panel plus the
        // trapezoid on the remaining panels only up to interpolation error.
        let psi = PsiFunction::identity();
        let grid = Grid::new(&psi, 1.0, 0.0, 400, GridSpacing::Psi).unwrap();
        let mu = 0.4;
        let out = frac_integral_weighted(0.6, mu, &vec![1.0; grid.len()], &grid).unwrap();
        // first node: only the exact panel contributes
        let reference = power_rule_reference(0.6, 1.0 - mu, &psi, grid.nodes()[1]).unwrap();
        assert!((out[1] - reference).abs() < 1e-12 * reference.abs());
        let end = power_rule_reference(0.6, 1.0 - mu, &psi, 1.0).unwrap();
        assert!((out[400] - end).abs() < 1e-3 * end);
        // order == mu leaves a finite limit at the origin: Gamma(1 - mu)
        let limit = frac_integral_weighted(0.4, mu, &vec![1.0; grid.len()], &grid).unwrap()[0];
        assert!((limit - gamma(0.6).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn quadrature_converges_on_power_family() {
        for psi in [PsiFunction::identity(), PsiFunction::exponential(), quadratic_psi()] {
            for &(alpha, sigma) in &[(0.3f64, 1.5f64), (0.8, 0.6), (1.0, 1.2)] {
                let mut errors = Vec::new();
                for n in [250usize, 500] {
                    let grid = Grid::new(&psi, 1.0, 0.0, n, GridSpacing::Psi).unwrap();
                    let mu = (1.0 - sigma).max(0.0);
                    let w: Vec<f64> = grid.offsets().iter().map(|&x| x.powf(sigma - 1.0 + mu)).collect();
                    let out = frac_integral_weighted(alpha, mu, &w, &grid).unwrap();
                    let i = n;
                    let reference = power_rule_reference(alpha, sigma, &psi, grid.nodes()[i]).unwrap();
                    errors.push((out[i] - reference).abs() / reference);
                }
                assert!(errors[1] < errors[0], "{} {alpha} {sigma}: {errors:?}", psi.label());
                assert!(errors[1] < 1e-3);
            }
        }
    }

    #[test]
    fn hilfer_derivative_of_constant_caputo_is_zero() {
        let grid = Grid::new(&PsiFunction::identity(), 1.0, 0.0, 200, GridSpacing::Psi).unwrap();
        let order = FractionalOrder::new(0.5, 1.0).unwrap();
        let out = hilfer_derivative_grid(&order, 0.0, &vec![3.0; grid.len()], &grid).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-12));
        let zero = hilfer_derivative_grid(&order, 0.0, &vec![0.0; grid.len()], &grid).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hilfer_derivative_power_rule() {
        let psi = PsiFunction::identity();
        let grid = Grid::new(&psi, 1.0, 0.0, 2000, GridSpacing::Psi).unwrap();
        let order = FractionalOrder::new(0.5, 0.0).unwrap();
        let samples: Vec<f64> = grid.offsets().iter().map(|&x| x.powf(0.8)).collect();
        let out = hilfer_derivative_grid(&order, 0.0, &samples, &grid).unwrap();
        let coeff = gamma(1.8).unwrap() / gamma(1.3).unwrap();
        for i in (200..2000).step_by(100) {
            let expected = coeff * grid.offsets()[i].powf(0.3);
            assert!((out[i] - expected).abs() < 1e-3, "i={i}: {} vs {expected}", out[i]);
        }
    }

    #[test]
    fn norms() {
        let t = trajectory(vec![1.0, -2.0, 1.5], 1.0);
        assert_eq!(weighted_norm(&t), 2.0);
        assert_eq!(bielecki_norm(0.0, &t), 2.0);
        let zeros = trajectory(vec![0.0; 5], 0.7);
        assert_eq!(weighted_norm(&zeros), 0.0);
        assert_eq!(bielecki_norm(2.0, &zeros), 0.0);
        let ones = trajectory(vec![1.0; 11], 1.0);
        assert_eq!(bielecki_norm(1.0, &ones), 1.0);
        // gamma = 1: weight is identically one, so the norm is the sup of u
        assert_eq!(weighted_norm(&ones), ones.raw_values().iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }

    #[test]
    fn interpolation_between_nodes() {
        let t = trajectory(vec![1.0, 2.0, 4.0], 1.0);
        assert!((t.weighted_at_offset(0.25) - 1.5).abs() < 1e-15);
        assert!((t.weighted_at_offset(0.75) - 3.0).abs() < 1e-15);
        let singular = trajectory(vec![1.0, 1.0, 1.0], 0.5);
        assert!((singular.raw_at_offset(0.25) - 2.0).abs() < 1e-14);
        assert!(singular.raw_at_node(0).is_infinite());
    }

    proptest! {
        #[test]
        fn weighted_norm_is_a_norm(a in prop::collection::vec(-10.0f64..10.0, 6), b in prop::collection::vec(-10.0f64..10.0, 6), k in -5.0f64..5.0) {
            let ta = trajectory(a.clone(), 0.8);
            let tb = trajectory(b.clone(), 0.8);
            let sum = trajectory(a.iter().zip(&b).map(|(x, y)| x + y).collect(), 0.8);
            let scaled = trajectory(a.iter().map(|x| k * x).collect(), 0.8);
            prop_assert!(weighted_norm(&sum) <= weighted_norm(&ta) + weighted_norm(&tb));
            prop_assert_eq!(weighted_norm(&scaled), k.abs() * weighted_norm(&ta));
        }
    }
}
