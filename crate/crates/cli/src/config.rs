//! TOML experiment configuration and its translation into library types.

use std::fmt;
use std::path::{Path, PathBuf};

use hilfer_lab::{
    DelayFFIDE, FractionalOrder, GridSpacing, NormKind, Perturbation, PerturbationShape, PsiFunction, SolveConfig,
};
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io { path: PathBuf, message: String },
    Parse(String),
    Invalid { field: String, message: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, message } => write!(f, "cannot read {}: {message}", path.display()),
            ConfigError::Parse(message) => write!(f, "parse error: {message}"),
            ConfigError::Invalid { field, message } => write!(f, "invalid value for `{field}`: {message}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

/// A catalog entry: `{ kind = "linear", params = [...] }`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSpec {
    pub kind: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl FunctionSpec {
    fn expect_params(&self, field: &str, count: usize) -> Result<&[f64], ConfigError> {
        if self.params.len() != count {
            return Err(invalid(
                format!("{field}.params"),
                format!("`{}` takes {count} parameter(s), got {}", self.kind, self.params.len()),
            ));
        }
        if let Some(bad) = self.params.iter().position(|p| !p.is_finite()) {
            return Err(invalid(format!("{field}.params[{bad}]"), "must be finite"));
        }
        Ok(&self.params)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub alpha: f64,
    pub beta: f64,
    pub u0: f64,
    pub b: f64,
    pub r: f64,
    pub psi: FunctionSpec,
    pub f: FunctionSpec,
    /// Omitted means no Volterra term.
    pub h: Option<FunctionSpec>,
    pub g: FunctionSpec,
    pub phi: FunctionSpec,
    /// Defaults to the catalog entry's own constant.
    pub lipschitz_f: Option<f64>,
    pub lipschitz_h: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NormName {
    #[default]
    Weighted,
    Bielecki,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SpacingName {
    #[default]
    Psi,
    Time,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveSection {
    pub grid_size: usize,
    pub inner_quad_nodes: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub norm: NormName,
    pub delta: f64,
    pub spacing: SpacingName,
}

impl Default for SolveSection {
    fn default() -> Self {
        let d = SolveConfig::default();
        Self {
            grid_size: d.grid_size,
            inner_quad_nodes: d.inner_quad_nodes,
            tol: d.tol,
            max_iter: d.max_iter,
            norm: NormName::Weighted,
            delta: 0.0,
            spacing: SpacingName::Psi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeName {
    Constant,
    Sine,
    Square,
    Random,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub shape: ShapeName,
    pub epsilon: Vec<f64>,
    pub omega: Option<f64>,
    pub modes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    #[serde(default)]
    pub perturbation: Vec<PerturbationSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            format: Format::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub problem: ProblemSection,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub stability: StabilitySection,
    #[serde(default)]
    pub output: OutputSection,
}

impl std::str::FromStr for ExperimentConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let config = Self::parse_unchecked(text)?;
        config.validate()?;
        Ok(config)
    }
}

impl ExperimentConfig {
    /// Syntax and schema only; call [`ExperimentConfig::validate`] after applying overrides.
    pub fn parse_unchecked(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn read_unchecked(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::parse_unchecked(&text)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let config = Self::read_unchecked(path)?;
        config.validate()?;
        Ok(config)
    }

    /// Range checks and catalog resolution; everything short of running a solve.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let problem = self.build_problem()?;
        problem.validate().map_err(|e| invalid("problem", e.to_string()))?;
        self.solve_config()?;
        self.perturbations()?;
        Ok(())
    }

    pub fn build_problem(&self) -> Result<DelayFFIDE, ConfigError> {
        let p = &self.problem;
        for (name, value) in [("alpha", p.alpha), ("beta", p.beta), ("u0", p.u0), ("b", p.b), ("r", p.r)] {
            if !value.is_finite() {
                return Err(invalid(format!("problem.{name}"), "must be finite"));
            }
        }
        if !(p.alpha > 0.0 && p.alpha < 1.0) {
            return Err(invalid("problem.alpha", format!("must lie in (0, 1), got {}", p.alpha)));
        }
        if !(0.0..=1.0).contains(&p.beta) {
            return Err(invalid("problem.beta", format!("must lie in [0, 1], got {}", p.beta)));
        }
        if p.b <= 0.0 {
            return Err(invalid("problem.b", format!("must be > 0, got {}", p.b)));
        }
        if p.r <= 0.0 {
            return Err(invalid("problem.r", format!("must be > 0, got {}", p.r)));
        }
        let order = FractionalOrder::new(p.alpha, p.beta).map_err(|e| invalid("problem", e.to_string()))?;
        let psi = build_psi(&p.psi)?;
        let mut problem = DelayFFIDE::new(order, psi, p.b, p.r).with_initial(p.u0);
        let lf = install_forcing(&mut problem, &p.f)?;
        let lh = match &p.h {
            Some(spec) => install_kernel(&mut problem, spec)?,
            None => 0.0,
        };
        install_delay(&mut problem, &p.g)?;
        install_history(&mut problem, &p.phi)?;
        let lipschitz_f = p.lipschitz_f.unwrap_or(lf);
        let lipschitz_h = p.lipschitz_h.unwrap_or(lh);
        if !(lipschitz_f >= 0.0 && lipschitz_f.is_finite()) {
            return Err(invalid("problem.lipschitz_f", format!("must be >= 0, got {lipschitz_f}")));
        }
        if !(lipschitz_h >= 0.0 && lipschitz_h.is_finite()) {
            return Err(invalid("problem.lipschitz_h", format!("must be >= 0, got {lipschitz_h}")));
        }
        Ok(problem.with_lipschitz(lipschitz_f, lipschitz_h))
    }

    pub fn solve_config(&self) -> Result<SolveConfig, ConfigError> {
        let s = &self.solve;
        if s.grid_size < 2 {
            return Err(invalid("solve.grid_size", format!("must be >= 2, got {}", s.grid_size)));
        }
        if s.inner_quad_nodes < 2 {
            return Err(invalid("solve.inner_quad_nodes", format!("must be >= 2, got {}", s.inner_quad_nodes)));
        }
        if !(s.tol > 0.0 && s.tol.is_finite()) {
            return Err(invalid("solve.tol", format!("must be > 0, got {}", s.tol)));
        }
        if s.max_iter < 1 {
            return Err(invalid("solve.max_iter", "must be >= 1"));
        }
        if !(s.delta >= 0.0 && s.delta.is_finite()) {
            return Err(invalid("solve.delta", format!("must be >= 0, got {}", s.delta)));
        }
        Ok(SolveConfig {
            grid_size: s.grid_size,
            inner_quad_nodes: s.inner_quad_nodes,
            tol: s.tol,
            max_iter: s.max_iter,
            norm_kind: match s.norm {
                NormName::Weighted => NormKind::Weighted,
                NormName::Bielecki => NormKind::Bielecki(s.delta),
            },
            spacing: match s.spacing {
                SpacingName::Psi => GridSpacing::Psi,
                SpacingName::Time => GridSpacing::Time,
            },
        })
    }

    /// Experiments in config order: each shape, then each of its epsilons.
    /// Random shapes draw their seed from the top-level seed and their position.
    pub fn perturbations(&self) -> Result<Vec<Perturbation>, ConfigError> {
        let mut out = Vec::new();
        for (k, spec) in self.stability.perturbation.iter().enumerate() {
            let field = format!("stability.perturbation[{k}]");
            let omega = |default: f64| -> Result<f64, ConfigError> {
                let w = spec.omega.unwrap_or(default);
                if !(w.is_finite() && w > 0.0) {
                    return Err(invalid(format!("{field}.omega"), format!("must be > 0, got {w}")));
                }
                Ok(w)
            };
            let shape = match spec.shape {
                ShapeName::Constant => PerturbationShape::Constant,
                ShapeName::Sine => PerturbationShape::Sine { omega: omega(2.0 * std::f64::consts::PI)? },
                ShapeName::Square => PerturbationShape::Square { omega: omega(2.0 * std::f64::consts::PI)? },
                ShapeName::Random => {
                    let modes = spec.modes.unwrap_or(6);
                    if modes == 0 || modes > 1000 {
                        return Err(invalid(format!("{field}.modes"), format!("must lie in 1..=1000, got {modes}")));
                    }
                    PerturbationShape::RandomSmooth {
                        seed: self.seed.wrapping_add(k as u64),
                        modes,
                    }
                }
            };
            if spec.shape != ShapeName::Random && spec.modes.is_some() {
                return Err(invalid(format!("{field}.modes"), "only random shapes take modes"));
            }
            if spec.epsilon.is_empty() {
                return Err(invalid(format!("{field}.epsilon"), "needs at least one value"));
            }
            for (j, &eps) in spec.epsilon.iter().enumerate() {
                let pert = Perturbation::new(eps, shape)
                    .map_err(|_| invalid(format!("{field}.epsilon[{j}]"), format!("must be > 0, got {eps}")))?;
                out.push(pert);
            }
        }
        Ok(out)
    }
}

pub fn build_psi(spec: &FunctionSpec) -> Result<PsiFunction, ConfigError> {
    match spec.kind.as_str() {
        "identity" => {
            spec.expect_params("problem.psi", 0)?;
            Ok(PsiFunction::identity())
        }
        "exponential" => {
            spec.expect_params("problem.psi", 0)?;
            Ok(PsiFunction::exponential())
        }
        "shifted-power" => {
            let rho = spec.expect_params("problem.psi", 1)?[0];
            if rho <= 0.0 {
                return Err(invalid("problem.psi.params[0]", format!("rho must be > 0, got {rho}")));
            }
            Ok(PsiFunction::shifted_power(rho))
        }
        other => Err(invalid(
            "problem.psi.kind",
            format!("unknown transform `{other}` (identity, exponential, shifted-power)"),
        )),
    }
}

/// Installs `f` and returns its Lipschitz constant in the sum-of-differences metric.
fn install_forcing(problem: &mut DelayFFIDE, spec: &FunctionSpec) -> Result<f64, ConfigError> {
    let field = "problem.f";
    match spec.kind.as_str() {
        "zero" => {
            spec.expect_params(field, 0)?;
            *problem = problem.clone().with_forcing(|_, _, _, _| 0.0);
            Ok(0.0)
        }
        "linear" => {
            let &[a1, a2, a3, c] = spec.expect_params(field, 4)? else { unreachable!() };
            *problem = problem.clone().with_forcing(move |_, u1, u2, u3| a1 * u1 + a2 * u2 + a3 * u3 + c);
            Ok(a1.abs().max(a2.abs()).max(a3.abs()))
        }
        "scaled-sin" => {
            let &[a1, a2, a3, c] = spec.expect_params(field, 4)? else { unreachable!() };
            *problem = problem
                .clone()
                .with_forcing(move |_, u1, u2, u3| a1 * u1.sin() + a2 * u2.sin() + a3 * u3.sin() + c);
            Ok(a1.abs().max(a2.abs()).max(a3.abs()))
        }
        other => Err(invalid(
            "problem.f.kind",
            format!("unknown forcing `{other}` (zero, linear, scaled-sin)"),
        )),
    }
}

fn install_kernel(problem: &mut DelayFFIDE, spec: &FunctionSpec) -> Result<f64, ConfigError> {
    let field = "problem.h";
    match spec.kind.as_str() {
        "zero" => {
            spec.expect_params(field, 0)?;
            *problem = problem.clone().with_kernel(|_, _, _, _| 0.0);
            Ok(0.0)
        }
        "constant" => {
            let c = spec.expect_params(field, 1)?[0];
            *problem = problem.clone().with_kernel(move |_, _, _, _| c);
            Ok(0.0)
        }
        "linear" => {
            let &[b1, b2] = spec.expect_params(field, 2)? else { unreachable!() };
            *problem = problem.clone().with_kernel(move |_, _, v1, v2| b1 * v1 + b2 * v2);
            Ok(b1.abs().max(b2.abs()))
        }
        "polynomial-kernel" => {
            // (k0 + k1 (t - s) + k2 (t - s)^2) (b1 v1 + b2 v2)
            let &[k0, k1, k2, b1, b2] = spec.expect_params(field, 5)? else { unreachable!() };
            let b = problem.b;
            *problem = problem.clone().with_kernel(move |t, s, v1, v2| {
                let d = t - s;
                (k0 + k1 * d + k2 * d * d) * (b1 * v1 + b2 * v2)
            });
            Ok((k0.abs() + k1.abs() * b + k2.abs() * b * b) * b1.abs().max(b2.abs()))
        }
        other => Err(invalid(
            "problem.h.kind",
            format!("unknown kernel `{other}` (zero, constant, linear, polynomial-kernel)"),
        )),
    }
}

fn install_delay(problem: &mut DelayFFIDE, spec: &FunctionSpec) -> Result<(), ConfigError> {
    let field = "problem.g";
    *problem = match spec.kind.as_str() {
        "identity" => {
            spec.expect_params(field, 0)?;
            problem.clone().with_delay(|t| t)
        }
        "constant-lag" => {
            let lag = spec.expect_params(field, 1)?[0];
            if lag < 0.0 {
                return Err(invalid("problem.g.params[0]", format!("lag must be >= 0, got {lag}")));
            }
            problem.clone().with_delay(move |t| t - lag)
        }
        "proportional-lag" => {
            let &[q, lag] = spec.expect_params(field, 2)? else { unreachable!() };
            if !(0.0..=1.0).contains(&q) || lag < 0.0 {
                return Err(invalid(field, format!("need 0 <= q <= 1 and lag >= 0, got q={q}, lag={lag}")));
            }
            problem.clone().with_delay(move |t| q * t - lag)
        }
        other => {
            return Err(invalid(
                "problem.g.kind",
                format!("unknown delay `{other}` (identity, constant-lag, proportional-lag)"),
            ))
        }
    };
    Ok(())
}

fn install_history(problem: &mut DelayFFIDE, spec: &FunctionSpec) -> Result<(), ConfigError> {
    let field = "problem.phi";
    *problem = match spec.kind.as_str() {
        "constant" => {
            let c = spec.expect_params(field, 1)?[0];
            problem.clone().with_history(move |_| c)
        }
        "linear" => {
            let &[a, b] = spec.expect_params(field, 2)? else { unreachable!() };
            problem.clone().with_history(move |t| a + b * t)
        }
        "cosine" => {
            let &[a, w] = spec.expect_params(field, 2)? else { unreachable!() };
            problem.clone().with_history(move |t| a * (w * t).cos())
        }
        other => {
            return Err(invalid(
                "problem.phi.kind",
                format!("unknown history `{other}` (constant, linear, cosine)"),
            ))
        }
    };
    Ok(())
}

/// Parse a comma-separated list of grid sizes such as `500,1000,2000`.
pub fn parse_grid_list(text: &str) -> Result<Vec<usize>, String> {
    let sizes = text
        .split(',')
        .map(|part| {
            let part = part.trim();
            let n: usize = part.parse().map_err(|_| format!("`{part}` is not a grid size"))?;
            if !(2..=1_000_000).contains(&n) {
                return Err(format!("grid size {n} outside 2..=1000000"));
            }
            Ok(n)
        })
        .collect::<Result<Vec<usize>, String>>()?;
    if sizes.is_empty() {
        return Err("empty grid list".into());
    }
    Ok(sizes)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const WORKED: &str = r#"
seed = 7

[problem]
alpha = 0.5
beta = 1.0
u0 = 1.0
b = 1.0
r = 0.5
psi = { kind = "identity" }
f = { kind = "linear", params = [0.05, 0.05, 0.05, 0.0] }
h = { kind = "linear", params = [0.1, 0.1] }
g = { kind = "constant-lag", params = [0.5] }
phi = { kind = "constant", params = [1.0] }

[solve]
grid_size = 100

[[stability.perturbation]]
shape = "random"
epsilon = [1e-2]
"#;

    #[test]
    fn parses_worked_config() {
        let config: ExperimentConfig = WORKED.parse().unwrap();
        let problem = config.build_problem().unwrap();
        assert_eq!(problem.lipschitz_f, 0.05);
        assert_eq!(problem.lipschitz_h, 0.1);
        assert_eq!(config.solve_config().unwrap().grid_size, 100);
        assert_eq!(config.output.format, Format::Csv);
        let perts = config.perturbations().unwrap();
        assert_eq!(perts[0].shape, PerturbationShape::RandomSmooth { seed: 7, modes: 6 });
    }

    #[test]
    fn diagnostics_name_the_field() {
        let bad = WORKED.replace("alpha = 0.5", "alpha = 1.5");
        match bad.parse::<ExperimentConfig>() {
            Err(ConfigError::Invalid { field, .. }) => assert_eq!(field, "problem.alpha"),
            other => panic!("{other:?}"),
        }
        let bad = WORKED.replace("params = [0.1, 0.1]", "params = [0.1]");
        match bad.parse::<ExperimentConfig>() {
            Err(ConfigError::Invalid { field, .. }) => assert_eq!(field, "problem.h.params"),
            other => panic!("{other:?}"),
        }
        let bad = WORKED.replace("epsilon = [1e-2]", "epsilon = [0.0]");
        match bad.parse::<ExperimentConfig>() {
            Err(ConfigError::Invalid { field, .. }) => assert_eq!(field, "stability.perturbation[0].epsilon[0]"),
            other => panic!("{other:?}"),
        }
        let bad = WORKED.replace("seed = 7", "seed = 7\nspeed = 1");
        assert!(matches!(bad.parse::<ExperimentConfig>(), Err(ConfigError::Parse(_))));
        let msg = "[problem\nalpha=".parse::<ExperimentConfig>().unwrap_err().to_string();
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn delay_beyond_history_is_rejected() {
        let bad = WORKED.replace("params = [0.5] }", "params = [0.9] }");
        assert!(matches!(bad.parse::<ExperimentConfig>(), Err(ConfigError::Invalid { .. })));
    }

    #[test]
    fn grid_lists() {
        assert_eq!(parse_grid_list("500, 1000,2000").unwrap(), vec![500, 1000, 2000]);
        assert!(parse_grid_list("").is_err());
        assert!(parse_grid_list("1").is_err());
        assert!(parse_grid_list("10,x").is_err());
    }
}
