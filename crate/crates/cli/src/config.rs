//! Run configuration files.
//!
//! A configuration is a TOML document with the sections `[model]`,
//! `[model.params]`, `[initial]`, `[terminal]`, `[solver]`, `[simulate]` and
//! `[output]`. Unknown keys are rejected. Angles may be given in radians
//! (`theta`) or in degrees (`theta_deg`), never both.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dmoc_core::integrator::ProductState;
use dmoc_core::lie::{CoAlgebraVector, GroupElement};
use dmoc_core::optimal_control::OcProblem;
use dmoc_core::shooting::{Homotopy, InitStrategy, ShootingConfig};
use dmoc_core::systems::{ball_beam_problem, cart_pole_problem, BallBeamParams, CartPoleParams, BENCHMARK_NAMES};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Simulate,
    Optimize,
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// `(theta, xi)`: beam angle actuated, ball position unactuated
    BallBeam,
    /// `(xi, theta)`: cart position actuated, pendulum angle unactuated
    CartPole,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::BallBeam => "ball_beam",
            ModelKind::CartPole => "cart_pole",
        }
    }

    /// Parameter names and defaults, excluding the step `h`.
    pub fn default_params(self) -> BTreeMap<String, f64> {
        let pairs: &[(&str, f64)] = match self {
            ModelKind::BallBeam => {
                let p = BallBeamParams::<f64>::default();
                &[("m_b", p.m_b), ("i_r", p.i_r), ("g", p.g)]
            }
            ModelKind::CartPole => {
                let p = CartPoleParams::<f64>::default();
                &[("m_c", p.m_c), ("m_b", p.m_b), ("l", p.l), ("g", p.g)]
            }
        };
        pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }

    /// Whether the actuated factor is the angle.
    pub fn angle_actuated(self) -> bool {
        self == ModelKind::BallBeam
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub horizon: usize,
    pub h: Option<f64>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

/// Boundary state; missing entries are zero.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub theta: Option<f64>,
    pub theta_deg: Option<f64>,
    pub xi: Option<f64>,
    pub mu_a: Option<f64>,
    pub mu_u: Option<f64>,
}

/// A boundary state in radians and SI units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StateValues {
    pub theta: f64,
    pub xi: f64,
    pub mu_a: f64,
    pub mu_u: f64,
}

impl BoundaryConfig {
    pub fn resolve(&self, section: &str) -> Result<StateValues, ConfigError> {
        let theta = match (self.theta, self.theta_deg) {
            (Some(_), Some(_)) => {
                return Err(invalid(
                    &format!("{section}.theta"),
                    "give theta or theta_deg, not both",
                ))
            }
            (Some(r), None) => r,
            (None, Some(d)) => d.to_radians(),
            (None, None) => 0.0,
        };
        let v = StateValues {
            theta,
            xi: self.xi.unwrap_or(0.0),
            mu_a: self.mu_a.unwrap_or(0.0),
            mu_u: self.mu_u.unwrap_or(0.0),
        };
        for (name, x) in [("theta", v.theta), ("xi", v.xi), ("mu_a", v.mu_a), ("mu_u", v.mu_u)] {
            if !x.is_finite() {
                return Err(invalid(&format!("{section}.{name}"), "must be finite"));
            }
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Zeros,
    Linear,
    WarmStart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HomotopyKind {
    On,
    Off,
    Auto,
}

impl From<HomotopyKind> for Homotopy {
    fn from(h: HomotopyKind) -> Self {
        match h {
            HomotopyKind::On => Homotopy::On,
            HomotopyKind::Off => Homotopy::Off,
            HomotopyKind::Auto => Homotopy::Auto,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub segments: Option<usize>,
    pub tol: Option<f64>,
    pub max_newton: Option<usize>,
    pub fd_eps: Option<f64>,
    pub damping: Option<f64>,
    pub min_step: Option<f64>,
    pub init: Option<InitKind>,
    /// artifact directory used by `init = "warm_start"`
    pub warm_start: Option<PathBuf>,
    pub homotopy: Option<HomotopyKind>,
}

/// Resolved solver settings, as recorded in artifact metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub segments: usize,
    pub tol: f64,
    pub max_newton: usize,
    pub fd_eps: f64,
    pub damping: f64,
    pub min_step: f64,
    pub init: InitKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warm_start: Option<String>,
    pub homotopy: HomotopyKind,
}

impl SolverSettings {
    /// Shooting configuration; warm starts are filled in by the caller.
    pub fn shooting(&self) -> ShootingConfig {
        ShootingConfig {
            segments: self.segments,
            tol: self.tol,
            max_newton: self.max_newton,
            fd_eps: self.fd_eps,
            damping: self.damping,
            min_step: self.min_step,
            init: match self.init {
                InitKind::Zeros => InitStrategy::Zeros,
                _ => InitStrategy::LinearInterpolation,
            },
            homotopy: self.homotopy.into(),
            ..ShootingConfig::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// constant control applied at every sample
    pub control: Option<f64>,
    /// artifact directory whose `u` column is replayed
    pub controls_from: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: Option<String>,
    pub command: Option<CommandKind>,
    pub model: ModelConfig,
    #[serde(default)]
    pub initial: BoundaryConfig,
    #[serde(default)]
    pub terminal: BoundaryConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

const BUILTIN: [(&str, &str); 4] = [
    ("bb_case1", include_str!("../configs/bb_case1.toml")),
    ("bb_case2", include_str!("../configs/bb_case2.toml")),
    ("cp_case1", include_str!("../configs/cp_case1.toml")),
    ("cp_case2", include_str!("../configs/cp_case2.toml")),
];

impl RunConfig {
    /// Parses and validates a configuration; `origin` labels diagnostics.
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.into(),
            message: e.to_string().trim_end().into(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// One of the benchmark configurations shipped with the binary.
    pub fn builtin(name: &str) -> Option<Self> {
        debug_assert_eq!(BUILTIN.map(|b| b.0), BENCHMARK_NAMES);
        BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(n, text)| Self::from_toml(text, n).expect("shipped configuration is valid"))
    }

    /// Reads `arg` as a file, or as a built-in case name when no such file
    /// exists.
    pub fn load(arg: &str) -> Result<Self, ConfigError> {
        let path = Path::new(arg);
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
                path: arg.into(),
                message: e.to_string(),
            })?;
            return Self::from_toml(&text, arg);
        }
        Self::builtin(arg).ok_or_else(|| ConfigError::Read {
            path: arg.into(),
            message: format!("no such file, and not a built-in case ({})", BENCHMARK_NAMES.join(", ")),
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.model.horizon < 2 {
            return Err(invalid(
                "model.horizon",
                format!("must be at least 2, got {}", self.model.horizon),
            ));
        }
        let h = self.step();
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid("model.h", format!("must be positive, got {h}")));
        }
        let known = self.model.kind.default_params();
        for (k, v) in &self.model.params {
            if !known.contains_key(k) {
                let names: Vec<&str> = known.keys().map(String::as_str).collect();
                return Err(invalid(
                    &format!("model.params.{k}"),
                    format!(
                        "unknown parameter for {} (expected one of {})",
                        self.model.kind.name(),
                        names.join(", ")
                    ),
                ));
            }
            if !(*v > 0.0 && v.is_finite()) {
                return Err(invalid(
                    &format!("model.params.{k}"),
                    format!("must be positive, got {v}"),
                ));
            }
        }
        self.initial.resolve("initial")?;
        self.terminal.resolve("terminal")?;
        let s = self.solver_settings();
        if let Err(e) = s.shooting().validate(self.model.horizon) {
            return Err(invalid("solver", e.to_string()));
        }
        if s.init == InitKind::WarmStart && self.solver.warm_start.is_none() {
            return Err(invalid("solver.warm_start", "required when init = \"warm_start\""));
        }
        if self.simulate.control.is_some() && self.simulate.controls_from.is_some() {
            return Err(invalid("simulate", "give control or controls_from, not both"));
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.model.kind.name().to_string())
    }

    pub fn step(&self) -> f64 {
        self.model.h.unwrap_or(0.01)
    }

    /// Model parameters with defaults filled in.
    pub fn params(&self) -> BTreeMap<String, f64> {
        let mut p = self.model.kind.default_params();
        p.extend(self.model.params.iter().map(|(k, v)| (k.clone(), *v)));
        p
    }

    pub fn solver_settings(&self) -> SolverSettings {
        let d = ShootingConfig::default();
        let s = &self.solver;
        SolverSettings {
            segments: s.segments.unwrap_or(d.segments).min(self.model.horizon),
            tol: s.tol.unwrap_or(d.tol),
            max_newton: s.max_newton.unwrap_or(d.max_newton),
            fd_eps: s.fd_eps.unwrap_or(d.fd_eps),
            damping: s.damping.unwrap_or(d.damping),
            min_step: s.min_step.unwrap_or(d.min_step),
            init: s.init.unwrap_or(InitKind::Linear),
            warm_start: s.warm_start.as_ref().map(|p| p.display().to_string()),
            homotopy: s.homotopy.unwrap_or(HomotopyKind::Auto),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("out").join(self.name()))
    }

    pub fn problem(&self) -> Result<OcProblem<f64>, ConfigError> {
        problem_from(
            &self.name(),
            self.model.kind,
            &self.params(),
            self.step(),
            self.model.horizon,
            self.initial.resolve("initial")?,
            self.terminal.resolve("terminal")?,
        )
    }
}

/// Builds a built-in model problem from resolved values.
pub fn problem_from(
    name: &str,
    kind: ModelKind,
    params: &BTreeMap<String, f64>,
    h: f64,
    horizon: usize,
    initial: StateValues,
    terminal: StateValues,
) -> Result<OcProblem<f64>, ConfigError> {
    let get = |k: &str| -> Result<f64, ConfigError> {
        params
            .get(k)
            .copied()
            .ok_or_else(|| invalid(&format!("model.params.{k}"), "missing"))
    };
    let mut p = match kind {
        ModelKind::BallBeam => {
            let bp = BallBeamParams {
                m_b: get("m_b")?,
                i_r: get("i_r")?,
                g: get("g")?,
                h,
            };
            ball_beam_problem(name, bp, horizon, 0.0, 0.0)
        }
        ModelKind::CartPole => {
            let cp = CartPoleParams {
                m_c: get("m_c")?,
                m_b: get("m_b")?,
                l: get("l")?,
                g: get("g")?,
                h,
            };
            cart_pole_problem(name, cp, horizon, 0.0, 0.0)
        }
    };
    p.initial = state_for(kind, &initial);
    p.terminal = state_for(kind, &terminal);
    p.validate().map_err(|e| invalid("model", e.to_string()))?;
    Ok(p)
}

/// Product state of a built-in model from `(theta, xi, mu_a, mu_u)`.
pub fn state_for(kind: ModelKind, v: &StateValues) -> ProductState<f64> {
    let angle = GroupElement::circle(v.theta);
    let line = GroupElement::real_line(&[v.xi]);
    let (g_a, g_u) = if kind.angle_actuated() {
        (angle, line)
    } else {
        (line, angle)
    };
    let mu_a = CoAlgebraVector::scalar(&g_a.descriptor(), v.mu_a);
    let mu_u = CoAlgebraVector::scalar(&g_u.descriptor(), v.mu_u);
    ProductState::new(g_a, g_u, mu_a, mu_u)
}

/// `(theta, xi, mu_a, mu_u)` of a built-in model state.
pub fn values_of(kind: ModelKind, s: &ProductState<f64>) -> StateValues {
    let a = s.g_a.scalar().expect("scalar factor");
    let u = s.g_u.scalar().expect("scalar factor");
    let (theta, xi) = if kind.angle_actuated() { (a, u) } else { (u, a) };
    StateValues {
        theta,
        xi,
        mu_a: s.mu_a.coords()[0],
        mu_u: s.mu_u.coords()[0],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dmoc_core::systems::benchmark_case;

    #[test]
    fn builtin_configs_match_benchmark_problems() {
        for name in BENCHMARK_NAMES {
            let cfg = RunConfig::builtin(name).unwrap();
            let p = cfg.problem().unwrap();
            let q: OcProblem<f64> = benchmark_case(name).unwrap();
            assert_eq!(p.initial, q.initial, "{name}");
            assert_eq!(p.terminal, q.terminal, "{name}");
            assert_eq!(p.horizon, q.horizon);
            assert_eq!(p.model.params(), q.model.params(), "{name}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let text = "[model]\nkind = \"ball_beam\"\nhorizon = 10\nbogus = 1\n";
        let e = RunConfig::from_toml(text, "t.toml").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("line 4"), "{msg}");
        assert!(msg.contains("bogus"), "{msg}");
    }

    #[test]
    fn degrees_and_radians_are_exclusive() {
        let text = "[model]\nkind = \"cart_pole\"\nhorizon = 10\n[initial]\ntheta = 0.1\ntheta_deg = 5.0\n";
        let e = RunConfig::from_toml(text, "t.toml").unwrap_err();
        assert!(matches!(e, ConfigError::Invalid { ref field, .. } if field == "initial.theta"));
    }

    #[test]
    fn parameters_are_checked() {
        let text = "[model]\nkind = \"ball_beam\"\nhorizon = 10\n[model.params]\nl = 1.0\n";
        assert!(RunConfig::from_toml(text, "t").is_err());
        let text = "[model]\nkind = \"ball_beam\"\nhorizon = 10\n[model.params]\nm_b = -1.0\n";
        assert!(RunConfig::from_toml(text, "t").is_err());
        let text = "[model]\nkind = \"ball_beam\"\nhorizon = 1\n";
        assert!(RunConfig::from_toml(text, "t").is_err());
    }

    #[test]
    fn state_values_roundtrip() {
        let v = StateValues {
            theta: 0.3,
            xi: -1.5,
            mu_a: 0.25,
            mu_u: -0.125,
        };
        for kind in [ModelKind::BallBeam, ModelKind::CartPole] {
            assert_eq!(values_of(kind, &state_for(kind, &v)), v);
        }
    }
}
