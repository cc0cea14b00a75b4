//! The `simulate`, `optimize` and `verify` commands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dmoc_core::integrator::{simulate, IntegratorError};
use dmoc_core::lie::CoAlgebraVector;
use dmoc_core::optimal_control::{certificate, MultiplierSet, OcError};
use dmoc_core::shooting::{self, InitStrategy, OcSolution, ShootingError, WarmStart};
use thiserror::Error;

use crate::artifact::{emit_artifact, load_artifact, Artifact, ArtifactError, Metadata, SolveRecord};
use crate::config::{CommandKind, ConfigError, HomotopyKind, InitKind, RunConfig};

/// Process exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    ConfigError = 2,
    NotConverged = 3,
    NumericalFailure = 4,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl RunError {
    pub fn status(&self) -> Status {
        match self {
            RunError::Config(_) | RunError::Artifact(_) => Status::ConfigError,
            RunError::Numerical(_) => Status::NumericalFailure,
        }
    }
}

impl From<ShootingError> for RunError {
    fn from(e: ShootingError) -> Self {
        match e {
            ShootingError::Config(m) => RunError::Config(ConfigError::Invalid {
                field: "solver".into(),
                message: m,
            }),
            ShootingError::Problem(OcError::Problem(m)) => RunError::Config(ConfigError::Invalid {
                field: "model".into(),
                message: m,
            }),
            other => RunError::Numerical(other.to_string()),
        }
    }
}

impl From<IntegratorError> for RunError {
    fn from(e: IntegratorError) -> Self {
        RunError::Numerical(e.to_string())
    }
}

/// Command-line values that take precedence over the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub segments: Option<usize>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub homotopy: Option<HomotopyKind>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), ConfigError> {
        if let Some(out) = &self.out {
            cfg.output.dir = Some(out.clone());
        }
        if self.segments.is_some() {
            cfg.solver.segments = self.segments;
        }
        if self.tol.is_some() {
            cfg.solver.tol = self.tol;
        }
        if self.max_iters.is_some() {
            cfg.solver.max_newton = self.max_iters;
        }
        if self.homotopy.is_some() {
            cfg.solver.homotopy = self.homotopy;
        }
        cfg.validate()
    }
}

/// What a command did, for the caller to print and exit with.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub out_dir: Option<PathBuf>,
    pub summary: String,
}

fn metadata(cfg: &RunConfig, command: CommandKind) -> Result<Metadata, ConfigError> {
    Ok(Metadata {
        name: cfg.name(),
        command,
        model: cfg.model.kind,
        horizon: cfg.model.horizon,
        h: cfg.step(),
        params: cfg.params(),
        initial: cfg.initial.resolve("initial")?,
        terminal: cfg.terminal.resolve("terminal")?,
        solver: None,
        result: None,
    })
}

/// Forward simulation under a constant or replayed control.
pub fn run_simulate(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let problem = cfg.problem()?;
    let n = problem.horizon;
    let ga = problem.model.group_a().clone();
    let controls: Vec<CoAlgebraVector<f64>> = match &cfg.simulate.controls_from {
        Some(dir) => {
            let src = load_artifact(dir)?;
            if src.rows.len() < n + 1 {
                return Err(ConfigError::Invalid {
                    field: "simulate.controls_from".into(),
                    message: format!("{} holds {} samples, need {}", dir.display(), src.rows.len(), n + 1),
                }
                .into());
            }
            src.rows[..=n]
                .iter()
                .map(|r| CoAlgebraVector::scalar(&ga, r.u))
                .collect()
        }
        None => vec![CoAlgebraVector::scalar(&ga, cfg.simulate.control.unwrap_or(0.0)); n + 1],
    };
    let traj = simulate(&problem.model, &problem.initial, &controls, n)?;
    let artifact = Artifact::new(metadata(cfg, CommandKind::Simulate)?, &traj, None);
    let dir = cfg.out_dir();
    emit_artifact(&artifact, &dir)?;
    Ok(Outcome {
        status: Status::Success,
        summary: format!(
            "simulated {} steps; max state residual {:.3e}; wrote {}",
            n,
            traj.max_step_residual(),
            dir.display()
        ),
        out_dir: Some(dir),
    })
}

fn warm_start(dir: &Path, cfg: &RunConfig) -> Result<WarmStart, RunError> {
    let problem = cfg.problem()?;
    let src = load_artifact(dir)?;
    if src.metadata.horizon != problem.horizon {
        return Err(ConfigError::Invalid {
            field: "solver.warm_start".into(),
            message: format!(
                "artifact horizon {} differs from {}",
                src.metadata.horizon, problem.horizon
            ),
        }
        .into());
    }
    Ok(WarmStart {
        controls: src.controls(&problem),
        multipliers: src
            .multiplier_set(&problem)
            .unwrap_or_else(|| MultiplierSet::zeros(&problem)),
        states: Some(src.states()),
    })
}

/// Human-readable convergence report.
pub fn report(cfg: &RunConfig, sol: &OcSolution, families: &[(&'static str, f64)]) -> String {
    let mut r = String::new();
    let _ = writeln!(r, "case        {}", cfg.name());
    let _ = writeln!(
        r,
        "model       {} (N = {}, h = {})",
        cfg.model.kind.name(),
        cfg.model.horizon,
        cfg.step()
    );
    let _ = writeln!(r, "segments    {}", sol.segments);
    let _ = writeln!(r, "converged   {}", sol.converged);
    let _ = writeln!(r, "certificate {:.6e}", sol.residual_norm);
    let _ = writeln!(r, "cost        {:.12}", sol.cost);
    let _ = writeln!(r, "newton      {}", sol.newton_iters);
    if !sol.homotopy_stages.is_empty() {
        let _ = writeln!(r, "homotopy    {:?}", sol.homotopy_stages);
    }
    let _ = writeln!(r, "wall time   {:.2} s", sol.wall_time_s);
    let _ = writeln!(r, "\nresidual families (max norm)");
    for (name, v) in families {
        let _ = writeln!(r, "  {name:<13} {v:.3e}");
    }
    let _ = writeln!(
        r,
        "\n{:>6} {:>5} {:>12} {:>10} {:>3}",
        "stage", "iter", "residual", "step", "ls"
    );
    for h in &sol.history {
        let _ = writeln!(
            r,
            "{:>6.3} {:>5} {:>12.4e} {:>10.3e} {:>3}",
            h.stage,
            h.iteration,
            h.residual,
            h.step,
            if h.least_squares { "y" } else { "" }
        );
    }
    if !sol.diagnostics.is_empty() {
        let _ = writeln!(r, "\ndiagnostics");
        for d in &sol.diagnostics {
            let _ = writeln!(r, "  {d}");
        }
    }
    r
}

/// Solves the optimal control problem and writes the solution artifact and
/// `report.txt`. A non-converged best iterate is written as well.
pub fn run_optimize(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let problem = cfg.problem()?;
    let settings = cfg.solver_settings();
    let mut sc = settings.shooting();
    if settings.init == InitKind::WarmStart {
        let dir = cfg.solver.warm_start.as_ref().expect("validated");
        sc.init = InitStrategy::WarmStart(Box::new(warm_start(dir, cfg)?));
    }
    let start = Instant::now();
    let mut sol = shooting::solve(&problem, &sc)?;
    sol.wall_time_s = start.elapsed().as_secs_f64();

    let lam = &sol.multipliers;
    let families = certificate(&problem, &sol.trajectory, lam)
        .map_err(|e| RunError::Numerical(e.to_string()))?
        .family_norms();
    let mut meta = metadata(cfg, CommandKind::Optimize)?;
    meta.solver = Some(settings);
    meta.result = Some(SolveRecord {
        converged: sol.converged,
        residual_norm: sol.residual_norm,
        cost: sol.cost,
        newton_iters: sol.newton_iters,
        homotopy_used: !sol.homotopy_stages.is_empty(),
        homotopy_stages: sol.homotopy_stages.clone(),
    });
    let artifact = Artifact::new(meta, &sol.trajectory, Some(lam));
    let dir = cfg.out_dir();
    emit_artifact(&artifact, &dir)?;
    let path = dir.join("report.txt");
    fs::write(&path, report(cfg, &sol, &families)).map_err(|source| ArtifactError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let status = if sol.converged {
        Status::Success
    } else {
        Status::NotConverged
    };
    Ok(Outcome {
        status,
        summary: format!(
            "{}: converged = {}, certificate {:.3e}, cost {:.9}, {} Newton iterations in {:.1} s; wrote {}",
            cfg.name(),
            sol.converged,
            sol.residual_norm,
            sol.cost,
            sol.newton_iters,
            sol.wall_time_s,
            dir.display()
        ),
        out_dir: Some(dir),
    })
}

/// Result of re-checking a solution artifact.
#[derive(Debug, Clone)]
pub struct Verification {
    pub certificate: f64,
    pub recorded: f64,
    pub tol: f64,
    pub families: Vec<(&'static str, f64)>,
    pub worst_optimality: Option<(usize, f64)>,
    /// largest difference between the stored and recomputed `res_state`
    pub res_state_mismatch: f64,
}

impl Verification {
    pub fn reproduces(&self) -> bool {
        (self.certificate - self.recorded).abs() <= VERIFY_TOL && self.res_state_mismatch <= VERIFY_TOL
    }

    pub fn certified(&self) -> bool {
        self.certificate <= self.tol
    }

    pub fn status(&self) -> Status {
        if self.reproduces() && self.certified() {
            Status::Success
        } else {
            Status::NotConverged
        }
    }

    pub fn render(&self) -> String {
        let mut r = String::new();
        let _ = writeln!(
            r,
            "certificate {:.6e} (recorded {:.6e}, tolerance {:.1e})",
            self.certificate, self.recorded, self.tol
        );
        for (name, v) in &self.families {
            let _ = writeln!(r, "  {name:<13} {v:.3e}");
        }
        if let Some((k, v)) = self.worst_optimality {
            let _ = writeln!(r, "worst optimality residual {v:.3e} at k = {k}");
        }
        if !self.reproduces() {
            let _ = writeln!(
                r,
                "MISMATCH: certificate differs from metadata by {:.3e}, res_state by {:.3e}",
                (self.certificate - self.recorded).abs(),
                self.res_state_mismatch
            );
        }
        if !self.certified() {
            match self.worst_optimality {
                Some((k, v)) if v > self.tol => {
                    let _ = writeln!(r, "VIOLATION: optimality residual at k = {k} is {v:.3e}");
                }
                _ => {
                    let _ = writeln!(r, "VIOLATION: certificate above tolerance");
                }
            }
        }
        r
    }
}

/// Agreement required between a recomputed certificate and the recorded one.
pub const VERIFY_TOL: f64 = 1e-12;

/// Recomputes every residual of a solution artifact from its files alone.
pub fn verify(dir: &Path) -> Result<Verification, RunError> {
    let art = load_artifact(dir)?;
    let meta = &art.metadata;
    let (Some(result), Some(_)) = (&meta.result, &art.multipliers) else {
        return Err(ArtifactError::Invalid {
            file: dir.display().to_string(),
            message: "not a solution artifact (no solver result or multipliers)".into(),
        }
        .into());
    };
    let problem = meta.problem()?;
    let traj = art.trajectory(&problem)?;
    let lam = art.multiplier_set(&problem).expect("checked above");
    let cert = certificate(&problem, &traj, &lam).map_err(|e| RunError::Numerical(e.to_string()))?;
    let res_state_mismatch = art
        .rows
        .iter()
        .zip(traj.step_residuals.iter().chain(std::iter::once(&0.0)))
        .fold(0.0_f64, |m, (r, s)| m.max((r.res_state - s).abs()));
    Ok(Verification {
        certificate: cert.inf_norm(),
        recorded: result.residual_norm,
        tol: meta.solver.as_ref().map_or(1e-6, |s| s.tol),
        families: cert.family_norms(),
        worst_optimality: cert.worst_optimality(),
        res_state_mismatch,
    })
}

/// Runs the command named by the configuration (default `optimize`).
pub fn run(cfg: &RunConfig) -> Result<Outcome, RunError> {
    match cfg.command.unwrap_or(CommandKind::Optimize) {
        CommandKind::Simulate => run_simulate(cfg),
        CommandKind::Optimize => run_optimize(cfg),
        CommandKind::Verify => {
            let dir = cfg.out_dir();
            let v = verify(&dir)?;
            Ok(Outcome {
                status: v.status(),
                summary: v.render(),
                out_dir: Some(dir),
            })
        }
    }
}
