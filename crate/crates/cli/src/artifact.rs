//! Solution artifacts: `trajectory.csv`, `multipliers.csv` (optimization
//! only) and `metadata.toml` in one directory.
//!
//! Numbers are written with 17 significant digits, so a write followed by a
//! read reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use dmoc_core::integrator::{ProductState, Trajectory};
use dmoc_core::lie::{AlgebraVector, CoAlgebraVector};
use dmoc_core::optimal_control::{MultiplierSet, OcProblem};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{
    problem_from, state_for, values_of, CommandKind, ConfigError, ModelKind, SolverSettings, StateValues,
};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const MULTIPLIER_FILE: &str = "multipliers.csv";
pub const METADATA_FILE: &str = "metadata.toml";

pub const TRAJECTORY_HEADER: &str = "k,t,theta,xi,mu_a,mu_u,u,res_state";
pub const MULTIPLIER_HEADER: &str = "k,lam1,lam2,lam3,lam4,lam5,lam6";

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{file}: row {row}, column {column}: {message}")]
    Malformed {
        file: String,
        row: usize,
        column: String,
        message: String,
    },
    #[error("{file}: {message}")]
    Invalid { file: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Outcome of an optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub converged: bool,
    /// certificate: infinity norm of all necessary-condition residuals
    pub residual_norm: f64,
    pub cost: f64,
    pub newton_iters: usize,
    pub homotopy_used: bool,
    pub homotopy_stages: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub name: String,
    pub command: CommandKind,
    pub model: ModelKind,
    pub horizon: usize,
    pub h: f64,
    pub params: BTreeMap<String, f64>,
    pub initial: StateValues,
    pub terminal: StateValues,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<SolveRecord>,
}

impl Metadata {
    pub fn problem(&self) -> Result<OcProblem<f64>, ConfigError> {
        problem_from(
            &self.name,
            self.model,
            &self.params,
            self.h,
            self.horizon,
            self.initial,
            self.terminal,
        )
    }
}

/// One row of `trajectory.csv`; angles in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub k: usize,
    pub t: f64,
    pub theta: f64,
    pub xi: f64,
    pub mu_a: f64,
    pub mu_u: f64,
    pub u: f64,
    /// state-equation residual of the step leaving `k` (zero at `k = N`)
    pub res_state: f64,
}

/// One row of `multipliers.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierRow {
    pub k: usize,
    pub lam: [f64; 6],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub metadata: Metadata,
    pub rows: Vec<TrajectoryRow>,
    pub multipliers: Option<Vec<MultiplierRow>>,
}

impl Artifact {
    /// Tabulates a trajectory (and multipliers) of a built-in model.
    pub fn new(metadata: Metadata, traj: &Trajectory<f64>, lam: Option<&MultiplierSet<f64>>) -> Self {
        let kind = metadata.model;
        let rows = traj
            .states
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let v = values_of(kind, s);
                TrajectoryRow {
                    k,
                    t: k as f64 * metadata.h,
                    theta: v.theta,
                    xi: v.xi,
                    mu_a: v.mu_a,
                    mu_u: v.mu_u,
                    u: traj.controls[k].coords()[0],
                    res_state: traj.step_residuals.get(k).copied().unwrap_or(0.0),
                }
            })
            .collect();
        let multipliers = lam.map(|m| {
            (0..m.len())
                .map(|k| MultiplierRow {
                    k,
                    lam: [
                        m.lam1[k].coords()[0],
                        m.lam2[k].coords()[0],
                        m.lam3[k].coords()[0],
                        m.lam4[k].coords()[0],
                        m.lam5[k].coords()[0],
                        m.lam6[k].coords()[0],
                    ],
                })
                .collect()
        });
        Self {
            metadata,
            rows,
            multipliers,
        }
    }

    pub fn states(&self) -> Vec<ProductState<f64>> {
        let kind = self.metadata.model;
        self.rows
            .iter()
            .map(|r| {
                state_for(
                    kind,
                    &StateValues {
                        theta: r.theta,
                        xi: r.xi,
                        mu_a: r.mu_a,
                        mu_u: r.mu_u,
                    },
                )
            })
            .collect()
    }

    /// The `u` column as control samples of `problem`.
    pub fn controls(&self, problem: &OcProblem<f64>) -> Vec<CoAlgebraVector<f64>> {
        let ga = problem.model.group_a();
        self.rows.iter().map(|r| CoAlgebraVector::scalar(ga, r.u)).collect()
    }

    /// Rebuilds the trajectory from the stored states and controls.
    pub fn trajectory(&self, problem: &OcProblem<f64>) -> Result<Trajectory<f64>, ArtifactError> {
        Trajectory::from_states(&problem.model, self.states(), self.controls(problem)).map_err(|e| {
            ArtifactError::Invalid {
                file: TRAJECTORY_FILE.into(),
                message: e.to_string(),
            }
        })
    }

    pub fn multiplier_set(&self, problem: &OcProblem<f64>) -> Option<MultiplierSet<f64>> {
        let rows = self.multipliers.as_ref()?;
        let (ga, gu) = (problem.model.group_a(), problem.model.group_u());
        let mut m = MultiplierSet::zeros(problem);
        for r in rows {
            let k = r.k;
            m.lam1[k] = AlgebraVector::scalar(ga, r.lam[0]);
            m.lam2[k] = CoAlgebraVector::scalar(ga, r.lam[1]);
            m.lam3[k] = AlgebraVector::scalar(ga, r.lam[2]);
            m.lam4[k] = AlgebraVector::scalar(gu, r.lam[3]);
            m.lam5[k] = CoAlgebraVector::scalar(gu, r.lam[4]);
            m.lam6[k] = AlgebraVector::scalar(gu, r.lam[5]);
        }
        Some(m)
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn trajectory_csv(rows: &[TrajectoryRow]) -> String {
    let mut out = String::with_capacity(160 * (rows.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for r in rows {
        let vals = [r.t, r.theta, r.xi, r.mu_a, r.mu_u, r.u, r.res_state].map(num);
        let _ = writeln!(out, "{},{}", r.k, vals.join(","));
    }
    out
}

pub fn multiplier_csv(rows: &[MultiplierRow]) -> String {
    let mut out = String::with_capacity(140 * (rows.len() + 1));
    out.push_str(MULTIPLIER_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{}", r.k, r.lam.map(num).join(","));
    }
    out
}

fn write(path: &Path, text: &str) -> Result<(), ArtifactError> {
    fs::write(path, text).map_err(|source| ArtifactError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read(path: &Path) -> Result<String, ArtifactError> {
    fs::read_to_string(path).map_err(|source| ArtifactError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes the artifact files into `dir`, creating it when needed.
pub fn emit_artifact(artifact: &Artifact, dir: &Path) -> Result<(), ArtifactError> {
    fs::create_dir_all(dir).map_err(|source| ArtifactError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write(&dir.join(TRAJECTORY_FILE), &trajectory_csv(&artifact.rows))?;
    let mult = dir.join(MULTIPLIER_FILE);
    match &artifact.multipliers {
        Some(m) => write(&mult, &multiplier_csv(m))?,
        None if mult.exists() => fs::remove_file(&mult).map_err(|source| ArtifactError::Io {
            path: mult.display().to_string(),
            source,
        })?,
        None => {}
    }
    let meta = toml::to_string(&artifact.metadata).map_err(|e| ArtifactError::Invalid {
        file: METADATA_FILE.into(),
        message: e.to_string(),
    })?;
    write(&dir.join(METADATA_FILE), &meta)
}

/// Parses `text` as CSV with the exact `header`; returns the numeric fields
/// of each row (the leading index excluded) after checking the index.
fn parse_csv<const W: usize>(file: &str, text: &str, header: &str) -> Result<Vec<[f64; W]>, ArtifactError> {
    let names: Vec<&str> = header.split(',').collect();
    let mut lines = text.lines();
    let first = lines.next().unwrap_or("");
    if first.trim_end() != header {
        return Err(ArtifactError::Malformed {
            file: file.into(),
            row: 1,
            column: "header".into(),
            message: format!("expected `{header}`, found `{first}`"),
        });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != W + 1 {
            return Err(ArtifactError::Malformed {
                file: file.into(),
                row,
                column: "*".into(),
                message: format!("expected {} fields, found {}", W + 1, fields.len()),
            });
        }
        let k: usize = fields[0].trim().parse().map_err(|e| ArtifactError::Malformed {
            file: file.into(),
            row,
            column: names[0].into(),
            message: format!("{e}"),
        })?;
        if k != out.len() {
            return Err(ArtifactError::Malformed {
                file: file.into(),
                row,
                column: names[0].into(),
                message: format!("expected index {}, found {k}", out.len()),
            });
        }
        let mut vals = [0.0; W];
        for (j, v) in vals.iter_mut().enumerate() {
            *v = fields[j + 1].trim().parse().map_err(|e| ArtifactError::Malformed {
                file: file.into(),
                row,
                column: names[j + 1].into(),
                message: format!("{e}: `{}`", fields[j + 1]),
            })?;
        }
        out.push(vals);
    }
    Ok(out)
}

/// Reads an artifact directory written by [`emit_artifact`].
pub fn load_artifact(dir: &Path) -> Result<Artifact, ArtifactError> {
    let meta_text = read(&dir.join(METADATA_FILE))?;
    let metadata: Metadata = toml::from_str(&meta_text).map_err(|e| ArtifactError::Invalid {
        file: METADATA_FILE.into(),
        message: e.to_string().trim_end().into(),
    })?;
    let rows: Vec<TrajectoryRow> =
        parse_csv::<7>(TRAJECTORY_FILE, &read(&dir.join(TRAJECTORY_FILE))?, TRAJECTORY_HEADER)?
            .into_iter()
            .enumerate()
            .map(|(k, v)| TrajectoryRow {
                k,
                t: v[0],
                theta: v[1],
                xi: v[2],
                mu_a: v[3],
                mu_u: v[4],
                u: v[5],
                res_state: v[6],
            })
            .collect();
    if rows.len() != metadata.horizon + 1 {
        return Err(ArtifactError::Invalid {
            file: TRAJECTORY_FILE.into(),
            message: format!("{} rows, expected N + 1 = {}", rows.len(), metadata.horizon + 1),
        });
    }
    let mpath = dir.join(MULTIPLIER_FILE);
    let multipliers = if mpath.exists() {
        let m: Vec<MultiplierRow> = parse_csv::<6>(MULTIPLIER_FILE, &read(&mpath)?, MULTIPLIER_HEADER)?
            .into_iter()
            .enumerate()
            .map(|(k, lam)| MultiplierRow { k, lam })
            .collect();
        if m.len() != metadata.horizon {
            return Err(ArtifactError::Invalid {
                file: MULTIPLIER_FILE.into(),
                message: format!("{} rows, expected N = {}", m.len(), metadata.horizon),
            });
        }
        Some(m)
    } else {
        None
    };
    Ok(Artifact {
        metadata,
        rows,
        multipliers,
    })
}
