//! Multiple shooting for the two-point boundary-value problem formed by the
//! necessary conditions, with a damped Newton outer iteration.
//!
//! Unknowns are the controls `u_0 .. u_{N-1}` (`u_N` is the problem's fixed
//! terminal sample), the multipliers `lam1, lam3, lam4, lam6` at every step
//! (`lam2`, `lam5` are eliminated in closed form), and the states at the start
//! of every segment but the first. Equations are the adjoint, recursion,
//! optimality and terminal conditions plus state continuity at segment joints.
//!
//! Each Newton step is computed from the equivalent expanded system in which
//! every intermediate state is an unknown tied to its predecessor by the
//! linearized step map. That system is block banded and is factored directly.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::integrator::{step_hamilton_with, IntegratorError, ProductState, StepOptions, Trajectory};
use crate::lie::{AlgebraVector, CoAlgebraVector, GroupElement};
use crate::linalg::{normal_equations, BandMatrix};
use crate::optimal_control::{certificate, stage_terms, total_cost, MultiplierSet, OcError, OcProblem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShootingError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Problem(#[from] OcError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
}

/// Starting point of the iteration.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitStrategy {
    /// zero controls and multipliers, segment states from an unforced run
    Zeros,
    /// zero controls and multipliers, segment states on the geodesic from the
    /// initial to the terminal configuration
    #[default]
    LinearInterpolation,
    WarmStart(Box<WarmStart>),
}

/// A previous solution used as the first iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    /// at least `N` samples; `u_N` is ignored
    pub controls: Vec<CoAlgebraVector<f64>>,
    pub multipliers: MultiplierSet<f64>,
    /// `N + 1` states; segment starts are read from here when present,
    /// otherwise simulated
    pub states: Option<Vec<ProductState<f64>>>,
}

impl WarmStart {
    pub fn from_solution(sol: &OcSolution) -> Self {
        Self {
            controls: sol.trajectory.controls.clone(),
            multipliers: sol.multipliers.clone(),
            states: Some(sol.trajectory.states.clone()),
        }
    }
}

/// Continuation policy.
///
/// Stage `s` solves the problem with gravity scaled by `s` (when the problem
/// carries a continuation family) and the initial state moved to the fraction
/// `s` of the way from the terminal state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Homotopy {
    Off,
    /// always solve through [`HOMOTOPY_STAGES`]
    On,
    /// solve directly and fall back to the stages when Newton fails or stalls
    #[default]
    Auto,
}

/// Continuation parameters of the homotopy, ending at the original problem.
pub const HOMOTOPY_STAGES: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

// a direct attempt under `Homotopy::Auto` is abandoned after this many
// consecutive steps no longer than `STALL_STEP`
const STALL_STEP: f64 = 1.0 / 16.0;
const STALL_COUNT: usize = 8;

/// Longest segment, in steps, used while continuing; coarser segmentations
/// are solved from the continued solution.
pub const CONTINUATION_SEGMENT_STEPS: usize = 10;

/// The problem solved at continuation parameter `s`.
pub fn homotopy_stage(problem: &OcProblem<f64>, s: f64) -> Result<OcProblem<f64>, ShootingError> {
    if s == 1.0 {
        return Ok(problem.clone());
    }
    if !(0.0..1.0).contains(&s) {
        return Err(ShootingError::Config(format!(
            "continuation parameter must lie in [0, 1], got {s}"
        )));
    }
    let mut q = match &problem.continuation {
        Some(family) => problem.with_model(family(s)),
        None => problem.clone(),
    };
    let offset = problem.terminal.local_diff(&problem.initial).map_err(OcError::from)?;
    let scaled: Vec<f64> = offset.iter().map(|x| s * x).collect();
    q.initial = problem.terminal.retract(&scaled);
    Ok(q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingConfig {
    /// number of shooting segments; the last one absorbs the remainder of `N`
    pub segments: usize,
    /// target for the residual infinity norm
    pub tol: f64,
    /// Newton iterations per continuation stage
    pub max_newton: usize,
    /// finite-difference step for the Jacobian blocks (scaled by `max(1, |x|)`)
    pub fd_eps: f64,
    /// backtracking factor
    pub damping: f64,
    pub min_step: f64,
    pub init: InitStrategy,
    pub homotopy: Homotopy,
    /// inner step solves; the default runs them to the roundoff floor, which
    /// the adjoint residuals need when the multipliers are large
    pub step: StepOptions<f64>,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            segments: 100,
            tol: 1e-6,
            max_newton: 200,
            fd_eps: 1e-6,
            damping: 0.5,
            min_step: 2f64.powi(-20),
            init: InitStrategy::LinearInterpolation,
            homotopy: Homotopy::Auto,
            step: StepOptions {
                tol: 1e-15,
                ..StepOptions::default()
            },
        }
    }
}

impl ShootingConfig {
    pub fn validate(&self, horizon: usize) -> Result<(), ShootingError> {
        let bad = |m: String| Err(ShootingError::Config(m));
        if self.segments == 0 || self.segments > horizon {
            return bad(format!("segments must lie in 1..={horizon}, got {}", self.segments));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if !(self.fd_eps > 0.0 && self.fd_eps < 1e-2) {
            return bad(format!("fd_eps must lie in (0, 1e-2), got {}", self.fd_eps));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return bad(format!("damping must lie in (0, 1), got {}", self.damping));
        }
        if !(self.min_step > 0.0 && self.min_step <= 1.0) {
            return bad(format!("min_step must lie in (0, 1], got {}", self.min_step));
        }
        Ok(())
    }
}

/// One accepted or rejected Newton iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// continuation parameter (1 without homotopy)
    pub stage: f64,
    pub iteration: usize,
    /// residual infinity norm before the step
    pub residual: f64,
    /// accepted step length, 0 when the line search failed
    pub step: f64,
    pub least_squares: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcSolution {
    pub trajectory: Trajectory<f64>,
    /// with `lam2`, `lam5` in closed form
    pub multipliers: MultiplierSet<f64>,
    pub cost: f64,
    /// certificate: infinity norm of every necessary-condition residual,
    /// recomputed from the trajectory alone
    pub residual_norm: f64,
    pub newton_iters: usize,
    pub converged: bool,
    /// continuation parameters actually solved, empty without homotopy
    pub homotopy_stages: Vec<f64>,
    pub segments: usize,
    pub history: Vec<IterationRecord>,
    pub diagnostics: Vec<String>,
    pub wall_time_s: f64,
}

// ---------------------------------------------------------------------------
// dense utilities

/// Central-difference Jacobian; column `j` perturbs `x_j` by `+-eps`.
pub fn fd_jacobian<F>(map: F, x: &[f64], eps: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let r0 = map(x);
    let mut jac = DMatrix::zeros(r0.len(), x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        xp[j] = x[j] + eps;
        let rp = map(&xp);
        xp[j] = x[j] - eps;
        let rm = map(&xp);
        xp[j] = x[j];
        for i in 0..r0.len() {
            jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * eps);
        }
    }
    jac
}

/// Newton direction for `J d = -r`.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonDirection {
    pub delta: Vec<f64>,
    /// true when the system was non-square or singular
    pub least_squares: bool,
}

/// Solves `J d = -r` by LU when `J` is square and regular, by an SVD least
/// squares solve otherwise.
pub fn newton_direction(j: &DMatrix<f64>, r: &[f64]) -> NewtonDirection {
    let rhs = -DVector::from_column_slice(r);
    if j.is_square() {
        if let Some(d) = j.clone().lu().solve(&rhs) {
            if d.iter().all(|v| v.is_finite()) {
                return NewtonDirection {
                    delta: d.as_slice().to_vec(),
                    least_squares: false,
                };
            }
        }
    }
    let svd = j.clone().svd(true, true);
    let tol = svd.singular_values.max() * f64::EPSILON * (j.nrows().max(j.ncols()) as f64);
    let d = svd.solve(&rhs, tol).expect("U and V requested");
    NewtonDirection {
        delta: d.as_slice().to_vec(),
        least_squares: true,
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Outcome of a damped step.
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Accepted {
        x: Vec<f64>,
        residual: Vec<f64>,
        alpha: f64,
    },
    Stalled,
}

/// Newton direction followed by backtracking until `|r(x + a d)|_2 < |r(x)|_2`.
pub fn newton_step<F>(map: &F, x: &[f64], r: &[f64], j: &DMatrix<f64>, damping: f64, min_step: f64) -> StepOutcome
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let dir = newton_direction(j, r);
    let r0 = norm2(r);
    let mut alpha = 1.0;
    while alpha >= min_step {
        let xt: Vec<f64> = x.iter().zip(&dir.delta).map(|(a, d)| a + alpha * d).collect();
        let rt = map(&xt);
        if norm2(&rt) < r0 {
            return StepOutcome::Accepted {
                x: xt,
                residual: rt,
                alpha,
            };
        }
        alpha *= damping;
    }
    StepOutcome::Stalled
}

/// Result of [`newton_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Damped Newton with dense finite-difference Jacobians, for small systems.
pub fn newton_solve<F>(map: F, x0: &[f64], tol: f64, max_iter: usize, fd_eps: f64) -> NewtonReport
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = x0.to_vec();
    let mut r = map(&x);
    let mut it = 0;
    while norm_inf(&r) > tol && it < max_iter {
        it += 1;
        let j = fd_jacobian(&map, &x, fd_eps);
        match newton_step(&map, &x, &r, &j, 0.5, 2f64.powi(-20)) {
            StepOutcome::Accepted { x: xn, residual, .. } => {
                x = xn;
                r = residual;
            }
            StepOutcome::Stalled => break,
        }
    }
    let residual = norm_inf(&r);
    NewtonReport {
        x,
        residual,
        iterations: it,
        converged: residual <= tol,
    }
}

// ---------------------------------------------------------------------------
// shooting layout

#[derive(Debug, Clone)]
struct Layout {
    n: usize,
    da: usize,
    du: usize,
    ns: usize,
    nl: usize,
    ng: usize,
    // segment boundaries n_0 = 0 < ... < n_K = N
    bounds: Vec<usize>,
    half_h: f64,
}

impl Layout {
    fn new(problem: &OcProblem<f64>, segments: usize) -> Self {
        let n = problem.horizon;
        let da = problem.dim_a();
        let du = problem.dim_u();
        let len = n / segments;
        let mut bounds: Vec<usize> = (0..segments).map(|j| j * len).collect();
        bounds.push(n);
        Self {
            n,
            da,
            du,
            ns: 2 * (da + du),
            nl: 2 * (da + du),
            ng: 4 * da + 3 * du,
            bounds,
            half_h: 0.5 * problem.model.step_h(),
        }
    }

    fn segments(&self) -> usize {
        self.bounds.len() - 1
    }

    fn joints(&self) -> &[usize] {
        &self.bounds[1..self.bounds.len() - 1]
    }

    // offsets inside the stage vector
    fn g_off(&self, part: usize) -> usize {
        let (da, du) = (self.da, self.du);
        [
            0,
            da,
            da + du,
            2 * da + du,
            2 * da + 2 * du,
            3 * da + 2 * du,
            3 * da + 3 * du,
        ][part]
    }

    fn g_len(&self, part: usize) -> usize {
        if part.is_multiple_of(2) {
            self.da
        } else {
            self.du
        }
    }

    // expanded-system column and row blocks
    fn block_cols(&self) -> usize {
        self.ns + self.da + self.nl
    }

    fn block_rows(&self) -> usize {
        self.ns + 3 * self.da + 2 * self.du
    }

    fn col_s(&self, k: usize) -> usize {
        debug_assert!(k >= 1);
        self.da + self.nl + (k - 1) * self.block_cols()
    }

    fn col_u(&self, k: usize) -> usize {
        if k == 0 {
            0
        } else {
            self.col_s(k) + self.ns
        }
    }

    fn col_lam(&self, k: usize) -> usize {
        self.col_u(k) + self.da
    }

    fn row_block(&self, k: usize) -> usize {
        debug_assert!(k >= 1);
        self.da + (k - 1) * self.block_rows()
    }

    fn expanded_len(&self) -> usize {
        self.da + (self.n - 1) * self.block_rows() + 2 * self.ns
    }

    fn is_joint(&self, k: usize) -> bool {
        self.joints().binary_search(&k).is_ok()
    }
}

#[derive(Debug, Clone)]
struct Iterate {
    // N samples of u_0 .. u_{N-1}
    u: Vec<Vec<f64>>,
    // per step: lam1, lam3, lam4, lam6
    lam: Vec<Vec<f64>>,
    // states at the joints
    starts: Vec<ProductState<f64>>,
}

struct Evaluation {
    states: Vec<ProductState<f64>>,
    increments: Vec<GroupElement<f64>>,
    log_f: Vec<Vec<f64>>,
    // continuity defect at each joint, `local_diff(predicted, start)`
    defects: Vec<Vec<f64>>,
    // expanded residual (zero on interior chain rows)
    residual: Vec<f64>,
}

struct Ctx<'a> {
    problem: &'a OcProblem<f64>,
    layout: Layout,
    step: StepOptions<f64>,
    fd_eps: f64,
}

impl<'a> Ctx<'a> {
    fn control(&self, it: &Iterate, k: usize) -> CoAlgebraVector<f64> {
        if k == self.layout.n {
            self.problem.terminal_control.clone()
        } else {
            CoAlgebraVector::new(self.problem.model.group_a().clone(), &it.u[k]).expect("control dimension")
        }
    }

    fn controls(&self, it: &Iterate) -> Vec<CoAlgebraVector<f64>> {
        (0..=self.layout.n).map(|k| self.control(it, k)).collect()
    }

    fn multipliers(&self, it: &Iterate) -> MultiplierSet<f64> {
        let (da, du) = (self.layout.da, self.layout.du);
        let ga = self.problem.model.group_a();
        let gu = self.problem.model.group_u();
        let mut m = MultiplierSet::zeros(self.problem);
        for (k, l) in it.lam.iter().enumerate() {
            m.lam1[k] = AlgebraVector::new(ga.clone(), &l[..da]).expect("dimension");
            m.lam3[k] = AlgebraVector::new(ga.clone(), &l[da..2 * da]).expect("dimension");
            m.lam4[k] = AlgebraVector::new(gu.clone(), &l[2 * da..2 * da + du]).expect("dimension");
            m.lam6[k] = AlgebraVector::new(gu.clone(), &l[2 * da + du..]).expect("dimension");
        }
        m
    }

    fn stage_vector(
        &self,
        s: &ProductState<f64>,
        f: &GroupElement<f64>,
        u: &CoAlgebraVector<f64>,
        lam: &[f64],
    ) -> Vec<f64> {
        let (da, du) = (self.layout.da, self.layout.du);
        let ga = self.problem.model.group_a();
        let gu = self.problem.model.group_u();
        let l1 = AlgebraVector::new(ga.clone(), &lam[..da]).expect("dimension");
        let l3 = AlgebraVector::new(ga.clone(), &lam[da..2 * da]).expect("dimension");
        let l4 = AlgebraVector::new(gu.clone(), &lam[2 * da..2 * da + du]).expect("dimension");
        let l6 = AlgebraVector::new(gu.clone(), &lam[2 * da + du..]).expect("dimension");
        let t = stage_terms(self.problem, &s.g(), f, &s.mu_a, &s.mu_u, u, &l1, &l3, &l4, &l6);
        let ag = &t.p_ag - &t.f_a.inverse().coadjoint(&t.lam2).expect("g_a");
        let ug = &t.p_ug - &t.f_u.inverse().coadjoint(&t.lam5).expect("g_u");
        let mut out = Vec::with_capacity(self.layout.ng);
        out.extend_from_slice(ag.coords());
        out.extend_from_slice(ug.coords());
        out.extend_from_slice(t.lam2.coords());
        out.extend_from_slice(t.lam5.coords());
        out.extend_from_slice(t.ad_lam3.coords());
        out.extend_from_slice(t.ad_lam6.coords());
        out.extend_from_slice(t.du_phi.coords());
        out
    }

    fn boundary(&self, s: &ProductState<f64>) -> Vec<f64> {
        let t = &self.problem.terminal;
        let mut out = Vec::with_capacity(self.layout.ns);
        out.extend_from_slice(s.g_a.local_log(&t.g_a).expect("g_a").coords());
        out.extend_from_slice(s.g_u.local_log(&t.g_u).expect("g_u").coords());
        out.extend(s.mu_a.coords().iter().zip(t.mu_a.coords()).map(|(a, b)| a - b));
        out.extend(s.mu_u.coords().iter().zip(t.mu_u.coords()).map(|(a, b)| a - b));
        out
    }

    fn evaluate(&self, it: &Iterate, guesses: Option<&[Vec<f64>]>) -> Result<Evaluation, IntegratorError> {
        let lay = &self.layout;
        let model = &self.problem.model;
        let k_seg = lay.segments();
        let controls = self.controls(it);
        type SegOut = (
            Vec<ProductState<f64>>,
            Vec<GroupElement<f64>>,
            Vec<Vec<f64>>,
            ProductState<f64>,
        );
        let segs: Vec<Result<SegOut, IntegratorError>> = (0..k_seg)
            .into_par_iter()
            .map(|j| {
                let (a, b) = (lay.bounds[j], lay.bounds[j + 1]);
                let mut s = if j == 0 {
                    self.problem.initial.clone()
                } else {
                    it.starts[j - 1].clone()
                };
                let mut states = Vec::with_capacity(b - a);
                let mut incs = Vec::with_capacity(b - a);
                let mut logs: Vec<Vec<f64>> = Vec::with_capacity(b - a);
                for k in a..b {
                    let guess = match guesses {
                        Some(g) => Some(g[k].as_slice()),
                        None => logs.last().map(|v| v.as_slice()),
                    };
                    let r = step_hamilton_with(model, &s, &controls[k], &controls[k + 1], guess, &self.step).map_err(
                        |e| match e {
                            IntegratorError::StepFailure { residual, .. } => {
                                IntegratorError::StepFailure { k, residual }
                            }
                            IntegratorError::StepTooLarge { detail, .. } => IntegratorError::StepTooLarge { k, detail },
                            other => other,
                        },
                    )?;
                    states.push(s);
                    incs.push(product(&r.f_a, &r.f_u));
                    logs.push(r.log_f);
                    s = r.next;
                }
                Ok((states, incs, logs, s))
            })
            .collect();
        let mut states = Vec::with_capacity(lay.n + 1);
        let mut increments = Vec::with_capacity(lay.n);
        let mut log_f = Vec::with_capacity(lay.n);
        let mut defects = Vec::with_capacity(k_seg - 1);
        let mut last = None;
        for (j, seg) in segs.into_iter().enumerate() {
            let (st, inc, lg, end) = seg?;
            states.extend(st);
            increments.extend(inc);
            log_f.extend(lg);
            if j + 1 < k_seg {
                defects.push(end.local_diff(&it.starts[j]).map_err(IntegratorError::Lie)?);
            } else {
                last = Some(end);
            }
        }
        states.push(last.expect("at least one segment"));

        let stage: Vec<Vec<f64>> = (0..lay.n)
            .into_par_iter()
            .map(|k| self.stage_vector(&states[k], &increments[k], &controls[k], &it.lam[k]))
            .collect();
        let residual = self.assemble_residual(it, &stage, &defects, &states[lay.n]);
        Ok(Evaluation {
            states,
            increments,
            log_f,
            defects,
            residual,
        })
    }

    fn assemble_residual(
        &self,
        it: &Iterate,
        stage: &[Vec<f64>],
        defects: &[Vec<f64>],
        end: &ProductState<f64>,
    ) -> Vec<f64> {
        let lay = &self.layout;
        let (da, du, ns) = (lay.da, lay.du, lay.ns);
        let hh = lay.half_h;
        let mut r = vec![0.0; lay.expanded_len()];
        // optimality at k = 0
        for i in 0..da {
            r[i] = stage[0][lay.g_off(6) + i] + hh * it.lam[0][i] - hh * stage[0][lay.g_off(4) + i];
        }
        for k in 1..lay.n {
            let r0 = lay.row_block(k);
            if let Ok(j) = lay.joints().binary_search(&k) {
                r[r0..r0 + ns].copy_from_slice(&defects[j]);
            }
            let (g, gp, l, lp) = (&stage[k], &stage[k - 1], &it.lam[k], &it.lam[k - 1]);
            let ra = r0 + ns;
            for i in 0..da {
                r[ra + i] = g[lay.g_off(0) + i] + gp[lay.g_off(2) + i];
            }
            let rb = ra + da;
            for i in 0..du {
                r[rb + i] = g[lay.g_off(1) + i] + gp[lay.g_off(3) + i];
            }
            let re = rb + du;
            for i in 0..da {
                r[re + i] = l[i] - g[lay.g_off(4) + i] + lp[da + i];
            }
            let rf = re + da;
            for i in 0..du {
                r[rf + i] = l[2 * da + i] - g[lay.g_off(5) + i] + lp[2 * da + du + i];
            }
            let ro = rf + du;
            for i in 0..da {
                r[ro + i] = g[lay.g_off(6) + i] + hh * l[i] - hh * (lp[da + i] + g[lay.g_off(4) + i]);
            }
        }
        let rn = lay.row_block(lay.n) + ns;
        r[rn..rn + ns].copy_from_slice(&self.boundary(end));
        r
    }

    /// Condensed residual: the expanded one without the interior chain rows.
    fn condensed(&self, ev: &Evaluation) -> Vec<f64> {
        let lay = &self.layout;
        let mut out = Vec::with_capacity(ev.residual.len());
        out.extend_from_slice(&ev.residual[..lay.da]);
        for k in 1..=lay.n {
            let r0 = lay.row_block(k);
            let skip = if lay.is_joint(k) { 0 } else { lay.ns };
            let end = if k == lay.n {
                r0 + 2 * lay.ns
            } else {
                r0 + lay.block_rows()
            };
            out.extend_from_slice(&ev.residual[r0 + skip..end]);
        }
        out
    }

    fn scales(&self, s: &ProductState<f64>, u: &[f64], lam: &[f64]) -> Vec<f64> {
        let ns = self.layout.ns;
        let mut sc = vec![1.0; ns];
        let mu: Vec<f64> = s.mu_a.coords().iter().chain(s.mu_u.coords()).copied().collect();
        for (i, m) in mu.iter().enumerate() {
            sc[ns / 2 + i] = m.abs().max(1.0);
        }
        sc.extend(u.iter().map(|x| x.abs().max(1.0)));
        sc.extend(lam.iter().map(|x| x.abs().max(1.0)));
        sc
    }

    /// Jacobian of the stage vector at `k` with respect to `(s_k, u_k, lam_k)`,
    /// as columns.
    fn stage_jacobian(&self, it: &Iterate, ev: &Evaluation, k: usize) -> Result<Vec<Vec<f64>>, IntegratorError> {
        let lay = &self.layout;
        let (ns, da) = (lay.ns, lay.da);
        let s0 = &ev.states[k];
        let zero_next = CoAlgebraVector::zeros(self.problem.model.group_a());
        let sc = self.scales(s0, &it.u[k], &it.lam[k]);
        let first = if k == 0 { ns } else { 0 };
        let mut cols = vec![vec![0.0; lay.ng]; lay.block_cols()];
        for (c, col) in cols.iter_mut().enumerate().skip(first) {
            let e = self.fd_eps * sc[c];
            let eval = |sign: f64| -> Result<Vec<f64>, IntegratorError> {
                let mut x = vec![0.0; lay.block_cols()];
                x[c] = sign * e;
                let s = s0.retract(&x[..ns]);
                let u: Vec<f64> = it.u[k].iter().zip(&x[ns..ns + da]).map(|(a, b)| a + b).collect();
                let uv = CoAlgebraVector::new(self.problem.model.group_a().clone(), &u).expect("dimension");
                let lam: Vec<f64> = it.lam[k].iter().zip(&x[ns + da..]).map(|(a, b)| a + b).collect();
                let f = if c < ns + da {
                    let r =
                        step_hamilton_with(&self.problem.model, &s, &uv, &zero_next, Some(&ev.log_f[k]), &self.step)?;
                    product(&r.f_a, &r.f_u)
                } else {
                    ev.increments[k].clone()
                };
                Ok(self.stage_vector(&s, &f, &uv, &lam))
            };
            let (p, m) = (eval(1.0)?, eval(-1.0)?);
            for i in 0..lay.ng {
                col[i] = (p[i] - m[i]) / (2.0 * e);
            }
        }
        Ok(cols)
    }

    /// Jacobian of the chain defect `local_diff(step(s_{k-1}, u_{k-1}, u_k), s_k)`
    /// with respect to `(s_{k-1}, u_{k-1}, u_k, s_k)`, as columns.
    fn chain_jacobian(&self, it: &Iterate, ev: &Evaluation, k: usize) -> Result<Vec<Vec<f64>>, IntegratorError> {
        let lay = &self.layout;
        let (ns, da) = (lay.ns, lay.da);
        let sp = &ev.states[k - 1];
        let sk = &ev.states[k];
        let up = &it.u[k - 1];
        let uk: Vec<f64> = if k < lay.n {
            it.u[k].clone()
        } else {
            self.problem.terminal_control.coords().to_vec()
        };
        let ga = self.problem.model.group_a().clone();
        let mut sc = self.scales(sp, up, &[]);
        sc.extend(uk.iter().map(|x| x.abs().max(1.0)));
        sc.extend(self.scales(sk, &[], &[]));
        let total = 2 * ns + 2 * da;
        let predicted = |x: &[f64]| -> Result<ProductState<f64>, IntegratorError> {
            let s = sp.retract(&x[..ns]);
            let a: Vec<f64> = up.iter().zip(&x[ns..ns + da]).map(|(p, d)| p + d).collect();
            let b: Vec<f64> = uk.iter().zip(&x[ns + da..ns + 2 * da]).map(|(p, d)| p + d).collect();
            let ua = CoAlgebraVector::new(ga.clone(), &a).expect("dimension");
            let ub = CoAlgebraVector::new(ga.clone(), &b).expect("dimension");
            Ok(step_hamilton_with(&self.problem.model, &s, &ua, &ub, Some(&ev.log_f[k - 1]), &self.step)?.next)
        };
        let base = predicted(&vec![0.0; total])?;
        let mut cols = vec![vec![0.0; ns]; total];
        for (c, col) in cols.iter_mut().enumerate() {
            let e = self.fd_eps * sc[c];
            let eval = |sign: f64| -> Result<Vec<f64>, IntegratorError> {
                let mut x = vec![0.0; total];
                x[c] = sign * e;
                let (phi, target) = if c < ns + 2 * da {
                    (predicted(&x)?, sk.clone())
                } else {
                    (base.clone(), sk.retract(&x[ns + 2 * da..]))
                };
                phi.local_diff(&target).map_err(IntegratorError::Lie)
            };
            let (p, m) = (eval(1.0)?, eval(-1.0)?);
            for i in 0..ns {
                col[i] = (p[i] - m[i]) / (2.0 * e);
            }
        }
        Ok(cols)
    }

    fn boundary_jacobian(&self, s: &ProductState<f64>) -> Vec<Vec<f64>> {
        let ns = self.layout.ns;
        let sc = self.scales(s, &[], &[]);
        (0..ns)
            .map(|c| {
                let e = self.fd_eps * sc[c];
                let mut x = vec![0.0; ns];
                x[c] = e;
                let p = self.boundary(&s.retract(&x));
                x[c] = -e;
                let m = self.boundary(&s.retract(&x));
                p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * e)).collect()
            })
            .collect()
    }

    /// Triplets of the expanded Jacobian.
    fn expanded_jacobian(&self, it: &Iterate, ev: &Evaluation) -> Result<Vec<(usize, usize, f64)>, IntegratorError> {
        let lay = &self.layout;
        let (n, ns, da, du) = (lay.n, lay.ns, lay.da, lay.du);
        let hh = lay.half_h;
        let jg: Vec<Vec<Vec<f64>>> = (0..n)
            .into_par_iter()
            .map(|k| self.stage_jacobian(it, ev, k))
            .collect::<Result<_, _>>()?;
        let jc: Vec<Vec<Vec<f64>>> = (1..=n)
            .into_par_iter()
            .map(|k| self.chain_jacobian(it, ev, k))
            .collect::<Result<_, _>>()?;
        let jb = self.boundary_jacobian(&ev.states[n]);

        let mut t = Vec::new();
        // stage-vector part `part` (rows i) of block k, with weight w, into row r
        let stage_into = |t: &mut Vec<(usize, usize, f64)>, k: usize, part: usize, row: usize, w: f64| {
            let first = if k == 0 { ns } else { 0 };
            for (c, col) in jg[k].iter().enumerate().skip(first) {
                let gcol = if k == 0 { c - ns } else { lay.col_s(k) + c };
                for i in 0..lay.g_len(part) {
                    let v = col[lay.g_off(part) + i];
                    if v != 0.0 {
                        t.push((row + i, gcol, w * v));
                    }
                }
            }
        };
        // k = 0 optimality
        stage_into(&mut t, 0, 6, 0, 1.0);
        stage_into(&mut t, 0, 4, 0, -hh);
        for i in 0..da {
            t.push((i, lay.col_lam(0) + i, hh));
        }
        for k in 1..=n {
            let r0 = lay.row_block(k);
            // chain rows
            let cols = &jc[k - 1];
            for (c, col) in cols.iter().enumerate() {
                let gcol = if c < ns {
                    if k == 1 {
                        continue;
                    }
                    lay.col_s(k - 1) + c
                } else if c < ns + da {
                    lay.col_u(k - 1) + c - ns
                } else if c < ns + 2 * da {
                    if k == n {
                        continue;
                    }
                    lay.col_u(k) + c - ns - da
                } else {
                    lay.col_s(k) + c - ns - 2 * da
                };
                for (i, &v) in col.iter().enumerate() {
                    if v != 0.0 {
                        t.push((r0 + i, gcol, v));
                    }
                }
            }
            if k == n {
                let rb = r0 + ns;
                for (c, col) in jb.iter().enumerate() {
                    for (i, &v) in col.iter().enumerate() {
                        if v != 0.0 {
                            t.push((rb + i, lay.col_s(n) + c, v));
                        }
                    }
                }
                continue;
            }
            let ra = r0 + ns;
            stage_into(&mut t, k, 0, ra, 1.0);
            stage_into(&mut t, k - 1, 2, ra, 1.0);
            let rb = ra + da;
            stage_into(&mut t, k, 1, rb, 1.0);
            stage_into(&mut t, k - 1, 3, rb, 1.0);
            let re = rb + du;
            stage_into(&mut t, k, 4, re, -1.0);
            for i in 0..da {
                t.push((re + i, lay.col_lam(k) + i, 1.0));
                t.push((re + i, lay.col_lam(k - 1) + da + i, 1.0));
            }
            let rf = re + da;
            stage_into(&mut t, k, 5, rf, -1.0);
            for i in 0..du {
                t.push((rf + i, lay.col_lam(k) + 2 * da + i, 1.0));
                t.push((rf + i, lay.col_lam(k - 1) + 2 * da + du + i, 1.0));
            }
            let ro = rf + du;
            stage_into(&mut t, k, 6, ro, 1.0);
            stage_into(&mut t, k, 4, ro, -hh);
            for i in 0..da {
                t.push((ro + i, lay.col_lam(k) + i, hh));
                t.push((ro + i, lay.col_lam(k - 1) + da + i, -hh));
            }
        }
        Ok(t)
    }

    fn apply(&self, it: &Iterate, delta: &[f64], alpha: f64) -> Iterate {
        let lay = &self.layout;
        let (ns, da, nl) = (lay.ns, lay.da, lay.nl);
        let mut out = it.clone();
        for k in 0..lay.n {
            let cu = lay.col_u(k);
            for i in 0..da {
                out.u[k][i] += alpha * delta[cu + i];
            }
            let cl = lay.col_lam(k);
            for i in 0..nl {
                out.lam[k][i] += alpha * delta[cl + i];
            }
        }
        for (j, &k) in lay.joints().iter().enumerate() {
            let c = lay.col_s(k);
            let d: Vec<f64> = delta[c..c + ns].iter().map(|x| alpha * x).collect();
            out.starts[j] = it.starts[j].retract(&d);
        }
        out
    }

    fn initial_iterate(&self, init: &InitStrategy) -> Result<Iterate, ShootingError> {
        let lay = &self.layout;
        let p = self.problem;
        let zero_u = vec![vec![0.0; lay.da]; lay.n];
        let zero_lam = vec![vec![0.0; lay.nl]; lay.n];
        let simulate_starts = |u: &[Vec<f64>]| -> Result<Vec<ProductState<f64>>, ShootingError> {
            let it = Iterate {
                u: u.to_vec(),
                lam: zero_lam.clone(),
                starts: Vec::new(),
            };
            let controls = self.controls(&it);
            let traj = crate::integrator::simulate_with(&p.model, &p.initial, &controls, lay.n, &self.step)?;
            Ok(lay.joints().iter().map(|&k| traj.states[k].clone()).collect())
        };
        Ok(match init {
            InitStrategy::Zeros => Iterate {
                starts: simulate_starts(&zero_u)?,
                u: zero_u,
                lam: zero_lam,
            },
            InitStrategy::LinearInterpolation => {
                let (s0, sf) = (&p.initial, &p.terminal);
                let xa = s0.g_a.local_log(&sf.g_a).map_err(OcError::from)?;
                let xu = s0.g_u.local_log(&sf.g_u).map_err(OcError::from)?;
                let nf = lay.n as f64;
                let fa = GroupElement::exp(&xa.scale(1.0 / nf));
                let fu = GroupElement::exp(&xu.scale(1.0 / nf));
                let f = product(&fa, &fu);
                let starts = lay
                    .joints()
                    .iter()
                    .map(|&k| {
                        let t = k as f64 / nf;
                        let g_a = s0.g_a.perturb(&xa.scale(t)).expect("g_a");
                        let g_u = s0.g_u.perturb(&xu.scale(t)).expect("g_u");
                        let g = product(&g_a, &g_u);
                        let zero = CoAlgebraVector::zeros(p.model.group_a());
                        let mu = crate::integrator::legendre_minus(&p.model, &g, &f, &zero);
                        ProductState::new(g_a, g_u, mu.mu_a, mu.mu_u)
                    })
                    .collect();
                Iterate {
                    u: zero_u,
                    lam: zero_lam,
                    starts,
                }
            }
            InitStrategy::WarmStart(w) => {
                if w.controls.len() < lay.n {
                    return Err(ShootingError::Config(format!(
                        "warm start has {} controls, need {}",
                        w.controls.len(),
                        lay.n
                    )));
                }
                w.multipliers.validate(p)?;
                let u: Vec<Vec<f64>> = w.controls[..lay.n].iter().map(|c| c.coords().to_vec()).collect();
                let lam = (0..lay.n)
                    .map(|k| {
                        let m = &w.multipliers;
                        let mut v = m.lam1[k].coords().to_vec();
                        v.extend_from_slice(m.lam3[k].coords());
                        v.extend_from_slice(m.lam4[k].coords());
                        v.extend_from_slice(m.lam6[k].coords());
                        v
                    })
                    .collect();
                let starts = match &w.states {
                    Some(st) if st.len() == lay.n + 1 => lay.joints().iter().map(|&k| st[k].clone()).collect(),
                    Some(st) => {
                        return Err(ShootingError::Config(format!(
                            "warm start has {} states, need {}",
                            st.len(),
                            lay.n + 1
                        )))
                    }
                    None => simulate_starts(&u)?,
                };
                Iterate { u, lam, starts }
            }
        })
    }

    /// `it` (valid for `from`) re-expressed on this context's segmentation.
    fn reseat(&self, from: &Ctx<'_>, it: &Iterate) -> Result<Iterate, IntegratorError> {
        let ev = from.evaluate(it, None)?;
        Ok(Iterate {
            u: it.u.clone(),
            lam: it.lam.clone(),
            starts: self.layout.joints().iter().map(|&k| ev.states[k].clone()).collect(),
        })
    }

    fn solution(
        &self,
        it: &Iterate,
        ev: &Evaluation,
    ) -> Result<(Trajectory<f64>, MultiplierSet<f64>, f64), ShootingError> {
        let traj = Trajectory::from_states(&self.problem.model, ev.states.clone(), self.controls(it))?;
        let lam = self.multipliers(it).eliminated(self.problem, &traj);
        let cert = certificate(self.problem, &traj, &lam)?.inf_norm();
        Ok((traj, lam, cert))
    }
}

fn product(a: &GroupElement<f64>, u: &GroupElement<f64>) -> GroupElement<f64> {
    crate::lie::product_join(a.clone(), u.clone())
}

// ---------------------------------------------------------------------------
// segment patching as an explicit residual map

/// The multiple-shooting residual as a function of a flat unknown vector.
///
/// Layout of the unknowns: controls `u_0 .. u_{N-1}`, then per step
/// `(lam1, lam3, lam4, lam6)`, then for every joint the local coordinates of
/// the segment start relative to the base state the map was built with.
pub struct ShootingMap<'a> {
    ctx: Ctx<'a>,
    base: Iterate,
}

/// Builds the multiple-shooting residual map around the configured initial
/// iterate.
pub fn segment_patching<'a>(
    problem: &'a OcProblem<f64>,
    config: &ShootingConfig,
) -> Result<ShootingMap<'a>, ShootingError> {
    problem.validate()?;
    config.validate(problem.horizon)?;
    let ctx = Ctx {
        problem,
        layout: Layout::new(problem, config.segments),
        step: config.step,
        fd_eps: config.fd_eps,
    };
    let base = ctx.initial_iterate(&config.init)?;
    Ok(ShootingMap { ctx, base })
}

impl ShootingMap<'_> {
    pub fn segments(&self) -> usize {
        self.ctx.layout.segments()
    }

    pub fn unknowns(&self) -> usize {
        let l = &self.ctx.layout;
        l.n * (l.da + l.nl) + l.joints().len() * l.ns
    }

    /// Unknown vector of the base iterate.
    pub fn initial_unknowns(&self) -> Vec<f64> {
        let mut z: Vec<f64> = self.base.u.iter().flatten().copied().collect();
        z.extend(self.base.lam.iter().flatten().copied());
        z.extend(std::iter::repeat_n(
            0.0,
            self.ctx.layout.joints().len() * self.ctx.layout.ns,
        ));
        z
    }

    fn iterate(&self, z: &[f64]) -> Iterate {
        let l = &self.ctx.layout;
        assert_eq!(z.len(), self.unknowns(), "unknown vector length");
        let (nu, nl) = (l.n * l.da, l.n * l.nl);
        Iterate {
            u: z[..nu].chunks(l.da).map(<[f64]>::to_vec).collect(),
            lam: z[nu..nu + nl].chunks(l.nl).map(<[f64]>::to_vec).collect(),
            starts: self
                .base
                .starts
                .iter()
                .zip(z[nu + nl..].chunks(l.ns))
                .map(|(s, d)| s.retract(d))
                .collect(),
        }
    }

    /// Condensed residual: optimality at `k = 0`, then per step the
    /// continuity defect (joints only), `(19a, b, e, f)` and optimality, then
    /// the terminal conditions.
    pub fn residual(&self, z: &[f64]) -> Result<Vec<f64>, ShootingError> {
        let ev = self.ctx.evaluate(&self.iterate(z), None)?;
        Ok(self.ctx.condensed(&ev))
    }

    /// Continuity defects at the joints.
    pub fn continuity(&self, z: &[f64]) -> Result<Vec<Vec<f64>>, ShootingError> {
        Ok(self.ctx.evaluate(&self.iterate(z), None)?.defects)
    }

    /// Trajectory and multipliers encoded by `z`.
    pub fn decode(&self, z: &[f64]) -> Result<(Trajectory<f64>, MultiplierSet<f64>), ShootingError> {
        let it = self.iterate(z);
        let ev = self.ctx.evaluate(&it, None)?;
        let traj = Trajectory::from_states(&self.ctx.problem.model, ev.states, self.ctx.controls(&it))?;
        Ok((traj, self.ctx.multipliers(&it)))
    }
}

// ---------------------------------------------------------------------------
// solver

struct StageRun {
    it: Iterate,
    converged: bool,
    iterations: usize,
}

fn run_stage(
    ctx: &Ctx<'_>,
    mut it: Iterate,
    cfg: &ShootingConfig,
    stage: f64,
    stall_guard: bool,
    history: &mut Vec<IterationRecord>,
    diagnostics: &mut Vec<String>,
) -> Result<StageRun, ShootingError> {
    let mut ev = ctx.evaluate(&it, None)?;
    let mut iterations = 0;
    let mut short_steps = 0;
    // the first iterate meeting the tolerance; one more Newton step is taken
    // from it and kept only if it still certifies
    let mut certified: Option<Iterate> = None;
    loop {
        let rinf = norm_inf(&ev.residual);
        if let Some(prev) = certified {
            let (_, _, cert) = ctx.solution(&it, &ev)?;
            return Ok(StageRun {
                it: if cert <= cfg.tol { it } else { prev },
                converged: true,
                iterations,
            });
        }
        if rinf <= cfg.tol {
            let (_, _, cert) = ctx.solution(&it, &ev)?;
            if cert <= cfg.tol {
                certified = Some(it.clone());
            }
        }
        if iterations == cfg.max_newton && certified.is_none() {
            diagnostics.push(format!(
                "stage {stage}: iteration limit {} reached at residual {rinf:e}",
                cfg.max_newton
            ));
            return Ok(StageRun {
                it,
                converged: false,
                iterations,
            });
        }
        iterations += 1;
        let n = ctx.layout.expanded_len();
        let (trip, rhs) = equilibrate(n, ctx.expanded_jacobian(&it, &ev)?, &ev.residual);
        let mut least_squares = false;
        let delta = match BandMatrix::from_triplets(n, &trip).solve(&rhs, 0.0) {
            Some(d) if d.iter().all(|x| x.is_finite()) => d,
            _ => {
                least_squares = true;
                diagnostics.push(format!(
                    "stage {stage}, iteration {iterations}: singular Jacobian, least-squares step"
                ));
                let scale = trip.iter().fold(0.0f64, |m, e| m.max(e.2.abs()));
                let r: Vec<f64> = rhs.iter().map(|x| -x).collect();
                let (m, b) = normal_equations(n, n, &trip, &r, 1e-10 * scale * scale);
                match m.solve(&b, 0.0) {
                    Some(d) => d,
                    None => {
                        history.push(IterationRecord {
                            stage,
                            iteration: iterations,
                            residual: rinf,
                            step: 0.0,
                            least_squares,
                        });
                        return Ok(StageRun {
                            converged: certified.is_some(),
                            it: certified.unwrap_or(it),
                            iterations,
                        });
                    }
                }
            }
        };
        let r0 = norm2(&ev.residual);
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha >= cfg.min_step {
            let trial = ctx.apply(&it, &delta, alpha);
            match ctx.evaluate(&trial, Some(&ev.log_f)) {
                Ok(tev) if norm2(&tev.residual) < r0 => {
                    accepted = Some((trial, tev));
                    break;
                }
                Ok(_) => {}
                Err(e) => diagnostics.push(format!("stage {stage}, iteration {iterations}, step {alpha:e}: {e}")),
            }
            alpha *= cfg.damping;
        }
        history.push(IterationRecord {
            stage,
            iteration: iterations,
            residual: rinf,
            step: if accepted.is_some() { alpha } else { 0.0 },
            least_squares,
        });
        match accepted {
            Some((ni, nev)) => {
                it = ni;
                ev = nev;
                short_steps = if alpha <= STALL_STEP { short_steps + 1 } else { 0 };
                if stall_guard && certified.is_none() && short_steps == STALL_COUNT {
                    diagnostics.push(format!("stage {stage}: stalled after {iterations} iterations"));
                    return Ok(StageRun {
                        it,
                        converged: false,
                        iterations,
                    });
                }
            }
            None => {
                if certified.is_none() {
                    diagnostics.push(format!("stage {stage}: line search exhausted at residual {rinf:e}"));
                }
                return Ok(StageRun {
                    converged: certified.is_some(),
                    it: certified.unwrap_or(it),
                    iterations,
                });
            }
        }
    }
}

/// Scales every row of `J d = -r` to unit infinity norm; returns the scaled
/// triplets and right-hand side `-r`.
fn equilibrate(n: usize, mut trip: Vec<(usize, usize, f64)>, r: &[f64]) -> (Vec<(usize, usize, f64)>, Vec<f64>) {
    let mut scale = vec![0.0f64; n];
    for &(i, _, v) in &trip {
        scale[i] = scale[i].max(v.abs());
    }
    for s in scale.iter_mut() {
        *s = if *s > 0.0 { 1.0 / *s } else { 1.0 };
    }
    for e in trip.iter_mut() {
        e.2 *= scale[e.0];
    }
    let rhs = r.iter().zip(&scale).map(|(x, s)| -x * s).collect();
    (trip, rhs)
}

/// Solves the necessary conditions of `problem` by multiple shooting.
///
/// Non-convergence is not an error: the best iterate is returned with
/// `converged == false`. Errors are reserved for invalid input and for a
/// first iterate that cannot be simulated.
pub fn solve(problem: &OcProblem<f64>, config: &ShootingConfig) -> Result<OcSolution, ShootingError> {
    let start = Instant::now();
    problem.validate()?;
    config.validate(problem.horizon)?;
    let mut history = Vec::new();
    let mut diagnostics = Vec::new();
    let mut iters = 0;

    let direct = |history: &mut Vec<IterationRecord>,
                  diagnostics: &mut Vec<String>|
     -> Result<(StageRun, Ctx<'_>), ShootingError> {
        let ctx = Ctx {
            problem,
            layout: Layout::new(problem, config.segments),
            step: config.step,
            fd_eps: config.fd_eps,
        };
        let it = ctx.initial_iterate(&config.init)?;
        let guard = config.homotopy == Homotopy::Auto;
        let run = run_stage(&ctx, it, config, 1.0, guard, history, diagnostics)?;
        Ok((run, ctx))
    };

    let mut stages_used = Vec::new();
    let use_homotopy = match config.homotopy {
        Homotopy::Off => false,
        Homotopy::On => true,
        Homotopy::Auto => {
            let (run, ctx) = direct(&mut history, &mut diagnostics)?;
            iters += run.iterations;
            if run.converged {
                return finish(&ctx, &run, iters, stages_used, history, diagnostics, start, config.tol);
            }
            diagnostics.push("direct solve failed, switching to continuation".into());
            true
        }
    };
    if !use_homotopy {
        let (run, ctx) = direct(&mut history, &mut diagnostics)?;
        iters += run.iterations;
        return finish(&ctx, &run, iters, stages_used, history, diagnostics, start, config.tol);
    }

    let staged: Vec<OcProblem<f64>> = HOMOTOPY_STAGES
        .iter()
        .map(|&s| homotopy_stage(problem, s))
        .collect::<Result<_, _>>()?;
    let fine = config
        .segments
        .max(problem.horizon.div_ceil(CONTINUATION_SEGMENT_STEPS));
    if fine > config.segments {
        diagnostics.push(format!("continuing on {fine} segments"));
    }
    let mut warm: Option<Iterate> = None;
    let mut last: Option<(StageRun, usize)> = None;
    for (i, &s) in HOMOTOPY_STAGES.iter().enumerate() {
        let ctx = Ctx {
            problem: &staged[i],
            layout: Layout::new(&staged[i], fine),
            step: config.step,
            fd_eps: config.fd_eps,
        };
        let it = match warm.take() {
            Some(w) => w,
            None => ctx.initial_iterate(&config.init)?,
        };
        let run = run_stage(&ctx, it, config, s, false, &mut history, &mut diagnostics)?;
        iters += run.iterations;
        stages_used.push(s);
        let ok = run.converged;
        warm = Some(run.it.clone());
        last = Some((run, i));
        if !ok {
            diagnostics.push(format!("homotopy stopped at stage {s}"));
            break;
        }
    }
    // an unfinished continuation is reported against the original problem
    let (mut run, i) = last.expect("at least one stage");
    let complete = i + 1 == HOMOTOPY_STAGES.len();
    let ctx = Ctx {
        problem,
        layout: Layout::new(problem, config.segments),
        step: config.step,
        fd_eps: config.fd_eps,
    };
    if fine > config.segments {
        let fine_ctx = Ctx {
            problem,
            layout: Layout::new(problem, fine),
            step: config.step,
            fd_eps: config.fd_eps,
        };
        let it = ctx.reseat(&fine_ctx, &run.it)?;
        if complete && run.converged {
            run = run_stage(&ctx, it, config, 1.0, false, &mut history, &mut diagnostics)?;
            iters += run.iterations;
        } else {
            run.it = it;
        }
    }
    if !complete {
        run.converged = false;
    }
    finish(&ctx, &run, iters, stages_used, history, diagnostics, start, config.tol)
}

fn finish(
    ctx: &Ctx<'_>,
    run: &StageRun,
    iters: usize,
    stages: Vec<f64>,
    history: Vec<IterationRecord>,
    mut diagnostics: Vec<String>,
    start: Instant,
    tol: f64,
) -> Result<OcSolution, ShootingError> {
    let ev = ctx.evaluate(&run.it, None)?;
    let (trajectory, multipliers, cert) = ctx.solution(&run.it, &ev)?;
    let converged = run.converged && cert <= tol;
    if run.converged && !converged {
        diagnostics.push(format!("certificate {cert:e} above tolerance"));
    }
    Ok(OcSolution {
        cost: total_cost(ctx.problem, &trajectory),
        trajectory,
        multipliers,
        residual_norm: cert,
        newton_iters: iters,
        converged,
        homotopy_stages: stages,
        segments: ctx.layout.segments(),
        history,
        diagnostics,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
