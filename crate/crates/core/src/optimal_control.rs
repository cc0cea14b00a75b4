//! Necessary conditions for the discrete optimal control problem: adjoint
//! equations, multiplier recursions, optimality and boundary conditions, and
//! the stacked residual used as a convergence certificate.
//!
//! Multipliers `lam1, lam3` live in `g_a`, `lam4, lam6` in `g_u`, `lam2` in
//! `g_a*` and `lam5` in `g_u*`. The `lam2`/`lam5` sequences are the
//! reweighted multipliers: the raw multiplier of the log constraint pulled
//! through the transpose of `dexpinv` at `log f_k`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::integrator::{simulate, IntegratorError, ProductState, Trajectory};
use crate::lie::{coad, dexp_transpose, AlgebraVector, CoAlgebraVector, GroupElement, LieError};
use crate::mechanics::{ModelSpec, Slot};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OcError {
    #[error("invalid problem: {0}")]
    Problem(String),
    #[error("index {k} outside {range}")]
    Index { k: usize, range: String },
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Lie(#[from] LieError),
}

/// Left-trivialized derivatives of a stage cost. `u` is the derivative with
/// respect to the control covector and therefore an algebra vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CostDerivs<T> {
    pub ag: CoAlgebraVector<T>,
    pub af: CoAlgebraVector<T>,
    pub ug: CoAlgebraVector<T>,
    pub uf: CoAlgebraVector<T>,
    pub u: AlgebraVector<T>,
}

impl<T: Real> CostDerivs<T> {
    pub fn get(&self, slot: Slot) -> &CoAlgebraVector<T> {
        match slot {
            Slot::Ag => &self.ag,
            Slot::Af => &self.af,
            Slot::Ug => &self.ug,
            Slot::Uf => &self.uf,
        }
    }
}

/// Stage cost `phi_d(g_k, f_k, u_k)`.
pub trait StageCost<T: Real>: Send + Sync {
    fn value(&self, g: &GroupElement<T>, f: &GroupElement<T>, u: &CoAlgebraVector<T>) -> T;
    fn derivs(&self, g: &GroupElement<T>, f: &GroupElement<T>, u: &CoAlgebraVector<T>) -> CostDerivs<T>;
    fn name(&self) -> String;
}

/// `phi_d = (weight / 2) |u|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticControlCost<T> {
    pub weight: T,
}

impl<T: Real> Default for QuadraticControlCost<T> {
    fn default() -> Self {
        Self { weight: T::one() }
    }
}

impl<T: Real> StageCost<T> for QuadraticControlCost<T> {
    fn value(&self, _g: &GroupElement<T>, _f: &GroupElement<T>, u: &CoAlgebraVector<T>) -> T {
        self.weight * T::lit(0.5) * u.coords().iter().map(|&x| x * x).sum::<T>()
    }

    fn derivs(&self, g: &GroupElement<T>, _f: &GroupElement<T>, u: &CoAlgebraVector<T>) -> CostDerivs<T> {
        let ga = g.factor(0).expect("product").descriptor();
        let gu = g.factor(1).expect("product").descriptor();
        let du: Vec<T> = u.coords().iter().map(|&x| self.weight * x).collect();
        CostDerivs {
            ag: CoAlgebraVector::zeros(&ga),
            af: CoAlgebraVector::zeros(&ga),
            ug: CoAlgebraVector::zeros(&gu),
            uf: CoAlgebraVector::zeros(&gu),
            u: AlgebraVector::new(ga, &du).expect("control on the actuated factor"),
        }
    }

    fn name(&self) -> String {
        format!("quadratic(weight={})", self.weight)
    }
}

/// Builds the model used at a continuation parameter in `[0, 1]`.
pub type Continuation<T> = Arc<dyn Fn(T) -> ModelSpec<T> + Send + Sync>;

/// Fixed-horizon transfer from `initial` to `terminal`.
#[derive(Clone)]
pub struct OcProblem<T: Real> {
    pub name: String,
    pub model: ModelSpec<T>,
    /// horizon `N`
    pub horizon: usize,
    pub initial: ProductState<T>,
    pub terminal: ProductState<T>,
    pub cost: Arc<dyn StageCost<T>>,
    /// the sample `u_N`, which enters only through `u+_{N-1}` and is held fixed
    pub terminal_control: CoAlgebraVector<T>,
    /// optional family of models for homotopy, reaching `model` at 1
    pub continuation: Option<Continuation<T>>,
}

impl<T: Real> fmt::Debug for OcProblem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OcProblem")
            .field("name", &self.name)
            .field("model", &self.model)
            .field("horizon", &self.horizon)
            .field("initial", &self.initial)
            .field("terminal", &self.terminal)
            .field("cost", &self.cost.name())
            .field("terminal_control", &self.terminal_control)
            .field("continuation", &self.continuation.is_some())
            .finish()
    }
}

impl<T: Real> OcProblem<T> {
    /// Quadratic control cost, `u_N = 0`, no continuation.
    pub fn new(
        name: impl Into<String>,
        model: ModelSpec<T>,
        horizon: usize,
        initial: ProductState<T>,
        terminal: ProductState<T>,
    ) -> Result<Self, OcError> {
        let terminal_control = CoAlgebraVector::zeros(model.group_a());
        let p = Self {
            name: name.into(),
            model,
            horizon,
            initial,
            terminal,
            cost: Arc::new(QuadraticControlCost::default()),
            terminal_control,
            continuation: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), OcError> {
        if self.horizon < 2 {
            return Err(OcError::Problem(format!("horizon {} < 2", self.horizon)));
        }
        for (label, s) in [("initial", &self.initial), ("terminal", &self.terminal)] {
            let ok = &s.g_a.descriptor() == self.model.group_a()
                && &s.g_u.descriptor() == self.model.group_u()
                && s.mu_a.group() == self.model.group_a()
                && s.mu_u.group() == self.model.group_u();
            if !ok {
                return Err(OcError::Problem(format!(
                    "{label} state is not on {}",
                    self.model.group()
                )));
            }
            if !s.g_a.satisfies_constraint(T::lit(1e-10)) || !s.g_u.satisfies_constraint(T::lit(1e-10)) {
                return Err(OcError::Problem(format!(
                    "{label} configuration violates the group constraint"
                )));
            }
        }
        if self.terminal_control.group() != self.model.group_a() {
            return Err(OcError::Problem("terminal control not on the actuated factor".into()));
        }
        Ok(())
    }

    pub fn dim_a(&self) -> usize {
        self.model.group_a().algebra_dim()
    }

    pub fn dim_u(&self) -> usize {
        self.model.group_u().algebra_dim()
    }

    /// The same problem with another model (used by homotopy).
    pub fn with_model(&self, model: ModelSpec<T>) -> Self {
        Self { model, ..self.clone() }
    }
}

/// `phi_d(g, f, u)`.
pub fn stage_cost<T: Real>(
    problem: &OcProblem<T>,
    g: &GroupElement<T>,
    f: &GroupElement<T>,
    u: &CoAlgebraVector<T>,
) -> T {
    problem.cost.value(g, f, u)
}

/// `sum_{k<N} phi_d(g_k, f_k, u_k)`.
pub fn total_cost<T: Real>(problem: &OcProblem<T>, traj: &Trajectory<T>) -> T {
    (0..traj.horizon())
        .map(|k| {
            problem
                .cost
                .value(&traj.states[k].g(), &traj.increments[k], &traj.controls[k])
        })
        .sum()
}

/// The six multiplier sequences, each of length `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierSet<T> {
    pub lam1: Vec<AlgebraVector<T>>,
    pub lam2: Vec<CoAlgebraVector<T>>,
    pub lam3: Vec<AlgebraVector<T>>,
    pub lam4: Vec<AlgebraVector<T>>,
    pub lam5: Vec<CoAlgebraVector<T>>,
    pub lam6: Vec<AlgebraVector<T>>,
}

impl<T: Real> MultiplierSet<T> {
    pub fn zeros(problem: &OcProblem<T>) -> Self {
        let (ga, gu) = (problem.model.group_a(), problem.model.group_u());
        let n = problem.horizon;
        Self {
            lam1: vec![AlgebraVector::zeros(ga); n],
            lam2: vec![CoAlgebraVector::zeros(ga); n],
            lam3: vec![AlgebraVector::zeros(ga); n],
            lam4: vec![AlgebraVector::zeros(gu); n],
            lam5: vec![CoAlgebraVector::zeros(gu); n],
            lam6: vec![AlgebraVector::zeros(gu); n],
        }
    }

    pub fn len(&self) -> usize {
        self.lam1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lam1.is_empty()
    }

    /// Checks lengths and factor groups.
    pub fn validate(&self, problem: &OcProblem<T>) -> Result<(), OcError> {
        let n = problem.horizon;
        let (ga, gu) = (problem.model.group_a(), problem.model.group_u());
        let lens = [
            self.lam1.len(),
            self.lam2.len(),
            self.lam3.len(),
            self.lam4.len(),
            self.lam5.len(),
            self.lam6.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(OcError::Problem(format!("multiplier lengths {lens:?}, expected {n}")));
        }
        let ok = self.lam1.iter().chain(&self.lam3).all(|v| v.group() == ga)
            && self.lam4.iter().chain(&self.lam6).all(|v| v.group() == gu)
            && self.lam2.iter().all(|v| v.group() == ga)
            && self.lam5.iter().all(|v| v.group() == gu);
        if !ok {
            return Err(OcError::Problem("multiplier on the wrong factor".into()));
        }
        Ok(())
    }

    /// Multiplies every sequence by `s`.
    pub fn scale(&self, s: T) -> Self {
        Self {
            lam1: self.lam1.iter().map(|v| v.scale(s)).collect(),
            lam2: self.lam2.iter().map(|v| v.scale(s)).collect(),
            lam3: self.lam3.iter().map(|v| v.scale(s)).collect(),
            lam4: self.lam4.iter().map(|v| v.scale(s)).collect(),
            lam5: self.lam5.iter().map(|v| v.scale(s)).collect(),
            lam6: self.lam6.iter().map(|v| v.scale(s)).collect(),
        }
    }

    /// Replaces `lam2`, `lam5` by their closed forms from the `f`-adjoint
    /// equations.
    pub fn eliminated(&self, problem: &OcProblem<T>, traj: &Trajectory<T>) -> Self {
        let mut out = self.clone();
        for k in 0..traj.horizon() {
            let t = stage_at(problem, traj, self, k);
            out.lam2[k] = t.lam2;
            out.lam5[k] = t.lam5;
        }
        out
    }

    /// The raw multipliers of the log constraints, `S(X)^T lam2` with
    /// `X = log f`, where `S` inverts `dexpinv`.
    pub fn raw_log_multipliers(
        &self,
        traj: &Trajectory<T>,
    ) -> Result<(Vec<CoAlgebraVector<T>>, Vec<CoAlgebraVector<T>>), LieError> {
        let mut l2 = Vec::with_capacity(self.len());
        let mut l5 = Vec::with_capacity(self.len());
        for k in 0..self.len() {
            let f = &traj.increments[k];
            l2.push(dexp_transpose(&f.factor(0).expect("product").log()?, &self.lam2[k])?);
            l5.push(dexp_transpose(&f.factor(1).expect("product").log()?, &self.lam5[k])?);
        }
        Ok((l2, l5))
    }
}

/// Everything the necessary conditions need from one stage `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTerms<T> {
    /// `P(x) = T*D_x phi + M^x_ag(lam1 - Ad_fa lam3) - M^x_af(Ad_fa^-1 lam1)
    ///        + M^x_ug(lam4 - Ad_fu lam6) - M^x_uf(Ad_fu^-1 lam4)`
    pub p_ag: CoAlgebraVector<T>,
    pub p_af: CoAlgebraVector<T>,
    pub p_ug: CoAlgebraVector<T>,
    pub p_uf: CoAlgebraVector<T>,
    /// `lam2_k`, `lam5_k` solved from the `f`-adjoint equations
    pub lam2: CoAlgebraVector<T>,
    pub lam5: CoAlgebraVector<T>,
    /// `Ad_{f_a} lam3_k`, `Ad_{f_u} lam6_k`
    pub ad_lam3: AlgebraVector<T>,
    pub ad_lam6: AlgebraVector<T>,
    /// `D_u phi_d`
    pub du_phi: AlgebraVector<T>,
    pub f_a: GroupElement<T>,
    pub f_u: GroupElement<T>,
}

/// Stage terms at `(g, f, mu, u_k)` for the multipliers `lam1, lam3, lam4, lam6`.
#[allow(clippy::too_many_arguments)]
pub fn stage_terms<T: Real>(
    problem: &OcProblem<T>,
    g: &GroupElement<T>,
    f: &GroupElement<T>,
    mu_a: &CoAlgebraVector<T>,
    mu_u: &CoAlgebraVector<T>,
    u_k: &CoAlgebraVector<T>,
    lam1: &AlgebraVector<T>,
    lam3: &AlgebraVector<T>,
    lam4: &AlgebraVector<T>,
    lam6: &AlgebraVector<T>,
) -> StageTerms<T> {
    let model = &problem.model;
    let m = model.first_derivs(g, f);
    let ops = model.second_ops(g, f);
    let phi = problem.cost.derivs(g, f, u_k);
    let f_a = f.factor(0).expect("product").clone();
    let f_u = f.factor(1).expect("product").clone();
    let f_a_inv = f_a.inverse();
    let f_u_inv = f_u.inverse();

    let ad_lam3 = f_a.adjoint(lam3).expect("lam3 on g_a");
    let ad_lam6 = f_u.adjoint(lam6).expect("lam6 on g_u");
    let a1 = lam1 - &ad_lam3;
    let b1 = f_a_inv.adjoint(lam1).expect("lam1 on g_a");
    let a4 = lam4 - &ad_lam6;
    let b4 = f_u_inv.adjoint(lam4).expect("lam4 on g_u");

    let p = |x: Slot| {
        let mut v = phi.get(x).clone();
        v += &ops.apply(x, Slot::Ag, &a1);
        v = &v - &ops.apply(x, Slot::Af, &b1);
        v += &ops.apply(x, Slot::Ug, &a4);
        &v - &ops.apply(x, Slot::Uf, &b4)
    };
    let p_ag = p(Slot::Ag);
    let p_af = p(Slot::Af);
    let p_ug = p(Slot::Ug);
    let p_uf = p(Slot::Uf);

    let half_h = model.step_h() * T::lit(0.5);
    let inner_a = &(mu_a + &m.ag) + &u_k.scale(half_h);
    let inner_u = mu_u + &m.ug;
    let lam2 = &(&p_af - &coad(&b1, &m.af).expect("g_a"))
        + &f_a.coadjoint(&coad(&ad_lam3, &inner_a).expect("g_a")).expect("g_a");
    let lam5 = &(&p_uf - &coad(&b4, &m.uf).expect("g_u"))
        + &f_u.coadjoint(&coad(&ad_lam6, &inner_u).expect("g_u")).expect("g_u");

    StageTerms {
        p_ag,
        p_af,
        p_ug,
        p_uf,
        lam2,
        lam5,
        ad_lam3,
        ad_lam6,
        du_phi: phi.u,
        f_a,
        f_u,
    }
}

fn stage_at<T: Real>(problem: &OcProblem<T>, traj: &Trajectory<T>, lam: &MultiplierSet<T>, k: usize) -> StageTerms<T> {
    let s = &traj.states[k];
    stage_terms(
        problem,
        &s.g(),
        &traj.increments[k],
        &s.mu_a,
        &s.mu_u,
        &traj.controls[k],
        &lam.lam1[k],
        &lam.lam3[k],
        &lam.lam4[k],
        &lam.lam6[k],
    )
}

/// Residuals of the four adjoint equations.
///
/// `ag`, `ug` cover `k = 1..N-1` (index 0 of the returned vectors is `k = 1`);
/// `af`, `uf` cover `k = 0..N-1` and compare the supplied `lam2`, `lam5`
/// against their closed forms.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointResiduals<T> {
    pub ag: Vec<CoAlgebraVector<T>>,
    pub ug: Vec<CoAlgebraVector<T>>,
    pub af: Vec<CoAlgebraVector<T>>,
    pub uf: Vec<CoAlgebraVector<T>>,
}

pub fn adjoint_residuals<T: Real>(
    problem: &OcProblem<T>,
    traj: &Trajectory<T>,
    lam: &MultiplierSet<T>,
) -> AdjointResiduals<T> {
    let n = traj.horizon();
    let stages: Vec<StageTerms<T>> = (0..n).map(|k| stage_at(problem, traj, lam, k)).collect();
    adjoint_from_stages(&stages, lam)
}

fn adjoint_from_stages<T: Real>(stages: &[StageTerms<T>], lam: &MultiplierSet<T>) -> AdjointResiduals<T> {
    let n = stages.len();
    let mut out = AdjointResiduals {
        ag: Vec::with_capacity(n.saturating_sub(1)),
        ug: Vec::with_capacity(n.saturating_sub(1)),
        af: Vec::with_capacity(n),
        uf: Vec::with_capacity(n),
    };
    for (k, t) in stages.iter().enumerate() {
        out.af.push(&t.lam2 - &lam.lam2[k]);
        out.uf.push(&t.lam5 - &lam.lam5[k]);
        if k == 0 {
            continue;
        }
        let ra = &(&t.p_ag + &lam.lam2[k - 1]) - &t.f_a.inverse().coadjoint(&lam.lam2[k]).expect("g_a");
        let ru = &(&t.p_ug + &lam.lam5[k - 1]) - &t.f_u.inverse().coadjoint(&lam.lam5[k]).expect("g_u");
        out.ag.push(ra);
        out.ug.push(ru);
    }
    out
}

/// Residual of the `g_a` adjoint equation at an interior index `k` in `1..N-1`.
pub fn adjoint_residual_at<T: Real>(
    problem: &OcProblem<T>,
    traj: &Trajectory<T>,
    lam: &MultiplierSet<T>,
    k: usize,
) -> Result<(CoAlgebraVector<T>, CoAlgebraVector<T>), OcError> {
    if k == 0 || k >= traj.horizon() {
        return Err(OcError::Index {
            k,
            range: format!("1..{}", traj.horizon()),
        });
    }
    let t = stage_at(problem, traj, lam, k);
    let ra = &(&t.p_ag + &lam.lam2[k - 1]) - &t.f_a.inverse().coadjoint(&lam.lam2[k])?;
    let ru = &(&t.p_ug + &lam.lam5[k - 1]) - &t.f_u.inverse().coadjoint(&lam.lam5[k])?;
    Ok((ra, ru))
}

/// Residuals of the recursions `lam1_k - Ad_{f_a} lam3_k + lam3_{k-1}` and the
/// unactuated analogue, `k = 1..N-1`.
pub fn lam_recursions<T: Real>(
    traj: &Trajectory<T>,
    lam: &MultiplierSet<T>,
) -> (Vec<AlgebraVector<T>>, Vec<AlgebraVector<T>>) {
    let n = traj.horizon();
    let mut ra = Vec::with_capacity(n.saturating_sub(1));
    let mut ru = Vec::with_capacity(n.saturating_sub(1));
    for k in 1..n {
        let f = &traj.increments[k];
        let fa = f.factor(0).expect("product");
        let fu = f.factor(1).expect("product");
        ra.push(&(&lam.lam1[k] - &fa.adjoint(&lam.lam3[k]).expect("g_a")) + &lam.lam3[k - 1]);
        ru.push(&(&lam.lam4[k] - &fu.adjoint(&lam.lam6[k]).expect("g_u")) + &lam.lam6[k - 1]);
    }
    (ra, ru)
}

/// Optimality residuals `D_u phi + (h/2) lam1_k - (h/2)(lam3_{k-1} + Ad_{f_a} lam3_k)`,
/// `k = 0..N-1` (without `lam3_{-1}` at `k = 0`).
pub fn optimality_residuals<T: Real>(
    problem: &OcProblem<T>,
    traj: &Trajectory<T>,
    lam: &MultiplierSet<T>,
) -> Vec<AlgebraVector<T>> {
    let half_h = problem.model.step_h() * T::lit(0.5);
    (0..traj.horizon())
        .map(|k| {
            let s = &traj.states[k];
            let f = &traj.increments[k];
            let du = problem.cost.derivs(&s.g(), f, &traj.controls[k]).u;
            let fa = f.factor(0).expect("product");
            optimality_term(
                &du,
                &lam.lam1[k],
                &fa.adjoint(&lam.lam3[k]).expect("g_a"),
                (k > 0).then(|| &lam.lam3[k - 1]),
                half_h,
            )
        })
        .collect()
}

fn optimality_term<T: Real>(
    du: &AlgebraVector<T>,
    lam1: &AlgebraVector<T>,
    ad_lam3: &AlgebraVector<T>,
    lam3_prev: Option<&AlgebraVector<T>>,
    half_h: T,
) -> AlgebraVector<T> {
    let mut back = ad_lam3.clone();
    if let Some(p) = lam3_prev {
        back += p;
    }
    &(du + &lam1.scale(half_h)) - &back.scale(half_h)
}

/// Terminal mismatch: `log(g_N^-1 g^f)` per factor and `mu_N - mu^f`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryResidual<T> {
    pub config_a: AlgebraVector<T>,
    pub config_u: AlgebraVector<T>,
    pub momentum_a: CoAlgebraVector<T>,
    pub momentum_u: CoAlgebraVector<T>,
}

impl<T: Real> BoundaryResidual<T> {
    pub fn inf_norm(&self) -> T {
        self.config_a
            .norm_inf()
            .max(self.config_u.norm_inf())
            .max(self.momentum_a.norm_inf())
            .max(self.momentum_u.norm_inf())
    }
}

pub fn boundary_residuals<T: Real>(
    problem: &OcProblem<T>,
    traj: &Trajectory<T>,
) -> Result<BoundaryResidual<T>, OcError> {
    let end = traj
        .states
        .last()
        .ok_or_else(|| OcError::Problem("empty trajectory".into()))?;
    let target = &problem.terminal;
    Ok(BoundaryResidual {
        config_a: end.g_a.local_log(&target.g_a)?,
        config_u: end.g_u.local_log(&target.g_u)?,
        momentum_a: end.mu_a.checked_sub(&target.mu_a)?,
        momentum_u: end.mu_u.checked_sub(&target.mu_u)?,
    })
}

/// All necessary-condition residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct KktResidual<T> {
    /// `g_a` adjoint, `k = 1..N-1`
    pub adjoint_a: Vec<CoAlgebraVector<T>>,
    /// `g_u` adjoint, `k = 1..N-1`
    pub adjoint_u: Vec<CoAlgebraVector<T>>,
    /// `f_a` adjoint, `k = 0..N-1`; identically zero once `lam2` is eliminated
    pub adjoint_fa: Vec<CoAlgebraVector<T>>,
    /// `f_u` adjoint, `k = 0..N-1`
    pub adjoint_fu: Vec<CoAlgebraVector<T>>,
    /// `lam3` recursion, `k = 1..N-1`
    pub adjoint_lam3: Vec<AlgebraVector<T>>,
    /// `lam6` recursion, `k = 1..N-1`
    pub adjoint_lam6: Vec<AlgebraVector<T>>,
    /// stationarity in the control, `k = 0..N-1`
    pub optimality: Vec<AlgebraVector<T>>,
    pub boundary: BoundaryResidual<T>,
    /// state-equation residual per step
    pub state: Vec<T>,
}

impl<T: Real> KktResidual<T> {
    /// All components in the order of the fields.
    pub fn stacked(&self) -> Vec<T> {
        let mut v = Vec::new();
        for c in self
            .adjoint_a
            .iter()
            .chain(&self.adjoint_u)
            .chain(&self.adjoint_fa)
            .chain(&self.adjoint_fu)
        {
            v.extend_from_slice(c.coords());
        }
        for c in self
            .adjoint_lam3
            .iter()
            .chain(&self.adjoint_lam6)
            .chain(&self.optimality)
        {
            v.extend_from_slice(c.coords());
        }
        v.extend_from_slice(self.boundary.config_a.coords());
        v.extend_from_slice(self.boundary.config_u.coords());
        v.extend_from_slice(self.boundary.momentum_a.coords());
        v.extend_from_slice(self.boundary.momentum_u.coords());
        v.extend_from_slice(&self.state);
        v
    }

    pub fn inf_norm(&self) -> T {
        self.stacked().iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    /// Per-family infinity norms, for reports.
    pub fn family_norms(&self) -> Vec<(&'static str, T)> {
        fn n<T: Real>(it: impl Iterator<Item = T>) -> T {
            it.fold(T::zero(), |m, x| m.max(x))
        }
        vec![
            ("adjoint_a", n(self.adjoint_a.iter().map(|c| c.norm_inf()))),
            ("adjoint_u", n(self.adjoint_u.iter().map(|c| c.norm_inf()))),
            ("adjoint_fa", n(self.adjoint_fa.iter().map(|c| c.norm_inf()))),
            ("adjoint_fu", n(self.adjoint_fu.iter().map(|c| c.norm_inf()))),
            ("adjoint_lam3", n(self.adjoint_lam3.iter().map(|c| c.norm_inf()))),
            ("adjoint_lam6", n(self.adjoint_lam6.iter().map(|c| c.norm_inf()))),
            ("optimality", n(self.optimality.iter().map(|c| c.norm_inf()))),
            ("boundary", self.boundary.inf_norm()),
            ("state", n(self.state.iter().copied())),
        ]
    }

    /// Index `k` and value of the largest optimality residual.
    pub fn worst_optimality(&self) -> Option<(usize, T)> {
        self.optimality
            .iter()
            .map(|c| c.norm_inf())
            .enumerate()
            .fold(None, |best, (k, v)| match best {
                Some((_, b)) if b >= v => best,
                _ => Some((k, v)),
            })
    }
}

/// Evaluates every residual family on a given trajectory with the supplied
/// multipliers (including `lam2`, `lam5` as given).
pub fn kkt_residual<T: Real>(
    problem: &OcProblem<T>,
    traj: &Trajectory<T>,
    lam: &MultiplierSet<T>,
) -> Result<KktResidual<T>, OcError> {
    lam.validate(problem)?;
    if traj.horizon() != problem.horizon {
        return Err(OcError::Problem(format!(
            "trajectory horizon {} differs from problem horizon {}",
            traj.horizon(),
            problem.horizon
        )));
    }
    let stages: Vec<StageTerms<T>> = (0..traj.horizon()).map(|k| stage_at(problem, traj, lam, k)).collect();
    let adj = adjoint_from_stages(&stages, lam);
    let (lam3, lam6) = lam_recursions(traj, lam);
    let half_h = problem.model.step_h() * T::lit(0.5);
    let optimality = stages
        .iter()
        .enumerate()
        .map(|(k, t)| {
            optimality_term(
                &t.du_phi,
                &lam.lam1[k],
                &t.ad_lam3,
                (k > 0).then(|| &lam.lam3[k - 1]),
                half_h,
            )
        })
        .collect();
    Ok(KktResidual {
        adjoint_a: adj.ag,
        adjoint_u: adj.ug,
        adjoint_fa: adj.af,
        adjoint_fu: adj.uf,
        adjoint_lam3: lam3,
        adjoint_lam6: lam6,
        optimality,
        boundary: boundary_residuals(problem, traj)?,
        state: traj.step_residuals.clone(),
    })
}

/// The certificate: `lam2`, `lam5` eliminated, then [`kkt_residual`].
pub fn certificate<T: Real>(
    problem: &OcProblem<T>,
    traj: &Trajectory<T>,
    lam: &MultiplierSet<T>,
) -> Result<KktResidual<T>, OcError> {
    lam.validate(problem)?;
    let lam = lam.eliminated(problem, traj);
    kkt_residual(problem, traj, &lam)
}

/// Simulates from the initial state under `controls` (`N + 1` samples) and
/// evaluates [`kkt_residual`].
pub fn assemble_kkt<T: Real>(
    problem: &OcProblem<T>,
    controls: &[CoAlgebraVector<T>],
    lam: &MultiplierSet<T>,
) -> Result<(Trajectory<T>, KktResidual<T>), OcError> {
    if controls.len() != problem.horizon + 1 {
        return Err(OcError::Problem(format!(
            "expected {} control samples, got {}",
            problem.horizon + 1,
            controls.len()
        )));
    }
    let traj = simulate(&problem.model, &problem.initial, controls, problem.horizon)?;
    let r = kkt_residual(problem, &traj, lam)?;
    Ok((traj, r))
}

/// Augmented cost `sum_k (J_d0 + ... + J_d6)` at independent
/// `(g_k, mu_k, f_k, u_k)` taken from `traj`, with raw log multipliers
/// `lam2_raw`, `lam5_raw` (see [`MultiplierSet::raw_log_multipliers`]).
pub fn augmented_cost<T: Real>(
    problem: &OcProblem<T>,
    traj: &Trajectory<T>,
    lam: &MultiplierSet<T>,
    lam2_raw: &[CoAlgebraVector<T>],
    lam5_raw: &[CoAlgebraVector<T>],
) -> Result<T, OcError> {
    let model = &problem.model;
    let half_h = model.step_h() * T::lit(0.5);
    let mut total = T::zero();
    let dot = |a: &CoAlgebraVector<T>, x: &AlgebraVector<T>| crate::lie::pair(a, x);
    for k in 0..traj.horizon() {
        let s = &traj.states[k];
        let s1 = &traj.states[k + 1];
        let g = s.g();
        let f = &traj.increments[k];
        let (fa, fu) = (f.factor(0).expect("product"), f.factor(1).expect("product"));
        let m = model.first_derivs(&g, f);
        let u_minus = traj.controls[k].scale(half_h);
        let u_plus = traj.controls[k + 1].scale(half_h);

        let j0 = problem.cost.value(&g, f, &traj.controls[k]);
        let e1 = &(&(&m.ag - &fa.inverse().coadjoint(&m.af)?) + &u_minus) + &s.mu_a;
        let j1 = dot(&e1, &lam.lam1[k])?;
        let log_a = &s.g_a.local_log(&s1.g_a)? - &fa.log()?;
        let j2 = crate::lie::pair(&lam2_raw[k], &log_a)?;
        let e3 = &(&(-fa.coadjoint(&(&(&s.mu_a + &m.ag) + &u_minus))?) - &u_plus) + &s1.mu_a;
        let j3 = dot(&e3, &lam.lam3[k])?;
        let e4 = &(&m.ug - &fu.inverse().coadjoint(&m.uf)?) + &s.mu_u;
        let j4 = dot(&e4, &lam.lam4[k])?;
        let log_u = &s.g_u.local_log(&s1.g_u)? - &fu.log()?;
        let j5 = crate::lie::pair(&lam5_raw[k], &log_u)?;
        let e6 = &s1.mu_u - &fu.coadjoint(&(&s.mu_u + &m.ug))?;
        let j6 = dot(&e6, &lam.lam6[k])?;
        total = total + j0 + j1 + j2 + j3 + j4 + j5 + j6;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{product_join, GroupDescriptor};

    fn r1() -> GroupDescriptor {
        GroupDescriptor::RealLine(1)
    }

    fn spring() -> ModelSpec<f64> {
        ModelSpec::from_fn(
            "spring",
            r1(),
            r1(),
            0.1,
            |g: &GroupElement<f64>, f: &GroupElement<f64>| {
                let (x, y) = (
                    g.factor(0).unwrap().scalar().unwrap(),
                    g.factor(1).unwrap().scalar().unwrap(),
                );
                let (dx, dy) = (
                    f.factor(0).unwrap().scalar().unwrap(),
                    f.factor(1).unwrap().scalar().unwrap(),
                );
                (dx * dx + dy * dy) / 0.2 - 0.1 * 0.5 * (x - y).powi(2)
            },
        )
    }

    fn rest(x: f64, y: f64) -> ProductState<f64> {
        ProductState::at_rest(GroupElement::real_line(&[x]), GroupElement::real_line(&[y]))
    }

    #[test]
    fn equilibrium_problem_has_zero_residual() {
        let p = OcProblem::new("eq", spring(), 5, rest(0.0, 0.0), rest(0.0, 0.0)).unwrap();
        let u = vec![CoAlgebraVector::zeros(&r1()); 6];
        let (traj, r) = assemble_kkt(&p, &u, &MultiplierSet::zeros(&p)).unwrap();
        assert!(r.inf_norm() < 1e-10);
        assert_eq!(total_cost(&p, &traj), 0.0);
    }

    #[test]
    fn constant_unit_control_costs_half_n() {
        let p = OcProblem::new("c", spring(), 1000, rest(0.0, 0.0), rest(0.0, 0.0)).unwrap();
        let g = product_join(GroupElement::real_line(&[0.0]), GroupElement::real_line(&[0.0]));
        let u = CoAlgebraVector::scalar(&r1(), 1.0);
        let total: f64 = (0..1000).map(|_| stage_cost(&p, &g, &g, &u)).sum();
        assert_eq!(total, 500.0);
    }

    #[test]
    fn short_horizon_is_rejected() {
        assert!(OcProblem::new("short", spring(), 1, rest(0.0, 0.0), rest(0.0, 0.0)).is_err());
    }

    #[test]
    fn index_range_is_checked() {
        let p = OcProblem::new("eq", spring(), 3, rest(0.0, 0.0), rest(0.0, 0.0)).unwrap();
        let u = vec![CoAlgebraVector::zeros(&r1()); 4];
        let (traj, _) = assemble_kkt(&p, &u, &MultiplierSet::zeros(&p)).unwrap();
        let lam = MultiplierSet::zeros(&p);
        assert!(matches!(
            adjoint_residual_at(&p, &traj, &lam, 0),
            Err(OcError::Index { .. })
        ));
        assert!(adjoint_residual_at(&p, &traj, &lam, 2).is_ok());
        assert!(adjoint_residual_at(&p, &traj, &lam, 3).is_err());
    }
}
