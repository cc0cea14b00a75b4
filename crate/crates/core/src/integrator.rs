//! Forced discrete Euler-Lagrange and Hamilton equations on `G_a x G_u`.

use thiserror::Error;

use crate::lie::{product_join, AlgebraVector, CoAlgebraVector, GroupElement, LieError};
use crate::linalg::Mat;
use crate::mechanics::{ModelSpec, Slot};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegratorError {
    #[error("step {k}: implicit momentum equations did not converge (residual {residual:e})")]
    StepFailure { k: usize, residual: f64 },
    #[error("step {k}: step too large ({detail})")]
    StepTooLarge { k: usize, detail: String },
    #[error("need at least {needed} control samples, got {got}")]
    Controls { needed: usize, got: usize },
    #[error(transparent)]
    Lie(#[from] LieError),
}

impl IntegratorError {
    fn at(self, k: usize) -> Self {
        match self {
            IntegratorError::StepFailure { residual, .. } => IntegratorError::StepFailure { k, residual },
            IntegratorError::StepTooLarge { detail, .. } => IntegratorError::StepTooLarge { k, detail },
            other => other,
        }
    }
}

/// Configuration and momenta `(g_a, g_u, mu_a, mu_u)` at one time index.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductState<T> {
    pub g_a: GroupElement<T>,
    pub g_u: GroupElement<T>,
    pub mu_a: CoAlgebraVector<T>,
    pub mu_u: CoAlgebraVector<T>,
}

impl<T: Real> ProductState<T> {
    pub fn new(g_a: GroupElement<T>, g_u: GroupElement<T>, mu_a: CoAlgebraVector<T>, mu_u: CoAlgebraVector<T>) -> Self {
        Self { g_a, g_u, mu_a, mu_u }
    }

    /// Rest state at the given configuration.
    pub fn at_rest(g_a: GroupElement<T>, g_u: GroupElement<T>) -> Self {
        let mu_a = CoAlgebraVector::zeros(&g_a.descriptor());
        let mu_u = CoAlgebraVector::zeros(&g_u.descriptor());
        Self { g_a, g_u, mu_a, mu_u }
    }

    /// The product configuration `(g_a, g_u)`.
    pub fn g(&self) -> GroupElement<T> {
        product_join(self.g_a.clone(), self.g_u.clone())
    }

    /// Number of local coordinates: `2 (dim g_a + dim g_u)`.
    pub fn dim(&self) -> usize {
        2 * (self.mu_a.dim() + self.mu_u.dim())
    }

    /// Moves along local coordinates `(xi_a, xi_u, dmu_a, dmu_u)`:
    /// configurations by right translation, momenta additively.
    pub fn retract(&self, delta: &[T]) -> Self {
        let (da, du) = (self.mu_a.dim(), self.mu_u.dim());
        assert_eq!(delta.len(), 2 * (da + du), "local coordinate length");
        let xa = AlgebraVector::new(self.g_a.descriptor(), &delta[..da]).expect("dimension");
        let xu = AlgebraVector::new(self.g_u.descriptor(), &delta[da..da + du]).expect("dimension");
        let mut mu_a = self.mu_a.clone();
        let mut mu_u = self.mu_u.clone();
        for (m, &d) in mu_a.coords_mut().iter_mut().zip(&delta[da + du..2 * da + du]) {
            *m = *m + d;
        }
        for (m, &d) in mu_u.coords_mut().iter_mut().zip(&delta[2 * da + du..]) {
            *m = *m + d;
        }
        Self {
            g_a: self.g_a.perturb(&xa).expect("same group"),
            g_u: self.g_u.perturb(&xu).expect("same group"),
            mu_a,
            mu_u,
        }
    }

    /// Inverse of [`Self::retract`]: local coordinates of `other` seen from `self`.
    pub fn local_diff(&self, other: &Self) -> Result<Vec<T>, LieError> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend_from_slice(self.g_a.local_log(&other.g_a)?.coords());
        out.extend_from_slice(self.g_u.local_log(&other.g_u)?.coords());
        out.extend_from_slice(other.mu_a.checked_sub(&self.mu_a)?.coords());
        out.extend_from_slice(other.mu_u.checked_sub(&self.mu_u)?.coords());
        Ok(out)
    }
}

/// Tolerances for the implicit per-step solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions<T> {
    /// target for the momentum-matching residual (infinity norm)
    pub tol: T,
    /// a root is still accepted if Newton stagnates below this level
    pub stagnation_tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for StepOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-12).max(T::epsilon() * T::lit(64.0)),
            stagnation_tol: T::lit(1e-10).max(T::epsilon() * T::lit(4096.0)),
            max_iter: 50,
        }
    }
}

/// Result of one discrete Hamilton step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult<T> {
    pub f_a: GroupElement<T>,
    pub f_u: GroupElement<T>,
    pub next: ProductState<T>,
    /// algebra coordinates `(log f_a, log f_u)`, reusable as the next guess
    pub log_f: Vec<T>,
    pub residual: T,
    pub iterations: usize,
}

fn exp_factor<T: Real>(group: &crate::lie::GroupDescriptor, c: &[T]) -> Result<GroupElement<T>, LieError> {
    Ok(GroupElement::exp(&AlgebraVector::new(group.clone(), c)?))
}

/// `-M_g + Ad*_{f^-1} M_f` on one factor.
fn minus_momentum<T: Real>(
    model: &ModelSpec<T>,
    g: &GroupElement<T>,
    f: &GroupElement<T>,
    factor: usize,
) -> CoAlgebraVector<T> {
    let (sg, sf) = if factor == 0 {
        (Slot::Ag, Slot::Af)
    } else {
        (Slot::Ug, Slot::Uf)
    };
    let mg = model.first_deriv(sg, g, f);
    let mf = model.first_deriv(sf, g, f);
    let fi = f.factor(factor).expect("product increment").inverse();
    &fi.coadjoint(&mf).expect("factor group") - &mg
}

/// Discrete Legendre transform `F-`: the momenta at the start of the step,
/// `mu_k = -M_g + Ad*_{f^-1} M_f - u-` (the `u-` term on the actuated factor only).
pub fn legendre_minus<T: Real>(
    model: &ModelSpec<T>,
    g: &GroupElement<T>,
    f: &GroupElement<T>,
    u_minus: &CoAlgebraVector<T>,
) -> ProductState<T> {
    let mu_a = &minus_momentum(model, g, f, 0) - u_minus;
    let mu_u = minus_momentum(model, g, f, 1);
    ProductState {
        g_a: g.factor(0).expect("product").clone(),
        g_u: g.factor(1).expect("product").clone(),
        mu_a,
        mu_u,
    }
}

/// Discrete Legendre transform `F+`: `(g f, M_f + u+)`.
pub fn legendre_plus<T: Real>(
    model: &ModelSpec<T>,
    g: &GroupElement<T>,
    f: &GroupElement<T>,
    u_plus: &CoAlgebraVector<T>,
) -> ProductState<T> {
    let gf = g.compose(f).expect("model group");
    ProductState {
        g_a: gf.factor(0).expect("product").clone(),
        g_u: gf.factor(1).expect("product").clone(),
        mu_a: &model.first_deriv(Slot::Af, g, f) + u_plus,
        mu_u: model.first_deriv(Slot::Uf, g, f),
    }
}

// momentum-matching residual of the implicit Hamilton equations
fn implicit_residual<T: Real>(
    model: &ModelSpec<T>,
    s: &ProductState<T>,
    g: &GroupElement<T>,
    u_minus: &CoAlgebraVector<T>,
    zeta: &[T],
) -> Result<(GroupElement<T>, Vec<T>), LieError> {
    let da = s.mu_a.dim();
    let f = product_join(
        exp_factor(&s.g_a.descriptor(), &zeta[..da])?,
        exp_factor(&s.g_u.descriptor(), &zeta[da..])?,
    );
    let ra = &(&minus_momentum(model, g, &f, 0) - u_minus) - &s.mu_a;
    let ru = &minus_momentum(model, g, &f, 1) - &s.mu_u;
    let mut r = ra.coords().to_vec();
    r.extend_from_slice(ru.coords());
    Ok((f, r))
}

fn inf_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// One step of the discrete Hamilton equations with trapezoidal control
/// forces `u- = (h/2) u_k`, `u+ = (h/2) u_next`.
pub fn step_hamilton<T: Real>(
    model: &ModelSpec<T>,
    s: &ProductState<T>,
    u_k: &CoAlgebraVector<T>,
    u_next: &CoAlgebraVector<T>,
) -> Result<StepResult<T>, IntegratorError> {
    step_hamilton_with(model, s, u_k, u_next, None, &StepOptions::default())
}

/// [`step_hamilton`] with an initial guess for `(log f_a, log f_u)` and
/// explicit tolerances.
pub fn step_hamilton_with<T: Real>(
    model: &ModelSpec<T>,
    s: &ProductState<T>,
    u_k: &CoAlgebraVector<T>,
    u_next: &CoAlgebraVector<T>,
    guess: Option<&[T]>,
    opts: &StepOptions<T>,
) -> Result<StepResult<T>, IntegratorError> {
    let half_h = model.step_h() * T::lit(0.5);
    let u_minus = u_k.scale(half_h);
    let u_plus = u_next.scale(half_h);
    let g = s.g();
    let da = s.mu_a.dim();
    let n = da + s.mu_u.dim();
    let mut zeta = match guess {
        Some(z) => {
            assert_eq!(z.len(), n, "initial guess length");
            z.to_vec()
        }
        None => vec![T::zero(); n],
    };
    let (mut f, mut r) = implicit_residual(model, s, &g, &u_minus, &zeta)?;
    let mut rnorm = inf_norm(&r);
    let mut iterations = 0;
    let delta = T::epsilon().cbrt();
    while rnorm > opts.tol {
        if iterations == opts.max_iter {
            if rnorm <= opts.stagnation_tol {
                break;
            }
            return Err(IntegratorError::StepFailure {
                k: 0,
                residual: rnorm.to_f64().unwrap_or(f64::NAN),
            });
        }
        iterations += 1;
        let mut jac = Mat::zeros(n, n);
        for j in 0..n {
            let dj = delta * T::one().max(zeta[j].abs());
            let mut zp = zeta.clone();
            zp[j] = zp[j] + dj;
            let mut zm = zeta.clone();
            zm[j] = zm[j] - dj;
            let (_, rp) = implicit_residual(model, s, &g, &u_minus, &zp)?;
            let (_, rm) = implicit_residual(model, s, &g, &u_minus, &zm)?;
            for i in 0..n {
                jac[(i, j)] = (rp[i] - rm[i]) / (dj + dj);
            }
        }
        let rhs: Vec<T> = r.iter().map(|&x| -x).collect();
        let step = jac.solve(&rhs).ok_or_else(|| IntegratorError::StepFailure {
            k: 0,
            residual: rnorm.to_f64().unwrap_or(f64::NAN),
        })?;
        let candidate: Vec<T> = zeta.iter().zip(&step).map(|(&z, &d)| z + d).collect();
        let (cf, cr) = implicit_residual(model, s, &g, &u_minus, &candidate)?;
        let cnorm = inf_norm(&cr);
        if !(cnorm < rnorm) {
            // no further progress: either roundoff floor or genuine failure
            if rnorm <= opts.stagnation_tol {
                break;
            }
            if !cnorm.is_finite() {
                return Err(IntegratorError::StepTooLarge {
                    k: 0,
                    detail: "non-finite momentum residual".into(),
                });
            }
        }
        zeta = candidate;
        f = cf;
        r = cr;
        rnorm = cnorm;
    }
    check_injectivity(&s.g_a.descriptor(), &zeta[..da])?;
    check_injectivity(&s.g_u.descriptor(), &zeta[da..])?;
    let f_a = f.factor(0).expect("product").clone();
    let f_u = f.factor(1).expect("product").clone();
    let next = advance(model, s, &g, &f, &u_minus, &u_plus);
    Ok(StepResult {
        f_a,
        f_u,
        next,
        log_f: zeta,
        residual: rnorm,
        iterations,
    })
}

fn check_injectivity<T: Real>(group: &crate::lie::GroupDescriptor, zeta: &[T]) -> Result<(), IntegratorError> {
    // compact factors: the increment must stay inside the principal log domain
    let mut offset = 0;
    let factors = match group {
        crate::lie::GroupDescriptor::Product(fs) => fs.clone(),
        other => vec![other.clone()],
    };
    for fac in factors {
        let d = fac.algebra_dim();
        let c = &zeta[offset..offset + d];
        let norm = c.iter().map(|&x| x * x).sum::<T>().sqrt();
        let compact = matches!(
            fac,
            crate::lie::GroupDescriptor::Circle | crate::lie::GroupDescriptor::So3
        );
        if compact && norm >= T::PI() {
            return Err(IntegratorError::StepTooLarge {
                k: 0,
                detail: format!("increment angle {norm} reaches pi"),
            });
        }
        offset += d;
    }
    Ok(())
}

// g updates by right translation, momenta by the Ad* recursions
fn advance<T: Real>(
    model: &ModelSpec<T>,
    s: &ProductState<T>,
    g: &GroupElement<T>,
    f: &GroupElement<T>,
    u_minus: &CoAlgebraVector<T>,
    u_plus: &CoAlgebraVector<T>,
) -> ProductState<T> {
    let f_a = f.factor(0).expect("product");
    let f_u = f.factor(1).expect("product");
    let m_ag = model.first_deriv(Slot::Ag, g, f);
    let m_ug = model.first_deriv(Slot::Ug, g, f);
    let inner_a = &(&s.mu_a + &m_ag) + u_minus;
    let inner_u = &s.mu_u + &m_ug;
    ProductState {
        g_a: s.g_a.compose(f_a).expect("factor group"),
        g_u: s.g_u.compose(f_u).expect("factor group"),
        mu_a: &f_a.coadjoint(&inner_a).expect("factor group") + u_plus,
        mu_u: f_u.coadjoint(&inner_u).expect("factor group"),
    }
}

/// Residual (infinity norm) of all Hamilton equations for one step, given
/// both endpoint states and the increment `f`.
pub fn state_residual<T: Real>(
    model: &ModelSpec<T>,
    s: &ProductState<T>,
    s_next: &ProductState<T>,
    f: &GroupElement<T>,
    u_k: &CoAlgebraVector<T>,
    u_next: &CoAlgebraVector<T>,
) -> T {
    let half_h = model.step_h() * T::lit(0.5);
    let u_minus = u_k.scale(half_h);
    let u_plus = u_next.scale(half_h);
    let g = s.g();
    let start = legendre_minus(model, &g, f, &u_minus);
    let end = advance(model, s, &g, f, &u_minus, &u_plus);
    let mut r = T::zero();
    r = r.max((&start.mu_a - &s.mu_a).norm_inf());
    r = r.max((&start.mu_u - &s.mu_u).norm_inf());
    r = r.max((&end.mu_a - &s_next.mu_a).norm_inf());
    r = r.max((&end.mu_u - &s_next.mu_u).norm_inf());
    if let Ok(d) = end.g_a.local_log(&s_next.g_a) {
        r = r.max(d.norm_inf());
    } else {
        r = T::infinity();
    }
    if let Ok(d) = end.g_u.local_log(&s_next.g_u) {
        r = r.max(d.norm_inf());
    } else {
        r = T::infinity();
    }
    r
}

/// Left-hand sides of the forced discrete Euler-Lagrange equations at an
/// interior index, for the actuated and the unactuated factor:
/// `M_f(k-1) - Ad*_{f_k^-1} M_f(k) + M_g(k) [+ u-_k + u+_{k-1}]`.
/// The discrete forces are passed explicitly.
pub fn el_residual<T: Real>(
    model: &ModelSpec<T>,
    g_prev: &GroupElement<T>,
    f_prev: &GroupElement<T>,
    g_k: &GroupElement<T>,
    f_k: &GroupElement<T>,
    u_plus_prev: &CoAlgebraVector<T>,
    u_minus_k: &CoAlgebraVector<T>,
) -> (CoAlgebraVector<T>, CoAlgebraVector<T>) {
    let ra = &(&model.first_deriv(Slot::Af, g_prev, f_prev) - &minus_momentum(model, g_k, f_k, 0))
        + &(u_minus_k + u_plus_prev);
    let ru = &model.first_deriv(Slot::Uf, g_prev, f_prev) - &minus_momentum(model, g_k, f_k, 1);
    (ra, ru)
}

/// Discrete flow with its controls and per-step diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    /// `N + 1` states
    pub states: Vec<ProductState<T>>,
    /// `N` increments `f_k = g_k^-1 g_{k+1}`
    pub increments: Vec<GroupElement<T>>,
    /// `N + 1` control samples `u_0 .. u_N`
    pub controls: Vec<CoAlgebraVector<T>>,
    pub step_h: T,
    /// state-equation residual of each step
    pub step_residuals: Vec<T>,
}

impl<T: Real> Trajectory<T> {
    /// Horizon `N`.
    pub fn horizon(&self) -> usize {
        self.increments.len()
    }

    /// Rebuilds a trajectory from stored states and controls, recomputing the
    /// increments and the state-equation residuals.
    pub fn from_states(
        model: &ModelSpec<T>,
        states: Vec<ProductState<T>>,
        controls: Vec<CoAlgebraVector<T>>,
    ) -> Result<Self, IntegratorError> {
        let n = states.len().saturating_sub(1);
        if controls.len() < n + 1 {
            return Err(IntegratorError::Controls {
                needed: n + 1,
                got: controls.len(),
            });
        }
        let mut increments = Vec::with_capacity(n);
        let mut step_residuals = Vec::with_capacity(n);
        for k in 0..n {
            let f = states[k].g().inverse().compose(&states[k + 1].g())?;
            step_residuals.push(state_residual(
                model,
                &states[k],
                &states[k + 1],
                &f,
                &controls[k],
                &controls[k + 1],
            ));
            increments.push(f);
        }
        Ok(Self {
            states,
            increments,
            controls,
            step_h: model.step_h(),
            step_residuals,
        })
    }

    /// Continuous Hamiltonian at every state, when the model defines one.
    pub fn energies(&self, model: &ModelSpec<T>) -> Option<Vec<T>> {
        self.states
            .iter()
            .map(|s| model.energy(&s.g(), &s.mu_a, &s.mu_u))
            .collect()
    }

    pub fn max_step_residual(&self) -> T {
        self.step_residuals.iter().fold(T::zero(), |m, &r| m.max(r))
    }
}

/// Runs `n` Hamilton steps from `s0`. `controls` must hold at least `n + 1`
/// samples; extra samples are ignored.
pub fn simulate<T: Real>(
    model: &ModelSpec<T>,
    s0: &ProductState<T>,
    controls: &[CoAlgebraVector<T>],
    n: usize,
) -> Result<Trajectory<T>, IntegratorError> {
    simulate_with(model, s0, controls, n, &StepOptions::default())
}

pub fn simulate_with<T: Real>(
    model: &ModelSpec<T>,
    s0: &ProductState<T>,
    controls: &[CoAlgebraVector<T>],
    n: usize,
    opts: &StepOptions<T>,
) -> Result<Trajectory<T>, IntegratorError> {
    if controls.len() < n + 1 {
        return Err(IntegratorError::Controls {
            needed: n + 1,
            got: controls.len(),
        });
    }
    let mut states = Vec::with_capacity(n + 1);
    let mut increments = Vec::with_capacity(n);
    let mut step_residuals = Vec::with_capacity(n);
    states.push(s0.clone());
    let mut guess: Option<Vec<T>> = None;
    for k in 0..n {
        let step = step_hamilton_with(
            model,
            &states[k],
            &controls[k],
            &controls[k + 1],
            guess.as_deref(),
            opts,
        )
        .map_err(|e| e.at(k))?;
        increments.push(product_join(step.f_a, step.f_u));
        step_residuals.push(step.residual);
        states.push(step.next);
        guess = Some(step.log_f);
    }
    Ok(Trajectory {
        states,
        increments,
        controls: controls[..n + 1].to_vec(),
        step_h: model.step_h(),
        step_residuals,
    })
}
