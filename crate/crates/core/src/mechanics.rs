//! Discrete Lagrangians on `G x G` with `G = G_a x G_u`, their
//! left-trivialized first derivatives `M` and the second-derivative operators
//! acting on multipliers.
//!
//! A configuration `g` and an increment `f` are both two-factor product
//! elements `(actuated, unactuated)`.

use std::fmt;
use std::sync::Arc;

use crate::lie::{AlgebraVector, CoAlgebraVector, GroupDescriptor, GroupElement};
use crate::linalg::Mat;
use crate::scalar::Real;

/// One of the four arguments a discrete Lagrangian can be differentiated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    /// actuated configuration `g_a`
    Ag,
    /// actuated increment `f_a`
    Af,
    /// unactuated configuration `g_u`
    Ug,
    /// unactuated increment `f_u`
    Uf,
}

impl Slot {
    pub const ALL: [Slot; 4] = [Slot::Ag, Slot::Af, Slot::Ug, Slot::Uf];

    pub fn index(self) -> usize {
        match self {
            Slot::Ag => 0,
            Slot::Af => 1,
            Slot::Ug => 2,
            Slot::Uf => 3,
        }
    }

    /// 0 for the actuated factor, 1 for the unactuated one.
    pub fn factor(self) -> usize {
        match self {
            Slot::Ag | Slot::Af => 0,
            Slot::Ug | Slot::Uf => 1,
        }
    }

    pub fn is_increment(self) -> bool {
        matches!(self, Slot::Af | Slot::Uf)
    }

    pub fn label(self) -> &'static str {
        match self {
            Slot::Ag => "ag",
            Slot::Af => "af",
            Slot::Ug => "ug",
            Slot::Uf => "uf",
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// The four left-trivialized derivatives `M_ag, M_af, M_ug, M_uf`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstDerivs<T> {
    pub ag: CoAlgebraVector<T>,
    pub af: CoAlgebraVector<T>,
    pub ug: CoAlgebraVector<T>,
    pub uf: CoAlgebraVector<T>,
}

impl<T: Real> FirstDerivs<T> {
    pub fn get(&self, slot: Slot) -> &CoAlgebraVector<T> {
        match slot {
            Slot::Ag => &self.ag,
            Slot::Af => &self.af,
            Slot::Ug => &self.ug,
            Slot::Uf => &self.uf,
        }
    }
}

/// The sixteen operators `M^{wrt}_{of}(lambda)`: derivative of `M_of` in the
/// direction of `wrt`, paired with a multiplier `lambda` on the algebra of the
/// factor of `of`. Each is stored as a `dim(wrt) x dim(of)` matrix so that
/// `M^{wrt}_{of}(lambda) = matrix * lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondDerivOps<T> {
    groups: [GroupDescriptor; 2],
    // indexed [wrt][of]
    ops: Vec<Mat<T>>,
}

impl<T: Real> SecondDerivOps<T> {
    pub fn matrix(&self, wrt: Slot, of: Slot) -> &Mat<T> {
        &self.ops[wrt.index() * 4 + of.index()]
    }

    /// Applies `M^{wrt}_{of}` to `lambda`.
    pub fn apply(&self, wrt: Slot, of: Slot, lambda: &AlgebraVector<T>) -> CoAlgebraVector<T> {
        assert_eq!(
            lambda.group(),
            &self.groups[of.factor()],
            "multiplier of M^{wrt}_{of} lives on the factor of {of}"
        );
        let out = self.matrix(wrt, of).mul_vec(lambda.coords());
        CoAlgebraVector::new(self.groups[wrt.factor()].clone(), &out).expect("operator shape")
    }
}

/// A discrete Lagrangian `L_d(g, f)` with optional analytic derivatives.
///
/// Every derivative method returns `None` by default; the model then falls
/// back to finite differences for that entry.
pub trait DiscreteLagrangian<T: Real>: Send + Sync {
    fn value(&self, g: &GroupElement<T>, f: &GroupElement<T>) -> T;

    /// Analytic `M_slot`, left-trivialized.
    fn first(&self, _slot: Slot, _g: &GroupElement<T>, _f: &GroupElement<T>) -> Option<CoAlgebraVector<T>> {
        None
    }

    /// Analytic matrix of `M^{wrt}_{of}` (shape `dim(wrt) x dim(of)`).
    fn second(&self, _wrt: Slot, _of: Slot, _g: &GroupElement<T>, _f: &GroupElement<T>) -> Option<Mat<T>> {
        None
    }

    /// Continuous-time Hamiltonian evaluated at a configuration and momenta.
    fn energy(&self, _g: &GroupElement<T>, _mu_a: &CoAlgebraVector<T>, _mu_u: &CoAlgebraVector<T>) -> Option<T> {
        None
    }
}

/// Named physical parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: T,
    pub unit: String,
}

/// Finite-difference steps for the first and the nested second derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSteps<T> {
    pub first: T,
    pub second: T,
}

impl<T: Real> Default for FdSteps<T> {
    fn default() -> Self {
        Self {
            first: T::lit(1e-6),
            second: T::lit(1e-4),
        }
    }
}

/// A mechanical system on `G_a x G_u` with its discrete Lagrangian.
#[derive(Clone)]
pub struct ModelSpec<T: Real> {
    name: String,
    groups: [GroupDescriptor; 2],
    params: Vec<Param<T>>,
    step_h: T,
    lagrangian: Arc<dyn DiscreteLagrangian<T>>,
    fd: FdSteps<T>,
}

impl<T: Real> fmt::Debug for ModelSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("group", &self.group())
            .field("params", &self.params)
            .field("step_h", &self.step_h)
            .field("fd", &self.fd)
            .finish()
    }
}

struct FnLagrangian<F>(F);

impl<T: Real, F> DiscreteLagrangian<T> for FnLagrangian<F>
where
    F: Fn(&GroupElement<T>, &GroupElement<T>) -> T + Send + Sync,
{
    fn value(&self, g: &GroupElement<T>, f: &GroupElement<T>) -> T {
        (self.0)(g, f)
    }
}

// L~(g, f) = L(g f, f^-1): the same motion traversed backwards in time
struct Reversed<T: Real>(Arc<dyn DiscreteLagrangian<T>>);

impl<T: Real> DiscreteLagrangian<T> for Reversed<T> {
    fn value(&self, g: &GroupElement<T>, f: &GroupElement<T>) -> T {
        let gf = g.compose(f).expect("configuration and increment on the same group");
        self.0.value(&gf, &f.inverse())
    }
}

impl<T: Real> ModelSpec<T> {
    /// Panics unless `step_h > 0`.
    pub fn new(
        name: impl Into<String>,
        group_a: GroupDescriptor,
        group_u: GroupDescriptor,
        params: Vec<Param<T>>,
        step_h: T,
        lagrangian: Arc<dyn DiscreteLagrangian<T>>,
    ) -> Self {
        assert!(step_h > T::zero(), "step size must be positive");
        Self {
            name: name.into(),
            groups: [group_a, group_u],
            params,
            step_h,
            lagrangian,
            fd: FdSteps::default(),
        }
    }

    /// A model given only by its Lagrangian; every derivative is computed by
    /// finite differences.
    pub fn from_fn<F>(
        name: impl Into<String>,
        group_a: GroupDescriptor,
        group_u: GroupDescriptor,
        step_h: T,
        l: F,
    ) -> Self
    where
        F: Fn(&GroupElement<T>, &GroupElement<T>) -> T + Send + Sync + 'static,
    {
        Self::new(name, group_a, group_u, Vec::new(), step_h, Arc::new(FnLagrangian(l)))
    }

    pub fn with_fd_steps(mut self, fd: FdSteps<T>) -> Self {
        self.fd = fd;
        self
    }

    /// The model with `L~(g, f) = L_d(g f, f^-1)`, whose flow retraces the
    /// original one backwards. Derivatives are finite differences.
    pub fn time_reversed(&self) -> Self {
        Self {
            name: format!("{}-reversed", self.name),
            groups: self.groups.clone(),
            params: self.params.clone(),
            step_h: self.step_h,
            lagrangian: Arc::new(Reversed(self.lagrangian.clone())),
            fd: self.fd,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `G_a x G_u`.
    pub fn group(&self) -> GroupDescriptor {
        GroupDescriptor::Product(self.groups.to_vec())
    }

    pub fn group_a(&self) -> &GroupDescriptor {
        &self.groups[0]
    }

    pub fn group_u(&self) -> &GroupDescriptor {
        &self.groups[1]
    }

    /// Algebra of the factor a slot belongs to.
    pub fn slot_group(&self, slot: Slot) -> &GroupDescriptor {
        &self.groups[slot.factor()]
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<T> {
        self.params.iter().find(|p| p.name == name).map(|p| p.value)
    }

    pub fn step_h(&self) -> T {
        self.step_h
    }

    pub fn fd_steps(&self) -> FdSteps<T> {
        self.fd
    }

    pub fn lagrangian(&self) -> &Arc<dyn DiscreteLagrangian<T>> {
        &self.lagrangian
    }

    fn check(&self, g: &GroupElement<T>, f: &GroupElement<T>) {
        debug_assert_eq!(g.descriptor(), self.group(), "configuration off the model group");
        debug_assert_eq!(f.descriptor(), self.group(), "increment off the model group");
    }

    pub fn eval_lagrangian(&self, g: &GroupElement<T>, f: &GroupElement<T>) -> T {
        self.check(g, f);
        self.lagrangian.value(g, f)
    }

    /// Continuous Hamiltonian, when the model provides one.
    pub fn energy(&self, g: &GroupElement<T>, mu_a: &CoAlgebraVector<T>, mu_u: &CoAlgebraVector<T>) -> Option<T> {
        self.lagrangian.energy(g, mu_a, mu_u)
    }

    /// `M_slot`, analytic when supplied.
    pub fn first_deriv(&self, slot: Slot, g: &GroupElement<T>, f: &GroupElement<T>) -> CoAlgebraVector<T> {
        self.check(g, f);
        self.lagrangian
            .first(slot, g, f)
            .unwrap_or_else(|| self.fd_first_slot(slot, g, f, self.fd.first))
    }

    /// All four first derivatives, analytic entries where supplied.
    pub fn first_derivs(&self, g: &GroupElement<T>, f: &GroupElement<T>) -> FirstDerivs<T> {
        FirstDerivs {
            ag: self.first_deriv(Slot::Ag, g, f),
            af: self.first_deriv(Slot::Af, g, f),
            ug: self.first_deriv(Slot::Ug, g, f),
            uf: self.first_deriv(Slot::Uf, g, f),
        }
    }

    /// Central differences of the Lagrangian along `exp(eps e_i)`.
    pub fn fd_first_derivs(&self, g: &GroupElement<T>, f: &GroupElement<T>, eps: T) -> FirstDerivs<T> {
        check_eps(eps);
        FirstDerivs {
            ag: self.fd_first_slot(Slot::Ag, g, f, eps),
            af: self.fd_first_slot(Slot::Af, g, f, eps),
            ug: self.fd_first_slot(Slot::Ug, g, f, eps),
            uf: self.fd_first_slot(Slot::Uf, g, f, eps),
        }
    }

    fn fd_first_slot(&self, slot: Slot, g: &GroupElement<T>, f: &GroupElement<T>, eps: T) -> CoAlgebraVector<T> {
        let group = self.slot_group(slot).clone();
        let mut out = CoAlgebraVector::zeros(&group);
        for i in 0..group.algebra_dim() {
            let step = AlgebraVector::basis(&group, i).scale(eps);
            let (gp, fp) = perturb_slot(g, f, slot, &step);
            let (gm, fm) = perturb_slot(g, f, slot, &-step);
            out.coords_mut()[i] = (self.lagrangian.value(&gp, &fp) - self.lagrangian.value(&gm, &fm)) / (eps + eps);
        }
        out
    }

    /// All sixteen operators, analytic entries where supplied.
    pub fn second_ops(&self, g: &GroupElement<T>, f: &GroupElement<T>) -> SecondDerivOps<T> {
        self.check(g, f);
        let mut ops: Vec<Option<Mat<T>>> = Vec::with_capacity(16);
        for wrt in Slot::ALL {
            for of in Slot::ALL {
                ops.push(self.lagrangian.second(wrt, of, g, f));
            }
        }
        for wrt in Slot::ALL {
            let missing: Vec<Slot> = Slot::ALL
                .into_iter()
                .filter(|of| ops[wrt.index() * 4 + of.index()].is_none())
                .collect();
            if missing.is_empty() {
                continue;
            }
            let block = self.fd_second_row(wrt, &missing, g, f, self.fd.second);
            for (of, m) in missing.into_iter().zip(block) {
                ops[wrt.index() * 4 + of.index()] = Some(m);
            }
        }
        SecondDerivOps {
            groups: self.groups.clone(),
            ops: ops.into_iter().map(|m| m.expect("filled above")).collect(),
        }
    }

    /// Central differences of the first derivatives. `first` derivatives are
    /// taken from [`Self::first_deriv`], i.e. analytic when supplied.
    pub fn fd_second_ops(&self, g: &GroupElement<T>, f: &GroupElement<T>, eps: T) -> SecondDerivOps<T> {
        check_eps(eps);
        let mut ops = Vec::with_capacity(16);
        for wrt in Slot::ALL {
            ops.extend(self.fd_second_row(wrt, &Slot::ALL, g, f, eps));
        }
        SecondDerivOps {
            groups: self.groups.clone(),
            ops,
        }
    }

    fn fd_second_row(&self, wrt: Slot, of: &[Slot], g: &GroupElement<T>, f: &GroupElement<T>, eps: T) -> Vec<Mat<T>> {
        let group = self.slot_group(wrt).clone();
        let n = group.algebra_dim();
        let mut mats: Vec<Mat<T>> = of
            .iter()
            .map(|&o| Mat::zeros(n, self.slot_group(o).algebra_dim()))
            .collect();
        for i in 0..n {
            let step = AlgebraVector::basis(&group, i).scale(eps);
            let (gp, fp) = perturb_slot(g, f, wrt, &step);
            let (gm, fm) = perturb_slot(g, f, wrt, &-step);
            for (m, &o) in mats.iter_mut().zip(of) {
                let plus = self.first_deriv(o, &gp, &fp);
                let minus = self.first_deriv(o, &gm, &fm);
                for j in 0..m.cols() {
                    m[(i, j)] = (plus.coords()[j] - minus.coords()[j]) / (eps + eps);
                }
            }
        }
        mats
    }

    /// Compares every analytic entry against finite differences at the given
    /// `(g, f)` samples. An entry passes when
    /// `|analytic - fd| <= max(rel * |fd|, abs)` componentwise.
    pub fn validate(&self, samples: &[(GroupElement<T>, GroupElement<T>)], rel: T, abs: T) -> ValidationReport<T> {
        let mut report = ValidationReport {
            checked: 0,
            mismatches: Vec::new(),
        };
        let mut compare = |entry: String, sample: usize, a: &[T], b: &[T]| {
            report.checked += 1;
            for (&x, &y) in a.iter().zip(b) {
                if (x - y).abs() > (rel * y.abs()).max(abs) {
                    report.mismatches.push(Mismatch {
                        entry: entry.clone(),
                        sample,
                        analytic: x,
                        finite_difference: y,
                    });
                }
            }
        };
        for (k, (g, f)) in samples.iter().enumerate() {
            for slot in Slot::ALL {
                if let Some(a) = self.lagrangian.first(slot, g, f) {
                    let fd = self.fd_first_slot(slot, g, f, self.fd.first);
                    compare(format!("M_{slot}"), k, a.coords(), fd.coords());
                }
            }
            for wrt in Slot::ALL {
                let analytic: Vec<(Slot, Mat<T>)> = Slot::ALL
                    .into_iter()
                    .filter_map(|of| self.lagrangian.second(wrt, of, g, f).map(|m| (of, m)))
                    .collect();
                if analytic.is_empty() {
                    continue;
                }
                let slots: Vec<Slot> = analytic.iter().map(|(of, _)| *of).collect();
                let fd = self.fd_second_row(wrt, &slots, g, f, self.fd.second);
                for ((of, a), b) in analytic.iter().zip(&fd) {
                    compare(format!("M^{wrt}_{of}"), k, a.as_slice(), b.as_slice());
                }
            }
        }
        report
    }
}

fn check_eps<T: Real>(eps: T) {
    assert!(
        eps >= T::lit(1e-9) && eps <= T::lit(1e-3),
        "finite-difference step {eps} outside [1e-9, 1e-3]"
    );
}

/// Right-perturbs the factor of `g` or `f` addressed by `slot`.
pub fn perturb_slot<T: Real>(
    g: &GroupElement<T>,
    f: &GroupElement<T>,
    slot: Slot,
    xi: &AlgebraVector<T>,
) -> (GroupElement<T>, GroupElement<T>) {
    let i = slot.factor();
    let target = if slot.is_increment() { f } else { g };
    let factor = target.factor(i).expect("product element");
    let moved = target
        .with_factor(i, factor.perturb(xi).expect("perturbation on the slot's factor"))
        .expect("product element");
    if slot.is_increment() {
        (g.clone(), moved)
    } else {
        (moved, f.clone())
    }
}

/// Outcome of [`ModelSpec::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport<T> {
    /// number of analytic entries compared
    pub checked: usize,
    pub mismatches: Vec<Mismatch<T>>,
}

impl<T> ValidationReport<T> {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch<T> {
    pub entry: String,
    pub sample: usize,
    pub analytic: T,
    pub finite_difference: T,
}
