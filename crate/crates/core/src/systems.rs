//! Built-in benchmark models: ball and beam, and the inverted pendulum on a
//! cart, with analytic derivative tables and the four transfer problems.

use std::sync::Arc;

use crate::integrator::ProductState;
use crate::lie::{CoAlgebraVector, GroupDescriptor, GroupElement};
use crate::linalg::Mat;
use crate::mechanics::{DiscreteLagrangian, ModelSpec, Param, Slot};
use crate::optimal_control::OcProblem;
use crate::scalar::Real;

/// Horizon of the benchmark cases.
pub const BENCHMARK_HORIZON: usize = 1000;

fn parts<T: Real>(x: &GroupElement<T>) -> (T, T) {
    let a = x
        .factor(0)
        .and_then(GroupElement::scalar)
        .expect("scalar actuated factor");
    let u = x
        .factor(1)
        .and_then(GroupElement::scalar)
        .expect("scalar unactuated factor");
    (a, u)
}

fn one<T: Real>(x: T) -> Mat<T> {
    Mat::from_row_slice(1, 1, &[x])
}

fn covec<T: Real>(group: &GroupDescriptor, x: T) -> CoAlgebraVector<T> {
    CoAlgebraVector::scalar(group, x)
}

/// Ball of mass `m_b` rolling on a beam with inertia `i_r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallBeamParams<T> {
    pub m_b: T,
    pub i_r: T,
    pub g: T,
    pub h: T,
}

impl<T: Real> Default for BallBeamParams<T> {
    fn default() -> Self {
        Self {
            m_b: T::lit(0.5),
            i_r: T::lit(6.0),
            g: T::lit(9.8),
            h: T::lit(0.01),
        }
    }
}

impl<T: Real> BallBeamParams<T> {
    pub fn is_valid(&self) -> bool {
        [self.m_b, self.i_r, self.g, self.h].iter().all(|&x| x > T::zero())
    }
}

/// Configuration `(theta, xi)`: beam angle on S1 (actuated), ball position on R.
#[derive(Debug, Clone, Copy)]
pub struct BallBeam<T> {
    pub p: BallBeamParams<T>,
}

impl<T: Real> DiscreteLagrangian<T> for BallBeam<T> {
    fn value(&self, g: &GroupElement<T>, f: &GroupElement<T>) -> T {
        let BallBeamParams { m_b, i_r, g: grav, h } = self.p;
        let (th, xi) = parts(g);
        let (dth, dxi) = parts(f);
        let half = T::lit(0.5) / h;
        half * i_r * dth * dth + half * m_b * (dxi * dxi + xi * xi * dth * dth) - m_b * h * grav * xi * th.sin()
    }

    fn first(&self, slot: Slot, g: &GroupElement<T>, f: &GroupElement<T>) -> Option<CoAlgebraVector<T>> {
        let BallBeamParams { m_b, i_r, g: grav, h } = self.p;
        let (th, xi) = parts(g);
        let (dth, dxi) = parts(f);
        Some(match slot {
            Slot::Ag => covec(&GroupDescriptor::Circle, -m_b * grav * h * xi * th.cos()),
            Slot::Af => covec(&GroupDescriptor::Circle, (i_r / h + m_b * xi * xi / h) * dth),
            Slot::Ug => covec(
                &GroupDescriptor::RealLine(1),
                m_b / h * xi * dth * dth - m_b * grav * h * th.sin(),
            ),
            Slot::Uf => covec(&GroupDescriptor::RealLine(1), m_b / h * dxi),
        })
    }

    fn second(&self, wrt: Slot, of: Slot, g: &GroupElement<T>, f: &GroupElement<T>) -> Option<Mat<T>> {
        let BallBeamParams { m_b, i_r, g: grav, h } = self.p;
        let (th, xi) = parts(g);
        let (dth, _) = parts(f);
        use Slot::*;
        let v = match (wrt, of) {
            (Ag, Ag) => m_b * grav * h * xi * th.sin(),
            (Ug, Ag) | (Ag, Ug) => -m_b * grav * h * th.cos(),
            (Af, Af) => i_r / h + m_b * xi * xi / h,
            (Ug, Af) | (Af, Ug) => T::lit(2.0) * m_b / h * xi * dth,
            (Ug, Ug) => m_b / h * dth * dth,
            (Uf, Uf) => m_b / h,
            _ => T::zero(),
        };
        Some(one(v))
    }

    fn energy(&self, g: &GroupElement<T>, mu_a: &CoAlgebraVector<T>, mu_u: &CoAlgebraVector<T>) -> Option<T> {
        let BallBeamParams { m_b, i_r, g: grav, .. } = self.p;
        let (th, xi) = parts(g);
        let (pt, px) = (mu_a.coords()[0], mu_u.coords()[0]);
        let half = T::lit(0.5);
        Some(half * pt * pt / (i_r + m_b * xi * xi) + half * px * px / m_b + m_b * grav * xi * th.sin())
    }
}

/// Ball-and-beam model on `S1 x R`.
pub fn ball_beam_model<T: Real>(p: BallBeamParams<T>) -> ModelSpec<T> {
    assert!(p.is_valid(), "ball-beam parameters must be positive");
    let params = vec![
        param("m_b", p.m_b, "kg"),
        param("I_r", p.i_r, "kg m^2"),
        param("g", p.g, "m/s^2"),
        param("h", p.h, "s"),
    ];
    ModelSpec::new(
        "ball_beam",
        GroupDescriptor::Circle,
        GroupDescriptor::RealLine(1),
        params,
        p.h,
        Arc::new(BallBeam { p }),
    )
}

/// Cart of mass `m_c` carrying a pendulum of mass `m_b` and length `l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartPoleParams<T> {
    pub m_c: T,
    pub m_b: T,
    pub l: T,
    pub g: T,
    pub h: T,
}

impl<T: Real> Default for CartPoleParams<T> {
    fn default() -> Self {
        Self {
            m_c: T::lit(0.5),
            m_b: T::lit(0.1),
            l: T::lit(0.1),
            g: T::lit(9.8),
            h: T::lit(0.01),
        }
    }
}

impl<T: Real> CartPoleParams<T> {
    pub fn is_valid(&self) -> bool {
        [self.m_c, self.m_b, self.l, self.g, self.h]
            .iter()
            .all(|&x| x > T::zero())
    }
}

/// Configuration `(xi, theta)`: cart position on R (actuated), pendulum angle
/// from the upward vertical on S1.
#[derive(Debug, Clone, Copy)]
pub struct CartPole<T> {
    pub p: CartPoleParams<T>,
}

impl<T: Real> DiscreteLagrangian<T> for CartPole<T> {
    fn value(&self, g: &GroupElement<T>, f: &GroupElement<T>) -> T {
        let CartPoleParams {
            m_c,
            m_b,
            l,
            g: grav,
            h,
        } = self.p;
        let (_, th) = parts(g);
        let (dxi, dth) = parts(f);
        let half = T::lit(0.5) / h;
        half * (m_b + m_c) * dxi * dxi + half * m_b * l * l * dth * dth
            - m_b * l / h * dxi * dth * th.cos()
            - m_b * h * grav * l * th.cos()
    }

    fn first(&self, slot: Slot, g: &GroupElement<T>, f: &GroupElement<T>) -> Option<CoAlgebraVector<T>> {
        let CartPoleParams {
            m_c,
            m_b,
            l,
            g: grav,
            h,
        } = self.p;
        let (_, th) = parts(g);
        let (dxi, dth) = parts(f);
        let (c, s) = (th.cos(), th.sin());
        Some(match slot {
            Slot::Ag => covec(&GroupDescriptor::RealLine(1), T::zero()),
            Slot::Af => covec(
                &GroupDescriptor::RealLine(1),
                (m_b + m_c) / h * dxi - m_b * l / h * dth * c,
            ),
            Slot::Ug => covec(
                &GroupDescriptor::Circle,
                m_b * l / h * dxi * dth * s + m_b * h * grav * l * s,
            ),
            Slot::Uf => covec(&GroupDescriptor::Circle, m_b * l * l / h * dth - m_b * l / h * dxi * c),
        })
    }

    fn second(&self, wrt: Slot, of: Slot, g: &GroupElement<T>, f: &GroupElement<T>) -> Option<Mat<T>> {
        let CartPoleParams {
            m_c,
            m_b,
            l,
            g: grav,
            h,
        } = self.p;
        let (_, th) = parts(g);
        let (dxi, dth) = parts(f);
        let (c, s) = (th.cos(), th.sin());
        let k = m_b * l / h;
        use Slot::*;
        let v = match (wrt, of) {
            (Af, Af) => (m_b + m_c) / h,
            (Ug, Af) | (Af, Ug) => k * dth * s,
            (Uf, Af) | (Af, Uf) => -k * c,
            (Ug, Ug) => k * dxi * dth * c + m_b * h * grav * l * c,
            (Uf, Ug) | (Ug, Uf) => k * dxi * s,
            (Uf, Uf) => m_b * l * l / h,
            _ => T::zero(),
        };
        Some(one(v))
    }

    fn energy(&self, g: &GroupElement<T>, mu_a: &CoAlgebraVector<T>, mu_u: &CoAlgebraVector<T>) -> Option<T> {
        let CartPoleParams {
            m_c, m_b, l, g: grav, ..
        } = self.p;
        let (_, th) = parts(g);
        let (px, pt) = (mu_a.coords()[0], mu_u.coords()[0]);
        let (a, b, d) = (m_b + m_c, -m_b * l * th.cos(), m_b * l * l);
        let det = a * d - b * b;
        let kinetic = T::lit(0.5) * (d * px * px - T::lit(2.0) * b * px * pt + a * pt * pt) / det;
        Some(kinetic + m_b * grav * l * th.cos())
    }
}

/// Cart-pole model on `R x S1`.
pub fn cart_pole_model<T: Real>(p: CartPoleParams<T>) -> ModelSpec<T> {
    assert!(p.is_valid(), "cart-pole parameters must be positive");
    let params = vec![
        param("m_c", p.m_c, "kg"),
        param("m_b", p.m_b, "kg"),
        param("l", p.l, "m"),
        param("g", p.g, "m/s^2"),
        param("h", p.h, "s"),
    ];
    ModelSpec::new(
        "cart_pole",
        GroupDescriptor::RealLine(1),
        GroupDescriptor::Circle,
        params,
        p.h,
        Arc::new(CartPole { p }),
    )
}

fn param<T: Real>(name: &str, value: T, unit: &str) -> Param<T> {
    Param {
        name: name.into(),
        value,
        unit: unit.into(),
    }
}

/// Registered model names.
pub const MODEL_NAMES: [&str; 2] = ["ball_beam", "cart_pole"];

/// Ball-beam state `(theta, xi)` at rest, angle in radians.
pub fn ball_beam_rest<T: Real>(theta: T, xi: T) -> ProductState<T> {
    ProductState::at_rest(GroupElement::circle(theta), GroupElement::real_line(&[xi]))
}

/// Cart-pole state `(xi, theta)` at rest, angle in radians.
pub fn cart_pole_rest<T: Real>(xi: T, theta: T) -> ProductState<T> {
    ProductState::at_rest(GroupElement::real_line(&[xi]), GroupElement::circle(theta))
}

/// Rest-to-rest transfer to the origin for the ball and beam, with gravity
/// continuation attached.
pub fn ball_beam_problem<T: Real>(name: &str, p: BallBeamParams<T>, horizon: usize, theta0: T, xi0: T) -> OcProblem<T> {
    let mut prob = OcProblem::new(
        name,
        ball_beam_model(p),
        horizon,
        ball_beam_rest(theta0, xi0),
        ball_beam_rest(T::zero(), T::zero()),
    )
    .expect("well-formed ball-beam problem");
    prob.continuation = Some(Arc::new(move |s: T| {
        ball_beam_model(BallBeamParams { g: p.g * s, ..p })
    }));
    prob
}

/// Rest-to-rest transfer to the upright origin for the cart-pole, with
/// gravity continuation attached.
pub fn cart_pole_problem<T: Real>(name: &str, p: CartPoleParams<T>, horizon: usize, xi0: T, theta0: T) -> OcProblem<T> {
    let mut prob = OcProblem::new(
        name,
        cart_pole_model(p),
        horizon,
        cart_pole_rest(xi0, theta0),
        cart_pole_rest(T::zero(), T::zero()),
    )
    .expect("well-formed cart-pole problem");
    prob.continuation = Some(Arc::new(move |s: T| {
        cart_pole_model(CartPoleParams { g: p.g * s, ..p })
    }));
    prob
}

/// Names of the four benchmark cases, in the order of [`benchmark_cases`].
pub const BENCHMARK_NAMES: [&str; 4] = ["bb_case1", "bb_case2", "cp_case1", "cp_case2"];

/// The four benchmark transfers with default parameters and `N = 1000`.
pub fn benchmark_cases<T: Real>() -> Vec<OcProblem<T>> {
    BENCHMARK_NAMES
        .iter()
        .map(|n| benchmark_case(n).expect("known case"))
        .collect()
}

/// A benchmark case by name.
pub fn benchmark_case<T: Real>(name: &str) -> Option<OcProblem<T>> {
    let deg = |d: f64| T::lit(d.to_radians());
    let n = BENCHMARK_HORIZON;
    Some(match name {
        "bb_case1" => ball_beam_problem(name, BallBeamParams::default(), n, deg(0.0), T::lit(0.5)),
        "bb_case2" => ball_beam_problem(name, BallBeamParams::default(), n, deg(18.0), T::lit(0.5)),
        "cp_case1" => cart_pole_problem(name, CartPoleParams::default(), n, T::lit(2.0), deg(60.0)),
        "cp_case2" => cart_pole_problem(name, CartPoleParams::default(), n, T::lit(2.0), deg(-45.0)),
        _ => return None,
    })
}
