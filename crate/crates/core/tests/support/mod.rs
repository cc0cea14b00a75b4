//! Oracles and measurements shared by the integration tests and the
//! acceptance harness. The reference values never come from the library's
//! own finite-difference or series code.

#![allow(dead_code)]

use std::sync::Arc;

use dmoc_core::integrator::{simulate, ProductState, Trajectory};
use dmoc_core::lie::{ad, coad, dexpinv_op, AlgebraVector, CoAlgebraVector, GroupDescriptor, GroupElement};
use dmoc_core::linalg::Mat;
use dmoc_core::mechanics::{DiscreteLagrangian, ModelSpec, Slot};
use dmoc_core::optimal_control::{augmented_cost, kkt_residual, KktResidual, MultiplierSet, OcProblem};
use dmoc_core::systems::{ball_beam_model, cart_pole_model, BallBeamParams, CartPoleParams};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

// ---------------------------------------------------------------------------
// SO(3)

pub fn so3_vec(c: [f64; 3]) -> AlgebraVector<f64> {
    AlgebraVector::new(GroupDescriptor::So3, &c).unwrap()
}

pub fn so3_covec(c: [f64; 3]) -> CoAlgebraVector<f64> {
    CoAlgebraVector::new(GroupDescriptor::So3, &c).unwrap()
}

pub fn norm3(c: &[f64]) -> f64 {
    c.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Uniform direction scaled to a norm drawn from `[0, max_norm)`.
pub fn random_so3_coords(rng: &mut ChaCha8Rng, max_norm: f64) -> [f64; 3] {
    loop {
        let v = [
            uniform(rng, -1.0, 1.0),
            uniform(rng, -1.0, 1.0),
            uniform(rng, -1.0, 1.0),
        ];
        let n = norm3(&v);
        if n > 1e-3 && n <= 1.0 {
            let r = uniform(rng, 0.0, max_norm);
            return v.map(|x| x / n * r);
        }
    }
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> GroupElement<f64> {
    GroupElement::exp(&so3_vec(random_so3_coords(rng, 3.0)))
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Largest absolute error of each of the four Ad-derivative identities over
/// `n` random instances, by central differences with step `eps`:
///
/// 1. `d/de Ad_{g exp(e eta)} xi = [Ad_g eta, Ad_g xi]`
/// 2. `d/de Ad_{(g exp(e eta))^-1} xi = [Ad_{g^-1} xi, eta]`
/// 3. `d/de Ad*_{g exp(e eta)} alpha = Ad*_g ad*_{Ad_g eta} alpha`
/// 4. `d/de Ad*_{(g exp(e eta))^-1} alpha = -Ad*_{g^-1} ad*_eta alpha`
pub fn ad_identity_errors(rng: &mut ChaCha8Rng, n: usize, eps: f64) -> [f64; 4] {
    let mut worst = [0.0_f64; 4];
    for _ in 0..n {
        let g = random_rotation(rng);
        let eta = so3_vec(random_so3_coords(rng, 1.0));
        let xi = so3_vec(random_so3_coords(rng, 1.0));
        let alpha = so3_covec(random_so3_coords(rng, 1.0));
        let moved = |e: f64| g.perturb(&eta.scale(e)).unwrap();
        let (gp, gm) = (moved(eps), moved(-eps));
        let central = |p: &[f64], m: &[f64]| -> Vec<f64> { sub(p, m).iter().map(|d| d / (2.0 * eps)).collect() };

        let fd1 = central(gp.adjoint(&xi).unwrap().coords(), gm.adjoint(&xi).unwrap().coords());
        let rhs1 = ad(&g.adjoint(&eta).unwrap(), &g.adjoint(&xi).unwrap()).unwrap();
        worst[0] = worst[0].max(max_abs_diff(&fd1, rhs1.coords()));

        let fd2 = central(
            gp.inverse().adjoint(&xi).unwrap().coords(),
            gm.inverse().adjoint(&xi).unwrap().coords(),
        );
        let rhs2 = ad(&g.inverse().adjoint(&xi).unwrap(), &eta).unwrap();
        worst[1] = worst[1].max(max_abs_diff(&fd2, rhs2.coords()));

        let fd3 = central(
            gp.coadjoint(&alpha).unwrap().coords(),
            gm.coadjoint(&alpha).unwrap().coords(),
        );
        let rhs3 = g.coadjoint(&coad(&g.adjoint(&eta).unwrap(), &alpha).unwrap()).unwrap();
        worst[2] = worst[2].max(max_abs_diff(&fd3, rhs3.coords()));

        let fd4 = central(
            gp.inverse().coadjoint(&alpha).unwrap().coords(),
            gm.inverse().coadjoint(&alpha).unwrap().coords(),
        );
        let rhs4 = -g.inverse().coadjoint(&coad(&eta, &alpha).unwrap()).unwrap();
        worst[3] = worst[3].max(max_abs_diff(&fd4, rhs4.coords()));
    }
    worst
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Bernoulli numbers `B_0 .. B_20` (with `B_1 = +1/2`) as exact fractions.
const BERNOULLI: [(f64, f64); 21] = [
    (1.0, 1.0),
    (1.0, 2.0),
    (1.0, 6.0),
    (0.0, 1.0),
    (-1.0, 30.0),
    (0.0, 1.0),
    (1.0, 42.0),
    (0.0, 1.0),
    (-1.0, 30.0),
    (0.0, 1.0),
    (5.0, 66.0),
    (0.0, 1.0),
    (-691.0, 2730.0),
    (0.0, 1.0),
    (7.0, 6.0),
    (0.0, 1.0),
    (-3617.0, 510.0),
    (0.0, 1.0),
    (43867.0, 798.0),
    (0.0, 1.0),
    (-174611.0, 330.0),
];

/// `sum_{n<=20} B_n / n! ad_X^n v` on so(3), with `ad_X v = X x v`.
pub fn dexpinv_truncated(x: [f64; 3], v: [f64; 3]) -> [f64; 3] {
    let mut out = v;
    let mut power = v;
    let mut fact = 1.0;
    for (n, &(p, q)) in BERNOULLI.iter().enumerate().skip(1) {
        power = cross(&x, &power);
        fact *= n as f64;
        let c = p / q / fact;
        for i in 0..3 {
            out[i] += c * power[i];
        }
    }
    out
}

/// Closed form `I + X^/2 + (1 - (t/2) cot(t/2)) / t^2 X^2` with `t = |X|`.
pub fn dexpinv_closed(x: [f64; 3], v: [f64; 3]) -> [f64; 3] {
    let t = norm3(&x);
    let xv = cross(&x, &v);
    let xxv = cross(&x, &xv);
    let c = if t < 1e-4 {
        1.0 / 12.0 + t * t / 720.0
    } else {
        (1.0 - 0.5 * t / (0.5 * t).tan()) / (t * t)
    };
    [0, 1, 2].map(|i| v[i] + 0.5 * xv[i] + c * xxv[i])
}

/// Largest error of the library `dexpinv_op` against the truncated series
/// and the closed form, for `|X| <= max_norm`.
pub fn dexpinv_errors(rng: &mut ChaCha8Rng, n: usize, max_norm: f64) -> (f64, f64) {
    let (mut series, mut closed) = (0.0_f64, 0.0_f64);
    for _ in 0..n {
        let x = random_so3_coords(rng, max_norm);
        let v = random_so3_coords(rng, 1.0);
        let lib = dexpinv_op(&so3_vec(x), &so3_vec(v)).unwrap();
        series = series.max(max_abs_diff(lib.coords(), &dexpinv_truncated(x, v)));
        closed = closed.max(max_abs_diff(lib.coords(), &dexpinv_closed(x, v)));
    }
    (series, closed)
}

/// Truncation of the BCH series after the third-order brackets.
pub fn bch_third_order(x: [f64; 3], y: [f64; 3]) -> [f64; 3] {
    let xy = cross(&x, &y);
    let xxy = cross(&x, &xy);
    let yyx = cross(&y, &cross(&y, &x));
    [0, 1, 2].map(|i| x[i] + y[i] + 0.5 * xy[i] + (xxy[i] + yyx[i]) / 12.0)
}

/// Error of [`bch_third_order`] against `log(exp X exp Y)`.
pub fn bch_error(x: [f64; 3], y: [f64; 3]) -> f64 {
    let z = GroupElement::exp(&so3_vec(x))
        .compose(&GroupElement::exp(&so3_vec(y)))
        .unwrap()
        .log()
        .unwrap();
    max_abs_diff(z.coords(), &bch_third_order(x, y))
}

/// Worst value of `(error - floor) / (|X| + |Y|)^4` for `|X|, |Y| <= max_norm`;
/// `floor` absorbs roundoff for tiny arguments.
pub fn bch_worst_ratio(rng: &mut ChaCha8Rng, n: usize, max_norm: f64, floor: f64) -> f64 {
    (0..n)
        .map(|_| {
            let x = random_so3_coords(rng, max_norm);
            let y = random_so3_coords(rng, max_norm);
            let s = norm3(&x) + norm3(&y);
            (bch_error(x, y) - floor).max(0.0) / s.powi(4)
        })
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// derivative tables on scalar two-factor models

/// Which factor of a built-in carries the angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Layout {
    /// `(theta, xi)`
    AngleFirst,
    /// `(xi, theta)`
    LineFirst,
}

fn factor(layout: Layout, first: bool, x: f64) -> GroupElement<f64> {
    let angle = (layout == Layout::AngleFirst) == first;
    if angle {
        GroupElement::circle(x)
    } else {
        GroupElement::real_line(&[x])
    }
}

/// `(g, f)` from raw coordinates `[a, u, da, du]`.
pub fn point(layout: Layout, c: [f64; 4]) -> (GroupElement<f64>, GroupElement<f64>) {
    let g = GroupElement::Product(vec![factor(layout, true, c[0]), factor(layout, false, c[1])]);
    let f = GroupElement::Product(vec![factor(layout, true, c[2]), factor(layout, false, c[3])]);
    (g, f)
}

fn value_at(model: &ModelSpec<f64>, layout: Layout, c: [f64; 4]) -> f64 {
    let (g, f) = point(layout, c);
    model.eval_lagrangian(&g, &f)
}

/// Central first differences of the Lagrangian value in raw coordinates,
/// ordered like [`Slot::ALL`].
pub fn fd_first(model: &ModelSpec<f64>, layout: Layout, c: [f64; 4], eps: f64) -> [f64; 4] {
    [0, 1, 2, 3].map(|s| {
        let i = slot_coord(Slot::ALL[s]);
        let (mut p, mut m) = (c, c);
        p[i] += eps;
        m[i] -= eps;
        (value_at(model, layout, p) - value_at(model, layout, m)) / (2.0 * eps)
    })
}

/// Four-point mixed second differences of the Lagrangian value,
/// `[wrt][of]` in the order of [`Slot::ALL`].
pub fn fd_second(model: &ModelSpec<f64>, layout: Layout, c: [f64; 4], eps: f64) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for (a, row) in out.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            let (i, j) = (slot_coord(Slot::ALL[a]), slot_coord(Slot::ALL[b]));
            let at = |si: f64, sj: f64| {
                let mut q = c;
                q[i] += si * eps;
                q[j] += sj * eps;
                value_at(model, layout, q)
            };
            *v = if i == j {
                (at(1.0, 0.0) - 2.0 * value_at(model, layout, c) + at(-1.0, 0.0)) / (eps * eps)
            } else {
                (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * eps * eps)
            };
        }
    }
    out
}

// raw coordinate index `[a, u, da, du]` of a slot
fn slot_coord(s: Slot) -> usize {
    match s {
        Slot::Ag => 0,
        Slot::Ug => 1,
        Slot::Af => 2,
        Slot::Uf => 3,
    }
}

/// Worst relative error (with an absolute floor) of the analytic first and
/// second tables against value differences, over `n` random points drawn
/// by `sample`.
pub fn table_error(
    model: &ModelSpec<f64>,
    layout: Layout,
    rng: &mut ChaCha8Rng,
    n: usize,
    abs_floor: f64,
) -> (f64, usize) {
    let mut worst = 0.0_f64;
    let mut checked = 0;
    let mut cmp = |analytic: f64, fd: f64| {
        checked += 1;
        let e = (analytic - fd).abs() / fd.abs().max(abs_floor / 1e-5);
        worst = worst.max(e);
    };
    for _ in 0..n {
        let c = [
            uniform(rng, -3.0, 3.0),
            uniform(rng, -2.0, 2.0),
            uniform(rng, -0.05, 0.05),
            uniform(rng, -0.05, 0.05),
        ];
        let c = if layout == Layout::LineFirst {
            [c[1], c[0], c[3], c[2]]
        } else {
            c
        };
        let (g, f) = point(layout, c);
        let first = fd_first(model, layout, c, 1e-6);
        let second = fd_second(model, layout, c, 1e-3);
        let ops = model.second_ops(&g, &f);
        for (s, slot) in Slot::ALL.into_iter().enumerate() {
            cmp(model.first_deriv(slot, &g, &f).coords()[0], first[s]);
            for (o, of) in Slot::ALL.into_iter().enumerate() {
                cmp(ops.matrix(slot, of).as_slice()[0], second[s][o]);
            }
        }
    }
    (worst, checked)
}

// ---------------------------------------------------------------------------
// the specialized multiplier equations of the two built-ins

/// Data of one stage: configuration, increment, control and multipliers,
/// with `prev` holding `(lam2, lam3, lam5, lam6)` at `k - 1`.
#[derive(Debug, Clone, Copy)]
pub struct StagePoint {
    pub theta: f64,
    pub xi: f64,
    pub dtheta: f64,
    pub dxi: f64,
    pub u: f64,
    pub lam: [f64; 6],
    pub prev: Option<[f64; 4]>,
}

/// Residuals `(a)..(h)` of the ball-and-beam multiplier equations, written
/// out by hand as left side minus right side; `(a), (b), (e), (f), (g)` are
/// `None` at `k = 0` and `(h)` is `None` for `k > 0`.
pub fn ball_beam_by_hand(p: &BallBeamParams<f64>, s: &StagePoint) -> [Option<f64>; 8] {
    let BallBeamParams { m_b, i_r, g, h } = *p;
    let [l1, l2, l3, l4, l5, l6] = s.lam;
    let (th, xi, dth) = (s.theta, s.xi, s.dtheta);
    let c = -(i_r / h + m_b / h * xi * xi) * l1 + 2.0 * m_b / h * xi * dth * (l4 - l6) - l2;
    let d = -m_b / h * l4 - l5;
    let interior = s.prev.map(|[p2, p3, p5, p6]| {
        let a = m_b * g * h * xi * th.sin() * (l1 - l3) - m_b * g * h * th.cos() * (l4 - l6) - (-p2 + l2);
        let b = m_b * g * h * th.cos() * (l3 - l1) - 2.0 * m_b / h * xi * dth * l1 + m_b / h * dth * dth * (l4 - l6)
            - (-p5 + l5);
        let e = l1 - l3 + p3;
        let f = l4 - l6 + p6;
        let gg = s.u + h / 2.0 * l1 - h / 2.0 * l3 - h / 2.0 * p3;
        [a, b, e, f, gg]
    });
    let hh = s.prev.is_none().then(|| s.u + h / 2.0 * l1 - h / 2.0 * l3);
    let i = interior.map(|v| v.map(Some)).unwrap_or([None; 5]);
    [i[0], i[1], Some(c), Some(d), i[2], i[3], i[4], hh]
}

/// Residuals `(a)..(h)` of the cart-pole multiplier equations. The gravity
/// term of `(b)` carries `cos(theta)`, the derivative of the `sin(theta)`
/// in `M_ug`.
pub fn cart_pole_by_hand(p: &CartPoleParams<f64>, s: &StagePoint) -> [Option<f64>; 8] {
    let CartPoleParams { m_c, m_b, l, g, h } = *p;
    let [l1, l2, l3, l4, l5, l6] = s.lam;
    let (th, dth, dxi) = (s.theta, s.dtheta, s.dxi);
    let k = m_b * l / h;
    let c = -(m_b + m_c) / h * l1 + k * dth * th.sin() * (l4 - l6) + k * th.cos() * l4 - l2;
    let d = k * th.cos() * l1 + k * dxi * th.sin() * (l4 - l6) - m_b * l * l / h * l4 - l5;
    let interior = s.prev.map(|[p2, p3, p5, p6]| {
        let a = 0.0 - (-p2 + l2);
        let b = -k * dth * th.sin() * l1 - k * dxi * th.sin() * l4
            + k * dxi * dth * th.cos() * (l4 - l6)
            + m_b * h * g * l * th.cos() * (l4 - l6)
            - (-p5 + l5);
        let e = l1 - l3 + p3;
        let f = l4 - l6 + p6;
        let gg = s.u + h / 2.0 * l1 - h / 2.0 * l3 - h / 2.0 * p3;
        [a, b, e, f, gg]
    });
    let hh = s.prev.is_none().then(|| s.u + h / 2.0 * l1 - h / 2.0 * l3);
    let i = interior.map(|v| v.map(Some)).unwrap_or([None; 5]);
    [i[0], i[1], Some(c), Some(d), i[2], i[3], i[4], hh]
}

/// Random trajectory data for a scalar two-factor problem: states,
/// increments and controls drawn independently, so no dynamics hold.
pub fn random_trajectory(problem: &OcProblem<f64>, layout: Layout, rng: &mut ChaCha8Rng) -> Trajectory<f64> {
    let n = problem.horizon;
    let (ga, gu) = (problem.model.group_a().clone(), problem.model.group_u().clone());
    let states = (0..=n)
        .map(|_| {
            let c = [uniform(rng, -3.0, 3.0), uniform(rng, -2.0, 2.0), 0.0, 0.0];
            let c = if layout == Layout::LineFirst {
                [c[1], c[0], 0.0, 0.0]
            } else {
                c
            };
            let (g, _) = point(layout, c);
            ProductState::new(
                g.factor(0).unwrap().clone(),
                g.factor(1).unwrap().clone(),
                CoAlgebraVector::scalar(&ga, uniform(rng, -1.0, 1.0)),
                CoAlgebraVector::scalar(&gu, uniform(rng, -1.0, 1.0)),
            )
        })
        .collect();
    let increments = (0..n)
        .map(|_| point(layout, [0.0, 0.0, uniform(rng, -0.05, 0.05), uniform(rng, -0.05, 0.05)]).1)
        .collect();
    let controls = (0..=n)
        .map(|_| CoAlgebraVector::scalar(&ga, uniform(rng, -5.0, 5.0)))
        .collect();
    Trajectory {
        states,
        increments,
        controls,
        step_h: problem.model.step_h(),
        step_residuals: vec![0.0; n],
    }
}

pub fn random_multipliers(problem: &OcProblem<f64>, rng: &mut ChaCha8Rng, scale: f64) -> MultiplierSet<f64> {
    let mut m = MultiplierSet::zeros(problem);
    let n = problem.horizon;
    let (ga, gu) = (problem.model.group_a().clone(), problem.model.group_u().clone());
    let mut x = || uniform(rng, -scale, scale);
    for k in 0..n {
        m.lam1[k] = AlgebraVector::scalar(&ga, x());
        m.lam2[k] = CoAlgebraVector::scalar(&ga, x());
        m.lam3[k] = AlgebraVector::scalar(&ga, x());
        m.lam4[k] = AlgebraVector::scalar(&gu, x());
        m.lam5[k] = CoAlgebraVector::scalar(&gu, x());
        m.lam6[k] = AlgebraVector::scalar(&gu, x());
    }
    m
}

/// Reads stage `k` of a built-in trajectory as a [`StagePoint`].
pub fn stage_point(traj: &Trajectory<f64>, lam: &MultiplierSet<f64>, layout: Layout, k: usize) -> StagePoint {
    let s = &traj.states[k];
    let f = &traj.increments[k];
    let (a, u) = (s.g_a.scalar().unwrap(), s.g_u.scalar().unwrap());
    let (da, du) = (
        f.factor(0).unwrap().scalar().unwrap(),
        f.factor(1).unwrap().scalar().unwrap(),
    );
    let ((theta, xi), (dtheta, dxi)) = match layout {
        Layout::AngleFirst => ((a, u), (da, du)),
        Layout::LineFirst => ((u, a), (du, da)),
    };
    let c = |v: &[f64]| v[0];
    StagePoint {
        theta,
        xi,
        dtheta,
        dxi,
        u: c(traj.controls[k].coords()),
        lam: [
            c(lam.lam1[k].coords()),
            c(lam.lam2[k].coords()),
            c(lam.lam3[k].coords()),
            c(lam.lam4[k].coords()),
            c(lam.lam5[k].coords()),
            c(lam.lam6[k].coords()),
        ],
        prev: (k > 0).then(|| {
            [
                c(lam.lam2[k - 1].coords()),
                c(lam.lam3[k - 1].coords()),
                c(lam.lam5[k - 1].coords()),
                c(lam.lam6[k - 1].coords()),
            ]
        }),
    }
}

// ---------------------------------------------------------------------------
// a small nonlinear model on R x R with hand-written derivatives

/// `L = (a/2h) dx^2 + (b/2h) dy^2 + (c/h) dx dy cos(x - y) - h (k x^2 y + sin y)`.
#[derive(Debug, Clone, Copy)]
pub struct Toy {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub k: f64,
    pub h: f64,
}

impl Toy {
    fn parts(g: &GroupElement<f64>, f: &GroupElement<f64>) -> [f64; 4] {
        let s = |e: &GroupElement<f64>, i: usize| e.factor(i).unwrap().scalar().unwrap();
        [s(g, 0), s(g, 1), s(f, 0), s(f, 1)]
    }
}

fn r1() -> GroupDescriptor {
    GroupDescriptor::RealLine(1)
}

impl DiscreteLagrangian<f64> for Toy {
    fn value(&self, g: &GroupElement<f64>, f: &GroupElement<f64>) -> f64 {
        let [x, y, dx, dy] = Self::parts(g, f);
        let Toy { a, b, c, k, h } = *self;
        a / (2.0 * h) * dx * dx + b / (2.0 * h) * dy * dy + c / h * dx * dy * (x - y).cos()
            - h * (k * x * x * y + y.sin())
    }

    fn first(&self, slot: Slot, g: &GroupElement<f64>, f: &GroupElement<f64>) -> Option<CoAlgebraVector<f64>> {
        let [x, y, dx, dy] = Self::parts(g, f);
        let Toy { a, b, c, k, h } = *self;
        let (cs, sn) = ((x - y).cos(), (x - y).sin());
        let v = match slot {
            Slot::Ag => -c / h * dx * dy * sn - 2.0 * h * k * x * y,
            Slot::Ug => c / h * dx * dy * sn - h * (k * x * x + y.cos()),
            Slot::Af => a / h * dx + c / h * dy * cs,
            Slot::Uf => b / h * dy + c / h * dx * cs,
        };
        Some(CoAlgebraVector::scalar(&r1(), v))
    }

    fn second(&self, wrt: Slot, of: Slot, g: &GroupElement<f64>, f: &GroupElement<f64>) -> Option<Mat<f64>> {
        let [x, y, dx, dy] = Self::parts(g, f);
        let Toy { a, b, c, k, h } = *self;
        let (cs, sn) = ((x - y).cos(), (x - y).sin());
        use Slot::*;
        let v = match (wrt, of) {
            (Ag, Ag) => -c / h * dx * dy * cs - 2.0 * h * k * y,
            (Ag, Ug) | (Ug, Ag) => c / h * dx * dy * cs - 2.0 * h * k * x,
            (Ug, Ug) => -c / h * dx * dy * cs + h * y.sin(),
            (Ag, Af) | (Af, Ag) => -c / h * dy * sn,
            (Ag, Uf) | (Uf, Ag) => -c / h * dx * sn,
            (Ug, Af) | (Af, Ug) => c / h * dy * sn,
            (Ug, Uf) | (Uf, Ug) => c / h * dx * sn,
            (Af, Af) => a / h,
            (Uf, Uf) => b / h,
            (Af, Uf) | (Uf, Af) => c / h * cs,
        };
        Some(Mat::from_row_slice(1, 1, &[v]))
    }
}

pub fn toy_model(h: f64) -> ModelSpec<f64> {
    let toy = Toy {
        a: 1.3,
        b: 0.7,
        c: 0.4,
        k: 2.0,
        h,
    };
    ModelSpec::new("toy", r1(), r1(), Vec::new(), h, Arc::new(toy))
}

pub fn toy_problem(horizon: usize, h: f64) -> OcProblem<f64> {
    let rest = |x: f64, y: f64| ProductState::at_rest(GroupElement::real_line(&[x]), GroupElement::real_line(&[y]));
    OcProblem::new("toy", toy_model(h), horizon, rest(0.3, -0.2), rest(0.0, 0.0)).unwrap()
}

// ---------------------------------------------------------------------------
// structure-preservation measurements

fn zero_controls(m: &ModelSpec<f64>, n: usize) -> Vec<CoAlgebraVector<f64>> {
    vec![CoAlgebraVector::zeros(m.group_a()); n + 1]
}

fn with_momenta(
    m: &ModelSpec<f64>,
    ga: GroupElement<f64>,
    gu: GroupElement<f64>,
    pa: f64,
    pu: f64,
) -> ProductState<f64> {
    ProductState::new(
        ga,
        gu,
        CoAlgebraVector::scalar(m.group_a(), pa),
        CoAlgebraVector::scalar(m.group_u(), pu),
    )
}

/// Unforced cart-pole swinging through the hanging position with the cart
/// drifting, `n` steps.
pub fn swinging_cart_pole(n: usize) -> (ModelSpec<f64>, Trajectory<f64>) {
    let m = cart_pole_model(CartPoleParams::default());
    let s0 = with_momenta(&m, GroupElement::real_line(&[0.2]), GroupElement::circle(2.4), 0.3, 0.0);
    let traj = simulate(&m, &s0, &zero_controls(&m, n), n).expect("unforced cart-pole step");
    (m, traj)
}

/// Largest change of the cart momentum over an unforced run of `n` steps.
pub fn cart_momentum_drift(n: usize) -> f64 {
    let (_, traj) = swinging_cart_pole(n);
    let p0 = traj.states[0].mu_a.coords()[0];
    traj.states
        .iter()
        .map(|s| (s.mu_a.coords()[0] - p0).abs())
        .fold(0.0, f64::max)
}

/// Largest energy deviation from the start over the first `short` and the
/// first `long` steps of one unforced cart-pole run.
pub fn energy_drift(short: usize, long: usize) -> (f64, f64) {
    let (m, traj) = swinging_cart_pole(long);
    let e = traj.energies(&m).expect("cart-pole energy");
    let dev = |n: usize| e[..=n].iter().map(|x| (x - e[0]).abs()).fold(0.0, f64::max);
    (dev(short), dev(long))
}

/// Runs the unforced ball and beam `n` steps forward, then the time-reversed
/// model from `(g_N, -mu_N)`, and returns the largest distance between the
/// two state sequences (configuration and momentum, mirrored).
pub fn ball_beam_reversal_error(n: usize) -> f64 {
    let m = ball_beam_model(BallBeamParams::default());
    let s0 = with_momenta(
        &m,
        GroupElement::circle(0.1),
        GroupElement::real_line(&[0.4]),
        0.05,
        -0.02,
    );
    let fwd = simulate(&m, &s0, &zero_controls(&m, n), n).expect("forward run");
    let end = &fwd.states[n];
    let start = ProductState::new(end.g_a.clone(), end.g_u.clone(), -&end.mu_a, -&end.mu_u);
    let rev = m.time_reversed();
    let back = simulate(&rev, &start, &zero_controls(&rev, n), n).expect("reversed run");
    let mut worst: f64 = 0.0;
    for k in 0..=n {
        let (a, b) = (&fwd.states[n - k], &back.states[k]);
        worst = worst
            .max(a.g_a.local_log(&b.g_a).unwrap().norm_inf())
            .max(a.g_u.local_log(&b.g_u).unwrap().norm_inf())
            .max((&a.mu_a + &b.mu_a).norm_inf())
            .max((&a.mu_u + &b.mu_u).norm_inf());
    }
    worst
}

// ---------------------------------------------------------------------------
// the residual families as the gradient of the augmented cost on R x R

#[derive(Clone, Copy, Debug)]
pub enum Var {
    Ga,
    Gu,
    MuA,
    MuU,
    Fa,
    Fu,
    U,
}

/// Independent random states, increments and controls on `R x R`.
pub fn line_trajectory(problem: &OcProblem<f64>, rng: &mut ChaCha8Rng) -> Trajectory<f64> {
    let n = problem.horizon;
    let r1 = problem.model.group_a().clone();
    let line = |x: f64| GroupElement::real_line(&[x]);
    let states = (0..=n)
        .map(|_| {
            ProductState::new(
                line(uniform(rng, -1.0, 1.0)),
                line(uniform(rng, -1.0, 1.0)),
                CoAlgebraVector::scalar(&r1, uniform(rng, -1.0, 1.0)),
                CoAlgebraVector::scalar(&r1, uniform(rng, -1.0, 1.0)),
            )
        })
        .collect();
    let increments = (0..n)
        .map(|_| GroupElement::Product(vec![line(uniform(rng, -0.3, 0.3)), line(uniform(rng, -0.3, 0.3))]))
        .collect();
    let controls = (0..=n)
        .map(|_| CoAlgebraVector::scalar(&r1, uniform(rng, -2.0, 2.0)))
        .collect();
    Trajectory {
        states,
        increments,
        controls,
        step_h: problem.model.step_h(),
        step_residuals: vec![0.0; n],
    }
}

fn shifted(traj: &Trajectory<f64>, var: Var, k: usize, d: f64) -> Trajectory<f64> {
    let mut t = traj.clone();
    let bump = |e: &GroupElement<f64>| GroupElement::real_line(&[e.scalar().unwrap() + d]);
    let covec = |c: &CoAlgebraVector<f64>| CoAlgebraVector::scalar(c.group(), c.coords()[0] + d);
    match var {
        Var::Ga => t.states[k].g_a = bump(&t.states[k].g_a),
        Var::Gu => t.states[k].g_u = bump(&t.states[k].g_u),
        Var::MuA => t.states[k].mu_a = covec(&t.states[k].mu_a),
        Var::MuU => t.states[k].mu_u = covec(&t.states[k].mu_u),
        Var::Fa | Var::Fu => {
            let i = if matches!(var, Var::Fa) { 0 } else { 1 };
            let mut parts: Vec<_> = (0..2).map(|j| t.increments[k].factor(j).unwrap().clone()).collect();
            parts[i] = bump(&parts[i]);
            t.increments[k] = GroupElement::Product(parts);
        }
        Var::U => t.controls[k] = covec(&t.controls[k]),
    }
    t
}

/// Central difference (step `1e-6`) of the augmented cost in one variable.
/// On `R` the raw log multipliers coincide with `lam2`, `lam5`.
pub fn augmented_gradient(
    problem: &OcProblem<f64>,
    traj: &Trajectory<f64>,
    lam: &MultiplierSet<f64>,
    var: Var,
    k: usize,
) -> f64 {
    let eps = 1e-6;
    let j = |t: &Trajectory<f64>| augmented_cost(problem, t, lam, &lam.lam2, &lam.lam5).unwrap();
    (j(&shifted(traj, var, k, eps)) - j(&shifted(traj, var, k, -eps))) / (2.0 * eps)
}

/// Worst `|fd - residual| / max(|residual|, 1)` over every variable of the
/// toy problem with horizon `n`, for `trials` random points. Returns the
/// worst value and the number of comparisons.
pub fn toy_gradient_error(n: usize, h: f64, seed: u64, trials: usize) -> (f64, usize) {
    let problem = toy_problem(n, h);
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for _ in 0..trials {
        let traj = line_trajectory(&problem, &mut r);
        let lam = random_multipliers(&problem, &mut r, 1.0);
        let res = kkt_residual(&problem, &traj, &lam).unwrap();
        let mut check = |var: Var, k: usize, want: f64| {
            let fd = augmented_gradient(&problem, &traj, &lam, var, k);
            worst = worst.max((fd - want).abs() / want.abs().max(1.0));
            count += 1;
        };
        let c = |v: &CoAlgebraVector<f64>| v.coords()[0];
        let a = |v: &AlgebraVector<f64>| v.coords()[0];
        for k in 1..n {
            check(Var::Ga, k, c(&res.adjoint_a[k - 1]));
            check(Var::Gu, k, c(&res.adjoint_u[k - 1]));
            check(Var::MuA, k, a(&res.adjoint_lam3[k - 1]));
            check(Var::MuU, k, a(&res.adjoint_lam6[k - 1]));
        }
        for k in 0..n {
            check(Var::Fa, k, c(&res.adjoint_fa[k]));
            check(Var::Fu, k, c(&res.adjoint_fu[k]));
            check(Var::U, k, a(&res.optimality[k]));
        }
    }
    (worst, count)
}

// ---------------------------------------------------------------------------
// the general residual assembly against the hand-written forms

/// Library residuals at stage `k` in the order `(a)..(h)`.
pub fn families_at(res: &KktResidual<f64>, k: usize) -> [Option<f64>; 8] {
    let c = |v: &CoAlgebraVector<f64>| v.coords()[0];
    let a = |v: &AlgebraVector<f64>| v.coords()[0];
    let interior = k > 0;
    [
        interior.then(|| c(&res.adjoint_a[k - 1])),
        interior.then(|| c(&res.adjoint_u[k - 1])),
        Some(c(&res.adjoint_fa[k])),
        Some(c(&res.adjoint_fu[k])),
        interior.then(|| a(&res.adjoint_lam3[k - 1])),
        interior.then(|| a(&res.adjoint_lam6[k - 1])),
        interior.then(|| a(&res.optimality[k])),
        (!interior).then(|| a(&res.optimality[k])),
    ]
}

/// Worst difference between the library residuals and a hand-written form,
/// relative to the largest term `max(1, |lam|) / h` of the stage; `None` if an
/// equation is present on one side only.
pub fn by_hand_mismatch<F>(
    problem: &OcProblem<f64>,
    layout: Layout,
    by_hand: F,
    seed: u64,
    trials: usize,
) -> Option<f64>
where
    F: Fn(&StagePoint) -> [Option<f64>; 8],
{
    let mut r = rng(seed);
    let h = problem.model.step_h();
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let traj = random_trajectory(problem, layout, &mut r);
        let lam = random_multipliers(problem, &mut r, 1.0);
        let res = kkt_residual(problem, &traj, &lam).unwrap();
        for k in 0..problem.horizon {
            let s = stage_point(&traj, &lam, layout, k);
            let scale = s.lam.iter().fold(1.0f64, |m, x| m.max(x.abs())) / h;
            for (l, p) in families_at(&res, k).iter().zip(by_hand(&s)) {
                match (l, p) {
                    (Some(l), Some(p)) => worst = worst.max((l - p).abs() / scale),
                    (None, None) => {}
                    _ => return None,
                }
            }
        }
    }
    Some(worst)
}
