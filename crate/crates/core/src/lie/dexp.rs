//! The operator `ad_X / (1 - exp(-ad_X))` and its inverse.
//!
//! `dexpinv_op(X, v)` is the linear map relating variations of `log g` to
//! right-trivialized variations of `g = exp X`. It is evaluated from the
//! Bernoulli series `sum_n B+_n / n! ad_X^n`, whose radius of convergence is
//! `2 pi` in the spectral radius of `ad_X`.

use super::algebra::{bracket_into, AlgebraVector, CoAlgebraVector};
use super::{GroupDescriptor, LieError};
use crate::linalg::Mat;
use crate::scalar::Real;

const MAX_TERMS: usize = 4000;

/// The series coefficients `B+_n / n!` for `n = 0..n_terms`, with `B+_1 = 1/2`.
pub fn bernoulli_series_coefficients<T: Real>(n_terms: usize) -> Vec<T> {
    (0..n_terms).map(|n| T::lit(coefficient(n))).collect()
}

fn coefficient(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 0.5,
        n if n % 2 == 1 => 0.0,
        n => {
            let k = (n / 2) as i32;
            let two_pi = 2.0 * std::f64::consts::PI;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * 2.0 * zeta_even(k) / two_pi.powi(2 * k)
        }
    }
}

// zeta(2k); closed forms for small k, otherwise the rapidly converging sum
fn zeta_even(k: i32) -> f64 {
    let pi = std::f64::consts::PI;
    match k {
        1 => pi.powi(2) / 6.0,
        2 => pi.powi(4) / 90.0,
        3 => pi.powi(6) / 945.0,
        4 => pi.powi(8) / 9450.0,
        _ => {
            let mut s = 0.0;
            for m in (1..=40).rev() {
                s += (m as f64).powi(-2 * k);
            }
            s
        }
    }
}

fn check_domain<T: Real>(x: &AlgebraVector<T>) -> Result<(), LieError> {
    let limit = T::PI() + T::PI();
    for (factor, range) in factors(x.group()) {
        if factor == GroupDescriptor::So3 {
            let c = &x.coords()[range];
            let norm = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
            if norm >= limit {
                return Err(LieError::Domain(format!(
                    "|X| = {norm} is outside the convergence domain |X| < 2 pi"
                )));
            }
        }
    }
    Ok(())
}

fn factors(group: &GroupDescriptor) -> Vec<(GroupDescriptor, std::ops::Range<usize>)> {
    match group {
        GroupDescriptor::Product(fs) => fs
            .iter()
            .zip(group.factor_ranges())
            .flat_map(|(f, r)| {
                factors(f)
                    .into_iter()
                    .map(move |(g, inner)| (g, inner.start + r.start..inner.end + r.start))
            })
            .collect(),
        other => vec![(other.clone(), 0..other.algebra_dim())],
    }
}

// sum_n c(n) L^n v with L = ad_X (dual = false) or its transpose coad_X (dual = true)
fn series<T: Real>(x: &AlgebraVector<T>, v: &[T], dual: bool, coeff: impl Fn(usize) -> T) -> Vec<T> {
    let group = x.group();
    let mut out = v.to_vec();
    if group.is_abelian() {
        return out;
    }
    let vnorm = v.iter().map(|&a| a * a).sum::<T>().sqrt();
    let threshold = T::lit(1e-15).max(T::epsilon() * vnorm);
    let mut power = v.to_vec();
    let mut next = vec![T::zero(); v.len()];
    for n in 1..MAX_TERMS {
        bracket_into(group, x.coords(), &power, &mut next, dual);
        std::mem::swap(&mut power, &mut next);
        let pnorm = power.iter().map(|&a| a * a).sum::<T>().sqrt();
        if pnorm == T::zero() {
            break;
        }
        let c = coeff(n);
        if c == T::zero() {
            continue;
        }
        for (o, &p) in out.iter_mut().zip(&power) {
            *o = *o + c * p;
        }
        if (c * pnorm).abs() < threshold && n >= 2 {
            break;
        }
    }
    out
}

fn bernoulli<T: Real>(n: usize) -> T {
    T::lit(coefficient(n))
}

// coefficients (-1)^n / (n+1)! of the inverse series
fn inverse_coeff<T: Real>(n: usize) -> T {
    let mut f = 1.0;
    for m in 2..=n + 1 {
        f *= m as f64;
    }
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    T::lit(sign / f)
}

/// `ad_X / (1 - exp(-ad_X))` applied to `v`. Identity on abelian groups.
pub fn dexpinv_op<T: Real>(x: &AlgebraVector<T>, v: &AlgebraVector<T>) -> Result<AlgebraVector<T>, LieError> {
    x.group().ensure_same(v.group())?;
    check_domain(x)?;
    let c = series(x, v.coords(), false, bernoulli::<T>);
    Ok(AlgebraVector::from_coords(x.group().clone(), c.into_iter().collect()))
}

/// Transpose of [`dexpinv_op`] acting on dual vectors.
pub fn dexpinv_transpose<T: Real>(
    x: &AlgebraVector<T>,
    alpha: &CoAlgebraVector<T>,
) -> Result<CoAlgebraVector<T>, LieError> {
    x.group().ensure_same(alpha.group())?;
    check_domain(x)?;
    let c = series(x, alpha.coords(), true, bernoulli::<T>);
    Ok(CoAlgebraVector::from_coords(x.group().clone(), c.into_iter().collect()))
}

/// Inverse of [`dexpinv_op`]: `(1 - exp(-ad_X)) / ad_X` applied to `v`.
/// Entire in `X`, so no domain restriction.
pub fn dexp_op<T: Real>(x: &AlgebraVector<T>, v: &AlgebraVector<T>) -> Result<AlgebraVector<T>, LieError> {
    x.group().ensure_same(v.group())?;
    let c = series(x, v.coords(), false, inverse_coeff::<T>);
    Ok(AlgebraVector::from_coords(x.group().clone(), c.into_iter().collect()))
}

/// Transpose of [`dexp_op`] acting on dual vectors.
pub fn dexp_transpose<T: Real>(
    x: &AlgebraVector<T>,
    alpha: &CoAlgebraVector<T>,
) -> Result<CoAlgebraVector<T>, LieError> {
    x.group().ensure_same(alpha.group())?;
    let c = series(x, alpha.coords(), true, inverse_coeff::<T>);
    Ok(CoAlgebraVector::from_coords(x.group().clone(), c.into_iter().collect()))
}

/// Matrix of [`dexpinv_op`] in the algebra basis.
pub fn dexpinv_matrix<T: Real>(x: &AlgebraVector<T>) -> Result<Mat<T>, LieError> {
    let group = x.group();
    let n = group.algebra_dim();
    let columns = (0..n)
        .map(|i| dexpinv_op(x, &AlgebraVector::basis(group, i)).map(|c| c.coords().to_vec()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Mat::from_columns(n, &columns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::ad;

    fn so3(c: [f64; 3]) -> AlgebraVector<f64> {
        AlgebraVector::new(GroupDescriptor::So3, &c).unwrap()
    }

    // B_0..B_22 as exact rationals
    const BERNOULLI: [(f64, f64); 12] = [
        (1.0, 1.0),
        (1.0, 6.0),
        (-1.0, 30.0),
        (1.0, 42.0),
        (-1.0, 30.0),
        (5.0, 66.0),
        (-691.0, 2730.0),
        (7.0, 6.0),
        (-3617.0, 510.0),
        (43867.0, 798.0),
        (-174611.0, 330.0),
        (854513.0, 138.0),
    ];

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|m| m as f64).product()
    }

    #[test]
    fn coefficients_match_rational_bernoulli_numbers() {
        let c = bernoulli_series_coefficients::<f64>(23);
        assert_eq!(c[1], 0.5);
        for (k, &(p, q)) in BERNOULLI.iter().enumerate().skip(1) {
            let expected = p / q / factorial(2 * k);
            assert!((c[2 * k] - expected).abs() <= 1e-14 * expected.abs(), "k={k}");
        }
        for n in (3..23).step_by(2) {
            assert_eq!(c[n], 0.0);
        }
    }

    #[test]
    fn zero_argument_is_identity() {
        let v = so3([0.3, -0.2, 1.0]);
        assert_eq!(dexpinv_op(&so3([0.0; 3]), &v).unwrap(), v);
    }

    #[test]
    fn abelian_is_identity() {
        let g = GroupDescriptor::Product(vec![GroupDescriptor::Circle, GroupDescriptor::RealLine(2)]);
        let x = AlgebraVector::new(g.clone(), &[5.0, -100.0, 3.0]).unwrap();
        let v = AlgebraVector::new(g, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(dexpinv_op(&x, &v).unwrap(), v);
    }

    #[test]
    fn twelve_term_rational_series_oracle() {
        let x = so3([0.06, -0.05, 0.05]);
        let v = so3([0.2, 0.7, -0.4]);
        // I + 1/2 ad + sum_{k=1}^{11} B_{2k}/(2k)! ad^{2k}
        let mut power = v.clone();
        let mut oracle = v.clone() + ad(&x, &v).unwrap() * 0.5;
        for (k, &(p, q)) in BERNOULLI.iter().enumerate().skip(1) {
            power = ad(&x, &ad(&x, &power).unwrap()).unwrap();
            oracle = oracle + power.clone() * (p / q / factorial(2 * k));
        }
        let got = dexpinv_op(&x, &v).unwrap();
        assert!((got - oracle).norm_inf() < 1e-12);
    }

    #[test]
    fn closed_form_so3_agrees() {
        let x = so3([1.2, -2.0, 0.7]);
        let v = so3([0.1, 0.4, -0.9]);
        let t = x.norm();
        let c2 = 1.0 / (t * t) - (1.0 + t.cos()) / (2.0 * t * t.sin());
        let adv = ad(&x, &v).unwrap();
        let expected = v.clone() + adv.clone() * 0.5 + ad(&x, &adv).unwrap() * c2;
        assert!((dexpinv_op(&x, &v).unwrap() - expected).norm_inf() < 1e-12);
    }

    #[test]
    fn dexp_inverts_dexpinv() {
        let x = so3([0.9, 1.5, -1.1]);
        let v = so3([0.3, -0.8, 0.5]);
        let w = dexpinv_op(&x, &v).unwrap();
        assert!((dexp_op(&x, &w).unwrap() - v).norm_inf() < 1e-13);
    }

    #[test]
    fn transpose_is_the_dual_map() {
        let x = so3([0.4, -0.3, 0.8]);
        let m = dexpinv_matrix(&x).unwrap();
        let alpha = CoAlgebraVector::new(GroupDescriptor::So3, &[0.5, 1.0, -2.0]).unwrap();
        let expected = m.tr_mul_vec(alpha.coords());
        let got = dexpinv_transpose(&x, &alpha).unwrap();
        for i in 0..3 {
            assert!((got.coords()[i] - expected[i]).abs() < 1e-14);
        }
        let back = dexp_transpose(&x, &got).unwrap();
        assert!((back - alpha).norm_inf() < 1e-13);
    }

    #[test]
    fn outside_convergence_domain_is_an_error() {
        let x = so3([0.0, 0.0, 6.3]);
        assert!(matches!(
            dexpinv_op(&x, &so3([1.0, 0.0, 0.0])),
            Err(LieError::Domain(_))
        ));
    }
}
