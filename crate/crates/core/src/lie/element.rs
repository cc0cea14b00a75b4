use super::algebra::{AlgebraVector, CoAlgebraVector, Coords};
use super::so3::Rotation;
use super::{GroupDescriptor, LieError};
use crate::scalar::Real;

/// Point on one of the supported matrix Lie groups.
#[derive(Debug, Clone, PartialEq)]
pub enum GroupElement<T> {
    RealLine(Coords<T>),
    /// Angle wrapped to `(-pi, pi]`.
    Circle(T),
    So3(Rotation<T>),
    Product(Vec<GroupElement<T>>),
}

/// Wraps an angle into `(-pi, pi]`.
pub(crate) fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::PI() + T::PI();
    if a > -T::PI() && a <= T::PI() {
        return a;
    }
    let mut r = a % two_pi;
    if r <= -T::PI() {
        r = r + two_pi;
    } else if r > T::PI() {
        r = r - two_pi;
    }
    r
}

impl<T: Real> GroupElement<T> {
    pub fn real_line(coords: &[T]) -> Self {
        GroupElement::RealLine(coords.iter().copied().collect())
    }

    pub fn circle(angle: T) -> Self {
        GroupElement::Circle(wrap_angle(angle))
    }

    pub fn rotation(r: Rotation<T>) -> Self {
        GroupElement::So3(r)
    }

    pub fn descriptor(&self) -> GroupDescriptor {
        match self {
            GroupElement::RealLine(c) => GroupDescriptor::RealLine(c.len()),
            GroupElement::Circle(_) => GroupDescriptor::Circle,
            GroupElement::So3(_) => GroupDescriptor::So3,
            GroupElement::Product(f) => GroupDescriptor::Product(f.iter().map(|e| e.descriptor()).collect()),
        }
    }

    pub fn identity(group: &GroupDescriptor) -> Self {
        match group {
            GroupDescriptor::RealLine(n) => GroupElement::RealLine(std::iter::repeat_n(T::zero(), *n).collect()),
            GroupDescriptor::Circle => GroupElement::Circle(T::zero()),
            GroupDescriptor::So3 => GroupElement::So3(Rotation::identity()),
            GroupDescriptor::Product(f) => GroupElement::Product(f.iter().map(Self::identity).collect()),
        }
    }

    /// Canonical coordinates for abelian groups: the translation vector or the
    /// angle. `None` for groups without such a chart.
    pub fn abelian_coords(&self) -> Option<Coords<T>> {
        match self {
            GroupElement::RealLine(c) => Some(c.clone()),
            GroupElement::Circle(a) => Some(std::iter::once(*a).collect()),
            GroupElement::So3(_) => None,
            GroupElement::Product(f) => {
                let mut out = Coords::new();
                for e in f {
                    out.extend(e.abelian_coords()?);
                }
                Some(out)
            }
        }
    }

    /// Scalar coordinate of a one-dimensional abelian element.
    pub fn scalar(&self) -> Option<T> {
        match self {
            GroupElement::RealLine(c) if c.len() == 1 => Some(c[0]),
            GroupElement::Circle(a) => Some(*a),
            _ => None,
        }
    }

    /// Factor `i` of a product element.
    pub fn factor(&self, i: usize) -> Option<&GroupElement<T>> {
        match self {
            GroupElement::Product(f) => f.get(i),
            _ => None,
        }
    }

    /// Replaces factor `i` of a product element.
    pub fn with_factor(&self, i: usize, value: GroupElement<T>) -> Result<Self, LieError> {
        match self {
            GroupElement::Product(f) if i < f.len() => {
                f[i].descriptor().ensure_same(&value.descriptor())?;
                let mut f = f.clone();
                f[i] = value;
                Ok(GroupElement::Product(f))
            }
            other => Err(LieError::NotProduct(other.descriptor().name())),
        }
    }

    /// Group product `self * other`.
    pub fn compose(&self, other: &Self) -> Result<Self, LieError> {
        match (self, other) {
            (GroupElement::RealLine(a), GroupElement::RealLine(b)) if a.len() == b.len() => {
                Ok(GroupElement::RealLine(a.iter().zip(b).map(|(&x, &y)| x + y).collect()))
            }
            (GroupElement::Circle(a), GroupElement::Circle(b)) => Ok(GroupElement::Circle(wrap_angle(*a + *b))),
            (GroupElement::So3(a), GroupElement::So3(b)) => Ok(GroupElement::So3(a.compose(b))),
            (GroupElement::Product(a), GroupElement::Product(b)) if a.len() == b.len() => Ok(GroupElement::Product(
                a.iter().zip(b).map(|(x, y)| x.compose(y)).collect::<Result<_, _>>()?,
            )),
            _ => Err(LieError::GroupMismatch {
                left: self.descriptor().name(),
                right: other.descriptor().name(),
            }),
        }
    }

    pub fn inverse(&self) -> Self {
        match self {
            GroupElement::RealLine(a) => GroupElement::RealLine(a.iter().map(|&x| -x).collect()),
            GroupElement::Circle(a) => GroupElement::Circle(wrap_angle(-*a)),
            GroupElement::So3(r) => GroupElement::So3(r.inverse()),
            GroupElement::Product(f) => GroupElement::Product(f.iter().map(|e| e.inverse()).collect()),
        }
    }

    /// Group exponential of an algebra vector.
    pub fn exp(x: &AlgebraVector<T>) -> Self {
        Self::exp_coords(x.group(), x.coords())
    }

    fn exp_coords(group: &GroupDescriptor, c: &[T]) -> Self {
        match group {
            GroupDescriptor::RealLine(_) => GroupElement::RealLine(c.iter().copied().collect()),
            GroupDescriptor::Circle => GroupElement::Circle(wrap_angle(c[0])),
            GroupDescriptor::So3 => GroupElement::So3(Rotation::exp(&[c[0], c[1], c[2]])),
            GroupDescriptor::Product(factors) => GroupElement::Product(
                factors
                    .iter()
                    .zip(group.factor_ranges())
                    .map(|(f, r)| Self::exp_coords(f, &c[r]))
                    .collect(),
            ),
        }
    }

    /// Principal logarithm.
    pub fn log(&self) -> Result<AlgebraVector<T>, LieError> {
        let mut coords = Coords::new();
        self.log_into(&mut coords)?;
        Ok(AlgebraVector::from_coords(self.descriptor(), coords))
    }

    fn log_into(&self, out: &mut Coords<T>) -> Result<(), LieError> {
        match self {
            GroupElement::RealLine(a) => out.extend(a.iter().copied()),
            GroupElement::Circle(a) => out.push(*a),
            GroupElement::So3(r) => out.extend(r.log()?),
            GroupElement::Product(f) => {
                for e in f {
                    e.log_into(out)?;
                }
            }
        }
        Ok(())
    }

    /// `self * exp(xi)`, the right perturbation used by every variation.
    pub fn perturb(&self, xi: &AlgebraVector<T>) -> Result<Self, LieError> {
        self.compose(&Self::exp(xi))
    }

    /// `log(self^-1 * other)`.
    pub fn local_log(&self, other: &Self) -> Result<AlgebraVector<T>, LieError> {
        self.inverse().compose(other)?.log()
    }

    /// Adjoint action `Ad_g xi`.
    pub fn adjoint(&self, xi: &AlgebraVector<T>) -> Result<AlgebraVector<T>, LieError> {
        let group = self.descriptor();
        group.ensure_same(xi.group())?;
        let mut out = xi.clone();
        self.act(xi.coords(), out.coords_mut(), false);
        Ok(out)
    }

    /// Coadjoint action `Ad*_g alpha`, the dual of [`Self::adjoint`].
    pub fn coadjoint(&self, alpha: &CoAlgebraVector<T>) -> Result<CoAlgebraVector<T>, LieError> {
        let group = self.descriptor();
        group.ensure_same(alpha.group())?;
        let mut out = alpha.clone();
        self.act(alpha.coords(), out.coords_mut(), true);
        Ok(out)
    }

    fn act(&self, v: &[T], out: &mut [T], dual: bool) {
        match self {
            GroupElement::RealLine(_) | GroupElement::Circle(_) => out.copy_from_slice(v),
            GroupElement::So3(r) => {
                let w = [v[0], v[1], v[2]];
                let res = if dual { r.apply_transpose(&w) } else { r.apply(&w) };
                out.copy_from_slice(&res);
            }
            GroupElement::Product(f) => {
                let mut start = 0;
                for e in f {
                    let d = e.descriptor().algebra_dim();
                    e.act(&v[start..start + d], &mut out[start..start + d], dual);
                    start += d;
                }
            }
        }
    }

    /// Checks the defining constraint of the group to the given tolerance.
    pub fn satisfies_constraint(&self, tol: T) -> bool {
        match self {
            GroupElement::RealLine(c) => c.iter().all(|x| x.is_finite()),
            GroupElement::Circle(a) => a.is_finite() && *a > -T::PI() && *a <= T::PI(),
            GroupElement::So3(r) => r.orthogonality_error() <= tol && (r.determinant() - T::one()).abs() <= tol,
            GroupElement::Product(f) => f.iter().all(|e| e.satisfies_constraint(tol)),
        }
    }
}

/// Splits an element of a two-factor product into its factors.
pub fn product_split<T: Real>(g: &GroupElement<T>) -> Result<(GroupElement<T>, GroupElement<T>), LieError> {
    match g {
        GroupElement::Product(f) if f.len() == 2 => Ok((f[0].clone(), f[1].clone())),
        other => Err(LieError::NotProduct(other.descriptor().name())),
    }
}

/// Inverse of [`product_split`].
pub fn product_join<T: Real>(a: GroupElement<T>, u: GroupElement<T>) -> GroupElement<T> {
    GroupElement::Product(vec![a, u])
}
