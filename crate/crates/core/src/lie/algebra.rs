use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use smallvec::SmallVec;

use super::{so3, GroupDescriptor, LieError};
use crate::scalar::Real;

/// Coordinate storage for algebra and dual vectors.
pub type Coords<T> = SmallVec<[T; 4]>;

macro_rules! vector_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name<T> {
            group: GroupDescriptor,
            coords: Coords<T>,
        }

        impl<T: Real> $name<T> {
            /// Builds a vector from coordinates, checking the length.
            pub fn new(group: GroupDescriptor, coords: &[T]) -> Result<Self, LieError> {
                let expected = group.algebra_dim();
                if coords.len() != expected {
                    return Err(LieError::Dimension {
                        group: group.name(),
                        expected,
                        got: coords.len(),
                    });
                }
                Ok(Self { group, coords: coords.iter().copied().collect() })
            }

            pub(crate) fn from_coords(group: GroupDescriptor, coords: Coords<T>) -> Self {
                debug_assert_eq!(coords.len(), group.algebra_dim());
                Self { group, coords }
            }

            pub fn zeros(group: &GroupDescriptor) -> Self {
                let coords = std::iter::repeat(T::zero()).take(group.algebra_dim()).collect();
                Self { group: group.clone(), coords }
            }

            /// The `i`-th basis vector.
            pub fn basis(group: &GroupDescriptor, i: usize) -> Self {
                let mut v = Self::zeros(group);
                v.coords[i] = T::one();
                v
            }

            /// Scalar shorthand for one-dimensional groups.
            pub fn scalar(group: &GroupDescriptor, x: T) -> Self {
                assert_eq!(group.algebra_dim(), 1, "scalar() needs a one-dimensional algebra");
                Self { group: group.clone(), coords: std::iter::once(x).collect() }
            }

            pub fn group(&self) -> &GroupDescriptor {
                &self.group
            }

            pub fn coords(&self) -> &[T] {
                &self.coords
            }

            pub fn coords_mut(&mut self) -> &mut [T] {
                &mut self.coords
            }

            pub fn dim(&self) -> usize {
                self.coords.len()
            }

            pub fn norm(&self) -> T {
                self.coords.iter().map(|&c| c * c).sum::<T>().sqrt()
            }

            pub fn norm_inf(&self) -> T {
                self.coords.iter().fold(T::zero(), |m, &c| m.max(c.abs()))
            }

            pub fn scale(&self, s: T) -> Self {
                Self {
                    group: self.group.clone(),
                    coords: self.coords.iter().map(|&c| c * s).collect(),
                }
            }

            /// Sub-vector belonging to one factor of a product group.
            pub fn factor(&self, index: usize) -> Self {
                match &self.group {
                    GroupDescriptor::Product(factors) => {
                        let range = self.group.factor_ranges()[index].clone();
                        Self {
                            group: factors[index].clone(),
                            coords: self.coords[range].iter().copied().collect(),
                        }
                    }
                    _ => {
                        assert_eq!(index, 0, "non-product group has a single factor");
                        self.clone()
                    }
                }
            }

            pub fn checked_add(&self, other: &Self) -> Result<Self, LieError> {
                self.group.ensure_same(&other.group)?;
                Ok(Self {
                    group: self.group.clone(),
                    coords: self.coords.iter().zip(&other.coords).map(|(&a, &b)| a + b).collect(),
                })
            }

            pub fn checked_sub(&self, other: &Self) -> Result<Self, LieError> {
                self.checked_add(&-other)
            }
        }

        impl<T: Real> Add for &$name<T> {
            type Output = $name<T>;

            /// Panics when the operands live on different groups.
            fn add(self, rhs: Self) -> $name<T> {
                self.checked_add(rhs).expect("vector addition across groups")
            }
        }

        impl<T: Real> Add for $name<T> {
            type Output = $name<T>;
            fn add(self, rhs: Self) -> $name<T> {
                &self + &rhs
            }
        }

        impl<T: Real> AddAssign<&$name<T>> for $name<T> {
            fn add_assign(&mut self, rhs: &$name<T>) {
                assert_eq!(self.group, rhs.group, "vector addition across groups");
                for (a, &b) in self.coords.iter_mut().zip(&rhs.coords) {
                    *a = *a + b;
                }
            }
        }

        impl<T: Real> Sub for &$name<T> {
            type Output = $name<T>;
            fn sub(self, rhs: Self) -> $name<T> {
                self.checked_sub(rhs).expect("vector subtraction across groups")
            }
        }

        impl<T: Real> Sub for $name<T> {
            type Output = $name<T>;
            fn sub(self, rhs: Self) -> $name<T> {
                &self - &rhs
            }
        }

        impl<T: Real> Neg for &$name<T> {
            type Output = $name<T>;
            fn neg(self) -> $name<T> {
                self.scale(-T::one())
            }
        }

        impl<T: Real> Neg for $name<T> {
            type Output = $name<T>;
            fn neg(self) -> $name<T> {
                self.scale(-T::one())
            }
        }

        impl<T: Real> Mul<T> for &$name<T> {
            type Output = $name<T>;
            fn mul(self, s: T) -> $name<T> {
                self.scale(s)
            }
        }

        impl<T: Real> Mul<T> for $name<T> {
            type Output = $name<T>;
            fn mul(self, s: T) -> $name<T> {
                self.scale(s)
            }
        }
    };
}

vector_type!(
    /// Tangent vector at the identity, in the fixed algebra basis.
    AlgebraVector
);

vector_type!(
    /// Momentum-type dual vector, in the basis dual to the algebra basis.
    CoAlgebraVector
);

/// Dual pairing `<alpha, xi>`; the coordinate dot product by construction.
pub fn pair<T: Real>(alpha: &CoAlgebraVector<T>, xi: &AlgebraVector<T>) -> Result<T, LieError> {
    alpha.group().ensure_same(xi.group())?;
    Ok(alpha.coords().iter().zip(xi.coords()).map(|(&a, &x)| a * x).sum())
}

/// Bracket `ad_eta xi = [eta, xi]`.
pub fn ad<T: Real>(eta: &AlgebraVector<T>, xi: &AlgebraVector<T>) -> Result<AlgebraVector<T>, LieError> {
    eta.group().ensure_same(xi.group())?;
    let mut out = AlgebraVector::zeros(eta.group());
    bracket_into(eta.group(), eta.coords(), xi.coords(), out.coords_mut(), false);
    Ok(out)
}

/// Dual of the bracket: `<coad(eta, alpha), xi> = <alpha, ad(eta, xi)>`.
pub fn coad<T: Real>(eta: &AlgebraVector<T>, alpha: &CoAlgebraVector<T>) -> Result<CoAlgebraVector<T>, LieError> {
    eta.group().ensure_same(alpha.group())?;
    let mut out = CoAlgebraVector::zeros(eta.group());
    bracket_into(eta.group(), eta.coords(), alpha.coords(), out.coords_mut(), true);
    Ok(out)
}

// `dual == false`: out = eta x v; `dual == true`: out = v x eta.
pub(crate) fn bracket_into<T: Real>(group: &GroupDescriptor, eta: &[T], v: &[T], out: &mut [T], dual: bool) {
    match group {
        GroupDescriptor::RealLine(_) | GroupDescriptor::Circle => {
            out.iter_mut().for_each(|o| *o = T::zero());
        }
        GroupDescriptor::So3 => {
            let e = [eta[0], eta[1], eta[2]];
            let w = [v[0], v[1], v[2]];
            let c = if dual { so3::cross(&w, &e) } else { so3::cross(&e, &w) };
            out.copy_from_slice(&c);
        }
        GroupDescriptor::Product(factors) => {
            for (factor, range) in factors.iter().zip(group.factor_ranges()) {
                bracket_into(factor, &eta[range.clone()], &v[range.clone()], &mut out[range], dual);
            }
        }
    }
}
