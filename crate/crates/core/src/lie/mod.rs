//! Matrix Lie group kernel.
//!
//! Groups are described by a [`GroupDescriptor`]; elements, algebra vectors
//! and dual vectors carry enough information to recover the group they live
//! on, and every binary operation checks that its operands agree.
//!
//! Coordinates conventions:
//!
//! * `R^n` uses the standard basis, the group law is addition.
//! * `S^1` is stored as an angle wrapped to `(-pi, pi]`; its algebra has the
//!   single generator `d/dtheta`.
//! * `SO(3)` uses the skew generators through the hat/vee isomorphism.
//! * products concatenate factor coordinates in factor order.
//!
//! The dual basis is biorthogonal to the algebra basis, so every pairing
//! `<alpha, xi>` is the Euclidean dot product of the coordinate vectors.

mod algebra;
mod dexp;
mod element;
mod so3;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use algebra::{ad, coad, pair, AlgebraVector, CoAlgebraVector, Coords};
pub use dexp::{bernoulli_series_coefficients, dexp_op, dexp_transpose, dexpinv_matrix, dexpinv_op, dexpinv_transpose};
pub use element::{product_join, product_split, GroupElement};
pub use so3::{hat, vee, Rotation, REORTHONORMALIZE_EVERY};

/// Errors raised by the Lie-group kernel.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LieError {
    #[error("group mismatch: {left} vs {right}")]
    GroupMismatch { left: String, right: String },
    #[error("expected {expected} coordinates for {group}, got {got}")]
    Dimension { group: String, expected: usize, got: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("{0} is not a two-factor product group")]
    NotProduct(String),
}

/// Structure of a supported matrix Lie group.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupDescriptor {
    /// Translation group `R^n`.
    RealLine(usize),
    /// The circle `S^1`.
    Circle,
    /// Rotations of 3-space.
    So3,
    /// Direct product of the listed factors.
    Product(Vec<GroupDescriptor>),
}

impl GroupDescriptor {
    /// Dimension of the Lie algebra.
    pub fn algebra_dim(&self) -> usize {
        match self {
            GroupDescriptor::RealLine(n) => *n,
            GroupDescriptor::Circle => 1,
            GroupDescriptor::So3 => 3,
            GroupDescriptor::Product(factors) => factors.iter().map(|f| f.algebra_dim()).sum(),
        }
    }

    /// True when the group law is commutative (Ad is the identity).
    pub fn is_abelian(&self) -> bool {
        match self {
            GroupDescriptor::RealLine(_) | GroupDescriptor::Circle => true,
            GroupDescriptor::So3 => false,
            GroupDescriptor::Product(factors) => factors.iter().all(|f| f.is_abelian()),
        }
    }

    /// Short human readable name, e.g. `S1xR1`.
    pub fn name(&self) -> String {
        match self {
            GroupDescriptor::RealLine(n) => format!("R{n}"),
            GroupDescriptor::Circle => "S1".to_string(),
            GroupDescriptor::So3 => "SO3".to_string(),
            GroupDescriptor::Product(factors) => factors.iter().map(|f| f.name()).collect::<Vec<_>>().join("x"),
        }
    }

    /// Coordinate ranges of each product factor inside the concatenated
    /// algebra coordinates. A non-product group is its own single factor.
    pub fn factor_ranges(&self) -> Vec<std::ops::Range<usize>> {
        match self {
            GroupDescriptor::Product(factors) => {
                let mut start = 0;
                factors
                    .iter()
                    .map(|f| {
                        let r = start..start + f.algebra_dim();
                        start = r.end;
                        r
                    })
                    .collect()
            }
            other => vec![0..other.algebra_dim()],
        }
    }

    pub(crate) fn ensure_same(&self, other: &GroupDescriptor) -> Result<(), LieError> {
        if self == other {
            Ok(())
        } else {
            Err(LieError::GroupMismatch {
                left: self.name(),
                right: other.name(),
            })
        }
    }
}

impl std::fmt::Display for GroupDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}
