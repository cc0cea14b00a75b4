//! Rotation matrices: Rodrigues exponential, principal logarithm and
//! polar re-orthonormalization.

use super::LieError;
use crate::scalar::Real;

/// Number of compositions after which a rotation is projected back onto SO(3).
pub const REORTHONORMALIZE_EVERY: u32 = 100;

pub type Mat3<T> = [[T; 3]; 3];

/// Element of SO(3) stored as a rotation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation<T> {
    matrix: Mat3<T>,
    // compositions since the last projection
    composes: u32,
}

impl<T: Real> Rotation<T> {
    pub fn identity() -> Self {
        Self {
            matrix: identity3(),
            composes: 0,
        }
    }

    /// Wraps a matrix that is already orthonormal.
    pub fn from_matrix(matrix: Mat3<T>) -> Self {
        Self { matrix, composes: 0 }
    }

    /// Projects an arbitrary nonsingular matrix onto the nearest rotation.
    pub fn from_matrix_projected(matrix: Mat3<T>) -> Self {
        Self {
            matrix: polar(&matrix),
            composes: 0,
        }
    }

    pub fn matrix(&self) -> &Mat3<T> {
        &self.matrix
    }

    pub fn compose(&self, other: &Self) -> Self {
        let matrix = mul(&self.matrix, &other.matrix);
        let composes = self.composes.max(other.composes) + 1;
        if composes >= REORTHONORMALIZE_EVERY {
            Self {
                matrix: polar(&matrix),
                composes: 0,
            }
        } else {
            Self { matrix, composes }
        }
    }

    pub fn inverse(&self) -> Self {
        Self {
            matrix: transpose(&self.matrix),
            composes: self.composes,
        }
    }

    pub fn apply(&self, v: &[T; 3]) -> [T; 3] {
        mat_vec(&self.matrix, v)
    }

    pub fn apply_transpose(&self, v: &[T; 3]) -> [T; 3] {
        mat_vec(&transpose(&self.matrix), v)
    }

    /// `max |R^T R - I|` entrywise.
    pub fn orthogonality_error(&self) -> T {
        let rtr = mul(&transpose(&self.matrix), &self.matrix);
        let id = identity3::<T>();
        let mut err = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                err = err.max((rtr[i][j] - id[i][j]).abs());
            }
        }
        err
    }

    pub fn determinant(&self) -> T {
        det(&self.matrix)
    }

    /// Rodrigues formula with a series fallback near the identity.
    pub fn exp(w: &[T; 3]) -> Self {
        let theta2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
        let theta = theta2.sqrt();
        let (a, b) = if theta < T::lit(1e-4) {
            (
                T::one() - theta2 / T::lit(6.0) + theta2 * theta2 / T::lit(120.0),
                T::lit(0.5) - theta2 / T::lit(24.0) + theta2 * theta2 / T::lit(720.0),
            )
        } else {
            (theta.sin() / theta, (T::one() - theta.cos()) / theta2)
        };
        let k = hat(w);
        let k2 = mul(&k, &k);
        let mut m = identity3();
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = m[i][j] + a * k[i][j] + b * k2[i][j];
            }
        }
        Self::from_matrix(m)
    }

    /// Principal logarithm; fails at (or numerically at) rotation angle pi.
    pub fn log(&self) -> Result<[T; 3], LieError> {
        let r = &self.matrix;
        let trace = r[0][0] + r[1][1] + r[2][2];
        let cos_t = ((trace - T::one()) * T::lit(0.5)).max(-T::one()).min(T::one());
        // sin(theta) * axis
        let v = [
            (r[2][1] - r[1][2]) * T::lit(0.5),
            (r[0][2] - r[2][0]) * T::lit(0.5),
            (r[1][0] - r[0][1]) * T::lit(0.5),
        ];
        let sin_t = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let theta = sin_t.atan2(cos_t);
        if T::PI() - theta < T::lit(1e-8) {
            return Err(LieError::Domain(format!(
                "rotation angle {theta} is at the injectivity boundary of log"
            )));
        }
        if theta < T::lit(1e-4) {
            let t2 = theta * theta;
            let s = T::one() + t2 / T::lit(6.0) + T::lit(7.0) * t2 * t2 / T::lit(360.0);
            return Ok([v[0] * s, v[1] * s, v[2] * s]);
        }
        if cos_t > T::lit(-0.9) {
            let s = theta / sin_t;
            return Ok([v[0] * s, v[1] * s, v[2] * s]);
        }
        // Near pi the skew part is small; recover the axis from the symmetric part.
        let one_minus_cos = T::one() - cos_t;
        let mut b = [[T::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i][j] = (r[i][j] + r[j][i]) * T::lit(0.5) / one_minus_cos;
            }
            b[i][i] = b[i][i] - cos_t / one_minus_cos;
        }
        let mut p = 0;
        for i in 1..3 {
            if b[i][i] > b[p][p] {
                p = i;
            }
        }
        let ap = b[p][p].max(T::zero()).sqrt();
        let mut axis = [T::zero(); 3];
        for i in 0..3 {
            axis[i] = if i == p { ap } else { b[p][i] / ap };
        }
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let sign = if axis[0] * v[0] + axis[1] * v[1] + axis[2] * v[2] < T::zero() {
            -T::one()
        } else {
            T::one()
        };
        let s = sign * theta / norm;
        Ok([axis[0] * s, axis[1] * s, axis[2] * s])
    }
}

pub fn hat<T: Real>(w: &[T; 3]) -> Mat3<T> {
    let z = T::zero();
    [[z, -w[2], w[1]], [w[2], z, -w[0]], [-w[1], w[0], z]]
}

pub fn vee<T: Real>(m: &Mat3<T>) -> [T; 3] {
    [m[2][1], m[0][2], m[1][0]]
}

pub(crate) fn cross<T: Real>(a: &[T; 3], b: &[T; 3]) -> [T; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn identity3<T: Real>() -> Mat3<T> {
    let (o, z) = (T::one(), T::zero());
    [[o, z, z], [z, o, z], [z, z, o]]
}

pub(crate) fn mul<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut c = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    c
}

pub(crate) fn mat_vec<T: Real>(a: &Mat3<T>, v: &[T; 3]) -> [T; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub(crate) fn transpose<T: Real>(a: &Mat3<T>) -> Mat3<T> {
    let mut t = *a;
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = a[j][i];
        }
    }
    t
}

fn det<T: Real>(a: &Mat3<T>) -> T {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

fn inverse_transpose<T: Real>(a: &Mat3<T>) -> Mat3<T> {
    // cofactor matrix divided by the determinant
    let d = det(a);
    let mut c = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
            let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
            c[i][j] = (a[i1][j1] * a[i2][j2] - a[i1][j2] * a[i2][j1]) / d;
        }
    }
    c
}

/// Orthogonal polar factor by the Newton iteration `X <- (X + X^-T) / 2`.
fn polar<T: Real>(m: &Mat3<T>) -> Mat3<T> {
    let mut x = *m;
    for _ in 0..20 {
        let it = inverse_transpose(&x);
        let mut next = x;
        let mut delta = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                next[i][j] = (x[i][j] + it[i][j]) * T::lit(0.5);
                delta = delta.max((next[i][j] - x[i][j]).abs());
            }
        }
        x = next;
        if delta <= T::epsilon() * T::lit(4.0) {
            break;
        }
    }
    x
}
