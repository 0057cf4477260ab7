//! Rotation-group primitives on SO(3).
//!
//! Everything here is a pure function over small value types. Rotations are
//! stored as plain 3×3 matrices wrapped in [`Rotation`], which is only ever
//! constructed through checked paths (exponential map, polar projection or an
//! explicit invariant check).

use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance on `‖RᵀR − I‖_F` and `|det R − 1|` for a matrix to count as a rotation.
pub const ROTATION_TOL: f64 = 1e-9;

/// Tolerance on `‖M + Mᵀ‖_F` accepted by [`vex`].
pub const ANTISYMMETRY_TOL: f64 = 1e-9;

const SMALL_ANGLE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum So3Error {
    #[error("matrix is not antisymmetric (‖M + Mᵀ‖_F = {0:e})")]
    NotAntisymmetric(f64),
    #[error(
        "cannot project onto SO(3): det = {det:e}, smallest singular value = {min_singular:e}"
    )]
    Degenerate { det: f64, min_singular: f64 },
    #[error("matrix is not a rotation (orthogonality error {orthogonality:e}, det {det})")]
    NotARotation { orthogonality: f64, det: f64 },
}

/// Element of SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Wraps `m` after checking both rotation invariants at [`ROTATION_TOL`].
    pub fn try_from_matrix(m: Mat3) -> Result<Self, So3Error> {
        let orthogonality = orthogonality_error(&m);
        let det = m.determinant();
        if !(orthogonality <= ROTATION_TOL && (det - 1.0).abs() <= ROTATION_TOL) {
            return Err(So3Error::NotARotation { orthogonality, det });
        }
        Ok(Rotation(m))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    /// `‖RᵀR − I‖_F`.
    pub fn orthogonality_error(&self) -> f64 {
        orthogonality_error(&self.0)
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    /// True when both invariants hold within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        self.orthogonality_error() <= tol && (self.determinant() - 1.0).abs() <= tol
    }

    /// Row-major entries, the order used in every CSV log.
    pub fn row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for Rotation {
    type Output = Vec3;

    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl Mul<&Vec3> for &Rotation {
    type Output = Vec3;

    fn mul(self, rhs: &Vec3) -> Vec3 {
        self.0 * rhs
    }
}

fn orthogonality_error(m: &Mat3) -> f64 {
    (m.transpose() * m - Mat3::identity()).norm()
}

/// `[v]×`, so that `skew(v) * w == v.cross(&w)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`]; rejects inputs that are not antisymmetric.
pub fn vex(m: &Mat3) -> Result<Vec3, So3Error> {
    let asym = (m + m.transpose()).norm();
    if !(asym <= ANTISYMMETRY_TOL) {
        return Err(So3Error::NotAntisymmetric(asym));
    }
    Ok(Vec3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)]))
}

/// `vex` of the antisymmetric part of `a`.
pub fn psi_a(a: &Mat3) -> Vec3 {
    0.5 * Vec3::new(
        a[(2, 1)] - a[(1, 2)],
        a[(0, 2)] - a[(2, 0)],
        a[(1, 0)] - a[(0, 1)],
    )
}

/// Exponential map (Rodrigues formula).
pub fn exp_so3(v: &Vec3) -> Rotation {
    let theta_sq = v.norm_squared();
    let theta = theta_sq.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta_sq / 6.0, 0.5 - theta_sq / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta_sq)
    };
    let k = skew(v);
    Rotation(Mat3::identity() + a * k + b * (k * k))
}

/// Nearest rotation in Frobenius norm (orthogonal polar factor).
pub fn project_to_so3(m: &Mat3) -> Result<Rotation, So3Error> {
    let det = m.determinant();
    let svd = m.svd(true, true);
    let s = &svd.singular_values;
    let min_singular = s.min();
    let max_singular = s.max();
    if !(det > 0.0) || !(min_singular > 1e-12 * max_singular) {
        return Err(So3Error::Degenerate { det, min_singular });
    }
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let mut uv = u * v_t;
    if uv.determinant() < 0.0 {
        // det(M) > 0 already rules this out up to rounding; keep the sign fix anyway.
        let mut d = Mat3::identity();
        d[(2, 2)] = -1.0;
        uv = u * d * v_t;
    }
    Ok(Rotation(uv))
}

/// Rotation angle in `[0, π]`.
pub fn rotation_angle(r: &Rotation) -> f64 {
    ((r.0.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}
