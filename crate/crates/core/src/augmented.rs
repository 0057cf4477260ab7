//! Lifted 13-state linear time-varying model.
//!
//! The body-frame state `x̄ = (p, v, g)` evolves as `x̄̇ = A(t)x̄ + B̄a` with
//! `A(t) = Ā − blkdiag([ω]×, [ω]×, [ω]×)`. The half squared range `½‖p‖²` is a
//! quadratic output; appending the four quadratic forms `ξᵢ = ½ x̄ᵀCᵢx̄`
//! (with `C₁ = blkdiag(I, 0, 0)` and `Cᵢ₊₁ = CᵢĀ + ĀᵀCᵢ`) turns it into the
//! first component of a linear state:
//!
//! ```text
//! ξ̇ᵢ = ξᵢ₊₁ + aᵀB̄ᵀCᵢx̄     (i = 1, 2, 3)
//! ξ̇₄ = aᵀB̄ᵀC₄x̄ + κ‖g‖²
//! ```
//!
//! The rotational part of `A(t)` drops out of every quadratic form because the
//! `Cᵢ` are block-scalar, so the family is constant. The fifth form
//! `½ x̄ᵀC₅x̄ = κ‖g‖²` does not vanish; it only depends on the known gravity
//! norm and enters through the input `u = (a, κ‖g‖²)`.

use nalgebra::{RowSVector, SMatrix, SVector};
use thiserror::Error;

use crate::scenario::{RigidBodyTruth, WorldConstants};
use crate::so3::{skew, Mat3, Vec3};

pub type Vec9 = SVector<f64, 9>;
pub type Vec13 = SVector<f64, 13>;
pub type Mat9 = SMatrix<f64, 9, 9>;
pub type Mat13 = SMatrix<f64, 13, 13>;
pub type Row9 = RowSVector<f64, 9>;
pub type TMatrix = SMatrix<f64, 4, 9>;

/// Number of auxiliary quadratic coordinates.
pub const N_AUX: usize = 4;
pub const N_STATE: usize = 13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentedError {
    #[error("residual of the ξ₄ rate is not constant: deviation {deviation:e} exceeds {limit:e}")]
    NonConstantResidual { deviation: f64, limit: f64 },
    #[error("need at least 5 truth samples on a uniform grid, got {0}")]
    TooShort(usize),
}

fn set_block(m: &mut Mat9, row: usize, col: usize, block: &Mat3) {
    m.fixed_view_mut::<3, 3>(3 * row, 3 * col).copy_from(block);
}

/// `Ā`: identity blocks at block positions (1,2) and (2,3).
pub fn a_bar() -> Mat9 {
    let mut a = Mat9::zeros();
    set_block(&mut a, 0, 1, &Mat3::identity());
    set_block(&mut a, 1, 2, &Mat3::identity());
    a
}

/// `B̄`: selects the velocity block.
pub fn b_bar() -> SMatrix<f64, 9, 3> {
    let mut b = SMatrix::<f64, 9, 3>::zeros();
    b.fixed_view_mut::<3, 3>(3, 0).copy_from(&Mat3::identity());
    b
}

/// `A(t) = Ā − blkdiag([ω]×, [ω]×, [ω]×)`.
pub fn build_a9(omega: &Vec3) -> Mat9 {
    let mut a = a_bar();
    let w = skew(omega);
    for i in 0..3 {
        let block = a.fixed_view::<3, 3>(3 * i, 3 * i) - w;
        set_block(&mut a, i, i, &block);
    }
    a
}

/// `blkdiag(R, R, R)`.
pub fn block_rotation(r: &Mat3) -> Mat9 {
    let mut m = Mat9::zeros();
    for i in 0..3 {
        set_block(&mut m, i, i, r);
    }
    m
}

/// The quadratic-form family `C₁..C₄` and the symmetric next term `C₅`.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrixFamily {
    pub c: [Mat9; N_AUX],
    pub c5_sym: Mat9,
}

impl CMatrixFamily {
    /// Coefficient `κ` with `½ x̄ᵀC₅x̄ = κ‖g‖²`, read off the gravity block of `C₅`.
    pub fn gravity_gain(&self) -> f64 {
        0.5 * self.c5_sym[(6, 6)]
    }
}

/// Runs the recursion `Cᵢ₊₁ = CᵢĀ + ĀᵀCᵢ` from `C₁ = blkdiag(I, 0, 0)`.
pub fn build_c_family() -> CMatrixFamily {
    let a = a_bar();
    let mut c1 = Mat9::zeros();
    set_block(&mut c1, 0, 0, &Mat3::identity());
    let next = |c: &Mat9| c * a + a.transpose() * c;
    let c2 = next(&c1);
    let c3 = next(&c2);
    let c4 = next(&c3);
    let c5 = next(&c4);
    CMatrixFamily {
        c: [c1, c2, c3, c4],
        c5_sym: 0.5 * (c5 + c5.transpose()),
    }
}

/// `𝒯` for the given apparent acceleration; row `i` is `aᵀB̄ᵀCᵢ`.
pub fn build_t(family: &CMatrixFamily, a_b: &Vec3) -> TMatrix {
    let b = b_bar();
    let mut t = TMatrix::zeros();
    for (i, c) in family.c.iter().enumerate() {
        t.set_row(i, &(a_b.transpose() * b.transpose() * c));
    }
    t
}

/// The shift matrix `𝒮` acting on `(ξ₁..ξ₄)`.
pub fn shift_matrix() -> SMatrix<f64, 4, 4> {
    let mut s = SMatrix::<f64, 4, 4>::zeros();
    for i in 0..3 {
        s[(i, i + 1)] = 1.0;
    }
    s
}

/// `ℬ = [0 B_m; B̄ 0]` with `B_m = e₄`.
pub fn input_matrix() -> SMatrix<f64, 13, 4> {
    let mut b = SMatrix::<f64, 13, 4>::zeros();
    b[(3, 3)] = 1.0;
    b.fixed_view_mut::<9, 3>(4, 0).copy_from(&b_bar());
    b
}

/// `𝒞 = [1 0 0 0 | 0₁ₓ₉]`.
pub fn output_row() -> RowSVector<f64, 13> {
    let mut c = RowSVector::<f64, 13>::zeros();
    c[0] = 1.0;
    c
}

/// All matrices of the lifted system at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct LtvMatrices {
    pub a9: Mat9,
    pub acal: Mat13,
    pub t: TMatrix,
    pub bcal: SMatrix<f64, 13, 4>,
    pub ccal: RowSVector<f64, 13>,
    pub s: SMatrix<f64, 4, 4>,
    pub u: SVector<f64, 4>,
}

/// Precomputed constant parts, so the per-step assembly is a few block copies.
#[derive(Debug, Clone)]
pub struct LtvModel {
    pub family: CMatrixFamily,
    pub kappa: f64,
    pub g_norm_sq: f64,
}

impl LtvModel {
    pub fn new(g_norm_sq: f64) -> Self {
        let family = build_c_family();
        let kappa = family.gravity_gain();
        LtvModel {
            family,
            kappa,
            g_norm_sq,
        }
    }

    /// `𝒜(t) = [𝒮 𝒯(t); 0 A(t)]`.
    pub fn acal(&self, omega: &Vec3, a_b: &Vec3) -> Mat13 {
        let mut m = Mat13::zeros();
        m.fixed_view_mut::<4, 4>(0, 0).copy_from(&shift_matrix());
        m.fixed_view_mut::<4, 9>(0, 4)
            .copy_from(&build_t(&self.family, a_b));
        m.fixed_view_mut::<9, 9>(4, 4).copy_from(&build_a9(omega));
        m
    }

    /// `ℬu` with `u = (a, κ‖g‖²)`.
    pub fn forcing(&self, a_b: &Vec3) -> Vec13 {
        let mut f = Vec13::zeros();
        f[3] = self.kappa * self.g_norm_sq;
        f.fixed_rows_mut::<3>(7).copy_from(a_b);
        f
    }

    /// `𝒜x + ℬu`.
    pub fn rate(&self, x: &Vec13, omega: &Vec3, a_b: &Vec3) -> Vec13 {
        self.acal(omega, a_b) * x + self.forcing(a_b)
    }

    pub fn assemble(&self, omega: &Vec3, a_b: &Vec3) -> LtvMatrices {
        let mut u = SVector::<f64, 4>::zeros();
        u.fixed_rows_mut::<3>(0).copy_from(a_b);
        u[3] = self.kappa * self.g_norm_sq;
        LtvMatrices {
            a9: build_a9(omega),
            acal: self.acal(omega, a_b),
            t: build_t(&self.family, a_b),
            bcal: input_matrix(),
            ccal: output_row(),
            s: shift_matrix(),
            u,
        }
    }
}

/// Full assembly in one call; `κ` comes from the C-family recursion.
pub fn assemble_ltv(omega: &Vec3, a_b: &Vec3, g_norm_sq: f64) -> LtvMatrices {
    LtvModel::new(g_norm_sq).assemble(omega, a_b)
}

/// Body-frame position (relative to the anchor), velocity and gravity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyState9 {
    pub p_b: Vec3,
    pub v_b: Vec3,
    pub g_b: Vec3,
}

impl BodyState9 {
    /// Rotates the anchor-relative inertial state into the body frame.
    pub fn from_truth(truth: &RigidBodyTruth, world: &WorldConstants) -> Self {
        let rt = truth.r.transpose();
        BodyState9 {
            p_b: rt * (truth.p_i - world.anchor_i),
            v_b: rt * truth.v_i,
            g_b: rt * world.g_i,
        }
    }

    pub fn to_vector(&self) -> Vec9 {
        let mut x = Vec9::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.p_b);
        x.fixed_rows_mut::<3>(3).copy_from(&self.v_b);
        x.fixed_rows_mut::<3>(6).copy_from(&self.g_b);
        x
    }

    pub fn from_vector(x: &Vec9) -> Self {
        BodyState9 {
            p_b: x.fixed_rows::<3>(0).into_owned(),
            v_b: x.fixed_rows::<3>(3).into_owned(),
            g_b: x.fixed_rows::<3>(6).into_owned(),
        }
    }
}

/// `(ξ₁..ξ₄, x̄)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedState {
    pub xi: [f64; N_AUX],
    pub body: BodyState9,
}

impl AugmentedState {
    pub fn to_vector(&self) -> Vec13 {
        let mut x = Vec13::zeros();
        for (i, xi) in self.xi.iter().enumerate() {
            x[i] = *xi;
        }
        x.fixed_rows_mut::<9>(4).copy_from(&self.body.to_vector());
        x
    }

    pub fn from_vector(x: &Vec13) -> Self {
        AugmentedState {
            xi: [x[0], x[1], x[2], x[3]],
            body: BodyState9::from_vector(&x.fixed_rows::<9>(4).into_owned()),
        }
    }
}

/// Closed-form quadratic forms of the block-scalar C-family.
pub fn lift_state(body: &BodyState9) -> AugmentedState {
    let BodyState9 { p_b, v_b, g_b } = body;
    AugmentedState {
        xi: [
            0.5 * p_b.norm_squared(),
            p_b.dot(v_b),
            v_b.norm_squared() + p_b.dot(g_b),
            3.0 * v_b.dot(g_b),
        ],
        body: *body,
    }
}

/// Lifted truth along a run.
pub fn lift_run(run: &[RigidBodyTruth], world: &WorldConstants) -> Vec<Vec13> {
    run.iter()
        .map(|tr| lift_state(&BodyState9::from_truth(tr, world)).to_vector())
        .collect()
}

/// Outcome of [`xi_rate_oracle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiRateReport {
    /// Mean of `(ξ̇₄ − aᵀB̄ᵀC₄x̄) / ‖g‖²`; `None` when gravity is zero.
    pub kappa: Option<f64>,
    /// Largest `|residual|` before normalisation.
    pub max_abs_residual: f64,
    /// Largest deviation of the normalised residual from its mean.
    pub max_deviation: f64,
}

/// Differentiates `ξ₄` along noiseless truth (five-point stencil), removes the
/// acceleration-driven part and measures what is left per unit `‖g‖²`.
pub fn xi_rate_oracle(
    run: &[RigidBodyTruth],
    world: &WorldConstants,
) -> Result<XiRateReport, AugmentedError> {
    if run.len() < 5 {
        return Err(AugmentedError::TooShort(run.len()));
    }
    let h = run[1].t - run[0].t;
    let family = build_c_family();
    let b = b_bar();
    let lifted: Vec<(f64, Vec9)> = run
        .iter()
        .map(|tr| {
            let body = BodyState9::from_truth(tr, world);
            (lift_state(&body).xi[3], body.to_vector())
        })
        .collect();
    let residuals: Vec<f64> = (2..run.len() - 2)
        .map(|k| {
            let xi = |j: usize| lifted[j].0;
            let rate = (xi(k - 2) - 8.0 * xi(k - 1) + 8.0 * xi(k + 1) - xi(k + 2)) / (12.0 * h);
            let driven = (run[k].a_b.transpose() * b.transpose() * family.c[3] * lifted[k].1)[0];
            rate - driven
        })
        .collect();
    let max_abs_residual = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let g_sq = world.g_i.norm_squared();
    if g_sq == 0.0 {
        return Ok(XiRateReport {
            kappa: None,
            max_abs_residual,
            max_deviation: max_abs_residual,
        });
    }
    let kappa = residuals.iter().sum::<f64>() / residuals.len() as f64 / g_sq;
    let max_deviation = residuals
        .iter()
        .fold(0.0f64, |m, r| m.max((r / g_sq - kappa).abs()));
    if max_deviation > 1e-3 {
        return Err(AugmentedError::NonConstantResidual {
            deviation: max_deviation * g_sq,
            limit: 1e-3 * g_sq,
        });
    }
    Ok(XiRateReport {
        kappa: Some(kappa),
        max_abs_residual,
        max_deviation,
    })
}
