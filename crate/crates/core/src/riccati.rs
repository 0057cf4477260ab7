//! Continuous-time Riccati observer for the lifted range system.
//!
//! ```text
//! x̂̇ = 𝒜(t)x̂ + ℬu + K(y − 𝒞x̂),   K = P𝒞ᵀQ
//! Ṗ  = 𝒜P + P𝒜ᵀ − P𝒞ᵀQ𝒞P + V
//! ```
//!
//! The pair `(x̂, P)` is integrated with one RK4 step per sensor sample. The
//! step from `t_k` to `t_{k+1}` sees the samples at both ends; the mid-interval
//! input is a quadratic interpolation through the last three samples (linear
//! with two, held constant with one).

use nalgebra::SymmetricEigen;
use thiserror::Error;

use crate::augmented::{LtvModel, Mat13, Vec13};
use crate::so3::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiccatiError {
    #[error("bad observer configuration: {0}")]
    BadConfig(String),
    #[error("Riccati matrix lost positive definiteness at t = {t} s")]
    PNotPositiveDefinite { t: f64 },
    #[error("non-finite measurement: {0}")]
    NonFiniteInput(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiConfig {
    pub p0: Mat13,
    /// Output weight (scalar output).
    pub q: f64,
    pub v: Mat13,
    pub dt: f64,
    /// Known `‖g‖²` feeding the fourth auxiliary input.
    pub g_norm_sq: f64,
}

impl RiccatiConfig {
    /// `P0 = p0·I`, `V = v·I`.
    pub fn isotropic(p0: f64, q: f64, v: f64, dt: f64, g_norm_sq: f64) -> Self {
        RiccatiConfig {
            p0: p0 * Mat13::identity(),
            q,
            v: v * Mat13::identity(),
            dt,
            g_norm_sq,
        }
    }

    /// `P0 = 10·I`, `Q = 10`, `V = I`.
    pub fn default_tuning(dt: f64, g_norm_sq: f64) -> Self {
        RiccatiConfig::isotropic(10.0, 10.0, 1.0, dt, g_norm_sq)
    }

    /// `P0` must be symmetric positive definite; `Q ≥ 0` and `V` symmetric
    /// positive semidefinite (the zero-gain open-loop limit is allowed).
    pub fn validate(&self) -> Result<(), RiccatiError> {
        let bad = |m: String| Err(RiccatiError::BadConfig(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.q >= 0.0 && self.q.is_finite()) {
            return bad(format!("Q must be nonnegative, got {}", self.q));
        }
        if !(self.g_norm_sq >= 0.0 && self.g_norm_sq.is_finite()) {
            return bad(format!("‖g‖² must be nonnegative, got {}", self.g_norm_sq));
        }
        for (name, m) in [("P0", &self.p0), ("V", &self.v)] {
            if m.iter().any(|x| !x.is_finite())
                || (m - m.transpose()).norm() > 1e-12 * m.norm().max(1.0)
            {
                return bad(format!("{name} must be finite and symmetric"));
            }
        }
        if min_eigenvalue(&self.p0) <= 0.0 {
            return bad("P0 must be positive definite".into());
        }
        if min_eigenvalue(&self.v) < -1e-12 * self.v.norm() {
            return bad("V must be positive semidefinite".into());
        }
        Ok(())
    }
}

/// One synchronous IMU + range reading as seen by the observer.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Input {
    omega: Vec3,
    accel: Vec3,
    /// `½ d²`
    y: f64,
}

impl Input {
    fn blend(a: &Input, wa: f64, b: &Input, wb: f64, c: &Input, wc: f64) -> Input {
        Input {
            omega: wa * a.omega + wb * b.omega + wc * c.omega,
            accel: wa * a.accel + wb * b.accel + wc * c.accel,
            y: wa * a.y + wb * b.y + wc * c.y,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiObserverState {
    pub x_hat: Vec13,
    pub p: Mat13,
    pub t: f64,
    /// Most recent samples, newest first.
    recent: [Option<Input>; 2],
}

impl RiccatiObserverState {
    /// Records the measurement taken at the current time without propagating.
    pub fn with_initial_sample(
        mut self,
        omega_y: &Vec3,
        a_y_b: &Vec3,
        d_y: f64,
    ) -> Result<Self, RiccatiError> {
        let input = make_input(omega_y, a_y_b, d_y)?;
        self.recent = [Some(input), None];
        Ok(self)
    }

    /// `y − 𝒞x̂` against the latest recorded measurement.
    pub fn innovation(&self) -> Option<f64> {
        self.recent[0].map(|i| i.y - self.x_hat[0])
    }

    pub fn trace_p(&self) -> f64 {
        self.p.trace()
    }

    pub fn min_eig_p(&self) -> f64 {
        min_eigenvalue(&self.p)
    }

    pub fn max_eig_p(&self) -> f64 {
        SymmetricEigen::new(self.p).eigenvalues.max()
    }

    /// `‖P − Pᵀ‖_F`.
    pub fn asymmetry(&self) -> f64 {
        (self.p - self.p.transpose()).norm()
    }
}

fn min_eigenvalue(m: &Mat13) -> f64 {
    SymmetricEigen::new(*m).eigenvalues.min()
}

fn make_input(omega_y: &Vec3, a_y_b: &Vec3, d_y: f64) -> Result<Input, RiccatiError> {
    if omega_y.iter().any(|x| !x.is_finite()) {
        return Err(RiccatiError::NonFiniteInput("angular velocity"));
    }
    if a_y_b.iter().any(|x| !x.is_finite()) {
        return Err(RiccatiError::NonFiniteInput("apparent acceleration"));
    }
    if !d_y.is_finite() {
        return Err(RiccatiError::NonFiniteInput("range"));
    }
    Ok(Input {
        omega: *omega_y,
        accel: *a_y_b,
        y: 0.5 * d_y * d_y,
    })
}

pub fn observer_init(
    config: &RiccatiConfig,
    x_hat0: Vec13,
) -> Result<RiccatiObserverState, RiccatiError> {
    config.validate()?;
    if x_hat0.iter().any(|x| !x.is_finite()) {
        return Err(RiccatiError::BadConfig(
            "initial estimate must be finite".into(),
        ));
    }
    Ok(RiccatiObserverState {
        x_hat: x_hat0,
        p: config.p0,
        t: 0.0,
        recent: [None, None],
    })
}

/// `K = P𝒞ᵀQ`.
pub fn gain(state: &RiccatiObserverState, config: &RiccatiConfig) -> Vec13 {
    config.q * state.p.column(0).into_owned()
}

/// Propagates `(x̂, P)` over one sample interval, ending at the new measurement.
pub fn observer_step(
    state: &RiccatiObserverState,
    omega_y: &Vec3,
    a_y_b: &Vec3,
    d_y: f64,
    config: &RiccatiConfig,
) -> Result<RiccatiObserverState, RiccatiError> {
    observer_step_with(
        state,
        omega_y,
        a_y_b,
        d_y,
        config,
        &LtvModel::new(config.g_norm_sq),
    )
}

/// [`observer_step`] reusing a prebuilt model.
pub fn observer_step_with(
    state: &RiccatiObserverState,
    omega_y: &Vec3,
    a_y_b: &Vec3,
    d_y: f64,
    config: &RiccatiConfig,
    model: &LtvModel,
) -> Result<RiccatiObserverState, RiccatiError> {
    let end = make_input(omega_y, a_y_b, d_y)?;
    let (start, mid) = match state.recent {
        [None, _] => (end, end),
        [Some(last), None] => (last, Input::blend(&last, 0.5, &end, 0.5, &end, 0.0)),
        // quadratic through t_{k-1}, t_k, t_{k+1} evaluated at t_k + h/2
        [Some(last), Some(before)] => (
            last,
            Input::blend(&before, -0.125, &last, 0.75, &end, 0.375),
        ),
    };

    let q = config.q;
    let flow = |x: &Vec13, p: &Mat13, input: &Input| -> (Vec13, Mat13) {
        let a = model.acal(&input.omega, &input.accel);
        let pc = p.column(0).into_owned();
        let x_dot = a * x + model.forcing(&input.accel) + q * (input.y - x[0]) * pc;
        let ap = a * p;
        let p_dot = ap + ap.transpose() - q * pc * pc.transpose() + config.v;
        (x_dot, p_dot)
    };

    let h = config.dt;
    let (x0, p0) = (&state.x_hat, &state.p);
    let (kx1, kp1) = flow(x0, p0, &start);
    let (kx2, kp2) = flow(&(x0 + 0.5 * h * kx1), &(p0 + 0.5 * h * kp1), &mid);
    let (kx3, kp3) = flow(&(x0 + 0.5 * h * kx2), &(p0 + 0.5 * h * kp2), &mid);
    let (kx4, kp4) = flow(&(x0 + h * kx3), &(p0 + h * kp3), &end);
    let x_hat = x0 + h / 6.0 * (kx1 + 2.0 * kx2 + 2.0 * kx3 + kx4);
    let p = p0 + h / 6.0 * (kp1 + 2.0 * kp2 + 2.0 * kp3 + kp4);
    let p = 0.5 * (p + p.transpose());
    let t = state.t + h;

    if x_hat.iter().chain(p.iter()).any(|v| !v.is_finite()) || p.cholesky().is_none() {
        return Err(RiccatiError::PNotPositiveDefinite { t });
    }
    Ok(RiccatiObserverState {
        x_hat,
        p,
        t,
        recent: [Some(end), state.recent[0]],
    })
}

/// Body-frame position, velocity and gravity estimates (rows 5–7, 8–10, 11–13).
pub fn extract_estimates(state: &RiccatiObserverState) -> (Vec3, Vec3, Vec3) {
    let x = &state.x_hat;
    (
        x.fixed_rows::<3>(4).into_owned(),
        x.fixed_rows::<3>(7).into_owned(),
        x.fixed_rows::<3>(10).into_owned(),
    )
}
