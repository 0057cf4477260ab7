//! Ground-truth rigid-body motion and sensor simulation.
//!
//! Trajectories are closed-form: each axis of the inertial position and of the
//! body angular velocity is a polynomial plus a sum of sinusoids, so every
//! derivative the observers and the observability tools need is analytic. Only
//! the attitude is integrated numerically (RK4 on `Ṙ = R[ω]×` with a projection
//! back onto SO(3) after every step).

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::so3::{exp_so3, project_to_so3, skew, Mat3, Rotation, So3Error, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("time {t} s lies outside the trajectory horizon [0, {horizon}] s")]
    HorizonExceeded { t: f64, horizon: f64 },
    #[error("invalid sampling grid: {0}")]
    InvalidGrid(String),
    #[error("invalid world constants: {0}")]
    InvalidWorld(String),
    #[error("invalid noise configuration: {0}")]
    InvalidNoise(String),
    #[error(transparent)]
    So3(#[from] So3Error),
}

/// `amplitude · sin(frequency · t + phase)`, frequency in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl Sinusoid {
    pub fn new(amplitude: f64, frequency: f64, phase: f64) -> Self {
        Sinusoid {
            amplitude,
            frequency,
            phase,
        }
    }

    fn derivative(&self, t: f64, order: u32) -> f64 {
        let shift = f64::from(order) * PI / 2.0;
        self.amplitude
            * self.frequency.powi(order as i32)
            * (self.frequency * t + self.phase + shift).sin()
    }
}

/// Scalar signal `Σ c_k t^k + Σ A_j sin(w_j t + φ_j)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AxisSignal {
    pub poly: Vec<f64>,
    pub sines: Vec<Sinusoid>,
}

impl AxisSignal {
    pub fn constant(c: f64) -> Self {
        AxisSignal {
            poly: vec![c],
            sines: Vec::new(),
        }
    }

    pub fn sine(amplitude: f64, frequency: f64, phase: f64) -> Self {
        AxisSignal {
            poly: Vec::new(),
            sines: vec![Sinusoid::new(amplitude, frequency, phase)],
        }
    }

    /// `order`-th time derivative at `t`.
    pub fn derivative(&self, t: f64, order: u32) -> f64 {
        let order = order as usize;
        let mut poly = 0.0;
        for (k, c) in self.poly.iter().enumerate().skip(order) {
            let falling: f64 = ((k - order + 1)..=k).map(|j| j as f64).product();
            poly += c * falling * t.powi((k - order) as i32);
        }
        poly + self
            .sines
            .iter()
            .map(|s| s.derivative(t, order as u32))
            .sum::<f64>()
    }

    pub fn is_finite(&self) -> bool {
        self.poly.iter().all(|c| c.is_finite())
            && self
                .sines
                .iter()
                .all(|s| s.amplitude.is_finite() && s.frequency.is_finite() && s.phase.is_finite())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VectorSignal {
    pub axes: [AxisSignal; 3],
}

impl VectorSignal {
    pub fn new(x: AxisSignal, y: AxisSignal, z: AxisSignal) -> Self {
        VectorSignal { axes: [x, y, z] }
    }

    pub fn constant(v: Vec3) -> Self {
        VectorSignal::new(
            AxisSignal::constant(v.x),
            AxisSignal::constant(v.y),
            AxisSignal::constant(v.z),
        )
    }

    /// `p0 + v0 t + ½ a t²` on each axis.
    pub fn quadratic(p0: Vec3, v0: Vec3, accel: Vec3) -> Self {
        let axis = |i: usize| AxisSignal {
            poly: vec![p0[i], v0[i], 0.5 * accel[i]],
            sines: Vec::new(),
        };
        VectorSignal::new(axis(0), axis(1), axis(2))
    }

    pub fn derivative(&self, t: f64, order: u32) -> Vec3 {
        Vec3::new(
            self.axes[0].derivative(t, order),
            self.axes[1].derivative(t, order),
            self.axes[2].derivative(t, order),
        )
    }

    pub fn value(&self, t: f64) -> Vec3 {
        self.derivative(t, 0)
    }
}

/// Analytic description of a run: inertial position, body angular velocity,
/// initial attitude and the time horizon on which the description is valid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySpec {
    pub position: VectorSignal,
    pub omega: VectorSignal,
    pub initial_attitude: Rotation,
    pub horizon: f64,
}

impl TrajectorySpec {
    /// The eight-shaped benchmark trajectory with slowly varying body rates,
    /// starting at `R(0) = exp((π/2)[e₂]×)`.
    ///
    /// The initial inertial velocity is the analytic derivative of the
    /// position, `[0, 4.8 cos(π/12), −4√3 cos(π/9)]`.
    pub fn figure_eight(horizon: f64) -> Self {
        let position = VectorSignal::new(
            AxisSignal {
                poly: Vec::new(),
                sines: vec![Sinusoid::new(1.0, 8.0, PI / 2.0)],
            },
            AxisSignal::sine(0.3, 16.0, PI / 12.0),
            AxisSignal::sine(-(3.0f64).sqrt() / 4.0, 16.0, -PI / 9.0),
        );
        let omega = VectorSignal::new(
            AxisSignal::sine(1.0, 0.1, PI),
            AxisSignal::sine(0.5, 0.2, 0.0),
            AxisSignal::sine(0.1, 0.3, PI / 3.0),
        );
        TrajectorySpec {
            position,
            omega,
            initial_attitude: exp_so3(&(PI / 2.0 * Vec3::y())),
            horizon,
        }
    }

    /// Unpowered flight: `v̇ = g`, hence zero apparent acceleration, with a
    /// constant body rate.
    pub fn free_fall(world: &WorldConstants, omega: Vec3, horizon: f64) -> Self {
        TrajectorySpec {
            position: VectorSignal::quadratic(
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 0.5, 0.2),
                world.g_i,
            ),
            omega: VectorSignal::constant(omega),
            initial_attitude: Rotation::identity(),
            horizon,
        }
    }

    /// Body at rest at `p0` with frozen attitude.
    pub fn stationary(p0: Vec3, attitude: Rotation, horizon: f64) -> Self {
        TrajectorySpec {
            position: VectorSignal::constant(p0),
            omega: VectorSignal::constant(Vec3::zeros()),
            initial_attitude: attitude,
            horizon,
        }
    }

    /// Same motion seen from an inertial frame rotated by `q` (positions,
    /// initial attitude). Used together with [`WorldConstants::rotated`].
    pub fn rotated(&self, q: &Rotation) -> Self {
        let m = q.matrix();
        let degree = self
            .position
            .axes
            .iter()
            .map(|a| a.poly.len())
            .max()
            .unwrap_or(0);
        let mut axes: [AxisSignal; 3] = Default::default();
        for (i, axis) in axes.iter_mut().enumerate() {
            axis.poly = (0..degree)
                .map(|k| {
                    (0..3)
                        .map(|j| {
                            m[(i, j)] * self.position.axes[j].poly.get(k).copied().unwrap_or(0.0)
                        })
                        .sum()
                })
                .collect();
            for j in 0..3 {
                for s in &self.position.axes[j].sines {
                    axis.sines
                        .push(Sinusoid::new(m[(i, j)] * s.amplitude, s.frequency, s.phase));
                }
            }
        }
        TrajectorySpec {
            position: VectorSignal { axes },
            omega: self.omega.clone(),
            initial_attitude: *q * self.initial_attitude,
            horizon: self.horizon,
        }
    }

    fn check_time(&self, t: f64) -> Result<(), ScenarioError> {
        // allow rounding slack of a few ulps at the end of the horizon
        if !(t >= 0.0 && t <= self.horizon * (1.0 + 1e-12)) {
            return Err(ScenarioError::HorizonExceeded {
                t,
                horizon: self.horizon,
            });
        }
        Ok(())
    }
}

/// Known constant inertial quantities: gravity, the reference direction seen
/// by the vector sensor, and the range anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldConstants {
    pub g_i: Vec3,
    pub m_i: Vec3,
    pub anchor_i: Vec3,
}

impl Default for WorldConstants {
    fn default() -> Self {
        WorldConstants {
            g_i: Vec3::new(0.0, 0.0, 9.81),
            m_i: Vec3::new(1.0, 0.0, 1.0) / 2.0f64.sqrt(),
            anchor_i: Vec3::zeros(),
        }
    }
}

impl WorldConstants {
    /// Checks `‖m_I‖ = 1` and (when gravity is nonzero) non-collinearity.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let finite = self
            .g_i
            .iter()
            .chain(self.m_i.iter())
            .chain(self.anchor_i.iter())
            .all(|x| x.is_finite());
        if !finite {
            return Err(ScenarioError::InvalidWorld("non-finite component".into()));
        }
        if (self.m_i.norm() - 1.0).abs() > 1e-12 {
            return Err(ScenarioError::InvalidWorld(format!(
                "reference direction must be unit length, got norm {}",
                self.m_i.norm()
            )));
        }
        if self.g_i.norm() > 0.0 && self.m_i.cross(&self.g_i).norm() <= 1e-6 {
            return Err(ScenarioError::InvalidWorld(
                "reference direction and gravity are collinear".into(),
            ));
        }
        Ok(())
    }

    pub fn rotated(&self, q: &Rotation) -> Self {
        WorldConstants {
            g_i: q * &self.g_i,
            m_i: q * &self.m_i,
            anchor_i: q * &self.anchor_i,
        }
    }
}

/// Ground truth at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyTruth {
    pub t: f64,
    pub r: Rotation,
    pub p_i: Vec3,
    pub v_i: Vec3,
    /// Apparent (specific) acceleration `Rᵀ(v̇ − g)` in the body frame.
    pub a_b: Vec3,
    pub omega: Vec3,
    pub a_b_dot: Vec3,
    pub a_b_ddot: Vec3,
    pub omega_dot: Vec3,
}

impl RigidBodyTruth {
    fn from_attitude(spec: &TrajectorySpec, world: &WorldConstants, t: f64, r: Rotation) -> Self {
        let rt = r.matrix().transpose();
        let omega = spec.omega.value(t);
        let omega_dot = spec.omega.derivative(t, 1);
        let a_b = rt * (spec.position.derivative(t, 2) - world.g_i);
        let jerk_b = rt * spec.position.derivative(t, 3);
        let a_b_dot = -omega.cross(&a_b) + jerk_b;
        let jerk_b_dot = -omega.cross(&jerk_b) + rt * spec.position.derivative(t, 4);
        let a_b_ddot = -omega_dot.cross(&a_b) - omega.cross(&a_b_dot) + jerk_b_dot;
        RigidBodyTruth {
            t,
            r,
            p_i: spec.position.value(t),
            v_i: spec.position.derivative(t, 1),
            a_b,
            omega,
            a_b_dot,
            a_b_ddot,
            omega_dot,
        }
    }
}

fn rk4_attitude_step(
    spec: &TrajectorySpec,
    r: &Rotation,
    t: f64,
    h: f64,
) -> Result<Rotation, ScenarioError> {
    let f = |m: &Mat3, tau: f64| m * skew(&spec.omega.value(tau));
    let r0 = r.matrix();
    let k1 = f(r0, t);
    let k2 = f(&(r0 + 0.5 * h * k1), t + 0.5 * h);
    let k3 = f(&(r0 + 0.5 * h * k2), t + 0.5 * h);
    let k4 = f(&(r0 + h * k3), t + h);
    let increment = h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if increment.iter().all(|x| *x == 0.0) {
        return Ok(*r);
    }
    Ok(project_to_so3(&(r0 + increment))?)
}

/// Truth at time `t`, integrating the attitude from `R(0)` with steps of at most `h`.
pub fn truth_at(
    spec: &TrajectorySpec,
    world: &WorldConstants,
    t: f64,
    h: f64,
) -> Result<RigidBodyTruth, ScenarioError> {
    spec.check_time(t)?;
    if !(h > 0.0) {
        return Err(ScenarioError::InvalidGrid(format!(
            "step must be positive, got {h}"
        )));
    }
    let steps = (t / h).ceil() as usize;
    let mut r = spec.initial_attitude;
    if steps > 0 {
        let step = t / steps as f64;
        for k in 0..steps {
            r = rk4_attitude_step(spec, &r, k as f64 * step, step)?;
        }
    }
    Ok(RigidBodyTruth::from_attitude(spec, world, t, r))
}

/// Number of intervals of a `(dt, T)` grid, rejecting non-commensurate pairs.
pub fn grid_len(dt: f64, horizon: f64) -> Result<usize, ScenarioError> {
    if !(dt > 0.0 && dt.is_finite() && horizon.is_finite() && horizon > dt) {
        return Err(ScenarioError::InvalidGrid(format!(
            "need 0 < dt < T, got dt = {dt}, T = {horizon}"
        )));
    }
    let n = (horizon / dt).round();
    if ((n * dt) - horizon).abs() > 1e-9 * horizon {
        return Err(ScenarioError::InvalidGrid(format!(
            "T = {horizon} is not a multiple of dt = {dt}"
        )));
    }
    Ok(n as usize)
}

/// Truth sampled at `k·dt`, `k = 0..=T/dt`, from one continuous attitude integration.
pub fn run_truth(
    spec: &TrajectorySpec,
    world: &WorldConstants,
    dt: f64,
    horizon: f64,
) -> Result<Vec<RigidBodyTruth>, ScenarioError> {
    let n = grid_len(dt, horizon)?;
    spec.check_time(n as f64 * dt)?;
    let mut out = Vec::with_capacity(n + 1);
    let mut r = spec.initial_attitude;
    for k in 0..=n {
        let t = k as f64 * dt;
        if k > 0 {
            r = rk4_attitude_step(spec, &r, (k - 1) as f64 * dt, dt)?;
        }
        out.push(RigidBodyTruth::from_attitude(spec, world, t, r));
    }
    Ok(out)
}

/// Standard deviations of the additive white noises, plus the master seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub sigma_omega: f64,
    pub sigma_acc: f64,
    pub sigma_mag: f64,
    pub sigma_uwb: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigma_omega: 1e-2,
            sigma_acc: 3e-2,
            sigma_mag: 0.1,
            sigma_uwb: 0.1,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        NoiseConfig {
            sigma_omega: 0.0,
            sigma_acc: 0.0,
            sigma_mag: 0.0,
            sigma_uwb: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        for (name, s) in [
            ("sigma_omega", self.sigma_omega),
            ("sigma_acc", self.sigma_acc),
            ("sigma_mag", self.sigma_mag),
            ("sigma_uwb", self.sigma_uwb),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(ScenarioError::InvalidNoise(format!("{name} = {s}")));
            }
        }
        Ok(())
    }
}

/// Independent noise substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum SensorId {
    Gyro = 1,
    Accel = 2,
    Magnetometer = 3,
    Range = 4,
}

/// Three standard normal draws keyed by `(seed, sensor, index)`.
///
/// Each key seeds its own ChaCha stream, so a sample never depends on how
/// many other samples were drawn before it or in which order.
pub fn standard_normals(seed: u64, sensor: SensorId, index: u64) -> [f64; 3] {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(sensor as u64).to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..].copy_from_slice(b"rangenav");
    let mut rng = ChaCha8Rng::from_seed(key);
    [
        StandardNormal.sample(&mut rng),
        StandardNormal.sample(&mut rng),
        StandardNormal.sample(&mut rng),
    ]
}

fn noise3(sigma: f64, seed: u64, sensor: SensorId, index: u64) -> Vec3 {
    if sigma == 0.0 {
        return Vec3::zeros();
    }
    let z = standard_normals(seed, sensor, index);
    sigma * Vec3::new(z[0], z[1], z[2])
}

/// One synchronous reading of gyro, accelerometer, vector sensor and range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSample {
    pub t: f64,
    pub omega_y: Vec3,
    pub a_y_b: Vec3,
    pub m_y_b: Vec3,
    /// Range to the anchor, clipped at zero.
    pub d_y: f64,
}

/// Simulated measurements for the `index`-th sample of a run.
pub fn sense(
    truth: &RigidBodyTruth,
    world: &WorldConstants,
    noise: &NoiseConfig,
    index: u64,
) -> SensorSample {
    let seed = noise.seed;
    let rt = truth.r.transpose();
    let range = (truth.p_i - world.anchor_i).norm();
    let range_noise = noise3(noise.sigma_uwb, seed, SensorId::Range, index).x;
    SensorSample {
        t: truth.t,
        omega_y: truth.omega + noise3(noise.sigma_omega, seed, SensorId::Gyro, index),
        a_y_b: truth.a_b + noise3(noise.sigma_acc, seed, SensorId::Accel, index),
        m_y_b: rt * world.m_i + noise3(noise.sigma_mag, seed, SensorId::Magnetometer, index),
        d_y: (range + range_noise).max(0.0),
    }
}

/// Senses a whole truth run; sample `k` uses noise index `k`.
pub fn sense_run(
    truth: &[RigidBodyTruth],
    world: &WorldConstants,
    noise: &NoiseConfig,
) -> Vec<SensorSample> {
    truth
        .iter()
        .enumerate()
        .map(|(k, tr)| sense(tr, world, noise, k as u64))
        .collect()
}
