//! Lockstep execution of the full estimator: sensors feed the Riccati
//! observer, whose gravity estimate feeds the attitude filter on the same tick.

use thiserror::Error;

use crate::attitude::{
    attitude_error, attitude_step, AttitudeConfig, AttitudeError, AttitudeEstimate,
};
use crate::augmented::{BodyState9, LtvModel, Vec13};
use crate::riccati::{
    extract_estimates, observer_init, observer_step_with, RiccatiConfig, RiccatiError,
    RiccatiObserverState,
};
use crate::scenario::{RigidBodyTruth, SensorSample, WorldConstants};
use crate::so3::{Rotation, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CascadeError {
    #[error("observer diverged at step {step}: {source}")]
    Diverged { step: usize, source: RiccatiError },
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
    #[error("attitude filter failed at step {step}: {source}")]
    Attitude { step: usize, source: AttitudeError },
    #[error("truth and sensor logs differ in length ({truth} vs {samples})")]
    LengthMismatch { truth: usize, samples: usize },
    #[error("run needs at least two samples")]
    TooShort,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeConfig {
    pub riccati: RiccatiConfig,
    pub attitude: AttitudeConfig,
    pub x_hat0: Vec13,
    pub r_hat0: Rotation,
}

impl CascadeConfig {
    /// Zero initial estimate, identity initial attitude, default gains.
    pub fn defaults(world: &WorldConstants, dt: f64) -> Self {
        CascadeConfig {
            riccati: RiccatiConfig::default_tuning(dt, world.g_i.norm_squared()),
            attitude: AttitudeConfig::with_references(world.m_i, world.g_i),
            x_hat0: Vec13::zeros(),
            r_hat0: Rotation::identity(),
        }
    }
}

/// Everything logged at one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub x_hat: Vec13,
    pub trace_p: f64,
    pub min_eig_p: f64,
    pub max_eig_p: f64,
    pub p_asymmetry: f64,
    pub innovation: f64,
    pub r_hat: Rotation,
    pub attitude_error: f64,
    pub p_err: f64,
    pub v_err: f64,
    pub g_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeRun {
    pub records: Vec<StepRecord>,
}

impl CascadeRun {
    pub fn last(&self) -> &StepRecord {
        self.records.last().expect("runs are never empty")
    }
}

/// Translational estimation errors `‖x − x̂‖` per block, truth taken relative to the anchor.
pub fn body_errors(
    x_hat: &Vec13,
    truth: &RigidBodyTruth,
    world: &WorldConstants,
) -> (f64, f64, f64) {
    let body = BodyState9::from_truth(truth, world);
    let (p, v, g) = extract_estimates_from(x_hat);
    (
        (body.p_b - p).norm(),
        (body.v_b - v).norm(),
        (body.g_b - g).norm(),
    )
}

fn extract_estimates_from(x_hat: &Vec13) -> (Vec3, Vec3, Vec3) {
    (
        x_hat.fixed_rows::<3>(4).into_owned(),
        x_hat.fixed_rows::<3>(7).into_owned(),
        x_hat.fixed_rows::<3>(10).into_owned(),
    )
}

fn record(
    state: &RiccatiObserverState,
    att: &AttitudeEstimate,
    truth: &RigidBodyTruth,
    world: &WorldConstants,
) -> StepRecord {
    let eig = nalgebra::SymmetricEigen::new(state.p).eigenvalues;
    let (p_err, v_err, g_err) = body_errors(&state.x_hat, truth, world);
    StepRecord {
        t: truth.t,
        x_hat: state.x_hat,
        trace_p: state.trace_p(),
        min_eig_p: eig.min(),
        max_eig_p: eig.max(),
        p_asymmetry: state.asymmetry(),
        innovation: state.innovation().unwrap_or(0.0),
        r_hat: att.r_hat,
        attitude_error: attitude_error(&truth.r, &att.r_hat),
        p_err,
        v_err,
        g_err,
    }
}

/// One attitude update over `[t_{k-1}, t_k]`: the correction uses the previous
/// tick's vector measurement and gravity estimate (same tick as `R̂`), the
/// gyro is averaged over the interval.
fn attitude_tick(
    att: &AttitudeEstimate,
    prev: &SensorSample,
    cur: &SensorSample,
    g_hat_prev: &Vec3,
    dt: f64,
    config: &AttitudeConfig,
) -> Result<AttitudeEstimate, AttitudeError> {
    let omega = 0.5 * (prev.omega_y + cur.omega_y);
    attitude_step(att, &omega, &prev.m_y_b, g_hat_prev, dt, config)
}

fn check_lengths(truth: &[RigidBodyTruth], samples: &[SensorSample]) -> Result<(), CascadeError> {
    if truth.len() != samples.len() {
        return Err(CascadeError::LengthMismatch {
            truth: truth.len(),
            samples: samples.len(),
        });
    }
    if truth.len() < 2 {
        return Err(CascadeError::TooShort);
    }
    Ok(())
}

/// Runs the cascade over a sensor log; `truth` is used only for error bookkeeping.
pub fn run_cascade(
    truth: &[RigidBodyTruth],
    samples: &[SensorSample],
    world: &WorldConstants,
    config: &CascadeConfig,
) -> Result<CascadeRun, CascadeError> {
    check_lengths(truth, samples)?;
    config
        .attitude
        .validate()
        .map_err(|source| CascadeError::Attitude { step: 0, source })?;
    let rc = &config.riccati;
    let model = LtvModel::new(rc.g_norm_sq);
    let s0 = &samples[0];
    let mut state =
        observer_init(rc, config.x_hat0)?.with_initial_sample(&s0.omega_y, &s0.a_y_b, s0.d_y)?;
    state.t = s0.t;
    let mut att = AttitudeEstimate {
        r_hat: config.r_hat0,
        t: s0.t,
    };
    let mut records = Vec::with_capacity(samples.len());
    records.push(record(&state, &att, &truth[0], world));
    for k in 1..samples.len() {
        let (prev, cur) = (&samples[k - 1], &samples[k]);
        let g_hat_prev = extract_estimates(&state).2;
        state = observer_step_with(&state, &cur.omega_y, &cur.a_y_b, cur.d_y, rc, &model)
            .map_err(|source| CascadeError::Diverged { step: k, source })?;
        att = attitude_tick(&att, prev, cur, &g_hat_prev, rc.dt, &config.attitude)
            .map_err(|source| CascadeError::Attitude { step: k, source })?;
        records.push(record(&state, &att, &truth[k], world));
    }
    Ok(CascadeRun { records })
}

/// Attitude estimate and its error angle at one tick of a replay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeSample {
    pub r_hat: Rotation,
    pub error: f64,
}

/// Replays only the attitude filter from another initial attitude, reusing
/// the gravity estimates recorded in `run`. The Riccati observer does not
/// depend on the attitude estimate, so this is identical to a fresh cascade.
pub fn rerun_attitude(
    run: &CascadeRun,
    truth: &[RigidBodyTruth],
    samples: &[SensorSample],
    config: &AttitudeConfig,
    r_hat0: Rotation,
    dt: f64,
) -> Result<Vec<AttitudeSample>, CascadeError> {
    check_lengths(truth, samples)?;
    let mut att = AttitudeEstimate {
        r_hat: r_hat0,
        t: samples[0].t,
    };
    let mut out = Vec::with_capacity(samples.len());
    out.push(AttitudeSample {
        r_hat: att.r_hat,
        error: attitude_error(&truth[0].r, &att.r_hat),
    });
    for k in 1..samples.len() {
        let g_hat_prev = extract_estimates_from(&run.records[k - 1].x_hat).2;
        att = attitude_tick(&att, &samples[k - 1], &samples[k], &g_hat_prev, dt, config)
            .map_err(|source| CascadeError::Attitude { step: k, source })?;
        out.push(AttitudeSample {
            r_hat: att.r_hat,
            error: attitude_error(&truth[k].r, &att.r_hat),
        });
    }
    Ok(out)
}

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub final_p_err: f64,
    pub final_v_err: f64,
    pub final_g_err: f64,
    pub peak_p_err: f64,
    pub peak_v_err: f64,
    pub peak_g_err: f64,
    pub rms_p_err: f64,
    pub rms_v_err: f64,
    pub rms_g_err: f64,
    pub final_attitude_err: f64,
    pub rms_attitude_err: f64,
    /// Length of the trailing window used for the RMS values.
    pub rms_window: f64,
    pub pe_margin: Option<f64>,
    pub full_gramian_margin: Option<f64>,
    pub reduced_gramian_margin: Option<f64>,
    pub wall_time_s: Option<f64>,
}

fn rms<'a>(values: impl Iterator<Item = &'a f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

impl RunSummary {
    /// Errors computed from the step records; RMS over the trailing `rms_window` seconds.
    pub fn from_records(records: &[StepRecord], rms_window: f64) -> Self {
        let last = records.last().expect("runs are never empty");
        let cutoff = last.t - rms_window - 1e-9;
        let tail: Vec<&StepRecord> = records.iter().filter(|r| r.t >= cutoff).collect();
        let peak = |f: fn(&StepRecord) -> f64| records.iter().map(f).fold(0.0f64, f64::max);
        RunSummary {
            final_p_err: last.p_err,
            final_v_err: last.v_err,
            final_g_err: last.g_err,
            peak_p_err: peak(|r| r.p_err),
            peak_v_err: peak(|r| r.v_err),
            peak_g_err: peak(|r| r.g_err),
            rms_p_err: rms(tail.iter().map(|r| &r.p_err)),
            rms_v_err: rms(tail.iter().map(|r| &r.v_err)),
            rms_g_err: rms(tail.iter().map(|r| &r.g_err)),
            final_attitude_err: last.attitude_error,
            rms_attitude_err: rms(tail.iter().map(|r| &r.attitude_error)),
            rms_window,
            pe_margin: None,
            full_gramian_margin: None,
            reduced_gramian_margin: None,
            wall_time_s: None,
        }
    }

    /// `key=value` lines; wall time is left out so the text depends only on the inputs.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: f64| out.push_str(&format!("{k}={v:.16e}\n"));
        put("final_p_err", self.final_p_err);
        put("final_v_err", self.final_v_err);
        put("final_g_err", self.final_g_err);
        put("peak_p_err", self.peak_p_err);
        put("peak_v_err", self.peak_v_err);
        put("peak_g_err", self.peak_g_err);
        put("rms_p_err", self.rms_p_err);
        put("rms_v_err", self.rms_v_err);
        put("rms_g_err", self.rms_g_err);
        put("final_attitude_err", self.final_attitude_err);
        put("rms_attitude_err", self.rms_attitude_err);
        put("rms_window", self.rms_window);
        for (k, v) in [
            ("pe_margin", self.pe_margin),
            ("full_gramian_margin", self.full_gramian_margin),
            ("reduced_gramian_margin", self.reduced_gramian_margin),
        ] {
            if let Some(v) = v {
                put(k, v);
            }
        }
        out
    }
}
