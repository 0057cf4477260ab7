//! Flat TOML run configuration.
//!
//! Every key is optional; missing keys take the defaults of the eight-shaped
//! benchmark run. Unknown keys are rejected.
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `scenario` | `figure_eight`, `free_fall`, `stationary` or `custom` | `figure_eight` |
//! | `dt`, `duration` | sample period and horizon (s) | `0.001`, `20` |
//! | `seed` | master noise seed | `0` |
//! | `out` | output directory | `out` |
//! | `g_i`, `m_i`, `anchor_i` | world constants | `[0,0,9.81]`, `[1,0,1]/√2`, `[0,0,0]` |
//! | `sigma_omega`, `sigma_acc`, `sigma_mag`, `sigma_uwb` | noise standard deviations | `0.01`, `0.03`, `0.1`, `0.1` |
//! | `p0`, `q`, `v` | Riccati tuning (`P0 = p0·I`, `V = v·I`) | `10`, `10`, `1` |
//! | `k1`, `rho1`, `rho2` | attitude gains (`rho2` defaults to `1/‖g_i‖²`) | `2`, `1` |
//! | `x_hat0` | initial augmented estimate (13 values) | zeros |
//! | `r_hat0` | initial attitude estimate as a rotation vector (rad) | `[0,0,0]` |
//! | `free_fall_omega` | body rate of the free-fall preset | `[0.3,-0.2,0.5]` |
//! | `stationary_position` | position of the stationary preset | `[1,0,0]` |
//! | `initial_attitude` | rotation vector of `R(0)` for non-benchmark scenarios | `[0,0,0]` |
//! | `position_poly_{x,y,z}`, `position_sines_{x,y,z}` | custom position: polynomial coefficients and `[amplitude, rad/s, phase]` rows | empty |
//! | `omega_poly_{x,y,z}`, `omega_sines_{x,y,z}` | custom body rate, same layout | empty |
//! | `audit_window`, `audit_stride`, `audit_threshold` | observability audit windows (s) and pass threshold | `2`, `1`, `1e-8` |
//! | `sweep_param`, `sweep_values` | parameter name and grid of the sweep command | none |

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use rangenav::attitude::AttitudeConfig;
use rangenav::augmented::Vec13;
use rangenav::cascade::CascadeConfig;
use rangenav::riccati::RiccatiConfig;
use rangenav::scenario::{
    grid_len, AxisSignal, NoiseConfig, Sinusoid, TrajectorySpec, VectorSignal, WorldConstants,
};
use rangenav::so3::{exp_so3, Vec3};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    FigureEight,
    FreeFall,
    Stationary,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    pub out: PathBuf,

    pub g_i: [f64; 3],
    pub m_i: [f64; 3],
    pub anchor_i: [f64; 3],

    pub sigma_omega: f64,
    pub sigma_acc: f64,
    pub sigma_mag: f64,
    pub sigma_uwb: f64,

    pub p0: f64,
    pub q: f64,
    pub v: f64,
    pub k1: f64,
    pub rho1: f64,
    pub rho2: Option<f64>,
    pub x_hat0: Option<Vec<f64>>,
    pub r_hat0: [f64; 3],

    pub free_fall_omega: [f64; 3],
    pub stationary_position: [f64; 3],
    pub initial_attitude: [f64; 3],
    pub position_poly_x: Vec<f64>,
    pub position_poly_y: Vec<f64>,
    pub position_poly_z: Vec<f64>,
    pub position_sines_x: Vec<[f64; 3]>,
    pub position_sines_y: Vec<[f64; 3]>,
    pub position_sines_z: Vec<[f64; 3]>,
    pub omega_poly_x: Vec<f64>,
    pub omega_poly_y: Vec<f64>,
    pub omega_poly_z: Vec<f64>,
    pub omega_sines_x: Vec<[f64; 3]>,
    pub omega_sines_y: Vec<[f64; 3]>,
    pub omega_sines_z: Vec<[f64; 3]>,

    pub audit_window: f64,
    pub audit_stride: f64,
    pub audit_threshold: f64,

    pub sweep_param: Option<String>,
    pub sweep_values: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let world = WorldConstants::default();
        let noise = NoiseConfig::default();
        RunConfig {
            scenario: ScenarioKind::FigureEight,
            dt: 1e-3,
            duration: 20.0,
            seed: noise.seed,
            out: PathBuf::from("out"),
            g_i: world.g_i.into(),
            m_i: world.m_i.into(),
            anchor_i: world.anchor_i.into(),
            sigma_omega: noise.sigma_omega,
            sigma_acc: noise.sigma_acc,
            sigma_mag: noise.sigma_mag,
            sigma_uwb: noise.sigma_uwb,
            p0: 10.0,
            q: 10.0,
            v: 1.0,
            k1: 2.0,
            rho1: 1.0,
            rho2: None,
            x_hat0: None,
            r_hat0: [0.0; 3],
            free_fall_omega: [0.3, -0.2, 0.5],
            stationary_position: [1.0, 0.0, 0.0],
            initial_attitude: [0.0; 3],
            position_poly_x: Vec::new(),
            position_poly_y: Vec::new(),
            position_poly_z: Vec::new(),
            position_sines_x: Vec::new(),
            position_sines_y: Vec::new(),
            position_sines_z: Vec::new(),
            omega_poly_x: Vec::new(),
            omega_poly_y: Vec::new(),
            omega_poly_z: Vec::new(),
            omega_sines_x: Vec::new(),
            omega_sines_y: Vec::new(),
            omega_sines_z: Vec::new(),
            audit_window: 2.0,
            audit_stride: 1.0,
            audit_threshold: 1e-8,
            sweep_param: None,
            sweep_values: Vec::new(),
        }
    }
}

/// Parameters the sweep command can vary.
pub const SWEEP_PARAMS: &[&str] = &[
    "seed",
    "k1",
    "rho1",
    "rho2",
    "p0",
    "q",
    "v",
    "sigma_omega",
    "sigma_acc",
    "sigma_mag",
    "sigma_uwb",
];

fn axis(poly: &[f64], sines: &[[f64; 3]]) -> AxisSignal {
    AxisSignal {
        poly: poly.to_vec(),
        sines: sines
            .iter()
            .map(|s| Sinusoid::new(s[0], s[1], s[2]))
            .collect(),
    }
}

fn finite(name: &str, values: &[f64]) -> Result<(), ConfigError> {
    if values.iter().any(|x| !x.is_finite()) {
        return invalid(format!("{name} must be finite"));
    }
    Ok(())
}

/// True when `x` is an integer multiple of `step` up to rounding.
fn is_multiple(x: f64, step: f64) -> bool {
    let n = (x / step).round();
    n >= 1.0 && (n * step - x).abs() <= 1e-9 * x.abs().max(1.0)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn world(&self) -> WorldConstants {
        WorldConstants {
            g_i: self.g_i.into(),
            m_i: self.m_i.into(),
            anchor_i: self.anchor_i.into(),
        }
    }

    pub fn noise(&self) -> NoiseConfig {
        NoiseConfig {
            sigma_omega: self.sigma_omega,
            sigma_acc: self.sigma_acc,
            sigma_mag: self.sigma_mag,
            sigma_uwb: self.sigma_uwb,
            seed: self.seed,
        }
    }

    pub fn trajectory(&self) -> TrajectorySpec {
        let world = self.world();
        let attitude = exp_so3(&Vec3::from(self.initial_attitude));
        match self.scenario {
            ScenarioKind::FigureEight => TrajectorySpec::figure_eight(self.duration),
            ScenarioKind::FreeFall => {
                let mut spec =
                    TrajectorySpec::free_fall(&world, self.free_fall_omega.into(), self.duration);
                spec.initial_attitude = attitude;
                spec
            }
            ScenarioKind::Stationary => {
                TrajectorySpec::stationary(self.stationary_position.into(), attitude, self.duration)
            }
            ScenarioKind::Custom => TrajectorySpec {
                position: VectorSignal::new(
                    axis(&self.position_poly_x, &self.position_sines_x),
                    axis(&self.position_poly_y, &self.position_sines_y),
                    axis(&self.position_poly_z, &self.position_sines_z),
                ),
                omega: VectorSignal::new(
                    axis(&self.omega_poly_x, &self.omega_sines_x),
                    axis(&self.omega_poly_y, &self.omega_sines_y),
                    axis(&self.omega_poly_z, &self.omega_sines_z),
                ),
                initial_attitude: attitude,
                horizon: self.duration,
            },
        }
    }

    pub fn cascade(&self) -> CascadeConfig {
        let world = self.world();
        let g2 = world.g_i.norm_squared();
        let mut attitude = AttitudeConfig::with_references(world.m_i, world.g_i);
        attitude.k1 = self.k1;
        attitude.rho1 = self.rho1;
        if let Some(rho2) = self.rho2 {
            attitude.rho2 = rho2;
        }
        CascadeConfig {
            riccati: RiccatiConfig::isotropic(self.p0, self.q, self.v, self.dt, g2),
            attitude,
            x_hat0: self
                .x_hat0
                .as_ref()
                .map_or_else(Vec13::zeros, |x| Vec13::from_column_slice(x)),
            r_hat0: exp_so3(&Vec3::from(self.r_hat0)),
        }
    }

    /// Number of samples, `T/dt + 1`.
    pub fn samples(&self) -> usize {
        (self.duration / self.dt).round() as usize + 1
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        finite("dt/duration", &[self.dt, self.duration])?;
        grid_len(self.dt, self.duration).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.world()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.noise()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(x) = &self.x_hat0 {
            if x.len() != 13 {
                return invalid(format!("x_hat0 needs 13 values, got {}", x.len()));
            }
            finite("x_hat0", x)?;
        }
        for (name, v) in [
            ("r_hat0", &self.r_hat0),
            ("initial_attitude", &self.initial_attitude),
            ("free_fall_omega", &self.free_fall_omega),
            ("stationary_position", &self.stationary_position),
        ] {
            finite(name, v)?;
        }
        let cascade = self.cascade();
        cascade
            .riccati
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cascade
            .attitude
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !self
            .trajectory()
            .position
            .axes
            .iter()
            .chain(&self.trajectory().omega.axes)
            .all(AxisSignal::is_finite)
        {
            return invalid("trajectory coefficients must be finite");
        }
        self.validate_audit()?;
        if let Some(param) = &self.sweep_param {
            if !SWEEP_PARAMS.contains(&param.as_str()) {
                return invalid(format!(
                    "unknown sweep_param {param:?}; expected one of {SWEEP_PARAMS:?}"
                ));
            }
            finite("sweep_values", &self.sweep_values)?;
        }
        Ok(())
    }

    fn validate_audit(&self) -> Result<(), ConfigError> {
        finite(
            "audit settings",
            &[self.audit_window, self.audit_stride, self.audit_threshold],
        )?;
        if !(self.audit_window > 0.0 && self.audit_stride > 0.0) {
            return invalid("audit_window and audit_stride must be positive");
        }
        if !is_multiple(self.audit_window, self.dt) || !is_multiple(self.audit_stride, self.dt) {
            return invalid("audit_window and audit_stride must be multiples of dt");
        }
        Ok(())
    }

    /// True when at least one audit window fits in the run.
    pub fn audit_fits(&self) -> bool {
        self.audit_window <= self.duration + 1e-12
    }

    /// Rejects an audit window longer than the run.
    pub fn check_audit_fits(&self) -> Result<(), ConfigError> {
        if !self.audit_fits() {
            return invalid(format!(
                "audit_window {} s is longer than the run ({} s)",
                self.audit_window, self.duration
            ));
        }
        Ok(())
    }

    /// Copy of the config with one sweep parameter replaced.
    pub fn with_param(&self, name: &str, value: f64) -> Result<Self, ConfigError> {
        let mut c = self.clone();
        match name {
            "seed" => {
                if !(value >= 0.0 && value.fract() == 0.0 && value <= u64::MAX as f64) {
                    return invalid(format!(
                        "seed values must be nonnegative integers, got {value}"
                    ));
                }
                c.seed = value as u64;
            }
            "k1" => c.k1 = value,
            "rho1" => c.rho1 = value,
            "rho2" => c.rho2 = Some(value),
            "p0" => c.p0 = value,
            "q" => c.q = value,
            "v" => c.v = value,
            "sigma_omega" => c.sigma_omega = value,
            "sigma_acc" => c.sigma_acc = value,
            "sigma_mag" => c.sigma_mag = value,
            "sigma_uwb" => c.sigma_uwb = value,
            other => return invalid(format!("unknown sweep_param {other:?}")),
        }
        c.validate()?;
        Ok(c)
    }

    /// The sweep grid, rejecting a missing parameter or an empty grid.
    pub fn sweep_grid(&self) -> Result<(String, Vec<f64>), ConfigError> {
        let Some(param) = self.sweep_param.clone() else {
            return invalid("sweep needs sweep_param");
        };
        if self.sweep_values.is_empty() {
            return invalid("sweep_values is empty");
        }
        Ok((param, self.sweep_values.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.samples(), 20_001);
        assert_eq!(c.cascade().attitude.rho2, 1.0 / (9.81 * 9.81));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            RunConfig::from_toml("sigma_gyro = 0.1"),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn horizon_shorter_than_step_is_rejected() {
        assert!(matches!(
            RunConfig::from_toml("dt = 0.1\nduration = 0.05"),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn audit_window_longer_than_run_is_rejected_only_for_audits() {
        let c = RunConfig::from_toml("duration = 1.0\naudit_window = 2.0").unwrap();
        assert!(!c.audit_fits());
        assert!(matches!(c.check_audit_fits(), Err(ConfigError::Invalid(_))));
        assert!(RunConfig::from_toml("audit_window = 0.0015").is_err());
    }

    #[test]
    fn bad_world_and_gains_are_rejected() {
        assert!(RunConfig::from_toml("m_i = [0.0, 0.0, 1.0]").is_err());
        assert!(RunConfig::from_toml("k1 = -1.0").is_err());
        assert!(RunConfig::from_toml("sigma_mag = -0.1").is_err());
        assert!(RunConfig::from_toml("x_hat0 = [1.0, 2.0]").is_err());
        assert!(RunConfig::from_toml("scenario = \"spiral\"").is_err());
        assert!(RunConfig::from_toml("sweep_param = \"dt\"").is_err());
    }

    #[test]
    fn zero_gain_is_allowed() {
        let c = RunConfig::from_toml("q = 0.0\nv = 0.0").unwrap();
        assert_eq!(c.cascade().riccati.q, 0.0);
    }

    #[test]
    fn custom_scenario_tables() {
        let text = r#"
            scenario = "custom"
            duration = 2.0
            position_poly_x = [1.0, 0.5]
            position_sines_y = [[0.2, 3.0, 0.0]]
            omega_sines_z = [[0.1, 1.0, 1.5707963267948966]]
        "#;
        let c = RunConfig::from_toml(text).unwrap();
        let spec = c.trajectory();
        assert_eq!(spec.position.value(2.0).x, 2.0);
        assert!((spec.position.derivative(0.0, 1).y - 0.6).abs() < 1e-15);
        assert!((spec.omega.value(0.0).z - 0.1).abs() < 1e-15);
    }

    #[test]
    fn sweep_parameters() {
        let c = RunConfig::default();
        assert_eq!(c.with_param("seed", 7.0).unwrap().seed, 7);
        assert!(c.with_param("seed", 1.5).is_err());
        assert_eq!(
            c.with_param("rho2", 0.5).unwrap().cascade().attitude.rho2,
            0.5
        );
        assert!(c.with_param("k1", 0.0).is_err());
        assert!(c.sweep_grid().is_err());
        let c = RunConfig::from_toml("sweep_param = \"k1\"\nsweep_values = []").unwrap();
        assert!(c.sweep_grid().is_err());
    }
}
