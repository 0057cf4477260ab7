//! Complementary filter on SO(3) driven by the gyro, the vector sensor and the
//! gravity estimate of the Riccati observer.
//!
//! ```text
//! R̂̇ = R̂[ω_y + k₁σ]×
//! σ  = ρ₁(m_y × R̂ᵀm_I) + ρ₂(ĝ × R̂ᵀg_I)
//! ```

use thiserror::Error;

use crate::so3::{exp_so3, project_to_so3, rotation_angle, Mat3, Rotation, So3Error, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttitudeError {
    #[error("bad attitude filter configuration: {0}")]
    BadConfig(String),
    #[error("non-finite input to the attitude filter: {0}")]
    NonFiniteInput(&'static str),
    #[error(transparent)]
    So3(#[from] So3Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeConfig {
    pub k1: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub m_i: Vec3,
    pub g_i: Vec3,
}

impl AttitudeConfig {
    /// `k₁ = 2`, `ρ₁ = 1`, `ρ₂ = 1/‖g_I‖²` so both alignment terms are of unit scale.
    pub fn with_references(m_i: Vec3, g_i: Vec3) -> Self {
        AttitudeConfig {
            k1: 2.0,
            rho1: 1.0,
            rho2: 1.0 / g_i.norm_squared(),
            m_i,
            g_i,
        }
    }

    pub fn validate(&self) -> Result<(), AttitudeError> {
        for (name, gain) in [("k1", self.k1), ("rho1", self.rho1), ("rho2", self.rho2)] {
            if !(gain > 0.0 && gain.is_finite()) {
                return Err(AttitudeError::BadConfig(format!(
                    "{name} must be positive, got {gain}"
                )));
            }
        }
        if self.m_i.cross(&self.g_i).norm() <= 1e-6 {
            return Err(AttitudeError::BadConfig(
                "reference vectors are collinear".into(),
            ));
        }
        Ok(())
    }

    /// `M_π = ρ₁ m mᵀ + ρ₂ g gᵀ`; π-rotations about its eigenvectors are the
    /// undesired equilibria of the filter.
    pub fn m_pi(&self) -> Mat3 {
        self.rho1 * self.m_i * self.m_i.transpose() + self.rho2 * self.g_i * self.g_i.transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeEstimate {
    pub r_hat: Rotation,
    pub t: f64,
}

pub fn correction_term(
    r_hat: &Rotation,
    m_y_b: &Vec3,
    g_b_hat: &Vec3,
    config: &AttitudeConfig,
) -> Vec3 {
    let rt = r_hat.transpose();
    config.rho1 * m_y_b.cross(&(rt * config.m_i)) + config.rho2 * g_b_hat.cross(&(rt * config.g_i))
}

/// `R̂⁺ = R̂ · exp(dt (ω_y + k₁σ))`, re-projected onto SO(3).
pub fn attitude_step(
    est: &AttitudeEstimate,
    omega_y: &Vec3,
    m_y_b: &Vec3,
    g_b_hat: &Vec3,
    dt: f64,
    config: &AttitudeConfig,
) -> Result<AttitudeEstimate, AttitudeError> {
    for (name, v) in [
        ("angular velocity", omega_y),
        ("vector measurement", m_y_b),
        ("gravity estimate", g_b_hat),
    ] {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(AttitudeError::NonFiniteInput(name));
        }
    }
    if !dt.is_finite() {
        return Err(AttitudeError::NonFiniteInput("time step"));
    }
    let sigma = correction_term(&est.r_hat, m_y_b, g_b_hat, config);
    let increment = exp_so3(&(dt * (omega_y + config.k1 * sigma)));
    let r_hat = project_to_so3((est.r_hat * increment).matrix())?;
    Ok(AttitudeEstimate {
        r_hat,
        t: est.t + dt,
    })
}

/// Angle of the right-invariant error `R R̂ᵀ`.
pub fn attitude_error(r: &Rotation, r_hat: &Rotation) -> f64 {
    rotation_angle(&(*r * r_hat.transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::skew;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn config() -> AttitudeConfig {
        AttitudeConfig::with_references(
            Vec3::new(1.0, 0.0, 1.0) / 2.0f64.sqrt(),
            Vec3::new(0.0, 0.0, 9.81),
        )
    }

    #[test]
    fn aligned_correction_vanishes() {
        let c = config();
        let r = exp_so3(&Vec3::new(0.3, -0.8, 1.9));
        let m_y = r.transpose() * c.m_i;
        let g_hat = r.transpose() * c.g_i;
        assert!(correction_term(&r, &m_y, &g_hat, &c).norm() < 1e-15);
        assert_eq!(
            correction_term(&r, &Vec3::zeros(), &Vec3::zeros(), &c),
            Vec3::zeros()
        );
    }

    #[test]
    fn single_vector_correction_magnitude() {
        let theta = 0.05;
        let c = AttitudeConfig {
            k1: 1.0,
            rho1: 2.0,
            rho2: 0.0,
            m_i: Vec3::x(),
            g_i: Vec3::z(),
        };
        let r = exp_so3(&(theta * Vec3::z()));
        let m_y = r.transpose() * c.m_i;
        let sigma = correction_term(&Rotation::identity(), &m_y, &Vec3::zeros(), &c);
        assert_relative_eq!(sigma, 2.0 * theta.sin() * Vec3::z(), epsilon = 1e-15);
    }

    #[test]
    fn single_vector_cannot_see_rotation_about_itself() {
        let c = AttitudeConfig {
            k1: 1.0,
            rho1: 1.0,
            rho2: 0.0,
            m_i: Vec3::new(1.0, 2.0, -0.5).normalize(),
            g_i: Vec3::z(),
        };
        // true attitude differs from the estimate by a rotation about m_I
        let r = exp_so3(&(0.8 * c.m_i));
        let m_y = r.transpose() * c.m_i;
        let sigma = correction_term(&Rotation::identity(), &m_y, &Vec3::zeros(), &c);
        assert!(sigma.norm() < 1e-15);
    }

    #[test]
    fn equilibrium_and_pure_integration() {
        let c = config();
        let est = AttitudeEstimate {
            r_hat: exp_so3(&Vec3::new(0.1, 0.2, 0.3)),
            t: 0.0,
        };
        let rt = est.r_hat.transpose();
        let next =
            attitude_step(&est, &Vec3::zeros(), &(rt * c.m_i), &(rt * c.g_i), 1e-3, &c).unwrap();
        assert!((next.r_hat.matrix() - est.r_hat.matrix()).norm() < 1e-12);

        let dt = 1e-3;
        let omega = PI / dt * Vec3::y();
        let next = attitude_step(&est, &omega, &(rt * c.m_i), &(rt * c.g_i), dt, &c).unwrap();
        let expected = est.r_hat * exp_so3(&(PI * Vec3::y()));
        assert!((next.r_hat.matrix() - expected.matrix()).norm() < 1e-12);
        assert_eq!(next.t, dt);
    }

    #[test]
    fn rejects_non_finite() {
        let c = config();
        let est = AttitudeEstimate {
            r_hat: Rotation::identity(),
            t: 0.0,
        };
        let bad = Vec3::new(f64::NAN, 0.0, 0.0);
        assert!(matches!(
            attitude_step(&est, &bad, &Vec3::x(), &Vec3::z(), 1e-3, &c),
            Err(AttitudeError::NonFiniteInput(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(config().validate().is_ok());
        let mut c = config();
        c.k1 = 0.0;
        assert!(c.validate().is_err());
        let mut c = config();
        c.m_i = Vec3::z();
        assert!(c.validate().is_err());
    }

    #[test]
    fn error_angle_examples() {
        let r = exp_so3(&Vec3::new(0.4, 0.1, -0.2));
        assert_eq!(attitude_error(&r, &r), 0.0);
        assert_relative_eq!(
            attitude_error(&exp_so3(&(PI * Vec3::x())), &Rotation::identity()),
            PI,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            attitude_error(&exp_so3(&(0.5 * Vec3::y())), &Rotation::identity()),
            0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn stays_on_so3_under_long_excitation() {
        let c = config();
        let mut est = AttitudeEstimate {
            r_hat: Rotation::identity(),
            t: 0.0,
        };
        let dt = 1e-3;
        for k in 0..1_000_000u32 {
            let t = f64::from(k) * dt;
            let omega = Vec3::new((3.0 * t).sin() * 5.0, 2.0 * (0.7 * t).cos(), -4.0);
            let m_y = Vec3::new((t).cos(), (t).sin(), 0.3);
            let g_hat = skew(&Vec3::new(0.1, 0.2, 0.3)) * Vec3::new(1.0, 9.0, -3.0);
            est = attitude_step(&est, &omega, &m_y, &g_hat, dt, &c).unwrap();
            if k % 100_000 == 0 {
                assert!(est.r_hat.is_valid(1e-9));
            }
        }
        assert!(est.r_hat.is_valid(1e-9));
    }
}
