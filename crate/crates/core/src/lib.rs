//! Single-range-aided inertial navigation.
//!
//! A lifted linear time-varying model of position, velocity and body-frame
//! gravity driven by one range measurement is estimated by a continuous-discrete
//! Riccati observer; its gravity estimate then feeds a complementary attitude
//! filter on SO(3). The crate also ships a closed-form trajectory simulator and
//! numerical observability certificates for the lifted system.

pub mod attitude;
pub mod augmented;
pub mod cascade;
pub mod observability;
pub mod riccati;
pub mod scenario;
pub mod so3;

pub use attitude::{
    attitude_error, attitude_step, AttitudeConfig, AttitudeError, AttitudeEstimate,
};
pub use augmented::{build_c_family, lift_state, AugmentedState, BodyState9, LtvModel, Vec13};
pub use cascade::{run_cascade, CascadeConfig, CascadeError, CascadeRun, RunSummary, StepRecord};
pub use observability::{cross_check, gramian, pe_margin, GramianLevel, ObservabilityError};
pub use riccati::{
    observer_init, observer_step, RiccatiConfig, RiccatiError, RiccatiObserverState,
};
pub use scenario::{
    run_truth, sense_run, NoiseConfig, RigidBodyTruth, ScenarioError, SensorSample, TrajectorySpec,
    WorldConstants,
};
pub use so3::{exp_so3, project_to_so3, skew, vex, Rotation, So3Error};
