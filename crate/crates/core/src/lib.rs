//! 3D multi-object tracking from monocular camera detections.
//!
//! Detections (2D bounding box plus an estimated camera-to-object distance)
//! are filtered by a Poisson multi-Bernoulli mixture tracker into world/ego
//! frame trajectories. The crate also ships a synthetic scenario simulator
//! and a CLEAR-MOT evaluation harness for closed-loop validation.
//!
//! All numeric code is generic over the scalar type ([`Real`]: `f32` or
//! `f64`); the aliases at the crate root fix the common double-precision
//! instantiation.

pub mod assignment;
pub mod eval;
pub mod gaussian;
pub mod io;
pub mod models;
pub mod pmbm;
pub mod scalar;
pub mod sim;

pub use assignment::{murty_kbest, solve_lap, Assignment, AssignmentError, CostMatrix};
pub use eval::{clear_mot, iou, EvalError, EvalObject, MatchCriterion, MotMetrics};
pub use pmbm::{
    BernoulliComponent, GlobalHypothesis, PmbmConfig, PmbmDensity, PmbmError, PmbmFilter, TrackId,
};
pub use sim::{simulate, GroundTruth, ObjectLifespan, ScenarioConfig, SimError};

pub use gaussian::{
    gm_reduce, moment_match, prepare_measurement, ukf_predict, ukf_update, unscented_transform,
    GaussianDensity, GaussianError, GaussianMixture, MeasurementPrediction, MixtureComponent,
    SigmaParams,
};
pub use models::{
    backproject, cv_transition, detection_to_measurement, project_to_measurement, CameraModel,
    ClassLabel, ConstantVelocityMotion, Detection, MeasurementBounds, MeasurementModel,
    MeasurementVector, ModelError, ModelParams, MotionModel, ObjectState, PinholeMeasurement,
};
pub use scalar::Real;

/// Double-precision aliases for the main types.
pub type GaussianF64 = GaussianDensity<f64>;
pub type MixtureF64 = GaussianMixture<f64>;
pub type ObjectStateF64 = ObjectState<f64>;
pub type DetectionF64 = Detection<f64>;
pub type MeasurementF64 = MeasurementVector<f64>;
pub type CameraModelF64 = CameraModel<f64>;
pub type ModelParamsF64 = ModelParams<f64>;
pub type PmbmDensityF64 = PmbmDensity<f64>;

/// The camera tracker: constant-velocity motion with a pinhole measurement in
/// double precision.
pub type CameraFilter = PmbmFilter<f64, ConstantVelocityMotion, PinholeMeasurement<f64>>;
