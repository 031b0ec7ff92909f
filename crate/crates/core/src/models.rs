//! State, detection and measurement spaces; the constant-velocity motion
//! function and pinhole-camera measurement function; and the scalar model
//! parameters shared by the filter and the simulator.
//!
//! Coordinate convention (camera/ego frame): x right, y down, z forward,
//! all in meters. Bounding-box width/height are in image pixels.

use nalgebra::{DMatrix, DVector, Vector3};
use thiserror::Error;

use crate::gaussian::GaussianMixture;
use crate::scalar::Real;

/// Dimension of [`ObjectState`] as a vector.
pub const STATE_DIM: usize = 8;
/// Dimension of [`MeasurementVector`] as a vector.
pub const MEASUREMENT_DIM: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("non-finite field in {0}")]
    NonFinite(&'static str),
    #[error("state depth is behind the camera (z <= 0)")]
    BehindCamera,
    #[error("degenerate bounding box (empty width or height)")]
    DegenerateBox,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}

/// Kinematic + extent state of one tracked object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectState<T: Real> {
    /// Position in meters.
    pub x: T,
    pub y: T,
    pub z: T,
    /// Velocity in meters/second.
    pub vx: T,
    pub vy: T,
    pub vz: T,
    /// Bounding-box width and height in pixels.
    pub w: T,
    pub h: T,
}

impl<T: Real> ObjectState<T> {
    pub fn validate(&self) -> Result<(), ModelError> {
        let all = [self.x, self.y, self.z, self.vx, self.vy, self.vz, self.w, self.h];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("ObjectState"));
        }
        if !(self.w > T::zero()) || !(self.h > T::zero()) {
            return Err(ModelError::InvalidParameter("bounding-box extent must be positive"));
        }
        Ok(())
    }

    pub fn position(&self) -> Vector3<T> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn velocity(&self) -> Vector3<T> {
        Vector3::new(self.vx, self.vy, self.vz)
    }

    pub fn to_vector(&self) -> DVector<T> {
        DVector::from_column_slice(&[
            self.x, self.y, self.z, self.vx, self.vy, self.vz, self.w, self.h,
        ])
    }

    pub fn from_vector(v: &DVector<T>) -> Result<Self, ModelError> {
        if v.len() != STATE_DIM {
            return Err(ModelError::DimensionMismatch { expected: STATE_DIM, actual: v.len() });
        }
        Ok(Self {
            x: v[0],
            y: v[1],
            z: v[2],
            vx: v[3],
            vy: v[4],
            vz: v[5],
            w: v[6],
            h: v[7],
        })
    }
}

/// Object class reported with a detection. Unrecognized labels are preserved.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub enum ClassLabel {
    #[default]
    Car,
    Pedestrian,
    Cyclist,
    Other(String),
}

impl ClassLabel {
    pub fn parse(s: &str) -> Self {
        match s {
            "Car" => ClassLabel::Car,
            "Pedestrian" => ClassLabel::Pedestrian,
            "Cyclist" => ClassLabel::Cyclist,
            other => ClassLabel::Other(other.to_string()),
        }
    }
}

impl std::fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClassLabel::Car => write!(f, "Car"),
            ClassLabel::Pedestrian => write!(f, "Pedestrian"),
            ClassLabel::Cyclist => write!(f, "Cyclist"),
            ClassLabel::Other(s) => write!(f, "{s}"),
        }
    }
}

/// Raw detector output: a 2D bounding box with an estimated distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection<T: Real> {
    /// Box corners in pixels, `(x_min, y_min)` top-left, `(x_max, y_max)` bottom-right.
    pub x_min: T,
    pub y_min: T,
    pub x_max: T,
    pub y_max: T,
    /// Camera-to-object distance in meters.
    pub d: T,
    /// Detector confidence in `[0, 1]`.
    pub score: T,
    pub class_label: ClassLabel,
}

impl<T: Real> Detection<T> {
    pub fn validate(&self) -> Result<(), ModelError> {
        let all = [self.x_min, self.y_min, self.x_max, self.y_max, self.d, self.score];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("Detection"));
        }
        if !(self.x_min < self.x_max) || !(self.y_min < self.y_max) {
            return Err(ModelError::DegenerateBox);
        }
        if !(self.d > T::zero()) {
            return Err(ModelError::InvalidParameter("distance must be positive"));
        }
        Ok(())
    }
}

/// The filter's measurement space: box center, distance, and box size.
/// The pixel center encodes bearing through the camera intrinsics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementVector<T: Real> {
    /// Box center in pixels.
    pub u_c: T,
    pub v_c: T,
    /// Distance in meters.
    pub d: T,
    /// Box size in pixels.
    pub w: T,
    pub h: T,
}

impl<T: Real> MeasurementVector<T> {
    pub fn validate(&self) -> Result<(), ModelError> {
        let all = [self.u_c, self.v_c, self.d, self.w, self.h];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("MeasurementVector"));
        }
        if !(self.d > T::zero()) {
            return Err(ModelError::InvalidParameter("distance must be positive"));
        }
        if !(self.w > T::zero()) || !(self.h > T::zero()) {
            return Err(ModelError::DegenerateBox);
        }
        Ok(())
    }

    pub fn to_vector(&self) -> DVector<T> {
        DVector::from_column_slice(&[self.u_c, self.v_c, self.d, self.w, self.h])
    }

    pub fn from_vector(v: &DVector<T>) -> Result<Self, ModelError> {
        if v.len() != MEASUREMENT_DIM {
            return Err(ModelError::DimensionMismatch {
                expected: MEASUREMENT_DIM,
                actual: v.len(),
            });
        }
        Ok(Self { u_c: v[0], v_c: v[1], d: v[2], w: v[3], h: v[4] })
    }

    /// Box corners `(x_min, y_min, x_max, y_max)` recovered from center+size.
    pub fn corners(&self) -> (T, T, T, T) {
        let half = T::of(0.5);
        (
            self.u_c - self.w * half,
            self.v_c - self.h * half,
            self.u_c + self.w * half,
            self.v_c + self.h * half,
        )
    }
}

/// Pinhole camera intrinsics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel<T: Real> {
    /// Focal lengths in pixels.
    pub f_u: T,
    pub f_v: T,
    /// Principal point in pixels.
    pub c_u: T,
    pub c_v: T,
    /// Capture rate in Hz.
    pub frame_rate: T,
}

impl<T: Real> CameraModel<T> {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.f_u > T::zero()) || !(self.f_v > T::zero()) {
            return Err(ModelError::InvalidParameter("focal lengths must be positive"));
        }
        let all = [self.f_u, self.f_v, self.c_u, self.c_v, self.frame_rate];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("CameraModel"));
        }
        Ok(())
    }

    /// Seconds per frame.
    pub fn frame_dt(&self) -> T {
        T::one() / self.frame_rate
    }
}

/// Advances positions by `velocity * dt`; velocities and box extent are
/// unchanged (the extent follows a random walk, its noise lives in `Q`).
pub fn cv_transition<T: Real>(state: &ObjectState<T>, dt: T) -> Result<ObjectState<T>, ModelError> {
    state.validate()?;
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(ModelError::InvalidParameter("dt must be positive"));
    }
    Ok(ObjectState {
        x: state.x + state.vx * dt,
        y: state.y + state.vy * dt,
        z: state.z + state.vz * dt,
        ..*state
    })
}

/// Vector form of [`cv_transition`] on the 8-dim state layout, total on all
/// inputs; this is what the sigma points are pushed through.
pub fn cv_transition_vector<T: Real>(x: &DVector<T>, dt: T) -> DVector<T> {
    debug_assert_eq!(x.len(), STATE_DIM);
    let mut out = x.clone();
    out[0] += x[3] * dt;
    out[1] += x[4] * dt;
    out[2] += x[5] * dt;
    out
}

/// Pinhole projection of a state into the measurement space:
/// `u = c_u + f_u x/z`, `v = c_v + f_v y/z`, `d = |position|`, box size copied.
pub fn project_to_measurement<T: Real>(
    state: &ObjectState<T>,
    cam: &CameraModel<T>,
) -> Result<MeasurementVector<T>, ModelError> {
    state.validate()?;
    if !(state.z > T::zero()) {
        return Err(ModelError::BehindCamera);
    }
    Ok(MeasurementVector {
        u_c: cam.c_u + cam.f_u * state.x / state.z,
        v_c: cam.c_v + cam.f_v * state.y / state.z,
        d: state.position().norm(),
        w: state.w,
        h: state.h,
    })
}

/// Vector form of [`project_to_measurement`]; `None` when the point is at or
/// behind the image plane.
pub fn project_vector<T: Real>(x: &DVector<T>, cam: &CameraModel<T>) -> Option<DVector<T>> {
    debug_assert_eq!(x.len(), STATE_DIM);
    let z = x[2];
    if !(z > T::zero()) {
        return None;
    }
    let d = (x[0] * x[0] + x[1] * x[1] + z * z).sqrt();
    Some(DVector::from_column_slice(&[
        cam.c_u + cam.f_u * x[0] / z,
        cam.c_v + cam.f_v * x[1] / z,
        d,
        x[6],
        x[7],
    ]))
}

/// Ray-casting inverse of the projection: pixel center and distance back to
/// a 3D point. Inverse of [`project_to_measurement`] on the position block.
pub fn backproject<T: Real>(
    u_c: T,
    v_c: T,
    d: T,
    cam: &CameraModel<T>,
) -> Result<Vector3<T>, ModelError> {
    if !(d > T::zero()) || !d.is_finite() {
        return Err(ModelError::InvalidParameter("distance must be positive"));
    }
    let a = (u_c - cam.c_u) / cam.f_u;
    let b = (v_c - cam.c_v) / cam.f_v;
    let ray_len = (a * a + b * b + T::one()).sqrt();
    let z = d / ray_len;
    Ok(Vector3::new(a * z, b * z, z))
}

/// Converts a corner-format detection into the filter measurement: midpoint
/// center, side lengths, distance copied.
pub fn detection_to_measurement<T: Real>(
    det: &Detection<T>,
) -> Result<MeasurementVector<T>, ModelError> {
    det.validate()?;
    let half = T::of(0.5);
    Ok(MeasurementVector {
        u_c: (det.x_min + det.x_max) * half,
        v_c: (det.y_min + det.y_max) * half,
        d: det.d,
        w: det.x_max - det.x_min,
        h: det.y_max - det.y_min,
    })
}

/// Deterministic mean function of the object motion.
pub trait MotionModel<T: Real> {
    fn state_dim(&self) -> usize;
    /// Mean next state after `dt` seconds; must be total.
    fn step(&self, x: &DVector<T>, dt: T) -> DVector<T>;
}

/// Deterministic mean function of the sensor, from state to measurement space.
pub trait MeasurementModel<T: Real> {
    fn measurement_dim(&self) -> usize;
    /// Expected measurement, `None` where the sensor model is undefined
    /// (e.g. a point behind the camera).
    fn project(&self, x: &DVector<T>) -> Option<DVector<T>>;
}

/// Constant-velocity motion on the 8-dim object state.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantVelocityMotion;

impl<T: Real> MotionModel<T> for ConstantVelocityMotion {
    fn state_dim(&self) -> usize {
        STATE_DIM
    }

    fn step(&self, x: &DVector<T>, dt: T) -> DVector<T> {
        cv_transition_vector(x, dt)
    }
}

/// Pinhole-camera measurement on the 8-dim object state.
#[derive(Debug, Clone, Copy)]
pub struct PinholeMeasurement<T: Real> {
    pub camera: CameraModel<T>,
}

impl<T: Real> MeasurementModel<T> for PinholeMeasurement<T> {
    fn measurement_dim(&self) -> usize {
        MEASUREMENT_DIM
    }

    fn project(&self, x: &DVector<T>) -> Option<DVector<T>> {
        project_vector(x, &self.camera)
    }
}

/// Axis-aligned bounds of the measurement space, used both for the uniform
/// clutter density `c(z) = 1/volume` and for sampling clutter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementBounds<T: Real> {
    pub u: (T, T),
    pub v: (T, T),
    pub d: (T, T),
    pub w: (T, T),
    pub h: (T, T),
}

impl<T: Real> MeasurementBounds<T> {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (lo, hi) in [self.u, self.v, self.d, self.w, self.h] {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(ModelError::InvalidParameter(
                    "measurement bounds must be finite, non-empty intervals",
                ));
            }
        }
        Ok(())
    }

    /// Product of the five side lengths.
    pub fn volume(&self) -> T {
        [self.u, self.v, self.d, self.w, self.h]
            .iter()
            .fold(T::one(), |acc, (lo, hi)| acc * (*hi - *lo))
    }
}

/// All scalar model parameters of the standard point-object models.
#[derive(Debug, Clone)]
pub struct ModelParams<T: Real> {
    /// Probability that an existing object is detected.
    pub p_detect: T,
    /// Probability that an object survives one time step.
    pub p_survive: T,
    /// Expected number of clutter detections per frame.
    pub clutter_rate: T,
    /// Extent of the measurement space; the uniform clutter density is
    /// `1 / clutter_volume()`.
    pub clutter_bounds: MeasurementBounds<T>,
    /// Process-noise covariance over the state space.
    pub process_noise: DMatrix<T>,
    /// Measurement-noise covariance over the measurement space.
    pub measurement_noise: DMatrix<T>,
    /// Birth intensity: where and how often new objects appear.
    pub birth: GaussianMixture<T>,
    /// Seconds per frame.
    pub dt: T,
}

impl<T: Real> ModelParams<T> {
    /// Measurement-space volume, so the clutter spatial density is its inverse.
    pub fn clutter_volume(&self) -> T {
        self.clutter_bounds.volume()
    }

    /// Log of the clutter intensity `kappa = lambda / volume`; `-inf` for a
    /// clutter-free model.
    pub fn log_clutter_intensity(&self) -> T {
        if self.clutter_rate == T::zero() {
            T::neg_infinity()
        } else {
            self.clutter_rate.ln() - self.clutter_volume().ln()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (v, name) in [(self.p_detect, "p_detect"), (self.p_survive, "p_survive")] {
            if !(v >= T::zero() && v <= T::one()) {
                return Err(ModelError::InvalidParameter(match name {
                    "p_detect" => "p_detect must be in [0, 1]",
                    _ => "p_survive must be in [0, 1]",
                }));
            }
        }
        if !(self.clutter_rate >= T::zero()) || !self.clutter_rate.is_finite() {
            return Err(ModelError::InvalidParameter("clutter_rate must be non-negative"));
        }
        self.clutter_bounds.validate()?;
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(ModelError::InvalidParameter("dt must be positive"));
        }
        let n = self.process_noise.nrows();
        if self.process_noise.ncols() != n {
            return Err(ModelError::DimensionMismatch { expected: n, actual: self.process_noise.ncols() });
        }
        let m = self.measurement_noise.nrows();
        if self.measurement_noise.ncols() != m {
            return Err(ModelError::DimensionMismatch {
                expected: m,
                actual: self.measurement_noise.ncols(),
            });
        }
        for c in &self.birth.components {
            c.density.validate().map_err(|_| ModelError::InvalidParameter("birth component"))?;
            if c.density.dim() != n {
                return Err(ModelError::DimensionMismatch {
                    expected: n,
                    actual: c.density.dim(),
                });
            }
        }
        Ok(())
    }
}

/// Discretized white-acceleration process noise for the CV model, plus a
/// random walk on the box extent. Axis order `[x y z vx vy vz w h]`.
pub fn cv_process_noise<T: Real>(dt: T, sigma_accel: T, sigma_extent: T) -> DMatrix<T> {
    let mut q = DMatrix::zeros(STATE_DIM, STATE_DIM);
    let a2 = sigma_accel * sigma_accel;
    let dt2 = dt * dt;
    let dt3 = dt2 * dt;
    let dt4 = dt2 * dt2;
    let quarter = T::of(0.25);
    let half = T::of(0.5);
    for axis in 0..3 {
        q[(axis, axis)] = quarter * dt4 * a2;
        q[(axis, axis + 3)] = half * dt3 * a2;
        q[(axis + 3, axis)] = half * dt3 * a2;
        q[(axis + 3, axis + 3)] = dt2 * a2;
    }
    let e2 = sigma_extent * sigma_extent * dt;
    q[(6, 6)] = e2;
    q[(7, 7)] = e2;
    q
}

/// Diagonal measurement noise from per-channel standard deviations
/// `(pixel, distance, extent)` for `(u, v), d, (w, h)`.
pub fn diagonal_measurement_noise<T: Real>(
    sigma_pixel: T,
    sigma_distance: T,
    sigma_extent: T,
) -> DMatrix<T> {
    DMatrix::from_diagonal(&DVector::from_column_slice(&[
        sigma_pixel * sigma_pixel,
        sigma_pixel * sigma_pixel,
        sigma_distance * sigma_distance,
        sigma_extent * sigma_extent,
        sigma_extent * sigma_extent,
    ]))
}
