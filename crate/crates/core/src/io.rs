//! File formats: detections, tracks, ground truth, camera calibration, ego
//! poses, and the TOML filter/scenario configuration files.
//!
//! All formats are plain text. Reals are written in Rust's shortest
//! round-trip notation so that parse(write(x)) recovers x exactly. Parsers
//! never panic on malformed input; every failure carries a line number.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{GaussianDensity, GaussianMixture, SigmaParams};
use crate::models::{
    backproject, cv_process_noise, diagonal_measurement_noise, project_to_measurement,
    CameraModel, ClassLabel, Detection, MeasurementBounds, ModelParams, ObjectState, STATE_DIM,
};
use crate::pmbm::PmbmConfig;
use crate::sim::ScenarioConfig;

pub const DETECTIONS_HEADER: &str = "frame,class,score,x_min,y_min,x_max,y_max,distance";
pub const TRACKS_HEADER: &str =
    "frame,track_id,class,x_min,y_min,x_max,y_max,x,y,z,vx,vy,vz,existence";
pub const POSES_HEADER: &str = "frame,tx,ty,tz,qx,qy,qz,qw";

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing key '{0}' in calibration file")]
    MissingKey(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

fn parse_err(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse { line, message: message.into() }
}

fn parse_field<T: std::str::FromStr>(
    value: &str,
    line: usize,
    name: &str,
) -> Result<T, IoError> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| parse_err(line, format!("cannot parse {name} from '{}'", value.trim())))
}

fn read_lossy(path: &Path) -> Result<String, IoError> {
    let bytes = std::fs::read(path)?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

/// One row of a detections file.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFileRecord {
    pub frame: usize,
    pub detection: Detection<f64>,
}

/// Parses `detections.csv`. Records are grouped by frame; frames without
/// records yield empty sets; in-frame order is preserved. An empty file
/// yields no frames.
pub fn parse_detections(path: &Path) -> Result<Vec<Vec<Detection<f64>>>, IoError> {
    let text = read_lossy(path)?;
    let mut records: Vec<DetectionFileRecord> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || (idx == 0 && line == DETECTIONS_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(parse_err(line_no, format!("expected 8 fields, found {}", fields.len())));
        }
        let frame: usize = parse_field(fields[0], line_no, "frame")?;
        let det = Detection {
            class_label: ClassLabel::parse(fields[1].trim()),
            score: parse_field(fields[2], line_no, "score")?,
            x_min: parse_field(fields[3], line_no, "x_min")?,
            y_min: parse_field(fields[4], line_no, "y_min")?,
            x_max: parse_field(fields[5], line_no, "x_max")?,
            y_max: parse_field(fields[6], line_no, "y_max")?,
            d: parse_field(fields[7], line_no, "distance")?,
        };
        det.validate().map_err(|e| parse_err(line_no, e.to_string()))?;
        records.push(DetectionFileRecord { frame, detection: det });
    }
    Ok(group_by_frame(records, |r| r.frame, |r| r.detection))
}

fn group_by_frame<R, T>(
    records: Vec<R>,
    frame: impl Fn(&R) -> usize,
    value: impl Fn(R) -> T,
) -> Vec<Vec<T>> {
    let n_frames = records.iter().map(|r| frame(r) + 1).max().unwrap_or(0);
    let mut out: Vec<Vec<T>> = (0..n_frames).map(|_| Vec::new()).collect();
    for r in records {
        let f = frame(&r);
        out[f].push(value(r));
    }
    out
}

pub fn write_detections(path: &Path, frames: &[Vec<Detection<f64>>]) -> Result<(), IoError> {
    let mut out = String::from(DETECTIONS_HEADER);
    out.push('\n');
    for (frame, dets) in frames.iter().enumerate() {
        for d in dets {
            writeln!(
                out,
                "{frame},{},{},{},{},{},{},{}",
                d.class_label, d.score, d.x_min, d.y_min, d.x_max, d.y_max, d.d
            )
            .expect("string write");
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Parses KITTI tracking label lines (whitespace-separated devkit layout:
/// frame, track id, type, truncated, occluded, alpha, 4 bbox corner columns,
/// 3 dimensions, 3 location coordinates, rotation, optional score). The
/// camera-to-object distance is the norm of the location; `DontCare` rows are
/// skipped.
pub fn parse_kitti_labels(path: &Path) -> Result<Vec<Vec<Detection<f64>>>, IoError> {
    let text = read_lossy(path)?;
    let mut records: Vec<DetectionFileRecord> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 16 {
            return Err(parse_err(
                line_no,
                format!("expected at least 16 whitespace-separated fields, found {}", fields.len()),
            ));
        }
        let class = ClassLabel::parse(fields[2]);
        if matches!(&class, ClassLabel::Other(s) if s == "DontCare") {
            continue;
        }
        let frame: usize = parse_field(fields[0], line_no, "frame")?;
        let x: f64 = parse_field(fields[13], line_no, "location x")?;
        let y: f64 = parse_field(fields[14], line_no, "location y")?;
        let z: f64 = parse_field(fields[15], line_no, "location z")?;
        let score: f64 = if fields.len() > 17 {
            parse_field(fields[17], line_no, "score")?
        } else {
            1.0
        };
        let det = Detection {
            x_min: parse_field(fields[6], line_no, "bbox left")?,
            y_min: parse_field(fields[7], line_no, "bbox top")?,
            x_max: parse_field(fields[8], line_no, "bbox right")?,
            y_max: parse_field(fields[9], line_no, "bbox bottom")?,
            d: (x * x + y * y + z * z).sqrt(),
            score,
            class_label: class,
        };
        det.validate().map_err(|e| parse_err(line_no, e.to_string()))?;
        records.push(DetectionFileRecord { frame, detection: det });
    }
    Ok(group_by_frame(records, |r| r.frame, |r| r.detection))
}

/// One row of a tracks (or ground-truth) file: reprojected box, full state,
/// and the existence probability of the estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackFileRecord {
    pub frame: usize,
    pub track_id: u64,
    pub class_label: ClassLabel,
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub existence: f64,
}

impl TrackFileRecord {
    pub fn state(&self) -> ObjectState<f64> {
        ObjectState {
            x: self.x,
            y: self.y,
            z: self.z,
            vx: self.vx,
            vy: self.vy,
            vz: self.vz,
            w: self.x_max - self.x_min,
            h: self.y_max - self.y_min,
        }
    }
}

/// Builds track records from per-frame `(id, existence, state)` estimates in
/// the camera frame. The box is reprojected through the camera; states behind
/// the camera produce no record. With poses given, positions and velocities
/// are transformed into the world frame.
pub fn track_records_from_estimates(
    frames: &[Vec<(u64, f64, ObjectState<f64>)>],
    camera: &CameraModel<f64>,
    poses: Option<&[Pose]>,
) -> Vec<TrackFileRecord> {
    let mut records = Vec::new();
    for (frame, estimates) in frames.iter().enumerate() {
        for (id, existence, state) in estimates {
            let Ok(m) = project_to_measurement(state, camera) else { continue };
            let (x_min, y_min, x_max, y_max) = m.corners();
            let (p, v) = match poses.and_then(|p| p.get(frame)) {
                Some(pose) => (
                    pose.rotation * state.position() + pose.translation,
                    pose.rotation * state.velocity(),
                ),
                None => (state.position(), state.velocity()),
            };
            records.push(TrackFileRecord {
                frame,
                track_id: *id,
                class_label: ClassLabel::Car,
                x_min,
                y_min,
                x_max,
                y_max,
                x: p.x,
                y: p.y,
                z: p.z,
                vx: v.x,
                vy: v.y,
                vz: v.z,
                existence: *existence,
            });
        }
    }
    records
}

/// Writes `tracks.csv` rows in deterministic order (frame, then track id).
pub fn write_tracks(path: &Path, records: &[TrackFileRecord]) -> Result<(), IoError> {
    let mut sorted: Vec<&TrackFileRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.frame, r.track_id));
    let mut out = String::from(TRACKS_HEADER);
    out.push('\n');
    for r in sorted {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.frame,
            r.track_id,
            r.class_label,
            r.x_min,
            r.y_min,
            r.x_max,
            r.y_max,
            r.x,
            r.y,
            r.z,
            r.vx,
            r.vy,
            r.vz,
            r.existence
        )
        .expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Parses a tracks file into per-frame record lists.
pub fn parse_tracks(path: &Path) -> Result<Vec<Vec<TrackFileRecord>>, IoError> {
    let text = read_lossy(path)?;
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || (idx == 0 && line == TRACKS_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 14 {
            return Err(parse_err(line_no, format!("expected 14 fields, found {}", fields.len())));
        }
        let record = TrackFileRecord {
            frame: parse_field(fields[0], line_no, "frame")?,
            track_id: parse_field(fields[1], line_no, "track_id")?,
            class_label: ClassLabel::parse(fields[2].trim()),
            x_min: parse_field(fields[3], line_no, "x_min")?,
            y_min: parse_field(fields[4], line_no, "y_min")?,
            x_max: parse_field(fields[5], line_no, "x_max")?,
            y_max: parse_field(fields[6], line_no, "y_max")?,
            x: parse_field(fields[7], line_no, "x")?,
            y: parse_field(fields[8], line_no, "y")?,
            z: parse_field(fields[9], line_no, "z")?,
            vx: parse_field(fields[10], line_no, "vx")?,
            vy: parse_field(fields[11], line_no, "vy")?,
            vz: parse_field(fields[12], line_no, "vz")?,
            existence: parse_field(fields[13], line_no, "existence")?,
        };
        records.push(record);
    }
    Ok(group_by_frame(records, |r| r.frame, |r| r))
}

/// Plain-text `key=value` camera calibration.
pub fn parse_calibration(path: &Path) -> Result<CameraModel<f64>, IoError> {
    let text = read_lossy(path)?;
    let mut values: std::collections::BTreeMap<String, f64> = std::collections::BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(parse_err(line_no, "expected key=value"));
        };
        let v: f64 = parse_field(value, line_no, key.trim())?;
        values.insert(key.trim().to_string(), v);
    }
    let get = |key: &str| values.get(key).copied().ok_or_else(|| IoError::MissingKey(key.into()));
    let cam = CameraModel {
        f_u: get("f_u")?,
        f_v: get("f_v")?,
        c_u: get("c_u")?,
        c_v: get("c_v")?,
        frame_rate: get("frame_rate")?,
    };
    cam.validate().map_err(|e| IoError::Config(e.to_string()))?;
    Ok(cam)
}

pub fn write_calibration(path: &Path, camera: &CameraModel<f64>) -> Result<(), IoError> {
    let text = format!(
        "f_u={}\nf_v={}\nc_u={}\nc_v={}\nframe_rate={}\n",
        camera.f_u, camera.f_v, camera.c_u, camera.c_v, camera.frame_rate
    );
    std::fs::write(path, text)?;
    Ok(())
}

/// Ego pose: the rigid transform from the camera/ego frame to the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub translation: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

/// Parses `poses.csv` (`frame,tx,ty,tz,qx,qy,qz,qw`); frames must be 0-based
/// and contiguous.
pub fn parse_poses(path: &Path) -> Result<Vec<Pose>, IoError> {
    let text = read_lossy(path)?;
    let mut poses = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || (idx == 0 && line == POSES_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(parse_err(line_no, format!("expected 8 fields, found {}", fields.len())));
        }
        let frame: usize = parse_field(fields[0], line_no, "frame")?;
        if frame != poses.len() {
            return Err(parse_err(line_no, format!("expected frame {}, found {frame}", poses.len())));
        }
        let v: Vec<f64> = fields[1..]
            .iter()
            .map(|f| parse_field(f, line_no, "pose component"))
            .collect::<Result<_, _>>()?;
        poses.push(Pose {
            translation: Vector3::new(v[0], v[1], v[2]),
            rotation: UnitQuaternion::from_quaternion(Quaternion::new(v[6], v[3], v[4], v[5])),
        });
    }
    Ok(poses)
}

// ---------------------------------------------------------------------------
// Configuration files (TOML)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Diagonal override; takes precedence over the scalar sigmas.
    pub diag: Option<Vec<f64>>,
    pub sigma_accel: f64,
    pub sigma_pixel: f64,
    pub sigma_distance: f64,
    pub sigma_extent: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            diag: None,
            sigma_accel: 2.0,
            sigma_pixel: 4.0,
            sigma_distance: 1.5,
            sigma_extent: 4.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BirthComponentSpec {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov_diag: Vec<f64>,
}

impl Default for BirthComponentSpec {
    fn default() -> Self {
        Self { weight: 0.1, mean: vec![0.0; STATE_DIM], cov_diag: vec![1.0; STATE_DIM] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSpec {
    pub u: [f64; 2],
    pub v: [f64; 2],
    pub d: [f64; 2],
    pub w: [f64; 2],
    pub h: [f64; 2],
}

impl Default for BoundsSpec {
    fn default() -> Self {
        // KITTI-scale image, distances to 80 m.
        Self {
            u: [0.0, 1242.0],
            v: [0.0, 375.0],
            d: [0.5, 80.0],
            w: [4.0, 400.0],
            h: [4.0, 300.0],
        }
    }
}

impl BoundsSpec {
    fn to_bounds(&self) -> MeasurementBounds<f64> {
        MeasurementBounds {
            u: (self.u[0], self.u[1]),
            v: (self.v[0], self.v[1]),
            d: (self.d[0], self.d[1]),
            w: (self.w[0], self.w[1]),
            h: (self.h[0], self.h[1]),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub p_detect: f64,
    pub p_survive: f64,
    pub clutter_rate: f64,
    /// Seconds per frame; defaults to the camera frame rate.
    pub dt: Option<f64>,
    pub clutter_bounds: BoundsSpec,
    pub process_noise: NoiseSpec,
    pub measurement_noise: NoiseSpec,
    /// Explicit birth mixture; when empty a coarse grid over the camera
    /// frustum (up to the distance bound) carrying `birth_mass` is used.
    pub birth: Vec<BirthComponentSpec>,
    pub birth_mass: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            p_detect: 0.9,
            p_survive: 0.99,
            clutter_rate: 5.0,
            dt: None,
            clutter_bounds: BoundsSpec::default(),
            process_noise: NoiseSpec::default(),
            measurement_noise: NoiseSpec::default(),
            birth: Vec::new(),
            birth_mass: 0.3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SigmaSpec {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for SigmaSpec {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 2.0, kappa: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSpec {
    pub extract_threshold: f64,
    pub hypothesis_weight_min: f64,
    pub max_hypotheses: usize,
    pub existence_min: f64,
    pub gate_prob: f64,
    pub max_children: usize,
    pub duplicate_tol: f64,
    pub ppp_prune_threshold: f64,
    pub ppp_merge_distance: f64,
    pub ppp_max_components: usize,
    pub sigma: SigmaSpec,
}

impl Default for FilterSpec {
    fn default() -> Self {
        let d = PmbmConfig::<f64>::default();
        Self {
            extract_threshold: d.extract_threshold,
            hypothesis_weight_min: d.hypothesis_weight_min,
            max_hypotheses: d.max_hypotheses,
            existence_min: d.existence_min,
            gate_prob: d.gate_prob,
            max_children: d.max_children,
            duplicate_tol: d.duplicate_tol,
            ppp_prune_threshold: d.ppp_prune_threshold,
            ppp_merge_distance: d.ppp_merge_distance,
            ppp_max_components: d.ppp_max_components,
            sigma: SigmaSpec::default(),
        }
    }
}

/// The filter configuration file: model parameters plus runtime knobs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfigFile {
    pub model: ModelSpec,
    pub filter: FilterSpec,
}

impl FilterConfigFile {
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = read_lossy(path)?;
        toml::from_str(&text).map_err(|e| IoError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Resolves the file into concrete model parameters and filter config for
    /// the given camera.
    pub fn build(
        &self,
        camera: &CameraModel<f64>,
    ) -> Result<(ModelParams<f64>, PmbmConfig<f64>), IoError> {
        let m = &self.model;
        let dt = m.dt.unwrap_or_else(|| camera.frame_dt());
        let bounds = m.clutter_bounds.to_bounds();

        let process_noise = match &m.process_noise.diag {
            Some(diag) if diag.len() == STATE_DIM => {
                DMatrix::from_diagonal(&DVector::from_column_slice(diag))
            }
            Some(diag) => {
                return Err(IoError::Config(format!(
                    "process_noise.diag needs {STATE_DIM} entries, found {}",
                    diag.len()
                )))
            }
            None => cv_process_noise(dt, m.process_noise.sigma_accel, m.process_noise.sigma_extent),
        };
        let measurement_noise = match &m.measurement_noise.diag {
            Some(diag) if diag.len() == 5 => {
                DMatrix::from_diagonal(&DVector::from_column_slice(diag))
            }
            Some(diag) => {
                return Err(IoError::Config(format!(
                    "measurement_noise.diag needs 5 entries, found {}",
                    diag.len()
                )))
            }
            None => diagonal_measurement_noise(
                m.measurement_noise.sigma_pixel,
                m.measurement_noise.sigma_distance,
                m.measurement_noise.sigma_extent,
            ),
        };

        let birth = if m.birth.is_empty() {
            default_birth_grid(camera, &bounds, m.birth_mass)
        } else {
            let mut mix = GaussianMixture::empty();
            for (i, spec) in m.birth.iter().enumerate() {
                if spec.mean.len() != STATE_DIM || spec.cov_diag.len() != STATE_DIM {
                    return Err(IoError::Config(format!(
                        "birth component {i} needs {STATE_DIM}-dim mean and cov_diag"
                    )));
                }
                if spec.weight <= 0.0 {
                    return Err(IoError::Config(format!("birth component {i} weight must be positive")));
                }
                mix.push(
                    spec.weight.ln(),
                    GaussianDensity::new_unchecked(
                        DVector::from_column_slice(&spec.mean),
                        DMatrix::from_diagonal(&DVector::from_column_slice(&spec.cov_diag)),
                    ),
                );
            }
            mix
        };

        let params = ModelParams {
            p_detect: m.p_detect,
            p_survive: m.p_survive,
            clutter_rate: m.clutter_rate,
            clutter_bounds: bounds,
            process_noise,
            measurement_noise,
            birth,
            dt,
        };
        params.validate().map_err(|e| IoError::Config(e.to_string()))?;

        let f = &self.filter;
        let config = PmbmConfig {
            extract_threshold: f.extract_threshold,
            hypothesis_weight_min: f.hypothesis_weight_min,
            max_hypotheses: f.max_hypotheses,
            existence_min: f.existence_min,
            gate_prob: f.gate_prob,
            max_children: f.max_children,
            duplicate_tol: f.duplicate_tol,
            ppp_prune_threshold: f.ppp_prune_threshold,
            ppp_merge_distance: f.ppp_merge_distance,
            ppp_max_components: f.ppp_max_components,
            sigma: SigmaParams {
                alpha: f.sigma.alpha,
                beta: f.sigma.beta,
                kappa: f.sigma.kappa,
            },
        };
        Ok((params, config))
    }
}

/// A coarse birth grid over the camera frustum: a few depth shells, three
/// image columns each, with covariances wide enough to catch objects
/// appearing anywhere nearby.
pub fn default_birth_grid(
    camera: &CameraModel<f64>,
    bounds: &MeasurementBounds<f64>,
    total_mass: f64,
) -> GaussianMixture<f64> {
    let depths: Vec<f64> = [10.0, 25.0, 45.0, 70.0]
        .into_iter()
        .filter(|d| *d > bounds.d.0 && *d < bounds.d.1)
        .collect();
    let depths = if depths.is_empty() {
        vec![0.5 * (bounds.d.0 + bounds.d.1)]
    } else {
        depths
    };
    let u_positions = [
        bounds.u.0 + 0.17 * (bounds.u.1 - bounds.u.0),
        bounds.u.0 + 0.5 * (bounds.u.1 - bounds.u.0),
        bounds.u.0 + 0.83 * (bounds.u.1 - bounds.u.0),
    ];
    let v_center = bounds.v.0 + 0.5 * (bounds.v.1 - bounds.v.0);

    let mut mix = GaussianMixture::empty();
    let n = (depths.len() * u_positions.len()) as f64;
    let log_w = (total_mass / n).ln();
    for &depth in &depths {
        // Lateral spread covering the gap to the neighbouring grid cell.
        let half_width = depth * 0.5 * (bounds.u.1 - bounds.u.0) / (3.0 * camera.f_u);
        let sigma_x = half_width.max(1.0);
        for &u in &u_positions {
            let p = backproject(u, v_center, depth, camera).expect("grid depth is positive");
            let mean = DVector::from_column_slice(&[p.x, p.y, p.z, 0.0, 0.0, 0.0, 80.0, 60.0]);
            let cov = DMatrix::from_diagonal(&DVector::from_column_slice(&[
                sigma_x * sigma_x,
                4.0,
                depth * depth * 0.09,
                100.0,
                9.0,
                100.0,
                1600.0,
                1200.0,
            ]));
            mix.push(log_w, GaussianDensity::new_unchecked(mean, cov));
        }
    }
    mix
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSpec {
    pub f_u: f64,
    pub f_v: f64,
    pub c_u: f64,
    pub c_v: f64,
    pub frame_rate: f64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self { f_u: 721.5377, f_v: 721.5377, c_u: 609.5593, c_v: 172.854, frame_rate: 10.0 }
    }
}

impl CameraSpec {
    pub fn to_camera(&self) -> CameraModel<f64> {
        CameraModel {
            f_u: self.f_u,
            f_v: self.f_v,
            c_u: self.c_u,
            c_v: self.c_v,
            frame_rate: self.frame_rate,
        }
    }
}

/// The scenario file consumed by the simulator CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub seed: u64,
    pub n_frames: usize,
    pub camera: CameraSpec,
    pub model: ModelSpec,
    /// Initial object states as `[x y z vx vy vz w h]` rows.
    pub initial_objects: Vec<Vec<f64>>,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        Self {
            seed: 0,
            n_frames: 100,
            camera: CameraSpec::default(),
            model: ModelSpec::default(),
            initial_objects: Vec::new(),
        }
    }
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = read_lossy(path)?;
        toml::from_str(&text).map_err(|e| IoError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn build(&self) -> Result<ScenarioConfig<f64>, IoError> {
        let camera = self.camera.to_camera();
        let config = FilterConfigFile { model: self.model.clone(), filter: FilterSpec::default() };
        let (params, _) = config.build(&camera)?;
        let mut initial_objects = Vec::with_capacity(self.initial_objects.len());
        for (i, row) in self.initial_objects.iter().enumerate() {
            if row.len() != STATE_DIM {
                return Err(IoError::Config(format!(
                    "initial object {i} needs {STATE_DIM} numbers, found {}",
                    row.len()
                )));
            }
            let state = ObjectState::from_vector(&DVector::from_column_slice(row))
                .map_err(|e| IoError::Config(e.to_string()))?;
            state.validate().map_err(|e| IoError::Config(e.to_string()))?;
            initial_objects.push(state);
        }
        Ok(ScenarioConfig {
            params,
            n_frames: self.n_frames,
            rng_seed: self.seed,
            camera,
            initial_objects,
        })
    }
}
