//! Synthetic scenario generator for closed-loop validation: samples object
//! births, survival, noisy constant-velocity motion, detections and clutter
//! from exactly the models the filter assumes.

use nalgebra::DVector;
use rand::distr::uniform::SampleUniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use thiserror::Error;

use crate::gaussian::{sqrt_psd, GaussianError};
use crate::models::{
    cv_transition_vector, project_vector, CameraModel, ClassLabel, Detection, ModelError,
    ModelParams, ObjectState, STATE_DIM,
};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}

/// Scenario description: model parameters, length, seed, camera, and the
/// objects present at the first frame.
#[derive(Debug, Clone)]
pub struct ScenarioConfig<T: Real> {
    pub params: ModelParams<T>,
    pub n_frames: usize,
    pub rng_seed: u64,
    pub camera: CameraModel<T>,
    pub initial_objects: Vec<ObjectState<T>>,
}

impl<T: Real> ScenarioConfig<T> {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_frames < 1 {
            return Err(SimError::InvalidScenario("n_frames must be at least 1"));
        }
        self.params.validate()?;
        self.camera.validate()?;
        for s in &self.initial_objects {
            s.validate()?;
        }
        Ok(())
    }
}

/// Birth-to-death interval of one true object; frames are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjectLifespan {
    pub object_id: u64,
    pub first_frame: usize,
    pub last_frame: usize,
}

/// True trajectories: per-frame object states plus the lifespan table.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<T: Real> {
    /// `frames[k]` lists `(object_id, state)` pairs alive at frame `k`.
    pub frames: Vec<Vec<(u64, ObjectState<T>)>>,
    pub lifespans: Vec<ObjectLifespan>,
}

/// Independent deterministic RNG streams per frame and purpose, so that e.g.
/// changing the clutter rate cannot perturb the sampled trajectories.
#[derive(Clone, Copy)]
enum Purpose {
    Birth = 0,
    Survival = 1,
    Motion = 2,
    Detection = 3,
    Clutter = 4,
}

fn stream(seed: u64, frame: usize, purpose: Purpose) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(frame as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(purpose as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn poisson_count<R: Rng>(rng: &mut R, rate: f64) -> usize {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("positive rate").sample(rng) as usize
}

struct LiveObject<T: Real> {
    id: u64,
    state: ObjectState<T>,
    first_frame: usize,
}

/// Runs the scenario. Deterministic given the seed: same config, bit-identical
/// output.
pub fn simulate<T>(
    cfg: &ScenarioConfig<T>,
) -> Result<(GroundTruth<T>, Vec<Vec<Detection<T>>>), SimError>
where
    T: Real + SampleUniform,
    StandardNormal: Distribution<T>,
{
    cfg.validate()?;
    let params = &cfg.params;
    let q_root = sqrt_psd(&params.process_noise)?;
    let r_root = sqrt_psd(&params.measurement_noise)?;
    let birth_roots: Vec<_> = params
        .birth
        .components
        .iter()
        .map(|c| sqrt_psd(&c.density.cov))
        .collect::<Result<Vec<_>, _>>()?;
    let birth_mass = params.birth.total_mass().as_f64();
    let birth_weights: Vec<f64> = params
        .birth
        .components
        .iter()
        .map(|c| c.log_weight.exp().as_f64() / birth_mass.max(f64::MIN_POSITIVE))
        .collect();
    let tiny = T::of(1e-3);

    let mut live: Vec<LiveObject<T>> = Vec::new();
    let mut next_id: u64 = 1;
    let mut lifespans: Vec<ObjectLifespan> = Vec::new();
    let mut frames = Vec::with_capacity(cfg.n_frames);
    let mut detections = Vec::with_capacity(cfg.n_frames);

    for s in &cfg.initial_objects {
        live.push(LiveObject { id: next_id, state: *s, first_frame: 0 });
        next_id += 1;
    }

    for frame in 0..cfg.n_frames {
        if frame > 0 {
            let mut survival_rng = stream(cfg.rng_seed, frame, Purpose::Survival);
            let mut motion_rng = stream(cfg.rng_seed, frame, Purpose::Motion);
            let mut survivors = Vec::with_capacity(live.len());
            for obj in live.drain(..) {
                if !survival_rng.random_bool(params.p_survive.as_f64()) {
                    lifespans.push(ObjectLifespan {
                        object_id: obj.id,
                        first_frame: obj.first_frame,
                        last_frame: frame - 1,
                    });
                    continue;
                }
                let mut x = cv_transition_vector(&obj.state.to_vector(), params.dt);
                let eta = DVector::from_fn(STATE_DIM, |_, _| motion_rng.sample(StandardNormal));
                x += &q_root * eta;
                // Noise can push the extent non-positive; keep the state valid.
                x[6] = x[6].max(tiny);
                x[7] = x[7].max(tiny);
                let state = ObjectState::from_vector(&x)?;
                survivors.push(LiveObject { state, ..obj });
            }
            live = survivors;
        }

        let mut birth_rng = stream(cfg.rng_seed, frame, Purpose::Birth);
        let n_births = poisson_count(&mut birth_rng, birth_mass);
        for _ in 0..n_births {
            let pick: f64 = birth_rng.random_range(0.0..1.0);
            let mut acc = 0.0;
            let mut idx = params.birth.components.len().saturating_sub(1);
            for (i, w) in birth_weights.iter().enumerate() {
                acc += w;
                if pick < acc {
                    idx = i;
                    break;
                }
            }
            let comp = &params.birth.components[idx];
            let eta = DVector::from_fn(STATE_DIM, |_, _| birth_rng.sample(StandardNormal));
            let mut x = &comp.density.mean + &birth_roots[idx] * eta;
            x[6] = x[6].max(tiny);
            x[7] = x[7].max(tiny);
            live.push(LiveObject {
                id: next_id,
                state: ObjectState::from_vector(&x)?,
                first_frame: frame,
            });
            next_id += 1;
        }

        frames.push(live.iter().map(|o| (o.id, o.state)).collect::<Vec<_>>());

        let mut detection_rng = stream(cfg.rng_seed, frame, Purpose::Detection);
        let mut frame_dets: Vec<Detection<T>> = Vec::new();
        for obj in &live {
            if !detection_rng.random_bool(params.p_detect.as_f64()) {
                continue;
            }
            let Some(ideal) = project_vector(&obj.state.to_vector(), &cfg.camera) else {
                // Behind the camera: not observable this frame.
                continue;
            };
            let eta =
                DVector::from_fn(ideal.len(), |_, _| detection_rng.sample(StandardNormal));
            let z = &ideal + &r_root * eta;
            frame_dets.push(measurement_to_detection(
                z[0],
                z[1],
                z[2].max(tiny),
                z[3].max(tiny),
                z[4].max(tiny),
            ));
        }

        let mut clutter_rng = stream(cfg.rng_seed, frame, Purpose::Clutter);
        let n_clutter = poisson_count(&mut clutter_rng, params.clutter_rate.as_f64());
        let b = &params.clutter_bounds;
        for _ in 0..n_clutter {
            let u = clutter_rng.random_range(b.u.0..b.u.1);
            let v = clutter_rng.random_range(b.v.0..b.v.1);
            let d = clutter_rng.random_range(b.d.0..b.d.1);
            let w = clutter_rng.random_range(b.w.0..b.w.1);
            let h = clutter_rng.random_range(b.h.0..b.h.1);
            frame_dets.push(measurement_to_detection(u, v, d.max(tiny), w.max(tiny), h.max(tiny)));
        }

        detections.push(frame_dets);
    }

    for obj in &live {
        lifespans.push(ObjectLifespan {
            object_id: obj.id,
            first_frame: obj.first_frame,
            last_frame: cfg.n_frames - 1,
        });
    }
    lifespans.sort_by_key(|l| l.object_id);

    Ok((GroundTruth { frames, lifespans }, detections))
}

fn measurement_to_detection<T: Real>(u: T, v: T, d: T, w: T, h: T) -> Detection<T> {
    let half = T::of(0.5);
    Detection {
        x_min: u - w * half,
        y_min: v - h * half,
        x_max: u + w * half,
        y_max: v + h * half,
        d,
        score: T::one(),
        class_label: ClassLabel::Car,
    }
}
