//! The Poisson multi-Bernoulli mixture filter: density representation,
//! prediction, measurement update with gating and k-best association,
//! hypothesis reduction, and estimate extraction.
//!
//! The density has two parts: a Poisson point process for objects that exist
//! but have never been detected, and a mixture of multi-Bernoulli components,
//! one per global data-association hypothesis. Both are propagated in the log
//! domain.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::assignment::{murty_kbest, AssignmentError, CostMatrix};
use crate::gaussian::{
    gm_reduce, moment_match, prepare_measurement, ukf_predict, GaussianDensity, GaussianError,
    GaussianMixture, MeasurementPrediction, SigmaParams,
};
use crate::models::{MeasurementModel, ModelError, ModelParams, MotionModel};
use crate::scalar::{log_add_exp, log_sum_exp, Real};

/// Log-domain stand-in for an impossible cell when only its rank matters.
/// Real log-likelihoods are many orders of magnitude smaller, so cells at the
/// floor always rank last; exact weights are still computed from the true
/// (possibly `-inf`) values.
const LOG_FLOOR: f64 = -1e9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PmbmError {
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid PMBM density: {0}")]
    InvalidDensity(&'static str),
    #[error("measurement dimension mismatch: expected {expected}, got {actual}")]
    MeasurementDim { expected: usize, actual: usize },
}

/// Stable identifier assigned when a Bernoulli component is created and
/// preserved through prediction and update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrackId(pub u64);

impl std::fmt::Display for TrackId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A potentially-present object: existence probability plus a state density.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliComponent<T: Real> {
    /// Probability of existence, in `[0, 1]`.
    pub existence: T,
    pub density: GaussianDensity<T>,
    pub track_id: TrackId,
}

/// One global data-association hypothesis: a weighted multi-Bernoulli.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalHypothesis<T: Real> {
    pub log_weight: T,
    pub bernoullis: Vec<BernoulliComponent<T>>,
}

/// The full PMBM parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct PmbmDensity<T: Real> {
    /// Intensity of the undetected-object Poisson process.
    pub undetected: GaussianMixture<T>,
    /// Global hypotheses; log-weights exp-sum to one.
    pub hypotheses: Vec<GlobalHypothesis<T>>,
}

impl<T: Real> PmbmDensity<T> {
    /// The empty density: no undetected intensity, one hypothesis with no
    /// Bernoullis and unit weight.
    pub fn empty() -> Self {
        Self {
            undetected: GaussianMixture::empty(),
            hypotheses: vec![GlobalHypothesis { log_weight: T::zero(), bernoullis: Vec::new() }],
        }
    }

    /// Checks the density invariants: at least one hypothesis, normalized
    /// weights, existence probabilities in `[0, 1]`, valid densities, and no
    /// non-finite parameter anywhere.
    pub fn validate(&self) -> Result<(), PmbmError> {
        if self.hypotheses.is_empty() {
            return Err(PmbmError::InvalidDensity("no hypotheses"));
        }
        let logs: Vec<T> = self.hypotheses.iter().map(|h| h.log_weight).collect();
        if logs.iter().any(|w| !w.is_finite()) {
            return Err(PmbmError::InvalidDensity("non-finite hypothesis weight"));
        }
        let total = log_sum_exp(&logs).exp();
        if (total - T::one()).abs() > T::of(1e-9) {
            return Err(PmbmError::InvalidDensity("hypothesis weights do not sum to one"));
        }
        for h in &self.hypotheses {
            for b in &h.bernoullis {
                if !(b.existence >= T::zero() && b.existence <= T::one()) {
                    return Err(PmbmError::InvalidDensity("existence outside [0, 1]"));
                }
                b.density.validate()?;
            }
        }
        for c in &self.undetected.components {
            // Log-weights may be -inf (zero mass) but never NaN or +inf.
            if !(c.log_weight.is_finite() || c.log_weight == T::neg_infinity()) {
                return Err(PmbmError::InvalidDensity("invalid intensity weight"));
            }
            c.density.validate()?;
        }
        Ok(())
    }

    /// Index of the highest-weight hypothesis; ties go to the lower index.
    pub fn winning_hypothesis(&self) -> usize {
        let mut best = 0;
        for (j, h) in self.hypotheses.iter().enumerate() {
            if h.log_weight > self.hypotheses[best].log_weight {
                best = j;
            }
        }
        best
    }
}

/// Runtime configuration: truncation, gating, pruning and extraction knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct PmbmConfig<T: Real> {
    /// Existence threshold for reporting an object.
    pub extract_threshold: T,
    /// Hypotheses below this fraction of the best weight are pruned.
    pub hypothesis_weight_min: T,
    /// Hypothesis cap after each update.
    pub max_hypotheses: usize,
    /// Bernoullis below this existence are dropped.
    pub existence_min: T,
    /// Gate probability for the chi-square ellipse; `>= 1` disables gating.
    pub gate_prob: T,
    /// Global budget of children per update, shared in proportion to the
    /// parent hypothesis weights (`usize::MAX` enumerates everything).
    pub max_children: usize,
    /// Tolerance for treating two hypotheses as duplicates.
    pub duplicate_tol: T,
    /// Absolute weight below which intensity components are pruned.
    pub ppp_prune_threshold: T,
    /// Mahalanobis-squared merge distance for intensity components.
    pub ppp_merge_distance: T,
    /// Intensity component cap.
    pub ppp_max_components: usize,
    pub sigma: SigmaParams<T>,
}

impl<T: Real> Default for PmbmConfig<T> {
    fn default() -> Self {
        Self {
            extract_threshold: T::of(0.5),
            hypothesis_weight_min: T::of(1e-4),
            max_hypotheses: 100,
            existence_min: T::of(1e-3),
            gate_prob: T::of(0.999),
            max_children: 100,
            duplicate_tol: T::of(1e-9),
            ppp_prune_threshold: T::of(1e-5),
            ppp_merge_distance: T::of(1.0),
            ppp_max_components: 100,
            sigma: SigmaParams::default(),
        }
    }
}

/// Chi-square gate threshold (squared Mahalanobis) for the given tail
/// probability and measurement dimension. Probabilities `>= 1` disable gating.
pub fn chi2_gate_threshold<T: Real>(gate_prob: T, dim: usize) -> T {
    let p = gate_prob.as_f64();
    if p >= 1.0 {
        return T::infinity();
    }
    if p <= 0.0 {
        return T::zero();
    }
    T::of(ChiSquared::new(dim as f64).expect("dim >= 1").inverse_cdf(p))
}

/// Feasible object/measurement and intensity-component/measurement pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateMatrix {
    /// `objects[i][m]` is true when Bernoulli `i` may have produced `z_m`.
    pub objects: Vec<Vec<bool>>,
    /// `ppp[c][m]` likewise for intensity component `c`.
    pub ppp: Vec<Vec<bool>>,
}

/// Chi-square gating of a hypothesis' Bernoullis and the undetected intensity
/// against a measurement set.
pub fn gate<T, Me>(
    hypothesis: &GlobalHypothesis<T>,
    undetected: &GaussianMixture<T>,
    measurements: &[DVector<T>],
    measurement_model: &Me,
    measurement_noise: &DMatrix<T>,
    sigma: &SigmaParams<T>,
    gate_prob: T,
) -> Result<GateMatrix, PmbmError>
where
    T: Real,
    Me: MeasurementModel<T>,
{
    let dim = measurement_model.measurement_dim();
    let threshold = chi2_gate_threshold(gate_prob, dim);
    let project = |x: &DVector<T>| measurement_model.project(x);
    let row = |density: &GaussianDensity<T>| -> Result<Vec<bool>, PmbmError> {
        let pred = prepare_measurement(density, project, measurement_noise, sigma)?;
        Ok(measurements.iter().map(|z| pred.mahalanobis_sq(z) <= threshold).collect())
    };
    let objects = hypothesis
        .bernoullis
        .iter()
        .map(|b| row(&b.density))
        .collect::<Result<Vec<_>, _>>()?;
    let ppp = undetected
        .components
        .iter()
        .map(|c| row(&c.density))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GateMatrix { objects, ppp })
}

/// Missed-detection cell: likelihood `1 - r p_D`, existence rescaled to
/// `r (1 - p_D) / (1 - r p_D)`, density and identity unchanged.
pub fn update_cell_missed<T: Real>(
    bernoulli: &BernoulliComponent<T>,
    p_detect: T,
) -> (T, BernoulliComponent<T>) {
    let r = bernoulli.existence;
    let lik = T::one() - r * p_detect;
    let existence = if lik > T::zero() { r * (T::one() - p_detect) / lik } else { T::one() };
    (lik.ln(), BernoulliComponent { existence, ..bernoulli.clone() })
}

fn detected_from_prediction<T: Real>(
    bernoulli: &BernoulliComponent<T>,
    prediction: &MeasurementPrediction<T>,
    z: &DVector<T>,
    p_detect: T,
) -> (T, BernoulliComponent<T>) {
    let log_lik = bernoulli.existence.ln() + p_detect.ln() + prediction.log_likelihood(z);
    let updated = BernoulliComponent {
        existence: T::one(),
        density: prediction.posterior(z),
        track_id: bernoulli.track_id,
    };
    (log_lik, updated)
}

/// Detected cell: likelihood `r p_D <f, phi_z>` evaluated with the sigma-point
/// update; existence becomes one, identity preserved.
pub fn update_cell_detected<T, Me>(
    bernoulli: &BernoulliComponent<T>,
    z: &DVector<T>,
    measurement_model: &Me,
    measurement_noise: &DMatrix<T>,
    sigma: &SigmaParams<T>,
    p_detect: T,
) -> Result<(T, BernoulliComponent<T>), PmbmError>
where
    T: Real,
    Me: MeasurementModel<T>,
{
    let project = |x: &DVector<T>| measurement_model.project(x);
    let pred = prepare_measurement(&bernoulli.density, project, measurement_noise, sigma)?;
    Ok(detected_from_prediction(bernoulli, &pred, z, p_detect))
}

/// New-object-or-clutter cell built from prepared intensity predictions.
///
/// Returns the cell log-likelihood `ln(kappa + p_D <D, phi_z>)` and, when at
/// least one intensity component is inside the gate, the moment-matched new
/// Bernoulli (existence `p_D <D, phi_z> / (kappa + p_D <D, phi_z>)`). With no
/// gated component the measurement is pure clutter and no object is created.
fn new_cell_from_predictions<T: Real>(
    undetected: &GaussianMixture<T>,
    predictions: &[Option<MeasurementPrediction<T>>],
    z: &DVector<T>,
    p_detect: T,
    log_clutter: T,
    gate_sq: T,
) -> (T, Option<(T, GaussianDensity<T>)>) {
    let mut terms: Vec<(T, GaussianDensity<T>)> = Vec::new();
    for (comp, pred) in undetected.components.iter().zip(predictions) {
        let Some(pred) = pred else { continue };
        if pred.mahalanobis_sq(z) > gate_sq {
            continue;
        }
        terms.push((comp.log_weight + pred.log_likelihood(z), pred.posterior(z)));
    }
    if terms.is_empty() {
        return (log_clutter, None);
    }
    let logs: Vec<T> = terms.iter().map(|(lw, _)| *lw).collect();
    let log_inner = log_sum_exp(&logs);
    let log_detected = p_detect.ln() + log_inner;
    let log_lik = log_add_exp(log_clutter, log_detected);
    if log_lik == T::neg_infinity() {
        return (log_lik, None);
    }
    let existence = (log_detected - log_lik).exp();
    let (_, density) = moment_match(&terms);
    (log_lik, Some((existence, density)))
}

/// New-object-or-clutter cell for one measurement against the undetected
/// intensity; the public form of the first case of the association update.
pub fn update_cell_new<T, Me>(
    undetected: &GaussianMixture<T>,
    z: &DVector<T>,
    measurement_model: &Me,
    measurement_noise: &DMatrix<T>,
    sigma: &SigmaParams<T>,
    p_detect: T,
    log_clutter: T,
    gate_prob: T,
    track_id: TrackId,
) -> (T, Option<BernoulliComponent<T>>)
where
    T: Real,
    Me: MeasurementModel<T>,
{
    let project = |x: &DVector<T>| measurement_model.project(x);
    let preds: Vec<_> = undetected
        .components
        .iter()
        .map(|c| prepare_measurement(&c.density, project, measurement_noise, sigma).ok())
        .collect();
    let gate_sq = chi2_gate_threshold(gate_prob, measurement_model.measurement_dim());
    let (log_lik, bern) =
        new_cell_from_predictions(undetected, &preds, z, p_detect, log_clutter, gate_sq);
    (
        log_lik,
        bern.map(|(existence, density)| BernoulliComponent { existence, density, track_id }),
    )
}

/// The PMBM tracking filter over a motion and a measurement model.
///
/// Prediction, update, reduction and extraction mutate the owned density and
/// must run sequentially per tracked sequence; distinct filters are
/// independent.
#[derive(Debug, Clone)]
pub struct PmbmFilter<T: Real, Mo, Me> {
    pub motion: Mo,
    pub measurement: Me,
    pub params: ModelParams<T>,
    pub config: PmbmConfig<T>,
    density: PmbmDensity<T>,
    next_track_id: u64,
}

impl<T, Mo, Me> PmbmFilter<T, Mo, Me>
where
    T: Real,
    Mo: MotionModel<T>,
    Me: MeasurementModel<T>,
{
    pub fn new(
        motion: Mo,
        measurement: Me,
        params: ModelParams<T>,
        config: PmbmConfig<T>,
    ) -> Result<Self, PmbmError> {
        params.validate()?;
        let n = motion.state_dim();
        let m = measurement.measurement_dim();
        if params.process_noise.nrows() != n {
            return Err(PmbmError::Model(ModelError::DimensionMismatch {
                expected: n,
                actual: params.process_noise.nrows(),
            }));
        }
        if params.measurement_noise.nrows() != m {
            return Err(PmbmError::Model(ModelError::DimensionMismatch {
                expected: m,
                actual: params.measurement_noise.nrows(),
            }));
        }
        Ok(Self {
            motion,
            measurement,
            params,
            config,
            density: PmbmDensity::empty(),
            next_track_id: 0,
        })
    }

    pub fn density(&self) -> &PmbmDensity<T> {
        &self.density
    }

    /// Replaces the filter state, e.g. to seed a specific prior. Track-id
    /// allocation continues above any id already present.
    pub fn set_density(&mut self, density: PmbmDensity<T>) {
        let max_id = density
            .hypotheses
            .iter()
            .flat_map(|h| h.bernoullis.iter())
            .map(|b| b.track_id.0 + 1)
            .max()
            .unwrap_or(0);
        self.next_track_id = self.next_track_id.max(max_id);
        self.density = density;
    }

    fn fresh_id(next: &mut u64) -> TrackId {
        let id = TrackId(*next);
        *next += 1;
        id
    }

    /// Time prediction: survival-scaled sigma-point prediction of every
    /// component, birth intensity appended, hypothesis weights unchanged.
    /// Bernoullis shared by several hypotheses are predicted once.
    pub fn predict(&mut self) -> Result<(), PmbmError> {
        let dt = self.params.dt;
        let motion = &self.motion;
        let step = |x: &DVector<T>| Some(motion.step(x, dt));
        let q = &self.params.process_noise;
        let sigma = &self.config.sigma;
        let log_survive = self.params.p_survive.ln();

        let mut undetected = GaussianMixture::empty();
        for c in &self.density.undetected.components {
            undetected.push(c.log_weight + log_survive, ukf_predict(&c.density, step, q, sigma)?);
        }
        for c in &self.params.birth.components {
            undetected.push(c.log_weight, c.density.clone());
        }

        let mut cache: std::collections::HashMap<u64, Vec<(GaussianDensity<T>, GaussianDensity<T>)>> =
            std::collections::HashMap::new();
        let mut hypotheses = Vec::with_capacity(self.density.hypotheses.len());
        for h in &self.density.hypotheses {
            let mut bernoullis = Vec::with_capacity(h.bernoullis.len());
            for b in &h.bernoullis {
                let known = cache.entry(b.track_id.0).or_default();
                let predicted = match known.iter().find(|(prior, _)| *prior == b.density) {
                    Some((_, predicted)) => predicted.clone(),
                    None => {
                        let predicted = ukf_predict(&b.density, step, q, sigma)?;
                        known.push((b.density.clone(), predicted.clone()));
                        predicted
                    }
                };
                bernoullis.push(BernoulliComponent {
                    existence: b.existence * self.params.p_survive,
                    density: predicted,
                    track_id: b.track_id,
                });
            }
            hypotheses.push(GlobalHypothesis { log_weight: h.log_weight, bernoullis });
        }

        self.density = PmbmDensity { undetected, hypotheses };
        Ok(())
    }

    /// Measurement update. For every prior hypothesis a cost matrix of
    /// negative cell log-likelihoods is solved for its k-best associations
    /// (k proportional to the prior weight); child weights are the prior
    /// weight times the product of cell likelihoods, renormalized globally.
    /// The undetected intensity is scaled by `1 - p_D`.
    ///
    /// Bernoullis shared by several hypotheses (same id, existence and
    /// density) are predicted and gated once; posterior densities are only
    /// computed for cells that a returned association actually uses.
    pub fn update(&mut self, measurements: &[DVector<T>]) -> Result<(), PmbmError> {
        let m_dim = self.measurement.measurement_dim();
        for z in measurements {
            if z.len() != m_dim {
                return Err(PmbmError::MeasurementDim { expected: m_dim, actual: z.len() });
            }
        }
        let meas_model = &self.measurement;
        let project = |x: &DVector<T>| meas_model.project(x);
        let noise = &self.params.measurement_noise;
        let sigma = &self.config.sigma;
        let p_detect = self.params.p_detect;
        let log_clutter = self.params.log_clutter_intensity();
        let gate_sq = chi2_gate_threshold(self.config.gate_prob, m_dim);
        let n_meas = measurements.len();
        let mut next_id = self.next_track_id;
        let floor = T::of(LOG_FLOOR);

        // New-track candidates are hypothesis-independent: one per measurement,
        // so the same physical object gets the same id in every hypothesis.
        let ppp_preds: Vec<Option<MeasurementPrediction<T>>> = self
            .density
            .undetected
            .components
            .iter()
            .map(|c| prepare_measurement(&c.density, project, noise, sigma).ok())
            .collect();
        struct NewCandidate<T: Real> {
            log_lik: T,
            bernoulli: Option<BernoulliComponent<T>>,
        }
        let new_candidates: Vec<NewCandidate<T>> = measurements
            .iter()
            .map(|z| {
                let (log_lik, bern) = new_cell_from_predictions(
                    &self.density.undetected,
                    &ppp_preds,
                    z,
                    p_detect,
                    log_clutter,
                    gate_sq,
                );
                NewCandidate {
                    log_lik,
                    bernoulli: bern.map(|(existence, density)| BernoulliComponent {
                        existence,
                        density,
                        track_id: Self::fresh_id(&mut next_id),
                    }),
                }
            })
            .collect();

        // Unique Bernoulli cells. A Bernoulli whose measurement prediction
        // fails (e.g. behind the camera) cannot be detected and only misses.
        struct UniqueCell<T: Real> {
            existence: T,
            density: GaussianDensity<T>,
            prediction: Option<MeasurementPrediction<T>>,
            missed_log_lik: T,
            missed: BernoulliComponent<T>,
            detected_log_lik: Vec<Option<T>>,
            posterior: Vec<Option<BernoulliComponent<T>>>,
        }
        let mut cells: Vec<UniqueCell<T>> = Vec::new();
        let mut cells_by_id: std::collections::HashMap<u64, Vec<usize>> =
            std::collections::HashMap::new();
        let mut hyp_cells: Vec<Vec<usize>> = Vec::with_capacity(self.density.hypotheses.len());
        for hyp in &self.density.hypotheses {
            let mut indices = Vec::with_capacity(hyp.bernoullis.len());
            for b in &hyp.bernoullis {
                let known = cells_by_id.entry(b.track_id.0).or_default();
                let found = known.iter().copied().find(|&ci| {
                    let c = &cells[ci];
                    c.existence == b.existence && c.density == b.density
                });
                let ci = match found {
                    Some(ci) => ci,
                    None => {
                        let prediction =
                            prepare_measurement(&b.density, project, noise, sigma).ok();
                        let (missed_log_lik, missed) = update_cell_missed(b, p_detect);
                        let detected_log_lik: Vec<Option<T>> = measurements
                            .iter()
                            .map(|z| {
                                let pred = prediction.as_ref()?;
                                if pred.mahalanobis_sq(z) > gate_sq {
                                    return None;
                                }
                                Some(
                                    b.existence.ln()
                                        + p_detect.ln()
                                        + pred.log_likelihood(z),
                                )
                            })
                            .collect();
                        cells.push(UniqueCell {
                            existence: b.existence,
                            density: b.density.clone(),
                            prediction,
                            missed_log_lik,
                            missed,
                            detected_log_lik,
                            posterior: vec![None; n_meas],
                        });
                        known.push(cells.len() - 1);
                        cells.len() - 1
                    }
                };
                indices.push(ci);
            }
            hyp_cells.push(indices);
        }

        // Associations per hypothesis. Measurements no object gates to are
        // background in every child; only the gated ones enter the matrix.
        struct PendingChild<T: Real> {
            log_weight: T,
            log_weight_floored: T,
            hyp_idx: usize,
            /// Per prior-object index: the measurement that detected it.
            detected_by: Vec<Option<usize>>,
        }
        let mut pending: Vec<PendingChild<T>> = Vec::new();
        for (j, hyp) in self.density.hypotheses.iter().enumerate() {
            let cell_idx = &hyp_cells[j];
            let n_obj = cell_idx.len();
            let relevant: Vec<usize> = (0..n_meas)
                .filter(|&m| cell_idx.iter().any(|&ci| cells[ci].detected_log_lik[m].is_some()))
                .collect();
            let rows = relevant.len();

            // One column per object plus one background column per row;
            // detected cells are scored against the object's missed cell so
            // that misses need no rows of their own.
            let mut costs = DMatrix::from_element(rows, n_obj + rows, T::infinity());
            for (row, &m) in relevant.iter().enumerate() {
                for (i, &ci) in cell_idx.iter().enumerate() {
                    if let Some(log_det) = cells[ci].detected_log_lik[m] {
                        costs[(row, i)] = -(log_det - cells[ci].missed_log_lik.max(floor));
                    }
                }
                let bg = new_candidates[m].log_lik;
                costs[(row, n_obj + row)] =
                    if bg == T::neg_infinity() { -floor } else { -bg };
            }
            let cost_matrix = CostMatrix::new(costs)?;

            let weight = hyp.log_weight.exp().as_f64();
            let budget = (self.config.max_children as f64 * weight).ceil().max(1.0);
            let k = if budget >= usize::MAX as f64 { usize::MAX } else { budget as usize };
            let assignments = murty_kbest(&cost_matrix, k)?;

            for assignment in &assignments {
                let mut detected_by = vec![None; n_obj];
                for (row, &col) in assignment.row_to_col.iter().enumerate() {
                    if col < n_obj {
                        detected_by[col] = Some(relevant[row]);
                    }
                }
                let mut log_weight = hyp.log_weight;
                let mut log_weight_floored = hyp.log_weight;
                for (i, &ci) in cell_idx.iter().enumerate() {
                    let cell = &cells[ci];
                    let term = match detected_by[i] {
                        Some(m) => cell.detected_log_lik[m].expect("gated cell"),
                        None => cell.missed_log_lik,
                    };
                    log_weight += term;
                    log_weight_floored += term.max(floor);
                }
                for m in 0..n_meas {
                    if detected_by.contains(&Some(m)) {
                        continue;
                    }
                    let cand = &new_candidates[m];
                    log_weight += cand.log_lik;
                    log_weight_floored += cand.log_lik.max(floor);
                }
                pending.push(PendingChild { log_weight, log_weight_floored, hyp_idx: j, detected_by });
            }
        }

        // Posterior densities only for the (cell, measurement) pairs some
        // association selected.
        for child in &pending {
            for (i, m) in child.detected_by.iter().enumerate() {
                let Some(m) = *m else { continue };
                let ci = hyp_cells[child.hyp_idx][i];
                if cells[ci].posterior[m].is_none() {
                    let cell = &cells[ci];
                    let pred = cell.prediction.as_ref().expect("detected cell has prediction");
                    let posterior = BernoulliComponent {
                        existence: T::one(),
                        density: pred.posterior(&measurements[m]),
                        track_id: cell.missed.track_id,
                    };
                    cells[ci].posterior[m] = Some(posterior);
                }
            }
        }

        struct Child<T: Real> {
            log_weight: T,
            log_weight_floored: T,
            bernoullis: Vec<BernoulliComponent<T>>,
        }
        let mut children: Vec<Child<T>> = Vec::with_capacity(pending.len());
        for child in pending {
            let cell_idx = &hyp_cells[child.hyp_idx];
            let mut bernoullis = Vec::with_capacity(cell_idx.len() + n_meas);
            for (i, &ci) in cell_idx.iter().enumerate() {
                match child.detected_by[i] {
                    Some(m) => bernoullis
                        .push(cells[ci].posterior[m].clone().expect("posterior computed")),
                    None => bernoullis.push(cells[ci].missed.clone()),
                }
            }
            for m in 0..n_meas {
                if child.detected_by.contains(&Some(m)) {
                    continue;
                }
                if let Some(bern) = &new_candidates[m].bernoulli {
                    bernoullis.push(bern.clone());
                }
            }
            children.push(Child {
                log_weight: child.log_weight,
                log_weight_floored: child.log_weight_floored,
                bernoullis,
            });
        }

        // Global renormalization. If every child has exactly zero likelihood
        // (a probability-zero measurement set under the model, possible only
        // on the p_D = 1 or lambda = 0 boundary), fall back to the floored
        // weights, which order the children as the limit p_D -> 1 would.
        let exact: Vec<T> = children.iter().map(|c| c.log_weight).collect();
        let total = log_sum_exp(&exact);
        let use_floored = total == T::neg_infinity();
        let logs: Vec<T> = if use_floored {
            children.iter().map(|c| c.log_weight_floored).collect()
        } else {
            exact
        };
        let total = log_sum_exp(&logs);
        if total == T::neg_infinity() {
            return Err(PmbmError::InvalidDensity("update produced no feasible hypothesis"));
        }
        let mut hypotheses: Vec<GlobalHypothesis<T>> = Vec::with_capacity(children.len());
        for (child, log) in children.into_iter().zip(logs) {
            let log_weight = log - total;
            if log_weight == T::neg_infinity() {
                continue;
            }
            hypotheses.push(GlobalHypothesis { log_weight, bernoullis: child.bernoullis });
        }

        let mut undetected =
            std::mem::replace(&mut self.density.undetected, GaussianMixture::empty());
        undetected.scale_log((T::one() - p_detect).ln());

        self.next_track_id = next_id;
        self.density = PmbmDensity { undetected, hypotheses };
        Ok(())
    }

    /// Hypothesis and component reduction: weight pruning, capping,
    /// renormalization, existence pruning, duplicate merging, and intensity
    /// mixture reduction.
    pub fn reduce(&mut self) {
        let cfg = &self.config;
        let hyps = &mut self.density.hypotheses;

        let best = hyps.iter().map(|h| h.log_weight).fold(T::neg_infinity(), |a, b| a.max(b));
        let cutoff = best + cfg.hypothesis_weight_min.ln();
        hyps.retain(|h| h.log_weight >= cutoff);

        hyps.sort_by(|a, b| b.log_weight.partial_cmp(&a.log_weight).unwrap());
        hyps.truncate(cfg.max_hypotheses);

        let logs: Vec<T> = hyps.iter().map(|h| h.log_weight).collect();
        let total = log_sum_exp(&logs);
        for h in hyps.iter_mut() {
            h.log_weight -= total;
            h.bernoullis.retain(|b| b.existence >= cfg.existence_min);
        }

        // Merge hypotheses with identical Bernoulli structure (within
        // tolerance) by adding their weights.
        let orders: Vec<Vec<usize>> = hyps
            .iter()
            .map(|h| {
                let mut order: Vec<usize> = (0..h.bernoullis.len()).collect();
                order.sort_by_key(|&i| h.bernoullis[i].track_id);
                order
            })
            .collect();
        let mut merged: Vec<GlobalHypothesis<T>> = Vec::with_capacity(hyps.len());
        let mut merged_orders: Vec<Vec<usize>> = Vec::with_capacity(hyps.len());
        'outer: for (hyp, order) in hyps.drain(..).zip(orders) {
            for (kept, kept_order) in merged.iter_mut().zip(&merged_orders) {
                if same_structure(kept, kept_order, &hyp, &order, cfg.duplicate_tol) {
                    kept.log_weight = log_add_exp(kept.log_weight, hyp.log_weight);
                    continue 'outer;
                }
            }
            merged.push(hyp);
            merged_orders.push(order);
        }
        merged.sort_by(|a, b| b.log_weight.partial_cmp(&a.log_weight).unwrap());
        *hyps = merged;

        self.density.undetected = gm_reduce(
            &self.density.undetected,
            cfg.ppp_prune_threshold.ln(),
            cfg.ppp_merge_distance,
            cfg.ppp_max_components,
        );
    }

    /// Estimates from the winning hypothesis: the state means of every
    /// Bernoulli whose existence exceeds the extraction threshold.
    pub fn extract(&self) -> Vec<(TrackId, DVector<T>)> {
        self.extract_detailed().into_iter().map(|(id, _, mean)| (id, mean)).collect()
    }

    /// [`extract`](Self::extract) with the existence probability included.
    pub fn extract_detailed(&self) -> Vec<(TrackId, T, DVector<T>)> {
        let winner = &self.density.hypotheses[self.density.winning_hypothesis()];
        let mut out: Vec<(TrackId, T, DVector<T>)> = winner
            .bernoullis
            .iter()
            .filter(|b| b.existence > self.config.extract_threshold)
            .map(|b| (b.track_id, b.existence, b.density.mean.clone()))
            .collect();
        out.sort_by_key(|(id, _, _)| *id);
        out
    }

    /// One full filter cycle: predict, update, reduce, extract.
    pub fn step(
        &mut self,
        measurements: &[DVector<T>],
    ) -> Result<Vec<(TrackId, DVector<T>)>, PmbmError> {
        self.predict()?;
        self.update(measurements)?;
        self.reduce();
        Ok(self.extract())
    }
}

/// Structural equality of two hypotheses within tolerance: same track ids and
/// near-identical Bernoulli parameters. `order_*` are the indices of each
/// hypothesis' Bernoullis sorted by track id.
fn same_structure<T: Real>(
    a: &GlobalHypothesis<T>,
    order_a: &[usize],
    b: &GlobalHypothesis<T>,
    order_b: &[usize],
    tol: T,
) -> bool {
    if a.bernoullis.len() != b.bernoullis.len() {
        return false;
    }
    for (&ia, &ib) in order_a.iter().zip(order_b) {
        let (ba, bb) = (&a.bernoullis[ia], &b.bernoullis[ib]);
        if ba.track_id != bb.track_id {
            return false;
        }
        if (ba.existence - bb.existence).abs() > tol {
            return false;
        }
        if ba.density.dim() != bb.density.dim() {
            return false;
        }
        let mean_close = ba
            .density
            .mean
            .iter()
            .zip(bb.density.mean.iter())
            .all(|(x, y)| (*x - *y).abs() <= tol * (T::one() + x.abs()));
        let cov_close = ba
            .density
            .cov
            .iter()
            .zip(bb.density.cov.iter())
            .all(|(x, y)| (*x - *y).abs() <= tol * (T::one() + x.abs()));
        if !mean_close || !cov_close {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::MixtureComponent;
    use crate::models::MeasurementBounds;
    use approx::assert_relative_eq;

    /// 1D position state with identity measurement, for hand-checkable cells.
    #[derive(Clone, Copy)]
    struct Scalar1D;

    impl MotionModel<f64> for Scalar1D {
        fn state_dim(&self) -> usize {
            1
        }
        fn step(&self, x: &DVector<f64>, _dt: f64) -> DVector<f64> {
            x.clone()
        }
    }

    impl MeasurementModel<f64> for Scalar1D {
        fn measurement_dim(&self) -> usize {
            1
        }
        fn project(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
            Some(x.clone())
        }
    }

    fn unit_bounds() -> MeasurementBounds<f64> {
        MeasurementBounds {
            u: (-100.0, 100.0),
            v: (0.0, 1.0),
            d: (0.0, 1.0),
            w: (0.0, 1.0),
            h: (0.0, 1.0),
        }
    }

    fn scalar_params(p_detect: f64, clutter_rate: f64) -> ModelParams<f64> {
        ModelParams {
            p_detect,
            p_survive: 0.99,
            clutter_rate,
            clutter_bounds: unit_bounds(),
            process_noise: DMatrix::identity(1, 1) * 0.01,
            measurement_noise: DMatrix::identity(1, 1),
            birth: GaussianMixture::new(vec![MixtureComponent {
                log_weight: 0.1f64.ln(),
                density: gaussian1(0.0, 100.0),
            }]),
            dt: 1.0,
        }
    }

    fn gaussian1(mean: f64, var: f64) -> GaussianDensity<f64> {
        GaussianDensity::new_unchecked(
            DVector::from_column_slice(&[mean]),
            DMatrix::from_element(1, 1, var),
        )
    }

    fn bern(r: f64, mean: f64, var: f64, id: u64) -> BernoulliComponent<f64> {
        BernoulliComponent { existence: r, density: gaussian1(mean, var), track_id: TrackId(id) }
    }

    fn filter(
        p_detect: f64,
        clutter_rate: f64,
    ) -> PmbmFilter<f64, Scalar1D, Scalar1D> {
        PmbmFilter::new(Scalar1D, Scalar1D, scalar_params(p_detect, clutter_rate), PmbmConfig::default())
            .unwrap()
    }

    #[test]
    fn missed_cell_certain_object() {
        let (log_lik, out) = update_cell_missed(&bern(1.0, 0.0, 1.0, 0), 0.9);
        assert_relative_eq!(log_lik.exp(), 0.1, max_relative = 1e-12);
        assert_relative_eq!(out.existence, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn missed_cell_hand_values() {
        let (log_lik, out) = update_cell_missed(&bern(0.5, 0.0, 1.0, 0), 0.9);
        assert_relative_eq!(log_lik.exp(), 0.55, max_relative = 1e-12);
        assert_relative_eq!(out.existence, 1.0 / 11.0, max_relative = 1e-12);
    }

    #[test]
    fn missed_cell_no_detector() {
        let b = bern(0.35, 2.0, 1.0, 7);
        let (log_lik, out) = update_cell_missed(&b, 0.0);
        assert_relative_eq!(log_lik.exp(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(out.existence, 0.35, max_relative = 1e-12);
        assert_eq!(out.track_id, TrackId(7));
    }

    #[test]
    fn detected_cell_at_predicted_mean() {
        let b = bern(1.0, 0.0, 1.0, 3);
        let z = DVector::from_column_slice(&[0.0]);
        let (log_lik, out) = update_cell_detected(
            &b,
            &z,
            &Scalar1D,
            &DMatrix::identity(1, 1),
            &SigmaParams::default(),
            1.0,
        )
        .unwrap();
        // Peak of N(0; 0, 2): innovation covariance is prior + noise.
        let peak = 1.0 / (2.0 * std::f64::consts::PI * 2.0).sqrt();
        assert_relative_eq!(log_lik.exp(), peak, max_relative = 1e-9);
        assert_relative_eq!(out.existence, 1.0);
        assert_eq!(out.track_id, TrackId(3));
    }

    #[test]
    fn detected_cell_nonexistent_object() {
        let b = bern(0.0, 0.0, 1.0, 0);
        let z = DVector::from_column_slice(&[0.0]);
        let (log_lik, _) = update_cell_detected(
            &b,
            &z,
            &Scalar1D,
            &DMatrix::identity(1, 1),
            &SigmaParams::default(),
            0.9,
        )
        .unwrap();
        assert_eq!(log_lik, f64::NEG_INFINITY);
    }

    #[test]
    fn detected_cell_matches_kalman_oracle() {
        let b = bern(0.8, 1.0, 4.0, 1);
        let z = DVector::from_column_slice(&[2.0]);
        let r_noise = 0.5;
        let (log_lik, out) = update_cell_detected(
            &b,
            &z,
            &Scalar1D,
            &DMatrix::from_element(1, 1, r_noise),
            &SigmaParams::default(),
            0.9,
        )
        .unwrap();
        let s = 4.0 + r_noise;
        let k = 4.0 / s;
        let want_mean = 1.0 + k * (2.0 - 1.0);
        let want_cov = 4.0 - k * s * k;
        let want_lik = 0.8 * 0.9 * (-0.5 * (s.ln() + (2.0f64).ln() + std::f64::consts::PI.ln() + 1.0 / s)).exp();
        assert_relative_eq!(out.density.mean[0], want_mean, max_relative = 1e-9);
        assert_relative_eq!(out.density.cov[(0, 0)], want_cov, max_relative = 1e-9);
        assert_relative_eq!(log_lik.exp(), want_lik, max_relative = 1e-9);
    }

    #[test]
    fn new_cell_pure_clutter_outside_gates() {
        let mix = GaussianMixture::new(vec![MixtureComponent {
            log_weight: 0.5f64.ln(),
            density: gaussian1(0.0, 1.0),
        }]);
        let z = DVector::from_column_slice(&[1000.0]);
        let kappa: f64 = 0.25;
        let (log_lik, bern) = update_cell_new(
            &mix,
            &z,
            &Scalar1D,
            &DMatrix::identity(1, 1),
            &SigmaParams::default(),
            0.9,
            kappa.ln(),
            0.999,
            TrackId(0),
        );
        assert_relative_eq!(log_lik.exp(), kappa, max_relative = 1e-12);
        assert!(bern.is_none());
    }

    #[test]
    fn new_cell_vanishing_clutter_gives_certain_birth() {
        let mix = GaussianMixture::new(vec![MixtureComponent {
            log_weight: 0.5f64.ln(),
            density: gaussian1(0.0, 1.0),
        }]);
        let z = DVector::from_column_slice(&[0.3]);
        let (_, bern) = update_cell_new(
            &mix,
            &z,
            &Scalar1D,
            &DMatrix::identity(1, 1),
            &SigmaParams::default(),
            0.9,
            1e-300f64.ln(),
            1.0,
            TrackId(0),
        );
        assert_relative_eq!(bern.unwrap().existence, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn new_cell_hand_values() {
        // One intensity component, weight 0.3, N(0, 1); z = 0.5, R = 1,
        // p_D = 0.8, kappa = 0.1.
        let mix = GaussianMixture::new(vec![MixtureComponent {
            log_weight: 0.3f64.ln(),
            density: gaussian1(0.0, 1.0),
        }]);
        let z = DVector::from_column_slice(&[0.5]);
        let (log_lik, bern) = update_cell_new(
            &mix,
            &z,
            &Scalar1D,
            &DMatrix::identity(1, 1),
            &SigmaParams::default(),
            0.8,
            0.1f64.ln(),
            1.0,
            TrackId(5),
        );
        let inner = 0.3 * (-0.5f64 * (0.25 / 2.0)).exp() / (2.0 * std::f64::consts::PI * 2.0).sqrt();
        let lik = 0.1 + 0.8 * inner;
        let bern = bern.unwrap();
        assert_relative_eq!(log_lik.exp(), lik, max_relative = 1e-9);
        assert_relative_eq!(bern.existence, 0.8 * inner / lik, max_relative = 1e-9);
        assert_eq!(bern.track_id, TrackId(5));
        // Posterior of the single component: standard scalar Kalman.
        assert_relative_eq!(bern.density.mean[0], 0.25, max_relative = 1e-9);
        assert_relative_eq!(bern.density.cov[(0, 0)], 0.5, max_relative = 1e-9);
    }

    #[test]
    fn gate_accepts_center_rejects_tail() {
        let hyp = GlobalHypothesis {
            log_weight: 0.0,
            bernoullis: vec![bern(0.9, 0.0, 1.0, 0)],
        };
        let mix = GaussianMixture::new(vec![MixtureComponent {
            log_weight: 0.0,
            density: gaussian1(0.0, 1.0),
        }]);
        // Innovation std is sqrt(1 + 1); 100 sigma is far outside any gate.
        let zs = vec![
            DVector::from_column_slice(&[0.0]),
            DVector::from_column_slice(&[100.0 * 2.0f64.sqrt()]),
        ];
        let g = gate(
            &hyp,
            &mix,
            &zs,
            &Scalar1D,
            &DMatrix::identity(1, 1),
            &SigmaParams::default(),
            0.999,
        )
        .unwrap();
        assert_eq!(g.objects, vec![vec![true, false]]);
        assert_eq!(g.ppp, vec![vec![true, false]]);
    }

    #[test]
    fn gate_matches_hand_chi_square() {
        // 2 objects, 3 measurements, hand-set geometry: innovation variance 2,
        // chi-square(0.99, 1) = 6.6349; gate radius is sqrt(2 * 6.6349).
        let hyp = GlobalHypothesis {
            log_weight: 0.0,
            bernoullis: vec![bern(0.9, 0.0, 1.0, 0), bern(0.9, 10.0, 1.0, 1)],
        };
        let zs = vec![
            DVector::from_column_slice(&[1.0]),
            DVector::from_column_slice(&[9.0]),
            DVector::from_column_slice(&[4.9]),
        ];
        let g = gate(
            &hyp,
            &GaussianMixture::empty(),
            &zs,
            &Scalar1D,
            &DMatrix::identity(1, 1),
            &SigmaParams::default(),
            0.99,
        )
        .unwrap();
        let thresh = chi2_gate_threshold(0.99f64, 1);
        let feasible = |mean: f64, z: f64| (z - mean) * (z - mean) / 2.0 <= thresh;
        for (i, mean) in [0.0, 10.0].into_iter().enumerate() {
            for (m, z) in [1.0, 9.0, 4.9].into_iter().enumerate() {
                assert_eq!(g.objects[i][m], feasible(mean, z), "object {i} measurement {m}");
            }
        }
    }

    #[test]
    fn predict_scales_existence_and_appends_birth() {
        let mut f = filter(0.9, 1.0);
        f.set_density(PmbmDensity {
            undetected: GaussianMixture::new(vec![MixtureComponent {
                log_weight: 0.2f64.ln(),
                density: gaussian1(1.0, 1.0),
            }]),
            hypotheses: vec![GlobalHypothesis {
                log_weight: 0.0,
                bernoullis: vec![bern(0.5, 0.0, 1.0, 0)],
            }],
        });
        f.params.p_survive = 0.9;
        f.predict().unwrap();
        let d = f.density();
        assert_relative_eq!(d.hypotheses[0].bernoullis[0].existence, 0.45, max_relative = 1e-12);
        // Survived intensity components come first, birth appended after.
        assert_eq!(d.undetected.len(), 2);
        assert_relative_eq!(d.undetected.components[0].log_weight.exp(), 0.18, max_relative = 1e-12);
        assert_relative_eq!(d.undetected.components[1].log_weight.exp(), 0.1, max_relative = 1e-12);
    }

    #[test]
    fn predict_from_empty_prior_is_birth() {
        let mut f = filter(0.9, 1.0);
        f.predict().unwrap();
        assert_eq!(f.density().undetected.len(), 1);
        assert_relative_eq!(f.density().undetected.total_mass(), 0.1, max_relative = 1e-12);
        assert_relative_eq!(f.density().hypotheses[0].log_weight.exp(), 1.0);
    }

    #[test]
    fn predict_preserves_hypothesis_weights() {
        let mut f = filter(0.9, 1.0);
        f.set_density(PmbmDensity {
            undetected: GaussianMixture::empty(),
            hypotheses: vec![
                GlobalHypothesis { log_weight: 0.25f64.ln(), bernoullis: vec![bern(0.5, 0.0, 1.0, 0)] },
                GlobalHypothesis { log_weight: 0.75f64.ln(), bernoullis: vec![] },
            ],
        });
        let before: Vec<f64> = f.density().hypotheses.iter().map(|h| h.log_weight).collect();
        f.predict().unwrap();
        let after: Vec<f64> = f.density().hypotheses.iter().map(|h| h.log_weight).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn empty_measurement_set_scales_intensity_only() {
        let mut f = filter(0.9, 1.0);
        f.set_density(PmbmDensity {
            undetected: GaussianMixture::new(vec![MixtureComponent {
                log_weight: 0.4f64.ln(),
                density: gaussian1(0.0, 1.0),
            }]),
            hypotheses: vec![GlobalHypothesis { log_weight: 0.0, bernoullis: vec![] }],
        });
        f.update(&[]).unwrap();
        let d = f.density();
        assert_eq!(d.hypotheses.len(), 1);
        assert_relative_eq!(d.hypotheses[0].log_weight.exp(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(d.undetected.total_mass(), 0.4 * 0.1, max_relative = 1e-12);
        d.validate().unwrap();
    }

    #[test]
    fn tight_prior_detection_dominates() {
        // One near-certain object, one measurement at its predicted mean,
        // negligible clutter: the detected hypothesis carries ~all weight.
        let mut f = filter(0.9, 1e-6);
        f.config.max_children = usize::MAX;
        f.set_density(PmbmDensity {
            undetected: GaussianMixture::empty(),
            hypotheses: vec![GlobalHypothesis {
                log_weight: 0.0,
                bernoullis: vec![bern(1.0, 0.0, 0.01, 0)],
            }],
        });
        f.update(&[DVector::from_column_slice(&[0.0])]).unwrap();
        let d = f.density();
        let winner = &d.hypotheses[d.winning_hypothesis()];
        assert!(winner.log_weight.exp() > 0.99, "weight {}", winner.log_weight.exp());
        assert_eq!(winner.bernoullis.len(), 1);
        assert_relative_eq!(winner.bernoullis[0].existence, 1.0);
        d.validate().unwrap();
    }

    #[test]
    fn reduce_prunes_and_renormalizes() {
        let mut f = filter(0.9, 1.0);
        f.config.hypothesis_weight_min = 0.01;
        f.set_density(PmbmDensity {
            undetected: GaussianMixture::empty(),
            hypotheses: vec![
                GlobalHypothesis { log_weight: 0.999f64.ln(), bernoullis: vec![] },
                GlobalHypothesis { log_weight: 0.001f64.ln(), bernoullis: vec![bern(0.5, 0.0, 1.0, 0)] },
            ],
        });
        f.reduce();
        let d = f.density();
        assert_eq!(d.hypotheses.len(), 1);
        assert_relative_eq!(d.hypotheses[0].log_weight.exp(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn reduce_caps_hypothesis_count() {
        let mut f = filter(0.9, 1.0);
        f.config.max_hypotheses = 100;
        f.config.hypothesis_weight_min = 0.0;
        let n = 150;
        let hyps: Vec<GlobalHypothesis<f64>> = (0..n)
            .map(|i| GlobalHypothesis {
                log_weight: -((i + 1) as f64).ln(),
                bernoullis: vec![bern(0.9, i as f64 * 1000.0, 1.0, i as u64)],
            })
            .collect();
        f.set_density(PmbmDensity { undetected: GaussianMixture::empty(), hypotheses: hyps });
        f.reduce();
        assert_eq!(f.density().hypotheses.len(), 100);
        // Heaviest kept: the smallest original index survived.
        assert_eq!(f.density().hypotheses[0].bernoullis[0].track_id, TrackId(0));
        f.density().validate().unwrap();
    }

    #[test]
    fn reduce_drops_low_existence() {
        let mut f = filter(0.9, 1.0);
        f.set_density(PmbmDensity {
            undetected: GaussianMixture::empty(),
            hypotheses: vec![GlobalHypothesis {
                log_weight: 0.0,
                bernoullis: vec![bern(1e-5, 0.0, 1.0, 0), bern(0.5, 1.0, 1.0, 1)],
            }],
        });
        f.reduce();
        let winner = &f.density().hypotheses[0];
        assert_eq!(winner.bernoullis.len(), 1);
        assert_eq!(winner.bernoullis[0].track_id, TrackId(1));
    }

    #[test]
    fn reduce_merges_duplicates() {
        let mut f = filter(0.9, 1.0);
        let h = GlobalHypothesis {
            log_weight: 0.5f64.ln(),
            bernoullis: vec![bern(0.9, 1.0, 1.0, 4)],
        };
        f.set_density(PmbmDensity {
            undetected: GaussianMixture::empty(),
            hypotheses: vec![h.clone(), h],
        });
        f.reduce();
        assert_eq!(f.density().hypotheses.len(), 1);
        assert_relative_eq!(f.density().hypotheses[0].log_weight.exp(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn extract_thresholds_existence() {
        let mut f = filter(0.9, 1.0);
        f.set_density(PmbmDensity {
            undetected: GaussianMixture::empty(),
            hypotheses: vec![
                GlobalHypothesis {
                    log_weight: 0.7f64.ln(),
                    bernoullis: vec![bern(0.9, 5.0, 1.0, 0), bern(0.2, -5.0, 1.0, 1)],
                },
                GlobalHypothesis {
                    log_weight: 0.3f64.ln(),
                    bernoullis: vec![bern(0.99, 77.0, 1.0, 2)],
                },
            ],
        });
        let out = f.extract();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0, TrackId(0));
        assert_relative_eq!(out[0].1[0], 5.0);
    }

    #[test]
    fn extract_empty_when_all_below_threshold() {
        let mut f = filter(0.9, 1.0);
        f.set_density(PmbmDensity {
            undetected: GaussianMixture::empty(),
            hypotheses: vec![GlobalHypothesis {
                log_weight: 0.0,
                bernoullis: vec![bern(0.4, 0.0, 1.0, 0)],
            }],
        });
        assert!(f.extract().is_empty());
    }

    #[test]
    fn extract_tie_goes_to_lower_index() {
        let mut f = filter(0.9, 1.0);
        f.set_density(PmbmDensity {
            undetected: GaussianMixture::empty(),
            hypotheses: vec![
                GlobalHypothesis { log_weight: 0.5f64.ln(), bernoullis: vec![bern(0.9, 1.0, 1.0, 0)] },
                GlobalHypothesis { log_weight: 0.5f64.ln(), bernoullis: vec![bern(0.9, 2.0, 1.0, 1)] },
            ],
        });
        let out = f.extract();
        assert_eq!(out[0].0, TrackId(0));
    }

    #[test]
    fn certain_object_with_p_d_one_keeps_tracking() {
        // The p_D = 1, r = 1 boundary: a missed detection has zero
        // likelihood, so only the detected child survives.
        let mut f = filter(1.0, 0.0);
        f.set_density(PmbmDensity {
            undetected: GaussianMixture::empty(),
            hypotheses: vec![GlobalHypothesis {
                log_weight: 0.0,
                bernoullis: vec![bern(1.0, 0.0, 1.0, 0)],
            }],
        });
        f.update(&[DVector::from_column_slice(&[0.5])]).unwrap();
        let d = f.density();
        assert_eq!(d.hypotheses.len(), 1);
        assert_relative_eq!(d.hypotheses[0].bernoullis[0].existence, 1.0);
        assert_relative_eq!(d.hypotheses[0].bernoullis[0].density.mean[0], 0.25, max_relative = 1e-9);
        d.validate().unwrap();
    }

    #[test]
    fn update_rejects_wrong_measurement_dim() {
        let mut f = filter(0.9, 1.0);
        let err = f.update(&[DVector::from_column_slice(&[0.0, 1.0])]).unwrap_err();
        assert!(matches!(err, PmbmError::MeasurementDim { .. }));
    }
}
