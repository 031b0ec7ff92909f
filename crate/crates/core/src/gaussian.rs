//! Gaussian densities, non-normalized Gaussian mixtures, and the
//! unscented-transform prediction/update used to evaluate the inner products
//! between densities and the measurement likelihood.
//!
//! All mixture weights and likelihoods are carried in the log domain; the
//! products that appear in the association update underflow otherwise.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::scalar::{log_sum_exp, Real};

/// Relative symmetry/PSD tolerance used by [`GaussianDensity::validate`].
const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GaussianError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("covariance is not positive semi-definite (after jitter)")]
    CovarianceNotPsd,
    #[error("innovation covariance is numerically singular")]
    DegenerateUpdate,
    #[error("transform undefined at a sigma point")]
    TransformUndefined,
    #[error("invalid sigma-point parameters")]
    InvalidSigmaParams,
    #[error("non-finite value in density parameters")]
    NonFinite,
}

/// A single multivariate Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDensity<T: Real> {
    pub mean: DVector<T>,
    pub cov: DMatrix<T>,
}

impl<T: Real> GaussianDensity<T> {
    /// Builds a density after checking dimensions, finiteness, symmetry and
    /// positive semi-definiteness.
    pub fn new(mean: DVector<T>, cov: DMatrix<T>) -> Result<Self, GaussianError> {
        let g = Self { mean, cov };
        g.validate()?;
        Ok(g)
    }

    /// Builds a density without validation; callers guarantee the invariants.
    pub fn new_unchecked(mean: DVector<T>, cov: DMatrix<T>) -> Self {
        Self { mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Checks the density invariants: finite entries, `cov` square of matching
    /// dimension, symmetric to `1e-9` relative, eigenvalues `>= -1e-9 * trace`.
    pub fn validate(&self) -> Result<(), GaussianError> {
        let n = self.mean.len();
        if n == 0 || self.cov.nrows() != n || self.cov.ncols() != n {
            return Err(GaussianError::DimensionMismatch {
                expected: n,
                actual: self.cov.nrows(),
            });
        }
        if self.mean.iter().any(|v| !v.is_finite()) || self.cov.iter().any(|v| !v.is_finite()) {
            return Err(GaussianError::NonFinite);
        }
        let mut max_abs = T::zero();
        let mut max_asym = T::zero();
        for i in 0..n {
            for j in 0..n {
                max_abs = max_abs.max(self.cov[(i, j)].abs());
                max_asym = max_asym.max((self.cov[(i, j)] - self.cov[(j, i)]).abs());
            }
        }
        if max_asym > T::of(PSD_TOL) * max_abs.max(T::one()) {
            return Err(GaussianError::CovarianceNotPsd);
        }
        let eig = symmetrize(&self.cov).symmetric_eigen();
        let trace = self.cov.trace().abs();
        let floor = -T::of(PSD_TOL) * trace.max(T::one());
        if eig.eigenvalues.iter().any(|&l| l < floor) {
            return Err(GaussianError::CovarianceNotPsd);
        }
        Ok(())
    }

    /// Log-density at `x`.
    pub fn log_pdf(&self, x: &DVector<T>) -> Result<T, GaussianError> {
        let chol = cholesky_with_jitter(&self.cov).ok_or(GaussianError::DegenerateUpdate)?;
        let nu = x - &self.mean;
        let maha = nu.dot(&chol.solve(&nu));
        Ok(log_normalizer(self.dim(), &chol) - T::of(0.5) * maha)
    }
}

/// One weighted term of a [`GaussianMixture`].
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent<T: Real> {
    pub log_weight: T,
    pub density: GaussianDensity<T>,
}

/// Non-normalized weighted Gaussian sum. Used for Poisson-process intensities,
/// where the exp-sum of the log-weights is the expected number of objects.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GaussianMixture<T: Real> {
    pub components: Vec<MixtureComponent<T>>,
}

impl<T: Real> GaussianMixture<T> {
    pub fn new(components: Vec<MixtureComponent<T>>) -> Self {
        Self { components }
    }

    pub fn empty() -> Self {
        Self { components: Vec::new() }
    }

    pub fn push(&mut self, log_weight: T, density: GaussianDensity<T>) {
        self.components.push(MixtureComponent { log_weight, density });
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Log of the total mixture mass, `-inf` when empty.
    pub fn log_mass(&self) -> T {
        let logs: Vec<T> = self.components.iter().map(|c| c.log_weight).collect();
        log_sum_exp(&logs)
    }

    /// Total mixture mass (the Poisson rate when used as an intensity).
    pub fn total_mass(&self) -> T {
        self.log_mass().exp()
    }

    /// Adds `delta` to every log-weight, i.e. scales the mixture by `exp(delta)`.
    pub fn scale_log(&mut self, delta: T) {
        for c in &mut self.components {
            c.log_weight += delta;
        }
    }
}

/// Sigma-point spread parameters for the unscented transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaParams<T: Real> {
    pub alpha: T,
    pub beta: T,
    pub kappa: T,
}

impl<T: Real> Default for SigmaParams<T> {
    fn default() -> Self {
        Self { alpha: T::one(), beta: T::of(2.0), kappa: T::zero() }
    }
}

impl<T: Real> SigmaParams<T> {
    /// Scaling constant `alpha^2 (n + kappa)`; must be positive.
    fn scaling(&self, n: usize) -> Result<T, GaussianError> {
        if !(self.alpha > T::zero()) {
            return Err(GaussianError::InvalidSigmaParams);
        }
        let c = self.alpha * self.alpha * (T::from_usize(n).unwrap() + self.kappa);
        if !(c > T::zero()) || !c.is_finite() {
            return Err(GaussianError::InvalidSigmaParams);
        }
        Ok(c)
    }
}

pub(crate) fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let half = T::of(0.5);
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] + m[(j, i)]) * half)
}

/// Square root of a PSD matrix: a Cholesky factor when the matrix is positive
/// definite, otherwise an eigenvalue square root with jitter escalation
/// (`1e-12 * trace` added to the diagonal, escalated tenfold, up to 3
/// retries). Eigenvalues within the PSD tolerance band are clamped to zero.
pub(crate) fn sqrt_psd<T: Real>(cov: &DMatrix<T>) -> Result<DMatrix<T>, GaussianError> {
    let n = cov.nrows();
    let sym = symmetrize(cov);
    if let Some(chol) = nalgebra::Cholesky::new(sym.clone()) {
        return Ok(chol.unpack());
    }
    let trace = sym.trace().abs();
    let clamp_floor = -T::of(PSD_TOL) * trace.max(T::one());
    let mut jitter = T::of(1e-12) * trace;
    let mut m = sym;
    for attempt in 0..=3 {
        let eig = m.clone().symmetric_eigen();
        let min_eig = eig.eigenvalues.iter().cloned().fold(T::infinity(), |a, b| a.min(b));
        if min_eig >= clamp_floor {
            let mut root = eig.eigenvectors.clone();
            for k in 0..n {
                let scale = eig.eigenvalues[k].max(T::zero()).sqrt();
                root.column_mut(k).scale_mut(scale);
            }
            return Ok(&root * eig.eigenvectors.transpose());
        }
        if attempt < 3 {
            for i in 0..n {
                m[(i, i)] += jitter;
            }
            jitter *= T::of(10.0);
        }
    }
    Err(GaussianError::CovarianceNotPsd)
}

/// Cholesky factorization with the same jitter escalation as [`sqrt_psd`].
pub(crate) fn cholesky_with_jitter<T: Real>(
    m: &DMatrix<T>,
) -> Option<nalgebra::Cholesky<T, nalgebra::Dyn>> {
    let sym = symmetrize(m);
    let trace = sym.trace().abs();
    let mut jitter = T::of(1e-12) * trace.max(T::one());
    let mut work = sym;
    for attempt in 0..=3 {
        if let Some(chol) = nalgebra::Cholesky::new(work.clone()) {
            return Some(chol);
        }
        if attempt < 3 {
            let n = work.nrows();
            for i in 0..n {
                work[(i, i)] += jitter;
            }
            jitter *= T::of(10.0);
        }
    }
    None
}

/// `-(m/2) ln 2π - (1/2) ln det S` from a Cholesky factor of `S`.
fn log_normalizer<T: Real>(dim: usize, chol: &nalgebra::Cholesky<T, nalgebra::Dyn>) -> T {
    let two_pi = T::two_pi();
    let mut log_det = T::zero();
    let l = chol.l_dirty();
    for i in 0..dim {
        log_det += l[(i, i)].ln();
    }
    // ln det S = 2 ln det L
    -T::of(0.5) * (T::from_usize(dim).unwrap() * two_pi.ln()) - log_det
}

/// Propagates a Gaussian through `f` with the standard `2n+1` sigma-point
/// transform. Returns the output density (additive `noise` included) and the
/// input-output cross-covariance needed by the filter update.
///
/// `f` returns `None` where it is undefined (e.g. behind the camera); that is
/// reported as [`GaussianError::TransformUndefined`].
pub fn unscented_transform<T, F>(
    g: &GaussianDensity<T>,
    f: F,
    noise: &DMatrix<T>,
    params: &SigmaParams<T>,
) -> Result<(GaussianDensity<T>, DMatrix<T>), GaussianError>
where
    T: Real,
    F: Fn(&DVector<T>) -> Option<DVector<T>>,
{
    let n = g.dim();
    let c = params.scaling(n)?;
    let lambda = c - T::from_usize(n).unwrap();

    let root = sqrt_psd(&g.cov)?;
    let scale = c.sqrt();

    let mut points: Vec<DVector<T>> = Vec::with_capacity(2 * n + 1);
    points.push(g.mean.clone());
    for k in 0..n {
        let offset = root.column(k) * scale;
        points.push(&g.mean + &offset);
        points.push(&g.mean - &offset);
    }

    let mut outputs: Vec<DVector<T>> = Vec::with_capacity(points.len());
    for p in &points {
        let y = f(p).ok_or(GaussianError::TransformUndefined)?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(GaussianError::TransformUndefined);
        }
        outputs.push(y);
    }
    let m = outputs[0].len();
    if outputs.iter().any(|y| y.len() != m) {
        return Err(GaussianError::DimensionMismatch { expected: m, actual: outputs.len() });
    }
    if noise.nrows() != m || noise.ncols() != m {
        return Err(GaussianError::DimensionMismatch { expected: m, actual: noise.nrows() });
    }

    let w_mean0 = lambda / c;
    let w_cov0 = w_mean0 + (T::one() - params.alpha * params.alpha + params.beta);
    let w_i = T::of(0.5) / c;

    let mut mean = &outputs[0] * w_mean0;
    for y in outputs.iter().skip(1) {
        mean += y * w_i;
    }

    let mut cov = noise.clone();
    let mut cross = DMatrix::zeros(n, m);
    for (idx, y) in outputs.iter().enumerate() {
        let w = if idx == 0 { w_cov0 } else { w_i };
        let dy = y - &mean;
        let dx = &points[idx] - &g.mean;
        cov += &dy * dy.transpose() * w;
        cross += dx * dy.transpose() * w;
    }
    let cov = symmetrize(&cov);
    if mean.iter().any(|v| !v.is_finite()) || cov.iter().any(|v| !v.is_finite()) {
        return Err(GaussianError::NonFinite);
    }
    Ok((GaussianDensity { mean, cov }, cross))
}

/// Sigma-point prediction through a motion function with additive process noise.
pub fn ukf_predict<T, F>(
    g: &GaussianDensity<T>,
    motion: F,
    process_noise: &DMatrix<T>,
    params: &SigmaParams<T>,
) -> Result<GaussianDensity<T>, GaussianError>
where
    T: Real,
    F: Fn(&DVector<T>) -> Option<DVector<T>>,
{
    unscented_transform(g, motion, process_noise, params).map(|(g, _)| g)
}

/// The measurement-space prediction of one Gaussian: everything needed for
/// gating, likelihood evaluation and the posterior, computed once per density.
#[derive(Debug, Clone)]
pub struct MeasurementPrediction<T: Real> {
    prior: GaussianDensity<T>,
    /// Predicted measurement `N(zhat, S)`, innovation covariance included.
    pub predicted: GaussianDensity<T>,
    cross: DMatrix<T>,
    chol: nalgebra::Cholesky<T, nalgebra::Dyn>,
    log_norm: T,
}

impl<T: Real> MeasurementPrediction<T> {
    /// Squared Mahalanobis distance of `z` from the predicted measurement.
    pub fn mahalanobis_sq(&self, z: &DVector<T>) -> T {
        let nu = z - &self.predicted.mean;
        nu.dot(&self.chol.solve(&nu))
    }

    /// `ln N(z; zhat, S)`, the log of the density-likelihood inner product.
    pub fn log_likelihood(&self, z: &DVector<T>) -> T {
        self.log_norm - T::of(0.5) * self.mahalanobis_sq(z)
    }

    /// Posterior density given measurement `z` via the unscented Kalman gain.
    pub fn posterior(&self, z: &DVector<T>) -> GaussianDensity<T> {
        let nu = z - &self.predicted.mean;
        // K = P_xz S^-1, computed as (S^-1 P_xz^T)^T through the factorization
        let gain = self.chol.solve(&self.cross.transpose()).transpose();
        let mean = &self.prior.mean + &gain * nu;
        let cov = &self.prior.cov - &gain * &self.predicted.cov * gain.transpose();
        GaussianDensity { mean, cov: symmetrize(&cov) }
    }
}

/// Projects `g` into measurement space through `f`, preparing gating and
/// update quantities. Fails when the innovation covariance is singular.
pub fn prepare_measurement<T, F>(
    g: &GaussianDensity<T>,
    f: F,
    measurement_noise: &DMatrix<T>,
    params: &SigmaParams<T>,
) -> Result<MeasurementPrediction<T>, GaussianError>
where
    T: Real,
    F: Fn(&DVector<T>) -> Option<DVector<T>>,
{
    let (predicted, cross) = unscented_transform(g, f, measurement_noise, params)?;
    let chol = cholesky_with_jitter(&predicted.cov).ok_or(GaussianError::DegenerateUpdate)?;
    let log_norm = log_normalizer(predicted.dim(), &chol);
    Ok(MeasurementPrediction { prior: g.clone(), predicted, cross, chol, log_norm })
}

/// Sigma-point measurement update. Returns the posterior density and the
/// log-likelihood `ln N(z; zhat, S)` of the measurement.
pub fn ukf_update<T, F>(
    g: &GaussianDensity<T>,
    z: &DVector<T>,
    measurement: F,
    measurement_noise: &DMatrix<T>,
    params: &SigmaParams<T>,
) -> Result<(GaussianDensity<T>, T), GaussianError>
where
    T: Real,
    F: Fn(&DVector<T>) -> Option<DVector<T>>,
{
    let pred = prepare_measurement(g, measurement, measurement_noise, params)?;
    if z.len() != pred.predicted.dim() {
        return Err(GaussianError::DimensionMismatch {
            expected: pred.predicted.dim(),
            actual: z.len(),
        });
    }
    let log_lik = pred.log_likelihood(z);
    Ok((pred.posterior(z), log_lik))
}

/// Moment-matches a set of log-weighted Gaussians into a single Gaussian.
/// Returns the log of the total weight together with the matched density.
pub fn moment_match<T: Real>(terms: &[(T, GaussianDensity<T>)]) -> (T, GaussianDensity<T>) {
    assert!(!terms.is_empty(), "moment_match needs at least one term");
    let logs: Vec<T> = terms.iter().map(|(lw, _)| *lw).collect();
    let log_total = log_sum_exp(&logs);
    let n = terms[0].1.dim();

    let mut mean = DVector::zeros(n);
    let mut weights = Vec::with_capacity(terms.len());
    for (lw, g) in terms {
        let w = (*lw - log_total).exp();
        mean += &g.mean * w;
        weights.push(w);
    }
    let mut cov = DMatrix::zeros(n, n);
    for ((_, g), w) in terms.iter().zip(&weights) {
        let d = &g.mean - &mean;
        cov += (&g.cov + &d * d.transpose()) * *w;
    }
    (log_total, GaussianDensity { mean, cov: symmetrize(&cov) })
}

/// Prunes, merges and caps a mixture.
///
/// Components with log-weight below `prune_log_threshold` are dropped; the
/// remaining ones are greedily merged (heaviest first) with any component
/// within `merge_mahalanobis_threshold` of it, by exact moment matching; the
/// result is capped to the `max_components` heaviest. Merging preserves the
/// merged mass exactly.
pub fn gm_reduce<T: Real>(
    mixture: &GaussianMixture<T>,
    prune_log_threshold: T,
    merge_mahalanobis_threshold: T,
    max_components: usize,
) -> GaussianMixture<T> {
    assert!(max_components >= 1);
    let mut remaining: Vec<&MixtureComponent<T>> = mixture
        .components
        .iter()
        .filter(|c| c.log_weight >= prune_log_threshold)
        .collect();

    let mut merged: Vec<MixtureComponent<T>> = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let mut best = 0;
        for (i, c) in remaining.iter().enumerate() {
            if c.log_weight > remaining[best].log_weight {
                best = i;
            }
        }
        let center = remaining.swap_remove(best);
        let inv = cholesky_with_jitter(&center.density.cov);
        let mut group: Vec<(T, GaussianDensity<T>)> =
            vec![(center.log_weight, center.density.clone())];
        if let Some(chol) = inv {
            remaining.retain(|c| {
                let d = &c.density.mean - &center.density.mean;
                let maha = d.dot(&chol.solve(&d));
                if maha <= merge_mahalanobis_threshold {
                    group.push((c.log_weight, c.density.clone()));
                    false
                } else {
                    true
                }
            });
        }
        let (log_w, density) = if group.len() == 1 {
            group.pop().unwrap()
        } else {
            moment_match(&group)
        };
        merged.push(MixtureComponent { log_weight: log_w, density });
    }

    merged.sort_by(|a, b| b.log_weight.partial_cmp(&a.log_weight).unwrap());
    merged.truncate(max_components);
    GaussianMixture { components: merged }
}
