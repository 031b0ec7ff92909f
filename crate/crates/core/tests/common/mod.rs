//! Shared test oracles, all independent of the library's filtering path:
//! a closed-form Kalman filter, a direct Gaussian log-density, and a
//! brute-force enumerator of every data-association partition.
#![allow(dead_code)]

use monotrack::gaussian::{GaussianDensity, GaussianMixture, MixtureComponent};
use monotrack::models::{MeasurementBounds, MeasurementModel, ModelParams, MotionModel};
use monotrack::pmbm::{BernoulliComponent, GlobalHypothesis, PmbmDensity, TrackId};
use nalgebra::{DMatrix, DVector};

/// Per-step linear motion `x' = A x`; `dt` is baked into `A`.
#[derive(Debug, Clone)]
pub struct LinearMotion {
    pub a: DMatrix<f64>,
}

impl MotionModel<f64> for LinearMotion {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn step(&self, x: &DVector<f64>, _dt: f64) -> DVector<f64> {
        &self.a * x
    }
}

/// Linear measurement `z = H x`.
#[derive(Debug, Clone)]
pub struct LinearMeasurement {
    pub h: DMatrix<f64>,
}

impl MeasurementModel<f64> for LinearMeasurement {
    fn measurement_dim(&self) -> usize {
        self.h.nrows()
    }
    fn project(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        Some(&self.h * x)
    }
}

/// Gaussian log-density via explicit inverse and determinant (LU), a separate
/// numerical route from the library's factorizations.
pub fn log_gaussian(z: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let dim = z.len() as f64;
    let diff = z - mean;
    let inv = cov.clone().try_inverse().expect("oracle covariance invertible");
    let maha = (diff.transpose() * &inv * &diff)[(0, 0)];
    -0.5 * (dim * (2.0 * std::f64::consts::PI).ln() + cov.determinant().ln() + maha)
}

fn symmetrized(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Textbook Kalman filter used as the reference for the linear scenarios.
#[derive(Debug, Clone)]
pub struct ReferenceKalman {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl ReferenceKalman {
    pub fn predict(&mut self, a: &DMatrix<f64>, q: &DMatrix<f64>) {
        self.mean = a * &self.mean;
        self.cov = symmetrized(a * &self.cov * a.transpose() + q);
    }

    /// Measurement update; returns the log-likelihood of `z`.
    pub fn update(&mut self, h: &DMatrix<f64>, r: &DMatrix<f64>, z: &DVector<f64>) -> f64 {
        let s = symmetrized(h * &self.cov * h.transpose() + r);
        let log_lik = log_gaussian(z, &(h * &self.mean), &s);
        let gain = &self.cov * h.transpose() * s.clone().try_inverse().expect("S invertible");
        self.mean += &gain * (z - h * &self.mean);
        let eye = DMatrix::identity(self.cov.nrows(), self.cov.ncols());
        self.cov = symmetrized((eye - &gain * h) * &self.cov);
        log_lik
    }
}

/// Moment matching of linearly weighted Gaussians, written directly.
pub fn oracle_moment_match(
    terms: &[(f64, DVector<f64>, DMatrix<f64>)],
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let total: f64 = terms.iter().map(|(w, _, _)| w).sum();
    let n = terms[0].1.len();
    let mut mean = DVector::zeros(n);
    for (w, m, _) in terms {
        mean += m * (*w / total);
    }
    let mut cov = DMatrix::zeros(n, n);
    for (w, m, c) in terms {
        let d = m - &mean;
        cov += (c + d.clone() * d.transpose()) * (*w / total);
    }
    (total, mean, symmetrized(cov))
}

/// One Bernoulli as the oracle represents it.
#[derive(Debug, Clone)]
pub struct OracleBernoulli {
    pub existence: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// A prior for the oracle: linear-weight hypotheses over Bernoulli lists plus
/// a Poisson intensity given as `(weight, mean, cov)` components.
#[derive(Debug, Clone)]
pub struct OraclePmbm {
    pub ppp: Vec<(f64, DVector<f64>, DMatrix<f64>)>,
    pub hypotheses: Vec<(f64, Vec<OracleBernoulli>)>,
}

/// All assignments of measurements to `None` (background) or a distinct
/// object index.
fn all_association_maps(n_meas: usize, n_obj: usize) -> Vec<Vec<Option<usize>>> {
    fn recurse(
        m: usize,
        n_meas: usize,
        n_obj: usize,
        used: &mut Vec<bool>,
        current: &mut Vec<Option<usize>>,
        out: &mut Vec<Vec<Option<usize>>>,
    ) {
        if m == n_meas {
            out.push(current.clone());
            return;
        }
        current.push(None);
        recurse(m + 1, n_meas, n_obj, used, current, out);
        current.pop();
        for i in 0..n_obj {
            if used[i] {
                continue;
            }
            used[i] = true;
            current.push(Some(i));
            recurse(m + 1, n_meas, n_obj, used, current, out);
            current.pop();
            used[i] = false;
        }
    }
    let mut out = Vec::new();
    recurse(0, n_meas, n_obj, &mut vec![false; n_obj], &mut Vec::new(), &mut out);
    out
}

/// Brute-force enumeration of the posterior over every association partition,
/// with closed-form linear-Gaussian cells. Children are normalized across all
/// hypotheses; Bernoullis are ordered prior-objects-first, then new objects in
/// measurement order, mirroring the filter's layout.
pub fn enumerate_update(
    prior: &OraclePmbm,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    measurements: &[DVector<f64>],
    p_detect: f64,
    kappa: f64,
) -> Vec<(f64, Vec<OracleBernoulli>)> {
    // Per-measurement new-object cells, shared by all hypotheses.
    struct NewCell {
        lik: f64,
        bern: Option<OracleBernoulli>,
    }
    let new_cells: Vec<NewCell> = measurements
        .iter()
        .map(|z| {
            let mut terms = Vec::new();
            for (w, mean, cov) in &prior.ppp {
                let s = symmetrized(h * cov * h.transpose() + r);
                let lik = log_gaussian(z, &(h * mean), &s).exp();
                let gain = cov * h.transpose() * s.try_inverse().expect("S invertible");
                let post_mean = mean + &gain * (z - h * mean);
                let eye = DMatrix::identity(cov.nrows(), cov.ncols());
                let post_cov = symmetrized((eye - &gain * h) * cov);
                terms.push((w * lik, post_mean, post_cov));
            }
            if terms.is_empty() {
                return NewCell { lik: kappa, bern: None };
            }
            let (inner, mean, cov) = oracle_moment_match(&terms);
            let lik = kappa + p_detect * inner;
            NewCell {
                lik,
                bern: Some(OracleBernoulli {
                    existence: p_detect * inner / lik,
                    mean,
                    cov,
                }),
            }
        })
        .collect();

    let mut children: Vec<(f64, Vec<OracleBernoulli>)> = Vec::new();
    for (hyp_weight, bernoullis) in &prior.hypotheses {
        for map in all_association_maps(measurements.len(), bernoullis.len()) {
            let mut weight = *hyp_weight;
            let mut out_berns: Vec<OracleBernoulli> = Vec::new();
            let mut detected: Vec<Option<usize>> = vec![None; bernoullis.len()];
            for (m, target) in map.iter().enumerate() {
                if let Some(i) = target {
                    detected[*i] = Some(m);
                }
            }
            for (i, b) in bernoullis.iter().enumerate() {
                if let Some(m) = detected[i] {
                    let z = &measurements[m];
                    let s = symmetrized(h * &b.cov * h.transpose() + r);
                    let lik = log_gaussian(z, &(h * &b.mean), &s).exp();
                    weight *= b.existence * p_detect * lik;
                    let gain = &b.cov * h.transpose() * s.try_inverse().expect("S invertible");
                    let mean = &b.mean + &gain * (z - h * &b.mean);
                    let eye = DMatrix::identity(b.cov.nrows(), b.cov.ncols());
                    let cov = symmetrized((eye - &gain * h) * &b.cov);
                    out_berns.push(OracleBernoulli { existence: 1.0, mean, cov });
                } else {
                    let lik = 1.0 - b.existence * p_detect;
                    weight *= lik;
                    let existence = if lik > 0.0 {
                        b.existence * (1.0 - p_detect) / lik
                    } else {
                        1.0
                    };
                    out_berns.push(OracleBernoulli {
                        existence,
                        mean: b.mean.clone(),
                        cov: b.cov.clone(),
                    });
                }
            }
            for (m, target) in map.iter().enumerate() {
                if target.is_none() {
                    weight *= new_cells[m].lik;
                    if let Some(b) = &new_cells[m].bern {
                        out_berns.push(b.clone());
                    }
                }
            }
            children.push((weight, out_berns));
        }
    }
    let total: f64 = children.iter().map(|(w, _)| w).sum();
    for (w, _) in &mut children {
        *w /= total;
    }
    children
}

/// Unit-volume bounds so the clutter intensity equals the clutter rate.
pub fn unit_bounds() -> MeasurementBounds<f64> {
    MeasurementBounds {
        u: (0.0, 1.0),
        v: (0.0, 1.0),
        d: (0.0, 1.0),
        w: (0.0, 1.0),
        h: (0.0, 1.0),
    }
}

/// Model parameters for the linear toy models; the bounds give `kappa` equal
/// to `clutter_rate`.
pub fn linear_params(
    state_dim: usize,
    meas_dim: usize,
    p_detect: f64,
    kappa: f64,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    birth: GaussianMixture<f64>,
) -> ModelParams<f64> {
    assert_eq!(q.nrows(), state_dim);
    assert_eq!(r.nrows(), meas_dim);
    ModelParams {
        p_detect,
        p_survive: 1.0,
        clutter_rate: kappa,
        clutter_bounds: unit_bounds(),
        process_noise: q,
        measurement_noise: r,
        birth,
        dt: 1.0,
    }
}

/// Builds a filter density from an oracle prior; ids number the Bernoullis in
/// order within each hypothesis.
pub fn density_from_oracle(prior: &OraclePmbm) -> PmbmDensity<f64> {
    let undetected = GaussianMixture::new(
        prior
            .ppp
            .iter()
            .map(|(w, mean, cov)| MixtureComponent {
                log_weight: w.ln(),
                density: GaussianDensity::new_unchecked(mean.clone(), cov.clone()),
            })
            .collect(),
    );
    let hypotheses = prior
        .hypotheses
        .iter()
        .map(|(w, berns)| GlobalHypothesis {
            log_weight: w.ln(),
            bernoullis: berns
                .iter()
                .enumerate()
                .map(|(i, b)| BernoulliComponent {
                    existence: b.existence,
                    density: GaussianDensity::new_unchecked(b.mean.clone(), b.cov.clone()),
                    track_id: TrackId(i as u64),
                })
                .collect(),
        })
        .collect();
    PmbmDensity { undetected, hypotheses }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn bernoullis_match(a: &[OracleBernoulli], b: &[BernoulliComponent<f64>], tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.iter().zip(b).all(|(x, y)| {
        close(x.existence, y.existence, tol)
            && x.mean.iter().zip(y.density.mean.iter()).all(|(p, q)| close(*p, *q, tol))
            && x.cov.iter().zip(y.density.cov.iter()).all(|(p, q)| close(*p, *q, tol))
    })
}

/// Asserts that the filter's posterior matches the enumerated one: same
/// number of children, and a one-to-one pairing with equal weights and equal
/// Bernoulli parameters within `tol`.
pub fn assert_matches_oracle(
    density: &PmbmDensity<f64>,
    oracle: &[(f64, Vec<OracleBernoulli>)],
    tol: f64,
) {
    assert_eq!(
        density.hypotheses.len(),
        oracle.len(),
        "child hypothesis count: filter {} vs oracle {}",
        density.hypotheses.len(),
        oracle.len()
    );
    let mut used = vec![false; density.hypotheses.len()];
    for (ow, oberns) in oracle {
        let mut found = false;
        for (j, hyp) in density.hypotheses.iter().enumerate() {
            if used[j] {
                continue;
            }
            if close(*ow, hyp.log_weight.exp(), tol) && bernoullis_match(oberns, &hyp.bernoullis, tol)
            {
                used[j] = true;
                found = true;
                break;
            }
        }
        assert!(found, "no filter child matches oracle child with weight {ow}");
    }
}
