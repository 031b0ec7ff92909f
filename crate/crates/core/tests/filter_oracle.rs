//! Filter-versus-enumerator checks on small association problems, including
//! the canonical two-objects/three-measurements partition example.

mod common;

use common::*;
use monotrack::gaussian::GaussianMixture;
use monotrack::pmbm::{PmbmConfig, PmbmFilter};
use nalgebra::{DMatrix, DVector};

fn exact_config() -> PmbmConfig<f64> {
    PmbmConfig { gate_prob: 1.0, max_children: usize::MAX, ..PmbmConfig::default() }
}

fn scalar_h() -> DMatrix<f64> {
    DMatrix::identity(1, 1)
}

#[test]
fn two_objects_three_measurements_partitions() {
    // Two existing objects and three measurements. The association space must
    // contain the partition where measurement 2 is from object 1, object 2 is
    // missed, and measurements 1 and 3 are background; its posterior weight
    // must match the enumerator, as must every other partition's.
    let h = scalar_h();
    let r = DMatrix::from_element(1, 1, 0.25);
    let prior = OraclePmbm {
        ppp: vec![(0.4, DVector::from_column_slice(&[5.0]), DMatrix::from_element(1, 1, 9.0))],
        hypotheses: vec![(
            1.0,
            vec![
                OracleBernoulli {
                    existence: 0.9,
                    mean: DVector::from_column_slice(&[0.0]),
                    cov: DMatrix::from_element(1, 1, 1.0),
                },
                OracleBernoulli {
                    existence: 0.7,
                    mean: DVector::from_column_slice(&[10.0]),
                    cov: DMatrix::from_element(1, 1, 1.0),
                },
            ],
        )],
    };
    let measurements = vec![
        DVector::from_column_slice(&[4.0]),
        DVector::from_column_slice(&[0.3]),
        DVector::from_column_slice(&[6.5]),
    ];
    let p_detect = 0.8;
    let kappa = 0.05;

    let oracle = enumerate_update(&prior, &h, &r, &measurements, p_detect, kappa);
    // 3 measurements, 2 objects: sum over k assigned pairs of C(3,k) P(2,k).
    assert_eq!(oracle.len(), 1 + 3 * 2 + 3 * 2);

    let params = linear_params(
        1,
        1,
        p_detect,
        kappa,
        DMatrix::from_element(1, 1, 0.01),
        r.clone(),
        GaussianMixture::empty(),
    );
    let mut filter = PmbmFilter::new(
        LinearMotion { a: DMatrix::identity(1, 1) },
        LinearMeasurement { h },
        params,
        exact_config(),
    )
    .unwrap();
    filter.set_density(density_from_oracle(&prior));
    filter.update(&measurements).unwrap();

    assert_matches_oracle(filter.density(), &oracle, 1e-9);
    filter.density().validate().unwrap();

    // The named partition: z2 -> object 1 (index 0), objects otherwise missed,
    // z1 and z3 background. Its child has 2 prior objects + 2 new Bernoullis.
    let named = filter
        .density()
        .hypotheses
        .iter()
        .find(|hyp| {
            hyp.bernoullis.len() == 4
                && hyp.bernoullis[0].existence == 1.0
                && (hyp.bernoullis[0].density.mean[0] - 0.3).abs() < 0.3
                && hyp.bernoullis[1].existence < 0.7
        })
        .expect("the documented partition appears among the children");
    assert!(named.log_weight.exp() > 0.0);
}

#[test]
fn single_frame_exactness_randomized_smoke() {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    let mut rng = StdRng::seed_from_u64(2024);
    for _ in 0..20 {
        let n_obj = rng.random_range(0..=2);
        let n_meas = rng.random_range(0..=3);
        let n_ppp = rng.random_range(1..=2);
        let p_detect = rng.random_range(0.3..0.98);
        let kappa = rng.random_range(0.01..0.5);
        let h = scalar_h();
        let r = DMatrix::from_element(1, 1, rng.random_range(0.1..2.0));

        let ppp = (0..n_ppp)
            .map(|_| {
                (
                    rng.random_range(0.05..1.5),
                    DVector::from_column_slice(&[rng.random_range(-5.0..5.0)]),
                    DMatrix::from_element(1, 1, rng.random_range(0.5..4.0)),
                )
            })
            .collect();
        let bernoullis = (0..n_obj)
            .map(|_| OracleBernoulli {
                existence: rng.random_range(0.2..0.95),
                mean: DVector::from_column_slice(&[rng.random_range(-5.0..5.0)]),
                cov: DMatrix::from_element(1, 1, rng.random_range(0.2..2.0)),
            })
            .collect();
        let prior = OraclePmbm { ppp, hypotheses: vec![(1.0, bernoullis)] };
        let measurements: Vec<DVector<f64>> = (0..n_meas)
            .map(|_| DVector::from_column_slice(&[rng.random_range(-6.0..6.0)]))
            .collect();

        let oracle = enumerate_update(&prior, &h, &r, &measurements, p_detect, kappa);
        let params = linear_params(
            1,
            1,
            p_detect,
            kappa,
            DMatrix::from_element(1, 1, 0.01),
            r.clone(),
            GaussianMixture::empty(),
        );
        let mut filter = PmbmFilter::new(
            LinearMotion { a: DMatrix::identity(1, 1) },
            LinearMeasurement { h: h.clone() },
            params,
            exact_config(),
        )
        .unwrap();
        filter.set_density(density_from_oracle(&prior));
        filter.update(&measurements).unwrap();
        assert_matches_oracle(filter.density(), &oracle, 1e-9);
    }
}
