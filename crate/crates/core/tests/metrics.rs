use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use polarity_sampling::cpa_net::{Activation, CpaNetwork, Layer};
use polarity_sampling::metrics::{
    frechet_distance, nn_distances, path_length, precision_recall, EndpointSpace, MetricReport, ReportConfig,
    SampleSet,
};
use polarity_sampling::spectral::random_semi_orthogonal;
use polarity_sampling::Error;

fn gaussian_set(n: usize, dim: usize, shift: f64, scale: f64, seed: u64) -> SampleSet {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| DVector::from_fn(dim, |_, _| shift + scale * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    SampleSet::new("g", points).unwrap()
}

fn line(xs: &[f64]) -> SampleSet {
    SampleSet::new("line", xs.iter().map(|&x| DVector::from_element(1, x)).collect()).unwrap()
}

fn mapped(set: &SampleSet, q: &DMatrix<f64>) -> SampleSet {
    SampleSet::new("mapped", set.points().iter().map(|p| q * p).collect()).unwrap()
}

fn linear_net(a: DMatrix<f64>) -> CpaNetwork {
    let rows = a.nrows();
    let cols = a.ncols();
    CpaNetwork::new("linear", cols, vec![Layer::linear(a, DVector::zeros(rows)).unwrap()]).unwrap()
}

fn pairs(n: usize, dim: usize, seed: u64) -> Vec<(DVector<f64>, DVector<f64>)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut draw = || DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
    (0..n).map(|_| (draw(), draw())).collect()
}

#[test]
fn frechet_is_zero_on_itself_and_symmetric() {
    let a = gaussian_set(300, 3, 0.0, 1.0, 1);
    let b = gaussian_set(300, 3, 0.5, 2.0, 2);
    assert!(frechet_distance(&a, &a).unwrap() < 1e-9);
    let ab = frechet_distance(&a, &b).unwrap();
    let ba = frechet_distance(&b, &a).unwrap();
    assert!(ab > 0.0);
    assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0));
}

#[test]
fn frechet_rejects_dimension_mismatch() {
    let a = gaussian_set(10, 2, 0.0, 1.0, 1);
    let b = gaussian_set(10, 3, 0.0, 1.0, 1);
    assert!(matches!(frechet_distance(&a, &b), Err(Error::Input(_))));
    assert!(matches!(precision_recall(&a, &b, 3), Err(Error::Input(_))));
    assert!(matches!(nn_distances(&a, &b, 1), Err(Error::Input(_))));
}

#[test]
fn precision_recall_argument_errors() {
    let a = gaussian_set(5, 1, 0.0, 1.0, 1);
    assert!(matches!(precision_recall(&a, &a, 0), Err(Error::Input(_))));
    assert!(matches!(precision_recall(&a, &a, 5), Err(Error::Input(_))));
    assert!(matches!(nn_distances(&a, &a, 0), Err(Error::Input(_))));
    assert!(matches!(nn_distances(&a, &a, 6), Err(Error::Input(_))));
}

#[test]
fn duplicated_fake_points_keep_recall() {
    let real = gaussian_set(200, 2, 0.0, 1.0, 3);
    let fake = gaussian_set(200, 2, 0.2, 1.0, 4);
    let (_, recall) = precision_recall(&real, &fake, 3).unwrap();
    let mut doubled = fake.points().to_vec();
    doubled.extend_from_slice(fake.points());
    let doubled = SampleSet::new("doubled", doubled).unwrap();
    let (_, recall2) = precision_recall(&real, &doubled, 3).unwrap();
    assert_eq!(recall, recall2);
}

#[test]
fn nn_distance_examples() {
    let training = line(&[0.0, 1.0, 3.0]);
    let generated = line(&[0.0, 2.0]);
    let d1 = nn_distances(&generated, &training, 1).unwrap();
    assert_eq!(d1, vec![0.0, 1.0]);
    let d2 = nn_distances(&generated, &training, 2).unwrap();
    assert_eq!(d2, vec![0.5, 1.0]);
    let d3 = nn_distances(&generated, &training, 3).unwrap();
    assert!((d3[0] - 4.0 / 3.0).abs() < 1e-12 && (d3[1] - 4.0 / 3.0).abs() < 1e-12);
}

#[test]
fn path_length_of_identity_is_squared_step() {
    let net = CpaNetwork::identity(1);
    let ps = pairs(50, 1, 5);
    let pl = path_length(&net, None, &ps, 1e-4, EndpointSpace::Latent, 0).unwrap();
    for ((z1, z2), s) in ps.iter().zip(&pl.scores) {
        let want = (z2 - z1).norm_squared();
        assert!((s - want).abs() <= 1e-6 * want.max(1.0), "{s} vs {want}");
    }
}

#[test]
fn path_length_of_linear_map() {
    let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 3.0, 0.0]);
    let net = linear_net(a.clone());
    let ps = pairs(40, 2, 6);
    for eps in [1e-2, 1e-4, 1e-6] {
        let pl = path_length(&net, None, &ps, eps, EndpointSpace::Latent, 9).unwrap();
        for ((z1, z2), s) in ps.iter().zip(&pl.scores) {
            let want = (&a * (z2 - z1)).norm_squared();
            assert!((s - want).abs() <= 1e-5 * want.max(1.0), "eps {eps}: {s} vs {want}");
        }
    }
}

#[test]
fn path_length_intermediate_endpoints() {
    // a purely linear stack: interpolating after the first layer is the same map
    let first = Layer::linear(DMatrix::from_row_slice(2, 1, &[2.0, -1.0]), DVector::zeros(2)).unwrap();
    let second = Layer::linear(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::zeros(1)).unwrap();
    let net = CpaNetwork::new("stack", 1, vec![first, second]).unwrap();
    let ps = pairs(20, 1, 7);
    let latent = path_length(&net, None, &ps, 1e-4, EndpointSpace::Latent, 1).unwrap();
    let inter = path_length(&net, None, &ps, 1e-4, EndpointSpace::Intermediate { split: 1 }, 1).unwrap();
    for (a, b) in latent.scores.iter().zip(&inter.scores) {
        assert!((a - b).abs() <= 1e-6 * a.max(1.0));
    }
}

#[test]
fn path_length_errors() {
    let net = CpaNetwork::identity(1);
    let ps = pairs(3, 1, 1);
    assert!(matches!(path_length(&net, None, &ps, 0.0, EndpointSpace::Latent, 0), Err(Error::Input(_))));
    assert!(matches!(path_length(&net, None, &[], 1e-4, EndpointSpace::Latent, 0), Err(Error::Input(_))));
    let wrong = pairs(3, 2, 1);
    assert!(path_length(&net, None, &wrong, 1e-4, EndpointSpace::Latent, 0).is_err());
}

#[test]
fn relu_path_length_scores_are_finite() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let net = CpaNetwork::random(&[2, 8, 2], Activation::Relu, &mut rng).unwrap();
    let ps = pairs(30, 2, 8);
    let pl = path_length(&net, None, &ps, 1e-4, EndpointSpace::Latent, 2).unwrap();
    assert!(pl.scores.iter().all(|s| s.is_finite() && *s >= 0.0));
    assert!((pl.mean - pl.scores.iter().sum::<f64>() / 30.0).abs() < 1e-12);
}

#[test]
fn report_round_trips_through_json() {
    let real = gaussian_set(100, 2, 0.0, 1.0, 11);
    let fake = gaussian_set(100, 2, 0.3, 1.0, 12);
    let cfg = ReportConfig { rho: Some(-1.0), psi: None, space: "output".into(), seeds: vec![1, 2] };
    let report = MetricReport::compute(&real, &fake, 3, 3, cfg).unwrap();
    let back: MetricReport = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(back, report);
    assert_eq!(report.nn_summary.histogram.iter().map(|b| b.2).sum::<usize>(), 100);
}

#[test]
fn sample_set_csv_round_trip() {
    let set = gaussian_set(20, 3, 0.0, 1.0, 13);
    let mut buf = Vec::new();
    set.write_csv(&mut buf).unwrap();
    let back = SampleSet::read_csv("back", buf.as_slice()).unwrap();
    assert_eq!(back.points(), set.points());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn frechet_triangle_of_roots(s1 in 0u64..1000, s2 in 0u64..1000, s3 in 0u64..1000, shift in -2.0f64..2.0) {
        // the square root of the Gaussian Frechet distance is a metric
        let a = gaussian_set(60, 2, 0.0, 1.0, s1);
        let b = gaussian_set(60, 2, shift, 1.5, s2);
        let c = gaussian_set(60, 2, -shift, 0.7, s3);
        let d = |x: &SampleSet, y: &SampleSet| frechet_distance(x, y).unwrap().sqrt();
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-6);
    }

    #[test]
    fn frechet_orthogonal_invariance(seed in 0u64..1000) {
        let a = gaussian_set(80, 3, 0.0, 1.0, seed);
        let b = gaussian_set(80, 3, 0.4, 1.3, seed + 1);
        let q = random_semi_orthogonal(3, 3, seed).unwrap();
        let before = frechet_distance(&a, &b).unwrap();
        let after = frechet_distance(&mapped(&a, &q), &mapped(&b, &q)).unwrap();
        prop_assert!((before - after).abs() <= 1e-8 * before.max(1.0));
    }

    #[test]
    fn precision_recall_in_unit_interval(seed in 0u64..1000, k in 1usize..6, shift in -3.0f64..3.0) {
        let real = gaussian_set(40, 2, 0.0, 1.0, seed);
        let fake = gaussian_set(40, 2, shift, 1.0, seed + 7);
        let (p, r) = precision_recall(&real, &fake, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&r));
        let (p2, r2) = precision_recall(&fake, &real, k).unwrap();
        prop_assert_eq!((p, r), (r2, p2));
    }

    #[test]
    fn nn_distances_permutation_invariant(seed in 0u64..1000, j in 1usize..5) {
        let gen = gaussian_set(15, 2, 0.0, 1.0, seed);
        let train = gaussian_set(20, 2, 0.5, 1.0, seed + 1);
        let mut rev = train.points().to_vec();
        rev.reverse();
        let rev = SampleSet::new("rev", rev).unwrap();
        let a = nn_distances(&gen, &train, j).unwrap();
        let b = nn_distances(&gen, &rev, j).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        let wider = nn_distances(&gen, &train, j + 1).unwrap();
        for (x, y) in a.iter().zip(&wider) {
            prop_assert!(*y >= x - 1e-12);
        }
    }
}
