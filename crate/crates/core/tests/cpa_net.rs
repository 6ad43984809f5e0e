use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use polarity_sampling::cpa_net::{load_model, parse_model, save_model, Activation, CpaNetwork, Layer};
use polarity_sampling::{toy, Error};

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn random_net(seed: u64, widths: &[usize], act: Activation) -> CpaNetwork {
    CpaNetwork::random(widths, act, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap()
}

fn margin_ok(net: &CpaNetwork, z: &DVector<f64>, margin: f64) -> bool {
    let mut h = z.clone();
    for layer in net.layers() {
        let pre = layer.weight() * &h + layer.bias();
        if layer.activation().is_nonlinear() && pre.iter().any(|p| p.abs() < margin) {
            return false;
        }
        h = net_layer_forward(layer, &pre);
    }
    true
}

fn net_layer_forward(layer: &Layer, pre: &DVector<f64>) -> DVector<f64> {
    match layer.activation() {
        Activation::Identity => pre.clone(),
        Activation::Relu => pre.map(|p| if p > 0.0 { p } else { 0.0 }),
        Activation::LeakyRelu(a) => pre.map(|p| if p > 0.0 { p } else { a * p }),
    }
}

#[test]
fn identity_layer_forward() {
    let net = CpaNetwork::identity(2);
    assert_eq!(net.forward(&v(&[0.3, -0.2])).unwrap(), v(&[0.3, -0.2]));
    let map = net.affine_map(&v(&[0.3, -0.2])).unwrap();
    assert_eq!(map.slope, DMatrix::identity(2, 2));
    assert_eq!(map.offset, DVector::zeros(2));
    assert!(net.region_code(&v(&[1.0, 1.0])).unwrap().is_empty());
}

#[test]
fn two_piece_values() {
    let net = toy::two_piece();
    assert_eq!(net.forward(&v(&[-1.0])).unwrap()[0], -2.0);
    assert_eq!(net.forward(&v(&[1.0])).unwrap()[0], 0.5);
    let map = net.affine_map(&v(&[1.0])).unwrap();
    assert_eq!(map.slope[(0, 0)], 0.5);
    assert_eq!(map.offset[0], 0.0);
}

#[test]
fn single_unit_code() {
    let layer = Layer::new(DMatrix::from_element(1, 1, 1.0), v(&[0.5]), Activation::Relu).unwrap();
    let net = CpaNetwork::new("one", 1, vec![layer]).unwrap();
    assert_eq!(net.region_code(&v(&[0.0])).unwrap().to_string(), "1");
    // pre-activation exactly zero takes the off branch
    assert_eq!(net.region_code(&v(&[-0.5])).unwrap().to_string(), "0");
}

#[test]
fn input_errors() {
    let net = toy::two_piece();
    assert!(matches!(net.forward(&v(&[0.0, 1.0])), Err(Error::Input(_))));
    assert!(matches!(net.forward(&v(&[f64::NAN])), Err(Error::Input(_))));
    assert!(matches!(net.region_code(&v(&[])), Err(Error::Input(_))));
    assert!(matches!(net.affine_map(&v(&[1.0, 2.0])), Err(Error::Input(_))));
}

#[test]
fn nearby_points_share_region_and_map() {
    let net = random_net(3, &[2, 16, 16, 3], Activation::Relu);
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let mut checked = 0;
    while checked < 200 {
        let z = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
        let w = &z + DVector::from_fn(2, |_, _| rng.random_range(-1e-7..1e-7));
        if net.region_code(&z).unwrap() != net.region_code(&w).unwrap() {
            continue;
        }
        let map = net.affine_map(&z).unwrap();
        for p in [&z, &w] {
            let direct = net.forward(p).unwrap();
            assert!((map.apply(p) - &direct).norm() <= 1e-12 * (1.0 + direct.norm()));
        }
        checked += 1;
    }
}

#[test]
fn compose_with_identity_and_linear() {
    let net = random_net(5, &[3, 8, 4], Activation::LeakyRelu(0.1));
    let composed = net.compose(&CpaNetwork::identity(4)).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    for _ in 0..100 {
        let z = DVector::from_fn(3, |_, _| rng.random_range(-3.0..3.0));
        assert_eq!(composed.forward(&z).unwrap(), net.forward(&z).unwrap());
    }

    let w1 = DMatrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64 - 1.5);
    let w2 = DMatrix::from_fn(2, 3, |i, j| (i * j) as f64 + 0.5);
    let l1 = CpaNetwork::new("l1", 2, vec![Layer::linear(w1.clone(), DVector::zeros(3)).unwrap()]).unwrap();
    let l2 = CpaNetwork::new("l2", 3, vec![Layer::linear(w2.clone(), DVector::zeros(2)).unwrap()]).unwrap();
    let slope = l1.compose(&l2).unwrap().affine_map(&v(&[0.7, -1.1])).unwrap().slope;
    assert!((slope - &w2 * &w1).norm() < 1e-12);
}

#[test]
fn compose_scalar_pieces() {
    let piece = |c: f64| {
        CpaNetwork::new("p", 1, vec![Layer::new(DMatrix::from_element(1, 1, c), v(&[0.0]), Activation::Relu).unwrap()])
            .unwrap()
    };
    let composed = piece(2.0).compose(&piece(3.0)).unwrap();
    assert_eq!(composed.affine_map(&v(&[1.0])).unwrap().slope[(0, 0)], 6.0);
}

#[test]
fn composition_dimension_error() {
    let a = CpaNetwork::identity(2);
    let b = CpaNetwork::identity(3);
    assert!(matches!(a.compose(&b), Err(Error::Composition { .. })));
}

#[test]
fn save_load_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    let net = random_net(7, &[4, 32, 32, 6], Activation::LeakyRelu(0.2));
    save_model(&net, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back.fingerprint(), net.fingerprint());
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    for _ in 0..100 {
        let z = DVector::from_fn(4, |_, _| rng.random_range(-5.0..5.0));
        let (a, b) = (net.forward(&z).unwrap(), back.forward(&z).unwrap());
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn schema_errors() {
    let row_mismatch = r#"{"name":"n","input_dim":2,"layers":[
        {"weight":[[1.0,0.0],[1.0]],"bias":[0.0,0.0],"activation":"relu"}]}"#;
    match parse_model(row_mismatch, "test") {
        Err(Error::Validation { layer, .. }) => assert_eq!(layer, 0),
        other => panic!("expected validation error, got {other:?}"),
    }
    let tanh = r#"{"name":"n","input_dim":1,"layers":[{"weight":[[1.0]],"bias":[0.0],"activation":"tanh"}]}"#;
    assert!(matches!(parse_model(tanh, "test"), Err(Error::UnsupportedActivation { .. })));
    let chain = r#"{"name":"n","input_dim":1,"layers":[
        {"weight":[[1.0]],"bias":[0.0],"activation":"relu"},
        {"weight":[[1.0,2.0]],"bias":[0.0],"activation":"identity"}]}"#;
    assert!(matches!(parse_model(chain, "test"), Err(Error::Validation { layer: 1, .. })));
    let bad_alpha = r#"{"name":"n","input_dim":1,"layers":[{"weight":[[1.0]],"bias":[0.0],"activation":"leaky_relu","alpha":1.5}]}"#;
    assert!(parse_model(bad_alpha, "test").is_err());
    assert!(matches!(parse_model("{\"name\": 3", "test"), Err(Error::Parse { .. })));
}

#[test]
fn code_count_bounded_by_units() {
    let net = random_net(9, &[2, 3, 2, 2], Activation::Relu);
    let m = net.nonlinear_units();
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let codes: std::collections::HashSet<_> = (0..20_000)
        .map(|_| net.region_code(&DVector::from_fn(2, |_, _| rng.random_range(-10.0..10.0))).unwrap())
        .collect();
    assert!(codes.len() <= 1 << m);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cpa_exactness(seed in 0u64..10_000, depth in 1usize..4, leaky in any::<bool>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut widths = vec![rng.random_range(1..5)];
        widths.extend((0..depth).map(|_| rng.random_range(1..20)));
        let act = if leaky { Activation::LeakyRelu(0.3) } else { Activation::Relu };
        let net = CpaNetwork::random(&widths, act, &mut rng).unwrap();
        for _ in 0..20 {
            let z = DVector::from_fn(widths[0], |_, _| rng.random_range(-3.0..3.0));
            let map = net.affine_map(&z).unwrap();
            let direct = net.forward(&z).unwrap();
            let err = (map.apply(&z) - &direct).norm();
            prop_assert!(err <= 1e-12 * (1.0 + direct.norm()), "err {err}");
        }
    }

    #[test]
    fn jacobian_matches_finite_differences(seed in 0u64..10_000) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let k = rng.random_range(1..4);
        let net = CpaNetwork::random(&[k, 12, 12, 3], Activation::LeakyRelu(0.1), &mut rng).unwrap();
        let mut tested = 0;
        while tested < 20 {
            let z = DVector::from_fn(k, |_, _| rng.random_range(-2.0..2.0));
            if !margin_ok(&net, &z, 1e-4) {
                continue;
            }
            let slope = net.affine_map(&z).unwrap().slope;
            let mut fd = DMatrix::zeros(3, k);
            for i in 0..k {
                let h = 1e-6 * (1.0 + z[i].abs());
                let (mut zp, mut zm) = (z.clone(), z.clone());
                zp[i] += h;
                zm[i] -= h;
                fd.set_column(i, &((net.forward(&zp).unwrap() - net.forward(&zm).unwrap()) / (2.0 * h)));
            }
            prop_assert!((&fd - &slope).norm() <= 1e-6 * slope.norm().max(1e-12));
            tested += 1;
        }
    }

    #[test]
    fn chain_rule(seed in 0u64..10_000) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let f = CpaNetwork::random(&[2, 6, 3], Activation::Relu, &mut rng).unwrap();
        let g = CpaNetwork::random(&[3, 5, 2], Activation::LeakyRelu(0.5), &mut rng).unwrap();
        let fg = f.compose(&g).unwrap();
        for _ in 0..20 {
            let z = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let x = f.forward(&z).unwrap();
            if !margin_ok(&f, &z, 1e-9) || !margin_ok(&g, &x, 1e-9) {
                continue;
            }
            let expected = g.affine_map(&x).unwrap().slope * f.affine_map(&z).unwrap().slope;
            let got = fg.affine_map(&z).unwrap().slope;
            prop_assert!((got - &expected).norm() <= 1e-12 * (1.0 + expected.norm()));
        }
    }

    #[test]
    fn split_then_compose_is_identity(seed in 0u64..10_000, at in 1usize..3) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let net = CpaNetwork::random(&[2, 4, 4, 2], Activation::Relu, &mut rng).unwrap();
        let (head, tail) = net.split_at(at).unwrap();
        let z = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
        prop_assert_eq!(head.compose(&tail).unwrap().forward(&z).unwrap(), net.forward(&z).unwrap());
    }
}
