//! Continuous piecewise-affine (CPA) networks.
//!
//! A [`CpaNetwork`] is a stack of dense layers whose activations are all
//! piecewise affine (identity, ReLU, leaky-ReLU). Such a network partitions
//! its input space into regions on which it is exactly affine, and every
//! region is identified by the on/off pattern of its nonlinear units
//! ([`ActivationCode`]). Within a region the network equals `A z + b`
//! ([`AffineMap`]); the slope `A` is the Jacobian at any interior point.

mod schema;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub use schema::{load_model, parse_model, save_model};

/// Piecewise-affine activation applied elementwise after a layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    /// Leaky ReLU with negative-side slope `alpha` in (0, 1).
    LeakyRelu(f64),
}

impl Activation {
    pub fn is_nonlinear(&self) -> bool {
        !matches!(self, Activation::Identity)
    }

    /// Slope of the active branch. A unit is "on" iff its pre-activation is
    /// strictly positive; zero falls on the "off" branch.
    fn slope(&self, on: bool) -> f64 {
        match (self, on) {
            (Activation::Identity, _) | (_, true) => 1.0,
            (Activation::Relu, false) => 0.0,
            (Activation::LeakyRelu(alpha), false) => *alpha,
        }
    }

    fn apply(&self, pre: f64) -> f64 {
        pre * self.slope(pre > 0.0)
    }

    pub(crate) fn name(&self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::LeakyRelu(_) => "leaky_relu",
        }
    }
}

/// One dense layer `act(W x + c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    weight: DMatrix<f64>,
    bias: DVector<f64>,
    activation: Activation,
}

impl Layer {
    pub fn new(weight: DMatrix<f64>, bias: DVector<f64>, activation: Activation) -> Result<Self> {
        Self::validated(weight, bias, activation, 0)
    }

    pub(crate) fn validated(
        weight: DMatrix<f64>,
        bias: DVector<f64>,
        activation: Activation,
        index: usize,
    ) -> Result<Self> {
        let invalid = |message: String| Error::Validation { layer: index, message };
        if weight.nrows() == 0 || weight.ncols() == 0 {
            return Err(invalid("weight matrix must be non-empty".into()));
        }
        if bias.len() != weight.nrows() {
            return Err(invalid(format!(
                "bias length {} does not match weight rows {}",
                bias.len(),
                weight.nrows()
            )));
        }
        if weight.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("non-finite parameter".into()));
        }
        if let Activation::LeakyRelu(alpha) = activation {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(invalid(format!("leaky_relu alpha {alpha} outside (0, 1)")));
            }
        }
        Ok(Layer { weight, bias, activation })
    }

    /// Identity-activated linear layer.
    pub fn linear(weight: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        Self::new(weight, bias, Activation::Identity)
    }

    pub fn weight(&self) -> &DMatrix<f64> {
        &self.weight
    }

    pub fn bias(&self) -> &DVector<f64> {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    fn nonlinear_units(&self) -> usize {
        if self.activation.is_nonlinear() {
            self.out_dim()
        } else {
            0
        }
    }
}

/// On/off pattern of every nonlinear unit, layer-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActivationCode {
    bits: Vec<bool>,
}

impl ActivationCode {
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Stable 64-bit digest used to key regions in pools and atlases.
    pub fn hash64(&self) -> u64 {
        let bytes: Vec<u8> = self.bits.iter().map(|&b| u8::from(b)).collect();
        crate::io::sha256_u64(&bytes)
    }
}

impl fmt::Display for ActivationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &bit in &self.bits {
            f.write_str(if bit { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Per-region affine parameters: `G(z) = slope * z + offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub slope: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.slope * z + &self.offset
    }
}

/// Layered piecewise-affine map `R^K -> R^D`.
///
/// Immutable after construction; all evaluation methods take `&self` and may
/// be called concurrently.
#[derive(Clone, Debug, PartialEq)]
pub struct CpaNetwork {
    name: String,
    input_dim: usize,
    layers: Vec<Layer>,
}

impl CpaNetwork {
    pub fn new(name: impl Into<String>, input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::input("input_dim must be positive"));
        }
        if layers.is_empty() {
            return Err(Error::input("network needs at least one layer"));
        }
        let mut width = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            if layer.in_dim() != width {
                return Err(Error::Validation {
                    layer: i,
                    message: format!("expects input dim {}, previous width is {width}", layer.in_dim()),
                });
            }
            width = layer.out_dim();
        }
        Ok(CpaNetwork { name: name.into(), input_dim, layers })
    }

    /// Single identity layer on `R^dim`.
    pub fn identity(dim: usize) -> Self {
        let layer = Layer::linear(DMatrix::identity(dim, dim), DVector::zeros(dim))
            .expect("identity layer is valid");
        CpaNetwork::new("identity", dim, vec![layer]).expect("identity network is valid")
    }

    /// Random dense network with Gaussian weights scaled by `1/sqrt(fan_in)`.
    ///
    /// `widths` lists every layer width including input and output; hidden
    /// layers use `hidden`, the last layer is linear.
    pub fn random<R: Rng + ?Sized>(widths: &[usize], hidden: Activation, rng: &mut R) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::input("need at least input and output widths"));
        }
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (i, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let scale = 1.0 / (fan_in as f64).sqrt();
            let weight = DMatrix::from_fn(fan_out, fan_in, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
            let bias = DVector::from_fn(fan_out, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal));
            let act = if i + 2 == widths.len() { Activation::Identity } else { hidden };
            layers.push(Layer::validated(weight, bias, act, i)?);
        }
        CpaNetwork::new("random", widths[0], layers)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, Layer::out_dim)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Total number of units behind a nonlinear activation (= code length).
    pub fn nonlinear_units(&self) -> usize {
        self.layers.iter().map(Layer::nonlinear_units).sum()
    }

    fn check_input(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.input_dim {
            return Err(Error::input(format!(
                "latent has dim {}, network expects {}",
                z.len(),
                self.input_dim
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("latent has non-finite entries"));
        }
        Ok(())
    }

    pub fn forward(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(z)?;
        Ok(self.forward_unchecked(z))
    }

    pub(crate) fn forward_unchecked(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut h = z.clone();
        for layer in &self.layers {
            let mut pre = &layer.weight * &h + &layer.bias;
            let act = layer.activation;
            pre.apply(|v| *v = act.apply(*v));
            h = pre;
        }
        h
    }

    pub fn region_code(&self, z: &DVector<f64>) -> Result<ActivationCode> {
        self.check_input(z)?;
        Ok(self.region_code_unchecked(z))
    }

    pub(crate) fn region_code_unchecked(&self, z: &DVector<f64>) -> ActivationCode {
        let mut bits = Vec::with_capacity(self.nonlinear_units());
        let mut h = z.clone();
        for layer in &self.layers {
            let mut pre = &layer.weight * &h + &layer.bias;
            let act = layer.activation;
            if act.is_nonlinear() {
                bits.extend(pre.iter().map(|&v| v > 0.0));
            }
            pre.apply(|v| *v = act.apply(*v));
            h = pre;
        }
        ActivationCode { bits }
    }

    /// Slope and offset of the region containing `z`.
    ///
    /// The slope is the product of the layer weights interleaved with the
    /// diagonal activation-derivative masks fixed by `region_code(z)`.
    pub fn affine_map(&self, z: &DVector<f64>) -> Result<AffineMap> {
        self.check_input(z)?;
        Ok(self.affine_map_unchecked(z))
    }

    pub(crate) fn affine_map_unchecked(&self, z: &DVector<f64>) -> AffineMap {
        let mut h = z.clone();
        let mut slope = DMatrix::<f64>::identity(self.input_dim, self.input_dim);
        let mut offset = DVector::<f64>::zeros(self.input_dim);
        for layer in &self.layers {
            let pre = &layer.weight * &h + &layer.bias;
            let act = layer.activation;
            let mask = pre.map(|v| act.slope(v > 0.0));
            slope = &layer.weight * slope;
            offset = &layer.weight * offset + &layer.bias;
            for (r, &m) in mask.iter().enumerate() {
                if m != 1.0 {
                    slope.row_mut(r).scale_mut(m);
                    offset[r] *= m;
                }
            }
            h = pre.component_mul(&mask);
        }
        AffineMap { slope, offset }
    }

    /// Network computing `outer(inner(z))`; `self` is the inner map.
    pub fn compose(&self, outer: &CpaNetwork) -> Result<CpaNetwork> {
        if self.output_dim() != outer.input_dim {
            return Err(Error::Composition {
                inner_out: self.output_dim(),
                outer_in: outer.input_dim,
            });
        }
        let layers = self.layers.iter().chain(&outer.layers).cloned().collect();
        CpaNetwork::new(format!("{}>{}", self.name, outer.name), self.input_dim, layers)
    }

    /// Splits after the first `at` layers into `(head, tail)` with
    /// `tail(head(z)) == self(z)`.
    pub fn split_at(&self, at: usize) -> Result<(CpaNetwork, CpaNetwork)> {
        if at == 0 || at >= self.layers.len() {
            return Err(Error::input(format!(
                "split point {at} must lie in 1..{}",
                self.layers.len()
            )));
        }
        let head = CpaNetwork::new(format!("{}[..{at}]", self.name), self.input_dim, self.layers[..at].to_vec())?;
        let tail = CpaNetwork::new(
            format!("{}[{at}..]", self.name),
            head.output_dim(),
            self.layers[at..].to_vec(),
        )?;
        Ok((head, tail))
    }

    /// SHA-256 of the canonical model serialization.
    pub fn fingerprint(&self) -> String {
        crate::io::sha256_hex(schema::to_model_json(self).as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// `z < 0 -> 2z`, `z >= 0 -> z/2`.
    fn two_piece() -> CpaNetwork {
        let l1 = Layer::new(DMatrix::from_element(1, 1, -1.0), DVector::zeros(1), Activation::LeakyRelu(0.25)).unwrap();
        let l2 = Layer::linear(DMatrix::from_element(1, 1, -2.0), DVector::zeros(1)).unwrap();
        CpaNetwork::new("two_piece", 1, vec![l1, l2]).unwrap()
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn identity_forward_and_map() {
        let net = CpaNetwork::identity(2);
        assert_eq!(net.forward(&v(&[0.3, -0.2])).unwrap(), v(&[0.3, -0.2]));
        assert!(net.region_code(&v(&[0.3, -0.2])).unwrap().is_empty());
        let map = net.affine_map(&v(&[0.7, 0.1])).unwrap();
        assert_eq!(map.slope, DMatrix::identity(2, 2));
        assert_eq!(map.offset, DVector::zeros(2));
    }

    #[test]
    fn two_piece_values() {
        let net = two_piece();
        assert_eq!(net.forward(&v(&[-1.0])).unwrap()[0], -2.0);
        assert_eq!(net.forward(&v(&[1.0])).unwrap()[0], 0.5);
        let map = net.affine_map(&v(&[1.0])).unwrap();
        assert_eq!(map.slope[(0, 0)], 0.5);
        assert_eq!(map.offset[0], 0.0);
        let map = net.affine_map(&v(&[-0.4])).unwrap();
        assert_eq!(map.slope[(0, 0)], 2.0);
    }

    #[test]
    fn boundary_goes_to_off_branch() {
        let net = two_piece();
        let code = net.region_code(&v(&[0.0])).unwrap();
        assert_eq!(code.to_string(), "0");
        assert_eq!(net.affine_map(&v(&[0.0])).unwrap().slope[(0, 0)], 0.5);
    }

    #[test]
    fn single_relu_unit_code() {
        let l = Layer::new(DMatrix::from_element(1, 1, 1.0), v(&[0.5]), Activation::Relu).unwrap();
        let net = CpaNetwork::new("relu", 1, vec![l]).unwrap();
        assert_eq!(net.region_code(&v(&[0.0])).unwrap().to_string(), "1");
    }

    #[test]
    fn input_errors() {
        let net = two_piece();
        assert!(matches!(net.forward(&v(&[1.0, 2.0])), Err(Error::Input(_))));
        assert!(matches!(net.forward(&v(&[f64::NAN])), Err(Error::Input(_))));
        assert!(matches!(net.region_code(&v(&[])), Err(Error::Input(_))));
        assert!(matches!(net.affine_map(&v(&[f64::INFINITY])), Err(Error::Input(_))));
    }

    #[test]
    fn layer_validation() {
        assert!(matches!(
            Layer::new(DMatrix::zeros(2, 2), DVector::zeros(3), Activation::Relu),
            Err(Error::Validation { .. })
        ));
        assert!(Layer::new(DMatrix::zeros(1, 1), DVector::zeros(1), Activation::LeakyRelu(1.0)).is_err());
        assert!(Layer::new(DMatrix::zeros(1, 1), DVector::zeros(1), Activation::LeakyRelu(0.0)).is_err());
        let a = Layer::linear(DMatrix::zeros(3, 2), DVector::zeros(3)).unwrap();
        let b = Layer::linear(DMatrix::zeros(1, 2), DVector::zeros(1)).unwrap();
        match CpaNetwork::new("bad", 2, vec![a, b]) {
            Err(Error::Validation { layer, .. }) => assert_eq!(layer, 1),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn compose_slopes_multiply() {
        // 2z then 3z on the positive orthant
        let two = CpaNetwork::new(
            "two",
            1,
            vec![Layer::new(DMatrix::from_element(1, 1, 2.0), DVector::zeros(1), Activation::Relu).unwrap()],
        )
        .unwrap();
        let three = CpaNetwork::new(
            "three",
            1,
            vec![Layer::new(DMatrix::from_element(1, 1, 3.0), DVector::zeros(1), Activation::Relu).unwrap()],
        )
        .unwrap();
        let both = two.compose(&three).unwrap();
        assert_eq!(both.affine_map(&v(&[1.0])).unwrap().slope[(0, 0)], 6.0);
        assert_eq!(both.forward(&v(&[1.0])).unwrap()[0], 6.0);
    }

    #[test]
    fn compose_linear_chain_rule() {
        let w1 = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 0.0, 3.0]);
        let w2 = DMatrix::from_row_slice(2, 3, &[0.5, -1.0, 2.0, 1.0, 1.0, 1.0]);
        let f = CpaNetwork::new("f", 2, vec![Layer::linear(w1.clone(), DVector::zeros(3)).unwrap()]).unwrap();
        let g = CpaNetwork::new("g", 3, vec![Layer::linear(w2.clone(), DVector::zeros(2)).unwrap()]).unwrap();
        let slope = f.compose(&g).unwrap().affine_map(&v(&[0.2, -0.9])).unwrap().slope;
        assert!((slope - &w2 * &w1).abs().max() < 1e-15);
    }

    #[test]
    fn compose_dimension_mismatch() {
        let f = CpaNetwork::identity(2);
        let g = CpaNetwork::identity(3);
        assert!(matches!(f.compose(&g), Err(Error::Composition { inner_out: 2, outer_in: 3 })));
    }

    #[test]
    fn compose_with_identity_is_transparent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = CpaNetwork::random(&[3, 8, 8, 4], Activation::Relu, &mut rng).unwrap();
        let both = net.compose(&CpaNetwork::identity(4)).unwrap();
        for _ in 0..100 {
            let z = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            assert_eq!(net.forward(&z).unwrap(), both.forward(&z).unwrap());
        }
    }

    #[test]
    fn split_recombines() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = CpaNetwork::random(&[2, 6, 5, 3], Activation::LeakyRelu(0.2), &mut rng).unwrap();
        let (head, tail) = net.split_at(1).unwrap();
        let z = v(&[0.4, -1.3]);
        let joined = tail.forward(&head.forward(&z).unwrap()).unwrap();
        assert!((joined - net.forward(&z).unwrap()).norm() < 1e-14);
        assert!(net.split_at(0).is_err());
        assert!(net.split_at(3).is_err());
    }

    #[test]
    fn code_count_bounded_by_units() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = CpaNetwork::random(&[2, 3, 1], Activation::Relu, &mut rng).unwrap();
        let mut codes = std::collections::HashSet::new();
        for _ in 0..5000 {
            let z = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
            codes.insert(net.region_code(&z).unwrap());
        }
        assert!(codes.len() <= 1 << net.nonlinear_units());
    }
}
