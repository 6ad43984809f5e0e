//! Small hand-built generators with known region geometry.
//!
//! Their slopes, region masses and output densities can be derived by hand,
//! which makes them the reference cases for the samplers, the analytic
//! density and the experiment runs.

use nalgebra::{DMatrix, DVector};

use crate::cpa_net::{Activation, CpaNetwork, Layer};

fn layer(rows: usize, cols: usize, w: &[f64], b: &[f64], act: Activation) -> Layer {
    Layer::new(DMatrix::from_row_slice(rows, cols, w), DVector::from_column_slice(b), act)
        .expect("toy layer dimensions are consistent")
}

/// `z < 0 -> 2z`, `z >= 0 -> z/2` on the real line.
///
/// Over `[-1, 1]` the image is `[-2, 0.5]`; the contracting half (slope 0.5)
/// is the mode region, the expanding half (slope 2) the anti-mode.
pub fn two_piece() -> CpaNetwork {
    CpaNetwork::new(
        "two_piece",
        1,
        vec![
            layer(1, 1, &[-1.0], &[0.0], Activation::LeakyRelu(0.25)),
            layer(1, 1, &[-2.0], &[0.0], Activation::Identity),
        ],
    )
    .expect("valid")
}

/// `(z1, z2) -> (two_piece(z1), scale * z2)` for latents in `[-1, 1]^2`.
///
/// The second hidden unit is kept on by a +2 bias, so over the unit box the
/// network has exactly two regions split by `z1 = 0`, with slopes
/// `diag(2, scale)` and `diag(0.5, scale)`.
pub fn two_region_plane(scale: f64) -> CpaNetwork {
    CpaNetwork::new(
        "two_region_plane",
        2,
        vec![
            layer(2, 2, &[-1.0, 0.0, 0.0, 1.0], &[0.0, 2.0], Activation::LeakyRelu(0.25)),
            layer(2, 2, &[-2.0, 0.0, 0.0, scale], &[0.0, -2.0 * scale], Activation::Identity),
        ],
    )
    .expect("valid")
}

/// 1-D generator with two flat plateaus joined by a steep bridge, on `[-1, 1]`:
///
/// | latent        | slope | image          | prior mass |
/// |---------------|-------|----------------|------------|
/// | `[-1, 0.5]`   | 0.4   | `[-3.3, -2.7]` | 0.75       |
/// | `[0.5, 0.6]`  | 54    | `[-2.7, 2.7]`  | 0.05       |
/// | `[0.6, 1]`    | 0.1   | `[2.7, 2.74]`  | 0.2        |
///
/// At `rho = 0` three quarters of the output sits in the left cluster; the
/// clusters balance near `rho = ln(0.2/0.75) / ln 4 ≈ -0.95`.
pub fn biased_clusters() -> CpaNetwork {
    CpaNetwork::new(
        "biased_clusters",
        1,
        vec![
            layer(3, 1, &[1.0, 1.0, 1.0], &[1.0, -0.5, -0.6], Activation::Relu),
            layer(1, 3, &[0.4, 53.6, -53.9], &[-3.3], Activation::Identity),
        ],
    )
    .expect("valid")
}

/// Folded generator on `[-1, 1]`: the contracting half (`z >= 0`, slope
/// 0.02) lands on `[-0.02, 0]`, the expanding half (`z < 0`, slope 3)
/// spreads over `[-3, 0]` and so also covers the contracting half's image.
pub fn bimodal() -> CpaNetwork {
    CpaNetwork::new(
        "bimodal",
        1,
        vec![
            layer(2, 1, &[-1.0, 1.0], &[0.0, 0.0], Activation::Relu),
            layer(1, 2, &[-3.0, -0.02], &[0.0], Activation::Identity),
        ],
    )
    .expect("valid")
}
