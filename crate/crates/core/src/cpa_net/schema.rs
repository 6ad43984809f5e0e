//! Model file format.
//!
//! ```json
//! {"name": "...", "input_dim": 2,
//!  "layers": [{"weight": [[...], ...], "bias": [...], "activation": "leaky_relu", "alpha": 0.2}]}
//! ```
//!
//! Weights are row-major; floats are written with 17 significant digits so a
//! save/load cycle is bit-exact.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Activation, CpaNetwork, Layer};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    name: String,
    input_dim: usize,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
}

fn to_file(net: &CpaNetwork) -> ModelFile {
    ModelFile {
        name: net.name.clone(),
        input_dim: net.input_dim,
        layers: net
            .layers
            .iter()
            .map(|l| LayerFile {
                weight: l.weight.row_iter().map(|r| r.iter().copied().collect()).collect(),
                bias: l.bias.iter().copied().collect(),
                activation: l.activation.name().to_string(),
                alpha: match l.activation {
                    Activation::LeakyRelu(a) => Some(a),
                    _ => None,
                },
            })
            .collect(),
    }
}

fn from_file(file: ModelFile) -> Result<CpaNetwork> {
    let mut layers = Vec::with_capacity(file.layers.len());
    let mut width = file.input_dim;
    for (index, lf) in file.layers.into_iter().enumerate() {
        let activation = match (lf.activation.as_str(), lf.alpha) {
            ("identity", None) => Activation::Identity,
            ("relu", None) => Activation::Relu,
            ("leaky_relu", Some(a)) => Activation::LeakyRelu(a),
            ("leaky_relu", None) => {
                return Err(Error::Validation { layer: index, message: "leaky_relu requires alpha".into() })
            }
            ("identity" | "relu", Some(_)) => {
                return Err(Error::Validation {
                    layer: index,
                    message: format!("alpha given for {} activation", lf.activation),
                })
            }
            (other, _) => return Err(Error::UnsupportedActivation { layer: index, name: other.to_string() }),
        };
        let rows = lf.weight.len();
        if let Some((r, row)) = lf.weight.iter().enumerate().find(|(_, row)| row.len() != width) {
            return Err(Error::Validation {
                layer: index,
                message: format!("weight row {r} has length {}, expected {width}", row.len()),
            });
        }
        let weight = DMatrix::from_row_iterator(rows, width, lf.weight.into_iter().flatten());
        let layer = Layer::validated(weight, DVector::from_vec(lf.bias), activation, index)?;
        width = rows;
        layers.push(layer);
    }
    CpaNetwork::new(file.name, file.input_dim, layers)
}

pub(crate) fn to_model_json(net: &CpaNetwork) -> String {
    crate::io::to_json_string(&to_file(net))
}

/// Parses a model from its JSON text.
pub fn parse_model(text: &str, context: &str) -> Result<CpaNetwork> {
    from_file(crate::io::from_json_str(text, context)?)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<CpaNetwork> {
    let path = path.as_ref();
    from_file(crate::io::read_json(path)?)
}

pub fn save_model(net: &CpaNetwork, path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_json(&to_file(net), path.as_ref())
}
