//! Dense feed-forward network read from a JSON weight file.
//!
//! ```json
//! {
//!   "num_classes": 2,
//!   "input_shape": [12, 12, 1],
//!   "layers": [
//!     {"rows": 16, "cols": 144, "activation": "relu", "weights": [...], "bias": [...]},
//!     {"rows": 2, "cols": 16, "activation": "identity", "weights": [...], "bias": [...]}
//!   ]
//! }
//! ```
//!
//! Each layer computes `act(W x + b)` with `W` stored row-major as
//! `rows x cols`. The predicted label is the argmax of the final layer.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{argmax, check_shape, Classifier, Label};
use crate::error::{Error, Result};
use crate::tensor::{ImageTensor, Shape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// On-disk layer record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlpLayerSpec {
    pub rows: usize,
    pub cols: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// On-disk network record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlpFile {
    pub num_classes: usize,
    pub input_shape: Shape,
    pub layers: Vec<MlpLayerSpec>,
}

#[derive(Clone, Debug)]
pub struct DenseLayer {
    rows: usize,
    cols: usize,
    activation: Activation,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl DenseLayer {
    fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.cols)
            .zip(&self.bias)
            .map(|(row, b)| {
                let z = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b;
                match self.activation {
                    Activation::Relu => z.max(0.0),
                    Activation::Identity => z,
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct MlpOracle {
    input_shape: Shape,
    num_classes: usize,
    layers: Vec<DenseLayer>,
}

impl MlpOracle {
    pub fn from_file(file: MlpFile) -> Result<Self> {
        if file.layers.is_empty() {
            return Err(Error::DimensionChain("network has no layers".into()));
        }
        let mut width = file.input_shape.len();
        let mut layers = Vec::with_capacity(file.layers.len());
        for (i, spec) in file.layers.into_iter().enumerate() {
            if spec.cols != width {
                return Err(Error::DimensionChain(format!(
                    "layer {i} takes {} inputs but receives {width}",
                    spec.cols
                )));
            }
            if spec.weights.len() != spec.rows * spec.cols {
                return Err(Error::DimensionChain(format!(
                    "layer {i} has {} weights for a {}x{} matrix",
                    spec.weights.len(),
                    spec.rows,
                    spec.cols
                )));
            }
            if spec.bias.len() != spec.rows {
                return Err(Error::DimensionChain(format!(
                    "layer {i} has {} biases for {} rows",
                    spec.bias.len(),
                    spec.rows
                )));
            }
            width = spec.rows;
            layers.push(DenseLayer {
                rows: spec.rows,
                cols: spec.cols,
                activation: spec.activation,
                weights: spec.weights,
                bias: spec.bias,
            });
        }
        if width != file.num_classes {
            return Err(Error::DimensionChain(format!(
                "final layer has {width} outputs for {} classes",
                file.num_classes
            )));
        }
        Ok(Self {
            input_shape: file.input_shape,
            num_classes: file.num_classes,
            layers,
        })
    }

    /// Final-layer outputs for `image`.
    pub fn logits(&self, image: &ImageTensor) -> Result<Vec<f64>> {
        check_shape(self.input_shape, image)?;
        let mut act = image.pixels().to_vec();
        for layer in &self.layers {
            act = layer.forward(&act);
        }
        Ok(act)
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }
}

impl DenseLayer {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

impl Classifier for MlpOracle {
    fn classify(&self, image: &ImageTensor) -> Result<Label> {
        Ok(Label(argmax(&self.logits(image)?)))
    }

    fn num_classes(&self) -> Option<usize> {
        Some(self.num_classes)
    }
}

pub fn load_mlp(path: impl AsRef<Path>) -> Result<MlpOracle> {
    let text = fs::read_to_string(path)?;
    let file: MlpFile = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    MlpOracle::from_file(file)
}
