use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_shape, Classifier, Label};
use crate::error::{Error, Result};
use crate::tensor::{ImageTensor, Shape};

/// Half-space classifier: `positive` when `w . x + b >= 0`, else `negative`.
///
/// The decision boundary is known in closed form, which makes this the
/// ground truth for testing the search procedures.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearOracle {
    input_shape: Shape,
    weights: Vec<f64>,
    bias: f64,
    negative_label: Label,
    positive_label: Label,
}

impl LinearOracle {
    pub fn new(
        input_shape: Shape,
        weights: Vec<f64>,
        bias: f64,
        negative_label: Label,
        positive_label: Label,
    ) -> Result<Self> {
        let oracle = Self {
            input_shape,
            weights,
            bias,
            negative_label,
            positive_label,
        };
        oracle.validate()?;
        Ok(oracle)
    }

    fn validate(&self) -> Result<()> {
        if self.weights.len() != self.input_shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for input shape {}",
                self.weights.len(),
                self.input_shape
            )));
        }
        if self.negative_label == self.positive_label {
            return Err(Error::InvalidConfig("linear oracle needs two distinct labels".into()));
        }
        Ok(())
    }

    /// Reads the JSON form: `input_shape`, `weights`, `bias`,
    /// `negative_label`, `positive_label`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let oracle: Self = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        oracle.validate()?;
        Ok(oracle)
    }

    /// `w . x + b`.
    pub fn score(&self, image: &ImageTensor) -> f64 {
        self.weights.iter().zip(image.pixels()).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }
}

impl Classifier for LinearOracle {
    fn classify(&self, image: &ImageTensor) -> Result<Label> {
        check_shape(self.input_shape, image)?;
        Ok(if self.score(image) >= 0.0 {
            self.positive_label
        } else {
            self.negative_label
        })
    }

    fn num_classes(&self) -> Option<usize> {
        Some(self.negative_label.0.max(self.positive_label.0) + 1)
    }
}
