//! Label-only classifiers and query-budget accounting.
//!
//! A [`Classifier`] only ever reveals the final class label of an image.
//! Attacks never talk to a classifier directly: every query goes through a
//! [`BudgetedOracle`], which refuses to forward calls once `q_max` queries
//! have been spent.

mod centroid;
mod external;
mod linear;
mod mlp;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ImageTensor, Shape};

pub use centroid::NearestCentroidOracle;
pub use external::{ExternalOracle, OracleRequest, OracleResponse};
pub use linear::LinearOracle;
pub use mlp::{load_mlp, Activation, DenseLayer, MlpFile, MlpLayerSpec, MlpOracle};

/// A class index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(pub usize);

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A black-box model that answers with a label and nothing else.
///
/// Implementations must be deterministic: the same image always gets the
/// same label.
pub trait Classifier: Send + Sync {
    fn classify(&self, image: &ImageTensor) -> Result<Label>;

    /// Number of classes, when the model declares it.
    fn num_classes(&self) -> Option<usize> {
        None
    }
}

impl<C: Classifier + ?Sized> Classifier for &C {
    fn classify(&self, image: &ImageTensor) -> Result<Label> {
        (**self).classify(image)
    }

    fn num_classes(&self) -> Option<usize> {
        (**self).num_classes()
    }
}

impl<C: Classifier + ?Sized> Classifier for Box<C> {
    fn classify(&self, image: &ImageTensor) -> Result<Label> {
        (**self).classify(image)
    }

    fn num_classes(&self) -> Option<usize> {
        (**self).num_classes()
    }
}

/// Anything the search procedures can spend queries on.
pub trait LabelQuery {
    fn query(&mut self, image: &ImageTensor) -> Result<Label>;
}

/// Wraps a classifier with a hard query cap.
pub struct BudgetedOracle<'a> {
    inner: &'a dyn Classifier,
    q_max: usize,
    q_used: usize,
}

impl<'a> BudgetedOracle<'a> {
    pub fn new(inner: &'a dyn Classifier, q_max: usize) -> Self {
        Self {
            inner,
            q_max,
            q_used: 0,
        }
    }

    /// Classifies `image`, consuming one unit of budget.
    ///
    /// Once the budget is spent this returns [`Error::BudgetExhausted`]
    /// without touching the wrapped classifier. A query that reaches the
    /// classifier is charged even if the classifier then fails.
    pub fn classify(&mut self, image: &ImageTensor) -> Result<Label> {
        if self.q_used >= self.q_max {
            return Err(Error::BudgetExhausted(self.q_max));
        }
        self.q_used += 1;
        self.inner.classify(image)
    }

    pub fn remaining_budget(&self) -> usize {
        self.q_max - self.q_used
    }

    pub fn queries_used(&self) -> usize {
        self.q_used
    }

    pub fn max_queries(&self) -> usize {
        self.q_max
    }
}

impl LabelQuery for BudgetedOracle<'_> {
    fn query(&mut self, image: &ImageTensor) -> Result<Label> {
        self.classify(image)
    }
}

pub(crate) fn check_shape(expected: Shape, image: &ImageTensor) -> Result<()> {
    if image.shape() != expected {
        return Err(Error::ShapeMismatch(format!(
            "classifier expects {expected}, got {}",
            image.shape()
        )));
    }
    Ok(())
}

/// Lowest index of the maximum value.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
