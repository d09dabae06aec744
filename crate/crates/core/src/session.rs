//! Budget, best-so-far tracking and per-query trace shared by the attacks.

use serde::{Deserialize, Serialize};

use crate::boundary::AdversarialPredicate;
use crate::error::{Error, Result};
use crate::metrics::ImperceptibilityMetrics;
use crate::oracle::{BudgetedOracle, Classifier, Label, LabelQuery};
use crate::tensor::{l2_sq_dist, ImageTensor};

/// Best squared distance known after a given number of queries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub query_index: usize,
    pub best_l2_sq: f64,
}

/// Outcome of an attack run.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackResult {
    pub best_adversarial: ImageTensor,
    /// Label of `best_adversarial`, when it was ever classified.
    pub best_label: Option<Label>,
    pub queries_used: usize,
    /// One point per query from the first query after which an adversarial
    /// image is known; `best_l2_sq` never increases.
    pub trace: Vec<TracePoint>,
    pub metrics: ImperceptibilityMetrics,
    pub succeeded: bool,
}

impl AttackResult {
    pub fn best_l2_sq(&self) -> f64 {
        self.metrics.perturbation_norm
    }
}

#[derive(Clone, Debug)]
struct Best {
    image: ImageTensor,
    label: Label,
    l2_sq: f64,
}

/// Routes every query through a budget and remembers the closest
/// adversarial image seen, including points probed inside sub-procedures.
pub struct QuerySession<'a> {
    oracle: BudgetedOracle<'a>,
    source: ImageTensor,
    pred: Option<AdversarialPredicate>,
    best: Option<Best>,
    trace: Vec<TracePoint>,
}

impl<'a> QuerySession<'a> {
    pub fn new(classifier: &'a dyn Classifier, source: ImageTensor, q_max: usize) -> Self {
        Self {
            oracle: BudgetedOracle::new(classifier, q_max),
            source,
            pred: None,
            best: None,
            trace: Vec::new(),
        }
    }

    /// Installs the predicate; adversarial points are only tracked afterwards.
    pub fn set_predicate(&mut self, pred: AdversarialPredicate) {
        self.pred = Some(pred);
    }

    pub fn predicate(&self) -> Option<&AdversarialPredicate> {
        self.pred.as_ref()
    }

    pub fn source(&self) -> &ImageTensor {
        &self.source
    }

    pub fn queries_used(&self) -> usize {
        self.oracle.queries_used()
    }

    pub fn remaining_budget(&self) -> usize {
        self.oracle.remaining_budget()
    }

    pub fn best_l2_sq(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.l2_sq)
    }

    pub fn best_image(&self) -> Option<&ImageTensor> {
        self.best.as_ref().map(|b| &b.image)
    }

    /// Offers an already-classified image as a best-so-far candidate.
    pub fn observe(&mut self, image: &ImageTensor, label: Label) -> Result<()> {
        let Some(pred) = self.pred else {
            return Ok(());
        };
        if !pred.is_adversarial(label) {
            return Ok(());
        }
        let d = l2_sq_dist(image, &self.source)?;
        if self.best.as_ref().is_none_or(|b| d < b.l2_sq) {
            self.best = Some(Best {
                image: image.clone(),
                label,
                l2_sq: d,
            });
        }
        self.record_trace();
        Ok(())
    }

    /// Adds at most one trace point per query, once a best exists.
    fn record_trace(&mut self) {
        let Some(b) = &self.best else { return };
        let index = self.oracle.queries_used();
        if self.trace.last().is_none_or(|p| p.query_index < index) {
            self.trace.push(TracePoint {
                query_index: index,
                best_l2_sq: b.l2_sq,
            });
        }
    }

    /// Consumes the session. Without any known adversarial point the result
    /// falls back to `fallback` (typically the unconfirmed reference).
    pub fn finish(self, succeeded: bool, fallback: &ImageTensor) -> Result<AttackResult> {
        let (image, label) = match self.best {
            Some(b) => (b.image, Some(b.label)),
            None => (fallback.clone(), None),
        };
        let metrics = ImperceptibilityMetrics::evaluate(&image, &self.source)?;
        Ok(AttackResult {
            best_adversarial: image,
            best_label: label,
            queries_used: self.oracle.queries_used(),
            trace: self.trace,
            metrics,
            succeeded: succeeded && label.is_some(),
        })
    }
}

impl LabelQuery for QuerySession<'_> {
    fn query(&mut self, image: &ImageTensor) -> Result<Label> {
        let label = self.oracle.classify(image)?;
        self.observe(image, label)?;
        self.record_trace();
        Ok(label)
    }
}

pub(crate) fn is_budget_exhausted<T>(r: &Result<T>) -> bool {
    matches!(r, Err(Error::BudgetExhausted(_)))
}
