//! Half-interval search for a point on the decision boundary.
//!
//! Given a non-adversarial image and an adversarial one, the segment between
//! them crosses the decision boundary at least once. Bisection keeps a
//! bracket `(non-adversarial, adversarial)` and halves it until the per-pixel
//! gap between the endpoints is at most `delta_min`, then returns the
//! adversarial endpoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{Label, LabelQuery};
use crate::tensor::{linf_dist, midpoint, ImageTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMode {
    Untargeted,
    Targeted,
}

/// Decides whether a label counts as a successful attack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AdversarialPredicate {
    source_label: Label,
    target_label: Option<Label>,
}

impl AdversarialPredicate {
    /// Any label other than `source_label` is adversarial.
    pub fn untargeted(source_label: Label) -> Self {
        Self {
            source_label,
            target_label: None,
        }
    }

    /// Only `target` is adversarial; it must differ from `source_label`.
    pub fn targeted(source_label: Label, target: Label) -> Result<Self> {
        if target == source_label {
            return Err(Error::InvalidReference(format!(
                "target class {target} is already the source class"
            )));
        }
        Ok(Self {
            source_label,
            target_label: Some(target),
        })
    }

    pub fn is_adversarial(&self, label: Label) -> bool {
        match self.target_label {
            Some(t) => label == t,
            None => label != self.source_label,
        }
    }

    pub fn mode(&self) -> AttackMode {
        if self.target_label.is_some() {
            AttackMode::Targeted
        } else {
            AttackMode::Untargeted
        }
    }

    pub fn source_label(&self) -> Label {
        self.source_label
    }

    pub fn target_label(&self) -> Option<Label> {
        self.target_label
    }
}

/// An adversarial image within `delta_min` (per pixel) of a non-adversarial one.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundarySample {
    pub image: ImageTensor,
    pub label: Label,
    /// Final L-inf distance between the two bracket endpoints.
    pub bracket_gap: f64,
    pub queries_spent: usize,
}

/// Bisects the segment `source -> reference` down to a bracket of width
/// `delta_min`.
///
/// `source` must be non-adversarial and `reference` adversarial with label
/// `reference_label`; both labels are assumed known and are not re-queried.
/// One query is spent per midpoint. On [`Error::BudgetExhausted`] the partial
/// bracket is dropped; callers that need the best point seen so far should
/// record it from their [`LabelQuery`] implementation.
pub fn estimate_boundary<Q: LabelQuery + ?Sized>(
    source: &ImageTensor,
    reference: &ImageTensor,
    reference_label: Label,
    pred: &AdversarialPredicate,
    delta_min: f64,
    oracle: &mut Q,
) -> Result<BoundarySample> {
    if !(delta_min > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "delta_min must be positive, got {delta_min}"
        )));
    }
    if !pred.is_adversarial(reference_label) {
        return Err(Error::InvalidReference(format!(
            "reference label {reference_label} does not satisfy the adversarial predicate"
        )));
    }
    let mut benign = source.clone();
    let mut adversarial = reference.clone();
    let mut adversarial_label = reference_label;
    let mut gap = linf_dist(&benign, &adversarial)?;
    let mut queries = 0;

    while gap > delta_min {
        let mid = midpoint(&benign, &adversarial)?;
        let label = oracle.query(&mid)?;
        queries += 1;
        if pred.is_adversarial(label) {
            adversarial = mid;
            adversarial_label = label;
        } else {
            benign = mid;
        }
        gap = linf_dist(&benign, &adversarial)?;
    }

    Ok(BoundarySample {
        image: adversarial,
        label: adversarial_label,
        bracket_gap: gap,
        queries_spent: queries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{BudgetedOracle, Classifier, LinearOracle};
    use crate::tensor::Shape;

    fn threshold() -> LinearOracle {
        LinearOracle::new(Shape::new(1, 1, 1), vec![1.0], -0.5, Label(0), Label(1)).unwrap()
    }

    fn px(p: f64) -> ImageTensor {
        ImageTensor::from_vec(vec![p], 1.0).unwrap()
    }

    /// Records every queried image.
    struct Recording<'a> {
        inner: BudgetedOracle<'a>,
        seen: Vec<(ImageTensor, Label)>,
    }

    impl LabelQuery for Recording<'_> {
        fn query(&mut self, image: &ImageTensor) -> Result<Label> {
            let l = self.inner.classify(image)?;
            self.seen.push((image.clone(), l));
            Ok(l)
        }
    }

    #[test]
    fn hand_traced_threshold_search() {
        let lin = threshold();
        let mut oracle = Recording {
            inner: BudgetedOracle::new(&lin, 100),
            seen: vec![],
        };
        let pred = AdversarialPredicate::untargeted(Label(0));
        let s = estimate_boundary(&px(0.0), &px(1.0), Label(1), &pred, 0.1, &mut oracle).unwrap();
        let mids: Vec<f64> = oracle.seen.iter().map(|(x, _)| x.pixels()[0]).collect();
        assert_eq!(mids, vec![0.5, 0.25, 0.375, 0.4375]);
        assert_eq!(s.image, px(0.5));
        assert_eq!(s.label, Label(1));
        assert_eq!(s.bracket_gap, 0.0625);
        assert_eq!(s.queries_spent, 4);
        assert_eq!(s.queries_spent, (1.0f64 / 0.1).log2().ceil() as usize);
    }

    #[test]
    fn tight_bracket_costs_nothing() {
        let lin = threshold();
        let mut oracle = BudgetedOracle::new(&lin, 10);
        let pred = AdversarialPredicate::untargeted(Label(0));
        let s = estimate_boundary(&px(0.45), &px(0.5), Label(1), &pred, 0.1, &mut oracle).unwrap();
        assert_eq!(s.image, px(0.5));
        assert_eq!(s.queries_spent, 0);
        assert_eq!(oracle.queries_used(), 0);
    }

    #[test]
    fn non_adversarial_reference_is_rejected() {
        let lin = threshold();
        let mut oracle = BudgetedOracle::new(&lin, 10);
        let pred = AdversarialPredicate::untargeted(Label(0));
        let err = estimate_boundary(&px(0.0), &px(0.2), Label(0), &pred, 0.1, &mut oracle);
        assert!(matches!(err, Err(Error::InvalidReference(_))));
        assert!(AdversarialPredicate::targeted(Label(2), Label(2)).is_err());
    }

    #[test]
    fn targeted_predicate_only_accepts_target() {
        let p = AdversarialPredicate::targeted(Label(0), Label(2)).unwrap();
        assert!(p.is_adversarial(Label(2)));
        assert!(!p.is_adversarial(Label(1)));
        assert!(!p.is_adversarial(Label(0)));
        assert_eq!(p.mode(), AttackMode::Targeted);
    }

    #[test]
    fn budget_exhaustion_propagates() {
        let lin = threshold();
        let mut oracle = BudgetedOracle::new(&lin, 2);
        let pred = AdversarialPredicate::untargeted(Label(0));
        let r = estimate_boundary(&px(0.0), &px(1.0), Label(1), &pred, 0.01, &mut oracle);
        assert!(matches!(r, Err(Error::BudgetExhausted(2))));
    }

    #[test]
    fn bracket_invariant_holds_throughout() {
        // three-class stripes along one axis: class by floor(3x)
        struct Stripes;
        impl Classifier for Stripes {
            fn classify(&self, image: &ImageTensor) -> Result<Label> {
                Ok(Label(((image.pixels()[0] * 3.0) as usize).min(2)))
            }
        }
        let stripes = Stripes;
        let mut oracle = Recording {
            inner: BudgetedOracle::new(&stripes, 100),
            seen: vec![],
        };
        let pred = AdversarialPredicate::targeted(Label(0), Label(2)).unwrap();
        let s = estimate_boundary(&px(0.1), &px(0.95), Label(2), &pred, 0.001, &mut oracle).unwrap();
        assert_eq!(s.label, Label(2));
        assert!(s.image.pixels()[0] >= 2.0 / 3.0);
        assert!(s.image.pixels()[0] - 2.0 / 3.0 <= 0.001);
        // every adversarial midpoint is to the right of every benign one
        let adv_min = oracle
            .seen
            .iter()
            .filter(|(_, l)| pred.is_adversarial(*l))
            .map(|(x, _)| x.pixels()[0])
            .fold(f64::INFINITY, f64::min);
        let benign_max = oracle
            .seen
            .iter()
            .filter(|(_, l)| !pred.is_adversarial(*l))
            .map(|(x, _)| x.pixels()[0])
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(benign_max < adv_min);
    }
}
