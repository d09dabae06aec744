//! Adaptive step along a signed probe direction.
//!
//! The step starts at `max_jump` probe lengths and is halved until the
//! stepped point is both closer to the source and still adversarial. If no
//! step qualifies after `max_halvings` halvings, the current point is kept.

use crate::boundary::{AdversarialPredicate, BoundarySample};
use crate::error::{Error, Result};
use crate::gradient::{GradientProbe, GradientSign};
use crate::oracle::{Label, LabelQuery};
use crate::tensor::{add_scaled_clipped, l2_sq_dist, ImageTensor};

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateOutcome {
    pub image: ImageTensor,
    pub label: Label,
    /// Step multiplier that was accepted, `None` when the update reverted.
    pub accepted_step: Option<f64>,
    /// Step multipliers tried, in order.
    pub steps_tried: Vec<f64>,
    pub queries_spent: usize,
}

impl UpdateOutcome {
    pub fn accepted(&self) -> bool {
        self.accepted_step.is_some()
    }
}

/// Tries `current + step * g * probe_direction` for `step = max_jump,
/// max_jump / 2, ...` (at most `max_halvings + 1` steps).
///
/// The distance test is free, so only steps that shrink the squared distance
/// to `source` are sent to the oracle; the first of those that is classified
/// adversarial is returned.
pub fn efficient_update<Q: LabelQuery + ?Sized>(
    current: &BoundarySample,
    probe: &GradientProbe,
    source: &ImageTensor,
    pred: &AdversarialPredicate,
    max_jump: f64,
    max_halvings: usize,
    oracle: &mut Q,
) -> Result<UpdateOutcome> {
    if !(max_jump > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "max_jump must be positive, got {max_jump}"
        )));
    }
    if probe.sign == GradientSign::Zero {
        return Err(Error::InvalidConfig(
            "efficient_update needs a nonzero gradient sign".into(),
        ));
    }
    let direction = probe.probe_direction.map(|d| d * probe.sign.as_f64());
    let d_current = l2_sq_dist(&current.image, source)?;

    let mut step = max_jump;
    let mut steps_tried = Vec::with_capacity(max_halvings + 1);
    let mut queries = 0;
    for _ in 0..=max_halvings {
        steps_tried.push(step);
        let trial = add_scaled_clipped(&current.image, &direction, step)?;
        if l2_sq_dist(&trial, source)? < d_current {
            let label = oracle.query(&trial)?;
            queries += 1;
            if pred.is_adversarial(label) {
                return Ok(UpdateOutcome {
                    image: trial,
                    label,
                    accepted_step: Some(step),
                    steps_tried,
                    queries_spent: queries,
                });
            }
        }
        step /= 2.0;
    }

    Ok(UpdateOutcome {
        image: current.image.clone(),
        label: current.label,
        accepted_step: None,
        steps_tried,
        queries_spent: queries,
    })
}
