//! Zeroth-order estimate of which way along a random sparse direction the
//! distance to the source shrinks.
//!
//! The current boundary point is nudged upward by `theta * L` on `n` random
//! pixels. The nudged point is projected back onto the boundary (towards the
//! source when it is still adversarial, towards the current point when it
//! is not) and the two boundary points' squared distances to the source are
//! compared. Only the sign of the difference is kept.

use std::cmp::Ordering;

use crate::boundary::{estimate_boundary, AdversarialPredicate, BoundarySample};
use crate::error::{Error, Result};
use crate::oracle::LabelQuery;
use crate::tensor::{add_scaled_clipped, l2_sq_dist, sparse_mask, ImageTensor, RandomSource};

/// Sign of the distance improvement along a probe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GradientSign {
    /// The probe moved away from the source.
    Negative,
    Zero,
    /// The probe moved towards the source.
    Positive,
}

impl GradientSign {
    pub fn as_f64(self) -> f64 {
        match self {
            GradientSign::Negative => -1.0,
            GradientSign::Zero => 0.0,
            GradientSign::Positive => 1.0,
        }
    }

    /// `sign(d_current - d_probe)`.
    pub fn from_distances(d_current: f64, d_probe: f64) -> Self {
        match d_probe.partial_cmp(&d_current) {
            Some(Ordering::Greater) => GradientSign::Negative,
            Some(Ordering::Less) => GradientSign::Positive,
            _ => GradientSign::Zero,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradientProbe {
    /// The nudged point after projection back onto the boundary.
    pub perturbed_boundary: BoundarySample,
    pub sign: GradientSign,
    /// `perturbed_boundary.image - current.image`.
    pub probe_direction: ImageTensor,
    pub queries_spent: usize,
}

/// Probe settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeParams {
    pub n_pixels: usize,
    pub theta: f64,
    pub delta_min: f64,
}

pub fn probe_gradient<Q: LabelQuery + ?Sized>(
    current: &BoundarySample,
    source: &ImageTensor,
    pred: &AdversarialPredicate,
    params: ProbeParams,
    oracle: &mut Q,
    rng: &mut RandomSource,
) -> Result<GradientProbe> {
    if !(params.theta > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "theta must be positive, got {}",
            params.theta
        )));
    }
    let image = &current.image;
    let mask = sparse_mask(image.shape(), image.range(), params.n_pixels, rng)?;
    let candidate = add_scaled_clipped(image, &mask, params.theta)?;

    if candidate == *image {
        // every selected pixel was already saturated
        return Ok(GradientProbe {
            perturbed_boundary: BoundarySample {
                queries_spent: 0,
                ..current.clone()
            },
            sign: GradientSign::Zero,
            probe_direction: candidate.sub(image)?,
            queries_spent: 0,
        });
    }

    let label = oracle.query(&candidate)?;
    let projected = if pred.is_adversarial(label) {
        estimate_boundary(source, &candidate, label, pred, params.delta_min, oracle)?
    } else {
        estimate_boundary(&candidate, image, current.label, pred, params.delta_min, oracle)?
    };

    let d1 = l2_sq_dist(image, source)?;
    let d2 = l2_sq_dist(&projected.image, source)?;
    Ok(GradientProbe {
        sign: GradientSign::from_distances(d1, d2),
        probe_direction: projected.image.sub(image)?,
        queries_spent: 1 + projected.queries_spent,
        perturbed_boundary: projected,
    })
}
