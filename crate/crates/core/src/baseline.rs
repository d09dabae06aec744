//! Boundary-walk baseline.
//!
//! Starts at the reference image and alternates a random step along the
//! sphere around the source (through the current iterate) with a small
//! contraction towards the source. Candidates are kept only if adversarial.
//! Both step sizes adapt multiplicatively so that roughly half of the
//! spherical steps stay adversarial.
//!
//! This is a compact re-implementation of the classic boundary attack, not a
//! port of any particular library; comparisons against it are directional.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::attack::{establish_predicate, Goal};
use crate::error::{Error, Result};
use crate::oracle::{Classifier, LabelQuery};
use crate::session::{AttackResult, QuerySession};
use crate::tensor::{ImageTensor, RandomSource};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryAttackConfig {
    pub max_queries: usize,
    pub seed: u64,
    pub mode: Goal,
    /// Spherical step, relative to the current distance to the source.
    pub step_orth: f64,
    /// Contraction towards the source, relative to the current distance.
    pub step_src: f64,
    /// Number of trials between step-size adjustments.
    pub window: usize,
    pub grow: f64,
    pub shrink: f64,
}

impl Default for BoundaryAttackConfig {
    fn default() -> Self {
        Self {
            max_queries: 1000,
            seed: 0,
            mode: Goal::Untargeted,
            step_orth: 0.01,
            step_src: 0.01,
            window: 10,
            grow: 1.1,
            shrink: 0.9,
        }
    }
}

/// Success counter over a fixed window of trials.
struct StepAdapter {
    successes: usize,
    trials: usize,
}

impl StepAdapter {
    fn new() -> Self {
        Self {
            successes: 0,
            trials: 0,
        }
    }

    /// Records a trial; once the window is full, returns the success rate
    /// and starts a new window.
    fn record(&mut self, success: bool, window: usize) -> Option<f64> {
        self.trials += 1;
        self.successes += usize::from(success);
        if self.trials < window {
            return None;
        }
        let rate = self.successes as f64 / self.trials as f64;
        *self = Self::new();
        Some(rate)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn run_boundary_attack(
    source: &ImageTensor,
    reference: &ImageTensor,
    oracle: &dyn Classifier,
    config: &BoundaryAttackConfig,
) -> Result<AttackResult> {
    if config.max_queries == 0 || config.window == 0 {
        return Err(Error::InvalidConfig("max_queries and window must be at least 1".into()));
    }
    if config.step_orth < 0.0 || config.step_src < 0.0 {
        return Err(Error::InvalidConfig("step sizes must be non-negative".into()));
    }
    let mut session = QuerySession::new(oracle, source.clone(), config.max_queries);
    if establish_predicate(&mut session, source, reference, config.mode)?.is_none() {
        return session.finish(false, reference);
    }
    let pred = *session.predicate().expect("predicate installed");

    let mut rng = RandomSource::new(config.seed);
    let (shape, range) = (source.shape(), source.range());
    let src = source.pixels();
    let mut current = reference.clone();
    let (mut step_orth, mut step_src) = (config.step_orth, config.step_src);
    let mut orth_stats = StepAdapter::new();
    let mut src_stats = StepAdapter::new();

    loop {
        let diff: Vec<f64> = current.pixels().iter().zip(src).map(|(x, s)| x - s).collect();
        let dist = norm(&diff);
        if dist == 0.0 {
            break;
        }

        // random direction orthogonal to the source direction
        let mut eta: Vec<f64> = (0..diff.len()).map(|_| StandardNormal.sample(rng.rng())).collect();
        let along = eta.iter().zip(&diff).map(|(e, d)| e * d).sum::<f64>() / (dist * dist);
        for (e, d) in eta.iter_mut().zip(&diff) {
            *e -= along * d;
        }
        let eta_norm = norm(&eta);
        if eta_norm > 0.0 {
            let scale = step_orth * dist / eta_norm;
            eta.iter_mut().for_each(|e| *e *= scale);
        }

        // back onto the sphere of radius `dist` around the source
        let moved: Vec<f64> = diff.iter().zip(&eta).map(|(d, e)| d + e).collect();
        let rescale = dist / norm(&moved);
        let spherical: Vec<f64> = moved
            .iter()
            .zip(src)
            .map(|(m, s)| (s + m * rescale).clamp(0.0, range))
            .collect();
        let spherical = ImageTensor::new(shape, range, spherical)?;

        let label = match session.query(&spherical) {
            Err(Error::BudgetExhausted(_)) => break,
            r => r?,
        };
        let orth_ok = pred.is_adversarial(label);
        if let Some(rate) = orth_stats.record(orth_ok, config.window) {
            step_orth *= if rate > 0.5 { config.grow } else { config.shrink };
        }
        if !orth_ok {
            continue;
        }

        let contracted = ImageTensor::new(
            shape,
            range,
            spherical
                .pixels()
                .iter()
                .zip(src)
                .map(|(p, s)| (p + step_src * (s - p)).clamp(0.0, range))
                .collect(),
        )?;
        let label = match session.query(&contracted) {
            Err(Error::BudgetExhausted(_)) => break,
            r => r?,
        };
        let src_ok = pred.is_adversarial(label);
        if let Some(rate) = src_stats.record(src_ok, config.window) {
            step_src *= if rate > 0.5 { config.grow } else { config.shrink };
        }
        if src_ok {
            current = contracted;
        }
    }
    session.finish(true, reference)
}
