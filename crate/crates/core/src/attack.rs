//! The query-limited attack loop.
//!
//! 1. Classify the source and the reference (both charged to the budget).
//! 2. Bisect the source-reference segment to get a first boundary point.
//! 3. Repeat until the budget runs out: probe a random sparse direction for
//!    the sign of the distance change, take an adaptive step along it, and
//!    bisect the accepted step back onto the boundary.
//!
//! The closest adversarial image seen by any query is what gets returned.

use serde::{Deserialize, Serialize};

use crate::boundary::{estimate_boundary, AdversarialPredicate, BoundarySample};
use crate::error::{Error, Result};
use crate::gradient::{probe_gradient, GradientSign, ProbeParams};
use crate::metrics::ImperceptibilityMetrics;
use crate::oracle::{Classifier, Label, LabelQuery};
use crate::session::{is_budget_exhausted, AttackResult, QuerySession, TracePoint};
use crate::tensor::{ImageTensor, RandomSource};
use crate::update::efficient_update;

/// Consecutive probes that neither moved the image nor spent a query before
/// the loop gives up.
const MAX_STALLED_PROBES: usize = 1000;

/// Attack goal.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Goal {
    /// Any label other than the source's.
    #[default]
    Untargeted,
    /// A specific label; `None` means "whatever the reference is classified as".
    Targeted(Option<Label>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Per-pixel bracket width at which boundary bisection stops.
    pub delta_min: f64,
    /// Pixels perturbed per gradient probe.
    pub n_pixels: usize,
    /// Probe magnitude relative to the dynamic range.
    pub theta: f64,
    /// Initial step, in probe lengths.
    pub max_jump: f64,
    pub max_queries: usize,
    pub seed: u64,
    pub mode: Goal,
    pub max_halvings: usize,
    pub restarts: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            delta_min: 0.01,
            n_pixels: 20,
            theta: 0.0196,
            max_jump: 1.0,
            max_queries: 1000,
            seed: 0,
            mode: Goal::Untargeted,
            max_halvings: 10,
            restarts: 1,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.delta_min > 0.0) {
            return bad(format!("delta_min must be positive, got {}", self.delta_min));
        }
        if self.n_pixels == 0 {
            return bad("n_pixels must be at least 1".into());
        }
        if !(self.theta > 0.0) {
            return bad(format!("theta must be positive, got {}", self.theta));
        }
        if !(self.max_jump > 0.0) {
            return bad(format!("max_jump must be positive, got {}", self.max_jump));
        }
        if self.max_queries == 0 {
            return bad("max_queries must be at least 1".into());
        }
        Ok(())
    }

    fn probe_params(&self) -> ProbeParams {
        ProbeParams {
            n_pixels: self.n_pixels,
            theta: self.theta,
            delta_min: self.delta_min,
        }
    }
}

/// Classifies source and reference and builds the predicate. Returns the
/// reference label, or `None` if the budget ran out first.
pub(crate) fn establish_predicate(
    session: &mut QuerySession<'_>,
    source: &ImageTensor,
    reference: &ImageTensor,
    goal: Goal,
) -> Result<Option<Label>> {
    source.check_compatible(reference)?;
    let source_label = match session.query(source) {
        Err(Error::BudgetExhausted(_)) => return Ok(None),
        r => r?,
    };
    let reference_label = match session.query(reference) {
        Err(Error::BudgetExhausted(_)) => return Ok(None),
        r => r?,
    };
    let pred = match goal {
        Goal::Untargeted => AdversarialPredicate::untargeted(source_label),
        Goal::Targeted(target) => AdversarialPredicate::targeted(source_label, target.unwrap_or(reference_label))?,
    };
    if !pred.is_adversarial(reference_label) {
        return Err(Error::InvalidReference(format!(
            "reference is classified {reference_label}, which is not adversarial for source class {source_label}"
        )));
    }
    session.set_predicate(pred);
    session.observe(reference, reference_label)?;
    Ok(Some(reference_label))
}

/// Runs the attack with `config.max_queries` queries and `config.seed`.
pub fn run_attack(
    source: &ImageTensor,
    reference: &ImageTensor,
    oracle: &dyn Classifier,
    config: &AttackConfig,
) -> Result<AttackResult> {
    config.validate()?;
    attack_with(
        source,
        reference,
        oracle,
        config,
        config.max_queries,
        RandomSource::new(config.seed),
    )
}

fn attack_with(
    source: &ImageTensor,
    reference: &ImageTensor,
    oracle: &dyn Classifier,
    config: &AttackConfig,
    q_max: usize,
    mut rng: RandomSource,
) -> Result<AttackResult> {
    let mut session = QuerySession::new(oracle, source.clone(), q_max);
    let Some(reference_label) = establish_predicate(&mut session, source, reference, config.mode)? else {
        return session.finish(false, reference);
    };
    let pred = *session.predicate().expect("predicate installed");

    let first = estimate_boundary(
        source,
        reference,
        reference_label,
        &pred,
        config.delta_min,
        &mut session,
    );
    if is_budget_exhausted(&first) {
        return session.finish(false, reference);
    }
    let mut current = first?;

    let mut stalled = 0;
    loop {
        match step(&mut current, source, &pred, config, &mut session, &mut rng) {
            Ok(true) => stalled = 0,
            Ok(false) => {
                stalled += 1;
                if stalled >= MAX_STALLED_PROBES {
                    break;
                }
            }
            Err(Error::BudgetExhausted(_)) => break,
            Err(e) => return Err(e),
        }
    }
    session.finish(true, reference)
}

/// One probe/update/re-project round. Returns whether any query was spent.
fn step(
    current: &mut BoundarySample,
    source: &ImageTensor,
    pred: &AdversarialPredicate,
    config: &AttackConfig,
    session: &mut QuerySession<'_>,
    rng: &mut RandomSource,
) -> Result<bool> {
    debug_assert!(pred.is_adversarial(current.label));
    let probe = probe_gradient(current, source, pred, config.probe_params(), session, rng)?;
    if probe.sign == GradientSign::Zero {
        return Ok(probe.queries_spent > 0);
    }
    let update = efficient_update(
        current,
        &probe,
        source,
        pred,
        config.max_jump,
        config.max_halvings,
        session,
    )?;
    if update.accepted() {
        // a full step along a positive sign lands on the probe's own boundary point
        *current = if update.image == probe.perturbed_boundary.image {
            probe.perturbed_boundary
        } else {
            estimate_boundary(source, &update.image, update.label, pred, config.delta_min, session)?
        };
    }
    Ok(true)
}

/// Splits the budget across `config.restarts` attempts (at least one),
/// cycling through `references`, each attempt on its own random substream
/// (attempt 0 uses the base stream, so a single attempt equals
/// [`run_attack`]).
///
/// Attempts whose reference is not adversarial are skipped. The returned
/// result holds the best image over all attempts, the total query count and
/// a trace concatenated across attempts.
pub fn run_with_restarts(
    source: &ImageTensor,
    references: &[ImageTensor],
    oracle: &dyn Classifier,
    config: &AttackConfig,
) -> Result<AttackResult> {
    config.validate()?;
    if references.is_empty() {
        return Err(Error::InvalidReference("no reference images given".into()));
    }
    let attempts = config.restarts.max(1);
    let base = RandomSource::new(config.seed);

    // (queries spent, result) per attempt; skipped attempts have no result
    let mut attempts_run: Vec<(usize, Option<AttackResult>)> = Vec::with_capacity(attempts);
    let mut last_invalid = None;
    for i in 0..attempts {
        let share = config.max_queries / attempts + usize::from(i < config.max_queries % attempts);
        if share == 0 {
            continue;
        }
        let reference = &references[i % references.len()];
        match attack_with(source, reference, oracle, config, share, base.substream(i as u64)) {
            Ok(r) => attempts_run.push((r.queries_used, Some(r))),
            Err(Error::InvalidReference(msg)) => {
                // both label queries were spent before the reference was rejected
                attempts_run.push((2.min(share), None));
                last_invalid = Some(msg);
            }
            Err(e) => return Err(e),
        }
    }
    if attempts_run.iter().all(|(_, r)| r.is_none()) {
        return Err(Error::InvalidReference(
            last_invalid.unwrap_or_else(|| "budget too small for any attempt".into()),
        ));
    }
    merge(source, attempts_run)
}

fn merge(source: &ImageTensor, attempts: Vec<(usize, Option<AttackResult>)>) -> Result<AttackResult> {
    let mut offset = 0;
    let mut trace: Vec<TracePoint> = Vec::new();
    let mut running = f64::INFINITY;
    let mut best: Option<&AttackResult> = None;
    for (spent, result) in &attempts {
        if let Some(r) = result {
            for p in &r.trace {
                running = running.min(p.best_l2_sq);
                trace.push(TracePoint {
                    query_index: offset + p.query_index,
                    best_l2_sq: running,
                });
            }
            let better = match best {
                None => true,
                Some(b) => r.best_label.is_some() && (b.best_label.is_none() || r.best_l2_sq() < b.best_l2_sq()),
            };
            if better {
                best = Some(r);
            }
        }
        offset += spent;
    }
    let best = best.expect("at least one attempt ran");
    Ok(AttackResult {
        best_adversarial: best.best_adversarial.clone(),
        best_label: best.best_label,
        queries_used: offset,
        trace,
        metrics: ImperceptibilityMetrics::evaluate(&best.best_adversarial, source)?,
        succeeded: attempts.iter().any(|(_, r)| r.as_ref().is_some_and(|r| r.succeeded)),
    })
}
