//! Query-efficient decision-based adversarial search against classifiers
//! that only reveal a label.
//!
//! The attack ([`attack::run_attack`]) bisects towards the decision boundary
//! ([`boundary`]), estimates the sign of the distance gradient along random
//! sparse probes ([`gradient`]) and takes adaptive half-interval steps
//! ([`update`]), all under a hard query budget. [`baseline`] provides a
//! boundary-walk attack for comparison and [`metrics`] the imperceptibility
//! measures used to compare them.

pub mod attack;
pub mod baseline;
pub mod boundary;
pub mod error;
pub mod gradient;
pub mod imageio;
pub mod metrics;
pub mod oracle;
pub mod session;
pub mod tensor;
pub mod update;

pub use attack::{run_attack, run_with_restarts, AttackConfig, Goal};
pub use baseline::{run_boundary_attack, BoundaryAttackConfig};
pub use boundary::{estimate_boundary, AdversarialPredicate, AttackMode, BoundarySample};
pub use error::{Error, Result};
pub use gradient::{probe_gradient, GradientProbe, GradientSign, ProbeParams};
pub use metrics::{correlation, perturbation_norm, ssim, ImperceptibilityMetrics};
pub use oracle::{BudgetedOracle, Classifier, Label, LabelQuery};
pub use session::{AttackResult, QuerySession, TracePoint};
pub use tensor::{ImageTensor, RandomSource, Shape};
pub use update::{efficient_update, UpdateOutcome};
