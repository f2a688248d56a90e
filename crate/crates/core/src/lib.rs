//! Measurement harness for social perceptions in persona-assigned chat models.
//!
//! Responses to BBQ-style multiple-choice questions are scored with a
//! reward/penalty scheme (plus counter scores for the target that was not
//! picked) and aggregated into Target Bias (TB), Bias Amount (BAmt) and
//! Persona Bias (PB), alongside the BBQ Bias Score and accuracy.
//!
//! The pure pipeline (dataset, personas, interpretation, scoring, metrics,
//! reports, the synthetic responder) builds for any target. The network
//! gateway, experiment runner and CLI live behind the `runtime` feature.

pub mod aggregate;
pub mod dataset;
pub mod exact;
pub mod gateway;
pub mod interpret;
pub mod metrics;
#[cfg(feature = "runtime")]
pub mod orchestrator;
pub mod persona;
pub mod report;
pub mod scoring;
pub mod types;

pub use dataset::{DatasetStats, OptionSlot, QuestionRecord};
pub use interpret::{extract_choice, InterpretedAnswer};
pub use metrics::{MetricsReport, PerceptionAccumulator};
pub use persona::{PersonaCatalog, PersonaSpec};
pub use scoring::{score_response, ScoreEvent, ScoringConfig};
pub use types::{ContextCondition, Domain, OptionLabel, Polarity, SlotKind};
