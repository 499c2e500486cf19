//! Prompt rendering and assembly.

mod assemble;
mod budget;
mod native;

pub use crate::text::{count_units, UnitCounter, UnitScheme};
pub use assemble::{validate_specs, EvidenceMode, PromptAssembler, PromptSpec, DEFAULT_INSTRUCTIONS, DEFAULT_ONE_SHOT};
pub use budget::{budget_sweep, BudgetStep, BudgetSweep, DEFAULT_EPSILON};
pub use native::{open_empty_dialog, parse_completion, parse_native_dialog, render_native_dialog, PendingTurn, EOT};

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("nothing to continue: the dialog has no turns")]
    EmptyDialog,
    #[error("invalid turn: {0}")]
    InvalidTurn(String),
    #[error("cannot parse native dialog: {0}")]
    Parse(String),
    #[error("prompt '{label}' expects {expected} evidence passages, got {got}")]
    Arity { label: String, expected: usize, got: usize },
    #[error("invalid prompt spec: {0}")]
    Spec(String),
    #[error("invalid budget sweep: {0}")]
    Budget(String),
}
