//! Prompting pipeline for linestring matching: templates, chat backends,
//! batch inference and one-pass review-and-refine.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backend;
pub mod inference;
pub mod prompt;
pub mod refine;

pub use backend::{BackendError, ChatBackend, HttpBackend, HttpConfig, MockBackend, Stage};
pub use inference::{run_inference, Exchange, FailurePolicy, InferenceOptions, InferenceReport};
pub use prompt::{build_prompt, parse_label, ChatMessage, Exemplars, GenerationParams, PromptMode, PromptSpec, Shots, TemplateSet};

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error(transparent)]
    Core(#[from] geomatch_core::Error),
    #[error("backend error: {0}")]
    Backend(#[from] BackendError),
}
