//! One-pass review-and-refine over an initial set of answers.

use std::io::Write;

use geomatch_core::heuristics::{predict, HeuristicSpec};
use geomatch_core::pairs::PairRecord;
use geomatch_core::report::{sig6_opt, SCHEMA_VERSION};
use geomatch_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::backend::{ChatBackend, Stage};
use crate::inference::{bounded_map, exchange, score, Exchange, FailurePolicy, InferenceOptions};
use crate::prompt::{build_prompt, render, ChatMessage, Exemplars, GenerationParams, PromptSpec, Role, TemplateSet};
use crate::LlmError;

/// Where the answers to be reviewed come from.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSource {
    /// Fair coin flips from a seeded generator, drawn in pair order.
    Random { seed: u64 },
    /// Predictions of a fixed heuristic.
    Heuristic { spec: HeuristicSpec },
}

pub fn make_initial(pairs: &[PairRecord], source: &InitialSource) -> Result<Vec<u8>> {
    match source {
        InitialSource::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok(pairs.iter().map(|_| u8::from(rng.gen_bool(0.5))).collect())
        }
        InitialSource::Heuristic { spec } => pairs
            .iter()
            .map(|p| {
                p.features
                    .as_ref()
                    .map(|fv| predict(fv, spec))
                    .ok_or_else(|| Error::validation("initial answers", format!("pair {} has no features", p.pair_id)))
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefineRecord {
    pub pair_id: String,
    pub initial: u8,
    pub review: Option<String>,
    pub final_label: Option<u8>,
    pub parse_failure: bool,
    pub error: Option<String>,
    pub review_exchange: Exchange,
    pub refine_exchange: Option<Exchange>,
}

fn refine_params() -> GenerationParams {
    GenerationParams {
        max_new_tokens: 500,
        ..GenerationParams::default()
    }
}

/// Reviews one initial answer, then asks for a final one given the review.
pub fn review_and_refine(
    pair: &PairRecord,
    initial: u8,
    prompt: &[ChatMessage],
    templates: &TemplateSet,
    backend: &dyn ChatBackend,
) -> std::result::Result<RefineRecord, LlmError> {
    let answer = initial.to_string();
    let mut base = prompt.to_vec();
    base.push(ChatMessage::new(Role::Assistant, answer.clone())?);

    let mut review_msgs = base.clone();
    review_msgs.push(ChatMessage::new(
        Role::User,
        render(&templates.review, &[("initial_answer", &answer)]),
    )?);
    let review_ex = exchange(backend, &pair.pair_id, Stage::Review, review_msgs, GenerationParams::review())?;
    let review = match (&review_ex.response, &review_ex.error) {
        (Some(text), None) if !text.trim().is_empty() => text.trim().to_string(),
        _ => {
            return Ok(RefineRecord {
                pair_id: pair.pair_id.clone(),
                initial,
                review: None,
                final_label: None,
                parse_failure: true,
                error: Some(review_ex.error.clone().unwrap_or_else(|| "empty review".into())),
                review_exchange: review_ex,
                refine_exchange: None,
            })
        }
    };

    let mut refine_msgs = base;
    refine_msgs.push(ChatMessage::new(
        Role::User,
        render(&templates.refine, &[("initial_answer", &answer), ("review", &review)]),
    )?);
    let refine_ex = exchange(backend, &pair.pair_id, Stage::Refine, refine_msgs, refine_params())?;
    Ok(RefineRecord {
        pair_id: pair.pair_id.clone(),
        initial,
        review: Some(review),
        final_label: refine_ex.label,
        parse_failure: refine_ex.parse_failure,
        error: refine_ex.error.clone(),
        review_exchange: review_ex,
        refine_exchange: Some(refine_ex),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefineReport {
    pub schema_version: u32,
    pub n: usize,
    pub parse_failures: usize,
    pub changed: usize,
    pub policy: FailurePolicy,
    #[serde(serialize_with = "sig6_opt")]
    pub initial_accuracy: Option<f64>,
    #[serde(serialize_with = "sig6_opt")]
    pub final_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub records: Vec<RefineRecord>,
    pub report: RefineReport,
}

pub fn run_refine(
    pairs: &[PairRecord],
    initial: &[u8],
    spec: &PromptSpec,
    exemplars: Option<&Exemplars>,
    templates: &TemplateSet,
    backend: &dyn ChatBackend,
    opts: &InferenceOptions,
) -> std::result::Result<RefineOutcome, LlmError> {
    if pairs.is_empty() {
        return Err(Error::validation("refine", "no pairs").into());
    }
    if initial.len() != pairs.len() {
        return Err(Error::validation(
            "refine",
            format!("{} initial answers for {} pairs", initial.len(), pairs.len()),
        )
        .into());
    }
    if let Some(bad) = initial.iter().find(|&&l| l > 1) {
        return Err(Error::validation("refine", format!("initial answer {bad} is not 0 or 1")).into());
    }
    let prompts = pairs
        .iter()
        .map(|p| build_prompt(p, spec, exemplars, templates))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, Vec<ChatMessage>)> = prompts.into_iter().enumerate().collect();
    let records = bounded_map(&jobs, opts.in_flight, |(i, msgs)| {
        review_and_refine(&pairs[*i], initial[*i], msgs, templates, backend)
    })?;

    let gold: Vec<Option<u8>> = pairs.iter().map(|p| p.label).collect();
    let init: Vec<Option<u8>> = initial.iter().map(|&l| Some(l)).collect();
    let fin: Vec<Option<u8>> = records.iter().map(|r| r.final_label).collect();
    let report = RefineReport {
        schema_version: SCHEMA_VERSION,
        n: pairs.len(),
        parse_failures: records.iter().filter(|r| r.parse_failure).count(),
        changed: records
            .iter()
            .filter(|r| r.final_label.is_some_and(|l| l != r.initial))
            .count(),
        policy: opts.policy,
        initial_accuracy: score(&init, &gold, opts.policy)?.map(|e| e.accuracy),
        final_accuracy: score(&fin, &gold, opts.policy)?.map(|e| e.accuracy),
    };
    Ok(RefineOutcome { records, report })
}

pub fn write_records<W: Write>(mut out: W, records: &[RefineRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
