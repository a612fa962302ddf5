//! Batch classification with a bounded number of in-flight requests.

use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use geomatch_core::heuristics::{evaluate, EvalReport};
use geomatch_core::pairs::PairRecord;
use geomatch_core::report::SCHEMA_VERSION;
use geomatch_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::LlmError;
use crate::backend::{BackendError, ChatBackend, CompletionRequest, Stage};
use crate::prompt::{build_prompt, parse_label, ChatMessage, Exemplars, GenerationParams, PromptSpec, TemplateSet};

pub const DEFAULT_IN_FLIGHT: usize = 4;

/// How unparseable answers enter the accuracy figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailurePolicy {
    /// Counted as a wrong answer.
    #[default]
    Incorrect,
    /// Left out of the evaluation.
    Abstain,
}

impl FromStr for FailurePolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "incorrect" => Ok(FailurePolicy::Incorrect),
            "abstain" => Ok(FailurePolicy::Abstain),
            other => Err(Error::validation("failure policy", format!("unknown policy {other:?}"))),
        }
    }
}

/// One request/response round trip, as logged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exchange {
    pub pair_id: String,
    pub stage: Stage,
    pub request: Vec<ChatMessage>,
    pub params: GenerationParams,
    pub response: Option<String>,
    pub label: Option<u8>,
    pub parse_failure: bool,
    pub error: Option<String>,
    pub latency_ms: u64,
    pub backend: String,
}

/// Sends one request and parses the reply. Only fatal backend errors are returned as `Err`.
pub(crate) fn exchange(
    backend: &dyn ChatBackend,
    pair_id: &str,
    stage: Stage,
    messages: Vec<ChatMessage>,
    params: GenerationParams,
) -> std::result::Result<Exchange, BackendError> {
    let request = CompletionRequest {
        pair_id: pair_id.to_string(),
        stage,
        messages,
        params,
    };
    let mut ex = Exchange {
        pair_id: request.pair_id.clone(),
        stage,
        request: Vec::new(),
        params,
        response: None,
        label: None,
        parse_failure: false,
        error: None,
        latency_ms: 0,
        backend: backend.id(),
    };
    match backend.complete(&request) {
        Ok(c) => {
            ex.label = parse_label(&c.text).label();
            ex.parse_failure = ex.label.is_none();
            ex.response = Some(c.text);
            ex.latency_ms = c.latency_ms;
        }
        Err(e) if e.is_fatal() => return Err(e),
        Err(e) => {
            log::warn!("pair {pair_id} ({stage}): {e}");
            ex.error = Some(e.to_string());
            ex.parse_failure = true;
        }
    }
    ex.request = request.messages;
    Ok(ex)
}

/// Maps `f` over `items` with at most `limit` calls running at once; output
/// keeps input order. The first `Err` stops new work and is returned.
pub fn bounded_map<T: Sync, R: Send, E: Send>(
    items: &[T],
    limit: usize,
    f: impl Fn(&T) -> std::result::Result<R, E> + Sync,
) -> std::result::Result<Vec<R>, E> {
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    let failure: Mutex<Option<E>> = Mutex::new(None);
    let workers = limit.max(1).min(items.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                match f(&items[i]) {
                    Ok(r) => slots.lock().expect("result lock")[i] = Some(r),
                    Err(e) => {
                        stop.store(true, Ordering::SeqCst);
                        failure.lock().expect("failure lock").get_or_insert(e);
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().expect("failure lock") {
        return Err(e);
    }
    Ok(slots
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceReport {
    pub schema_version: u32,
    pub n: usize,
    pub parse_failures: usize,
    pub backend_errors: usize,
    pub policy: FailurePolicy,
    /// Present when every pair carries a gold label and at least one answer counts.
    pub eval: Option<EvalReport>,
}

/// Scores predicted labels (`None` = parse failure) against gold labels.
pub fn score(
    predicted: &[Option<u8>],
    gold: &[Option<u8>],
    policy: FailurePolicy,
) -> Result<Option<EvalReport>> {
    if gold.iter().any(|g| g.is_none()) {
        return Ok(None);
    }
    let (mut preds, mut labels) = (Vec::new(), Vec::new());
    for (p, g) in predicted.iter().zip(gold) {
        let g = g.expect("checked above");
        match (p, policy) {
            (Some(p), _) => preds.push(*p),
            // a failure is whichever answer is wrong
            (None, FailurePolicy::Incorrect) => preds.push(1 - g),
            (None, FailurePolicy::Abstain) => continue,
        }
        labels.push(g);
    }
    if preds.is_empty() {
        // every answer abstained
        return Ok(None);
    }
    evaluate(&preds, &labels).map(Some)
}

#[derive(Debug, Clone)]
pub struct InferenceOptions {
    pub in_flight: usize,
    pub policy: FailurePolicy,
    pub params: GenerationParams,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions {
            in_flight: DEFAULT_IN_FLIGHT,
            policy: FailurePolicy::Incorrect,
            params: GenerationParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InferenceOutcome {
    pub exchanges: Vec<Exchange>,
    pub report: InferenceReport,
}

/// Classifies every pair. Per-pair backend errors are logged in the exchange and
/// count as parse failures; a rejected credential aborts the run.
pub fn run_inference(
    pairs: &[PairRecord],
    spec: &PromptSpec,
    exemplars: Option<&Exemplars>,
    templates: &TemplateSet,
    backend: &dyn ChatBackend,
    opts: &InferenceOptions,
) -> std::result::Result<InferenceOutcome, LlmError> {
    if pairs.is_empty() {
        return Err(Error::validation("inference", "no pairs").into());
    }
    opts.params.validate()?;
    let prompts = pairs
        .iter()
        .map(|p| build_prompt(p, spec, exemplars, templates))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(&PairRecord, Vec<ChatMessage>)> = pairs.iter().zip(prompts).collect();
    let exchanges = bounded_map(&jobs, opts.in_flight, |(pair, msgs)| {
        exchange(backend, &pair.pair_id, Stage::Classify, msgs.clone(), opts.params)
    })
    ?;

    let predicted: Vec<Option<u8>> = exchanges.iter().map(|e| e.label).collect();
    let gold: Vec<Option<u8>> = pairs.iter().map(|p| p.label).collect();
    let report = InferenceReport {
        schema_version: SCHEMA_VERSION,
        n: pairs.len(),
        parse_failures: exchanges.iter().filter(|e| e.parse_failure).count(),
        backend_errors: exchanges.iter().filter(|e| e.error.is_some()).count(),
        policy: opts.policy,
        eval: score(&predicted, &gold, opts.policy)?,
    };
    Ok(InferenceOutcome { exchanges, report })
}

pub fn write_exchanges<W: Write>(mut out: W, exchanges: &[Exchange]) -> std::io::Result<()> {
    for e in exchanges {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounded_map_keeps_order_for_any_limit() {
        let items: Vec<u64> = (0..50).collect();
        for limit in [1, 3, 16, 100] {
            let out: Vec<u64> = bounded_map(&items, limit, |&x| {
                std::thread::sleep(std::time::Duration::from_micros((50 - x) * 20));
                Ok::<_, ()>(x * 2)
            })
            .unwrap();
            assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
        }
        let empty: Vec<u8> = vec![];
        assert!(bounded_map(&empty, 4, |&x| Ok::<_, ()>(x)).unwrap().is_empty());
    }

    #[test]
    fn bounded_map_stops_on_error() {
        let items: Vec<u32> = (0..20).collect();
        let r = bounded_map(&items, 2, |&x| if x == 5 { Err("boom") } else { Ok(x) });
        assert_eq!(r, Err("boom"));
    }

    #[test]
    fn failure_policies() {
        let gold = vec![Some(1), Some(0), Some(1), Some(0)];
        let pred = vec![Some(1), None, None, Some(0)];
        let inc = score(&pred, &gold, FailurePolicy::Incorrect).unwrap().unwrap();
        assert_eq!((inc.n, inc.correct()), (4, 2));
        assert_eq!(inc.accuracy, 0.5);
        let abs = score(&pred, &gold, FailurePolicy::Abstain).unwrap().unwrap();
        assert_eq!((abs.n, abs.correct()), (2, 2));
        assert!(score(&[None, None], &[Some(1), Some(0)], FailurePolicy::Abstain).unwrap().is_none());
        assert!(score(&pred, &[Some(1), None, Some(1), Some(0)], FailurePolicy::Incorrect)
            .unwrap()
            .is_none());
    }
}
