//! Judge orchestration: prompt rendering, single- and two-stage judging of
//! a report pair, scoring, and benchmarking against rater annotations.

mod benchmark;
mod prompt;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use benchmark::{benchmark, BenchmarkReport, BenchmarkRun, FailureRow, PerPairRow};
pub use prompt::{render_messages, system_message, PromptSet, PromptTemplate, Stage};
pub(crate) use prompt::V1_SCREEN;

use crate::backend::{BackendError, ChatBackend, ChatRequest, ChatResponse, Message};
use crate::metrics::{MetricsError, ScoreMode};
use crate::respparse::{parse_judgment, JudgmentMeta, ParseError, RepairTrace};
use crate::types::{DecodingParams, JudgeStrategy, Judgment, ReportPair};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JudgeError {
    #[error("template error: {0}")]
    Template(String),
    #[error("unbound placeholder {{{{{0}}}}}")]
    UnboundPlaceholder(String),
    #[error("pair `{pair_id}`: backend error: {source}")]
    Backend {
        pair_id: String,
        #[source]
        source: BackendError,
    },
    #[error("pair `{pair_id}`: {source}")]
    Parse {
        pair_id: String,
        #[source]
        source: Box<ParseError>,
    },
    #[error("need at least 2 successfully judged pairs, got {got}")]
    TooFewPairs { got: usize },
    #[error("annotations reference unknown pair id(s): {}", .0.join(", "))]
    UnknownPairs(Vec<String>),
    #[error("duplicate pair id `{0}`")]
    DuplicatePair(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl JudgeError {
    pub fn pair_id(&self) -> Option<&str> {
        match self {
            JudgeError::Backend { pair_id, .. } | JudgeError::Parse { pair_id, .. } => Some(pair_id),
            _ => None,
        }
    }
}

/// Model and decoding settings for judge calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Extra requests issued for a stage whose output fails to parse.
    pub parse_retries: u32,
    /// Pairs judged concurrently by [`benchmark`].
    pub concurrency: usize,
}

impl Default for JudgeParams {
    fn default() -> Self {
        Self {
            model: "gpt-4".into(),
            temperature: 0.0,
            max_tokens: 2048,
            parse_retries: 1,
            concurrency: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Usage {
    fn add(&mut self, r: &ChatResponse) {
        self.calls += 1;
        self.prompt_tokens += r.prompt_tokens;
        self.completion_tokens += r.completion_tokens;
    }

    pub fn merge(&mut self, other: &Usage) {
        self.calls += other.calls;
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
    }
}

/// A judgment plus the parse diagnostics that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgeOutcome {
    pub judgment: Judgment,
    pub trace: RepairTrace,
    pub warnings: Vec<String>,
    pub usage: Usage,
}

fn request(params: &JudgeParams, messages: Vec<Message>, attempt: u32) -> ChatRequest {
    let mut req = ChatRequest::new(params.model.clone(), messages);
    req.temperature = params.temperature;
    req.max_tokens = params.max_tokens;
    if attempt > 1 {
        // distinct cache key for re-asks; never sent to the provider
        req.extra.insert("_attempt".into(), attempt.to_string());
    }
    req
}

fn call(
    backend: &dyn ChatBackend,
    req: &ChatRequest,
    pair_id: &str,
    usage: &mut Usage,
) -> Result<ChatResponse, JudgeError> {
    let r = backend.complete(req).map_err(|source| JudgeError::Backend {
        pair_id: pair_id.to_owned(),
        source,
    })?;
    usage.add(&r);
    Ok(r)
}

/// Sends `messages` and parses the reply, re-asking up to
/// `params.parse_retries` times when the reply cannot be parsed.
fn complete_and_parse(
    backend: &dyn ChatBackend,
    messages: Vec<Message>,
    meta: JudgmentMeta<'_>,
    params: &JudgeParams,
    usage: &mut Usage,
) -> Result<JudgeOutcome, JudgeError> {
    let mut attempt = 1;
    loop {
        let req = request(params, messages.clone(), attempt);
        let resp = call(backend, &req, meta.pair_id, usage)?;
        match parse_judgment(&resp.content, meta) {
            Ok(p) => {
                return Ok(JudgeOutcome {
                    judgment: p.judgment,
                    trace: p.trace,
                    warnings: p.warnings,
                    usage: *usage,
                })
            }
            Err(e) if attempt > params.parse_retries => {
                return Err(JudgeError::Parse {
                    pair_id: meta.pair_id.to_owned(),
                    source: Box::new(e),
                })
            }
            Err(_) => attempt += 1,
        }
    }
}

/// Judges one pair.
///
/// Single-stage issues one request. Two-stage first asks for a free-text
/// comparison, then hands only that comparison to the count prompt and
/// parses the structured result.
pub fn judge_pair(
    pair: &ReportPair,
    backend: &dyn ChatBackend,
    strategy: JudgeStrategy,
    prompts: &PromptSet,
    params: &JudgeParams,
) -> Result<JudgeOutcome, JudgeError> {
    let meta = JudgmentMeta {
        pair_id: &pair.pair_id,
        model_id: &params.model,
        prompt_version: &prompts.version,
        strategy,
    };
    let none = BTreeMap::new();
    let mut usage = Usage::default();
    let mut outcome = match strategy {
        JudgeStrategy::SingleStage => {
            let messages = render_messages(&prompts.single, pair, &none)?;
            complete_and_parse(backend, messages, meta, params, &mut usage)?
        }
        JudgeStrategy::TwoStage => {
            let messages = render_messages(&prompts.compare, pair, &none)?;
            let stage1 = call(backend, &request(params, messages, 1), &pair.pair_id, &mut usage)?;
            let mut bind = BTreeMap::new();
            bind.insert("comparison".to_owned(), stage1.content.clone());
            let messages = render_messages(&prompts.count, pair, &bind)?;
            let mut out = complete_and_parse(backend, messages, meta, params, &mut usage)?;
            out.judgment.raw_stage1 = Some(stage1.content);
            out
        }
    };
    outcome.judgment.decoding = Some(DecodingParams {
        temperature: params.temperature,
        max_tokens: params.max_tokens,
    });
    Ok(outcome)
}

/// The scalar compared against raters.
pub fn score(j: &Judgment, mode: ScoreMode) -> u64 {
    match mode {
        ScoreMode::Total => j.total_count,
        ScoreMode::SignificantOnly => j.significant_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{CountingBackend, FnBackend};
    use crate::types::{ErrorCategory, ErrorItem, Provenance, Report, Significance};

    fn pair(r: &str, c: &str) -> ReportPair {
        ReportPair {
            pair_id: "p1".into(),
            reference: Report::new("r", r),
            candidate: Report::new("c", c),
            provenance: Provenance::User,
        }
    }

    fn reply(content: &str) -> Result<ChatResponse, BackendError> {
        Ok(ChatResponse {
            content: content.into(),
            model_id: "m".into(),
            prompt_tokens: 10,
            completion_tokens: 5,
            latency_ms: 0,
        })
    }

    const ZERO: &str = r#"{"errors": [], "total_count": 0}"#;

    #[test]
    fn single_stage_one_call() {
        let b = CountingBackend::new(FnBackend(|_: &ChatRequest| reply(ZERO)));
        let set = PromptSet::builtin("v1").unwrap();
        let out = judge_pair(&pair("a", "a"), &b, JudgeStrategy::SingleStage, &set, &JudgeParams::default()).unwrap();
        assert_eq!(b.calls(), 1);
        assert_eq!(out.judgment.total_count, 0);
        assert_eq!(out.judgment.raw_stage1, None);
        assert_eq!(out.usage, Usage { calls: 1, prompt_tokens: 10, completion_tokens: 5 });
        assert_eq!(out.judgment.decoding, Some(DecodingParams { temperature: 0.0, max_tokens: 2048 }));
    }

    #[test]
    fn two_stage_passes_comparison_to_count_stage() {
        let b = CountingBackend::new(FnBackend(|r: &ChatRequest| {
            let user = &r.messages[1].content;
            if user.contains("Do not output JSON") {
                reply("1. Omission of finding, clinically significant: lateral view not mentioned.")
            } else {
                assert!(user.contains("lateral view not mentioned"));
                assert!(!user.contains("REFERENCE-TEXT"));
                reply(r#"{"errors": [{"category": "omission_of_finding", "significance": "clinically_significant", "description": "lateral view"}], "total_count": 1}"#)
            }
        }));
        let set = PromptSet::builtin("v1").unwrap();
        let out = judge_pair(&pair("REFERENCE-TEXT", "x"), &b, JudgeStrategy::TwoStage, &set, &JudgeParams::default()).unwrap();
        assert_eq!(b.calls(), 2);
        assert_eq!(out.judgment.strategy, JudgeStrategy::TwoStage);
        assert_eq!(out.judgment.prompt_version, "v1");
        assert_eq!(
            out.judgment.errors,
            vec![ErrorItem::new(ErrorCategory::OmissionOfFinding, Significance::ClinicallySignificant, "lateral view")]
        );
        assert!(out.judgment.raw_stage1.as_deref().unwrap().starts_with("1. Omission"));
        assert!(crate::types::validate_judgment(&out.judgment).is_empty());
    }

    #[test]
    fn garbage_twice_is_parse_error_with_raw_text() {
        let b = CountingBackend::new(FnBackend(|_: &ChatRequest| reply("I'd rather not.")));
        let set = PromptSet::builtin("v1").unwrap();
        let err = judge_pair(&pair("a", "b"), &b, JudgeStrategy::SingleStage, &set, &JudgeParams::default()).unwrap_err();
        assert_eq!(b.calls(), 2);
        match err {
            JudgeError::Parse { pair_id, source } => {
                assert_eq!(pair_id, "p1");
                assert_eq!(source.raw, "I'd rather not.");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reask_uses_distinct_request() {
        let seen = std::sync::Mutex::new(Vec::new());
        let b = FnBackend(|r: &ChatRequest| {
            let mut s = seen.lock().unwrap();
            s.push(crate::backend::cache_key(r));
            if s.len() == 1 { reply("garbage") } else { reply(ZERO) }
        });
        let set = PromptSet::builtin("v1").unwrap();
        judge_pair(&pair("a", "b"), &b, JudgeStrategy::SingleStage, &set, &JudgeParams::default()).unwrap();
        let s = seen.lock().unwrap();
        assert_eq!(s.len(), 2);
        assert_ne!(s[0], s[1]);
    }

    #[test]
    fn backend_error_carries_pair_id() {
        let b = FnBackend(|_: &ChatRequest| Err(BackendError::Timeout));
        let set = PromptSet::builtin("v1").unwrap();
        let err = judge_pair(&pair("a", "b"), &b, JudgeStrategy::TwoStage, &set, &JudgeParams::default()).unwrap_err();
        assert_eq!(err, JudgeError::Backend { pair_id: "p1".into(), source: BackendError::Timeout });
    }

    #[test]
    fn score_modes() {
        let items = vec![
            ErrorItem::new(ErrorCategory::OmissionOfFinding, Significance::ClinicallySignificant, ""),
            ErrorItem::new(ErrorCategory::OmissionOfFinding, Significance::ClinicallySignificant, ""),
            ErrorItem::new(ErrorCategory::IncorrectSeverityOfFinding, Significance::ClinicallyInsignificant, ""),
        ];
        let j = Judgment::from_errors("p", "m", "v1", JudgeStrategy::SingleStage, items, "");
        assert_eq!(score(&j, ScoreMode::Total), 3);
        assert_eq!(score(&j, ScoreMode::SignificantOnly), 2);
        let empty = Judgment::from_errors("p", "m", "v1", JudgeStrategy::SingleStage, vec![], "");
        assert_eq!(score(&empty, ScoreMode::Total), 0);
    }
}
