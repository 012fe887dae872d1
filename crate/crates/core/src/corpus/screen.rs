use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::backend::{ChatBackend, ChatRequest, Message};
use crate::judge::{JudgeParams, PromptTemplate, Stage, V1_SCREEN};
use crate::par;
use crate::types::ReportPair;

const SCREEN_SYSTEM: &str = "You screen pairs of radiology reports for data-quality problems. Answer tersely.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Keep,
    Reject,
    /// Backend failure or unreadable answer; the pair is kept.
    Unscreened,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenDecision {
    pub pair_id: String,
    pub verdict: Verdict,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenOutcome {
    pub kept: Vec<ReportPair>,
    /// One decision per input pair, in input order.
    pub decisions: Vec<ScreenDecision>,
    pub rejected: usize,
    pub unscreened: usize,
}

/// Bundled screening template for `version`.
pub fn screen_template(version: &str) -> Result<PromptTemplate, CorpusError> {
    match version {
        "v1" => PromptTemplate::parse(V1_SCREEN).map_err(|e| CorpusError::InvalidSpec(e.to_string())),
        other => Err(CorpusError::InvalidSpec(format!("no bundled screen template `{other}`"))),
    }
}

/// Reads the first word of a screening answer. Returns `None` when it is
/// not a recognised verdict; otherwise the verdict and the rest of the text
/// as the reason.
pub fn parse_verdict(answer: &str) -> Option<(Verdict, String)> {
    let s = answer.trim_start_matches(|c: char| !c.is_alphanumeric());
    let end = s.find(|c: char| !c.is_alphanumeric()).unwrap_or(s.len());
    let (word, rest) = s.split_at(end);
    let verdict = match word.to_ascii_lowercase().as_str() {
        "keep" | "yes" | "accept" | "pass" => Verdict::Keep,
        "reject" | "no" | "drop" | "discard" => Verdict::Reject,
        _ => return None,
    };
    let reason = rest
        .trim_start_matches(|c: char| c.is_whitespace() || matches!(c, ':' | '-' | ',' | '.' | ';' | '*'))
        .trim_end()
        .to_owned();
    Some((verdict, reason))
}

/// Sends each pair through the screening prompt. Failures keep the pair and
/// flag it as unscreened.
pub fn screen_pairs(
    pairs: &[ReportPair],
    backend: &dyn ChatBackend,
    template: &PromptTemplate,
    params: &JudgeParams,
) -> Result<ScreenOutcome, CorpusError> {
    if template.stage != Stage::Screen {
        return Err(CorpusError::InvalidSpec(format!(
            "screen template has stage `{}`",
            template.stage.as_str()
        )));
    }
    template.validate().map_err(|e| CorpusError::InvalidSpec(e.to_string()))?;

    let decisions = par::map_bounded(pairs, params.concurrency, |pair| {
        let decide = |verdict, reason: String| ScreenDecision {
            pair_id: pair.pair_id.clone(),
            verdict,
            reason,
        };
        let bindings = BTreeMap::from([("reference", pair.reference.text.as_str()), ("candidate", pair.candidate.text.as_str())]);
        let user = match template.render(&bindings) {
            Ok(u) => u,
            Err(e) => return decide(Verdict::Unscreened, e.to_string()),
        };
        let mut req = ChatRequest::new(&params.model, vec![Message::system(SCREEN_SYSTEM), Message::user(user)]);
        req.temperature = params.temperature;
        req.max_tokens = params.max_tokens;
        match backend.complete(&req) {
            Ok(resp) => match parse_verdict(&resp.content) {
                Some((v, reason)) => decide(v, reason),
                None => decide(Verdict::Unscreened, format!("unreadable verdict: {}", resp.content.trim())),
            },
            Err(e) => decide(Verdict::Unscreened, e.to_string()),
        }
    });

    let kept = pairs
        .iter()
        .zip(&decisions)
        .filter(|(_, d)| d.verdict != Verdict::Reject)
        .map(|(p, _)| p.clone())
        .collect();
    let count = |v| decisions.iter().filter(|d| d.verdict == v).count();
    Ok(ScreenOutcome {
        kept,
        rejected: count(Verdict::Reject),
        unscreened: count(Verdict::Unscreened),
        decisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendError, ChatResponse, FnBackend};
    use crate::types::{Provenance, Report};

    fn pairs(n: usize) -> Vec<ReportPair> {
        (0..n)
            .map(|i| ReportPair {
                pair_id: format!("p{i}"),
                reference: Report::new(format!("a{i}"), format!("No effusion {i}.")),
                candidate: Report::new(format!("b{i}"), format!("Small effusion {i}.")),
                provenance: Provenance::Random,
            })
            .collect()
    }

    fn reply(text: &str) -> Result<ChatResponse, BackendError> {
        Ok(ChatResponse {
            content: text.to_owned(),
            model_id: "m".into(),
            prompt_tokens: 0,
            completion_tokens: 0,
            latency_ms: 0,
        })
    }

    fn run(backend: &dyn ChatBackend, n: usize) -> ScreenOutcome {
        screen_pairs(&pairs(n), backend, &screen_template("v1").unwrap(), &JudgeParams::default()).unwrap()
    }

    #[test]
    fn verdict_parsing() {
        assert_eq!(parse_verdict("KEEP"), Some((Verdict::Keep, String::new())));
        assert_eq!(parse_verdict("  yes, looks fine"), Some((Verdict::Keep, "looks fine".into())));
        assert_eq!(
            parse_verdict("**Reject**: report B is truncated."),
            Some((Verdict::Reject, "report B is truncated.".into()))
        );
        assert_eq!(parse_verdict("No - garbled text"), Some((Verdict::Reject, "garbled text".into())));
        assert_eq!(parse_verdict("Keeping it"), None);
        assert_eq!(parse_verdict(""), None);
    }

    #[test]
    fn all_kept() {
        let out = run(&FnBackend(|_: &ChatRequest| reply("KEEP")), 3);
        assert_eq!(out.kept, pairs(3));
        assert_eq!((out.rejected, out.unscreened), (0, 0));
    }

    #[test]
    fn one_rejected_with_reason() {
        let b = FnBackend(|r: &ChatRequest| {
            if r.messages[1].content.contains("No effusion 1.") {
                reply("REJECT: candidate looks truncated")
            } else {
                reply("keep")
            }
        });
        let out = run(&b, 3);
        assert_eq!(out.kept.len(), 2);
        assert_eq!(out.rejected, 1);
        assert_eq!(out.decisions[1].verdict, Verdict::Reject);
        assert_eq!(out.decisions[1].reason, "candidate looks truncated");
        assert!(out.kept.iter().all(|p| p.pair_id != "p1"));
    }

    #[test]
    fn backend_failure_fails_open() {
        let b = FnBackend(|r: &ChatRequest| {
            if r.messages[1].content.contains("No effusion 2.") {
                Err(BackendError::Unreachable("down".into()))
            } else {
                reply("KEEP")
            }
        });
        let out = run(&b, 3);
        assert_eq!(out.kept.len(), 3);
        assert_eq!(out.unscreened, 1);
        assert_eq!(out.decisions[2].verdict, Verdict::Unscreened);
    }

    #[test]
    fn wrong_stage_template_rejected() {
        let t = PromptTemplate::new(Stage::Single, "v1", "{{reference}} {{candidate}}").unwrap();
        let b = FnBackend(|_: &ChatRequest| reply("KEEP"));
        assert!(screen_pairs(&pairs(1), &b, &t, &JudgeParams::default()).is_err());
    }
}
