//! Extraction, repair and validation of structured judge output.
//!
//! Judges are asked for a JSON object with an `errors` list of
//! `{category, significance, description}` items and a `total_count`.
//! Real model output wraps that object in prose or code fences, uses
//! single quotes, drops keys or gets cut off; this module recovers what it
//! can and reports exactly what it changed.

mod category;
mod extract;
mod repair;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub use category::{normalize_category, normalize_label, normalize_significance, SynonymTable};
pub use extract::extract_candidate_object;
pub use repair::{repair, RepairRule, RepairTrace};

use crate::types::{ErrorItem, JudgeStrategy, Judgment, Significance};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RespParseError {
    #[error("no JSON object found")]
    NoObjectFound,
    #[error("unmappable category label `{0}`")]
    Unmappable(String),
    #[error("invalid synonym table: {0}")]
    SynonymTable(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum ParseFailure {
    NoObject,
    InvalidJson(String),
    Schema(String),
}

/// Judge output that could not be turned into a [`Judgment`].
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("could not parse judge output: {reason:?}")]
pub struct ParseError {
    pub reason: ParseFailure,
    pub raw: String,
    pub trace: Option<RepairTrace>,
}

/// Identifies the judgment being parsed.
#[derive(Debug, Clone, Copy)]
pub struct JudgmentMeta<'a> {
    pub pair_id: &'a str,
    pub model_id: &'a str,
    pub prompt_version: &'a str,
    pub strategy: JudgeStrategy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedJudgment {
    pub judgment: Judgment,
    pub trace: RepairTrace,
    pub warnings: Vec<String>,
}

fn decode_object(candidate: &str) -> Result<(Value, RepairTrace), (ParseFailure, Option<RepairTrace>)> {
    if let Ok(v) = serde_json::from_str::<Value>(candidate) {
        return Ok((v, RepairTrace::clean(candidate)));
    }
    let (repaired, trace) = repair(candidate);
    match serde_json::from_str::<Value>(&repaired) {
        Ok(v) => Ok((v, trace)),
        Err(e) => Err((ParseFailure::InvalidJson(e.to_string()), Some(trace))),
    }
}

fn label_of(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn decode_errors(obj: &Map<String, Value>, table: &SynonymTable, warnings: &mut Vec<String>) -> Result<Vec<ErrorItem>, ParseFailure> {
    let items = match obj.get("errors") {
        Some(Value::Array(items)) => items,
        Some(Value::Null) | None => return Err(ParseFailure::Schema("missing `errors` list".into())),
        Some(_) => return Err(ParseFailure::Schema("`errors` is not a list".into())),
    };
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let Some(fields) = item.as_object() else {
            warnings.push(format!("errors[{i}]: not an object, dropped"));
            continue;
        };
        let Some(label) = fields.get("category").and_then(label_of) else {
            warnings.push(format!("errors[{i}]: missing category, dropped"));
            continue;
        };
        let category = match table.lookup(&label) {
            Ok(c) => c,
            Err(_) => {
                warnings.push(format!("errors[{i}]: unmappable category `{label}`, dropped"));
                continue;
            }
        };
        let significance = match fields.get("significance").and_then(label_of) {
            Some(s) => match normalize_significance(&s) {
                Some(sig) => sig,
                None => {
                    warnings.push(format!(
                        "errors[{i}]: unrecognized significance `{s}`, treated as clinically_significant"
                    ));
                    Significance::ClinicallySignificant
                }
            },
            None => {
                warnings.push(format!("errors[{i}]: missing significance, treated as clinically_significant"));
                Significance::ClinicallySignificant
            }
        };
        let description = match fields.get("description") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Null) | None => String::new(),
            Some(other) => other.to_string(),
        };
        out.push(ErrorItem {
            category,
            significance,
            description,
        });
    }
    Ok(out)
}

/// Parses judge output into a [`Judgment`] using the bundled synonym table.
#[allow(clippy::result_large_err)]
pub fn parse_judgment(text: &str, meta: JudgmentMeta<'_>) -> Result<ParsedJudgment, ParseError> {
    parse_judgment_with(text, meta, SynonymTable::builtin())
}

/// Extract, parse, repair and re-parse `text`. Counts are always recomputed
/// from the decoded error list; a missing or disagreeing `total_count` only
/// produces a warning.
#[allow(clippy::result_large_err)]
pub fn parse_judgment_with(text: &str, meta: JudgmentMeta<'_>, table: &SynonymTable) -> Result<ParsedJudgment, ParseError> {
    let fail = |reason, trace| ParseError {
        reason,
        raw: text.to_owned(),
        trace,
    };
    let candidate = match extract_candidate_object(text) {
        Ok(c) => c,
        // possibly truncated: everything from the first brace
        Err(_) => match text.find('{') {
            Some(i) => &text[i..],
            None => return Err(fail(ParseFailure::NoObject, None)),
        },
    };
    let (value, trace) = decode_object(candidate).map_err(|(reason, trace)| fail(reason, trace))?;
    let Some(obj) = value.as_object() else {
        return Err(fail(ParseFailure::Schema("top level is not an object".into()), Some(trace)));
    };
    let mut warnings = Vec::new();
    let errors = decode_errors(obj, table, &mut warnings).map_err(|r| fail(r, Some(trace.clone())))?;
    let listed = errors.len() as u64;
    match obj.get("total_count") {
        None | Some(Value::Null) => warnings.push(format!("total_count missing; derived {listed} from errors list")),
        Some(v) => match v.as_u64().or_else(|| v.as_f64().filter(|f| f.fract() == 0.0 && *f >= 0.0).map(|f| f as u64)) {
            Some(declared) if declared == listed => {}
            Some(declared) => warnings.push(format!(
                "declared total_count {declared} disagrees with {listed} listed errors; using the list"
            )),
            None => warnings.push(format!("total_count `{v}` is not a count; derived {listed} from errors list")),
        },
    }
    let judgment = Judgment::from_errors(meta.pair_id, meta.model_id, meta.prompt_version, meta.strategy, errors, text);
    Ok(ParsedJudgment {
        judgment,
        trace,
        warnings,
    })
}

#[derive(Serialize)]
struct Completion<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<&'a str>,
    errors: &'a [ErrorItem],
    total_count: u64,
    significant_count: u64,
}

/// Canonical JSON form of a judgment's structured output; parses back to
/// the same errors and counts with an empty trace.
pub fn canonical_completion(j: &Judgment) -> String {
    serde_json::to_string(&Completion {
        comparison: j.raw_stage1.as_deref(),
        errors: &j.errors,
        total_count: j.total_count,
        significant_count: j.significant_count,
    })
    .expect("completion serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{validate_judgment, ErrorCategory};

    fn meta() -> JudgmentMeta<'static> {
        JudgmentMeta {
            pair_id: "p1",
            model_id: "m",
            prompt_version: "v1",
            strategy: JudgeStrategy::SingleStage,
        }
    }

    const ONE: &str = r#"{"errors": [{"category": "Omission of finding", "significance": "clinically significant", "description": "lateral view missing"}], "total_count": 1}"#;

    #[test]
    fn well_formed() {
        let p = parse_judgment(ONE, meta()).unwrap();
        assert_eq!(p.judgment.total_count, 1);
        assert_eq!(p.judgment.errors[0].category, ErrorCategory::OmissionOfFinding);
        assert!(p.trace.applied_rules.is_empty());
        assert!(p.warnings.is_empty());
        assert_eq!(p.judgment.raw_final, ONE);
        assert!(validate_judgment(&p.judgment).is_empty());
    }

    #[test]
    fn missing_total_count_is_derived() {
        let text = ONE.replace(r#", "total_count": 1"#, "");
        let p = parse_judgment(&text, meta()).unwrap();
        let full = parse_judgment(ONE, meta()).unwrap();
        assert_eq!(p.judgment.errors, full.judgment.errors);
        assert_eq!(p.judgment.counts, full.judgment.counts);
        assert_eq!(p.judgment.total_count, 1);
        assert!(p.warnings[0].contains("total_count missing"));
    }

    #[test]
    fn errors_list_wins() {
        let text = r#"{"errors": [
            {"category": "omission_of_finding", "significance": "clinically_significant"},
            {"category": "false prediction", "significance": "insignificant"},
            {"category": "incorrect severity", "significance": "significant"}
        ], "total_count": 5}"#;
        let p = parse_judgment(text, meta()).unwrap();
        assert_eq!(p.judgment.total_count, 3);
        assert_eq!(p.judgment.significant_count, 2);
        assert!(p.warnings.iter().any(|w| w.contains("disagrees")));
    }

    #[test]
    fn unknown_category_dropped_not_fatal() {
        let text = r#"{"errors": [{"category": "hallucinated finding", "significance": "significant"}, {"category": "omission", "significance": "significant"}]}"#;
        let p = parse_judgment(text, meta()).unwrap();
        assert_eq!(p.judgment.total_count, 1);
        assert!(p.warnings.iter().any(|w| w.contains("hallucinated finding")));
    }

    #[test]
    fn repaired_single_quotes_in_prose() {
        let text = "Sure! Here's the result:\n{'errors': [{'category': 'Omission of finding', 'significance': 'clinically significant'}], 'total_count': 1}\nHope this helps.";
        let p = parse_judgment(text, meta()).unwrap();
        assert_eq!(p.trace.applied_rules, vec![RepairRule::R1]);
        assert_eq!(p.judgment.total_count, 1);
    }

    #[test]
    fn truncated_output_is_closed() {
        let text = r#"{"errors": [{"category": "omission", "significance": "significant", "description": "lateral vi"#;
        let p = parse_judgment(text, meta()).unwrap();
        assert_eq!(p.trace.applied_rules, vec![RepairRule::R5]);
        assert_eq!(p.judgment.total_count, 1);
    }

    #[test]
    fn garbage_is_typed_error() {
        let e = parse_judgment("I cannot help with that.", meta()).unwrap_err();
        assert_eq!(e.reason, ParseFailure::NoObject);
        assert_eq!(e.raw, "I cannot help with that.");
        let e = parse_judgment("{\"total_count\": 2}", meta()).unwrap_err();
        assert!(matches!(e.reason, ParseFailure::Schema(_)));
    }

    #[test]
    fn canonical_round_trip() {
        let p = parse_judgment(ONE, meta()).unwrap();
        let mut j = p.judgment;
        j.raw_stage1 = Some("comparison text".into());
        let text = canonical_completion(&j);
        let back = parse_judgment(&text, meta()).unwrap();
        assert!(back.trace.applied_rules.is_empty());
        assert!(back.warnings.is_empty());
        assert_eq!(back.judgment.errors, j.errors);
        assert_eq!(back.judgment.counts, j.counts);
    }
}
