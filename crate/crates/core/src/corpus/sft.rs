use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::io::{read_jsonl, to_jsonl, write_atomic};
use crate::judge::{system_message, PromptSet};
use crate::respparse::{canonical_completion, parse_judgment, JudgmentMeta};
use crate::types::{validate_judgment, Judgment, Provenance, ReportPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SftFormat {
    #[default]
    PromptCompletionJsonl,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftMeta {
    pub pair_id: String,
    pub provenance: Provenance,
    pub model_id: String,
    pub prompt_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub system: String,
    pub prompt: String,
    pub completion: String,
    pub meta: SftMeta,
}

/// One training example: the single-stage judge prompt for `pair` and the
/// canonical JSON of `judgment` as the completion.
pub fn build_sft_record(pair: &ReportPair, judgment: &Judgment, prompts: &PromptSet) -> Result<SftRecord, CorpusError> {
    let invalid = |reason: String| CorpusError::InvalidJudgment {
        pair_id: pair.pair_id.clone(),
        reason,
    };
    if judgment.pair_id != pair.pair_id {
        return Err(invalid(format!("judgment belongs to pair `{}`", judgment.pair_id)));
    }
    let violations = validate_judgment(judgment);
    if !violations.is_empty() {
        let v: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(invalid(v.join("; ")));
    }
    let prompt = prompts
        .single
        .render(&BTreeMap::from([
            ("reference", pair.reference.text.as_str()),
            ("candidate", pair.candidate.text.as_str()),
        ]))
        .map_err(|e| invalid(e.to_string()))?;
    let completion = canonical_completion(judgment);

    let meta = JudgmentMeta {
        pair_id: &judgment.pair_id,
        model_id: &judgment.model_id,
        prompt_version: &judgment.prompt_version,
        strategy: judgment.strategy,
    };
    let reparsed = parse_judgment(&completion, meta).map_err(|e| invalid(format!("completion does not re-parse: {e}")))?;
    if reparsed.judgment.counts != judgment.counts || !reparsed.trace.applied_rules.is_empty() {
        return Err(invalid("completion does not round-trip".into()));
    }

    Ok(SftRecord {
        system: system_message(),
        prompt,
        completion,
        meta: SftMeta {
            pair_id: pair.pair_id.clone(),
            provenance: pair.provenance,
            model_id: judgment.model_id.clone(),
            prompt_version: judgment.prompt_version.clone(),
        },
    })
}

/// Writes one record per line. Every record is built and checked before the
/// file is touched, so an invalid judgment leaves nothing behind.
pub fn export_sft(
    items: &[(ReportPair, Judgment)],
    path: &Path,
    format: SftFormat,
    prompts: &PromptSet,
) -> Result<usize, CorpusError> {
    let SftFormat::PromptCompletionJsonl = format;
    let records = items
        .iter()
        .map(|(p, j)| build_sft_record(p, j, prompts))
        .collect::<Result<Vec<_>, _>>()?;
    write_sft_records(&records, path)?;
    Ok(records.len())
}

pub fn write_sft_records(records: &[SftRecord], path: &Path) -> Result<(), CorpusError> {
    Ok(write_atomic(path, &to_jsonl(records))?)
}

pub fn load_sft(path: &Path) -> Result<Vec<SftRecord>, CorpusError> {
    Ok(read_jsonl(path)?)
}
