//! Report ingestion, bigram indexing, pairing, screening and SFT export.

mod index;
mod pairing;
mod screen;
mod sft;
pub mod synthetic;

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use indexmap::IndexMap;
use serde::Deserialize;
use thiserror::Error;

use crate::io::IoError;
use crate::types::Report;

pub use index::{build_bigram_index, top_bleu_match, BigramIndex, PairScorer, PersistedIndex};
pub use pairing::{make_pairs, make_pairs_with_index, PairingMode, PairingSpec, DEFAULT_PRUNE_CANDIDATES};
pub use screen::{parse_verdict, screen_pairs, screen_template, ScreenDecision, ScreenOutcome, Verdict};
pub use sft::{build_sft_record, export_sft, load_sft, write_sft_records, SftFormat, SftMeta, SftRecord};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}:{line}: {reason}")]
    MalformedRecord { path: String, line: usize, reason: String },
    #[error("corpus is empty")]
    Empty,
    #[error("report `{0}` is not in the corpus")]
    UnknownReport(String),
    #[error("no candidate match for `{0}`: corpus has a single report")]
    NoCandidate(String),
    #[error("requested {requested} pairs but only {available} distinct pairs are available")]
    CountTooLarge { requested: usize, available: usize },
    #[error("invalid pairing spec: {0}")]
    InvalidSpec(String),
    #[error("invalid judgment for pair `{pair_id}`: {reason}")]
    InvalidJudgment { pair_id: String, reason: String },
    #[error("invalid index: {0}")]
    InvalidIndex(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Jsonl,
    Csv,
    DirectoryOfText,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(ReportFormat::Jsonl),
            "csv" => Ok(ReportFormat::Csv),
            "directory_of_text" | "dir" => Ok(ReportFormat::DirectoryOfText),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

/// Reports keyed by id, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    reports: IndexMap<String, Report>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fails with the report back if its id is already present.
    pub fn insert(&mut self, report: Report) -> Result<(), Report> {
        if self.reports.contains_key(&report.id) {
            return Err(report);
        }
        self.reports.insert(report.id.clone(), report);
        Ok(())
    }

    pub fn from_reports(reports: impl IntoIterator<Item = Report>) -> Result<Self, CorpusError> {
        let mut c = Corpus::new();
        for (i, r) in reports.into_iter().enumerate() {
            c.insert(r).map_err(|r| CorpusError::MalformedRecord {
                path: "<memory>".into(),
                line: i + 1,
                reason: format!("duplicate id `{}`", r.id),
            })?;
        }
        Ok(c)
    }

    pub fn get(&self, id: &str) -> Option<&Report> {
        self.reports.get(id)
    }

    pub fn get_index(&self, i: usize) -> Option<&Report> {
        self.reports.get_index(i).map(|(_, r)| r)
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Report> {
        self.reports.values()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    /// Records dropped because their text was blank.
    pub skipped: usize,
}

#[derive(Deserialize)]
struct Row {
    id: Option<serde_json::Value>,
    text: Option<String>,
    #[serde(default)]
    meta: std::collections::BTreeMap<String, String>,
}

fn id_string(v: serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

struct Loader<'p> {
    path: &'p Path,
    corpus: Corpus,
    skipped: usize,
}

impl Loader<'_> {
    fn malformed(&self, line: usize, reason: impl Into<String>) -> CorpusError {
        CorpusError::MalformedRecord {
            path: self.path.display().to_string(),
            line,
            reason: reason.into(),
        }
    }

    fn push(&mut self, line: usize, id: String, text: String, meta: std::collections::BTreeMap<String, String>) -> Result<(), CorpusError> {
        if id.trim().is_empty() {
            return Err(self.malformed(line, "empty id"));
        }
        if text.trim().is_empty() {
            self.skipped += 1;
            return Ok(());
        }
        let report = Report { id, text, meta };
        self.corpus
            .insert(report)
            .map_err(|r| self.malformed(line, format!("duplicate id `{}`", r.id)))
    }
}

/// Loads reports from a JSONL file, a CSV file with `id,text` columns, or a
/// directory of `.txt` files (id = file stem).
pub fn load_reports(path: &Path, format: ReportFormat) -> Result<LoadedCorpus, CorpusError> {
    let mut l = Loader {
        path,
        corpus: Corpus::new(),
        skipped: 0,
    };
    match format {
        ReportFormat::Jsonl => {
            let f = fs::File::open(path).map_err(|e| IoError::io(path, e))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| IoError::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: Row = serde_json::from_str(&line).map_err(|e| l.malformed(i + 1, e.to_string()))?;
                let id = row.id.and_then(id_string).ok_or_else(|| l.malformed(i + 1, "missing `id`"))?;
                let text = row.text.ok_or_else(|| l.malformed(i + 1, "missing `text`"))?;
                l.push(i + 1, id, text, row.meta)?;
            }
        }
        ReportFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .flexible(false)
                .from_path(path)
                .map_err(|e| l.malformed(0, e.to_string()))?;
            let headers = rdr.headers().map_err(|e| l.malformed(1, e.to_string()))?.clone();
            let col = |name: &str| headers.iter().position(|h| h.trim() == name);
            let (Some(id_col), Some(text_col)) = (col("id"), col("text")) else {
                return Err(l.malformed(1, "header must contain `id` and `text`"));
            };
            for rec in rdr.records() {
                let rec = rec.map_err(|e| {
                    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                    l.malformed(line, e.to_string())
                })?;
                let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
                let id = rec.get(id_col).unwrap_or("").to_owned();
                let text = rec.get(text_col).unwrap_or("").to_owned();
                l.push(line, id, text, Default::default())?;
            }
        }
        ReportFormat::DirectoryOfText => {
            let mut files: Vec<_> = fs::read_dir(path)
                .map_err(|e| IoError::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
                .collect();
            files.sort();
            for (i, p) in files.iter().enumerate() {
                let text = fs::read_to_string(p).map_err(|e| IoError::io(p, e))?;
                let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                let mut meta = std::collections::BTreeMap::new();
                meta.insert(
                    "source".to_owned(),
                    p.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                );
                l.push(i + 1, id, text, meta)?;
            }
        }
    }
    Ok(LoadedCorpus {
        corpus: l.corpus,
        skipped: l.skipped,
    })
}
