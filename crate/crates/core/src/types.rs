//! Domain types shared by every other module: reports, the six-category
//! clinical error taxonomy, judgments and rater annotations.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A single radiology report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl Report {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            meta: BTreeMap::new(),
        }
    }

    /// Checks the id/text invariants.
    pub fn is_valid(&self) -> bool {
        !self.id.is_empty() && !self.text.trim().is_empty()
    }
}

/// Where a report pair came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    BleuMatched,
    Random,
    User,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::BleuMatched => "bleu_matched",
            Provenance::Random => "random",
            Provenance::User => "user",
        }
    }
}

/// A (reference, candidate) pair to be judged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportPair {
    pub pair_id: String,
    pub reference: Report,
    pub candidate: Report,
    pub provenance: Provenance,
}

/// The closed set of clinical error categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    FalsePredictionOfFinding,
    OmissionOfFinding,
    IncorrectLocationOfFinding,
    IncorrectSeverityOfFinding,
    SpuriousComparison,
    OmittedComparison,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 6] = [
        ErrorCategory::FalsePredictionOfFinding,
        ErrorCategory::OmissionOfFinding,
        ErrorCategory::IncorrectLocationOfFinding,
        ErrorCategory::IncorrectSeverityOfFinding,
        ErrorCategory::SpuriousComparison,
        ErrorCategory::OmittedComparison,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Stable machine name used on disk.
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::FalsePredictionOfFinding => "false_prediction_of_finding",
            ErrorCategory::OmissionOfFinding => "omission_of_finding",
            ErrorCategory::IncorrectLocationOfFinding => "incorrect_location_of_finding",
            ErrorCategory::IncorrectSeverityOfFinding => "incorrect_severity_of_finding",
            ErrorCategory::SpuriousComparison => "spurious_comparison",
            ErrorCategory::OmittedComparison => "omitted_comparison",
        }
    }

    /// Human-readable label, as used in prompts.
    pub fn label(self) -> &'static str {
        match self {
            ErrorCategory::FalsePredictionOfFinding => "False prediction of finding",
            ErrorCategory::OmissionOfFinding => "Omission of finding",
            ErrorCategory::IncorrectLocationOfFinding => "Incorrect location/position of finding",
            ErrorCategory::IncorrectSeverityOfFinding => "Incorrect severity of finding",
            ErrorCategory::SpuriousComparison => {
                "Mention of comparison that is not present in the reference impression"
            }
            ErrorCategory::OmittedComparison => {
                "Omission of comparison describing a change from a previous study"
            }
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == id)
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Significance {
    ClinicallySignificant,
    ClinicallyInsignificant,
}

impl Significance {
    pub const ALL: [Significance; 2] = [
        Significance::ClinicallySignificant,
        Significance::ClinicallyInsignificant,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Significance::ClinicallySignificant => "clinically_significant",
            Significance::ClinicallyInsignificant => "clinically_insignificant",
        }
    }
}

impl fmt::Display for Significance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One discrepancy found by a judge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorItem {
    pub category: ErrorCategory,
    pub significance: Significance,
    #[serde(default)]
    pub description: String,
}

impl ErrorItem {
    pub fn new(category: ErrorCategory, significance: Significance, description: impl Into<String>) -> Self {
        Self {
            category,
            significance,
            description: description.into(),
        }
    }
}

/// Category × significance error counts. Rows follow [`ErrorCategory::ALL`],
/// columns follow [`Significance::ALL`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CountMatrix(pub [[u32; 2]; 6]);

impl CountMatrix {
    pub fn get(&self, category: ErrorCategory, significance: Significance) -> u32 {
        self.0[category.index()][significance.index()]
    }

    pub fn set(&mut self, category: ErrorCategory, significance: Significance, value: u32) {
        self.0[category.index()][significance.index()] = value;
    }

    pub fn increment(&mut self, category: ErrorCategory, significance: Significance) {
        self.0[category.index()][significance.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().map(|&c| u64::from(c)).sum()
    }

    pub fn significant(&self) -> u64 {
        self.column_sum(Significance::ClinicallySignificant)
    }

    pub fn column_sum(&self, significance: Significance) -> u64 {
        self.0.iter().map(|row| u64::from(row[significance.index()])).sum()
    }

    /// Iterates `(category, significance, count)` in canonical order.
    pub fn cells(&self) -> impl Iterator<Item = (ErrorCategory, Significance, u32)> + '_ {
        ErrorCategory::ALL.into_iter().flat_map(move |c| {
            Significance::ALL
                .into_iter()
                .map(move |s| (c, s, self.get(c, s)))
        })
    }

    /// Canonical column names, `<category>_<significance>`.
    pub fn column_names() -> Vec<String> {
        ErrorCategory::ALL
            .into_iter()
            .flat_map(|c| Significance::ALL.into_iter().map(move |s| format!("{c}_{s}")))
            .collect()
    }
}

/// Histogram of an error list into a count matrix.
pub fn counts_from_errors(errors: &[ErrorItem]) -> CountMatrix {
    let mut m = CountMatrix::default();
    for e in errors {
        m.increment(e.category, e.significance);
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeStrategy {
    SingleStage,
    TwoStage,
}

impl JudgeStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            JudgeStrategy::SingleStage => "single_stage",
            JudgeStrategy::TwoStage => "two_stage",
        }
    }
}

impl std::str::FromStr for JudgeStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single_stage" | "single" => Ok(JudgeStrategy::SingleStage),
            "two_stage" | "two" => Ok(JudgeStrategy::TwoStage),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

/// Decoding parameters used to produce a judgment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

/// Structured judge output for one report pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub pair_id: String,
    pub model_id: String,
    pub prompt_version: String,
    pub strategy: JudgeStrategy,
    pub errors: Vec<ErrorItem>,
    pub counts: CountMatrix,
    pub total_count: u64,
    pub significant_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_stage1: Option<String>,
    pub raw_final: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoding: Option<DecodingParams>,
}

impl Judgment {
    /// Builds a judgment whose counts and totals are derived from `errors`.
    pub fn from_errors(
        pair_id: impl Into<String>,
        model_id: impl Into<String>,
        prompt_version: impl Into<String>,
        strategy: JudgeStrategy,
        errors: Vec<ErrorItem>,
        raw_final: impl Into<String>,
    ) -> Self {
        let counts = counts_from_errors(&errors);
        Self {
            pair_id: pair_id.into(),
            model_id: model_id.into(),
            prompt_version: prompt_version.into(),
            strategy,
            total_count: counts.total(),
            significant_count: counts.significant(),
            counts,
            errors,
            raw_stage1: None,
            raw_final: raw_final.into(),
            decoding: None,
        }
    }
}

/// A broken [`Judgment`] invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyPairId,
    TotalMismatch { declared: u64, matrix: u64 },
    SignificantMismatch { declared: u64, matrix: u64 },
    HistogramMismatch,
    MissingStageOne,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyPairId => f.write_str("empty pair id"),
            Violation::TotalMismatch { .. } => f.write_str("total mismatch"),
            Violation::SignificantMismatch { .. } => f.write_str("significant mismatch"),
            Violation::HistogramMismatch => f.write_str("histogram mismatch"),
            Violation::MissingStageOne => f.write_str("missing stage-1 text"),
        }
    }
}

/// Returns every invariant violation of `j`; an empty list means valid.
pub fn validate_judgment(j: &Judgment) -> Vec<Violation> {
    let mut out = Vec::new();
    if j.pair_id.is_empty() {
        out.push(Violation::EmptyPairId);
    }
    let total = j.counts.total();
    if j.total_count != total {
        out.push(Violation::TotalMismatch {
            declared: j.total_count,
            matrix: total,
        });
    }
    let significant = j.counts.significant();
    if j.significant_count != significant {
        out.push(Violation::SignificantMismatch {
            declared: j.significant_count,
            matrix: significant,
        });
    }
    if !j.errors.is_empty() && counts_from_errors(&j.errors) != j.counts {
        out.push(Violation::HistogramMismatch);
    }
    if j.strategy == JudgeStrategy::TwoStage && j.raw_stage1.is_none() {
        out.push(Violation::MissingStageOne);
    }
    out
}

/// One human rater's error counts for one pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaterAnnotation {
    pub pair_id: String,
    pub rater_id: String,
    pub counts: CountMatrix,
}

impl RaterAnnotation {
    pub fn total_count(&self) -> u64 {
        self.counts.total()
    }

    pub fn significant_count(&self) -> u64 {
        self.counts.significant()
    }
}
