//! Deterministic text and rank statistics.

mod agreement;
mod bleu;
mod kendall;
mod tokenize;

pub use agreement::{
    bland_altman, error_distribution, leave_one_out_agreement, pairwise_agreement, rater_means,
    BlandAltmanResult, ErrorDistribution, HistogramBin, PairwiseTau, ScoreMode,
};
pub use bleu::{bleu, bleu_tokens, BleuConfig, NgramProfile, Smoothing, EPSILON};
pub use kendall::{kendall_tau_b, AgreementResult};
pub use tokenize::{tokenize, TokenizerConfig};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("reference has no tokens")]
    EmptyReference,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("degenerate input: every value in {which} is tied")]
    DegenerateInput { which: &'static str },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("incomplete rater grid; missing {} cell(s): {}", missing.len(), format_missing(missing))]
    IncompleteGrid { missing: Vec<(String, String)> },
    #[error("duplicate annotation for rater `{rater_id}` on pair `{pair_id}`")]
    DuplicateAnnotation { rater_id: String, pair_id: String },
    #[error("key sets differ; only in judge: {only_left:?}, only in raters: {only_right:?}")]
    KeyMismatch {
        only_left: Vec<String>,
        only_right: Vec<String>,
    },
    #[error("invalid BLEU config: {0}")]
    InvalidConfig(String),
    #[error("rater `{rater_id}`: {source}")]
    Rater {
        rater_id: String,
        #[source]
        source: Box<MetricsError>,
    },
}

fn format_missing(missing: &[(String, String)]) -> String {
    missing
        .iter()
        .map(|(r, p)| format!("{r}/{p}"))
        .collect::<Vec<_>>()
        .join(", ")
}
