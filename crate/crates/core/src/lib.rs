//! Evaluate candidate radiology reports against references with an LLM
//! judge, check the judge against human raters, and curate paired-report
//! datasets.
//!
//! ```no_run
//! use radjudge::backend::CachedBackend;
//! use radjudge::judge::{judge_pair, JudgeParams, PromptSet};
//! use radjudge::types::{JudgeStrategy, Provenance, Report, ReportPair};
//!
//! let pair = ReportPair {
//!     pair_id: "p1".into(),
//!     reference: Report::new("r1", "No pleural effusion."),
//!     candidate: Report::new("c1", "Small left pleural effusion."),
//!     provenance: Provenance::User,
//! };
//! let backend = CachedBackend::replay("fixtures/cache");
//! let prompts = PromptSet::builtin("v1").unwrap();
//! let out = judge_pair(&pair, &backend, JudgeStrategy::TwoStage, &prompts, &JudgeParams::default()).unwrap();
//! println!("{} errors", out.judgment.total_count);
//! ```

pub mod backend;
pub mod corpus;
pub mod io;
pub mod judge;
pub mod metrics;
pub mod par;
pub mod respparse;
pub mod types;
