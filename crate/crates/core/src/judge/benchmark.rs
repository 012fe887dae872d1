use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{judge_pair, score, JudgeError, JudgeOutcome, JudgeParams, PromptSet};
use crate::backend::ChatBackend;
use crate::metrics::{error_distribution, kendall_tau_b, rater_means, AgreementResult, ErrorDistribution, ScoreMode};
use crate::par::map_bounded;
use crate::types::{JudgeStrategy, RaterAnnotation, ReportPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerPairRow {
    pub pair_id: String,
    pub judge_total: u64,
    pub rater_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRow {
    pub pair_id: String,
    pub error: String,
}

/// Judge-vs-rater concordance over the annotated pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub model_id: String,
    pub strategy: JudgeStrategy,
    pub prompt_version: String,
    pub score_mode: ScoreMode,
    pub tau_vs_raters: AgreementResult,
    /// Sorted by pair id; only successfully judged pairs.
    pub per_pair: Vec<PerPairRow>,
    pub error_dist: ErrorDistribution,
    pub failures: Vec<FailureRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRun {
    pub report: BenchmarkReport,
    /// Successful outcomes, sorted by pair id.
    pub outcomes: Vec<JudgeOutcome>,
}

/// Judges every annotated pair (at most `params.concurrency` at a time) and
/// correlates judge scores with the per-pair rater mean. Pairs that fail
/// are listed in `failures` and left out of the statistics.
pub fn benchmark(
    pairs: &[ReportPair],
    annotations: &[RaterAnnotation],
    backend: &dyn ChatBackend,
    strategy: JudgeStrategy,
    prompts: &PromptSet,
    params: &JudgeParams,
    mode: ScoreMode,
) -> Result<BenchmarkRun, JudgeError> {
    let mut by_id: BTreeMap<&str, &ReportPair> = BTreeMap::new();
    for p in pairs {
        if by_id.insert(&p.pair_id, p).is_some() {
            return Err(JudgeError::DuplicatePair(p.pair_id.clone()));
        }
    }
    let means = rater_means(annotations, mode);
    let unknown: Vec<String> = means
        .keys()
        .filter(|k| !by_id.contains_key(k.as_str()))
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if !unknown.is_empty() {
        return Err(JudgeError::UnknownPairs(unknown));
    }
    let todo: Vec<&ReportPair> = means.keys().map(|k| by_id[k.as_str()]).collect();

    let results = map_bounded(&todo, params.concurrency, |p| judge_pair(p, backend, strategy, prompts, params));

    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (pair, r) in todo.iter().zip(results) {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => failures.push(FailureRow {
                pair_id: pair.pair_id.clone(),
                error: e.to_string(),
            }),
        }
    }
    if outcomes.len() < 2 {
        return Err(JudgeError::TooFewPairs { got: outcomes.len() });
    }
    outcomes.sort_by(|a, b| a.judgment.pair_id.cmp(&b.judgment.pair_id));

    let per_pair: Vec<PerPairRow> = outcomes
        .iter()
        .map(|o| PerPairRow {
            pair_id: o.judgment.pair_id.clone(),
            judge_total: score(&o.judgment, mode),
            rater_mean: means[&o.judgment.pair_id],
        })
        .collect();
    let judge: Vec<f64> = per_pair.iter().map(|r| r.judge_total as f64).collect();
    let raters: Vec<f64> = per_pair.iter().map(|r| r.rater_mean).collect();
    let tau = kendall_tau_b(&judge, &raters)?;
    let judge_map: BTreeMap<String, u64> = per_pair.iter().map(|r| (r.pair_id.clone(), r.judge_total)).collect();
    let rater_map: BTreeMap<String, f64> = per_pair.iter().map(|r| (r.pair_id.clone(), r.rater_mean)).collect();
    let error_dist = error_distribution(&judge_map, &rater_map)?;

    Ok(BenchmarkRun {
        report: BenchmarkReport {
            model_id: params.model.clone(),
            strategy,
            prompt_version: prompts.version.clone(),
            score_mode: mode,
            tau_vs_raters: tau,
            per_pair,
            error_dist,
            failures,
        },
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendError, ChatRequest, ChatResponse, FnBackend};
    use crate::metrics::kendall_tau_b;
    use crate::types::{CountMatrix, ErrorCategory, Provenance, Report, Significance};

    fn pairs(n: usize) -> Vec<ReportPair> {
        (0..n)
            .map(|i| ReportPair {
                pair_id: format!("p{i:02}"),
                reference: Report::new(format!("r{i}"), format!("reference {i}")),
                candidate: Report::new(format!("c{i}"), format!("candidate {i} errors={}", i)),
                provenance: Provenance::User,
            })
            .collect()
    }

    fn annotations(means: &[(usize, [u32; 2])]) -> Vec<RaterAnnotation> {
        means
            .iter()
            .flat_map(|&(i, totals)| {
                totals.into_iter().enumerate().map(move |(r, t)| {
                    let mut counts = CountMatrix::default();
                    counts.set(ErrorCategory::OmissionOfFinding, Significance::ClinicallySignificant, t);
                    RaterAnnotation {
                        pair_id: format!("p{i:02}"),
                        rater_id: format!("r{r}"),
                        counts,
                    }
                })
            })
            .collect()
    }

    /// Replies with `totals[i]` omission errors, where `i` follows `errors=`
    /// in the candidate text. 99 means garbage, 98 an unreachable backend.
    fn scripted(totals: Vec<u32>) -> impl crate::backend::ChatBackend {
        FnBackend(move |r: &ChatRequest| {
            let user = &r.messages[1].content;
            let i: usize = user.split("errors=").nth(1).unwrap().chars().take_while(char::is_ascii_digit).collect::<String>().parse().unwrap();
            let n = totals[i];
            if n == 99 {
                return Ok(ChatResponse { content: "garbage".into(), model_id: "m".into(), prompt_tokens: 0, completion_tokens: 0, latency_ms: 0 });
            }
            if n == 98 {
                return Err(BackendError::Unreachable("down".into()));
            }
            let items: Vec<String> = (0..n)
                .map(|_| r#"{"category": "omission_of_finding", "significance": "clinically_significant"}"#.to_string())
                .collect();
            Ok(ChatResponse {
                content: format!(r#"{{"errors": [{}], "total_count": {n}}}"#, items.join(",")),
                model_id: "m".into(),
                prompt_tokens: 0,
                completion_tokens: 0,
                latency_ms: 0,
            })
        })
    }

    fn run(totals: Vec<u32>, anns: &[RaterAnnotation], n: usize) -> Result<BenchmarkRun, JudgeError> {
        benchmark(
            &pairs(n),
            anns,
            &scripted(totals),
            JudgeStrategy::SingleStage,
            &PromptSet::builtin("v1").unwrap(),
            &JudgeParams::default(),
            ScoreMode::Total,
        )
    }

    #[test]
    fn identical_totals_give_tau_one() {
        let totals: Vec<u32> = (0..10).map(|i| (i * 7 % 5) as u32).collect();
        let anns = annotations(&(0..10).map(|i| (i, [totals[i]; 2])).collect::<Vec<_>>());
        let r = run(totals, &anns, 10).unwrap().report;
        assert_eq!(r.tau_vs_raters.tau, 1.0);
        assert_eq!(r.per_pair.len(), 10);
        assert!(r.error_dist.diffs.iter().all(|d| d.1 == 0.0));
    }

    #[test]
    fn one_swap_tau() {
        // judge [0,1,2,3] vs rater means [0,2,1,3]
        let anns = annotations(&[(0, [0, 0]), (1, [2, 2]), (2, [1, 1]), (3, [3, 3])]);
        let r = run(vec![0, 1, 2, 3], &anns, 4).unwrap().report;
        assert!((r.tau_vs_raters.tau - 4.0 / 6.0).abs() < 1e-15);
        let direct = kendall_tau_b(
            &r.per_pair.iter().map(|p| p.judge_total as f64).collect::<Vec<_>>(),
            &r.per_pair.iter().map(|p| p.rater_mean).collect::<Vec<_>>(),
        )
        .unwrap();
        assert_eq!(direct, r.tau_vs_raters);
    }

    #[test]
    fn failures_are_listed_not_zeroed() {
        let anns = annotations(&[(0, [0, 1]), (1, [3, 2]), (2, [1, 1])]);
        let r = run(vec![0, 99, 2], &anns, 3).unwrap().report;
        assert_eq!(r.per_pair.len(), 2);
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.failures[0].pair_id, "p01");
    }

    #[test]
    fn too_few_successes() {
        let anns = annotations(&[(0, [0, 1]), (1, [3, 2]), (2, [1, 1])]);
        assert_eq!(run(vec![0, 99, 98], &anns, 3).unwrap_err(), JudgeError::TooFewPairs { got: 1 });
    }

    #[test]
    fn unknown_annotation_pair() {
        let mut anns = annotations(&[(0, [0, 1]), (1, [3, 2])]);
        anns[0].pair_id = "nope".into();
        assert_eq!(run(vec![0, 1], &anns, 2).unwrap_err(), JudgeError::UnknownPairs(vec!["nope".into()]));
    }

    #[test]
    fn unannotated_pairs_are_not_judged() {
        let anns = annotations(&[(0, [0, 1]), (2, [3, 2])]);
        let r = run(vec![0, 99, 3], &anns, 3).unwrap().report;
        assert_eq!(r.per_pair.iter().map(|p| p.pair_id.as_str()).collect::<Vec<_>>(), ["p00", "p02"]);
        assert!(r.failures.is_empty());
    }
}
