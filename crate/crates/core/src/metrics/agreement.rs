use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{kendall_tau_b, AgreementResult, MetricsError};
use crate::types::RaterAnnotation;

/// Which scalar is read off a count matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    #[default]
    Total,
    SignificantOnly,
}

impl ScoreMode {
    pub fn of(self, a: &RaterAnnotation) -> u64 {
        match self {
            ScoreMode::Total => a.total_count(),
            ScoreMode::SignificantOnly => a.significant_count(),
        }
    }
}

impl std::str::FromStr for ScoreMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "total" => Ok(ScoreMode::Total),
            "significant_only" | "significant" => Ok(ScoreMode::SignificantOnly),
            other => Err(format!("unknown score mode `{other}`")),
        }
    }
}

/// Rater × pair score grid, both axes sorted.
struct Grid {
    raters: Vec<String>,
    pairs: Vec<String>,
    /// `scores[rater][pair]`
    scores: Vec<Vec<f64>>,
}

fn build_grid(annotations: &[RaterAnnotation], mode: ScoreMode) -> Result<Grid, MetricsError> {
    let raters: Vec<String> = annotations
        .iter()
        .map(|a| a.rater_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let pairs: Vec<String> = annotations
        .iter()
        .map(|a| a.pair_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut cells: BTreeMap<(&str, &str), u64> = BTreeMap::new();
    for a in annotations {
        if cells
            .insert((a.rater_id.as_str(), a.pair_id.as_str()), mode.of(a))
            .is_some()
        {
            return Err(MetricsError::DuplicateAnnotation {
                rater_id: a.rater_id.clone(),
                pair_id: a.pair_id.clone(),
            });
        }
    }
    let mut missing = Vec::new();
    let mut scores = Vec::with_capacity(raters.len());
    for r in &raters {
        let mut row = Vec::with_capacity(pairs.len());
        for p in &pairs {
            match cells.get(&(r.as_str(), p.as_str())) {
                Some(&v) => row.push(v as f64),
                None => {
                    missing.push((r.clone(), p.clone()));
                    row.push(f64::NAN);
                }
            }
        }
        scores.push(row);
    }
    if !missing.is_empty() {
        return Err(MetricsError::IncompleteGrid { missing });
    }
    Ok(Grid {
        raters,
        pairs,
        scores,
    })
}

/// For every rater, tau-b between that rater's per-pair scores and the
/// arithmetic mean of all other raters' scores on the same pairs. A rater
/// maps to `None` when either sequence is constant.
pub fn leave_one_out_agreement(
    annotations: &[RaterAnnotation],
    mode: ScoreMode,
) -> Result<BTreeMap<String, Option<AgreementResult>>, MetricsError> {
    let grid = build_grid(annotations, mode)?;
    if grid.raters.len() < 2 {
        return Err(MetricsError::TooShort {
            needed: 2,
            got: grid.raters.len(),
        });
    }
    if grid.pairs.len() < 2 {
        return Err(MetricsError::TooShort {
            needed: 2,
            got: grid.pairs.len(),
        });
    }
    let others = (grid.raters.len() - 1) as f64;
    let mut out = BTreeMap::new();
    for (ri, rater) in grid.raters.iter().enumerate() {
        let rest: Vec<f64> = (0..grid.pairs.len())
            .map(|p| {
                let sum: f64 = grid
                    .scores
                    .iter()
                    .enumerate()
                    .filter(|&(oi, _)| oi != ri)
                    .map(|(_, row)| row[p])
                    .sum();
                sum / others
            })
            .collect();
        let res = match kendall_tau_b(&grid.scores[ri], &rest) {
            Ok(r) => Some(r),
            Err(MetricsError::DegenerateInput { .. }) => None,
            Err(e) => {
                return Err(MetricsError::Rater {
                    rater_id: rater.clone(),
                    source: Box::new(e),
                })
            }
        };
        out.insert(rater.clone(), res);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTau {
    pub rater_a: String,
    pub rater_b: String,
    /// `None` when either rater's scores are all tied.
    pub tau: Option<f64>,
}

/// Tau-b for every unordered pair of raters (upper triangle, sorted ids).
pub fn pairwise_agreement(
    annotations: &[RaterAnnotation],
    mode: ScoreMode,
) -> Result<Vec<PairwiseTau>, MetricsError> {
    let grid = build_grid(annotations, mode)?;
    let mut out = Vec::new();
    for i in 0..grid.raters.len() {
        for j in i + 1..grid.raters.len() {
            let tau = match kendall_tau_b(&grid.scores[i], &grid.scores[j]) {
                Ok(r) => Some(r.tau),
                Err(MetricsError::DegenerateInput { .. }) => None,
                Err(e) => return Err(e),
            };
            out.push(PairwiseTau {
                rater_a: grid.raters[i].clone(),
                rater_b: grid.raters[j].clone(),
                tau,
            });
        }
    }
    Ok(out)
}

/// Mean rater score per pair over whichever raters annotated it.
pub fn rater_means(annotations: &[RaterAnnotation], mode: ScoreMode) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for a in annotations {
        let e = acc.entry(a.pair_id.as_str()).or_default();
        e.0 += mode.of(a);
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(k, (sum, n))| (k.to_owned(), sum as f64 / n as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBin {
    /// Bin covers `[center - 0.5, center + 0.5)`.
    pub center: i64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDistribution {
    /// `(pair_id, judge - rater_mean)`, sorted by pair id.
    pub diffs: Vec<(String, f64)>,
    pub mean: f64,
    /// Contiguous unit-width bins from the lowest to the highest occupied one.
    pub histogram: Vec<HistogramBin>,
}

/// Per-pair judge-minus-raters differences and their histogram.
pub fn error_distribution(
    judge_totals: &BTreeMap<String, u64>,
    rater_mean_totals: &BTreeMap<String, f64>,
) -> Result<ErrorDistribution, MetricsError> {
    let only_left: Vec<String> = judge_totals
        .keys()
        .filter(|k| !rater_mean_totals.contains_key(*k))
        .cloned()
        .collect();
    let only_right: Vec<String> = rater_mean_totals
        .keys()
        .filter(|k| !judge_totals.contains_key(*k))
        .cloned()
        .collect();
    if !only_left.is_empty() || !only_right.is_empty() {
        return Err(MetricsError::KeyMismatch {
            only_left,
            only_right,
        });
    }
    if judge_totals.is_empty() {
        return Err(MetricsError::TooShort { needed: 1, got: 0 });
    }
    let diffs: Vec<(String, f64)> = judge_totals
        .iter()
        .map(|(k, &j)| (k.clone(), j as f64 - rater_mean_totals[k]))
        .collect();
    if let Some(index) = diffs.iter().position(|(_, d)| !d.is_finite()) {
        return Err(MetricsError::NonFinite { index });
    }
    let mean = diffs.iter().map(|(_, d)| d).sum::<f64>() / diffs.len() as f64;
    Ok(ErrorDistribution {
        histogram: histogram(diffs.iter().map(|(_, d)| *d)),
        diffs,
        mean,
    })
}

fn histogram(values: impl Iterator<Item = f64>) -> Vec<HistogramBin> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for v in values {
        *counts.entry((v + 0.5).floor() as i64).or_default() += 1;
    }
    let (Some(&lo), Some(&hi)) = (counts.keys().next(), counts.keys().next_back()) else {
        return Vec::new();
    };
    (lo..=hi)
        .map(|center| HistogramBin {
            center,
            count: counts.get(&center).copied().unwrap_or(0),
        })
        .collect()
}

/// Limits-of-agreement multiplier.
pub const LOA_Z: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltmanResult {
    pub mean_diff: f64,
    /// Sample standard deviation of the differences (n - 1 denominator).
    pub sd_diff: f64,
    pub loa_lower: f64,
    pub loa_upper: f64,
    /// `(mean of the two measurements, a - b)` per item.
    pub points: Vec<(f64, f64)>,
}

pub fn bland_altman(a: &[f64], b: &[f64]) -> Result<BlandAltmanResult, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(MetricsError::TooShort { needed: 2, got: a.len() });
    }
    if let Some(index) = a.iter().zip(b).position(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(MetricsError::NonFinite { index });
    }
    let points: Vec<(f64, f64)> = a.iter().zip(b).map(|(&x, &y)| ((x + y) / 2.0, x - y)).collect();
    let n = points.len() as f64;
    let mean_diff = points.iter().map(|p| p.1).sum::<f64>() / n;
    let var = points.iter().map(|p| (p.1 - mean_diff).powi(2)).sum::<f64>() / (n - 1.0);
    let sd_diff = var.sqrt();
    Ok(BlandAltmanResult {
        mean_diff,
        sd_diff,
        loa_lower: mean_diff - LOA_Z * sd_diff,
        loa_upper: mean_diff + LOA_Z * sd_diff,
        points,
    })
}
