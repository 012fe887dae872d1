use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::{tokenize, MetricsError, TokenizerConfig};

/// Numerator substituted for a zero n-gram match count under epsilon smoothing.
pub const EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    None,
    Epsilon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuConfig {
    pub max_n: usize,
    pub smoothing: Smoothing,
    pub brevity_penalty: bool,
}

impl Default for BleuConfig {
    /// Plain BLEU-2 with brevity penalty and no smoothing.
    fn default() -> Self {
        Self {
            max_n: 2,
            smoothing: Smoothing::None,
            brevity_penalty: true,
        }
    }
}

impl BleuConfig {
    /// BLEU-2 with epsilon smoothing, used to rank pairing candidates.
    pub fn pairing() -> Self {
        Self {
            smoothing: Smoothing::Epsilon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(1..=4).contains(&self.max_n) {
            return Err(MetricsError::InvalidConfig(format!(
                "max_n must be in 1..=4, got {}",
                self.max_n
            )));
        }
        Ok(())
    }
}

/// Sentence BLEU of `candidate` against a single `reference`.
pub fn bleu(
    candidate: &str,
    reference: &str,
    cfg: &BleuConfig,
    tok: &TokenizerConfig,
) -> Result<f64, MetricsError> {
    let c = tokenize(candidate, tok);
    let r = tokenize(reference, tok);
    bleu_tokens(&c, &r, cfg)
}

/// BLEU over pre-tokenized sequences.
pub fn bleu_tokens<T: Hash + Eq>(
    candidate: &[T],
    reference: &[T],
    cfg: &BleuConfig,
) -> Result<f64, MetricsError> {
    cfg.validate()?;
    let r = NgramProfile::new(reference, cfg.max_n);
    let c = NgramProfile::new(candidate, cfg.max_n);
    r.bleu_of(&c, cfg)
}

/// Clipped n-gram counts of one token sequence, reusable across many BLEU
/// evaluations.
#[derive(Debug, Clone)]
pub struct NgramProfile<'a, T> {
    len: usize,
    orders: Vec<HashMap<&'a [T], u32>>,
}

impl<'a, T: Hash + Eq> NgramProfile<'a, T> {
    pub fn new(tokens: &'a [T], max_n: usize) -> Self {
        let orders = (1..=max_n)
            .map(|n| {
                let mut m: HashMap<&[T], u32> = HashMap::new();
                if tokens.len() >= n {
                    for w in tokens.windows(n) {
                        *m.entry(w).or_insert(0) += 1;
                    }
                }
                m
            })
            .collect();
        Self {
            len: tokens.len(),
            orders,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// BLEU of `candidate` with `self` as the reference.
    pub fn bleu_of(&self, candidate: &NgramProfile<'_, T>, cfg: &BleuConfig) -> Result<f64, MetricsError> {
        if self.len == 0 {
            return Err(MetricsError::EmptyReference);
        }
        if candidate.len == 0 {
            return Ok(0.0);
        }
        // Orders longer than both sequences carry no evidence either way;
        // skipping them keeps bleu(t, t) = 1 for very short t.
        let max_n = cfg
            .max_n
            .min(self.orders.len())
            .min(candidate.orders.len())
            .min(self.len.max(candidate.len));
        if max_n == 0 {
            return Err(MetricsError::InvalidConfig("profiles built with max_n = 0".into()));
        }
        let mut log_sum = 0.0;
        for n in 0..max_n {
            let cand = &candidate.orders[n];
            let refs = &self.orders[n];
            let total: u64 = cand.values().map(|&v| u64::from(v)).sum();
            let matched: u64 = cand
                .iter()
                .map(|(g, &k)| u64::from(k.min(refs.get(g).copied().unwrap_or(0))))
                .sum();
            let p = if matched == 0 {
                match cfg.smoothing {
                    Smoothing::None => return Ok(0.0),
                    Smoothing::Epsilon => EPSILON / total.max(1) as f64,
                }
            } else {
                matched as f64 / total as f64
            };
            log_sum += p.ln();
        }
        let geo = (log_sum / max_n as f64).exp();
        let bp = if cfg.brevity_penalty && candidate.len < self.len {
            (1.0 - self.len as f64 / candidate.len as f64).exp()
        } else {
            1.0
        };
        Ok((bp * geo).clamp(0.0, 1.0))
    }
}
