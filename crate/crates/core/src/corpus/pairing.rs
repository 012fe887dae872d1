use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::index::{parallelism, PRECOMPUTE_LIMIT};
use super::{build_bigram_index, BigramIndex, Corpus, CorpusError, PairScorer};
use crate::metrics::TokenizerConfig;
use crate::par;
use crate::types::{Provenance, Report, ReportPair};

pub const DEFAULT_PRUNE_CANDIDATES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMode {
    BleuTop,
    Random,
}

impl std::str::FromStr for PairingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bleu_top" | "bleu" => Ok(PairingMode::BleuTop),
            "random" => Ok(PairingMode::Random),
            other => Err(format!("unknown pairing mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingSpec {
    pub mode: PairingMode,
    pub count: usize,
    pub seed: u64,
    #[serde(default = "default_prune")]
    pub prune_candidates: usize,
}

fn default_prune() -> usize {
    DEFAULT_PRUNE_CANDIDATES
}

impl PairingSpec {
    pub fn new(mode: PairingMode, count: usize, seed: u64) -> Self {
        Self {
            mode,
            count,
            seed,
            prune_candidates: DEFAULT_PRUNE_CANDIDATES,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.count == 0 {
            return Err(CorpusError::InvalidSpec("count must be at least 1".into()));
        }
        Ok(())
    }
}

fn pair(prefix: &str, reference: &Report, candidate: &Report, provenance: Provenance) -> ReportPair {
    ReportPair {
        pair_id: format!("{prefix}:{}:{}", reference.id, candidate.id),
        reference: reference.clone(),
        candidate: candidate.clone(),
        provenance,
    }
}

/// Builds `spec.count` pairs. BLEU pairing builds a default-tokenizer index
/// first; use [`make_pairs_with_index`] to reuse one.
pub fn make_pairs(corpus: &Corpus, spec: &PairingSpec) -> Result<Vec<ReportPair>, CorpusError> {
    spec.validate()?;
    if corpus.len() < 2 {
        return Err(CorpusError::NoCandidate(
            corpus.get_index(0).map(|r| r.id.clone()).unwrap_or_default(),
        ));
    }
    match spec.mode {
        PairingMode::Random => random_pairs(corpus, spec),
        PairingMode::BleuTop => {
            let index = build_bigram_index(corpus, &TokenizerConfig::default())?;
            bleu_pairs(corpus, &index, spec)
        }
    }
}

pub fn make_pairs_with_index(
    corpus: &Corpus,
    index: &BigramIndex,
    spec: &PairingSpec,
) -> Result<Vec<ReportPair>, CorpusError> {
    spec.validate()?;
    if corpus.len() < 2 {
        return Err(CorpusError::NoCandidate(
            corpus.get_index(0).map(|r| r.id.clone()).unwrap_or_default(),
        ));
    }
    match spec.mode {
        PairingMode::Random => random_pairs(corpus, spec),
        PairingMode::BleuTop => bleu_pairs(corpus, index, spec),
    }
}

/// Uniform pairs over corpus insertion order. Orientation is random; the
/// unordered pair is never repeated.
fn random_pairs(corpus: &Corpus, spec: &PairingSpec) -> Result<Vec<ReportPair>, CorpusError> {
    let n = corpus.len();
    let available = (n as u128 * (n as u128 - 1) / 2).min(usize::MAX as u128) as usize;
    if spec.count > available {
        return Err(CorpusError::CountTooLarge {
            requested: spec.count,
            available,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut picked: Vec<(usize, usize)> = Vec::with_capacity(spec.count);
    if spec.count.saturating_mul(2) >= available {
        let mut all: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        all.shuffle(&mut rng);
        all.truncate(spec.count);
        for (i, j) in all {
            picked.push(if rng.gen_bool(0.5) { (i, j) } else { (j, i) });
        }
    } else {
        let mut seen = HashSet::with_capacity(spec.count);
        while picked.len() < spec.count {
            let i = rng.gen_range(0..n);
            let mut j = rng.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            if seen.insert((i.min(j), i.max(j))) {
                picked.push((i, j));
            }
        }
    }
    Ok(picked
        .into_iter()
        .map(|(i, j)| {
            let a = corpus.get_index(i).expect("in range");
            let b = corpus.get_index(j).expect("in range");
            pair("rand", a, b, Provenance::Random)
        })
        .collect())
}

/// Queries are visited in a seeded shuffle of the index ordinals. A query
/// whose match forms an unordered pair already taken is skipped, and the
/// next query is tried instead.
fn bleu_pairs(corpus: &Corpus, index: &BigramIndex, spec: &PairingSpec) -> Result<Vec<ReportPair>, CorpusError> {
    let n = index.len();
    if corpus.len() != n || corpus.iter().any(|r| index.ordinal_of(&r.id).is_none()) {
        return Err(CorpusError::InvalidIndex("index was built from a different corpus".into()));
    }
    if spec.count > n {
        return Err(CorpusError::CountTooLarge {
            requested: spec.count,
            available: n,
        });
    }
    let scorer = PairScorer::new(index, n <= PRECOMPUTE_LIMIT);
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));

    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(spec.count);
    let mut next = 0;
    while out.len() < spec.count && next < n {
        let want = spec.count - out.len();
        let batch = &order[next..(next + want + want / 4 + 8).min(n)];
        next += batch.len();
        let matches = par::map_bounded(batch, parallelism(), |&q| scorer.best_ordinal(q, spec.prune_candidates));
        for (&q, m) in batch.iter().zip(matches) {
            let (c, _) = m?;
            if out.len() == spec.count || !seen.insert((q.min(c), q.max(c))) {
                continue;
            }
            let reference = corpus.get(scorer.id(q)).expect("checked above");
            let candidate = corpus.get(scorer.id(c)).expect("checked above");
            out.push(pair("bleu", reference, candidate, Provenance::BleuMatched));
        }
    }
    if out.len() < spec.count {
        return Err(CorpusError::CountTooLarge {
            requested: spec.count,
            available: out.len(),
        });
    }
    Ok(out)
}
