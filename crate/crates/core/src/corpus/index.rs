use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, PairingSpec};
use crate::io::{write_json_pretty, IoError};
use crate::metrics::{tokenize, BleuConfig, NgramProfile, TokenizerConfig};
use crate::par;

const SHARD: usize = 256;

/// Precomputing n-gram profiles for every report pays off up to this size.
pub(crate) const PRECOMPUTE_LIMIT: usize = 20_000;

/// Inverted index from token bigrams to the reports containing them.
///
/// Reports are numbered by ordinal in lexicographic id order, so ascending
/// postings are also ascending by id and the smallest ordinal is the
/// smallest id.
#[derive(Debug, Clone)]
pub struct BigramIndex {
    tokenizer: TokenizerConfig,
    ids: Vec<String>,
    ordinal: HashMap<String, u32>,
    vocab: Vec<String>,
    lookup: HashMap<String, u32>,
    docs: Vec<Vec<u32>>,
    postings: HashMap<(u32, u32), Vec<u32>>,
}

pub(crate) fn parallelism() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Builds the index. Tokenization runs in parallel shards; interning and
/// posting construction walk reports in id order, so the result does not
/// depend on thread scheduling.
pub fn build_bigram_index(corpus: &Corpus, tok: &TokenizerConfig) -> Result<BigramIndex, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut ids: Vec<&str> = corpus.iter().map(|r| r.id.as_str()).collect();
    ids.sort_unstable();
    let shards: Vec<&[&str]> = ids.chunks(SHARD).collect();
    let tokenized: Vec<Vec<Vec<String>>> = par::map_bounded(&shards, parallelism(), |shard| {
        shard
            .iter()
            .map(|id| tokenize(&corpus.get(id).expect("id from corpus").text, tok))
            .collect()
    });

    let mut vocab = Vec::new();
    let mut lookup: HashMap<String, u32> = HashMap::new();
    let mut docs = Vec::with_capacity(ids.len());
    for tokens in tokenized.into_iter().flatten() {
        let doc: Vec<u32> = tokens
            .into_iter()
            .map(|t| {
                *lookup.entry(t).or_insert_with_key(|t| {
                    vocab.push(t.clone());
                    (vocab.len() - 1) as u32
                })
            })
            .collect();
        docs.push(doc);
    }

    let mut postings: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
    for (ord, doc) in docs.iter().enumerate() {
        let ord = ord as u32;
        for w in doc.windows(2) {
            let list = postings.entry((w[0], w[1])).or_default();
            if list.last() != Some(&ord) {
                list.push(ord);
            }
        }
    }

    let ids: Vec<String> = ids.into_iter().map(str::to_owned).collect();
    let ordinal = ids.iter().enumerate().map(|(i, id)| (id.clone(), i as u32)).collect();
    Ok(BigramIndex {
        tokenizer: *tok,
        ids,
        ordinal,
        vocab,
        lookup,
        docs,
        postings,
    })
}

impl BigramIndex {
    pub fn tokenizer(&self) -> &TokenizerConfig {
        &self.tokenizer
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Report ids in ordinal (lexicographic) order.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn num_bigrams(&self) -> usize {
        self.postings.len()
    }

    /// Ids of the reports containing the bigram `(a, b)`, ascending.
    pub fn posting(&self, a: &str, b: &str) -> Option<Vec<&str>> {
        let key = (*self.vocab_id(a)?, *self.vocab_id(b)?);
        self.postings
            .get(&key)
            .map(|l| l.iter().map(|&o| self.ids[o as usize].as_str()).collect())
    }

    fn vocab_id(&self, token: &str) -> Option<&u32> {
        self.lookup.get(token)
    }

    pub fn doc_length(&self, id: &str) -> Option<usize> {
        self.ordinal.get(id).map(|&o| self.docs[o as usize].len())
    }

    pub fn doc_lengths(&self) -> BTreeMap<&str, usize> {
        self.ids.iter().zip(&self.docs).map(|(id, d)| (id.as_str(), d.len())).collect()
    }

    pub(crate) fn ordinal_of(&self, id: &str) -> Option<u32> {
        self.ordinal.get(id).copied()
    }

    pub fn to_persisted(&self) -> PersistedIndex {
        let mut postings = BTreeMap::new();
        for (&(a, b), list) in &self.postings {
            let key = format!("{} {}", self.vocab[a as usize], self.vocab[b as usize]);
            postings.insert(key, list.iter().map(|&o| self.ids[o as usize].clone()).collect());
        }
        PersistedIndex {
            tokenizer: self.tokenizer,
            doc_lengths: self.doc_lengths().into_iter().map(|(k, v)| (k.to_owned(), v)).collect(),
            postings,
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<(), CorpusError> {
        Ok(write_json_pretty(path, &self.to_persisted())?)
    }

    pub fn scorer(&self) -> PairScorer<'_> {
        PairScorer::new(self, self.len() <= PRECOMPUTE_LIMIT)
    }
}

/// JSON form of a [`BigramIndex`]. Bigram keys are the two tokens joined by
/// a space; tokens never contain whitespace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistedIndex {
    pub tokenizer: TokenizerConfig,
    pub doc_lengths: BTreeMap<String, usize>,
    pub postings: BTreeMap<String, Vec<String>>,
}

impl PersistedIndex {
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| CorpusError::InvalidIndex(e.to_string()))
    }

    /// Checks that every posting id exists in `corpus` and that postings are
    /// strictly ascending.
    pub fn validate(&self, corpus: &Corpus) -> Result<(), CorpusError> {
        for (bigram, ids) in &self.postings {
            if let Some(bad) = ids.iter().find(|id| corpus.get(id).is_none()) {
                return Err(CorpusError::InvalidIndex(format!("posting `{bigram}` names unknown id `{bad}`")));
            }
            if ids.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CorpusError::InvalidIndex(format!("posting `{bigram}` is not sorted")));
            }
        }
        Ok(())
    }
}

/// Answers top-BLEU queries over an index. N-gram profiles are either
/// precomputed for every report or built per candidate.
pub struct PairScorer<'a> {
    index: &'a BigramIndex,
    profiles: Option<Vec<NgramProfile<'a, u32>>>,
    cfg: BleuConfig,
}

impl<'a> PairScorer<'a> {
    pub fn new(index: &'a BigramIndex, precompute: bool) -> Self {
        let cfg = BleuConfig::pairing();
        let profiles = precompute.then(|| index.docs.iter().map(|d| NgramProfile::new(d, cfg.max_n)).collect());
        Self { index, profiles, cfg }
    }

    fn with_profile<R>(&self, ord: u32, f: impl FnOnce(&NgramProfile<'_, u32>) -> R) -> R {
        match &self.profiles {
            Some(p) => f(&p[ord as usize]),
            None => f(&NgramProfile::new(&self.index.docs[ord as usize], self.cfg.max_n)),
        }
    }

    /// Candidate ordinals for `query`: reports sharing at least one bigram,
    /// most shared distinct bigrams first, ties by ordinal, truncated to
    /// `prune`. Zero `prune`, or no report sharing a bigram, means all
    /// other reports.
    pub(crate) fn candidates(&self, query: u32, prune: usize) -> Vec<u32> {
        let n = self.index.len();
        let exhaustive = || (0..n as u32).filter(|&o| o != query).collect();
        if prune == 0 {
            return exhaustive();
        }
        let doc = &self.index.docs[query as usize];
        let mut bigrams: Vec<(u32, u32)> = doc.windows(2).map(|w| (w[0], w[1])).collect();
        bigrams.sort_unstable();
        bigrams.dedup();
        let mut shared = vec![0u32; n];
        let mut touched = Vec::new();
        for bg in &bigrams {
            for &o in self.index.postings.get(bg).map(Vec::as_slice).unwrap_or(&[]) {
                if o == query {
                    continue;
                }
                if shared[o as usize] == 0 {
                    touched.push(o);
                }
                shared[o as usize] += 1;
            }
        }
        if touched.is_empty() {
            return exhaustive();
        }
        touched.sort_unstable_by(|&a, &b| shared[b as usize].cmp(&shared[a as usize]).then(a.cmp(&b)));
        touched.truncate(prune);
        touched
    }

    pub(crate) fn best_ordinal(&self, query: u32, prune: usize) -> Result<(u32, f64), CorpusError> {
        if self.index.len() < 2 {
            return Err(CorpusError::NoCandidate(self.index.ids[query as usize].clone()));
        }
        let cands = self.candidates(query, prune);
        self.with_profile(query, |qp| {
            let mut best: Option<(u32, f64)> = None;
            for &c in &cands {
                let s = self
                    .with_profile(c, |cp| qp.bleu_of(cp, &self.cfg))
                    .expect("indexed reports have tokens");
                best = match best {
                    Some((bo, bs)) if bs > s || (bs == s && bo < c) => Some((bo, bs)),
                    _ => Some((c, s)),
                };
            }
            Ok(best.expect("at least one candidate"))
        })
    }

    /// Best match for `query_id` and its BLEU score, with the query as the
    /// reference.
    pub fn top_match(&self, query_id: &str, prune: usize) -> Result<(String, f64), CorpusError> {
        let q = self
            .index
            .ordinal_of(query_id)
            .ok_or_else(|| CorpusError::UnknownReport(query_id.to_owned()))?;
        let (o, s) = self.best_ordinal(q, prune)?;
        Ok((self.index.ids[o as usize].clone(), s))
    }

    pub(crate) fn id(&self, ord: u32) -> &'a str {
        &self.index.ids[ord as usize]
    }
}

/// Highest-BLEU partner of `query_id` (candidate = other report, reference =
/// query, epsilon smoothing). Ties go to the smallest id.
pub fn top_bleu_match(
    query_id: &str,
    corpus: &Corpus,
    index: &BigramIndex,
    spec: &PairingSpec,
) -> Result<(String, f64), CorpusError> {
    if corpus.get(query_id).is_none() {
        return Err(CorpusError::UnknownReport(query_id.to_owned()));
    }
    if corpus.len() < 2 {
        return Err(CorpusError::NoCandidate(query_id.to_owned()));
    }
    index.scorer().top_match(query_id, spec.prune_candidates)
}
