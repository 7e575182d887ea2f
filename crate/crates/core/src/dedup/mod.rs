//! Near-duplicate collapse with MinHash + LSH, and benchmark decontamination.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eval::EvalProblem;
use crate::ingest::{CorpusRecord, Status};
use crate::util::{fnv1a64, mix64};

/// Records above this size never use all-pairs comparison.
pub const EXACT_PAIRWISE_LIMIT: usize = 10_000;

/// Lowercased token stream with comments removed.
pub fn canonicalize_for_similarity(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    let word = |c: char| c.is_alphanumeric() || c == '_' || c == '$' || c == '\'';
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c == '/' && chars.get(i + 1) == Some(&'*') {
            i += 2;
            while i < chars.len() && !(chars[i] == '*' && chars.get(i + 1) == Some(&'/')) {
                i += 1;
            }
            i += 2;
        } else if c == '"' {
            let start = i;
            i += 1;
            while i < chars.len() && chars[i] != '"' && chars[i] != '\n' {
                if chars[i] == '\\' {
                    i += 1;
                }
                i += 1;
            }
            i = (i + 1).min(chars.len());
            tokens.push(chars[start..i].iter().collect::<String>().to_lowercase());
        } else if word(c) {
            let start = i;
            while i < chars.len() && word(chars[i]) {
                i += 1;
            }
            tokens.push(chars[start..i].iter().collect::<String>().to_lowercase());
        } else {
            tokens.push(c.to_lowercase().collect());
            i += 1;
        }
    }
    tokens
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShingleSet {
    pub record_id: String,
    pub shingles: HashSet<u64>,
}

fn hash_window(tokens: &[String]) -> u64 {
    let mut buf = Vec::new();
    for t in tokens {
        buf.extend_from_slice(t.as_bytes());
        buf.push(0);
    }
    fnv1a64(&buf)
}

/// Hashes of every `w`-token window. A sequence shorter than `w` is one shingle.
pub fn shingle(record_id: &str, tokens: &[String], w: usize) -> ShingleSet {
    assert!(w >= 1, "shingle width must be at least 1");
    let shingles = if tokens.is_empty() {
        HashSet::new()
    } else if tokens.len() < w {
        HashSet::from([hash_window(tokens)])
    } else {
        tokens.windows(w).map(hash_window).collect()
    };
    ShingleSet { record_id: record_id.to_string(), shingles }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinHashSignature {
    pub record_id: String,
    pub values: Vec<u64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DedupError {
    #[error("empty shingle set for record {0}")]
    EmptyShingles(String),
    #[error("num_perms must be at least 16")]
    TooFewPerms,
    #[error("signatures use different parameters")]
    Mismatch,
}

fn family(num_perms: usize, seed: u64) -> Vec<u64> {
    let mut state = seed;
    (0..num_perms)
        .map(|_| {
            state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
            mix64(state)
        })
        .collect()
}

pub fn minhash_signature(s: &ShingleSet, num_perms: usize, seed: u64) -> Result<MinHashSignature, DedupError> {
    if num_perms < 16 {
        return Err(DedupError::TooFewPerms);
    }
    if s.shingles.is_empty() {
        return Err(DedupError::EmptyShingles(s.record_id.clone()));
    }
    let keys = family(num_perms, seed);
    let mut values = vec![u64::MAX; num_perms];
    for &x in &s.shingles {
        for (v, &k) in values.iter_mut().zip(&keys) {
            *v = (*v).min(mix64(x ^ k));
        }
    }
    Ok(MinHashSignature { record_id: s.record_id.clone(), values, seed })
}

pub fn estimate_jaccard(a: &MinHashSignature, b: &MinHashSignature) -> Result<f64, DedupError> {
    if a.seed != b.seed || a.values.len() != b.values.len() || a.values.is_empty() {
        return Err(DedupError::Mismatch);
    }
    let same = a.values.iter().zip(&b.values).filter(|(x, y)| x == y).count();
    Ok(same as f64 / a.values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSimilarity {
    pub a: String,
    pub b: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupDecision {
    pub cluster_id: usize,
    pub survivor: String,
    pub dropped: Vec<String>,
    /// Joining pairs, in the order they were found.
    pub estimated_similarity: Vec<PairSimilarity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RemovalReason {
    Duplicate,
    Contamination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub record_id: String,
    pub reason: RemovalReason,
    pub counterpart_id: String,
    pub similarity: f64,
    pub repo_id: String,
    pub relative_path: String,
    /// For contamination: `exact-match` (token containment) or `minhash`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub method: Option<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct DedupParams {
    pub w: usize,
    pub num_perms: usize,
    pub seed: u64,
    pub threshold: f64,
    pub bands: usize,
    pub exact_pairwise: bool,
}

impl DedupParams {
    pub fn from_config(cfg: &crate::config::PipelineConfig) -> Self {
        Self {
            w: cfg.dedup.w,
            num_perms: cfg.dedup.num_perms,
            seed: cfg.dedup_seed(),
            threshold: cfg.dedup.threshold,
            bands: cfg.dedup.bands,
            exact_pairwise: cfg.dedup.exact_pairwise,
        }
    }
}

impl Default for DedupParams {
    fn default() -> Self {
        Self { w: 5, num_perms: 128, seed: 7, threshold: 0.85, bands: 32, exact_pairwise: false }
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut x = x;
        while self.0[x] != r {
            let next = self.0[x];
            self.0[x] = r;
            x = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

pub fn signature_for(text: &str, record_id: &str, p: &DedupParams) -> Option<MinHashSignature> {
    let tokens = canonicalize_for_similarity(text);
    minhash_signature(&shingle(record_id, &tokens, p.w), p.num_perms, p.seed).ok()
}

/// Candidate index pairs (i < j) sharing at least one LSH band.
fn lsh_candidates(sigs: &[MinHashSignature], bands: usize) -> Vec<(usize, usize)> {
    let rows = sigs.first().map_or(1, |s| s.values.len() / bands);
    let mut pairs = HashSet::new();
    for b in 0..bands {
        let mut buckets: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
        for (i, s) in sigs.iter().enumerate() {
            buckets.entry(s.values[b * rows..(b + 1) * rows].to_vec()).or_default().push(i);
        }
        for members in buckets.values() {
            for (x, &i) in members.iter().enumerate() {
                for &j in &members[x + 1..] {
                    pairs.insert((i.min(j), i.max(j)));
                }
            }
        }
    }
    let mut v: Vec<_> = pairs.into_iter().collect();
    v.sort_unstable();
    v
}

/// Clusters active records whose estimated similarity reaches `threshold`.
/// Within a cluster the longest text survives (ties: smallest record_id).
/// Returns only clusters with at least one dropped record.
pub fn cluster_duplicates(records: &[CorpusRecord], p: &DedupParams) -> Vec<DedupDecision> {
    // Byte-identical texts share a record_id; they are collapsed by `dedup`
    // before clustering, so each id takes part once here.
    let mut seen = HashSet::new();
    let active: Vec<&CorpusRecord> = records.iter().filter(|r| r.is_active() && seen.insert(r.record_id.as_str())).collect();
    let sigs: Vec<Option<MinHashSignature>> = active.par_iter().map(|r| signature_for(&r.text, &r.record_id, p)).collect();
    // Records without a signature (no tokens) cannot be compared.
    let idx: Vec<usize> = (0..active.len()).filter(|&i| sigs[i].is_some()).collect();
    let dense: Vec<MinHashSignature> = idx.iter().map(|&i| sigs[i].clone().unwrap()).collect();

    let pairs: Vec<(usize, usize)> = if p.exact_pairwise && dense.len() < EXACT_PAIRWISE_LIMIT {
        (0..dense.len()).flat_map(|i| (i + 1..dense.len()).map(move |j| (i, j))).collect()
    } else {
        lsh_candidates(&dense, p.bands)
    };

    let mut uf = UnionFind((0..dense.len()).collect());
    let mut joins = Vec::new();
    for (i, j) in pairs {
        let sim = estimate_jaccard(&dense[i], &dense[j]).unwrap_or(0.0);
        if sim >= p.threshold {
            uf.union(i, j);
            joins.push((i, j, sim));
        }
    }

    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..dense.len() {
        let r = uf.find(i);
        clusters.entry(r).or_default().push(i);
    }
    let key = |i: usize| {
        let r = active[idx[i]];
        (std::cmp::Reverse(r.text.len()), r.record_id.clone())
    };
    let mut out = Vec::new();
    for (root, members) in clusters {
        if members.len() < 2 {
            continue;
        }
        let survivor = *members.iter().min_by_key(|&&i| key(i)).unwrap();
        let mut dropped: Vec<usize> = members.iter().copied().filter(|&i| i != survivor).collect();
        dropped.sort_by_key(|&i| key(i));
        let estimated_similarity = joins
            .iter()
            .filter(|(i, _, _)| uf.find(*i) == root)
            .map(|&(i, j, s)| PairSimilarity { a: active[idx[i]].record_id.clone(), b: active[idx[j]].record_id.clone(), similarity: s })
            .collect();
        out.push(DedupDecision {
            cluster_id: 0,
            survivor: active[idx[survivor]].record_id.clone(),
            dropped: dropped.iter().map(|&i| active[idx[i]].record_id.clone()).collect(),
            estimated_similarity,
        });
    }
    out.sort_by(|a, b| a.survivor.cmp(&b.survivor));
    for (n, d) in out.iter_mut().enumerate() {
        d.cluster_id = n;
    }
    out
}

/// Applies dedup decisions: survivors and singletons become Deduped, dropped
/// records become Rejected. Byte-identical copies are dropped first, keeping
/// the smallest (repo_id, relative_path).
pub fn dedup(records: &[CorpusRecord], p: &DedupParams) -> (Vec<CorpusRecord>, Vec<DedupDecision>, Vec<Removal>) {
    let decisions = cluster_duplicates(records, p);
    let sig_cache: HashMap<String, MinHashSignature> = records
        .par_iter()
        .filter(|r| r.is_active())
        .filter_map(|r| signature_for(&r.text, &r.record_id, p).map(|s| (r.record_id.clone(), s)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect();

    // Which positional record keeps each cluster: the smallest (repo, path)
    // among records whose id is the survivor id.
    let mut keep_pos: HashMap<&str, usize> = HashMap::new();
    let mut ordered: Vec<usize> = (0..records.len()).filter(|&i| records[i].is_active()).collect();
    ordered.sort_by(|&a, &b| (&records[a].repo_id, &records[a].relative_path).cmp(&(&records[b].repo_id, &records[b].relative_path)));
    for &i in &ordered {
        keep_pos.entry(records[i].record_id.as_str()).or_insert(i);
    }
    let mut survivor_of: HashMap<&str, &str> = HashMap::new();
    for d in &decisions {
        for x in &d.dropped {
            survivor_of.insert(x.as_str(), d.survivor.as_str());
        }
    }

    let mut out = records.to_vec();
    let mut removals = Vec::new();
    for (i, r) in out.iter_mut().enumerate() {
        if !r.is_active() {
            continue;
        }
        let counterpart = if keep_pos.get(r.record_id.as_str()) != Some(&i) {
            // An exact copy of a kept record.
            Some((r.record_id.clone(), 1.0))
        } else {
            survivor_of.get(r.record_id.as_str()).map(|s| {
                let sim = match (sig_cache.get(&r.record_id), sig_cache.get(*s)) {
                    (Some(a), Some(b)) => estimate_jaccard(a, b).unwrap_or(0.0),
                    _ => 0.0,
                };
                (s.to_string(), sim)
            })
        };
        match counterpart {
            Some((counterpart_id, similarity)) => {
                r.advance(Status::Rejected);
                removals.push(Removal {
                    record_id: r.record_id.clone(),
                    reason: RemovalReason::Duplicate,
                    counterpart_id,
                    similarity,
                    repo_id: r.repo_id.clone(),
                    relative_path: r.relative_path.clone(),
                    method: None,
                });
            }
            None => {
                r.advance(Status::Deduped);
            }
        }
    }
    (out, decisions, removals)
}

/// True when `needle` occurs as a contiguous run inside `haystack`.
pub fn contains_tokens(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// Removes records that contain, or closely resemble, any benchmark reference.
pub fn decontaminate(records: &[CorpusRecord], problems: &[EvalProblem], p: &DedupParams, threshold: f64) -> (Vec<CorpusRecord>, Vec<Removal>) {
    let refs: Vec<(String, Vec<String>, Option<MinHashSignature>)> = problems
        .iter()
        .map(|pr| {
            let toks = canonicalize_for_similarity(&pr.reference_solution);
            let sig = minhash_signature(&shingle(&pr.problem_id, &toks, p.w), p.num_perms, p.seed).ok();
            (pr.problem_id.clone(), toks, sig)
        })
        .collect();
    let verdicts: Vec<Option<(String, f64, &str)>> = records
        .par_iter()
        .map(|r| {
            if !r.is_active() {
                return None;
            }
            let toks = canonicalize_for_similarity(&r.text);
            if let Some((id, _, _)) = refs.iter().find(|(_, rt, _)| contains_tokens(&toks, rt)) {
                return Some((id.clone(), 1.0, "exact-match"));
            }
            let sig = minhash_signature(&shingle(&r.record_id, &toks, p.w), p.num_perms, p.seed).ok()?;
            refs.iter().find_map(|(id, _, rs)| {
                let s = estimate_jaccard(&sig, rs.as_ref()?).ok()?;
                (s >= threshold).then(|| (id.clone(), s, "minhash"))
            })
        })
        .collect();
    let mut out = records.to_vec();
    let mut removals = Vec::new();
    for (r, v) in out.iter_mut().zip(verdicts) {
        if !r.is_active() {
            continue;
        }
        match v {
            Some((problem, similarity, method)) => {
                r.advance(Status::Rejected);
                removals.push(Removal {
                    record_id: r.record_id.clone(),
                    reason: RemovalReason::Contamination,
                    counterpart_id: problem,
                    similarity,
                    repo_id: r.repo_id.clone(),
                    relative_path: r.relative_path.clone(),
                    method: Some(method.to_string()),
                });
            }
            None => {
                r.advance(Status::Decontaminated);
            }
        }
    }
    (out, removals)
}
