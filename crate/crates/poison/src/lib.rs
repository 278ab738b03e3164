//! Memory-poisoning harness over a toy key-value store: an attacker unions
//! adversarial pairs into a clean store so that trigger-bearing queries
//! retrieve a malicious action while untriggered queries stay benign. The
//! defended configuration drops every pair whose attestation does not
//! verify, which empties the attack when the adversary holds no registered
//! key. Everything is deterministic and exhaustively checkable.

use pkr_core::integrity::{sha256, Digest32, KeyRegistry, SigningKey};
use std::cmp::Ordering;
use thiserror::Error;

/// One stored pair: a token-sequence key, an action label, and an optional
/// provenance attestation (a signature over the pair digest).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryPair {
    pub key: Vec<String>,
    pub value: String,
    pub attestation: Option<Attestation>,
}

impl MemoryPair {
    pub fn new(key: Vec<String>, value: impl Into<String>) -> Self {
        MemoryPair {
            key,
            value: value.into(),
            attestation: None,
        }
    }

    /// Canonical bytes bound by an attestation: `token token ... | value`.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        format!("{} | {}", self.key.join(" "), self.value).into_bytes()
    }

    pub fn attested_by(mut self, agent_id: &str, key: &SigningKey) -> Self {
        self.attestation = Some(attest(&self, agent_id, key));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attestation {
    pub agent_id: String,
    pub digest: Digest32,
    pub signature: Vec<u8>,
}

pub fn attest(pair: &MemoryPair, agent_id: &str, key: &SigningKey) -> Attestation {
    let digest = sha256(&pair.canonical_bytes());
    Attestation {
        agent_id: agent_id.to_string(),
        digest,
        signature: key.sign(&digest),
    }
}

/// True only when the pair carries an attestation whose digest recomputes
/// and whose signature verifies under a registered key. Unattested pairs
/// never verify.
pub fn verify_pair(pair: &MemoryPair, registry: &KeyRegistry) -> bool {
    let Some(att) = &pair.attestation else {
        return false;
    };
    let Some(key) = registry.get(&att.agent_id) else {
        return false;
    };
    sha256(&pair.canonical_bytes()) == att.digest && key.verify(&att.digest, &att.signature)
}

/// The store an agent retrieves from. Keys need not be unique; retrieval
/// resolves ties deterministically.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MemoryStore {
    pub pairs: Vec<MemoryPair>,
}

impl MemoryStore {
    pub fn new(pairs: Vec<MemoryPair>) -> Self {
        MemoryStore { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Attacker-chosen token sequence whose presence in a query activates the
/// injected pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trigger {
    pub tokens: Vec<String>,
}

impl Trigger {
    pub fn new(tokens: Vec<String>) -> Self {
        assert!(!tokens.is_empty(), "a trigger has at least one token");
        Trigger { tokens }
    }
}

/// A finite stand-in for the query distribution: each query comes with the
/// action the clean store is expected to produce for it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryWorkload {
    pub queries: Vec<WorkloadQuery>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadQuery {
    pub tokens: Vec<String>,
    pub expected_benign: String,
}

/// Stable union: clean pairs first, then the adversarial ones.
pub fn poison(clean: &MemoryStore, adversarial: &[MemoryPair]) -> MemoryStore {
    let mut pairs = clean.pairs.clone();
    pairs.extend_from_slice(adversarial);
    MemoryStore { pairs }
}

/// Trigger composition: plain concatenation of the query and the trigger.
pub fn compose_trigger(query: &[String], trigger: &Trigger) -> Vec<String> {
    let mut composed = query.to_vec();
    composed.extend_from_slice(&trigger.tokens);
    composed
}

/// Jaccard overlap as an exact rational (|intersection|, |union|) over token
/// sets; two empty token sets count as a full match.
fn jaccard(a: &[String], b: &[String]) -> (u64, u64) {
    let xs: std::collections::BTreeSet<&String> = a.iter().collect();
    let ys: std::collections::BTreeSet<&String> = b.iter().collect();
    let inter = xs.intersection(&ys).count() as u64;
    let union = xs.union(&ys).count() as u64;
    (inter, union)
}

fn score_cmp(lhs: (u64, u64), rhs: (u64, u64)) -> Ordering {
    // inter/union compared by cross-multiplication; empty unions score 1.
    let l = lhs.0 as u128 * rhs.1.max(1) as u128;
    let r = rhs.0 as u128 * lhs.1.max(1) as u128;
    l.cmp(&r)
}

/// The deterministic retrieval agent: the retrieved pair is the one whose
/// key has the highest Jaccard token overlap with the query, ties broken
/// toward the lexicographically smallest key (then earliest insertion), and
/// the emitted action is the retrieved value unchanged.
pub struct ToyAgent;

impl ToyAgent {
    pub fn retrieve<'a>(query: &[String], store: &'a MemoryStore) -> Option<&'a MemoryPair> {
        let mut best: Option<(&MemoryPair, (u64, u64))> = None;
        for pair in &store.pairs {
            let score = jaccard(&pair.key, query);
            let replace = match &best {
                None => true,
                Some((best_pair, best_score)) => match score_cmp(score, *best_score) {
                    Ordering::Greater => true,
                    Ordering::Equal => pair.key < best_pair.key,
                    Ordering::Less => false,
                },
            };
            if replace {
                best = Some((pair, score));
            }
        }
        best.map(|(pair, _)| pair)
    }

    pub fn act<'a>(query: &[String], store: &'a MemoryStore) -> Option<&'a str> {
        Self::retrieve(query, store).map(|pair| pair.value.as_str())
    }
}

/// Fraction of workload queries that, once the trigger is appended, make the
/// agent emit the malicious action. Exact average over the finite workload.
pub fn attack_success_rate(
    workload: &QueryWorkload,
    trigger: &Trigger,
    store: &MemoryStore,
    malicious_action: &str,
) -> f64 {
    assert!(!workload.queries.is_empty(), "workload must be non-empty");
    let hits = workload
        .queries
        .iter()
        .filter(|q| {
            ToyAgent::act(&compose_trigger(&q.tokens, trigger), store) == Some(malicious_action)
        })
        .count();
    hits as f64 / workload.queries.len() as f64
}

/// Fraction of untriggered workload queries that still produce their
/// expected benign action.
pub fn benign_accuracy(workload: &QueryWorkload, store: &MemoryStore) -> f64 {
    assert!(!workload.queries.is_empty(), "workload must be non-empty");
    let hits = workload
        .queries
        .iter()
        .filter(|q| ToyAgent::act(&q.tokens, store) == Some(q.expected_benign.as_str()))
        .count();
    hits as f64 / workload.queries.len() as f64
}

/// Keeps only the pairs whose attestation verifies against the registry.
pub fn filter_verified(pairs: &[MemoryPair], registry: &KeyRegistry) -> Vec<MemoryPair> {
    pairs
        .iter()
        .filter(|p| verify_pair(p, registry))
        .cloned()
        .collect()
}

/// Builds the store with attestation filtering in place of blind union and
/// evaluates both metrics. Adversarial pairs without a registered signer are
/// dropped before retrieval ever sees them.
pub fn run_defended(
    workload: &QueryWorkload,
    trigger: &Trigger,
    clean: &MemoryStore,
    adversarial: &[MemoryPair],
    registry: &KeyRegistry,
    malicious_action: &str,
) -> (f64, f64) {
    let poisoned = poison(clean, adversarial);
    let store = MemoryStore::new(filter_verified(&poisoned.pairs, registry));
    (
        attack_success_rate(workload, trigger, &store, malicious_action),
        benign_accuracy(workload, &store),
    )
}

// ---------------------------------------------------------------------------
// Fixture file formats
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct FixtureError {
    pub line: usize,
    pub message: String,
}

/// Whether a store-file pair is meant to carry a valid attestation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignedFlag {
    Yes,
    No,
}

/// Parses `key_tokens | value | signed:{yes,no}` lines. Attestations are
/// attached separately (the file records intent, the loader signs).
pub fn parse_store_file(text: &str) -> Result<Vec<(MemoryPair, SignedFlag)>, FixtureError> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: &str| FixtureError {
            line: lineno,
            message: message.to_string(),
        };
        let fields: Vec<&str> = line.split('|').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(err("expected `key_tokens | value | signed:{yes,no}`"));
        }
        let key: Vec<String> = fields[0].split_whitespace().map(str::to_string).collect();
        if key.is_empty() {
            return Err(err("empty key"));
        }
        let flag = match fields[2] {
            "signed:yes" => SignedFlag::Yes,
            "signed:no" => SignedFlag::No,
            other => return Err(err(&format!("bad signed flag `{other}`"))),
        };
        pairs.push((MemoryPair::new(key, fields[1]), flag));
    }
    Ok(pairs)
}

/// Parses `query_tokens | expected_action` lines.
pub fn parse_workload_file(text: &str) -> Result<QueryWorkload, FixtureError> {
    let mut queries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: &str| FixtureError {
            line: lineno,
            message: message.to_string(),
        };
        let fields: Vec<&str> = line.split('|').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(err("expected `query_tokens | expected_action`"));
        }
        let tokens: Vec<String> = fields[0].split_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            return Err(err("empty query"));
        }
        queries.push(WorkloadQuery {
            tokens,
            expected_benign: fields[1].to_string(),
        });
    }
    if queries.is_empty() {
        return Err(FixtureError {
            line: 0,
            message: "workload has no queries".to_string(),
        });
    }
    Ok(QueryWorkload { queries })
}
