//! Tamper evidence and provenance: signed clause hashes, table digest
//! verification, and an append-only hash-chain log for agent interactions.
//!
//! Signing is abstracted over the key material: ed25519 for real
//! deployments, HMAC-SHA256 as a shared-key stand-in with the same
//! interface (useful for fixtures, where a single registry file must both
//! attest and verify).

use crate::ast::HornClause;
use crate::encoding::{Manifest, RecordTable};
use base64::Engine;
use ed25519_dalek::{Signer as _, Verifier as _};
use hmac::{Hmac, Mac};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub type Digest32 = [u8; 32];

/// Genesis predecessor digest for hash chains.
pub const ZERO_DIGEST: Digest32 = [0u8; 32];

pub fn sha256(bytes: &[u8]) -> Digest32 {
    Sha256::digest(bytes).into()
}

// ---------------------------------------------------------------------------
// Keys and registry
// ---------------------------------------------------------------------------

/// Private key material an agent signs with.
#[derive(Debug, Clone)]
pub enum SigningKey {
    Ed25519(Box<ed25519_dalek::SigningKey>),
    MacSha256(Vec<u8>),
}

impl SigningKey {
    pub fn ed25519_from_seed(seed: &[u8; 32]) -> Self {
        SigningKey::Ed25519(Box::new(ed25519_dalek::SigningKey::from_bytes(seed)))
    }

    pub fn mac(key: impl Into<Vec<u8>>) -> Self {
        SigningKey::MacSha256(key.into())
    }

    pub fn sign(&self, message: &[u8]) -> Vec<u8> {
        match self {
            SigningKey::Ed25519(key) => key.sign(message).to_bytes().to_vec(),
            SigningKey::MacSha256(key) => mac_tag(key, message),
        }
    }

    /// The verification-side counterpart of this key.
    pub fn verify_key(&self) -> VerifyKey {
        match self {
            SigningKey::Ed25519(key) => VerifyKey::Ed25519(key.verifying_key()),
            SigningKey::MacSha256(key) => VerifyKey::MacSha256(key.clone()),
        }
    }
}

/// Public (or shared) key material a verifier checks against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifyKey {
    Ed25519(ed25519_dalek::VerifyingKey),
    MacSha256(Vec<u8>),
}

impl VerifyKey {
    pub fn verify(&self, message: &[u8], signature: &[u8]) -> bool {
        match self {
            VerifyKey::Ed25519(key) => ed25519_dalek::Signature::from_slice(signature)
                .map(|sig| key.verify(message, &sig).is_ok())
                .unwrap_or(false),
            VerifyKey::MacSha256(secret) => {
                // Constant-time comparison through the Mac verify API.
                let mut mac = Hmac::<Sha256>::new_from_slice(secret).expect("any key length");
                mac.update(message);
                mac.verify_slice(signature).is_ok()
            }
        }
    }

    fn scheme(&self) -> &'static str {
        match self {
            VerifyKey::Ed25519(_) => "ed25519",
            VerifyKey::MacSha256(_) => "hmac-sha256",
        }
    }

    fn key_hex(&self) -> String {
        match self {
            VerifyKey::Ed25519(key) => hex::encode(key.to_bytes()),
            VerifyKey::MacSha256(secret) => hex::encode(secret),
        }
    }
}

fn mac_tag(key: &[u8], message: &[u8]) -> Vec<u8> {
    let mut mac = Hmac::<Sha256>::new_from_slice(key).expect("any key length");
    mac.update(message);
    mac.finalize().into_bytes().to_vec()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("registry line {line}: {message}")]
pub struct RegistryError {
    pub line: usize,
    pub message: String,
}

/// Maps agent ids to verification keys. Declaration order is preserved;
/// lookups for unknown agents fail explicitly.
#[derive(Debug, Clone, Default)]
pub struct KeyRegistry {
    entries: Vec<(String, VerifyKey)>,
}

impl KeyRegistry {
    pub fn new() -> Self {
        KeyRegistry::default()
    }

    pub fn insert(&mut self, agent: impl Into<String>, key: VerifyKey) {
        let agent = agent.into();
        self.entries.retain(|(a, _)| *a != agent);
        self.entries.push((agent, key));
    }

    pub fn get(&self, agent: &str) -> Option<&VerifyKey> {
        self.entries
            .iter()
            .find(|(a, _)| a == agent)
            .map(|(_, k)| k)
    }

    pub fn agents(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(a, _)| a.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// First agent whose registry key can also produce signatures (a shared
    /// MAC key). Ed25519 entries are verify-only.
    pub fn first_mac_agent(&self) -> Option<(&str, &[u8])> {
        self.entries.iter().find_map(|(agent, key)| match key {
            VerifyKey::MacSha256(secret) => Some((agent.as_str(), secret.as_slice())),
            VerifyKey::Ed25519(_) => None,
        })
    }

    /// One `key <agent> <scheme> <hex>` line per entry.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (agent, key) in &self.entries {
            out.push_str(&format!("key {agent} {} {}\n", key.scheme(), key.key_hex()));
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<KeyRegistry, RegistryError> {
        let mut registry = KeyRegistry::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let err = |message: &str| RegistryError {
                line: lineno,
                message: message.to_string(),
            };
            if parts.next() != Some("key") {
                return Err(err("expected `key <agent> <scheme> <hex>`"));
            }
            let agent = parts.next().ok_or_else(|| err("missing agent id"))?;
            let scheme = parts.next().ok_or_else(|| err("missing scheme"))?;
            let key_hex = parts.next().ok_or_else(|| err("missing key material"))?;
            if parts.next().is_some() {
                return Err(err("trailing fields"));
            }
            let raw = hex::decode(key_hex).map_err(|_| err("key material is not hex"))?;
            let key = match scheme {
                "ed25519" => {
                    let bytes: [u8; 32] = raw
                        .as_slice()
                        .try_into()
                        .map_err(|_| err("ed25519 key must be 32 bytes"))?;
                    let vk = ed25519_dalek::VerifyingKey::from_bytes(&bytes)
                        .map_err(|_| err("invalid ed25519 key"))?;
                    VerifyKey::Ed25519(vk)
                }
                "hmac-sha256" => VerifyKey::MacSha256(raw),
                other => return Err(err(&format!("unknown scheme `{other}`"))),
            };
            registry.insert(agent, key);
        }
        Ok(registry)
    }
}

// ---------------------------------------------------------------------------
// Signed clauses
// ---------------------------------------------------------------------------

/// A clause bound to its originating agent: the canonical clause bytes, a
/// SHA-256 digest of them, and the agent's signature over that digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedClause {
    pub clause_bytes: Vec<u8>,
    pub agent_id: String,
    pub digest: Digest32,
    pub signature: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClauseFault {
    #[error("agent `{0}` is not in the registry")]
    UnknownAgent(String),
    #[error("clause digest does not match clause bytes")]
    DigestMismatch,
    #[error("signature does not verify under the agent's key")]
    BadSignature,
}

pub fn sign_clause(clause: &HornClause, agent_id: &str, key: &SigningKey) -> SignedClause {
    let clause_bytes = clause.canonical().into_bytes();
    let digest = sha256(&clause_bytes);
    let signature = key.sign(&digest);
    SignedClause {
        clause_bytes,
        agent_id: agent_id.to_string(),
        digest,
        signature,
    }
}

/// Passes only if the digest recomputes from the clause bytes, the agent is
/// known, and the signature verifies under that agent's key.
pub fn verify_clause(sc: &SignedClause, registry: &KeyRegistry) -> Result<(), ClauseFault> {
    let key = registry
        .get(&sc.agent_id)
        .ok_or_else(|| ClauseFault::UnknownAgent(sc.agent_id.clone()))?;
    if sha256(&sc.clause_bytes) != sc.digest {
        return Err(ClauseFault::DigestMismatch);
    }
    if !key.verify(&sc.digest, &sc.signature) {
        return Err(ClauseFault::BadSignature);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("sidecar line {line}: {message}")]
pub struct SidecarError {
    pub line: usize,
    pub message: String,
}

/// One sidecar line per KB clause, in KB order: `sig <agent> <hex-digest>
/// <hex-signature>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SidecarEntry {
    pub agent_id: String,
    pub digest: Digest32,
    pub signature: Vec<u8>,
}

pub fn sidecar_to_text(entries: &[SignedClause]) -> String {
    let mut out = String::new();
    for sc in entries {
        out.push_str(&format!(
            "sig {} {} {}\n",
            sc.agent_id,
            hex::encode(sc.digest),
            hex::encode(&sc.signature)
        ));
    }
    out
}

pub fn sidecar_parse_text(text: &str) -> Result<Vec<SidecarEntry>, SidecarError> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let err = |message: &str| SidecarError {
            line: lineno,
            message: message.to_string(),
        };
        // Fields are separated by exactly one space; the format is rigid so
        // that any byte-level change is visible to verification.
        let mut parts = line.split(' ');
        if parts.next() != Some("sig") {
            return Err(err("expected `sig <agent> <digest> <signature>`"));
        }
        let agent = parts.next().filter(|a| !a.is_empty()).ok_or_else(|| err("missing agent id"))?;
        let digest_hex = parts.next().ok_or_else(|| err("missing digest"))?;
        let sig_hex = parts.next().ok_or_else(|| err("missing signature"))?;
        if parts.next().is_some() {
            return Err(err("trailing fields"));
        }
        let digest: Digest32 = hex::decode(digest_hex)
            .ok()
            .and_then(|d| d.try_into().ok())
            .ok_or_else(|| err("digest is not 32 hex-encoded bytes"))?;
        let signature = hex::decode(sig_hex).map_err(|_| err("signature is not hex"))?;
        entries.push(SidecarEntry {
            agent_id: agent.to_string(),
            digest,
            signature,
        });
    }
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SidecarFault {
    #[error("sidecar has {entries} entries but the KB has {clauses} clauses")]
    CountMismatch { entries: usize, clauses: usize },
    #[error("clause {index}: {fault}")]
    Clause { index: usize, fault: ClauseFault },
}

/// Verifies a sidecar against the clauses it is aligned with.
pub fn verify_sidecar(
    clauses: &[HornClause],
    entries: &[SidecarEntry],
    registry: &KeyRegistry,
) -> Result<(), SidecarFault> {
    if clauses.len() != entries.len() {
        return Err(SidecarFault::CountMismatch {
            entries: entries.len(),
            clauses: clauses.len(),
        });
    }
    for (index, (clause, entry)) in clauses.iter().zip(entries).enumerate() {
        let sc = SignedClause {
            clause_bytes: clause.canonical().into_bytes(),
            agent_id: entry.agent_id.clone(),
            digest: entry.digest,
            signature: entry.signature.clone(),
        };
        verify_clause(&sc, registry).map_err(|fault| SidecarFault::Clause { index, fault })?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Hash-chain log
// ---------------------------------------------------------------------------

/// One interaction record. The entry digest covers the previous digest and
/// every field, with length framing so adjacent fields cannot be confused:
/// `H(prev || len(ts) || ts || len(actor) || actor || len(payload) || payload)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainEntry {
    pub timestamp: String,
    pub actor: String,
    pub payload: Vec<u8>,
    pub prev_digest: Digest32,
    pub entry_digest: Digest32,
}

fn chain_digest(prev: &Digest32, timestamp: &str, actor: &str, payload: &[u8]) -> Digest32 {
    let mut hasher = Sha256::new();
    hasher.update(prev);
    for field in [timestamp.as_bytes(), actor.as_bytes(), payload] {
        hasher.update((field.len() as u64).to_be_bytes());
        hasher.update(field);
    }
    hasher.finalize().into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ChainFaultKind {
    #[error("previous-digest link broken")]
    BrokenLink,
    #[error("entry digest does not recompute")]
    DigestMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("chain invalid at entry {index}: {kind}")]
pub struct ChainFault {
    pub index: usize,
    pub kind: ChainFaultKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("log line {line}: {message}")]
pub struct ChainLogError {
    pub line: usize,
    pub message: String,
}

/// Append-only log where each entry's digest covers its predecessor's, so
/// any in-place edit breaks verification from that entry onward. Truncating
/// a suffix is not detectable from the chain alone; anchor the exported head
/// digest externally to close that gap.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HashChainLog {
    entries: Vec<ChainEntry>,
}

impl HashChainLog {
    pub fn new() -> Self {
        HashChainLog::default()
    }

    pub fn entries(&self) -> &[ChainEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Digest of the newest entry, or the genesis digest for an empty log.
    /// This is the value to anchor externally.
    pub fn head_digest(&self) -> Digest32 {
        self.entries
            .last()
            .map(|e| e.entry_digest)
            .unwrap_or(ZERO_DIGEST)
    }

    pub fn append(&mut self, timestamp: impl Into<String>, actor: impl Into<String>, payload: impl Into<Vec<u8>>) {
        let timestamp = timestamp.into();
        let actor = actor.into();
        let payload = payload.into();
        let prev_digest = self.head_digest();
        let entry_digest = chain_digest(&prev_digest, &timestamp, &actor, &payload);
        self.entries.push(ChainEntry {
            timestamp,
            actor,
            payload,
            prev_digest,
            entry_digest,
        });
    }

    /// Recomputes every digest and link, reporting the earliest bad entry.
    pub fn verify(&self) -> Result<(), ChainFault> {
        let mut expected_prev = ZERO_DIGEST;
        for (index, entry) in self.entries.iter().enumerate() {
            if entry.prev_digest != expected_prev {
                return Err(ChainFault {
                    index,
                    kind: ChainFaultKind::BrokenLink,
                });
            }
            let recomputed =
                chain_digest(&entry.prev_digest, &entry.timestamp, &entry.actor, &entry.payload);
            if recomputed != entry.entry_digest {
                return Err(ChainFault {
                    index,
                    kind: ChainFaultKind::DigestMismatch,
                });
            }
            expected_prev = entry.entry_digest;
        }
        Ok(())
    }

    /// One `ts=<iso8601> actor=<id> prev=<hex> digest=<hex> payload=<base64>`
    /// line per entry.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let b64 = base64::engine::general_purpose::STANDARD;
        for e in &self.entries {
            out.push_str(&format!(
                "ts={} actor={} prev={} digest={} payload={}\n",
                e.timestamp,
                e.actor,
                hex::encode(e.prev_digest),
                hex::encode(e.entry_digest),
                b64.encode(&e.payload)
            ));
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<HashChainLog, ChainLogError> {
        let b64 = base64::engine::general_purpose::STANDARD;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| ChainLogError {
                line: lineno,
                message,
            };
            let mut fields = line.split(' ');
            let mut take = |key: &str| -> Result<String, ChainLogError> {
                let field = fields
                    .next()
                    .ok_or_else(|| err(format!("missing `{key}=` field")))?;
                field
                    .strip_prefix(key)
                    .and_then(|rest| rest.strip_prefix('='))
                    .map(str::to_string)
                    .ok_or_else(|| err(format!("expected `{key}=<value>`")))
            };
            let timestamp = take("ts")?;
            let actor = take("actor")?;
            let prev_hex = take("prev")?;
            let digest_hex = take("digest")?;
            let payload_b64 = take("payload")?;
            if fields.next().is_some() {
                return Err(err("trailing fields".to_string()));
            }
            let prev_digest: Digest32 = hex::decode(&prev_hex)
                .ok()
                .and_then(|d| d.try_into().ok())
                .ok_or_else(|| err("prev is not 32 hex-encoded bytes".to_string()))?;
            let entry_digest: Digest32 = hex::decode(&digest_hex)
                .ok()
                .and_then(|d| d.try_into().ok())
                .ok_or_else(|| err("digest is not 32 hex-encoded bytes".to_string()))?;
            let payload = b64
                .decode(payload_b64.as_bytes())
                .map_err(|_| err("payload is not valid base64".to_string()))?;
            entries.push(ChainEntry {
                timestamp,
                actor,
                payload,
                prev_digest,
                entry_digest,
            });
        }
        Ok(HashChainLog { entries })
    }
}

// ---------------------------------------------------------------------------
// Table digest
// ---------------------------------------------------------------------------

/// Passes iff the SHA-256 of the concatenated records equals the manifest's
/// digest. Detects any byte change, including record reordering.
pub fn verify_kb(manifest: &Manifest, table: &RecordTable) -> bool {
    manifest.n() == table.len()
        && manifest.record_len == table.record_len()
        && manifest.kb_digest == table.digest_hex()
}
