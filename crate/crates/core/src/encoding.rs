//! Bucketing of a clause set by head signature and its serialization into a
//! table of uniform-length records, published through a deterministic
//! manifest. Uniform record length is what keeps a retrieved record's size
//! from revealing which bucket was fetched.

use crate::ast::{HornClause, Signature};
use crate::parser::{parse_program, ParseError};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Bytes reserved at the front of each record for the payload length.
pub const RECORD_PREFIX_LEN: usize = 4;

/// Manifest format version. Version 1 pins SHA-256 as the table digest
/// algorithm.
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("bucket payload of {payload} bytes exceeds record capacity {capacity}")]
    RecordOverflow { payload: usize, capacity: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("record shorter than its length prefix")]
    TruncatedRecord,
    #[error("record payload length {payload} exceeds record size {record}")]
    BadPayloadLength { payload: usize, record: usize },
    #[error("record payload is not valid UTF-8")]
    PayloadNotUtf8,
    #[error("record payload clause: {0}")]
    Clause(ParseError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("manifest line {line}: {message}")]
pub struct ManifestError {
    pub line: usize,
    pub message: String,
}

/// Public description of an encoded KB: the ordered signature list, the
/// record geometry, and the digest of the full record table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub version: u32,
    pub record_len: usize,
    pub kb_digest: String,
    pub signatures: Vec<Signature>,
}

impl Manifest {
    /// Number of records (= number of signatures).
    pub fn n(&self) -> usize {
        self.signatures.len()
    }

    /// Line-oriented text form, stable byte-for-byte.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("version {}\n", self.version));
        out.push_str(&format!("n {}\n", self.n()));
        out.push_str(&format!("record_len {}\n", self.record_len));
        out.push_str(&format!("digest {}\n", self.kb_digest));
        for sig in &self.signatures {
            out.push_str(&format!("sig {sig}\n"));
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Manifest, ManifestError> {
        fn err(line: usize, message: impl Into<String>) -> ManifestError {
            ManifestError {
                line,
                message: message.into(),
            }
        }
        fn field<'a>(
            lines: &mut impl Iterator<Item = (usize, &'a str)>,
            key: &str,
        ) -> Result<(usize, String), ManifestError> {
            let (lineno, line) = lines.next().ok_or_else(|| err(0, "unexpected end of manifest"))?;
            let value = line
                .strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(' '))
                .ok_or_else(|| err(lineno, format!("expected `{key} <value>`")))?;
            Ok((lineno, value.to_string()))
        }

        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (lineno, version) = field(&mut lines, "version")?;
        let version: u32 = version
            .parse()
            .map_err(|_| err(lineno, "version is not an integer"))?;
        if version != MANIFEST_VERSION {
            return Err(err(lineno, format!("unsupported manifest version {version}")));
        }
        let (lineno, n) = field(&mut lines, "n")?;
        let n: usize = n.parse().map_err(|_| err(lineno, "n is not an integer"))?;
        let (lineno, record_len) = field(&mut lines, "record_len")?;
        let record_len: usize = record_len
            .parse()
            .map_err(|_| err(lineno, "record_len is not an integer"))?;
        let (lineno, digest) = field(&mut lines, "digest")?;
        if digest.len() != 64 || !digest.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(err(lineno, "digest is not a 64-character hex string"));
        }

        let mut signatures = Vec::with_capacity(n);
        for (lineno, line) in lines {
            let value = line
                .strip_prefix("sig ")
                .ok_or_else(|| err(lineno, "expected `sig <name>/<arity>`"))?;
            let sig = Signature::parse(value)
                .ok_or_else(|| err(lineno, format!("malformed signature `{value}`")))?;
            signatures.push(sig);
        }
        if signatures.len() != n {
            return Err(err(
                0,
                format!("manifest declares n {n} but lists {} signatures", signatures.len()),
            ));
        }
        if signatures.windows(2).any(|w| w[0] >= w[1]) {
            return Err(err(0, "signatures are not strictly ascending"));
        }
        Ok(Manifest {
            version,
            record_len,
            kb_digest: digest,
            signatures,
        })
    }
}

/// The encoded KB body: `n` records of exactly `record_len` bytes each.
/// Record `i` decodes to the clauses whose head signature is the manifest's
/// `signatures[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordTable {
    record_len: usize,
    records: Vec<Vec<u8>>,
}

impl RecordTable {
    pub fn new(record_len: usize, records: Vec<Vec<u8>>) -> Self {
        debug_assert!(records.iter().all(|r| r.len() == record_len));
        RecordTable {
            record_len,
            records,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record_len(&self) -> usize {
        self.record_len
    }

    pub fn records(&self) -> &[Vec<u8>] {
        &self.records
    }

    pub fn record(&self, index: usize) -> Option<&[u8]> {
        self.records.get(index).map(Vec::as_slice)
    }

    /// Raw concatenation of all records, the on-disk form.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len() * self.record_len);
        for record in &self.records {
            out.extend_from_slice(record);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], n: usize, record_len: usize) -> Option<RecordTable> {
        if bytes.len() != n * record_len {
            return None;
        }
        let records = bytes.chunks(record_len.max(1)).map(|c| c.to_vec()).collect();
        if n == 0 {
            return Some(RecordTable {
                record_len,
                records: Vec::new(),
            });
        }
        Some(RecordTable {
            record_len,
            records,
        })
    }

    /// Hex SHA-256 over the concatenated records.
    pub fn digest_hex(&self) -> String {
        let mut hasher = Sha256::new();
        for record in &self.records {
            hasher.update(record);
        }
        hex::encode(hasher.finalize())
    }
}

/// Groups clauses by head signature. Buckets come out sorted by signature
/// and clauses within a bucket sorted by canonical form, with duplicates
/// (alpha-equivalent clauses) collapsed, so the result is a pure function of
/// the clause set.
pub fn build_buckets(kb: &[HornClause]) -> Vec<(Signature, Vec<HornClause>)> {
    let mut buckets: std::collections::BTreeMap<Signature, Vec<HornClause>> =
        std::collections::BTreeMap::new();
    for clause in kb {
        buckets
            .entry(clause.head.signature())
            .or_default()
            .push(clause.clone());
    }
    buckets
        .into_iter()
        .map(|(sig, mut clauses)| {
            clauses.sort_by_key(|c| c.canonical());
            clauses.dedup_by_key(|c| c.canonical());
            (sig, clauses)
        })
        .collect()
}

fn bucket_payload(clauses: &[HornClause]) -> Vec<u8> {
    let mut payload = String::new();
    for clause in clauses {
        payload.push_str(&clause.canonical());
        payload.push('\n');
    }
    payload.into_bytes()
}

/// Serializes one bucket into a record of exactly `record_len` bytes:
/// big-endian 4-byte payload length, the newline-terminated canonical
/// clause texts, then zero padding.
pub fn encode_bucket(clauses: &[HornClause], record_len: usize) -> Result<Vec<u8>, EncodeError> {
    let payload = bucket_payload(clauses);
    let capacity = record_len.saturating_sub(RECORD_PREFIX_LEN);
    if payload.len() > capacity {
        return Err(EncodeError::RecordOverflow {
            payload: payload.len(),
            capacity,
        });
    }
    let mut record = vec![0u8; record_len];
    record[..RECORD_PREFIX_LEN].copy_from_slice(&(payload.len() as u32).to_be_bytes());
    record[RECORD_PREFIX_LEN..RECORD_PREFIX_LEN + payload.len()].copy_from_slice(&payload);
    Ok(record)
}

/// Recovers the clauses from a record produced by [`encode_bucket`].
pub fn decode_record(record: &[u8]) -> Result<Vec<HornClause>, DecodeError> {
    if record.len() < RECORD_PREFIX_LEN {
        return Err(DecodeError::TruncatedRecord);
    }
    let payload_len = u32::from_be_bytes(record[..RECORD_PREFIX_LEN].try_into().unwrap()) as usize;
    if payload_len > record.len() - RECORD_PREFIX_LEN {
        return Err(DecodeError::BadPayloadLength {
            payload: payload_len,
            record: record.len(),
        });
    }
    let payload = &record[RECORD_PREFIX_LEN..RECORD_PREFIX_LEN + payload_len];
    let text = std::str::from_utf8(payload).map_err(|_| DecodeError::PayloadNotUtf8)?;
    parse_program(text).map_err(DecodeError::Clause)
}

/// Encodes a clause set into a manifest and record table. The record length
/// is the smallest multiple of 8 bytes that fits the largest bucket payload
/// plus its length prefix (minimum 8), so the bit count on the wire stays
/// byte-aligned. Output is deterministic: any ordering of the same clause
/// set encodes to identical bytes.
pub fn encode_kb(kb: &[HornClause]) -> (Manifest, RecordTable) {
    let buckets = build_buckets(kb);
    let max_payload = buckets
        .iter()
        .map(|(_, clauses)| bucket_payload(clauses).len())
        .max()
        .unwrap_or(0);
    let record_len = (max_payload + RECORD_PREFIX_LEN).div_ceil(8).max(1) * 8;

    let mut signatures = Vec::with_capacity(buckets.len());
    let mut records = Vec::with_capacity(buckets.len());
    for (sig, clauses) in &buckets {
        signatures.push(sig.clone());
        // Safe: record_len was sized from the largest payload.
        records.push(encode_bucket(clauses, record_len).expect("record length fits all buckets"));
    }
    let table = RecordTable::new(record_len, records);
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        record_len,
        kb_digest: table.digest_hex(),
        signatures,
    };
    (manifest, table)
}

/// Binary search over the manifest's sorted signature list. `None` means the
/// KB holds no clauses for that signature.
pub fn index_of(manifest: &Manifest, sig: &Signature) -> Option<usize> {
    manifest.signatures.binary_search(sig).ok()
}
