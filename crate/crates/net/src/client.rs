//! Client side of the replica protocol: a framed connection wrapper, the
//! two retrieval strategies, and the cache-fronted knowledge-access backend
//! the inference engine plugs into.

use crate::frame::{
    read_frame, write_frame, Frame, FrameError, MSG_ERROR, MSG_KANON_REQ, MSG_KANON_RESP,
    MSG_MANIFEST_REQ, MSG_MANIFEST_RESP, MSG_PIR_REQ, MSG_PIR_RESP,
};
use pkr_core::ast::Signature;
use pkr_core::cache::{CacheStats, ClauseCache};
use pkr_core::encoding::{decode_record, index_of, Manifest, ManifestError};
use pkr_core::engine::{AccessError, KnowledgeAccess};
use pkr_core::pir::{combine, kanon_filter, make_kanon_query, make_pir_queries, BitVector};
use pkr_core::HornClause;
use rand::Rng;
use std::io;
use std::net::{TcpStream, ToSocketAddrs};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("framing: {0}")]
    Frame(#[from] FrameError),
    #[error("server error 0x{code:02x}: {message}")]
    Server { code: u8, message: String },
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("manifest: {0}")]
    Manifest(#[from] ManifestError),
    #[error("replica manifests disagree (digest {left} vs {right}); identical replicas are required")]
    ReplicaMismatch { left: String, right: String },
    #[error("k = {k} exceeds the {n} records the server holds")]
    KTooLarge { k: usize, n: usize },
}

/// Byte counts for one request/response exchange, full frames as seen on
/// the wire.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Traffic {
    pub frames: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
}

impl Traffic {
    fn add(&mut self, other: Traffic) {
        self.frames += other.frames;
        self.bytes_sent += other.bytes_sent;
        self.bytes_received += other.bytes_received;
    }
}

/// One framed connection to a replica.
pub struct ServerConn {
    stream: TcpStream,
}

impl ServerConn {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self, ClientError> {
        Ok(ServerConn {
            stream: TcpStream::connect(addr)?,
        })
    }

    /// Sends one request and reads one response, translating error frames
    /// into [`ClientError::Server`].
    pub fn request(&mut self, frame: &Frame) -> Result<(Frame, Traffic), ClientError> {
        let bytes_sent = write_frame(&mut self.stream, frame)? as u64;
        let (response, bytes_received) = read_frame(&mut self.stream)?;
        let traffic = Traffic {
            frames: 1,
            bytes_sent,
            bytes_received: bytes_received as u64,
        };
        if response.msg_type == MSG_ERROR {
            let code = response.payload.first().copied().unwrap_or(0);
            let message = String::from_utf8_lossy(response.payload.get(1..).unwrap_or(&[])).into_owned();
            return Err(ClientError::Server { code, message });
        }
        Ok((response, traffic))
    }

    pub fn fetch_manifest_text(&mut self) -> Result<(String, Traffic), ClientError> {
        let (response, traffic) = self.request(&Frame::new(MSG_MANIFEST_REQ, vec![]))?;
        if response.msg_type != MSG_MANIFEST_RESP {
            return Err(ClientError::Protocol(format!(
                "expected manifest response, got type 0x{:02x}",
                response.msg_type
            )));
        }
        let text = String::from_utf8(response.payload)
            .map_err(|_| ClientError::Protocol("manifest is not UTF-8".to_string()))?;
        Ok((text, traffic))
    }

    /// Submits a mask and returns the XOR record. The request carries
    /// exactly 4 + ceil(n/8) payload bytes; the response exactly 4 + R.
    pub fn pir_fetch(&mut self, mask: &BitVector) -> Result<(Vec<u8>, Traffic), ClientError> {
        let mut payload = (mask.len() as u32).to_be_bytes().to_vec();
        payload.extend_from_slice(mask.as_bytes());
        let (response, traffic) = self.request(&Frame::new(MSG_PIR_REQ, payload))?;
        if response.msg_type != MSG_PIR_RESP {
            return Err(ClientError::Protocol(format!(
                "expected retrieval response, got type 0x{:02x}",
                response.msg_type
            )));
        }
        let record = parse_record_response(&response.payload, 1)?.remove(0);
        Ok((record, traffic))
    }

    /// Submits k indices and returns the k records in request order.
    pub fn kanon_fetch(&mut self, indices: &[usize]) -> Result<(Vec<Vec<u8>>, Traffic), ClientError> {
        let mut payload = (indices.len() as u16).to_be_bytes().to_vec();
        for &index in indices {
            payload.extend_from_slice(&(index as u32).to_be_bytes());
        }
        let (response, traffic) = self.request(&Frame::new(MSG_KANON_REQ, payload))?;
        if response.msg_type != MSG_KANON_RESP {
            return Err(ClientError::Protocol(format!(
                "expected k-anonymity response, got type 0x{:02x}",
                response.msg_type
            )));
        }
        let records = parse_record_response(&response.payload, indices.len())?;
        Ok((records, traffic))
    }
}

fn parse_record_response(payload: &[u8], count: usize) -> Result<Vec<Vec<u8>>, ClientError> {
    if payload.len() < 4 {
        return Err(ClientError::Protocol("response shorter than the record-length field".into()));
    }
    let record_len = u32::from_be_bytes(payload[..4].try_into().unwrap()) as usize;
    let body = &payload[4..];
    if body.len() != record_len * count {
        return Err(ClientError::Protocol(format!(
            "expected {count} records of {record_len} bytes, got {} bytes",
            body.len()
        )));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    Ok(body.chunks(record_len.max(1)).map(|c| c.to_vec()).collect())
}

/// How remote clauses are fetched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrievalMode {
    /// Random mask pair split across two non-communicating replicas; each
    /// replica's view is target-independent.
    TwoServerXor,
    /// Single replica, real index hidden among k-1 decoys.
    KAnonymity { k: usize },
}

/// Cache-fronted remote knowledge access. The manifest is fetched once per
/// session (and, for the two-server mode, checked byte-identical across
/// replicas before any retrieval). Clause-fetch traffic is accounted in the
/// cache stats; the one-off manifest exchange is not.
pub struct RemoteAccess<R: Rng> {
    mode: RetrievalMode,
    conns: Vec<ServerConn>,
    manifest: Manifest,
    cache: ClauseCache,
    rng: R,
}

impl<R: Rng> RemoteAccess<R> {
    pub fn open_two_server<A: ToSocketAddrs>(
        addr1: A,
        addr2: A,
        rng: R,
    ) -> Result<Self, ClientError> {
        let mut first = ServerConn::connect(addr1)?;
        let mut second = ServerConn::connect(addr2)?;
        let (text1, _) = first.fetch_manifest_text()?;
        let (text2, _) = second.fetch_manifest_text()?;
        let manifest = Manifest::parse_text(&text1)?;
        if text1 != text2 {
            let other = Manifest::parse_text(&text2)?;
            return Err(ClientError::ReplicaMismatch {
                left: manifest.kb_digest,
                right: other.kb_digest,
            });
        }
        Ok(RemoteAccess {
            mode: RetrievalMode::TwoServerXor,
            conns: vec![first, second],
            manifest,
            cache: ClauseCache::new(),
            rng,
        })
    }

    pub fn open_k_anon<A: ToSocketAddrs>(addr: A, k: usize, rng: R) -> Result<Self, ClientError> {
        let mut conn = ServerConn::connect(addr)?;
        let (text, _) = conn.fetch_manifest_text()?;
        let manifest = Manifest::parse_text(&text)?;
        if k == 0 || (manifest.n() > 0 && k > manifest.n()) {
            return Err(ClientError::KTooLarge {
                k,
                n: manifest.n(),
            });
        }
        Ok(RemoteAccess {
            mode: RetrievalMode::KAnonymity { k },
            conns: vec![conn],
            manifest,
            cache: ClauseCache::new(),
            rng,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn mode(&self) -> RetrievalMode {
        self.mode
    }

    pub fn stats(&self) -> CacheStats {
        self.cache.stats()
    }

    fn fetch_record(&mut self, index: usize) -> Result<Vec<u8>, ClientError> {
        let n = self.manifest.n();
        let mut traffic = Traffic::default();
        let record = match self.mode {
            RetrievalMode::TwoServerXor => {
                let pair = make_pir_queries(n, index, &mut self.rng)
                    .map_err(|e| ClientError::Protocol(e.to_string()))?;
                let (a, t1) = self.conns[0].pir_fetch(&pair.first)?;
                traffic.add(t1);
                let (b, t2) = self.conns[1].pir_fetch(&pair.second)?;
                traffic.add(t2);
                combine(&a, &b).map_err(|e| ClientError::Protocol(e.to_string()))?
            }
            RetrievalMode::KAnonymity { k } => {
                let query = make_kanon_query(n, index, k, &mut self.rng)
                    .map_err(|e| ClientError::Protocol(e.to_string()))?;
                let (records, t) = self.conns[0].kanon_fetch(&query.indices)?;
                traffic.add(t);
                kanon_filter(&records, query.true_pos())
                    .map_err(|e| ClientError::Protocol(e.to_string()))?
            }
        };
        self.cache
            .record_traffic(traffic.frames, traffic.bytes_sent, traffic.bytes_received);
        Ok(record)
    }
}

impl<R: Rng> KnowledgeAccess for RemoteAccess<R> {
    /// Cache first; on a miss the record is retrieved, decoded, checked to
    /// contain only clauses for the requested signature, and cached.
    /// Signatures absent from the manifest are negatively cached without any
    /// network traffic.
    fn fetch(&mut self, sig: &Signature) -> Result<Vec<HornClause>, AccessError> {
        if let Some(clauses) = self.cache.get(sig) {
            return Ok(clauses);
        }
        let Some(index) = index_of(&self.manifest, sig) else {
            self.cache.put(sig.clone(), Vec::new());
            return Ok(Vec::new());
        };
        let record = self
            .fetch_record(index)
            .map_err(|e| AccessError::Network(e.to_string()))?;
        let clauses =
            decode_record(&record).map_err(|e| AccessError::Decode(e.to_string()))?;
        for clause in &clauses {
            if clause.head.signature() != *sig {
                return Err(AccessError::Integrity(format!(
                    "record for {sig} contains a clause for {}",
                    clause.head.signature()
                )));
            }
        }
        self.cache.put(sig.clone(), clauses.clone());
        Ok(clauses)
    }
}
