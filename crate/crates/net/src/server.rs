//! Knowledge-base replica service: loads a KB file, encodes it once, and
//! answers manifest, masked-XOR, and k-anonymity requests over framed TCP.
//! The table is immutable while serving; requests only touch counters.

use crate::frame::{
    read_frame, write_frame, Frame, FrameError, ERR_BAD_MAGIC, ERR_DUPLICATE_INDEX,
    ERR_INDEX_OUT_OF_RANGE, ERR_N_MISMATCH, ERR_PAYLOAD_INCONSISTENT, ERR_UNKNOWN_MSG_TYPE,
    MSG_KANON_REQ, MSG_KANON_RESP, MSG_MANIFEST_REQ, MSG_MANIFEST_RESP, MSG_PIR_REQ, MSG_PIR_RESP,
};
use pkr_core::encoding::{encode_kb, Manifest, RecordTable};
use pkr_core::parser::{parse_program, ParseError};
use pkr_core::pir::{server_answer, BitVector};
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("reading KB file: {0}")]
    Io(#[from] io::Error),
    #[error("parsing KB file: {0}")]
    Parse(#[from] ParseError),
}

#[derive(Debug, Default)]
pub struct Counters {
    pub requests: AtomicU64,
    pub bytes_in: AtomicU64,
    pub bytes_out: AtomicU64,
}

/// Everything a replica needs to answer requests. Immutable after load
/// except for the counters.
#[derive(Debug)]
pub struct ServerState {
    pub manifest: Manifest,
    manifest_text: String,
    pub table: RecordTable,
    pub server_id: String,
    pub counters: Counters,
}

impl ServerState {
    pub fn from_kb_text(text: &str, server_id: &str) -> Result<Self, LoadError> {
        let clauses = parse_program(text)?;
        let (manifest, table) = encode_kb(&clauses);
        let manifest_text = manifest.to_text();
        Ok(ServerState {
            manifest,
            manifest_text,
            table,
            server_id: server_id.to_string(),
            counters: Counters::default(),
        })
    }

    pub fn from_kb_file(path: &Path, server_id: &str) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path)?;
        ServerState::from_kb_text(&text, server_id)
    }

    pub fn manifest_text(&self) -> &str {
        &self.manifest_text
    }
}

/// Manifest response payload: the manifest file bytes exactly as written to
/// disk by the encoder.
pub fn handle_manifest_request(state: &ServerState) -> Vec<u8> {
    state.manifest_text.as_bytes().to_vec()
}

/// Masked-XOR request payload: big-endian u32 bit count, then the packed
/// mask. Responds with a big-endian u32 record length followed by the XOR of
/// the selected records. The server only ever sees the mask, never an index.
pub fn handle_pir_request(state: &ServerState, payload: &[u8]) -> Result<Vec<u8>, (u8, String)> {
    if payload.len() < 4 {
        return Err((
            ERR_PAYLOAD_INCONSISTENT,
            "payload shorter than the bit-count field".to_string(),
        ));
    }
    let n_bits = u32::from_be_bytes(payload[..4].try_into().unwrap()) as usize;
    let mask_bytes = &payload[4..];
    if mask_bytes.len() != n_bits.div_ceil(8) {
        return Err((
            ERR_PAYLOAD_INCONSISTENT,
            format!(
                "{} mask bytes for {} bits",
                mask_bytes.len(),
                n_bits
            ),
        ));
    }
    if n_bits != state.manifest.n() {
        return Err((
            ERR_N_MISMATCH,
            format!("mask has {} bits, table has {}", n_bits, state.manifest.n()),
        ));
    }
    let mask = BitVector::from_bytes(n_bits, mask_bytes)
        .expect("length checked above");
    let answer = server_answer(&state.table, &mask)
        .expect("mask length equals table size");
    let mut response = (state.manifest.record_len as u32).to_be_bytes().to_vec();
    response.extend_from_slice(&answer);
    Ok(response)
}

/// k-anonymity request payload: big-endian u16 k, then k big-endian u32
/// indices. Responds with a big-endian u32 record length followed by the k
/// records in request order.
pub fn handle_kanon_request(state: &ServerState, payload: &[u8]) -> Result<Vec<u8>, (u8, String)> {
    if payload.len() < 2 {
        return Err((
            ERR_PAYLOAD_INCONSISTENT,
            "payload shorter than the k field".to_string(),
        ));
    }
    let k = u16::from_be_bytes(payload[..2].try_into().unwrap()) as usize;
    let index_bytes = &payload[2..];
    if index_bytes.len() != 4 * k {
        return Err((
            ERR_PAYLOAD_INCONSISTENT,
            format!("{} index bytes for k={k}", index_bytes.len()),
        ));
    }
    let indices: Vec<usize> = index_bytes
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()) as usize)
        .collect();
    for &index in &indices {
        if index >= state.manifest.n() {
            return Err((
                ERR_INDEX_OUT_OF_RANGE,
                format!("index {index} out of range for {} records", state.manifest.n()),
            ));
        }
    }
    let mut seen = indices.clone();
    seen.sort_unstable();
    if seen.windows(2).any(|w| w[0] == w[1]) {
        return Err((ERR_DUPLICATE_INDEX, "duplicate indices".to_string()));
    }
    let mut response = (state.manifest.record_len as u32).to_be_bytes().to_vec();
    for index in indices {
        response.extend_from_slice(state.table.record(index).expect("index checked"));
    }
    Ok(response)
}

fn dispatch(state: &ServerState, frame: &Frame) -> Frame {
    match frame.msg_type {
        MSG_MANIFEST_REQ => Frame::new(MSG_MANIFEST_RESP, handle_manifest_request(state)),
        MSG_PIR_REQ => match handle_pir_request(state, &frame.payload) {
            Ok(payload) => Frame::new(MSG_PIR_RESP, payload),
            Err((code, message)) => Frame::error(code, &message),
        },
        MSG_KANON_REQ => match handle_kanon_request(state, &frame.payload) {
            Ok(payload) => Frame::new(MSG_KANON_RESP, payload),
            Err((code, message)) => Frame::error(code, &message),
        },
        other => Frame::error(ERR_UNKNOWN_MSG_TYPE, &format!("unknown message type 0x{other:02x}")),
    }
}

fn log_enabled() -> bool {
    std::env::var("PKR_LOG").map(|v| !v.is_empty() && v != "0").unwrap_or(false)
}

fn handle_connection(state: Arc<ServerState>, mut stream: TcpStream) {
    loop {
        match read_frame(&mut stream) {
            Ok((frame, bytes_in)) => {
                state.counters.bytes_in.fetch_add(bytes_in as u64, Ordering::Relaxed);
                let response = dispatch(&state, &frame);
                match write_frame(&mut stream, &response) {
                    Ok(bytes_out) => {
                        state.counters.bytes_out.fetch_add(bytes_out as u64, Ordering::Relaxed);
                        state.counters.requests.fetch_add(1, Ordering::Relaxed);
                        if log_enabled() {
                            eprintln!(
                                "[{}] type=0x{:02x} in={} out={}",
                                state.server_id, frame.msg_type, bytes_in, response.wire_len()
                            );
                        }
                    }
                    Err(_) => return,
                }
                // Unknown types keep the connection open; only framing
                // failures below tear it down.
            }
            Err(FrameError::BadMagic) | Err(FrameError::Oversized(_)) => {
                // The stream is desynchronized: report once and drop it.
                let response = Frame::error(ERR_BAD_MAGIC, "bad framing");
                if let Ok(bytes_out) = write_frame(&mut stream, &response) {
                    state.counters.bytes_out.fetch_add(bytes_out as u64, Ordering::Relaxed);
                }
                if log_enabled() {
                    eprintln!("[{}] framing error, closing connection", state.server_id);
                }
                return;
            }
            Err(_) => return, // peer closed or io failure
        }
    }
}

/// A bound replica ready to accept connections.
pub struct KbServer {
    listener: TcpListener,
    state: Arc<ServerState>,
}

impl KbServer {
    pub fn bind<A: ToSocketAddrs>(state: ServerState, addr: A) -> io::Result<KbServer> {
        let listener = TcpListener::bind(addr)?;
        Ok(KbServer {
            listener,
            state: Arc::new(state),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn state(&self) -> Arc<ServerState> {
        Arc::clone(&self.state)
    }

    /// Serves connections until the process exits, one thread per client.
    pub fn run(self) -> io::Result<()> {
        for stream in self.listener.incoming() {
            match stream {
                Ok(stream) => {
                    let state = Arc::clone(&self.state);
                    thread::spawn(move || handle_connection(state, stream));
                }
                Err(e) if e.kind() == io::ErrorKind::ConnectionAborted => continue,
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    /// Runs the accept loop on a background thread and returns the bound
    /// address with a handle to the shared state.
    pub fn spawn(self) -> io::Result<(SocketAddr, Arc<ServerState>)> {
        let addr = self.local_addr()?;
        let state = self.state();
        thread::spawn(move || {
            let _ = self.run();
        });
        Ok((addr, state))
    }
}
