//! Live end-to-end protocol tests over loopback: frame sizes, error
//! handling, concurrent clients, and the remote knowledge-access backends
//! against the in-memory one.

use pkr_core::engine::{solve, EngineConfig, LocalAccess};
use pkr_core::parser::{parse_program, parse_query};
use pkr_core::pir::BitVector;
use pkr_net::frame::{
    self, read_frame, write_frame, Frame, ERR_BAD_MAGIC, ERR_N_MISMATCH, ERR_UNKNOWN_MSG_TYPE,
    HEADER_LEN, MSG_ERROR, MSG_PIR_REQ,
};
use pkr_net::{KbServer, RemoteAccess, ServerConn, ServerState};
use pkr_oracle::fixtures::MORTALS_KB;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::io::Write;
use std::net::{SocketAddr, TcpStream};
use std::sync::atomic::Ordering;
use std::sync::Arc;

fn spawn_server(kb: &str, id: &str) -> (SocketAddr, Arc<ServerState>) {
    let state = ServerState::from_kb_text(kb, id).unwrap();
    KbServer::bind(state, "127.0.0.1:0")
        .unwrap()
        .spawn()
        .unwrap()
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

#[test]
fn manifest_fetch_round_trips() {
    let (addr, state) = spawn_server(MORTALS_KB, "a");
    let mut conn = ServerConn::connect(addr).unwrap();
    let (text, traffic) = conn.fetch_manifest_text().unwrap();
    assert_eq!(text, state.manifest_text());
    assert_eq!(traffic.bytes_sent, HEADER_LEN as u64);
    assert_eq!(traffic.bytes_received, (HEADER_LEN + text.len()) as u64);
}

#[test]
fn pir_exchange_has_exact_wire_cost() {
    let (addr, state) = spawn_server(MORTALS_KB, "a");
    let n = state.manifest.n();
    let record_len = state.manifest.record_len;
    let mut conn = ServerConn::connect(addr).unwrap();
    let mask = BitVector::unit(n, 2).unwrap();
    let (record, traffic) = conn.pir_fetch(&mask).unwrap();
    assert_eq!(record, state.table.record(2).unwrap());
    // Request: 9-byte header + 4-byte bit count + ceil(n/8) mask bytes.
    assert_eq!(traffic.bytes_sent, (13 + n.div_ceil(8)) as u64);
    // Response: 9-byte header + 4-byte record length + R bytes.
    assert_eq!(traffic.bytes_received, (13 + record_len) as u64);
}

#[test]
fn kanon_exchange_has_exact_wire_cost() {
    let (addr, state) = spawn_server(MORTALS_KB, "a");
    let record_len = state.manifest.record_len;
    let mut conn = ServerConn::connect(addr).unwrap();
    let (records, traffic) = conn.kanon_fetch(&[0, 3]).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0], state.table.record(0).unwrap());
    assert_eq!(records[1], state.table.record(3).unwrap());
    assert_eq!(traffic.bytes_sent, (9 + 2 + 2 * 4) as u64);
    assert_eq!(traffic.bytes_received, (9 + 4 + 2 * record_len) as u64);
}

#[test]
fn wrong_bit_count_returns_error_frame_and_connection_survives() {
    let (addr, _) = spawn_server(MORTALS_KB, "a");
    let mut conn = ServerConn::connect(addr).unwrap();
    let mask = BitVector::zeros(7);
    let err = conn.pir_fetch(&mask).unwrap_err();
    match err {
        pkr_net::ClientError::Server { code, .. } => assert_eq!(code, ERR_N_MISMATCH),
        other => panic!("unexpected error {other:?}"),
    }
    // Same connection keeps working afterwards.
    let (text, _) = conn.fetch_manifest_text().unwrap();
    assert!(text.starts_with("version 1\n"));
}

#[test]
fn unknown_message_type_keeps_connection_open() {
    let (addr, _) = spawn_server(MORTALS_KB, "a");
    let mut stream = TcpStream::connect(addr).unwrap();
    write_frame(&mut stream, &Frame::new(0x42, vec![1, 2])).unwrap();
    let (response, _) = read_frame(&mut stream).unwrap();
    assert_eq!(response.msg_type, MSG_ERROR);
    assert_eq!(response.payload[0], ERR_UNKNOWN_MSG_TYPE);

    write_frame(&mut stream, &Frame::new(frame::MSG_MANIFEST_REQ, vec![])).unwrap();
    let (response, _) = read_frame(&mut stream).unwrap();
    assert_eq!(response.msg_type, frame::MSG_MANIFEST_RESP);
}

#[test]
fn garbage_magic_gets_error_frame_then_close() {
    let (addr, _) = spawn_server(MORTALS_KB, "a");
    let mut stream = TcpStream::connect(addr).unwrap();
    stream.write_all(b"GARBAGE--geo").unwrap();
    stream.flush().unwrap();
    let (response, _) = read_frame(&mut stream).unwrap();
    assert_eq!(response.msg_type, MSG_ERROR);
    assert_eq!(response.payload[0], ERR_BAD_MAGIC);
    // Server closes: the next read reaches EOF.
    assert!(read_frame(&mut stream).is_err());
}

#[test]
fn concurrent_clients_get_correct_answers_and_counters_add_up() {
    let (addr, state) = spawn_server(MORTALS_KB, "a");
    let n = state.manifest.n();
    let clients = 100;
    let mut handles = Vec::new();
    for i in 0..clients {
        let target = i % n;
        let handle = std::thread::spawn(move || {
            let mut conn = ServerConn::connect(addr).unwrap();
            let mask = BitVector::unit(n, target).unwrap();
            let (record, traffic) = conn.pir_fetch(&mask).unwrap();
            (target, record, traffic)
        });
        handles.push(handle);
    }
    let mut total_sent = 0u64;
    let mut total_received = 0u64;
    for handle in handles {
        let (target, record, traffic) = handle.join().unwrap();
        assert_eq!(record, state.table.record(target).unwrap());
        total_sent += traffic.bytes_sent;
        total_received += traffic.bytes_received;
    }
    assert_eq!(state.counters.requests.load(Ordering::Relaxed), clients as u64);
    assert_eq!(state.counters.bytes_in.load(Ordering::Relaxed), total_sent);
    assert_eq!(state.counters.bytes_out.load(Ordering::Relaxed), total_received);
}

#[test]
fn two_server_retrieval_decodes_the_target_bucket() {
    let (addr1, state) = spawn_server(MORTALS_KB, "a");
    let (addr2, _) = spawn_server(MORTALS_KB, "b");
    let mut access = RemoteAccess::open_two_server(addr1, addr2, rng(11)).unwrap();
    let sig = pkr_core::Signature::new("mortal", 1);
    use pkr_core::engine::KnowledgeAccess;
    let clauses = access.fetch(&sig).unwrap();
    assert_eq!(clauses.len(), 2);
    let stats = access.stats();
    assert_eq!(stats.frames_sent, 2);
    assert_eq!(stats.misses, 1);
    let n = state.manifest.n();
    assert_eq!(stats.bytes_sent, 2 * (13 + n.div_ceil(8)) as u64);
    assert_eq!(stats.bytes_received, 2 * (13 + state.manifest.record_len) as u64);

    // Second fetch: same clauses, zero extra frames.
    let again = access.fetch(&sig).unwrap();
    assert_eq!(again, clauses);
    let stats = access.stats();
    assert_eq!(stats.frames_sent, 2);
    assert_eq!(stats.hits, 1);
}

#[test]
fn absent_signature_is_negatively_cached_without_traffic() {
    let (addr1, _) = spawn_server(MORTALS_KB, "a");
    let (addr2, _) = spawn_server(MORTALS_KB, "b");
    let mut access = RemoteAccess::open_two_server(addr1, addr2, rng(3)).unwrap();
    use pkr_core::engine::KnowledgeAccess;
    let sig = pkr_core::Signature::new("unknown", 3);
    assert_eq!(access.fetch(&sig).unwrap(), vec![]);
    assert_eq!(access.fetch(&sig).unwrap(), vec![]);
    let stats = access.stats();
    assert_eq!(stats.frames_sent, 0);
    assert_eq!(stats.misses, 1);
    assert_eq!(stats.hits, 1);
}

#[test]
fn replica_digest_disagreement_aborts_the_session() {
    let (addr1, _) = spawn_server(MORTALS_KB, "a");
    let (addr2, _) = spawn_server("man(socrates).\n", "b");
    let err = RemoteAccess::open_two_server(addr1, addr2, rng(0))
        .err()
        .expect("session open must fail");
    assert!(matches!(err, pkr_net::ClientError::ReplicaMismatch { .. }));
}

#[test]
fn k_too_large_is_rejected_at_session_open() {
    let (addr, _) = spawn_server(MORTALS_KB, "a");
    let err = RemoteAccess::open_k_anon(addr, 9, rng(0))
        .err()
        .expect("session open must fail");
    assert!(matches!(err, pkr_net::ClientError::KTooLarge { k: 9, n: 4 }));
}

#[test]
fn all_backends_agree_on_answer_sets() {
    let queries = [
        "?- mortal(hypathia).",
        "?- mortal(X).",
        "?- vehicle(socrates).",
        "?- man(X).",
    ];
    let clauses = parse_program(MORTALS_KB).unwrap();
    let config = EngineConfig::default();

    let (addr1, _) = spawn_server(MORTALS_KB, "a");
    let (addr2, _) = spawn_server(MORTALS_KB, "b");

    for (qi, query) in queries.iter().enumerate() {
        let goals = parse_query(query).unwrap();

        let mut local = LocalAccess::new(&clauses);
        let local_result = solve(&goals, &mut local, &config).unwrap();

        let mut pir2 =
            RemoteAccess::open_two_server(addr1, addr2, rng(100 + qi as u64)).unwrap();
        let pir2_result = solve(&goals, &mut pir2, &config).unwrap();

        let mut kanon = RemoteAccess::open_k_anon(addr1, 2, rng(200 + qi as u64)).unwrap();
        let kanon_result = solve(&goals, &mut kanon, &config).unwrap();

        assert_eq!(local_result.answers, pir2_result.answers, "query {query}");
        assert_eq!(local_result.answers, kanon_result.answers, "query {query}");
    }
}

#[test]
fn recursive_query_fetches_each_signature_once() {
    let kb = pkr_oracle::fixtures::cycle_kb(4);
    let (addr1, _) = spawn_server(&kb, "a");
    let (addr2, _) = spawn_server(&kb, "b");
    let mut access = RemoteAccess::open_two_server(addr1, addr2, rng(5)).unwrap();
    let goals = parse_query("?- path(a, X).").unwrap();
    let result = solve(&goals, &mut access, &EngineConfig::default()).unwrap();
    assert_eq!(result.answers.len(), 4);

    // path/2 and edge/2 are the only signatures touched: one logical fetch
    // each, two frames per fetch in the two-server mode.
    let stats = access.stats();
    assert_eq!(stats.misses, 2);
    assert_eq!(stats.frames_sent, 4);

    // A repeated identical query is served entirely from cache.
    let again = solve(&goals, &mut access, &EngineConfig::default()).unwrap();
    assert_eq!(again.answers, result.answers);
    assert_eq!(access.stats().frames_sent, 4);
}

#[test]
fn empty_kb_serves_an_empty_manifest() {
    let (addr, _) = spawn_server("", "empty");
    let mut conn = ServerConn::connect(addr).unwrap();
    let (text, _) = conn.fetch_manifest_text().unwrap();
    let manifest = pkr_core::Manifest::parse_text(&text).unwrap();
    assert_eq!(manifest.n(), 0);

    let mut access = RemoteAccess::open_k_anon(addr, 1, rng(0)).unwrap();
    use pkr_core::engine::KnowledgeAccess;
    assert_eq!(
        access.fetch(&pkr_core::Signature::new("p", 1)).unwrap(),
        vec![]
    );
    assert_eq!(access.stats().frames_sent, 0);
}

#[test]
fn pir_request_frame_bytes_match_the_cost_formula_on_the_raw_socket() {
    let (addr, state) = spawn_server(MORTALS_KB, "a");
    let n = state.manifest.n();
    let mut stream = TcpStream::connect(addr).unwrap();

    let mask = BitVector::unit(n, 0).unwrap();
    let mut payload = (n as u32).to_be_bytes().to_vec();
    payload.extend_from_slice(mask.as_bytes());
    let request = Frame::new(MSG_PIR_REQ, payload);
    let sent = write_frame(&mut stream, &request).unwrap();
    assert_eq!(sent, 13 + n.div_ceil(8));

    let (response, received) = read_frame(&mut stream).unwrap();
    assert_eq!(response.msg_type, frame::MSG_PIR_RESP);
    assert_eq!(received, 13 + state.manifest.record_len);
}
