//! Acceptance suite: one test per release criterion, each printing a
//! `criterion N (...): pass` line (visible with `--nocapture`). Tolerances
//! and budgets are pinned in the assertions.

use pkr_core::ast::{Atom, HornClause, Term};
use pkr_core::encoding::{encode_kb, RecordTable};
use pkr_core::engine::{solve, EngineConfig, LocalAccess};
use pkr_core::integrity::{
    sidecar_parse_text, sidecar_to_text, sign_clause, verify_kb, verify_sidecar, HashChainLog,
    KeyRegistry, SignedClause, SigningKey,
};
use pkr_core::parser::{parse_program, parse_query};
use pkr_core::pir::{combine, make_pir_queries, server_answer};
use pkr_net::frame::{read_frame, write_frame, Frame, MSG_KANON_REQ, MSG_PIR_REQ};
use pkr_net::{KbServer, RemoteAccess, ServerState};
use pkr_oracle::fixtures::{cycle_kb, permute_program, random_program, MORTALS_KB};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::collections::BTreeSet;
use std::net::{SocketAddr, TcpStream};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn spawn_server(kb: &str, id: &str) -> (SocketAddr, Arc<ServerState>) {
    let state = ServerState::from_kb_text(kb, id).unwrap();
    KbServer::bind(state, "127.0.0.1:0")
        .unwrap()
        .spawn()
        .unwrap()
}

/// Criterion 1: two-server retrieval returns the exact record for every
/// index of the six-clause KB and of 50 random KBs (n <= 16), across 20
/// seeds each, with zero mismatches, in under 5 seconds.
#[test]
fn c1_retrieval_end_to_end_correctness() {
    let start = Instant::now();

    let mut kbs: Vec<Vec<HornClause>> = vec![parse_program(MORTALS_KB).unwrap()];
    for seed in 1000..1047 {
        kbs.push(random_program(seed));
    }
    // A few wider tables so n approaches the 16-record bound.
    for extra in 0..3usize {
        let mut clauses = Vec::new();
        for p in 0..(10 + 2 * extra) {
            clauses.push(HornClause::fact(Atom::new(
                format!("w{p}"),
                vec![Term::name("a")],
            )));
        }
        kbs.push(clauses);
    }
    assert_eq!(kbs.len(), 51); // the six-clause KB plus 50 random ones

    let mut retrievals = 0u64;
    for (ki, kb) in kbs.iter().enumerate() {
        let (manifest, table) = encode_kb(kb);
        let n = manifest.n();
        assert!(n <= 16, "kb {ki} has n={n}");
        for target in 0..n {
            for seed in 0..20 {
                let pair = make_pir_queries(n, target, &mut rng(seed)).unwrap();
                let a = server_answer(&table, &pair.first).unwrap();
                let b = server_answer(&table, &pair.second).unwrap();
                let record = combine(&a, &b).unwrap();
                assert_eq!(
                    record.as_slice(),
                    table.record(target).unwrap(),
                    "mismatch: kb {ki}, index {target}, seed {seed}"
                );
                retrievals += 1;
            }
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!(
        "criterion 1 (two-server retrieval correctness, {retrievals} retrievals, {elapsed:?}): pass"
    );
}

/// Criterion 2: captured frames cost exactly 13 + ceil(n/8) bytes per
/// masked request, 13 + R per response, and a k-anonymity response payload
/// is exactly 4 + k*R bytes.
#[test]
fn c2_wire_cost_formulas() {
    let wide_kb: String = (0..13)
        .map(|p| format!("w{p}(a).\n"))
        .collect();
    for kb in [MORTALS_KB.to_string(), "solo(a).\n".to_string(), wide_kb] {
        let (addr, state) = spawn_server(&kb, "cost");
        let n = state.manifest.n();
        let record_len = state.manifest.record_len;
        let mut stream = TcpStream::connect(addr).unwrap();

        // Masked-XOR exchange, byte counts taken off the raw socket.
        let mask = pkr_core::pir::BitVector::unit(n, n - 1).unwrap();
        let mut payload = (n as u32).to_be_bytes().to_vec();
        payload.extend_from_slice(mask.as_bytes());
        let sent = write_frame(&mut stream, &Frame::new(MSG_PIR_REQ, payload)).unwrap();
        assert_eq!(sent, 13 + n.div_ceil(8), "request bytes at n={n}");
        let (response, received) = read_frame(&mut stream).unwrap();
        assert_eq!(received, 13 + record_len, "response bytes at n={n}");
        assert_eq!(response.payload.len(), 4 + record_len);

        // k-anonymity exchange for every feasible k in a small sweep.
        for k in [1usize, 2, 4] {
            if k > n {
                continue;
            }
            let mut payload = (k as u16).to_be_bytes().to_vec();
            for index in 0..k {
                payload.extend_from_slice(&(index as u32).to_be_bytes());
            }
            write_frame(&mut stream, &Frame::new(MSG_KANON_REQ, payload)).unwrap();
            let (response, _) = read_frame(&mut stream).unwrap();
            assert_eq!(
                response.payload.len(),
                4 + k * record_len,
                "k-anonymity payload at n={n}, k={k}"
            );
        }
    }
    println!("criterion 2 (wire-cost formulas, request 13+ceil(n/8), response 13+R, k-anon 4+k*R): pass");
}

/// Criterion 3: over 10,000 mask generations at n=64 for two distinct
/// targets, every per-bit frequency of 1 lies in [0.48, 0.52] and the two
/// targets' frequency vectors differ by less than 0.03 per bit, in under
/// 10 seconds.
#[test]
fn c3_query_privacy_statistics() {
    let start = Instant::now();
    let n = 64;
    let draws = 10_000;
    let targets = [3usize, 60];
    let mut freq = [[0u32; 64], [0u32; 64]];
    for (t, &target) in targets.iter().enumerate() {
        let mut r = rng(2026);
        for _ in 0..draws {
            let pair = make_pir_queries(n, target, &mut r).unwrap();
            for bit in 0..n {
                if pair.first.get(bit) {
                    freq[t][bit] += 1;
                }
            }
        }
    }
    for (t, &target) in targets.iter().enumerate() {
        for bit in 0..n {
            let f = freq[t][bit] as f64 / draws as f64;
            assert!(
                (0.48..=0.52).contains(&f),
                "target {target}, bit {bit}: frequency {f}"
            );
        }
    }
    for bit in 0..n {
        let d = (freq[0][bit] as f64 - freq[1][bit] as f64).abs() / draws as f64;
        assert!(d < 0.03, "bit {bit}: frequency gap {d} between targets");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("criterion 3 (mask uniformity and target independence, {elapsed:?}): pass");
}

fn answers_of(kb_text: &str, query: &str, mode_servers: Option<(&SocketAddr, &SocketAddr, bool)>, seed: u64) -> BTreeSet<String> {
    let goals = parse_query(query).unwrap();
    let config = EngineConfig::default();
    let result = match mode_servers {
        None => {
            let clauses = parse_program(kb_text).unwrap();
            let mut access = LocalAccess::new(&clauses);
            solve(&goals, &mut access, &config).unwrap()
        }
        Some((a, b, two_server)) => {
            if two_server {
                let mut access = RemoteAccess::open_two_server(*a, *b, rng(seed)).unwrap();
                solve(&goals, &mut access, &config).unwrap()
            } else {
                let mut access = RemoteAccess::open_k_anon(*a, 2, rng(seed)).unwrap();
                solve(&goals, &mut access, &config).unwrap()
            }
        }
    };
    result.answers.iter().map(|a| a.render()).collect()
}

/// Criterion 4: the three fixture queries return identical answers across
/// local, two-server, and k-anonymity (k=2) modes and across 10 random
/// clause-order permutations of the KB file.
#[test]
fn c4_inference_fixtures_across_modes_and_permutations() {
    let base = parse_program(MORTALS_KB).unwrap();
    let queries: [(&str, Vec<&str>); 3] = [
        ("?- mortal(hypathia).", vec![""]),
        ("?- mortal(X).", vec!["X=hypathia", "X=socrates"]),
        ("?- vehicle(socrates).", vec![]),
    ];

    for perm_seed in 0..10u64 {
        let permuted = permute_program(&base, perm_seed);
        let kb_text = pkr_core::ast::program_to_text(&permuted);
        let (addr1, _) = spawn_server(&kb_text, "a");
        let (addr2, _) = spawn_server(&kb_text, "b");

        for (qi, (query, expected)) in queries.iter().enumerate() {
            let expected: BTreeSet<String> = expected.iter().map(|s| s.to_string()).collect();
            let seed = 40 + perm_seed * 10 + qi as u64;
            let local = answers_of(&kb_text, query, None, seed);
            let pir2 = answers_of(&kb_text, query, Some((&addr1, &addr2, true)), seed);
            let kanon = answers_of(&kb_text, query, Some((&addr1, &addr2, false)), seed);
            assert_eq!(local, expected, "local, {query}, permutation {perm_seed}");
            assert_eq!(pir2, expected, "pir2, {query}, permutation {perm_seed}");
            assert_eq!(kanon, expected, "kanon, {query}, permutation {perm_seed}");
        }
    }
    println!("criterion 4 (fixture queries identical across 3 modes x 10 permutations): pass");
}

/// All ground facts the engine derives for every signature in the program.
fn engine_ground_atoms(program: &[HornClause], max_depth: usize) -> BTreeSet<Atom> {
    let mut sigs = BTreeSet::new();
    for clause in program {
        sigs.insert(clause.head.signature());
        for atom in &clause.body {
            sigs.insert(atom.signature());
        }
    }
    let mut derived = BTreeSet::new();
    for sig in sigs {
        let vars: Vec<String> = (0..sig.arity).map(|i| format!("X{i}")).collect();
        let goal = Atom::new(
            sig.name.clone(),
            vars.iter().map(|v| Term::var(v.clone())).collect(),
        );
        let mut access = LocalAccess::new(program);
        let result = solve(&[goal], &mut access, &EngineConfig { max_depth }).unwrap();
        for answer in &result.answers {
            assert!(answer.is_ground(), "non-ground answer from a range-restricted program");
            let args: Vec<Term> = vars.iter().map(|v| answer.get(v).cloned().unwrap()).collect();
            derived.insert(Atom::new(sig.name.clone(), args));
        }
    }
    derived
}

/// Criterion 5: on 200 random function-free programs (recursion permitted)
/// at max_depth 64, the engine's ground answer sets equal the bottom-up
/// fixpoint in all 200 cases, in under 60 seconds.
#[test]
fn c5_oracle_equivalence_on_random_programs() {
    let start = Instant::now();
    for seed in 0..200u64 {
        let program = random_program(seed);
        let expected = pkr_oracle::fixpoint(&program).unwrap();
        let derived = engine_ground_atoms(&program, 64);
        assert_eq!(
            derived, expected,
            "engine and fixpoint disagree on seed {seed}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!("criterion 5 (engine = fixpoint on 200 random programs, {elapsed:?}): pass");
}

/// Criterion 6: a recursive transitive-closure query that revisits
/// signatures issues exactly one remote fetch per distinct signature, and a
/// repeated identical query issues zero frames.
#[test]
fn c6_cache_contract() {
    let kb = cycle_kb(4);
    let (addr1, _) = spawn_server(&kb, "a");
    let (addr2, _) = spawn_server(&kb, "b");
    let mut access = RemoteAccess::open_two_server(addr1, addr2, rng(6)).unwrap();
    let goals = parse_query("?- path(a, X).").unwrap();

    let result = solve(&goals, &mut access, &EngineConfig::default()).unwrap();
    assert_eq!(result.answers.len(), 4);
    let stats = access.stats();
    // path/2 and edge/2 are consulted at many derivation points but fetched
    // once each; one two-server fetch costs two frames.
    assert_eq!(stats.misses, 2, "one miss per distinct signature");
    assert_eq!(stats.frames_sent, 4);
    assert!(stats.hits > 2, "the recursion re-reads cached buckets");

    let again = solve(&goals, &mut access, &EngineConfig::default()).unwrap();
    assert_eq!(again.answers, result.answers);
    let after = access.stats();
    assert_eq!(after.frames_sent, 4, "repeat query sent frames");
    assert_eq!(after.bytes_sent, stats.bytes_sent);
    println!("criterion 6 (one fetch per signature, zero frames on repeat): pass");
}

/// Criterion 7: every single-byte corruption of the record table, of a
/// hash-chain log, and of a signed-clause sidecar is detected, and
/// verification under a wrong agent key fails in all fixture cases.
#[test]
fn c7_tamper_evidence_is_exhaustive() {
    // Record table: every byte position, two flip patterns.
    let clauses = parse_program(MORTALS_KB).unwrap();
    let (manifest, table) = encode_kb(&clauses);
    let bytes = table.to_bytes();
    assert!(bytes.len() <= 2048, "fixture must stay desk-scale");
    assert!(verify_kb(&manifest, &table));
    let mut table_detections = 0u32;
    for position in 0..bytes.len() {
        for pattern in [0x01u8, 0xFF] {
            let mut corrupted = bytes.clone();
            corrupted[position] ^= pattern;
            let tampered =
                RecordTable::from_bytes(&corrupted, manifest.n(), manifest.record_len).unwrap();
            assert!(
                !verify_kb(&manifest, &tampered),
                "undetected table flip at byte {position} pattern {pattern:#x}"
            );
            table_detections += 1;
        }
    }

    // Hash-chain log: every byte of the serialized file, two flip patterns.
    // Detection is either a parse failure or a failed chain verification.
    let mut log = HashChainLog::new();
    for i in 0..8 {
        log.append(
            format!("2026-01-01T00:00:{i:02}Z"),
            "client",
            format!("fetch {i}").into_bytes(),
        );
    }
    let log_text = log.to_text();
    assert!(log_text.len() <= 2048);
    assert_eq!(log.verify(), Ok(()));
    let mut log_detections = 0u32;
    for position in 0..log_text.len() {
        for pattern in [0x01u8, 0xFF] {
            let mut corrupted = log_text.clone().into_bytes();
            corrupted[position] ^= pattern;
            let detected = match String::from_utf8(corrupted) {
                Err(_) => true,
                Ok(text) => match HashChainLog::parse_text(&text) {
                    Err(_) => true,
                    Ok(parsed) => parsed.verify().is_err() || parsed != log,
                },
            };
            assert!(
                detected,
                "undetected log flip at byte {position} pattern {pattern:#x}"
            );
            log_detections += 1;
        }
    }

    // Signed-clause sidecar: small KB, every byte, two flip patterns.
    let small_kb = "man(socrates).\nwoman(hypathia).\nmortal(X) :- man(X).\n";
    let small_clauses = parse_program(small_kb).unwrap();
    let agents: Vec<(String, SigningKey)> = ["alice", "bob", "carol"]
        .iter()
        .enumerate()
        .map(|(i, name)| (name.to_string(), SigningKey::ed25519_from_seed(&[i as u8 + 1; 32])))
        .collect();
    let mut registry = KeyRegistry::new();
    for (name, key) in &agents {
        registry.insert(name, key.verify_key());
    }
    let signed: Vec<SignedClause> = small_clauses
        .iter()
        .zip(agents.iter().cycle())
        .map(|(clause, (name, key))| sign_clause(clause, name, key))
        .collect();
    let sidecar_text = sidecar_to_text(&signed);
    assert!(sidecar_text.len() <= 2048);
    assert_eq!(
        verify_sidecar(&small_clauses, &sidecar_parse_text(&sidecar_text).unwrap(), &registry),
        Ok(())
    );
    let mut sidecar_detections = 0u32;
    for position in 0..sidecar_text.len() {
        for pattern in [0x01u8, 0xFF] {
            let mut corrupted = sidecar_text.clone().into_bytes();
            corrupted[position] ^= pattern;
            let detected = match String::from_utf8(corrupted) {
                Err(_) => true,
                Ok(text) => match sidecar_parse_text(&text) {
                    Err(_) => true,
                    Ok(entries) => {
                        verify_sidecar(&small_clauses, &entries, &registry).is_err()
                    }
                },
            };
            assert!(
                detected,
                "undetected sidecar flip at byte {position} pattern {pattern:#x}"
            );
            sidecar_detections += 1;
        }
    }

    // Wrong-key verification: every clause against every other agent's id.
    let mut wrong_key_checks = 0u32;
    for sc in &signed {
        for (other, _) in agents.iter().filter(|(name, _)| *name != sc.agent_id) {
            let mut forged = sc.clone();
            forged.agent_id = other.clone();
            assert!(
                pkr_core::integrity::verify_clause(&forged, &registry).is_err(),
                "clause by {} verified under {other}'s key",
                sc.agent_id
            );
            wrong_key_checks += 1;
        }
    }

    println!(
        "criterion 7 (tamper evidence: {table_detections} table, {log_detections} log, {sidecar_detections} sidecar corruptions detected; {wrong_key_checks} wrong-key checks failed): pass"
    );
}

fn write_attack_fixtures(dir: &Path) -> [std::path::PathBuf; 4] {
    let clean = dir.join("clean.store");
    std::fs::write(
        &clean,
        "\
book flight | action_book_flight | signed:yes
cancel flight | action_cancel_flight | signed:yes
check weather | action_check_weather | signed:yes
send email | action_send_email | signed:yes
",
    )
    .unwrap();
    let adv = dir.join("adv.store");
    std::fs::write(
        &adv,
        "\
book flight zz9 | action_wipe_disk | signed:no
cancel flight zz9 | action_wipe_disk | signed:no
check weather zz9 | action_wipe_disk | signed:no
send email zz9 | action_wipe_disk | signed:no
",
    )
    .unwrap();
    let workload = dir.join("queries.workload");
    std::fs::write(
        &workload,
        "\
book flight | action_book_flight
cancel flight | action_cancel_flight
check weather | action_check_weather
send email | action_send_email
",
    )
    .unwrap();
    let registry = dir.join("keys.reg");
    std::fs::write(&registry, format!("key curator hmac-sha256 {}\n", "cd".repeat(32))).unwrap();
    [clean, adv, workload, registry]
}

/// Criterion 8: the bundled fixture attack reaches attack success rate 1.0
/// with benign accuracy 1.0 undefended, and exactly 0.0 / 1.0 once
/// attestation filtering drops the unsigned adversarial pairs. Exact values,
/// no tolerance.
#[test]
fn c8_attack_model_reproduction() {
    let dir = tempfile::tempdir().unwrap();
    let [clean, adv, workload, registry] = write_attack_fixtures(dir.path());

    let undefended = Command::new(env!("CARGO_BIN_EXE_pkr"))
        .args(["attack-eval", "--clean"])
        .arg(&clean)
        .args(["--adv"])
        .arg(&adv)
        .args(["--workload"])
        .arg(&workload)
        .args(["--trigger", "zz9"])
        .output()
        .unwrap();
    assert!(undefended.status.success());
    assert_eq!(
        String::from_utf8(undefended.stdout).unwrap(),
        "asr=1.0000 benign=1.0000\n"
    );

    let defended = Command::new(env!("CARGO_BIN_EXE_pkr"))
        .args(["attack-eval", "--clean"])
        .arg(&clean)
        .args(["--adv"])
        .arg(&adv)
        .args(["--workload"])
        .arg(&workload)
        .args(["--trigger", "zz9", "--defended", "--registry"])
        .arg(&registry)
        .output()
        .unwrap();
    assert!(defended.status.success());
    assert_eq!(
        String::from_utf8(defended.stdout).unwrap(),
        "asr=0.0000 benign=1.0000\n"
    );
    println!("criterion 8 (attack 1.0/1.0 undefended, 0.0/1.0 defended, exact): pass");
}

/// Criterion 9: encoding and every seeded subcommand produce byte-identical
/// output across two runs.
#[test]
fn c9_determinism_of_cli_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb.pl");
    std::fs::write(&kb, MORTALS_KB).unwrap();

    let pkr = env!("CARGO_BIN_EXE_pkr");
    let encode = |out: &Path| {
        let output = Command::new(pkr)
            .args(["encode", "--kb"])
            .arg(&kb)
            .args(["--out"])
            .arg(out)
            .output()
            .unwrap();
        assert!(output.status.success());
        output.stdout
    };
    let enc1 = dir.path().join("enc1");
    let enc2 = dir.path().join("enc2");
    assert_eq!(encode(&enc1), encode(&enc2));
    assert_eq!(
        std::fs::read(enc1.join("manifest.txt")).unwrap(),
        std::fs::read(enc2.join("manifest.txt")).unwrap()
    );
    assert_eq!(
        std::fs::read(enc1.join("records.bin")).unwrap(),
        std::fs::read(enc2.join("records.bin")).unwrap()
    );

    // Seeded remote queries, both retrieval modes, against live replicas.
    let kb_text = std::fs::read_to_string(&kb).unwrap();
    let (addr1, _) = spawn_server(&kb_text, "a");
    let (addr2, _) = spawn_server(&kb_text, "b");
    let servers = format!("{addr1},{addr2}");
    for args in [
        vec![
            "query", "--query", "?- mortal(X).", "--mode", "pir2", "--servers",
            servers.as_str(), "--seed", "11", "--stats",
        ],
        vec![
            "query", "--query", "?- mortal(X).", "--mode", "kanon", "--servers",
            servers.split(',').next().unwrap(), "--k", "2", "--seed", "11", "--stats",
        ],
        vec![
            "query", "--query", "?- mortal(X).", "--mode", "local", "--kb",
            kb.to_str().unwrap(), "--seed", "11",
        ],
    ] {
        let run_once = || {
            let out = Command::new(pkr).args(&args).output().unwrap();
            assert!(out.status.success(), "args {args:?}");
            out.stdout
        };
        assert_eq!(run_once(), run_once(), "args {args:?}");
    }

    // The attack evaluation is deterministic without any seed.
    let [clean, adv, workload, _] = write_attack_fixtures(dir.path());
    let eval_once = || {
        Command::new(pkr)
            .args(["attack-eval", "--clean"])
            .arg(&clean)
            .args(["--adv"])
            .arg(&adv)
            .args(["--workload"])
            .arg(&workload)
            .args(["--trigger", "zz9"])
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(eval_once(), eval_once());
    println!("criterion 9 (byte-identical outputs across repeated seeded runs): pass");
}
