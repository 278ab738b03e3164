//! `pkr`: encode KB files into padded record tables, run queries against
//! local or remote knowledge in any retrieval mode, verify integrity
//! artifacts, and evaluate memory-poisoning attacks.
//!
//! Exit codes: 0 success, 1 operational error or failed verification,
//! 2 usage error.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use pkr_core::cache::CacheStats;
use pkr_core::encoding::{Manifest, RecordTable};
use pkr_core::engine::{solve, AnswerSet, EngineConfig, LocalAccess};
use pkr_core::integrity::{verify_kb, HashChainLog, KeyRegistry, SigningKey};
use pkr_core::parser::{parse_program, parse_query};
use pkr_net::RemoteAccess;
use pkr_poison::{
    attack_success_rate, benign_accuracy, filter_verified, parse_store_file, parse_workload_file,
    poison, MemoryPair, MemoryStore, SignedFlag, Trigger,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const RECORDS_FILE: &str = "records.bin";

#[derive(Parser)]
#[command(name = "pkr", version, about = "Private knowledge retrieval toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a KB file into a manifest and a padded record table.
    Encode {
        /// KB text file to encode.
        #[arg(long)]
        kb: PathBuf,
        /// Output directory for manifest.txt and records.bin.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a query in local, two-server, or k-anonymity mode.
    Query {
        /// Query text, e.g. "?- mortal(X).".
        #[arg(long)]
        query: String,
        #[arg(long, value_enum)]
        mode: Mode,
        /// KB file (local mode).
        #[arg(long)]
        kb: Option<PathBuf>,
        /// Server addresses, comma separated (pir2 needs 2, kanon needs 1).
        #[arg(long, value_delimiter = ',')]
        servers: Vec<String>,
        /// Anonymity-set size (kanon mode).
        #[arg(long)]
        k: Option<usize>,
        /// Resolution-step limit per derivation branch.
        #[arg(long, default_value_t = 64)]
        depth: usize,
        /// Append cache and traffic counters to the output.
        #[arg(long)]
        stats: bool,
        /// Seed for all query randomness; random when omitted.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Verify an interaction log, an encoded KB directory, or a signed-clause
    /// sidecar. Prints `pass` or a `fail ...` diagnosis.
    Verify {
        /// Hash-chain interaction log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Directory produced by `pkr encode`.
        #[arg(long)]
        kb_dir: Option<PathBuf>,
        /// Signed-clause sidecar file (requires --kb and --registry).
        #[arg(long)]
        sigs: Option<PathBuf>,
        /// KB file the sidecar is aligned with.
        #[arg(long)]
        kb: Option<PathBuf>,
        /// Key registry file.
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// Evaluate a poisoning attack on the toy retrieval agent.
    AttackEval {
        /// Clean store fixture.
        #[arg(long)]
        clean: PathBuf,
        /// Adversarial pairs fixture.
        #[arg(long)]
        adv: PathBuf,
        /// Workload fixture (`query_tokens | expected_action` lines).
        #[arg(long)]
        workload: PathBuf,
        /// Trigger tokens, space separated.
        #[arg(long)]
        trigger: String,
        /// Malicious action label counted as attack success.
        #[arg(long, default_value = "action_wipe_disk")]
        malicious: String,
        /// Drop store pairs whose attestation does not verify.
        #[arg(long)]
        defended: bool,
        /// Key registry file (required with --defended).
        #[arg(long)]
        registry: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Local,
    Pir2,
    Kanon,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Encode { kb, out } => cmd_encode(&kb, &out),
        Command::Query {
            query,
            mode,
            kb,
            servers,
            k,
            depth,
            stats,
            seed,
        } => cmd_query(&query, mode, kb.as_deref(), &servers, k, depth, stats, seed),
        Command::Verify {
            log,
            kb_dir,
            sigs,
            kb,
            registry,
        } => cmd_verify(
            log.as_deref(),
            kb_dir.as_deref(),
            sigs.as_deref(),
            kb.as_deref(),
            registry.as_deref(),
        ),
        Command::AttackEval {
            clean,
            adv,
            workload,
            trigger,
            malicious,
            defended,
            registry,
        } => cmd_attack_eval(
            &clean,
            &adv,
            &workload,
            &trigger,
            &malicious,
            defended,
            registry.as_deref(),
        ),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn usage_error(message: &str) -> ExitCode {
    eprintln!("usage error: {message}");
    ExitCode::from(2)
}

fn cmd_encode(kb_path: &Path, out_dir: &Path) -> Result<ExitCode> {
    let text = std::fs::read_to_string(kb_path)
        .with_context(|| format!("reading {}", kb_path.display()))?;
    let clauses = parse_program(&text).context("parsing KB file")?;
    let (manifest, table) = pkr_core::encoding::encode_kb(&clauses);
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    std::fs::write(out_dir.join(MANIFEST_FILE), manifest.to_text()).context("writing manifest")?;
    std::fs::write(out_dir.join(RECORDS_FILE), table.to_bytes()).context("writing record table")?;
    println!(
        "n={} record_len={} digest={}",
        manifest.n(),
        manifest.record_len,
        manifest.kb_digest
    );
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_query(
    query: &str,
    mode: Mode,
    kb: Option<&Path>,
    servers: &[String],
    k: Option<usize>,
    depth: usize,
    stats: bool,
    seed: Option<u64>,
) -> Result<ExitCode> {
    if depth == 0 {
        return Ok(usage_error("--depth must be positive"));
    }
    let goals = parse_query(query).context("parsing query")?;
    let config = EngineConfig { max_depth: depth };
    let rng = ChaCha20Rng::seed_from_u64(seed.unwrap_or_else(|| rand::rng().random()));

    let (result, cache_stats) = match mode {
        Mode::Local => {
            let Some(kb_path) = kb else {
                return Ok(usage_error("--mode local requires --kb"));
            };
            let text = std::fs::read_to_string(kb_path)
                .with_context(|| format!("reading {}", kb_path.display()))?;
            let clauses = parse_program(&text).context("parsing KB file")?;
            let mut access = LocalAccess::new(&clauses);
            (solve(&goals, &mut access, &config)?, CacheStats::default())
        }
        Mode::Pir2 => {
            let [first, second] = servers else {
                return Ok(usage_error("--mode pir2 requires exactly 2 --servers"));
            };
            let mut access = RemoteAccess::open_two_server(first.as_str(), second.as_str(), rng)
                .context("opening two-server session")?;
            let result = solve(&goals, &mut access, &config)?;
            let stats = access.stats();
            (result, stats)
        }
        Mode::Kanon => {
            let [server] = servers else {
                return Ok(usage_error("--mode kanon requires exactly 1 server"));
            };
            let Some(k) = k else {
                return Ok(usage_error("--mode kanon requires --k"));
            };
            let mut access = RemoteAccess::open_k_anon(server.as_str(), k, rng)
                .context("opening k-anonymity session")?;
            let result = solve(&goals, &mut access, &config)?;
            let stats = access.stats();
            (result, stats)
        }
    };

    print!("{}", render_answers(&goals, &result));
    if stats {
        print!("{}", cache_stats.to_report());
        println!("depth_limited {}", u8::from(result.depth_limited));
    }
    Ok(ExitCode::SUCCESS)
}

/// Ground queries print `yes`/`no`; open queries print one sorted binding
/// line per answer.
fn render_answers(goals: &[pkr_core::Atom], result: &AnswerSet) -> String {
    let mut query_vars = Vec::new();
    for goal in goals {
        goal.collect_vars(&mut query_vars);
    }
    if query_vars.is_empty() {
        return if result.is_provable() { "yes\n" } else { "no\n" }.to_string();
    }
    let mut lines: Vec<String> = result.answers.iter().map(|a| a.render()).collect();
    lines.sort();
    let mut out = String::new();
    for line in lines {
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn cmd_verify(
    log: Option<&Path>,
    kb_dir: Option<&Path>,
    sigs: Option<&Path>,
    kb: Option<&Path>,
    registry: Option<&Path>,
) -> Result<ExitCode> {
    let selected = [log.is_some(), kb_dir.is_some(), sigs.is_some()]
        .iter()
        .filter(|&&s| s)
        .count();
    if selected != 1 {
        return Ok(usage_error(
            "pick exactly one of --log, --kb-dir, or --sigs",
        ));
    }

    if let Some(log_path) = log {
        let text = std::fs::read_to_string(log_path)
            .with_context(|| format!("reading {}", log_path.display()))?;
        let log = match HashChainLog::parse_text(&text) {
            Ok(log) => log,
            Err(e) => {
                println!("fail {e}");
                return Ok(ExitCode::from(1));
            }
        };
        return Ok(match log.verify() {
            Ok(()) => {
                println!("pass");
                ExitCode::SUCCESS
            }
            Err(fault) => {
                println!("fail at entry {}", fault.index);
                ExitCode::from(1)
            }
        });
    }

    if let Some(dir) = kb_dir {
        let manifest_text = std::fs::read_to_string(dir.join(MANIFEST_FILE))
            .with_context(|| format!("reading {}", dir.join(MANIFEST_FILE).display()))?;
        let records = std::fs::read(dir.join(RECORDS_FILE))
            .with_context(|| format!("reading {}", dir.join(RECORDS_FILE).display()))?;
        let manifest = match Manifest::parse_text(&manifest_text) {
            Ok(m) => m,
            Err(e) => {
                println!("fail {e}");
                return Ok(ExitCode::from(1));
            }
        };
        let Some(table) = RecordTable::from_bytes(&records, manifest.n(), manifest.record_len)
        else {
            println!(
                "fail record table is {} bytes, expected {}",
                records.len(),
                manifest.n() * manifest.record_len
            );
            return Ok(ExitCode::from(1));
        };
        return Ok(if verify_kb(&manifest, &table) {
            println!("pass");
            ExitCode::SUCCESS
        } else {
            println!("fail digest mismatch");
            ExitCode::from(1)
        });
    }

    let sigs_path = sigs.expect("checked above");
    let (Some(kb_path), Some(registry_path)) = (kb, registry) else {
        return Ok(usage_error("--sigs requires --kb and --registry"));
    };
    let sidecar_text = std::fs::read_to_string(sigs_path)
        .with_context(|| format!("reading {}", sigs_path.display()))?;
    let kb_text = std::fs::read_to_string(kb_path)
        .with_context(|| format!("reading {}", kb_path.display()))?;
    let registry_text = std::fs::read_to_string(registry_path)
        .with_context(|| format!("reading {}", registry_path.display()))?;
    let registry = match KeyRegistry::parse_text(&registry_text) {
        Ok(r) => r,
        Err(e) => {
            println!("fail {e}");
            return Ok(ExitCode::from(1));
        }
    };
    let entries = match pkr_core::integrity::sidecar_parse_text(&sidecar_text) {
        Ok(e) => e,
        Err(e) => {
            println!("fail {e}");
            return Ok(ExitCode::from(1));
        }
    };
    let clauses = match parse_program(&kb_text) {
        Ok(c) => c,
        Err(e) => {
            println!("fail KB: {e}");
            return Ok(ExitCode::from(1));
        }
    };
    Ok(
        match pkr_core::integrity::verify_sidecar(&clauses, &entries, &registry) {
            Ok(()) => {
                println!("pass");
                ExitCode::SUCCESS
            }
            Err(pkr_core::integrity::SidecarFault::CountMismatch { entries, clauses }) => {
                println!("fail sidecar has {entries} entries for {clauses} clauses");
                ExitCode::from(1)
            }
            Err(pkr_core::integrity::SidecarFault::Clause { index, fault }) => {
                println!("fail at clause {index} ({fault})");
                ExitCode::from(1)
            }
        },
    )
}

fn cmd_attack_eval(
    clean_path: &Path,
    adv_path: &Path,
    workload_path: &Path,
    trigger: &str,
    malicious: &str,
    defended: bool,
    registry: Option<&Path>,
) -> Result<ExitCode> {
    let trigger_tokens: Vec<String> = trigger.split_whitespace().map(str::to_string).collect();
    if trigger_tokens.is_empty() {
        return Ok(usage_error("--trigger must contain at least one token"));
    }
    let trigger = Trigger::new(trigger_tokens);

    let clean_text = std::fs::read_to_string(clean_path)
        .with_context(|| format!("reading {}", clean_path.display()))?;
    let adv_text = std::fs::read_to_string(adv_path)
        .with_context(|| format!("reading {}", adv_path.display()))?;
    let workload_text = std::fs::read_to_string(workload_path)
        .with_context(|| format!("reading {}", workload_path.display()))?;

    let clean_flagged = parse_store_file(&clean_text).context("parsing clean store")?;
    let adv_flagged = parse_store_file(&adv_text).context("parsing adversarial store")?;
    let workload = parse_workload_file(&workload_text).context("parsing workload")?;

    if !defended {
        let clean = MemoryStore::new(clean_flagged.into_iter().map(|(p, _)| p).collect());
        let adversarial: Vec<MemoryPair> = adv_flagged.into_iter().map(|(p, _)| p).collect();
        let store = poison(&clean, &adversarial);
        let asr = attack_success_rate(&workload, &trigger, &store, malicious);
        let benign = benign_accuracy(&workload, &store);
        println!("asr={asr:.4} benign={benign:.4}");
        return Ok(ExitCode::SUCCESS);
    }

    let Some(registry_path) = registry else {
        return Ok(usage_error("--defended requires --registry"));
    };
    let registry_text = std::fs::read_to_string(registry_path)
        .with_context(|| format!("reading {}", registry_path.display()))?;
    let registry = KeyRegistry::parse_text(&registry_text).context("parsing registry")?;
    let Some((signer_agent, mac_key)) = registry.first_mac_agent() else {
        bail!("the registry needs an hmac-sha256 entry to attest signed:yes fixtures");
    };
    let signer_agent = signer_agent.to_string();
    let signer = SigningKey::mac(mac_key.to_vec());

    // `signed:yes` pairs get a real attestation from the registry's shared
    // key; `signed:no` pairs stay bare and fall to the filter.
    let attach = |flagged: Vec<(MemoryPair, SignedFlag)>| -> Vec<MemoryPair> {
        flagged
            .into_iter()
            .map(|(pair, flag)| match flag {
                SignedFlag::Yes => pair.attested_by(&signer_agent, &signer),
                SignedFlag::No => pair,
            })
            .collect()
    };
    let clean = MemoryStore::new(attach(clean_flagged));
    let adversarial = attach(adv_flagged);

    let combined = poison(&clean, &adversarial);
    let store = MemoryStore::new(filter_verified(&combined.pairs, &registry));
    let asr = attack_success_rate(&workload, &trigger, &store, malicious);
    let benign = benign_accuracy(&workload, &store);
    println!("asr={asr:.4} benign={benign:.4}");
    Ok(ExitCode::SUCCESS)
}
