//! `kbserve`: host one knowledge-base replica. Loads and encodes the KB
//! file, prints a ready line, then serves until terminated. Set `PKR_LOG=1`
//! for per-request logging on stderr.

use clap::Parser;
use pkr_net::{KbServer, ServerState};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "kbserve", version, about = "Knowledge-base replica server")]
struct Args {
    /// KB text file to host.
    #[arg(long)]
    kb: PathBuf,
    /// Bind address, e.g. 127.0.0.1:7001 (port 0 picks a free port).
    #[arg(long)]
    listen: String,
    /// Replica identifier used in logs.
    #[arg(long)]
    id: String,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let state = match ServerState::from_kb_file(&args.kb, &args.id) {
        Ok(state) => state,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let manifest = &state.manifest;
    let ready = format!(
        "kbserve id={} n={} record_len={} digest={}",
        args.id,
        manifest.n(),
        manifest.record_len,
        manifest.kb_digest
    );
    let server = match KbServer::bind(state, args.listen.as_str()) {
        Ok(server) => server,
        Err(e) => {
            eprintln!("error: binding {}: {e}", args.listen);
            return ExitCode::from(1);
        }
    };
    match server.local_addr() {
        Ok(addr) => println!("{ready} listening={addr}"),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let _ = std::io::stdout().flush();
    if let Err(e) = server.run() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
