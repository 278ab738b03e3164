//! Framed TCP protocol between inference clients and knowledge-base
//! replicas. One request/response pair per frame; requests are a public
//! manifest fetch, a masked-XOR record fetch, or a k-anonymity batch fetch.

pub mod client;
pub mod frame;
pub mod server;

pub use client::{ClientError, RemoteAccess, RetrievalMode, ServerConn, Traffic};
pub use frame::{read_frame, write_frame, Frame, FrameError};
pub use server::{KbServer, LoadError, ServerState};
