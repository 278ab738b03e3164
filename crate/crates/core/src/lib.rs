//! Core building blocks for privacy-preserving Horn-clause inference:
//! the clause model and its Prolog-style syntax, unification, bucketed
//! record encoding of a knowledge base, the oblivious-retrieval protocol
//! math, a session clause cache, integrity primitives, and the resolution
//! engine that ties them together behind a knowledge-access trait.

pub mod ast;
pub mod cache;
pub mod encoding;
pub mod engine;
pub mod integrity;
pub mod parser;
pub mod pir;
pub mod unify;

pub use ast::{Atom, Const, HornClause, Signature, Term};
pub use cache::{CacheStats, ClauseCache};
pub use encoding::{encode_kb, index_of, Manifest, RecordTable};
pub use engine::{solve, AccessError, AnswerSet, EngineConfig, EngineError, KnowledgeAccess, LocalAccess};
pub use parser::{parse_program, parse_query, ParseError};
pub use unify::{rename_apart, unify, Substitution, VarGen};
