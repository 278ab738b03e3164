//! Independent reference implementations used only by test suites: a naive
//! bottom-up fixpoint for function-free programs, a plain XOR-over-rows
//! loop, and a linear-scan token retriever. None of them share logic with
//! the implementations they check; being slow and obvious is the point.

pub mod fixtures;

use pkr_core::ast::{Atom, HornClause, Term};
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("fixpoint oracle only handles function-free programs")]
    CompoundTerm,
    #[error("mask has {mask} bits but the table has {rows} rows")]
    LengthMismatch { mask: usize, rows: usize },
    #[error("rows have unequal lengths")]
    RaggedRows,
}

fn term_is_function_free(term: &Term) -> bool {
    !matches!(term, Term::Compound(_, _))
}

fn clause_is_function_free(clause: &HornClause) -> bool {
    clause.head.args.iter().all(term_is_function_free)
        && clause
            .body
            .iter()
            .all(|a| a.args.iter().all(term_is_function_free))
}

/// Least model of a function-free program, computed by grounding every
/// clause over the constants appearing in the program and iterating the
/// immediate-consequence step to a fixpoint. Terminates because the ground
/// atom universe is finite.
pub fn fixpoint(kb: &[HornClause]) -> Result<BTreeSet<Atom>, OracleError> {
    if !kb.iter().all(clause_is_function_free) {
        return Err(OracleError::CompoundTerm);
    }

    let mut constants: BTreeSet<Term> = BTreeSet::new();
    for clause in kb {
        for atom in std::iter::once(&clause.head).chain(&clause.body) {
            for arg in &atom.args {
                if let Term::Const(_) = arg {
                    constants.insert(arg.clone());
                }
            }
        }
    }
    let universe: Vec<Term> = constants.into_iter().collect();

    // Ground every clause up front.
    let mut ground_clauses: Vec<(Atom, Vec<Atom>)> = Vec::new();
    for clause in kb {
        let vars = clause.vars();
        if vars.is_empty() {
            ground_clauses.push((clause.head.clone(), clause.body.clone()));
            continue;
        }
        if universe.is_empty() {
            continue; // no constants, no ground instances
        }
        let mut picks = vec![0usize; vars.len()];
        loop {
            let env: HashMap<&str, &Term> = vars
                .iter()
                .zip(&picks)
                .map(|(v, &i)| (v.as_str(), &universe[i]))
                .collect();
            let instantiate = |atom: &Atom| Atom {
                predicate: atom.predicate.clone(),
                args: atom
                    .args
                    .iter()
                    .map(|t| match t {
                        Term::Var(v) => (*env.get(v.as_str()).unwrap()).clone(),
                        other => other.clone(),
                    })
                    .collect(),
            };
            ground_clauses.push((
                instantiate(&clause.head),
                clause.body.iter().map(instantiate).collect(),
            ));
            let mut pos = 0;
            loop {
                if pos == picks.len() {
                    break;
                }
                picks[pos] += 1;
                if picks[pos] < universe.len() {
                    break;
                }
                picks[pos] = 0;
                pos += 1;
            }
            if picks.iter().all(|&p| p == 0) {
                break;
            }
        }
    }

    let mut facts: BTreeSet<Atom> = BTreeSet::new();
    loop {
        let mut added = false;
        for (head, body) in &ground_clauses {
            if body.iter().all(|atom| facts.contains(atom)) && facts.insert(head.clone()) {
                added = true;
            }
        }
        if !added {
            return Ok(facts);
        }
    }
}

/// Reference XOR of the selected rows, written as the obvious indexed loop.
pub fn naive_xor(rows: &[Vec<u8>], mask: &[bool]) -> Result<Vec<u8>, OracleError> {
    if rows.len() != mask.len() {
        return Err(OracleError::LengthMismatch {
            mask: mask.len(),
            rows: rows.len(),
        });
    }
    let width = rows.first().map(Vec::len).unwrap_or(0);
    if rows.iter().any(|r| r.len() != width) {
        return Err(OracleError::RaggedRows);
    }
    let mut out = vec![0u8; width];
    for i in 0..rows.len() {
        if mask[i] {
            for j in 0..width {
                out[j] ^= rows[i][j];
            }
        }
    }
    Ok(out)
}

/// Reference token retrieval: scans every (key, value) pair and returns the
/// index of the best Jaccard match, breaking score ties toward the
/// lexicographically smallest key and then the earliest pair.
pub fn scan_retrieve(pairs: &[(Vec<String>, String)], query: &[String]) -> Option<usize> {
    fn overlap(a: &[String], b: &[String]) -> (u64, u64) {
        let xs: BTreeSet<&String> = a.iter().collect();
        let ys: BTreeSet<&String> = b.iter().collect();
        let inter = xs.intersection(&ys).count() as u64;
        let union = xs.union(&ys).count() as u64;
        (inter, union)
    }

    let mut best: Option<(usize, (u64, u64))> = None;
    for (i, (key, _)) in pairs.iter().enumerate() {
        let (inter, union) = overlap(key, query);
        let better = match best {
            None => true,
            Some((best_i, (bi, bu))) => {
                // Compare inter/union as exact rationals; empty unions count
                // as a full match.
                let lhs = inter as u128 * bu.max(1) as u128;
                let rhs = bi as u128 * union.max(1) as u128;
                if lhs != rhs {
                    lhs > rhs
                } else {
                    pairs[i].0 < pairs[best_i].0
                }
            }
        };
        if better {
            best = Some((i, (inter, union)));
        }
    }
    best.map(|(i, _)| i)
}
