//! Depth-limited resolution engine returning all solutions. Knowledge access
//! goes through a trait so a local clause set and the remote retrieval
//! backends are interchangeable; the engine itself never sees where clauses
//! come from.

use crate::ast::{Atom, HornClause, Signature, Term};
use crate::encoding::build_buckets;
use crate::unify::{rename_apart, unify, Substitution, VarGen};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use thiserror::Error;

/// Source of clauses for a given head signature. `fetch` must be
/// deterministic for a fixed KB and return an empty list for signatures the
/// KB does not define.
pub trait KnowledgeAccess {
    fn fetch(&mut self, sig: &Signature) -> Result<Vec<HornClause>, AccessError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AccessError {
    #[error("network: {0}")]
    Network(String),
    #[error("record decode: {0}")]
    Decode(String),
    #[error("integrity: {0}")]
    Integrity(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("query has no goals")]
    EmptyQuery,
    #[error("knowledge access failed: {0}")]
    Access(#[from] AccessError),
}

/// In-memory access to a clause set, bucketed exactly like the encoded form
/// (sorted, deduplicated), so local answers match the remote backends
/// clause-for-clause.
#[derive(Debug, Clone)]
pub struct LocalAccess {
    buckets: BTreeMap<Signature, Vec<HornClause>>,
}

impl LocalAccess {
    pub fn new(clauses: &[HornClause]) -> Self {
        LocalAccess {
            buckets: build_buckets(clauses).into_iter().collect(),
        }
    }
}

impl KnowledgeAccess for LocalAccess {
    fn fetch(&mut self, sig: &Signature) -> Result<Vec<HornClause>, AccessError> {
        Ok(self.buckets.get(sig).cloned().unwrap_or_default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineConfig {
    /// Maximum number of resolution steps along a single derivation branch.
    pub max_depth: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { max_depth: 64 }
    }
}

/// One solution: the query's variables mapped to terms. Residual free
/// variables are canonically renamed `_0, _1, ...`, so alpha-equivalent
/// solutions compare equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Answer {
    bindings: BTreeMap<String, Term>,
}

impl Answer {
    pub fn bindings(&self) -> impl Iterator<Item = (&String, &Term)> {
        self.bindings.iter()
    }

    pub fn get(&self, var: &str) -> Option<&Term> {
        self.bindings.get(var)
    }

    pub fn is_ground(&self) -> bool {
        self.bindings.values().all(Term::is_ground)
    }

    /// Empty for a variable-free query that succeeded.
    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    /// `X=socrates Y=f(a)` with variables in sorted order.
    pub fn render(&self) -> String {
        self.bindings
            .iter()
            .map(|(var, term)| format!("{var}={term}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// All solutions found for a query. `depth_limited` is set when at least one
/// branch was abandoned at the depth limit, i.e. the set may be incomplete.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerSet {
    pub answers: BTreeSet<Answer>,
    pub depth_limited: bool,
}

impl AnswerSet {
    pub fn is_provable(&self) -> bool {
        !self.answers.is_empty()
    }
}

struct Search<'a> {
    access: &'a mut dyn KnowledgeAccess,
    max_depth: usize,
    gen: VarGen,
    query_vars: Vec<String>,
    answers: BTreeSet<Answer>,
    depth_limited: bool,
}

impl Search<'_> {
    fn record(&mut self, subst: &Substitution) {
        let mut renames: HashMap<String, String> = HashMap::new();
        let mut next = 0usize;
        let mut bindings = BTreeMap::new();
        // Sorted traversal keeps residual naming canonical across branches.
        let mut vars = self.query_vars.clone();
        vars.sort();
        for var in vars {
            let term = subst.apply(&Term::Var(var.clone()));
            let term = canonicalize_residuals(&term, &mut renames, &mut next);
            bindings.insert(var, term);
        }
        self.answers.insert(Answer { bindings });
    }

    fn run(
        &mut self,
        goals: &[Atom],
        subst: &Substitution,
        steps_left: usize,
    ) -> Result<(), EngineError> {
        let Some((goal, rest)) = goals.split_first() else {
            self.record(subst);
            return Ok(());
        };
        if steps_left == 0 {
            self.depth_limited = true;
            return Ok(());
        }
        let clauses = self.access.fetch(&goal.signature())?;
        for clause in &clauses {
            let renamed = rename_apart(clause, &mut self.gen);
            if let Some(extended) = unify(goal, &renamed.head, subst) {
                let mut next_goals = renamed.body;
                next_goals.extend_from_slice(rest);
                self.run(&next_goals, &extended, steps_left - 1)?;
            }
        }
        Ok(())
    }
}

fn canonicalize_residuals(
    term: &Term,
    renames: &mut HashMap<String, String>,
    next: &mut usize,
) -> Term {
    match term {
        Term::Var(v) => {
            let fresh = renames.entry(v.clone()).or_insert_with(|| {
                let name = format!("_{next}");
                *next += 1;
                name
            });
            Term::Var(fresh.clone())
        }
        Term::Const(_) => term.clone(),
        Term::Compound(functor, args) => Term::Compound(
            functor.clone(),
            args.iter()
                .map(|a| canonicalize_residuals(a, renames, next))
                .collect(),
        ),
    }
}

/// Solves a goal conjunction by leftmost-first resolution, collecting every
/// solution reachable within the depth limit into a set. The answer set does
/// not depend on clause order inside buckets; a fetch failure aborts the
/// whole query rather than returning a partial set.
pub fn solve(
    goals: &[Atom],
    access: &mut dyn KnowledgeAccess,
    config: &EngineConfig,
) -> Result<AnswerSet, EngineError> {
    if goals.is_empty() {
        return Err(EngineError::EmptyQuery);
    }
    let mut query_vars = Vec::new();
    for goal in goals {
        goal.collect_vars(&mut query_vars);
    }
    let mut search = Search {
        access,
        max_depth: config.max_depth.max(1),
        gen: VarGen::new(),
        query_vars,
        answers: BTreeSet::new(),
        depth_limited: false,
    };
    let max_depth = search.max_depth;
    search.run(goals, &Substitution::new(), max_depth)?;
    Ok(AnswerSet {
        answers: search.answers,
        depth_limited: search.depth_limited,
    })
}
