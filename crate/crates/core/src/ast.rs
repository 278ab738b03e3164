//! Symbolic knowledge representation: terms, atoms, Horn clauses, and
//! predicate signatures, plus the canonical text form everything downstream
//! (record encoding, hashing, caching) relies on.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

/// A first-order term. Variables start with an uppercase letter or `_`;
/// constants are lowercase names, quoted names, or integers; compound terms
/// have a lowercase functor and at least one argument.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(Const),
    Compound(String, Vec<Term>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Const {
    Name(String),
    Int(i64),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn name(name: impl Into<String>) -> Self {
        Term::Const(Const::Name(name.into()))
    }

    pub fn int(value: i64) -> Self {
        Term::Const(Const::Int(value))
    }

    pub fn compound(functor: impl Into<String>, args: Vec<Term>) -> Self {
        Term::Compound(functor.into(), args)
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Const(_) => true,
            Term::Compound(_, args) => args.iter().all(Term::is_ground),
        }
    }

    /// Appends variable names in first-occurrence order, skipping duplicates.
    pub fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Term::Var(v) => {
                if !out.iter().any(|seen| seen == v) {
                    out.push(v.clone());
                }
            }
            Term::Const(_) => {}
            Term::Compound(_, args) => {
                for arg in args {
                    arg.collect_vars(out);
                }
            }
        }
    }
}

/// A predicate applied to zero or more terms.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Atom {
            predicate: predicate.into(),
            args,
        }
    }

    pub fn signature(&self) -> Signature {
        Signature {
            name: self.predicate.clone(),
            arity: self.args.len(),
        }
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_ground)
    }

    pub fn collect_vars(&self, out: &mut Vec<String>) {
        for arg in &self.args {
            arg.collect_vars(out);
        }
    }
}

/// A Horn clause: one head atom and a possibly empty body. A clause with an
/// empty body is a fact. `provenance` is the originating agent id from a
/// `% @from <id>` annotation; it is metadata only and never participates in
/// inference or in the canonical text form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HornClause {
    pub head: Atom,
    pub body: Vec<Atom>,
    pub provenance: Option<String>,
}

impl HornClause {
    pub fn fact(head: Atom) -> Self {
        HornClause {
            head,
            body: Vec::new(),
            provenance: None,
        }
    }

    pub fn rule(head: Atom, body: Vec<Atom>) -> Self {
        HornClause {
            head,
            body,
            provenance: None,
        }
    }

    pub fn with_provenance(mut self, agent: impl Into<String>) -> Self {
        self.provenance = Some(agent.into());
        self
    }

    pub fn is_fact(&self) -> bool {
        self.body.is_empty()
    }

    /// Variable names in first-occurrence order, head first.
    pub fn vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.head.collect_vars(&mut out);
        for atom in &self.body {
            atom.collect_vars(&mut out);
        }
        out
    }

    /// Canonical text form: variables renamed to `V0, V1, ...` in
    /// first-occurrence order, single space after commas, terminating
    /// period, no provenance. Two alpha-equivalent clauses have identical
    /// canonical forms, which makes this the unit of hashing, record
    /// encoding, and bucket-level deduplication.
    pub fn canonical(&self) -> String {
        let mut renames = HashMap::new();
        for (i, v) in self.vars().into_iter().enumerate() {
            renames.insert(v, format!("V{i}"));
        }
        let mut out = String::new();
        write_atom(&mut out, &self.head, &renames);
        if !self.body.is_empty() {
            out.push_str(" :- ");
            for (i, atom) in self.body.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_atom(&mut out, atom, &renames);
            }
        }
        out.push('.');
        out
    }
}

/// A predicate name paired with its arity; the retrieval key of the encoded
/// knowledge base. Ordering is the lexicographic order of the canonical
/// `name/arity` text, so `p/10` sorts before `p/2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Signature {
    pub name: String,
    pub arity: usize,
}

impl Signature {
    pub fn new(name: impl Into<String>, arity: usize) -> Self {
        Signature {
            name: name.into(),
            arity,
        }
    }

    /// Parses the canonical `name/arity` form.
    pub fn parse(text: &str) -> Option<Signature> {
        let (name, arity) = text.rsplit_once('/')?;
        if !is_plain_name(name) {
            return None;
        }
        let arity: usize = arity.parse().ok()?;
        Some(Signature::new(name, arity))
    }
}

impl Ord for Signature {
    fn cmp(&self, other: &Self) -> Ordering {
        // Equivalent to comparing the canonical strings: '/' sorts below
        // every identifier character, so the name comparison dominates.
        self.name
            .cmp(&other.name)
            .then_with(|| self.arity.to_string().cmp(&other.arity.to_string()))
    }
}

impl PartialOrd for Signature {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.arity)
    }
}

/// True for `[A-Z_][A-Za-z0-9_]*`.
pub fn is_variable_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_uppercase() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// True for `[a-z][A-Za-z0-9_]*`.
pub fn is_plain_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn write_quoted(out: &mut String, name: &str) {
    out.push('\'');
    for c in name.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\'' => out.push_str("\\'"),
            other => out.push(other),
        }
    }
    out.push('\'');
}

fn write_term(out: &mut String, term: &Term, renames: &HashMap<String, String>) {
    match term {
        Term::Var(v) => match renames.get(v) {
            Some(renamed) => out.push_str(renamed),
            None => out.push_str(v),
        },
        Term::Const(Const::Name(name)) => {
            if is_plain_name(name) {
                out.push_str(name);
            } else {
                write_quoted(out, name);
            }
        }
        Term::Const(Const::Int(i)) => out.push_str(&i.to_string()),
        Term::Compound(functor, args) => {
            out.push_str(functor);
            out.push('(');
            for (i, arg) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_term(out, arg, renames);
            }
            out.push(')');
        }
    }
}

fn write_atom(out: &mut String, atom: &Atom, renames: &HashMap<String, String>) {
    out.push_str(&atom.predicate);
    if !atom.args.is_empty() {
        out.push('(');
        for (i, arg) in atom.args.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            write_term(out, arg, renames);
        }
        out.push(')');
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        write_term(&mut out, self, &HashMap::new());
        f.write_str(&out)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        write_atom(&mut out, self, &HashMap::new());
        f.write_str(&out)
    }
}

impl fmt::Display for HornClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        write_atom(&mut out, &self.head, &HashMap::new());
        if !self.body.is_empty() {
            out.push_str(" :- ");
            for (i, atom) in self.body.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_atom(&mut out, atom, &HashMap::new());
            }
        }
        out.push('.');
        f.write_str(&out)
    }
}

/// Renders a program back to KB file text, emitting a `% @from <id>` line
/// before each clause that carries provenance.
pub fn program_to_text(clauses: &[HornClause]) -> String {
    let mut out = String::new();
    for clause in clauses {
        if let Some(agent) = &clause.provenance {
            out.push_str("% @from ");
            out.push_str(agent);
            out.push('\n');
        }
        out.push_str(&clause.to_string());
        out.push('\n');
    }
    out
}
