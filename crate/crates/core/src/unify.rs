//! Substitutions, most-general unification with occurs check, and
//! rename-apart support for the resolution engine.

use crate::ast::{Atom, HornClause, Term};
use std::collections::{BTreeMap, HashMap};

/// A finite map from variable names to terms. Bindings are triangular
/// (a bound term may itself mention bound variables); [`Substitution::apply`]
/// resolves chains fully, so applying twice equals applying once. The occurs
/// check keeps the binding graph acyclic.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Substitution {
    bindings: BTreeMap<String, Term>,
}

impl Substitution {
    pub fn new() -> Self {
        Substitution::default()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn get(&self, var: &str) -> Option<&Term> {
        self.bindings.get(var)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Term)> {
        self.bindings.iter()
    }

    /// Follows variable bindings until an unbound variable or a non-variable
    /// term is reached.
    fn walk(&self, term: &Term) -> Term {
        let mut current = term.clone();
        while let Term::Var(v) = &current {
            match self.bindings.get(v) {
                Some(next) => current = next.clone(),
                None => break,
            }
        }
        current
    }

    /// Applies the substitution exhaustively, resolving through chains of
    /// bindings. The result contains no variable bound by `self`.
    pub fn apply(&self, term: &Term) -> Term {
        let walked = self.walk(term);
        match walked {
            Term::Compound(functor, args) => {
                Term::Compound(functor, args.iter().map(|a| self.apply(a)).collect())
            }
            other => other,
        }
    }

    pub fn apply_atom(&self, atom: &Atom) -> Atom {
        Atom {
            predicate: atom.predicate.clone(),
            args: atom.args.iter().map(|a| self.apply(a)).collect(),
        }
    }

    /// True if `var` occurs in `term` once all bindings are resolved.
    fn occurs(&self, var: &str, term: &Term) -> bool {
        match self.walk(term) {
            Term::Var(v) => v == var,
            Term::Const(_) => false,
            Term::Compound(_, args) => args.iter().any(|a| self.occurs(var, a)),
        }
    }
}

/// Unifies two terms under an existing substitution, returning the extended
/// substitution or `None` when the terms do not unify. The returned
/// substitution is most general; bindings that would be cyclic are rejected
/// by the occurs check.
pub fn unify_terms(a: &Term, b: &Term, subst: &Substitution) -> Option<Substitution> {
    let a = subst.walk(a);
    let b = subst.walk(b);
    match (&a, &b) {
        (Term::Var(x), Term::Var(y)) if x == y => Some(subst.clone()),
        (Term::Var(x), other) | (other, Term::Var(x)) => {
            if subst.occurs(x, other) {
                return None;
            }
            let mut extended = subst.clone();
            extended.bindings.insert(x.clone(), other.clone());
            Some(extended)
        }
        (Term::Const(x), Term::Const(y)) => (x == y).then(|| subst.clone()),
        (Term::Compound(f, xs), Term::Compound(g, ys)) => {
            if f != g || xs.len() != ys.len() {
                return None;
            }
            let mut current = subst.clone();
            for (x, y) in xs.iter().zip(ys) {
                current = unify_terms(x, y, &current)?;
            }
            Some(current)
        }
        _ => None,
    }
}

/// Unifies two atoms: predicates and arities must match, then arguments
/// unify pairwise. Failure is a value, not an error.
pub fn unify(a: &Atom, b: &Atom, subst: &Substitution) -> Option<Substitution> {
    if a.predicate != b.predicate || a.args.len() != b.args.len() {
        return None;
    }
    let mut current = subst.clone();
    for (x, y) in a.args.iter().zip(&b.args) {
        current = unify_terms(x, y, &current)?;
    }
    Some(current)
}

/// Source of globally fresh variable names of the form `_G<n>`.
#[derive(Debug, Default)]
pub struct VarGen {
    next: u64,
}

impl VarGen {
    pub fn new() -> Self {
        VarGen::default()
    }

    pub fn fresh(&mut self) -> String {
        let name = format!("_G{}", self.next);
        self.next += 1;
        name
    }
}

fn rename_term(term: &Term, renames: &mut HashMap<String, String>, gen: &mut VarGen) -> Term {
    match term {
        Term::Var(v) => {
            let fresh = renames
                .entry(v.clone())
                .or_insert_with(|| gen.fresh())
                .clone();
            Term::Var(fresh)
        }
        Term::Const(_) => term.clone(),
        Term::Compound(functor, args) => Term::Compound(
            functor.clone(),
            args.iter().map(|a| rename_term(a, renames, gen)).collect(),
        ),
    }
}

fn rename_atom(atom: &Atom, renames: &mut HashMap<String, String>, gen: &mut VarGen) -> Atom {
    Atom {
        predicate: atom.predicate.clone(),
        args: atom
            .args
            .iter()
            .map(|a| rename_term(a, renames, gen))
            .collect(),
    }
}

/// Returns an alpha-equivalent copy of the clause with every variable
/// replaced by a globally fresh one.
pub fn rename_apart(clause: &HornClause, gen: &mut VarGen) -> HornClause {
    let mut renames = HashMap::new();
    HornClause {
        head: rename_atom(&clause.head, &mut renames, gen),
        body: clause
            .body
            .iter()
            .map(|a| rename_atom(a, &mut renames, gen))
            .collect(),
        provenance: clause.provenance.clone(),
    }
}
