//! Shared desk-scale fixtures: the mortals/vehicles KB used across suites, a
//! transitive-closure graph builder, and a seeded generator for random
//! function-free programs.

use pkr_core::ast::{Atom, Const, HornClause, Term};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Six clauses contributed by three agents: two mortality rules with their
/// supporting facts, and two vehicle rules with no supporting facts.
pub const MORTALS_KB: &str = "\
% @from A
mortal(X) :- man(X).
% @from A
man(socrates).
% @from B
mortal(X) :- woman(X).
% @from B
woman(hypathia).
% @from C
vehicle(X) :- car(X).
% @from C
vehicle(X) :- bicycle(X).
";

/// Directed cycle over `n` nodes (a -> b -> ... -> a) with the usual
/// edge/path transitive-closure rules. Every node reaches every node, so the
/// least model has n*n path facts.
pub fn cycle_kb(n: usize) -> String {
    assert!((1..=26).contains(&n), "node names are single letters");
    let mut out = String::new();
    for i in 0..n {
        let from = (b'a' + i as u8) as char;
        let to = (b'a' + ((i + 1) % n) as u8) as char;
        out.push_str(&format!("edge({from}, {to}).\n"));
    }
    out.push_str("path(X, Y) :- edge(X, Y).\n");
    out.push_str("path(X, Z) :- edge(X, Y), path(Y, Z).\n");
    out
}

/// Reorders a program deterministically from a seed, keeping provenance
/// attached to its clause.
pub fn permute_program(clauses: &[HornClause], seed: u64) -> Vec<HornClause> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut shuffled = clauses.to_vec();
    shuffled.shuffle(&mut rng);
    shuffled
}

/// Generates a random function-free program: at most 15 clauses, arity at
/// most 2, at most 4 constants, recursion permitted. Programs are
/// range-restricted (every head variable occurs in the body) so all engine
/// answers come out ground. Non-recursive rules are layered so they form an
/// acyclic call graph with selective joins, and recursion appears as a
/// closure template over a functional base relation; both shapes keep plain
/// all-solutions depth-first search far away from exponential walk
/// enumeration.
pub fn random_program(seed: u64) -> Vec<HornClause> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let pred_pool: [(&str, usize); 5] = [("p", 1), ("q", 1), ("r", 2), ("s", 2), ("t", 1)];
    let n_preds = rng.random_range(2..=4usize);
    let mut preds: Vec<(&str, usize)> = pred_pool.to_vec();
    preds.shuffle(&mut rng);
    preds.truncate(n_preds);

    let n_consts = rng.random_range(2..=4usize);
    let consts: Vec<Term> = ["a", "b", "c", "d"][..n_consts]
        .iter()
        .map(|c| Term::Const(Const::Name(c.to_string())))
        .collect();

    let mut clauses: Vec<HornClause> = Vec::new();

    // Ground facts.
    let n_facts = rng.random_range(2..=7usize);
    for _ in 0..n_facts {
        let (name, arity) = *preds.choose(&mut rng).unwrap();
        let args = (0..arity)
            .map(|_| consts.choose(&mut rng).unwrap().clone())
            .collect();
        clauses.push(HornClause::fact(Atom::new(name, args)));
    }

    // Non-recursive rules: predicate at layer i may only reference lower
    // layers, so the call graph of this part is acyclic.
    let n_rules = rng.random_range(0..=4usize);
    let mut rules_per_pred = vec![0usize; preds.len()];
    let var_names = ["X", "Y", "Z"];
    for _ in 0..n_rules {
        let head_layer = rng.random_range(1..preds.len());
        if rules_per_pred[head_layer] >= 2 {
            continue;
        }
        let body_len = rng.random_range(1..=2usize);
        let mut body = Vec::new();
        for _ in 0..body_len {
            let b = rng.random_range(0..head_layer);
            let (name, arity) = preds[b];
            let args = (0..arity)
                .map(|_| {
                    if rng.random_range(0..5) < 4 {
                        Term::var(*var_names.choose(&mut rng).unwrap())
                    } else {
                        consts.choose(&mut rng).unwrap().clone()
                    }
                })
                .collect();
            body.push(Atom::new(name, args));
        }
        let mut body_vars = Vec::new();
        for atom in &body {
            atom.collect_vars(&mut body_vars);
        }
        let (head_name, head_arity) = preds[head_layer];
        let head_args = (0..head_arity)
            .map(|_| {
                if body_vars.is_empty() {
                    consts.choose(&mut rng).unwrap().clone()
                } else {
                    Term::var(body_vars.choose(&mut rng).unwrap().clone())
                }
            })
            .collect();
        rules_per_pred[head_layer] += 1;
        clauses.push(HornClause::rule(Atom::new(head_name, head_args), body));
    }

    // One recursion construct in half the programs, over a fresh base
    // relation kept functional (distinct sources, out-degree 1) so walks
    // through it never branch.
    if rng.random_range(0..2) == 0 {
        let mut sources = consts.clone();
        sources.shuffle(&mut rng);
        let n_links = rng.random_range(2..=sources.len());
        for source in sources.iter().take(n_links) {
            let target = consts.choose(&mut rng).unwrap().clone();
            clauses.push(HornClause::fact(Atom::new(
                "link",
                vec![source.clone(), target],
            )));
        }
        if rng.random_range(0..2) == 0 {
            // Binary closure: conn = link+.
            clauses.push(HornClause::rule(
                Atom::new("conn", vec![Term::var("X"), Term::var("Y")]),
                vec![Atom::new("link", vec![Term::var("X"), Term::var("Y")])],
            ));
            clauses.push(HornClause::rule(
                Atom::new("conn", vec![Term::var("X"), Term::var("Z")]),
                vec![
                    Atom::new("link", vec![Term::var("X"), Term::var("Y")]),
                    Atom::new("conn", vec![Term::var("Y"), Term::var("Z")]),
                ],
            ));
        } else {
            // Unary reachability toward marked nodes.
            clauses.push(HornClause::fact(Atom::new(
                "mark",
                vec![consts.choose(&mut rng).unwrap().clone()],
            )));
            clauses.push(HornClause::rule(
                Atom::new("hits", vec![Term::var("X")]),
                vec![Atom::new("mark", vec![Term::var("X")])],
            ));
            clauses.push(HornClause::rule(
                Atom::new("hits", vec![Term::var("X")]),
                vec![
                    Atom::new("link", vec![Term::var("X"), Term::var("Y")]),
                    Atom::new("hits", vec![Term::var("Y")]),
                ],
            ));
        }
    }

    clauses.truncate(15);
    clauses.shuffle(&mut rng);
    clauses
}

#[cfg(test)]
mod tests {
    use super::*;
    use pkr_core::parser::parse_program;

    #[test]
    fn mortals_kb_parses_with_provenance() {
        let clauses = parse_program(MORTALS_KB).unwrap();
        assert_eq!(clauses.len(), 6);
        assert_eq!(clauses[0].provenance.as_deref(), Some("A"));
        assert_eq!(clauses[5].provenance.as_deref(), Some("C"));
    }

    #[test]
    fn cycle_kb_parses() {
        let clauses = parse_program(&cycle_kb(4)).unwrap();
        assert_eq!(clauses.len(), 6);
    }

    #[test]
    fn random_programs_are_deterministic_and_bounded() {
        for seed in 0..50 {
            let a = random_program(seed);
            let b = random_program(seed);
            assert_eq!(a, b);
            assert!(a.len() <= 15);
            for clause in &a {
                assert!(clause.head.args.len() <= 2);
                // Range restriction: head vars appear in the body.
                let mut head_vars = Vec::new();
                clause.head.collect_vars(&mut head_vars);
                let mut body_vars = Vec::new();
                for atom in &clause.body {
                    atom.collect_vars(&mut body_vars);
                }
                for v in head_vars {
                    assert!(body_vars.contains(&v), "unrestricted head var in {clause}");
                }
            }
        }
    }

    #[test]
    fn random_programs_round_trip_through_text() {
        for seed in 0..20 {
            let program = random_program(seed);
            let text = pkr_core::ast::program_to_text(&program);
            let reparsed = parse_program(&text).unwrap();
            assert_eq!(reparsed, program);
        }
    }

    #[test]
    fn permutation_preserves_the_clause_multiset() {
        let clauses = parse_program(MORTALS_KB).unwrap();
        let permuted = permute_program(&clauses, 9);
        let mut a: Vec<String> = clauses.iter().map(|c| c.canonical()).collect();
        let mut b: Vec<String> = permuted.iter().map(|c| c.canonical()).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }
}
