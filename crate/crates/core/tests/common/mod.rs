//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use gramdiff_core::derivation::{perturb, perturbation_sites, replace_leaf, DerivationTree};
use gramdiff_core::grammar::{Grammar, Symbol};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Every derivation tree rooted at `lhs` whose height is at most `budget`.
pub fn enumerate_trees(g: &Grammar, lhs: &str, budget: usize) -> Vec<DerivationTree> {
    if budget == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (alt, symbols) in g.production(lhs).unwrap().alternatives.iter().enumerate() {
        let mut partial: Vec<Vec<DerivationTree>> = vec![Vec::new()];
        for sym in symbols {
            let options = match sym {
                Symbol::Terminal(t) => vec![DerivationTree::leaf(t.clone())],
                Symbol::Nonterminal(n) => enumerate_trees(g, n, budget - 1),
            };
            partial = partial
                .into_iter()
                .flat_map(|prefix| {
                    options.iter().map(move |o| {
                        let mut p = prefix.clone();
                        p.push(o.clone());
                        p
                    })
                })
                .collect();
        }
        out.extend(partial.into_iter().map(|children| DerivationTree::node(lhs, alt, children)));
    }
    out
}

/// One single-leaf move: leaf index, new text, parent's new alternative.
pub type Move = (usize, String, usize);

/// For each leaf, left to right: (parent lhs, parent alternative, parent's
/// child symbols, position of the leaf among them).
pub fn leaf_contexts(t: &DerivationTree) -> Vec<(String, usize, Vec<Symbol>, usize)> {
    let mut out = Vec::new();
    collect_contexts(t, &mut out);
    out
}

fn collect_contexts(t: &DerivationTree, out: &mut Vec<(String, usize, Vec<Symbol>, usize)>) {
    let symbols: Vec<Symbol> = t.children().iter().map(|c| c.symbol().clone()).collect();
    for (pos, c) in t.children().iter().enumerate() {
        if c.is_leaf() {
            out.push((t.symbol().text().to_owned(), t.alt_index().unwrap(), symbols.clone(), pos));
        } else {
            collect_contexts(c, out);
        }
    }
}

/// Every move that changes exactly one leaf to another grammar terminal and
/// leaves the parent's children matching some alternative of its production.
/// Tries every (leaf, terminal, alternative) combination.
pub fn single_leaf_substitutions(t: &DerivationTree, g: &Grammar) -> BTreeSet<Move> {
    let terminals = g.terminals();
    let mut out = BTreeSet::new();
    for (i, (lhs, _, symbols, pos)) in leaf_contexts(t).into_iter().enumerate() {
        let alternatives = &g.production(&lhs).unwrap().alternatives;
        for &term in &terminals {
            if symbols[pos].text() == term {
                continue;
            }
            let mut changed = symbols.clone();
            changed[pos] = Symbol::Terminal(term.to_owned());
            for (a, alt) in alternatives.iter().enumerate() {
                if *alt == changed {
                    out.insert((i, term.to_owned(), a));
                }
            }
        }
    }
    out
}

/// Recovers the move that turns `from` into `to`; `None` unless they differ
/// in exactly one leaf text.
pub fn move_between(from: &DerivationTree, to: &DerivationTree) -> Option<Move> {
    move_from_leaves(&from.leaves(), to)
}

/// `move_between` against precomputed leaves of the source tree; walks `to`
/// once without collecting its leaves.
pub fn move_from_leaves(base: &[&str], to: &DerivationTree) -> Option<Move> {
    fn walk<'a>(t: &'a DerivationTree, base: &[&str], seen: &mut usize, diff: &mut Vec<(usize, &'a str, Option<usize>)>) {
        for c in t.children() {
            if c.is_leaf() {
                let text = c.symbol().text();
                if base.get(*seen) != Some(&text) {
                    diff.push((*seen, text, t.alt_index()));
                }
                *seen += 1;
            } else {
                walk(c, base, seen, diff);
            }
        }
    }
    let (mut seen, mut diff) = (0, Vec::new());
    walk(to, base, &mut seen, &mut diff);
    match diff[..] {
        [(i, text, Some(alt))] if seen == base.len() => Some((i, text.to_owned(), alt)),
        _ => None,
    }
}

/// The moves `perturb` chooses between, from the advertised sites.
pub fn perturbation_moves(t: &DerivationTree, g: &Grammar) -> BTreeSet<Move> {
    perturbation_sites(t, g)
        .into_iter()
        .flat_map(|site| {
            site.replacements
                .iter()
                .map(|r| move_between(t, &replace_leaf(t, g, site.leaf, r).unwrap()).unwrap())
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Moves observed by calling `perturb` with one seeded generator until as
/// many distinct moves as the sites advertise have appeared (or 50 draws per
/// advertised move). Outputs that are not single-leaf moves show up as
/// `usize::MAX` entries.
pub fn reachable_moves(t: &DerivationTree, g: &Grammar, seed: u64) -> BTreeSet<Move> {
    let advertised: usize = perturbation_sites(t, g).iter().map(|s| s.replacements.len()).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = t.leaves();
    let mut seen = BTreeSet::new();
    for _ in 0..50 * advertised {
        if seen.len() >= advertised {
            break;
        }
        match perturb(t, g, &mut rng) {
            Ok(p) => {
                seen.insert(move_from_leaves(&base, &p).unwrap_or((usize::MAX, String::new(), 0)));
            }
            Err(_) => break,
        }
    }
    seen
}

/// Exhaustive |A ∩ B| / |A ∪ B| by membership tests over the universe.
pub fn brute_jaccard(a: &[&str], b: &[&str], universe: &[&str]) -> f64 {
    let (mut inter, mut union) = (0, 0);
    for u in universe {
        let (x, y) = (a.contains(u), b.contains(u));
        if x && y {
            inter += 1;
        }
        if x || y {
            union += 1;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// All subsets of `universe`, as bitmask-selected vectors.
pub fn subsets<'a>(universe: &[&'a str]) -> Vec<Vec<&'a str>> {
    (0..1u32 << universe.len())
        .map(|mask| {
            universe
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, u)| *u)
                .collect()
        })
        .collect()
}
