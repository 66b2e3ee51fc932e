//! Derivation trees: random generation from a grammar, sentence yield, tree
//! similarity, and single-leaf perturbation.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{Grammar, Symbol};

/// Generation depth budget used when none is configured.
pub const DEFAULT_MAX_DEPTH: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DerivationError {
    #[error("no alternative of {lhs} completes within the remaining depth budget {budget}")]
    DepthExhausted { lhs: String, budget: usize },
    #[error("tree does not conform to the grammar: {0}")]
    NonConforming(String),
    #[error("a sentence needs at least one token")]
    EmptySentence,
}

/// No leaf of the tree has a terminal alternative to swap in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("cannot perturb terminal")]
pub struct CannotPerturb;

/// A non-empty whitespace-free token sequence; `text` is the tokens joined by
/// single spaces.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sentence {
    text: String,
    tokens: Vec<String>,
}

impl Sentence {
    pub fn new<I, S>(tokens: I) -> Result<Self, DerivationError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if tokens.is_empty() {
            return Err(DerivationError::EmptySentence);
        }
        // Tokens carrying whitespace are re-split so text round-trips.
        let tokens: Vec<String> = tokens
            .iter()
            .flat_map(|t| t.split_whitespace())
            .map(str::to_owned)
            .collect();
        if tokens.is_empty() {
            return Err(DerivationError::EmptySentence);
        }
        Ok(Sentence {
            text: tokens.join(" "),
            tokens,
        })
    }

    /// Splits `text` on whitespace.
    pub fn parse(text: &str) -> Result<Self, DerivationError> {
        Sentence::new(text.split_whitespace())
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl Serialize for Sentence {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for Sentence {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Sentence::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// One derivation of a sentence. Leaves are exactly the terminal nodes; an
/// interior node records which alternative of its production it expanded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DerivationTree {
    symbol: Symbol,
    alt_index: Option<usize>,
    children: Vec<DerivationTree>,
}

impl DerivationTree {
    pub fn leaf(text: impl Into<String>) -> Self {
        DerivationTree {
            symbol: Symbol::Terminal(text.into()),
            alt_index: None,
            children: Vec::new(),
        }
    }

    pub fn node(lhs: impl Into<String>, alt_index: usize, children: Vec<DerivationTree>) -> Self {
        DerivationTree {
            symbol: Symbol::Nonterminal(lhs.into()),
            alt_index: Some(alt_index),
            children,
        }
    }

    pub fn symbol(&self) -> &Symbol {
        &self.symbol
    }

    pub fn alt_index(&self) -> Option<usize> {
        self.alt_index
    }

    pub fn children(&self) -> &[DerivationTree] {
        &self.children
    }

    pub fn is_leaf(&self) -> bool {
        self.symbol.is_terminal()
    }

    /// Leaf texts, left to right.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        if self.is_leaf() {
            out.push(self.symbol.text());
        }
        for c in &self.children {
            c.collect_leaves(out);
        }
    }

    pub fn leaf_count(&self) -> usize {
        if self.is_leaf() {
            1
        } else {
            self.children.iter().map(Self::leaf_count).sum()
        }
    }

    /// Number of nonterminal levels on the longest root-to-leaf path.
    pub fn height(&self) -> usize {
        if self.is_leaf() {
            0
        } else {
            1 + self.children.iter().map(Self::height).max().unwrap_or(0)
        }
    }

    /// Checks that the root is the grammar's start symbol and every interior
    /// node's children spell out its recorded alternative.
    pub fn conforms_to(&self, grammar: &Grammar) -> Result<(), DerivationError> {
        if self.symbol != Symbol::Nonterminal(grammar.start().to_owned()) {
            return Err(DerivationError::NonConforming(format!(
                "root is {} but the start symbol is {}",
                self.symbol,
                grammar.start()
            )));
        }
        self.check_node(grammar)
    }

    fn check_node(&self, grammar: &Grammar) -> Result<(), DerivationError> {
        let nonconforming = |msg: String| Err(DerivationError::NonConforming(msg));
        match &self.symbol {
            Symbol::Terminal(t) => {
                if !self.children.is_empty() || self.alt_index.is_some() {
                    return nonconforming(format!("terminal \"{t}\" has children"));
                }
                if t.is_empty() || t.chars().any(char::is_whitespace) {
                    return nonconforming(format!("malformed terminal {t:?}"));
                }
                Ok(())
            }
            Symbol::Nonterminal(name) => {
                let Some(production) = grammar.production(name) else {
                    return nonconforming(format!("unknown nonterminal {name}"));
                };
                let Some(alt) = self.alt_index.and_then(|i| production.alternatives.get(i)) else {
                    return nonconforming(format!("{name} has no valid alternative index"));
                };
                let matches = alt.len() == self.children.len()
                    && alt.iter().zip(&self.children).all(|(s, c)| *s == c.symbol);
                if !matches {
                    return nonconforming(format!("children of {name} do not match its alternative"));
                }
                self.children.iter().try_for_each(|c| c.check_node(grammar))
            }
        }
    }

    /// Indented dump, one node per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(0, &mut out);
        out
    }

    fn render_into(&self, depth: usize, out: &mut String) {
        use std::fmt::Write;
        let indent = "  ".repeat(depth);
        match self.alt_index {
            Some(i) => {
                let _ = writeln!(out, "{indent}{} [{i}]", self.symbol);
            }
            None => {
                let _ = writeln!(out, "{indent}{}", self.symbol);
            }
        }
        for c in &self.children {
            c.render_into(depth + 1, out);
        }
    }

    /// Calls `f` with the parent and child position of the `leaf`-th leaf.
    fn with_leaf_parent_mut<R>(&mut self, leaf: usize, f: impl FnOnce(&mut DerivationTree, usize) -> R) -> Option<R> {
        fn walk<R>(
            node: &mut DerivationTree,
            remaining: &mut usize,
            f: &mut Option<impl FnOnce(&mut DerivationTree, usize) -> R>,
        ) -> Option<R> {
            for i in 0..node.children.len() {
                if node.children[i].is_leaf() {
                    if *remaining == 0 {
                        let f = f.take().expect("called once");
                        return Some(f(node, i));
                    }
                    *remaining -= 1;
                } else if let Some(r) = walk(&mut node.children[i], remaining, f) {
                    return Some(r);
                }
            }
            None
        }
        let mut remaining = leaf;
        walk(self, &mut remaining, &mut Some(f))
    }

    /// (parent lhs, parent alternative length) for each leaf, left to right.
    fn leaf_parents(&self) -> Vec<(&str, usize, &str)> {
        fn walk<'a>(node: &'a DerivationTree, out: &mut Vec<(&'a str, usize, &'a str)>) {
            for c in &node.children {
                if c.is_leaf() {
                    out.push((node.symbol.text(), node.children.len(), c.symbol.text()));
                } else {
                    walk(c, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }
}

/// Left-to-right leaf concatenation.
pub fn yield_sentence(tree: &DerivationTree) -> Sentence {
    Sentence::new(tree.leaves()).expect("derivation trees have at least one leaf")
}

/// Randomly derives a tree from the start symbol. At each nonterminal the
/// alternative is chosen uniformly among those that can still complete within
/// the remaining depth budget.
pub fn generate<R: Rng + ?Sized>(grammar: &Grammar, rng: &mut R, max_depth: usize) -> Result<DerivationTree, DerivationError> {
    expand(grammar, grammar.start(), rng, max_depth)
}

fn expand<R: Rng + ?Sized>(grammar: &Grammar, lhs: &str, rng: &mut R, budget: usize) -> Result<DerivationTree, DerivationError> {
    let production = grammar.production(lhs).expect("validated grammar");
    let eligible: Vec<usize> = (0..production.alternatives.len())
        .filter(|&a| grammar.alternative_height(lhs, a).is_some_and(|h| h <= budget))
        .collect();
    let Some(&alt) = eligible.choose(rng) else {
        return Err(DerivationError::DepthExhausted {
            lhs: lhs.to_owned(),
            budget,
        });
    };
    let children = production.alternatives[alt]
        .iter()
        .map(|sym| match sym {
            Symbol::Terminal(t) => Ok(DerivationTree::leaf(t.clone())),
            Symbol::Nonterminal(n) => expand(grammar, n, rng, budget - 1),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DerivationTree::node(lhs, alt, children))
}

/// True iff the trees differ only in the text of exactly one leaf. The parent
/// of that leaf may record a different alternative index, since swapping a
/// single-terminal alternative changes which alternative was taken.
pub fn similar(a: &DerivationTree, b: &DerivationTree) -> bool {
    fn walk(a: &DerivationTree, b: &DerivationTree, differing: &mut usize) -> bool {
        match (&a.symbol, &b.symbol) {
            (Symbol::Terminal(x), Symbol::Terminal(y)) => {
                if x != y {
                    *differing += 1;
                }
                true
            }
            (Symbol::Nonterminal(x), Symbol::Nonterminal(y)) => {
                if x != y || a.children.len() != b.children.len() {
                    return false;
                }
                if a.alt_index != b.alt_index {
                    let swapped_terminal = a.children.len() == 1
                        && a.children[0].is_leaf()
                        && b.children[0].is_leaf()
                        && a.children[0].symbol != b.children[0].symbol;
                    if !swapped_terminal {
                        return false;
                    }
                }
                a.children
                    .iter()
                    .zip(&b.children)
                    .all(|(x, y)| walk(x, y, differing))
            }
            _ => false,
        }
    }
    let mut differing = 0;
    walk(a, b, &mut differing) && differing == 1
}

/// How `perturb` reacts when the randomly chosen leaf has no alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbMode {
    /// Try the remaining leaves in random order before giving up.
    #[default]
    Retry,
    /// Give up as soon as the chosen leaf has no alternative.
    Strict,
}

/// Replacement terminals available for one leaf.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbationSite {
    pub leaf: usize,
    pub current: String,
    pub replacements: Vec<String>,
}

/// For every leaf: the terminals that may replace it. A leaf is replaceable
/// only when it is the sole child of its parent, i.e. the parent took a
/// single-terminal alternative; replacements are the other single-terminal
/// alternatives of the same production.
pub fn perturbation_sites(tree: &DerivationTree, grammar: &Grammar) -> Vec<PerturbationSite> {
    tree.leaf_parents()
        .into_iter()
        .enumerate()
        .map(|(leaf, (lhs, arity, text))| PerturbationSite {
            leaf,
            current: text.to_owned(),
            replacements: replacements_for(grammar, lhs, arity, text),
        })
        .collect()
}

fn replacements_for(grammar: &Grammar, lhs: &str, arity: usize, text: &str) -> Vec<String> {
    if arity != 1 {
        return Vec::new();
    }
    grammar
        .terminal_alternatives(lhs, text)
        .into_iter()
        .map(str::to_owned)
        .collect()
}

/// Replaces leaf number `leaf` (left to right) with `replacement`, updating
/// the parent's alternative index. Returns `None` if the leaf does not exist
/// or `replacement` is not a single-terminal alternative of its parent.
pub fn replace_leaf(tree: &DerivationTree, grammar: &Grammar, leaf: usize, replacement: &str) -> Option<DerivationTree> {
    let mut out = tree.clone();
    out.with_leaf_parent_mut(leaf, |parent, child| {
        if parent.children.len() != 1 {
            return None;
        }
        let alt = grammar.single_terminal_alternative(parent.symbol.text(), replacement)?;
        parent.alt_index = Some(alt);
        parent.children[child] = DerivationTree::leaf(replacement);
        Some(())
    })??;
    Some(out)
}

/// Produces a tree similar to `tree` by swapping one leaf for another terminal
/// alternative of its parent production, both picked uniformly at random.
pub fn perturb<R: Rng + ?Sized>(tree: &DerivationTree, grammar: &Grammar, rng: &mut R) -> Result<DerivationTree, CannotPerturb> {
    perturb_with_mode(tree, grammar, rng, PerturbMode::Retry)
}

pub fn perturb_with_mode<R: Rng + ?Sized>(
    tree: &DerivationTree,
    grammar: &Grammar,
    rng: &mut R,
    mode: PerturbMode,
) -> Result<DerivationTree, CannotPerturb> {
    let parents = tree.leaf_parents();
    let mut order: Vec<usize> = (0..parents.len()).collect();
    match mode {
        PerturbMode::Retry => order.shuffle(rng),
        PerturbMode::Strict => {
            let pick = rng.gen_range(0..order.len());
            order = vec![pick];
        }
    }
    for leaf in order {
        let (lhs, arity, text) = parents[leaf];
        let candidates = replacements_for(grammar, lhs, arity, text);
        if let Some(choice) = candidates.choose(rng) {
            return Ok(replace_leaf(tree, grammar, leaf, choice).expect("replacement drawn from the grammar"));
        }
    }
    log::debug!("cannot perturb terminal in \"{}\"", yield_sentence(tree));
    Err(CannotPerturb)
}
