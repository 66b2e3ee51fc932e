//! Context-free grammars: the line-oriented rule format, validation, and the
//! structural queries used by generation and perturbation.
//!
//! ```text
//! # comment lines start with '#'
//! S  -> NP VP
//! NP -> "John" | "Mary" | "Bob" | Det N | Det N PP
//! ```
//!
//! The first rule's left-hand side is the start symbol. Terminals are
//! double-quoted and may not contain whitespace; nonterminals are bare
//! identifiers. Each nonterminal is defined by exactly one line.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Height assigned to symbols that cannot derive a finite terminal string.
const UNBOUNDED: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Terminal(String),
    Nonterminal(String),
}

impl Symbol {
    pub fn terminal(text: impl Into<String>) -> Self {
        Symbol::Terminal(text.into())
    }

    pub fn nonterminal(name: impl Into<String>) -> Self {
        Symbol::Nonterminal(name.into())
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, Symbol::Terminal(_))
    }

    /// Terminal surface text or nonterminal name.
    pub fn text(&self) -> &str {
        match self {
            Symbol::Terminal(t) | Symbol::Nonterminal(t) => t,
        }
    }
}

/// Renders in rule-file notation: terminals quoted, nonterminals bare.
impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Terminal(t) => write!(f, "\"{t}\""),
            Symbol::Nonterminal(n) => f.write_str(n),
        }
    }
}

impl FromStr for Symbol {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut cursor = Cursor::new(s, 0);
        cursor.skip_ws();
        let sym = cursor.symbol()?;
        cursor.skip_ws();
        if !cursor.at_end() {
            return Err(cursor.error("trailing input after symbol"));
        }
        Ok(sym)
    }
}

impl Serialize for Symbol {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Symbol {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Production {
    pub lhs: String,
    pub alternatives: Vec<Vec<Symbol>>,
}

impl Production {
    pub fn new(lhs: impl Into<String>, alternatives: Vec<Vec<Symbol>>) -> Self {
        Production {
            lhs: lhs.into(),
            alternatives,
        }
    }
}

impl fmt::Display for Production {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ->", self.lhs)?;
        for (i, alt) in self.alternatives.iter().enumerate() {
            if i > 0 {
                f.write_str(" |")?;
            }
            for sym in alt {
                write!(f, " {sym}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("undefined nonterminal {name}{}", at_line(*.line))]
    UndefinedNonterminal { name: String, line: Option<usize> },
    #[error("duplicate definition of {name}{}", at_line(*.line))]
    DuplicateDefinition { name: String, line: Option<usize> },
    #[error("non-productive nonterminal(s): {}", .names.join(", "))]
    NonProductive { names: Vec<String> },
    #[error("production {0} has no alternatives")]
    NoAlternatives(String),
    #[error("start symbol {0} is not defined")]
    UndefinedStart(String),
    #[error("cannot merge grammars with different start symbols ({0} vs {1})")]
    StartMismatch(String, String),
    #[error("grammar has no rules")]
    Empty,
}

fn at_line(line: Option<usize>) -> String {
    line.map(|l| format!(" (line {l})")).unwrap_or_default()
}

/// A validated context-free grammar. Immutable once built.
#[derive(Debug, Clone)]
pub struct Grammar {
    start: String,
    productions: Vec<Production>,
    index: HashMap<String, usize>,
    /// Minimum derivation height per production.
    min_height: Vec<usize>,
    /// Minimum derivation height per (production, alternative).
    alt_height: Vec<Vec<usize>>,
}

impl PartialEq for Grammar {
    fn eq(&self, other: &Self) -> bool {
        self.start == other.start && self.productions == other.productions
    }
}

impl Eq for Grammar {}

impl Grammar {
    /// Builds and validates a grammar. The start symbol must be defined, every
    /// referenced nonterminal must have a production, and every nonterminal
    /// must derive at least one finite terminal string.
    pub fn new(start: impl Into<String>, productions: Vec<Production>) -> Result<Self, GrammarError> {
        Self::build(start.into(), productions, &[])
    }

    fn build(start: String, productions: Vec<Production>, lines: &[usize]) -> Result<Self, GrammarError> {
        if productions.is_empty() {
            return Err(GrammarError::Empty);
        }
        let mut index = HashMap::with_capacity(productions.len());
        for (i, p) in productions.iter().enumerate() {
            if index.insert(p.lhs.clone(), i).is_some() {
                return Err(GrammarError::DuplicateDefinition {
                    name: p.lhs.clone(),
                    line: lines.get(i).copied(),
                });
            }
            if p.alternatives.is_empty() || p.alternatives.iter().any(Vec::is_empty) {
                return Err(GrammarError::NoAlternatives(p.lhs.clone()));
            }
        }
        if !index.contains_key(&start) {
            return Err(GrammarError::UndefinedStart(start));
        }
        for (i, p) in productions.iter().enumerate() {
            for sym in p.alternatives.iter().flatten() {
                if let Symbol::Nonterminal(name) = sym {
                    if !index.contains_key(name) {
                        return Err(GrammarError::UndefinedNonterminal {
                            name: name.clone(),
                            line: lines.get(i).copied(),
                        });
                    }
                }
            }
        }

        let (min_height, alt_height) = min_heights(&productions, &index);
        let non_productive: Vec<String> = productions
            .iter()
            .zip(&min_height)
            .filter(|(_, &h)| h == UNBOUNDED)
            .map(|(p, _)| p.lhs.clone())
            .collect();
        if !non_productive.is_empty() {
            return Err(GrammarError::NonProductive {
                names: non_productive,
            });
        }

        let grammar = Grammar {
            start,
            productions,
            index,
            min_height,
            alt_height,
        };
        for name in grammar.unreachable() {
            log::warn!("nonterminal {name} is unreachable from start symbol {}", grammar.start);
        }
        Ok(grammar)
    }

    pub fn start(&self) -> &str {
        &self.start
    }

    pub fn productions(&self) -> &[Production] {
        &self.productions
    }

    pub fn production(&self, lhs: &str) -> Option<&Production> {
        self.index.get(lhs).map(|&i| &self.productions[i])
    }

    /// Minimum height of a complete derivation rooted at `lhs`; a node whose
    /// children are all terminals has height 1.
    pub fn min_height(&self, lhs: &str) -> Option<usize> {
        self.index.get(lhs).map(|&i| self.min_height[i])
    }

    /// Minimum height of a derivation of `lhs` that starts with alternative `alt`.
    pub fn alternative_height(&self, lhs: &str, alt: usize) -> Option<usize> {
        self.index
            .get(lhs)
            .and_then(|&i| self.alt_height[i].get(alt).copied())
    }

    /// Nonterminals that no derivation from the start symbol can reach.
    pub fn unreachable(&self) -> Vec<&str> {
        let mut seen = vec![false; self.productions.len()];
        let mut queue = VecDeque::from([self.index[&self.start]]);
        seen[self.index[&self.start]] = true;
        while let Some(i) = queue.pop_front() {
            for sym in self.productions[i].alternatives.iter().flatten() {
                if let Symbol::Nonterminal(name) = sym {
                    let j = self.index[name];
                    if !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        self.productions
            .iter()
            .zip(seen)
            .filter(|(_, s)| !s)
            .map(|(p, _)| p.lhs.as_str())
            .collect()
    }

    /// All terminal strings mentioned anywhere in the grammar.
    pub fn terminals(&self) -> BTreeSet<&str> {
        self.productions
            .iter()
            .flat_map(|p| p.alternatives.iter().flatten())
            .filter(|s| s.is_terminal())
            .map(Symbol::text)
            .collect()
    }

    /// Terminals that form a complete single-symbol alternative of `lhs`,
    /// excluding `exclude`, in rule order without duplicates. Returns an empty
    /// list for an undefined `lhs`.
    pub fn terminal_alternatives(&self, lhs: &str, exclude: &str) -> Vec<&str> {
        let Some(p) = self.production(lhs) else {
            return Vec::new();
        };
        let mut out: Vec<&str> = Vec::new();
        for alt in &p.alternatives {
            if let [Symbol::Terminal(t)] = alt.as_slice() {
                if t != exclude && !out.contains(&t.as_str()) {
                    out.push(t);
                }
            }
        }
        out
    }

    /// Index of the first alternative of `lhs` that is exactly the terminal `text`.
    pub fn single_terminal_alternative(&self, lhs: &str, text: &str) -> Option<usize> {
        self.production(lhs)?
            .alternatives
            .iter()
            .position(|alt| matches!(alt.as_slice(), [Symbol::Terminal(t)] if t == text))
    }

    /// Merges two grammars with the same start symbol: each nonterminal gets the
    /// union of both alternative lists (first grammar's order, then new ones).
    pub fn union(&self, other: &Grammar) -> Result<Grammar, GrammarError> {
        if self.start != other.start {
            return Err(GrammarError::StartMismatch(
                self.start.clone(),
                other.start.clone(),
            ));
        }
        let mut productions = self.productions.clone();
        for p in &other.productions {
            match productions.iter_mut().find(|q| q.lhs == p.lhs) {
                Some(q) => {
                    for alt in &p.alternatives {
                        if !q.alternatives.contains(alt) {
                            q.alternatives.push(alt.clone());
                        }
                    }
                }
                None => productions.push(p.clone()),
            }
        }
        Grammar::new(self.start.clone(), productions)
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.productions {
            writeln!(f, "{p}")?;
        }
        Ok(())
    }
}

impl FromStr for Grammar {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_grammar(s)
    }
}

fn min_heights(productions: &[Production], index: &HashMap<String, usize>) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut height = vec![UNBOUNDED; productions.len()];
    let mut alt_height: Vec<Vec<usize>> = productions
        .iter()
        .map(|p| vec![UNBOUNDED; p.alternatives.len()])
        .collect();
    loop {
        let mut changed = false;
        for (i, p) in productions.iter().enumerate() {
            for (a, alt) in p.alternatives.iter().enumerate() {
                let mut h = 0usize;
                for sym in alt {
                    let child = match sym {
                        Symbol::Terminal(_) => 0,
                        Symbol::Nonterminal(n) => height[index[n]],
                    };
                    h = h.max(child);
                }
                let h = if h == UNBOUNDED { UNBOUNDED } else { h + 1 };
                if h < alt_height[i][a] {
                    alt_height[i][a] = h;
                    changed = true;
                }
                if h < height[i] {
                    height[i] = h;
                    changed = true;
                }
            }
        }
        if !changed {
            return (height, alt_height);
        }
    }
}

/// Parses a grammar from the rule-file format and validates it.
pub fn parse_grammar(source: &str) -> Result<Grammar, GrammarError> {
    let mut productions = Vec::new();
    let mut lines = Vec::new();
    for (n, raw) in source.lines().enumerate() {
        let line_no = n + 1;
        let trimmed = raw.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut cursor = Cursor::new(raw, line_no);
        cursor.skip_ws();
        let lhs = cursor.identifier()?;
        cursor.skip_ws();
        cursor.expect("->")?;
        let mut alternatives = vec![Vec::new()];
        loop {
            cursor.skip_ws();
            match cursor.peek() {
                None => break,
                Some('|') => {
                    if alternatives.last().is_some_and(Vec::is_empty) {
                        return Err(cursor.error("empty alternative"));
                    }
                    cursor.bump();
                    alternatives.push(Vec::new());
                }
                Some(_) => {
                    let sym = cursor.symbol()?;
                    alternatives.last_mut().expect("non-empty").push(sym);
                }
            }
        }
        if alternatives.last().is_some_and(Vec::is_empty) {
            return Err(cursor.error("empty alternative"));
        }
        productions.push(Production::new(lhs, alternatives));
        lines.push(line_no);
    }
    let start = productions
        .first()
        .map(|p: &Production| p.lhs.clone())
        .ok_or(GrammarError::Empty)?;
    Grammar::build(start, productions, &lines)
}

struct Cursor {
    chars: Vec<char>,
    pos: usize,
    line: usize,
}

impl Cursor {
    fn new(src: &str, line: usize) -> Self {
        Cursor {
            chars: src.chars().collect(),
            pos: 0,
            line,
        }
    }

    fn error(&self, message: impl Into<String>) -> GrammarError {
        GrammarError::Syntax {
            line: self.line,
            column: self.pos + 1,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        Some(c)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), GrammarError> {
        for expected in token.chars() {
            if self.peek() != Some(expected) {
                return Err(self.error(format!("expected '{token}'")));
            }
            self.pos += 1;
        }
        Ok(())
    }

    fn identifier(&mut self) -> Result<String, GrammarError> {
        match self.peek() {
            Some(c) if c.is_alphabetic() || c == '_' => {}
            _ => return Err(self.error("expected a nonterminal name")),
        }
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_alphanumeric() || c == '_')
        {
            self.pos += 1;
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn symbol(&mut self) -> Result<Symbol, GrammarError> {
        if self.peek() != Some('"') {
            return self.identifier().map(Symbol::Nonterminal);
        }
        self.bump();
        let start = self.pos;
        loop {
            match self.peek() {
                None => return Err(self.error("unterminated terminal")),
                Some('"') => break,
                Some(c) if c.is_whitespace() => {
                    return Err(self.error("whitespace inside terminal"));
                }
                Some(_) => self.pos += 1,
            }
        }
        if self.pos == start {
            return Err(self.error("empty terminal"));
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        self.bump();
        Ok(Symbol::Terminal(text))
    }
}
