//! Grammars shipped with the crate.

use crate::grammar::{parse_grammar, Grammar};

pub const EXAMPLE: &str = include_str!("../grammars/example.cfg");
pub const EXAMPLE_MODIFIED: &str = include_str!("../grammars/example_modified.cfg");
pub const GRAMMAR_A: &str = include_str!("../grammars/grammar_a.cfg");
pub const GRAMMAR_B: &str = include_str!("../grammars/grammar_b.cfg");
pub const GRAMMAR_C: &str = include_str!("../grammars/grammar_c.cfg");
pub const GRAMMAR_D: &str = include_str!("../grammars/grammar_d.cfg");
pub const GRAMMAR_E: &str = include_str!("../grammars/grammar_e.cfg");
pub const GRAMMAR_F: &str = include_str!("../grammars/grammar_f.cfg");
/// Few terminal alternatives per rule.
pub const G_BAD: &str = include_str!("../grammars/g_bad.cfg");
pub const TOY_1: &str = include_str!("../grammars/toy1.cfg");
pub const TOY_2: &str = include_str!("../grammars/toy2.cfg");

/// The six rich evaluation grammars, by name.
pub const RICH: [(&str, &str); 6] = [
    ("A", GRAMMAR_A),
    ("B", GRAMMAR_B),
    ("C", GRAMMAR_C),
    ("D", GRAMMAR_D),
    ("E", GRAMMAR_E),
    ("F", GRAMMAR_F),
];

pub const ALL: [(&str, &str); 11] = [
    ("example", EXAMPLE),
    ("example-modified", EXAMPLE_MODIFIED),
    ("A", GRAMMAR_A),
    ("B", GRAMMAR_B),
    ("C", GRAMMAR_C),
    ("D", GRAMMAR_D),
    ("E", GRAMMAR_E),
    ("F", GRAMMAR_F),
    ("bad", G_BAD),
    ("toy1", TOY_1),
    ("toy2", TOY_2),
];

pub fn source(name: &str) -> Option<&'static str> {
    ALL.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Parses a bundled grammar by name.
pub fn grammar(name: &str) -> Option<Grammar> {
    source(name).map(|s| parse_grammar(s).expect("bundled grammars are valid"))
}
