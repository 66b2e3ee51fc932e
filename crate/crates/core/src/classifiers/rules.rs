use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::derivation::Sentence;
use crate::oracle::{Classifier, LabelSet, QueryError, DEFAULT_TOP_K};

/// Returns `hit` when any keyword occurs as a token, `miss` otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordClassifier {
    id: String,
    keywords: BTreeSet<String>,
    hit: LabelSet,
    miss: LabelSet,
}

impl KeywordClassifier {
    pub fn new<I, S>(id: impl Into<String>, keywords: I, hit: LabelSet, miss: LabelSet) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        KeywordClassifier {
            id: id.into(),
            keywords: keywords.into_iter().map(Into::into).collect(),
            hit,
            miss,
        }
    }

    /// Always answers `labels`.
    pub fn constant(id: impl Into<String>, labels: LabelSet) -> Self {
        KeywordClassifier::new(id, Vec::<String>::new(), labels.clone(), labels)
    }
}

impl Classifier for KeywordClassifier {
    fn id(&self) -> &str {
        &self.id
    }

    fn classify(&self, sentence: &Sentence) -> Result<LabelSet, QueryError> {
        let hit = sentence.tokens().iter().any(|t| self.keywords.contains(t));
        Ok(if hit { self.hit.clone() } else { self.miss.clone() })
    }
}

/// Topic lexicon: each token may carry labels; the output is the labels of
/// all tokens present, ranked by how many tokens voted for them (ties by
/// name), truncated to `top_k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconClassifier {
    id: String,
    entries: BTreeMap<String, Vec<String>>,
    top_k: usize,
}

impl LexiconClassifier {
    pub fn new<I, T, L, S>(id: impl Into<String>, entries: I) -> Self
    where
        I: IntoIterator<Item = (T, L)>,
        T: Into<String>,
        L: IntoIterator<Item = S>,
        S: Into<String>,
    {
        LexiconClassifier {
            id: id.into(),
            entries: entries
                .into_iter()
                .map(|(t, ls)| (t.into(), ls.into_iter().map(Into::into).collect()))
                .collect(),
            top_k: DEFAULT_TOP_K,
        }
    }

    pub fn with_top_k(mut self, k: usize) -> Self {
        self.top_k = k;
        self
    }
}

impl Classifier for LexiconClassifier {
    fn id(&self) -> &str {
        &self.id
    }

    fn classify(&self, sentence: &Sentence) -> Result<LabelSet, QueryError> {
        let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
        for t in sentence.tokens() {
            for label in self.entries.get(t).into_iter().flatten() {
                *votes.entry(label).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = votes.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Ok(LabelSet::from_ranked(ranked.into_iter().map(|(l, _)| l), self.top_k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(text: &str) -> Sentence {
        Sentence::parse(text).unwrap()
    }

    #[test]
    fn keyword_hits_whole_tokens_only() {
        let c = KeywordClassifier::new("k", ["shot"], LabelSet::new(["B"]), LabelSet::new(["A"]));
        assert_eq!(c.classify(&s("Mary shot Bob")).unwrap(), LabelSet::new(["B"]));
        assert_eq!(c.classify(&s("Mary shotgun Bob")).unwrap(), LabelSet::new(["A"]));
    }

    #[test]
    fn lexicon_ranks_and_truncates() {
        let c = LexiconClassifier::new(
            "lex",
            [("dog", vec!["PETS"]), ("cat", vec!["PETS", "WILD"]), ("shot", vec!["VIOLENCE"])],
        )
        .with_top_k(2);
        assert_eq!(c.classify(&s("dog cat shot")).unwrap(), LabelSet::new(["PETS", "VIOLENCE"]));
        assert_eq!(c.classify(&s("Mary")).unwrap(), LabelSet::default());
    }
}
