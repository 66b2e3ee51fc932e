//! Differential oracle: label sets, the Jaccard index, the erroneous-input
//! test, and the classifier interface the search queries.

#[cfg(feature = "http")]
pub mod http;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derivation::Sentence;

/// Number of ranked labels kept from backends that return a ranking.
pub const DEFAULT_TOP_K: usize = 5;

/// Lower bound of the POSITIVE bucket and upper bound of NEGATIVE.
const SENTIMENT_CUTOFF: f64 = 0.25;

/// A finite set of class names. Labels are trimmed; comparison is
/// case-sensitive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet(BTreeSet<String>);

impl LabelSet {
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        labels.into_iter().collect()
    }

    /// Keeps the first `k` distinct labels of a ranked list.
    pub fn from_ranked<I, S>(ranked: I, k: usize) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        for label in ranked {
            if set.len() == k {
                break;
            }
            let label = label.as_ref().trim();
            if !label.is_empty() {
                set.insert(label.to_owned());
            }
        }
        LabelSet(set)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.0.contains(label.trim())
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn intersection_len(&self, other: &LabelSet) -> usize {
        self.0.intersection(&other.0).count()
    }

    pub fn union_len(&self, other: &LabelSet) -> usize {
        self.len() + other.len() - self.intersection_len(other)
    }
}

impl<S: AsRef<str>> FromIterator<S> for LabelSet {
    fn from_iter<T: IntoIterator<Item = S>>(iter: T) -> Self {
        LabelSet(
            iter.into_iter()
                .map(|l| l.as_ref().trim().to_owned())
                .filter(|l| !l.is_empty())
                .collect(),
        )
    }
}

impl From<Vec<String>> for LabelSet {
    fn from(v: Vec<String>) -> Self {
        v.into_iter().collect()
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(s: LabelSet) -> Self {
        s.0.into_iter().collect()
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{l:?}")?;
        }
        f.write_str("}")
    }
}

/// |A ∩ B| / |A ∪ B|, and 1 when both sets are empty.
pub fn jaccard(a: &LabelSet, b: &LabelSet) -> f64 {
    let union = a.union_len(b);
    if union == 0 {
        return 1.0;
    }
    a.intersection_len(b) as f64 / union as f64
}

/// An input is erroneous when the two outputs' Jaccard index is strictly
/// below `threshold`.
pub fn evaluate(a: &LabelSet, b: &LabelSet, threshold: f64) -> bool {
    jaccard(a, b) < threshold
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("sentiment score {0} is outside (-1, 1)")]
    ScoreOutOfRange(f64),
    #[error("magnitude {0} is negative or not finite")]
    InvalidMagnitude(f64),
}

/// Score/magnitude pair returned by sentiment-style backends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredOutput {
    score: f64,
    magnitude: f64,
}

impl ScoredOutput {
    pub fn new(score: f64, magnitude: f64) -> Result<Self, OracleError> {
        if !(score > -1.0 && score < 1.0) {
            return Err(OracleError::ScoreOutOfRange(score));
        }
        if !(magnitude >= 0.0 && magnitude.is_finite()) {
            return Err(OracleError::InvalidMagnitude(magnitude));
        }
        Ok(ScoredOutput { score, magnitude })
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }
}

/// NEGATIVE on (-1, -0.25], NEUTRAL on (-0.25, 0.25), POSITIVE on [0.25, 1).
pub fn bucket_sentiment(s: &ScoredOutput) -> LabelSet {
    let label = if s.score <= -SENTIMENT_CUTOFF {
        "NEGATIVE"
    } else if s.score < SENTIMENT_CUTOFF {
        "NEUTRAL"
    } else {
        "POSITIVE"
    };
    LabelSet::new([label])
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error("transport error from {endpoint} after {attempts} attempt(s): {message}")]
    Transport {
        endpoint: String,
        attempts: u32,
        message: String,
    },
    #[error("malformed response from {endpoint}: {reason}; payload: {raw}")]
    Malformed {
        endpoint: String,
        reason: String,
        raw: String,
    },
}

/// A text classifier under test: maps a sentence to a label set.
pub trait Classifier: Send + Sync {
    fn id(&self) -> &str;

    fn classify(&self, sentence: &Sentence) -> Result<LabelSet, QueryError>;

    /// Remote backends are queried concurrently for the two sides of a pair.
    fn is_remote(&self) -> bool {
        false
    }
}

pub type ClassifierHandle = Arc<dyn Classifier>;

impl fmt::Debug for dyn Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Classifier({})", self.id())
    }
}

/// Queries `classifier` for `sentence`.
pub fn query(classifier: &dyn Classifier, sentence: &Sentence) -> Result<LabelSet, QueryError> {
    classifier.classify(sentence)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(labels: &[&str]) -> LabelSet {
        LabelSet::new(labels)
    }

    #[test]
    fn jaccard_examples() {
        assert!((jaccard(&set(&["x", "y"]), &set(&["y", "z"])) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(jaccard(&set(&[]), &set(&[])), 1.0);
        assert_eq!(jaccard(&set(&["a", "b"]), &set(&["a", "b"])), 1.0);
        assert_eq!(jaccard(&set(&["a"]), &set(&[])), 0.0);
    }

    #[test]
    fn labels_are_trimmed_and_case_sensitive() {
        assert_eq!(set(&[" SPORTS ", "SPORTS"]), set(&["SPORTS"]));
        assert_ne!(set(&["sports"]), set(&["SPORTS"]));
        assert!(set(&["", "  "]).is_empty());
    }

    #[test]
    fn evaluate_is_strict() {
        // {a} vs {a, b, c, ..., j}: JI = 1/10.
        let a = set(&["a"]);
        let b = set(&["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"]);
        assert!(evaluate(&a, &b, 0.15));
        assert!(!evaluate(&a, &b, 0.10));
        assert!(!evaluate(&set(&[]), &set(&[]), 0.5));
        assert!(!evaluate(&set(&["x"]), &set(&["y"]), 0.0));
    }

    #[test]
    fn ranked_truncation() {
        let ranked = ["A", "B", "C", "D", "E", "F"];
        let s = LabelSet::from_ranked(ranked, DEFAULT_TOP_K);
        assert_eq!(s, set(&["A", "B", "C", "D", "E"]));
        let dup = LabelSet::from_ranked(["A", "A", "B"], 2);
        assert_eq!(dup, set(&["A", "B"]));
    }

    #[test]
    fn sentiment_buckets() {
        let bucket = |s| bucket_sentiment(&ScoredOutput::new(s, 0.5).unwrap());
        assert_eq!(bucket(-0.25), set(&["NEGATIVE"]));
        assert_eq!(bucket(-0.2499), set(&["NEUTRAL"]));
        assert_eq!(bucket(0.0), set(&["NEUTRAL"]));
        assert_eq!(bucket(0.2499), set(&["NEUTRAL"]));
        assert_eq!(bucket(0.25), set(&["POSITIVE"]));
        assert_eq!(bucket(-0.99), set(&["NEGATIVE"]));
        assert_eq!(bucket(0.99), set(&["POSITIVE"]));
        assert!(ScoredOutput::new(1.0, 0.0).is_err());
        assert!(ScoredOutput::new(-1.0, 0.0).is_err());
        assert!(ScoredOutput::new(f64::NAN, 0.0).is_err());
        assert!(ScoredOutput::new(0.0, -1.0).is_err());
    }

    #[test]
    fn serde_normalizes() {
        let s: LabelSet = serde_json::from_str(r#"[" B", "A", "B"]"#).unwrap();
        assert_eq!(s, set(&["A", "B"]));
        assert_eq!(serde_json::to_string(&s).unwrap(), r#"["A","B"]"#);
    }
}
