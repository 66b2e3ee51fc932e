//! Built-in offline classifiers: multinomial naive Bayes and an averaged
//! perceptron over bag-of-words features, plus rule-based classifiers used as
//! synthetic oracles.

mod naive_bayes;
mod perceptron;
mod rules;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use naive_bayes::{NaiveBayesModel, DEFAULT_ALPHA};
pub use perceptron::{PerceptronModel, DEFAULT_EPOCHS};
pub use rules::{KeywordClassifier, LexiconClassifier};

use crate::derivation::{generate, yield_sentence, DerivationError, Sentence};
use crate::grammar::Grammar;
use crate::oracle::{Classifier, LabelSet, QueryError};

/// A labelled training example.
pub type Example = (Sentence, String);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("training corpus has a single label ({0}); at least two are needed")]
    SingleLabel(String),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("oracle query failed while labelling: {0}")]
    Oracle(#[from] QueryError),
    #[error(transparent)]
    Generation(#[from] DerivationError),
}

/// Token counts of one sentence (whitespace tokens, no normalization).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BowVector(BTreeMap<String, u32>);

impl BowVector {
    pub fn from_sentence(sentence: &Sentence) -> Self {
        let mut counts = BTreeMap::new();
        for t in sentence.tokens() {
            *counts.entry(t.clone()).or_insert(0) += 1;
        }
        BowVector(counts)
    }

    pub fn count(&self, token: &str) -> u32 {
        self.0.get(token).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.0.values().map(|&c| u64::from(c)).sum()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.0.iter().map(|(t, &c)| (t.as_str(), c))
    }

    pub fn merge(&mut self, other: &BowVector) {
        for (t, c) in other.iter() {
            *self.0.entry(t.to_owned()).or_insert(0) += c;
        }
    }
}

fn label_set(corpus: &[Example]) -> Result<Vec<String>, TrainError> {
    let labels: BTreeSet<&String> = corpus.iter().map(|(_, l)| l).collect();
    match labels.len() {
        0 => Err(TrainError::EmptyCorpus),
        1 => Err(TrainError::SingleLabel(labels.into_iter().next().unwrap().clone())),
        _ => Ok(labels.into_iter().cloned().collect()),
    }
}

/// First label with the strictly greatest score; labels arrive sorted, so
/// ties resolve lexicographically.
fn argmax<'a>(scores: impl IntoIterator<Item = (&'a str, f64)>) -> &'a str {
    let mut best: Option<(&str, f64)> = None;
    for (label, s) in scores {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((label, s));
        }
    }
    best.expect("trained models have at least two labels").0
}

/// A trained bag-of-words model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TextModel {
    NaiveBayes(NaiveBayesModel),
    Perceptron(PerceptronModel),
}

impl TextModel {
    pub fn predict_label(&self, sentence: &Sentence) -> &str {
        match self {
            TextModel::NaiveBayes(m) => m.predict_label(sentence),
            TextModel::Perceptron(m) => m.predict_label(sentence),
        }
    }

    /// Singleton set holding the argmax label.
    pub fn predict(&self, sentence: &Sentence) -> LabelSet {
        LabelSet::new([self.predict_label(sentence)])
    }

    /// Trains a fresh model of the same kind and hyperparameters on `corpus`.
    pub fn retrain(&self, corpus: &[Example]) -> Result<TextModel, TrainError> {
        Ok(match self {
            TextModel::NaiveBayes(m) => TextModel::NaiveBayes(NaiveBayesModel::train(corpus, m.alpha())?),
            TextModel::Perceptron(m) => TextModel::Perceptron(PerceptronModel::train(corpus, m.epochs(), m.seed())?),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("models serialize")
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    /// Fraction of `heldout` predicted correctly.
    pub fn accuracy(&self, heldout: &[Example]) -> f64 {
        if heldout.is_empty() {
            return 0.0;
        }
        let correct = heldout
            .iter()
            .filter(|(s, l)| self.predict_label(s) == l)
            .count();
        correct as f64 / heldout.len() as f64
    }
}

/// Exposes a trained model through the classifier interface.
#[derive(Debug, Clone)]
pub struct ModelClassifier {
    id: String,
    model: TextModel,
}

impl ModelClassifier {
    pub fn new(id: impl Into<String>, model: TextModel) -> Self {
        ModelClassifier {
            id: id.into(),
            model,
        }
    }

    pub fn model(&self) -> &TextModel {
        &self.model
    }
}

impl Classifier for ModelClassifier {
    fn id(&self) -> &str {
        &self.id
    }

    fn classify(&self, sentence: &Sentence) -> Result<LabelSet, QueryError> {
        Ok(self.model.predict(sentence))
    }
}

/// Generates `count` sentences from `grammar`, each labelled `label`.
pub fn labeled_corpus(
    grammar: &Grammar,
    label: &str,
    count: usize,
    max_depth: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Example>, TrainError> {
    (0..count)
        .map(|_| {
            let tree = generate(grammar, rng, max_depth)?;
            Ok((yield_sentence(&tree), label.to_owned()))
        })
        .collect()
}

/// Outcome of augmenting a training set with oracle-labelled error inputs.
#[derive(Debug, Clone)]
pub struct Retrained {
    pub model: TextModel,
    /// Error inputs requested by `fraction`.
    pub requested: usize,
    /// Error inputs actually added.
    pub added: usize,
}

/// Retrains `model` on `base` plus a uniform sample (without replacement) of
/// `round(fraction * |base|)` error inputs, each labelled with the oracle's
/// output. If fewer errors are available, all of them are used.
pub fn retrain_with_errors(
    model: &TextModel,
    base: &[Example],
    errors: &[Sentence],
    oracle: &dyn Classifier,
    fraction: f64,
    seed: u64,
) -> Result<Retrained, TrainError> {
    if !(fraction >= 0.0 && fraction.is_finite()) {
        return Err(TrainError::InvalidHyperparameter(format!("fraction = {fraction}")));
    }
    let requested = (fraction * base.len() as f64).round() as usize;
    if requested > errors.len() {
        log::warn!(
            "requested {requested} error inputs but only {} are available; using all of them",
            errors.len()
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample: Vec<&Sentence> = errors
        .choose_multiple(&mut rng, requested.min(errors.len()))
        .collect();
    let mut corpus = base.to_vec();
    for sentence in sample {
        // Singleton outputs are the norm; the first label stands in otherwise.
        if let Some(label) = oracle.classify(sentence)?.iter().next() {
            corpus.push((sentence.clone(), label.to_owned()));
        }
    }
    let added = corpus.len() - base.len();
    Ok(Retrained {
        model: model.retrain(&corpus)?,
        requested,
        added,
    })
}
