use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{BowVector, TrainError};
use crate::derivation::Sentence;

/// Multinomial naive Bayes over bag-of-words counts with additive smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    alpha: f64,
    /// Class prior probabilities.
    priors: BTreeMap<String, f64>,
    /// label -> token -> ln P(token | label).
    log_likelihoods: BTreeMap<String, BTreeMap<String, f64>>,
    vocabulary: BTreeSet<String>,
}

pub const DEFAULT_ALPHA: f64 = 1.0;

impl NaiveBayesModel {
    pub fn train(corpus: &[(Sentence, String)], alpha: f64) -> Result<Self, TrainError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(TrainError::InvalidHyperparameter(format!("alpha = {alpha}")));
        }
        let labels = super::label_set(corpus)?;

        let mut docs: BTreeMap<&str, usize> = BTreeMap::new();
        let mut counts: BTreeMap<&str, BowVector> = BTreeMap::new();
        let mut vocabulary = BTreeSet::new();
        for (sentence, label) in corpus {
            *docs.entry(label).or_default() += 1;
            let bow = BowVector::from_sentence(sentence);
            vocabulary.extend(bow.tokens().map(str::to_owned));
            counts.entry(label).or_default().merge(&bow);
        }

        let n = corpus.len() as f64;
        let v = vocabulary.len() as f64;
        let mut priors = BTreeMap::new();
        let mut log_likelihoods = BTreeMap::new();
        for label in &labels {
            priors.insert(label.clone(), docs[label.as_str()] as f64 / n);
            let bow = &counts[label.as_str()];
            let total = bow.total() as f64;
            let denom = (total + alpha * v).ln();
            let table = vocabulary
                .iter()
                .map(|t| (t.clone(), (bow.count(t) as f64 + alpha).ln() - denom))
                .collect();
            log_likelihoods.insert(label.clone(), table);
        }
        Ok(NaiveBayesModel {
            alpha,
            priors,
            log_likelihoods,
            vocabulary,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn priors(&self) -> &BTreeMap<String, f64> {
        &self.priors
    }

    pub fn vocabulary(&self) -> &BTreeSet<String> {
        &self.vocabulary
    }

    pub fn log_likelihood(&self, label: &str, token: &str) -> Option<f64> {
        self.log_likelihoods.get(label)?.get(token).copied()
    }

    /// Unnormalized joint log-probability per label, in label order.
    /// Out-of-vocabulary tokens are ignored.
    pub fn joint_log_likelihood(&self, sentence: &Sentence) -> Vec<(&str, f64)> {
        let bow = BowVector::from_sentence(sentence);
        self.priors
            .iter()
            .map(|(label, prior)| {
                let table = &self.log_likelihoods[label];
                let mut score = prior.ln();
                for (token, count) in bow.iter() {
                    if let Some(ll) = table.get(token) {
                        score += count as f64 * ll;
                    }
                }
                (label.as_str(), score)
            })
            .collect()
    }

    /// Posterior probability per label.
    pub fn posterior(&self, sentence: &Sentence) -> Vec<(&str, f64)> {
        let joint = self.joint_log_likelihood(sentence);
        let max = joint.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
        let norm = max + joint.iter().map(|(_, s)| (s - max).exp()).sum::<f64>().ln();
        joint.into_iter().map(|(l, s)| (l, (s - norm).exp())).collect()
    }

    /// Most probable label; ties go to the lexicographically first label.
    pub fn predict_label(&self, sentence: &Sentence) -> &str {
        super::argmax(self.joint_log_likelihood(sentence))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(rows: &[(&str, &str)]) -> Vec<(Sentence, String)> {
        rows.iter()
            .map(|(s, l)| (Sentence::parse(s).unwrap(), l.to_string()))
            .collect()
    }

    #[test]
    fn hand_computed_posterior() {
        let m = NaiveBayesModel::train(&corpus(&[("a a", "X"), ("b b", "Y")]), 1.0).unwrap();
        // P(a|X) = (2+1)/(2+2), P(a|Y) = (0+1)/(2+2)
        assert!((m.log_likelihood("X", "a").unwrap() - 0.75f64.ln()).abs() < 1e-12);
        assert!((m.log_likelihood("Y", "a").unwrap() - 0.25f64.ln()).abs() < 1e-12);
        let s = Sentence::parse("a").unwrap();
        assert_eq!(m.predict_label(&s), "X");
        let post = m.posterior(&s);
        assert!((post[0].1 - 0.75).abs() < 1e-12);
        assert_eq!(m.priors()["X"], 0.5);
        assert_eq!(m.priors()["Y"], 0.5);
    }

    #[test]
    fn oov_falls_back_to_priors_with_lexicographic_tie() {
        let m = NaiveBayesModel::train(&corpus(&[("a a", "X"), ("b b", "Y")]), 1.0).unwrap();
        assert_eq!(m.predict_label(&Sentence::parse("z").unwrap()), "X");
        let m = NaiveBayesModel::train(&corpus(&[("a", "B"), ("b", "A")]), 1.0).unwrap();
        assert_eq!(m.predict_label(&Sentence::parse("z").unwrap()), "A");
        let skewed = NaiveBayesModel::train(&corpus(&[("a", "B"), ("c", "B"), ("b", "A")]), 1.0).unwrap();
        assert_eq!(skewed.predict_label(&Sentence::parse("z").unwrap()), "B");
    }

    #[test]
    fn rejects_degenerate_corpora() {
        assert_eq!(NaiveBayesModel::train(&[], 1.0), Err(TrainError::EmptyCorpus));
        assert!(matches!(
            NaiveBayesModel::train(&corpus(&[("a", "X"), ("b", "X")]), 1.0),
            Err(TrainError::SingleLabel(_))
        ));
        assert!(NaiveBayesModel::train(&corpus(&[("a", "X"), ("b", "Y")]), 0.0).is_err());
    }

    #[test]
    fn distributions_are_normalized() {
        let m = NaiveBayesModel::train(
            &corpus(&[("a b c", "X"), ("a a d", "Y"), ("c d d e", "Y"), ("e", "Z")]),
            0.5,
        )
        .unwrap();
        let prior_sum: f64 = m.priors().values().sum();
        assert!((prior_sum - 1.0).abs() < 1e-9);
        for label in m.priors().keys() {
            let mass: f64 = m
                .vocabulary()
                .iter()
                .map(|t| m.log_likelihood(label, t).unwrap().exp())
                .sum();
            assert!((mass - 1.0).abs() < 1e-6, "{label}: {mass}");
        }
    }

    #[test]
    fn json_round_trip() {
        let m = NaiveBayesModel::train(&corpus(&[("a a", "X"), ("b b", "Y")]), 1.0).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: NaiveBayesModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}
