use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BowVector, TrainError};
use crate::derivation::Sentence;

pub const DEFAULT_EPOCHS: usize = 10;

/// Multiclass averaged perceptron over bag-of-words counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptronModel {
    epochs: usize,
    seed: u64,
    /// label -> token -> averaged weight. Zero weights are omitted.
    weights: BTreeMap<String, BTreeMap<String, f64>>,
    bias: BTreeMap<String, f64>,
}

#[derive(Default, Clone)]
struct Accumulator {
    weights: HashMap<String, f64>,
    /// Sum of update * timestamp, for averaging.
    stamped: HashMap<String, f64>,
    bias: f64,
    bias_stamped: f64,
}

impl Accumulator {
    fn score(&self, bow: &BowVector) -> f64 {
        self.bias
            + bow
                .iter()
                .map(|(t, c)| self.weights.get(t).copied().unwrap_or(0.0) * c as f64)
                .sum::<f64>()
    }

    fn update(&mut self, bow: &BowVector, sign: f64, step: f64) {
        for (t, c) in bow.iter() {
            let delta = sign * c as f64;
            *self.weights.entry(t.to_owned()).or_default() += delta;
            *self.stamped.entry(t.to_owned()).or_default() += step * delta;
        }
        self.bias += sign;
        self.bias_stamped += step * sign;
    }
}

impl PerceptronModel {
    /// Trains for `epochs` passes; example order is shuffled each pass from `seed`.
    pub fn train(corpus: &[(Sentence, String)], epochs: usize, seed: u64) -> Result<Self, TrainError> {
        if epochs == 0 {
            return Err(TrainError::InvalidHyperparameter("epochs = 0".into()));
        }
        let labels = super::label_set(corpus)?;
        let examples: Vec<(BowVector, usize)> = corpus
            .iter()
            .map(|(s, l)| {
                let y = labels.iter().position(|x| x == l).expect("label collected");
                (BowVector::from_sentence(s), y)
            })
            .collect();

        let mut acc = vec![Accumulator::default(); labels.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut step = 1.0;
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                let (bow, y) = &examples[i];
                let predicted = argmax_index(acc.iter().map(|a| a.score(bow)));
                if predicted != *y {
                    acc[*y].update(bow, 1.0, step);
                    acc[predicted].update(bow, -1.0, step);
                }
                step += 1.0;
            }
        }

        let mut weights = BTreeMap::new();
        let mut bias = BTreeMap::new();
        for (label, a) in labels.iter().zip(&acc) {
            let table: BTreeMap<String, f64> = a
                .weights
                .iter()
                .map(|(t, w)| (t.clone(), w - a.stamped[t] / step))
                .filter(|(_, w)| *w != 0.0)
                .collect();
            weights.insert(label.clone(), table);
            bias.insert(label.clone(), a.bias - a.bias_stamped / step);
        }
        Ok(PerceptronModel {
            epochs,
            seed,
            weights,
            bias,
        })
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weight(&self, label: &str, token: &str) -> f64 {
        self.weights
            .get(label)
            .and_then(|t| t.get(token))
            .copied()
            .unwrap_or(0.0)
    }

    /// Linear score per label, in label order.
    pub fn scores(&self, sentence: &Sentence) -> Vec<(&str, f64)> {
        let bow = BowVector::from_sentence(sentence);
        self.bias
            .iter()
            .map(|(label, b)| {
                let table = &self.weights[label];
                let s = b + bow
                    .iter()
                    .map(|(t, c)| table.get(t).copied().unwrap_or(0.0) * c as f64)
                    .sum::<f64>();
                (label.as_str(), s)
            })
            .collect()
    }

    pub fn predict_label(&self, sentence: &Sentence) -> &str {
        super::argmax(self.scores(sentence))
    }
}

fn argmax_index(scores: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, s) in scores.enumerate() {
        if s > best.1 {
            best = (i, s);
        }
    }
    best.0
}
