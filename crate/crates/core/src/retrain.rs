//! Retraining experiment: use discovered error inputs, labelled by one model,
//! to retrain the other, and measure how many errors a fresh campaign finds.
//!
//! Per repetition:
//! 1. sample a labelled training set and a held-out set from two grammars
//!    (label = which grammar produced the sentence);
//! 2. train the oracle model (naive Bayes) and the model under repair
//!    (perceptron);
//! 3. run a directed campaign over the merged grammar and harvest the unique
//!    error inputs;
//! 4. for each augmentation fraction, retrain the model under repair on the
//!    training set plus that share of oracle-labelled errors, then count the
//!    errors found by a second campaign. Every fraction uses the same
//!    evaluation seed. When `paired` is set (the default) that seed is the
//!    harvest seed, so the 0% row repeats the harvest campaign and each
//!    re-test starts from the same initial input.

use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{
    labeled_corpus, retrain_with_errors, Example, ModelClassifier, NaiveBayesModel, PerceptronModel, TextModel,
    TrainError, DEFAULT_ALPHA, DEFAULT_EPOCHS,
};
use crate::derivation::DEFAULT_MAX_DEPTH;
use crate::grammar::{Grammar, GrammarError};
use crate::oracle::ClassifierHandle;
use crate::search::{directed_search, CampaignConfig, SearchError};

/// Augmentation levels, in percent of the original training-set size.
pub const DEFAULT_FRACTIONS: [f64; 11] = [0.0, 2.0, 5.0, 7.0, 10.0, 12.0, 15.0, 17.0, 20.0, 22.0, 25.0];

#[derive(Debug, Clone)]
pub struct MurqConfig {
    pub grammar_a: Arc<Grammar>,
    pub label_a: String,
    pub grammar_b: Arc<Grammar>,
    pub label_b: String,
    pub train_per_label: usize,
    pub heldout_per_label: usize,
    pub campaign_iterations: usize,
    pub repetitions: usize,
    /// Percent values, ascending.
    pub fractions: Vec<f64>,
    pub threshold: f64,
    pub alpha: f64,
    pub epochs: usize,
    pub max_depth: usize,
    /// Re-test with the harvest campaign's seed instead of a fresh one.
    pub paired: bool,
    pub seed: u64,
}

impl MurqConfig {
    pub fn new(grammar_a: Arc<Grammar>, grammar_b: Arc<Grammar>) -> Self {
        MurqConfig {
            grammar_a,
            label_a: "G1".into(),
            grammar_b,
            label_b: "G2".into(),
            train_per_label: 200,
            heldout_per_label: 1000,
            campaign_iterations: 1000,
            repetitions: 50,
            fractions: DEFAULT_FRACTIONS.to_vec(),
            threshold: 0.5,
            alpha: DEFAULT_ALPHA,
            epochs: DEFAULT_EPOCHS,
            max_depth: DEFAULT_MAX_DEPTH,
            paired: true,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<(), MurqError> {
        let bad = |m: &str| Err(MurqError::InvalidConfig(m.to_owned()));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if self.fractions.is_empty() {
            return bad("at least one fraction is required");
        }
        if self.fractions.windows(2).any(|w| w[0] >= w[1]) || self.fractions[0] < 0.0 {
            return bad("fractions must be non-negative and strictly ascending");
        }
        if self.label_a == self.label_b {
            return bad("the two grammars need distinct labels");
        }
        if self.train_per_label == 0 || self.heldout_per_label == 0 {
            return bad("training and held-out sizes must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum MurqError {
    #[error("invalid retraining configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

/// One row per augmentation level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainRow {
    pub percent_added: f64,
    /// Mean error count of the post-retraining campaign.
    pub mean_errors: f64,
    /// Mean number of error inputs actually added.
    pub mean_added: f64,
    /// Mean held-out accuracy of the retrained model.
    pub accuracy_retrained: f64,
    /// Mean held-out accuracy of the oracle model (never retrained).
    pub accuracy_oracle: f64,
    pub errors_per_repetition: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainReport {
    pub repetitions: usize,
    pub campaign_iterations: usize,
    pub seed: u64,
    /// Mean errors found by the initial (harvesting) campaign.
    pub harvest_mean_errors: f64,
    pub baseline_accuracy_oracle: f64,
    pub baseline_accuracy_retrained: f64,
    pub rows: Vec<RetrainRow>,
}

impl RetrainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn row(&self, percent: f64) -> Option<&RetrainRow> {
        self.rows.iter().find(|r| r.percent_added == percent)
    }
}

struct Repetition {
    harvest_errors: usize,
    accuracy_oracle: f64,
    accuracy_retrained: f64,
    /// (errors, added, retrained accuracy) per fraction.
    per_fraction: Vec<(usize, usize, f64)>,
}

fn run_repetition(cfg: &MurqConfig, merged: &Arc<Grammar>, seed: u64) -> Result<Repetition, MurqError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corpus = |g: &Grammar, label: &str, n: usize, rng: &mut ChaCha8Rng| labeled_corpus(g, label, n, cfg.max_depth, rng);
    let mut train: Vec<Example> = corpus(&cfg.grammar_a, &cfg.label_a, cfg.train_per_label, &mut rng)?;
    train.extend(corpus(&cfg.grammar_b, &cfg.label_b, cfg.train_per_label, &mut rng)?);
    let mut heldout: Vec<Example> = corpus(&cfg.grammar_a, &cfg.label_a, cfg.heldout_per_label, &mut rng)?;
    heldout.extend(corpus(&cfg.grammar_b, &cfg.label_b, cfg.heldout_per_label, &mut rng)?);

    let oracle_model = TextModel::NaiveBayes(NaiveBayesModel::train(&train, cfg.alpha)?);
    let repaired_model = TextModel::Perceptron(PerceptronModel::train(&train, cfg.epochs, rng.next_u64())?);
    let accuracy_oracle = oracle_model.accuracy(&heldout);
    let accuracy_retrained = repaired_model.accuracy(&heldout);

    let oracle = Arc::new(ModelClassifier::new("naive-bayes", oracle_model));
    let campaign = |model: TextModel, seed: u64| {
        let f1: ClassifierHandle = oracle.clone();
        let f2: ClassifierHandle = Arc::new(ModelClassifier::new("perceptron", model));
        let mut c = CampaignConfig::new(merged.clone(), f1, f2, cfg.threshold, cfg.campaign_iterations)
            .with_seed(seed)
            .with_grammar_name("merged");
        c.max_depth = cfg.max_depth;
        directed_search(&c)
    };

    let harvest_seed = rng.next_u64();
    let fresh_seed = rng.next_u64();
    let sample_seed = rng.next_u64();
    let evaluation_seed = if cfg.paired { harvest_seed } else { fresh_seed };
    let harvest = campaign(repaired_model.clone(), harvest_seed)?;
    let errors = harvest.error_sentences();

    let mut per_fraction = Vec::with_capacity(cfg.fractions.len());
    for &percent in &cfg.fractions {
        let retrained = retrain_with_errors(
            &repaired_model,
            &train,
            &errors,
            oracle.as_ref(),
            percent / 100.0,
            sample_seed,
        )?;
        let accuracy = retrained.model.accuracy(&heldout);
        let report = campaign(retrained.model, evaluation_seed)?;
        per_fraction.push((report.n_err, retrained.added, accuracy));
    }
    Ok(Repetition {
        harvest_errors: harvest.n_err,
        accuracy_oracle,
        accuracy_retrained,
        per_fraction,
    })
}

/// Runs every repetition and averages per augmentation level. Repetitions
/// use independent random streams derived from `cfg.seed`, so the report is
/// reproducible regardless of how repetitions are scheduled.
pub fn run_murq(cfg: &MurqConfig) -> Result<RetrainReport, MurqError> {
    cfg.validate()?;
    let merged = Arc::new(cfg.grammar_a.union(&cfg.grammar_b)?);
    let mut root = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeds: Vec<u64> = (0..cfg.repetitions).map(|_| root.next_u64()).collect();

    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<Repetition, MurqError>> = {
        use rayon::prelude::*;
        seeds
            .par_iter()
            .map(|&s| run_repetition(cfg, &merged, s))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<Repetition, MurqError>> =
        seeds.iter().map(|&s| run_repetition(cfg, &merged, s)).collect();
    let reps = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;

    let n = reps.len() as f64;
    let mean = |f: &dyn Fn(&Repetition) -> f64| reps.iter().map(f).sum::<f64>() / n;
    let rows = cfg
        .fractions
        .iter()
        .enumerate()
        .map(|(i, &percent)| RetrainRow {
            percent_added: percent,
            mean_errors: mean(&|r| r.per_fraction[i].0 as f64),
            mean_added: mean(&|r| r.per_fraction[i].1 as f64),
            accuracy_retrained: mean(&|r| r.per_fraction[i].2),
            accuracy_oracle: mean(&|r| r.accuracy_oracle),
            errors_per_repetition: reps.iter().map(|r| r.per_fraction[i].0).collect(),
        })
        .collect();
    Ok(RetrainReport {
        repetitions: cfg.repetitions,
        campaign_iterations: cfg.campaign_iterations,
        seed: cfg.seed,
        harvest_mean_errors: mean(&|r| r.harvest_errors as f64),
        baseline_accuracy_oracle: mean(&|r| r.accuracy_oracle),
        baseline_accuracy_retrained: mean(&|r| r.accuracy_retrained),
        rows,
    })
}
