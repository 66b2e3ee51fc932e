//! Grammar-based directed differential testing for text classifiers.
//!
//! Sentences are generated from a context-free grammar, perturbed one leaf
//! at a time in their derivation trees, and fed to two classifiers. An input
//! on which the two label sets have a Jaccard index below a threshold is
//! erroneous; the directed search keeps exploring around erroneous inputs.
//!
//! ```
//! use std::sync::Arc;
//! use gramdiff_core::{builtin, run_campaign, CampaignConfig, LabelSet, Strategy};
//! use gramdiff_core::classifiers::KeywordClassifier;
//!
//! let grammar = Arc::new(builtin::grammar("example").unwrap());
//! let f1 = Arc::new(KeywordClassifier::constant("f1", LabelSet::new(["A"])));
//! let f2 = Arc::new(KeywordClassifier::new("f2", ["shot"], LabelSet::new(["B"]), LabelSet::new(["A"])));
//! let report = run_campaign(
//!     &CampaignConfig::new(grammar, f1, f2, 0.5, 500).with_strategy(Strategy::Directed).with_seed(7),
//! )?;
//! assert!(report.n_err > 0);
//! # Ok::<(), gramdiff_core::search::SearchError>(())
//! ```

pub mod builtin;
pub mod classifiers;
pub mod derivation;
pub mod grammar;
pub mod oracle;
pub mod retrain;
pub mod search;

pub use derivation::{generate, perturb, similar, yield_sentence, DerivationTree, Sentence};
pub use grammar::{parse_grammar, Grammar, Symbol};
pub use oracle::{evaluate, jaccard, Classifier, ClassifierHandle, LabelSet};
pub use search::{derive_seed, run_campaign, CampaignConfig, CampaignReport, Strategy};
