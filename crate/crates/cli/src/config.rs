//! Suite configuration: the JSON document accepted by `gramdiff run`.
//! The schema is described in `docs/config.md`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use gramdiff_core::builtin;
use gramdiff_core::classifiers::{
    labeled_corpus, Example, KeywordClassifier, LexiconClassifier, ModelClassifier, NaiveBayesModel,
    PerceptronModel, TextModel, DEFAULT_ALPHA, DEFAULT_EPOCHS,
};
use gramdiff_core::derivation::{PerturbMode, DEFAULT_MAX_DEPTH};
use gramdiff_core::grammar::Grammar;
use gramdiff_core::oracle::http::{HttpClassifier, HttpConfig};
use gramdiff_core::oracle::{ClassifierHandle, LabelSet, DEFAULT_TOP_K};
use gramdiff_core::search::{InitialMode, Strategy, DEFAULT_MAX_INITIAL_PROBES};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::Failure;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Campaigns run concurrently, at most this many at a time.
    #[serde(default = "one")]
    pub parallelism: usize,
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
    /// Name -> grammar reference ("builtin:NAME" or a path), or a list of
    /// references merged into one grammar.
    pub grammars: BTreeMap<String, OneOrMany<String>>,
    pub classifiers: BTreeMap<String, ClassifierSpec>,
    pub campaigns: Vec<CampaignSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// Per-run iteration traces.
    Jsonl,
    /// Per-run aggregate reports.
    Json,
    /// summary.csv and comparison.csv.
    Csv,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("gramdiff-out")
}
fn one() -> usize {
    1
}
fn all_formats() -> Vec<Format> {
    vec![Format::Jsonl, Format::Json, Format::Csv]
}

/// A scalar or a list; lists expand into a sweep.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    pub name: String,
    pub grammar: OneOrMany<String>,
    /// Classifier names for f1 and f2.
    pub pair: [String; 2],
    pub threshold: OneOrMany<f64>,
    pub iterations: usize,
    #[serde(default = "default_strategy")]
    pub strategy: OneOrMany<Strategy>,
    #[serde(default)]
    pub initial_mode: InitialMode,
    #[serde(default = "default_probes")]
    pub max_initial_probes: usize,
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    #[serde(default)]
    pub perturb_mode: PerturbMode,
    /// Independent repetitions, each with its own derived seed.
    #[serde(default = "one")]
    pub repeat: usize,
}

fn default_strategy() -> OneOrMany<Strategy> {
    OneOrMany::One(Strategy::Directed)
}
fn default_probes() -> usize {
    DEFAULT_MAX_INITIAL_PROBES
}
fn default_depth() -> usize {
    DEFAULT_MAX_DEPTH
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierSpec {
    /// {hit} when any keyword occurs, {miss} otherwise.
    Keyword {
        keywords: Vec<String>,
        hit: Vec<String>,
        miss: Vec<String>,
    },
    Constant {
        labels: Vec<String>,
    },
    Lexicon {
        entries: BTreeMap<String, Vec<String>>,
        #[serde(default = "default_top_k")]
        top_k: usize,
    },
    NaiveBayes {
        #[serde(flatten)]
        source: ModelSource,
    },
    Perceptron {
        #[serde(flatten)]
        source: ModelSource,
    },
    Http(HttpSpec),
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpSpec {
    pub url: String,
    pub timeout_ms: Option<u64>,
    pub retries: Option<u32>,
    pub backoff_ms: Option<u64>,
    pub top_k: Option<usize>,
}

/// Either a saved model file or an inline training recipe.
#[derive(Debug, Clone, Deserialize)]
pub struct ModelSource {
    pub model: Option<String>,
    pub train: Option<TrainSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub corpora: Vec<CorpusSpec>,
    pub alpha: Option<f64>,
    pub epochs: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    /// Where to write the trained model, if anywhere.
    pub save: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    /// Grammar name from the suite's `grammars` table.
    pub grammar: String,
    pub label: String,
    pub count: usize,
}

impl SuiteConfig {
    pub fn from_json(text: &str) -> Result<Self, Failure> {
        let cfg: SuiteConfig = serde_json::from_str(text).map_err(|e| Failure::config(format!("invalid suite config: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), Failure> {
        if self.campaigns.is_empty() {
            return Err(Failure::config("the suite defines no campaigns"));
        }
        if self.parallelism == 0 {
            return Err(Failure::config("parallelism must be at least 1"));
        }
        for c in &self.campaigns {
            let bad = |m: String| Err(Failure::config(format!("campaign \"{}\": {m}", c.name)));
            for g in c.grammar.values() {
                if !self.grammars.contains_key(&g) {
                    return bad(format!("unknown grammar \"{g}\""));
                }
            }
            for id in &c.pair {
                if !self.classifiers.contains_key(id) {
                    return bad(format!("unknown classifier \"{id}\""));
                }
            }
            for j in c.threshold.values() {
                if !(0.0..=1.0).contains(&j) {
                    return bad(format!("threshold {j} is outside [0, 1]"));
                }
            }
            if c.iterations == 0 || c.repeat == 0 {
                return bad("iterations and repeat must be at least 1".into());
            }
            if c.grammar.values().is_empty() || c.threshold.values().is_empty() || c.strategy.values().is_empty() {
                return bad("sweep lists must not be empty".into());
            }
        }
        let names: std::collections::BTreeSet<&str> = self.campaigns.iter().map(|c| c.name.as_str()).collect();
        if names.len() != self.campaigns.len() {
            return Err(Failure::config("campaign names must be unique"));
        }
        Ok(())
    }
}

/// Loads one reference, or merges several sharing a start symbol.
pub fn load_grammar_set(refs: &OneOrMany<String>, base: &Path) -> Result<Grammar, Failure> {
    let refs = refs.values();
    let (first, rest) = refs.split_first().ok_or_else(|| Failure::config("empty grammar list"))?;
    let mut merged = load_grammar(first, base)?;
    for r in rest {
        merged = merged
            .union(&load_grammar(r, base)?)
            .map_err(|e| Failure::grammar(format!("merging {r}: {e}")))?;
    }
    Ok(merged)
}

/// Resolves "builtin:NAME" or a path (relative to `base`) and parses it.
pub fn load_grammar(reference: &str, base: &Path) -> Result<Grammar, Failure> {
    if let Some(name) = reference.strip_prefix("builtin:") {
        return builtin::grammar(name).ok_or_else(|| {
            let known: Vec<&str> = builtin::ALL.iter().map(|(n, _)| *n).collect();
            Failure::grammar(format!("no bundled grammar \"{name}\" (bundled: {})", known.join(", ")))
        });
    }
    let path = base.join(reference);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Failure::grammar(format!("cannot read grammar {}: {e}", path.display())))?;
    text.parse::<Grammar>()
        .map_err(|e| Failure::grammar(format!("{}: {e}", path.display())))
}

fn labels(v: &[String]) -> LabelSet {
    LabelSet::new(v.iter().map(String::as_str))
}

impl ClassifierSpec {
    pub fn build(
        &self,
        id: &str,
        grammars: &BTreeMap<String, Arc<Grammar>>,
        base: &Path,
    ) -> Result<ClassifierHandle, Failure> {
        Ok(match self {
            ClassifierSpec::Keyword { keywords, hit, miss } => {
                Arc::new(KeywordClassifier::new(id, keywords.iter().cloned(), labels(hit), labels(miss)))
            }
            ClassifierSpec::Constant { labels: l } => Arc::new(KeywordClassifier::constant(id, labels(l))),
            ClassifierSpec::Lexicon { entries, top_k } => {
                Arc::new(LexiconClassifier::new(id, entries.clone()).with_top_k(*top_k))
            }
            ClassifierSpec::NaiveBayes { source } => Arc::new(ModelClassifier::new(id, source.build(id, false, grammars, base)?)),
            ClassifierSpec::Perceptron { source } => Arc::new(ModelClassifier::new(id, source.build(id, true, grammars, base)?)),
            ClassifierSpec::Http(h) => {
                let mut cfg = HttpConfig::new(h.url.clone());
                cfg.timeout_ms = h.timeout_ms.unwrap_or(cfg.timeout_ms);
                cfg.retries = h.retries.unwrap_or(cfg.retries);
                cfg.backoff_ms = h.backoff_ms.unwrap_or(cfg.backoff_ms);
                cfg.top_k = h.top_k.unwrap_or(cfg.top_k);
                Arc::new(HttpClassifier::new(id, cfg))
            }
        })
    }
}

impl ModelSource {
    fn build(
        &self,
        id: &str,
        perceptron: bool,
        grammars: &BTreeMap<String, Arc<Grammar>>,
        base: &Path,
    ) -> Result<TextModel, Failure> {
        let model = match (&self.model, &self.train) {
            (Some(path), None) => {
                let path = base.join(path);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Failure::config(format!("classifier \"{id}\": cannot read {}: {e}", path.display())))?;
                TextModel::from_json(&text)
                    .map_err(|e| Failure::config(format!("classifier \"{id}\": {}: {e}", path.display())))?
            }
            (None, Some(train)) => train.run(id, perceptron, grammars, base)?,
            _ => {
                return Err(Failure::config(format!(
                    "classifier \"{id}\": give exactly one of \"model\" and \"train\""
                )))
            }
        };
        if matches!(model, TextModel::Perceptron(_)) != perceptron {
            return Err(Failure::config(format!("classifier \"{id}\": model file holds the wrong kind of model")));
        }
        Ok(model)
    }
}

impl TrainSpec {
    fn run(
        &self,
        id: &str,
        perceptron: bool,
        grammars: &BTreeMap<String, Arc<Grammar>>,
        base: &Path,
    ) -> Result<TextModel, Failure> {
        let fail = |m: String| Failure::config(format!("classifier \"{id}\": {m}"));
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut corpus: Vec<Example> = Vec::new();
        for c in &self.corpora {
            let g = grammars
                .get(&c.grammar)
                .ok_or_else(|| fail(format!("unknown grammar \"{}\"", c.grammar)))?;
            corpus.extend(labeled_corpus(g, &c.label, c.count, self.max_depth, &mut rng).map_err(|e| fail(e.to_string()))?);
        }
        let model = if perceptron {
            let epochs = self.epochs.unwrap_or(DEFAULT_EPOCHS);
            TextModel::Perceptron(PerceptronModel::train(&corpus, epochs, self.seed).map_err(|e| fail(e.to_string()))?)
        } else {
            let alpha = self.alpha.unwrap_or(DEFAULT_ALPHA);
            TextModel::NaiveBayes(NaiveBayesModel::train(&corpus, alpha).map_err(|e| fail(e.to_string()))?)
        };
        if let Some(save) = &self.save {
            let path = base.join(save);
            std::fs::write(&path, model.to_json()).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        }
        Ok(model)
    }
}
