//! Test-generation campaigns.
//!
//! Three strategies share one trace format:
//!
//! * `directed`: perturb the current input; move to the candidate unless that
//!   would leave an error-inducing input for a non-error one (backtrack).
//! * `no-backtrack`: the same walk with the backtrack guard removed.
//! * `random`: independent fresh sentences from the grammar.
//!
//! Record 0 of every trace is the initial input; records `1..=N` are the
//! iterations. A campaign is fully determined by its configuration and seed.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derivation::{
    generate, perturb_with_mode, yield_sentence, DerivationError, DerivationTree, PerturbMode, Sentence,
    DEFAULT_MAX_DEPTH,
};
use crate::grammar::Grammar;
use crate::oracle::{jaccard, Classifier, ClassifierHandle, LabelSet, QueryError};

pub const DEFAULT_MAX_INITIAL_PROBES: usize = 100;

/// Random streams carved out of one campaign seed.
const INITIAL_STREAM: u64 = 1;
const SEARCH_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Directed,
    NoBacktrack,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Directed, Strategy::NoBacktrack, Strategy::Random];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Directed => "directed",
            Strategy::NoBacktrack => "no-backtrack",
            Strategy::Random => "random",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Requirement on the initial input's error status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialMode {
    #[default]
    Any,
    ForceError,
    ForceNonError,
}

/// Error status of the current input, then of the candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    NN,
    NE,
    EE,
    EN,
}

impl Transition {
    pub fn between(from_error: bool, to_error: bool) -> Self {
        match (from_error, to_error) {
            (false, false) => Transition::NN,
            (false, true) => Transition::NE,
            (true, true) => Transition::EE,
            (true, false) => Transition::EN,
        }
    }
}

#[derive(Clone)]
pub struct CampaignConfig {
    pub grammar: Arc<Grammar>,
    /// Name used in reports.
    pub grammar_name: String,
    pub f1: ClassifierHandle,
    pub f2: ClassifierHandle,
    /// Jaccard threshold J in [0, 1].
    pub threshold: f64,
    /// Iteration budget N (at least 1).
    pub iterations: usize,
    pub strategy: Strategy,
    pub seed: u64,
    pub initial_mode: InitialMode,
    pub max_initial_probes: usize,
    pub max_depth: usize,
    pub perturb_mode: PerturbMode,
}

impl CampaignConfig {
    pub fn new(
        grammar: Arc<Grammar>,
        f1: ClassifierHandle,
        f2: ClassifierHandle,
        threshold: f64,
        iterations: usize,
    ) -> Self {
        CampaignConfig {
            grammar,
            grammar_name: "grammar".into(),
            f1,
            f2,
            threshold,
            iterations,
            strategy: Strategy::Directed,
            seed: 0,
            initial_mode: InitialMode::Any,
            max_initial_probes: DEFAULT_MAX_INITIAL_PROBES,
            max_depth: DEFAULT_MAX_DEPTH,
            perturb_mode: PerturbMode::Retry,
        }
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_initial_mode(mut self, mode: InitialMode) -> Self {
        self.initial_mode = mode;
        self
    }

    pub fn with_grammar_name(mut self, name: impl Into<String>) -> Self {
        self.grammar_name = name.into();
        self
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.iterations == 0 {
            return Err(SearchError::InvalidConfig("iterations must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(SearchError::InvalidConfig(format!(
                "threshold {} is outside [0, 1]",
                self.threshold
            )));
        }
        if self.initial_mode != InitialMode::Any && self.max_initial_probes == 0 {
            return Err(SearchError::InvalidConfig("max_initial_probes must be at least 1".into()));
        }
        Ok(())
    }

    pub fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            grammar: self.grammar_name.clone(),
            f1: self.f1.id().to_owned(),
            f2: self.f2.id().to_owned(),
            threshold: self.threshold,
            iterations: self.iterations,
            strategy: self.strategy,
            seed: self.seed,
            initial_mode: self.initial_mode,
            max_initial_probes: self.max_initial_probes,
            max_depth: self.max_depth,
            perturb_mode: self.perturb_mode,
        }
    }
}

/// Serializable copy of a campaign's configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub grammar: String,
    pub f1: String,
    pub f2: String,
    pub threshold: f64,
    pub iterations: usize,
    pub strategy: Strategy,
    pub seed: u64,
    pub initial_mode: InitialMode,
    pub max_initial_probes: usize,
    pub max_depth: usize,
    pub perturb_mode: PerturbMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    pub sentence: String,
    pub is_error: bool,
    pub jaccard: f64,
    /// `None` for the initial input, which has no predecessor.
    pub transition: Option<Transition>,
    /// Whether the candidate became the current input.
    pub accepted: bool,
    /// The current input could not be perturbed and was replaced by a fresh one.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub regenerated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub config: ConfigEcho,
    #[serde(skip)]
    pub trace: Vec<IterationRecord>,
    /// Unique sentences generated.
    pub n_inputs: usize,
    /// Unique erroneous sentences.
    pub n_err: usize,
    pub err_r: f64,
    pub iterations_to_first_error: Option<usize>,
    pub regenerations: usize,
    /// Set when the campaign was cut short by a classifier failure.
    pub partial: bool,
}

impl CampaignReport {
    fn from_trace(config: ConfigEcho, trace: Vec<IterationRecord>, partial: bool) -> Self {
        let mut inputs = HashSet::new();
        let mut errors = HashSet::new();
        for r in &trace {
            inputs.insert(r.sentence.as_str());
            if r.is_error {
                errors.insert(r.sentence.as_str());
            }
        }
        let (n_inputs, n_err) = (inputs.len(), errors.len());
        let err_r = if n_inputs == 0 {
            0.0
        } else {
            n_err as f64 / n_inputs as f64
        };
        CampaignReport {
            iterations_to_first_error: trace.iter().find(|r| r.is_error).map(|r| r.index),
            regenerations: trace.iter().filter(|r| r.regenerated).count(),
            config,
            trace,
            n_inputs,
            n_err,
            err_r,
            partial,
        }
    }

    /// Unique erroneous sentences in order of discovery.
    pub fn error_sentences(&self) -> Vec<Sentence> {
        let mut seen = HashSet::new();
        self.trace
            .iter()
            .filter(|r| r.is_error && seen.insert(r.sentence.as_str()))
            .map(|r| Sentence::parse(&r.sentence).expect("trace sentences are non-empty"))
            .collect()
    }

    /// Unique inputs over records emitted.
    pub fn unique_ratio(&self) -> f64 {
        if self.trace.is_empty() {
            0.0
        } else {
            self.n_inputs as f64 / self.trace.len() as f64
        }
    }

    /// One JSON object per trace record, newline-terminated.
    pub fn write_trace_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.trace {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn trace_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_trace_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    /// Aggregate report (without the trace) as a JSON document.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn summary_row(&self) -> SummaryRow {
        SummaryRow {
            strategy: self.config.strategy,
            grammar: self.config.grammar.clone(),
            pair: format!("{}-{}", self.config.f1, self.config.f2),
            threshold: self.config.threshold,
            n_inputs: self.n_inputs,
            n_err: self.n_err,
            err_r: self.err_r,
        }
    }
}

/// One line of the campaign summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: Strategy,
    pub grammar: String,
    pub pair: String,
    #[serde(rename = "J")]
    pub threshold: f64,
    pub n_inputs: usize,
    pub n_err: usize,
    pub err_r: f64,
}

/// Relative improvement of `err_r` over a baseline, in percent. `None` when
/// the baseline found nothing.
pub fn improvement_pct(err_r: f64, baseline_err_r: f64) -> Option<f64> {
    (baseline_err_r > 0.0).then(|| (err_r - baseline_err_r) / baseline_err_r * 100.0)
}

/// Seed of the `index`-th campaign in a family derived from `base`. Used by
/// suites and repeated campaigns so each run gets an independent stream.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    use rand::RngCore;
    stream(base, (1 << 32) | index).next_u64()
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid campaign configuration: {0}")]
    InvalidConfig(String),
    #[error("no {mode:?} initial input found in {probes} probes")]
    ProbesExhausted { mode: InitialMode, probes: usize },
    #[error(transparent)]
    Generation(#[from] DerivationError),
    #[error("campaign aborted: {source}")]
    Classifier {
        source: QueryError,
        /// Trace up to the failure.
        partial: Box<Option<CampaignReport>>,
    },
}

/// Outcome of evaluating one input against the classifier pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub f1: LabelSet,
    pub f2: LabelSet,
    pub jaccard: f64,
    pub is_error: bool,
}

/// Queries both classifiers and applies the threshold, memoizing per
/// sentence text for the lifetime of one campaign.
pub struct Evaluator<'a> {
    f1: &'a dyn Classifier,
    f2: &'a dyn Classifier,
    threshold: f64,
    cache: HashMap<String, Evaluation>,
}

impl<'a> Evaluator<'a> {
    pub fn new(f1: &'a dyn Classifier, f2: &'a dyn Classifier, threshold: f64) -> Self {
        Evaluator {
            f1,
            f2,
            threshold,
            cache: HashMap::new(),
        }
    }

    pub fn evaluate(&mut self, sentence: &Sentence) -> Result<&Evaluation, QueryError> {
        if !self.cache.contains_key(sentence.text()) {
            let (a, b) = if self.f1.is_remote() || self.f2.is_remote() {
                std::thread::scope(|scope| {
                    let second = scope.spawn(|| self.f2.classify(sentence));
                    let first = self.f1.classify(sentence);
                    (first, second.join().expect("classifier thread panicked"))
                })
            } else {
                (self.f1.classify(sentence), self.f2.classify(sentence))
            };
            let (a, b) = (a?, b?);
            let ji = jaccard(&a, &b);
            let eval = Evaluation {
                is_error: ji < self.threshold,
                jaccard: ji,
                f1: a,
                f2: b,
            };
            self.cache.insert(sentence.text().to_owned(), eval);
        }
        Ok(&self.cache[sentence.text()])
    }

    /// Distinct sentences queried so far.
    pub fn queried(&self) -> usize {
        self.cache.len()
    }
}

/// Draws initial inputs until one matches `mode` (a single draw for `Any`).
pub fn find_initial(
    grammar: &Grammar,
    f1: &dyn Classifier,
    f2: &dyn Classifier,
    threshold: f64,
    mode: InitialMode,
    max_probes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DerivationTree, SearchError> {
    let mut evaluator = Evaluator::new(f1, f2, threshold);
    find_initial_with(grammar, &mut evaluator, mode, max_probes, DEFAULT_MAX_DEPTH, rng)
        .map(|(tree, _)| tree)
        .map_err(|e| match e {
            Probe::Search(e) => e,
            Probe::Query(source) => SearchError::Classifier {
                source,
                partial: Box::new(None),
            },
        })
}

enum Probe {
    Search(SearchError),
    Query(QueryError),
}

fn find_initial_with(
    grammar: &Grammar,
    evaluator: &mut Evaluator<'_>,
    mode: InitialMode,
    max_probes: usize,
    max_depth: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(DerivationTree, Evaluation), Probe> {
    let probes = if mode == InitialMode::Any { 1 } else { max_probes };
    for _ in 0..probes {
        let tree = generate(grammar, rng, max_depth).map_err(|e| Probe::Search(e.into()))?;
        let eval = evaluator
            .evaluate(&yield_sentence(&tree))
            .map_err(Probe::Query)?
            .clone();
        let wanted = match mode {
            InitialMode::Any => true,
            InitialMode::ForceError => eval.is_error,
            InitialMode::ForceNonError => !eval.is_error,
        };
        if wanted {
            return Ok((tree, eval));
        }
    }
    Err(Probe::Search(SearchError::ProbesExhausted {
        mode,
        probes: max_probes,
    }))
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Runs the strategy named in `config`.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignReport, SearchError> {
    match config.strategy {
        Strategy::Directed => directed_search(config),
        Strategy::NoBacktrack => no_backtrack_search(config),
        Strategy::Random => random_search(config),
    }
}

/// Directed search with backtracking. `config.strategy` is ignored.
pub fn directed_search(config: &CampaignConfig) -> Result<CampaignReport, SearchError> {
    walk(config, Strategy::Directed)
}

/// Directed search without the backtrack guard. `config.strategy` is ignored.
pub fn no_backtrack_search(config: &CampaignConfig) -> Result<CampaignReport, SearchError> {
    walk(config, Strategy::NoBacktrack)
}

struct Run<'a> {
    config: &'a CampaignConfig,
    echo: ConfigEcho,
    evaluator: Evaluator<'a>,
    trace: Vec<IterationRecord>,
}

impl<'a> Run<'a> {
    fn new(config: &'a CampaignConfig, strategy: Strategy) -> Result<Self, SearchError> {
        config.validate()?;
        let mut echo = config.echo();
        echo.strategy = strategy;
        Ok(Run {
            config,
            echo,
            evaluator: Evaluator::new(config.f1.as_ref(), config.f2.as_ref(), config.threshold),
            trace: Vec::with_capacity(config.iterations + 1),
        })
    }

    fn abort(self, source: QueryError) -> SearchError {
        log::error!("campaign aborted after {} records: {source}", self.trace.len());
        let partial = CampaignReport::from_trace(self.echo, self.trace, true);
        SearchError::Classifier {
            source,
            partial: Box::new(Some(partial)),
        }
    }

    fn initial(&mut self, rng: &mut ChaCha8Rng) -> Result<(DerivationTree, bool), Probe> {
        let (tree, eval) = find_initial_with(
            &self.config.grammar,
            &mut self.evaluator,
            self.config.initial_mode,
            self.config.max_initial_probes,
            self.config.max_depth,
            rng,
        )?;
        self.trace.push(IterationRecord {
            index: 0,
            sentence: yield_sentence(&tree).text().to_owned(),
            is_error: eval.is_error,
            jaccard: eval.jaccard,
            transition: None,
            accepted: true,
            regenerated: false,
        });
        Ok((tree, eval.is_error))
    }

    fn finish(self) -> CampaignReport {
        CampaignReport::from_trace(self.echo, self.trace, false)
    }
}

fn start<'a>(config: &'a CampaignConfig, strategy: Strategy) -> Result<(Run<'a>, DerivationTree, bool), SearchError> {
    let mut run = Run::new(config, strategy)?;
    let mut rng = stream(config.seed, INITIAL_STREAM);
    match run.initial(&mut rng) {
        Ok((tree, is_error)) => Ok((run, tree, is_error)),
        Err(Probe::Search(e)) => Err(e),
        Err(Probe::Query(e)) => Err(run.abort(e)),
    }
}

fn walk(config: &CampaignConfig, strategy: Strategy) -> Result<CampaignReport, SearchError> {
    let (mut run, mut current, _) = start(config, strategy)?;
    let mut rng = stream(config.seed, SEARCH_STREAM);
    let grammar = &config.grammar;

    for index in 1..=config.iterations {
        let current_sentence = yield_sentence(&current);
        let current_error = match run.evaluator.evaluate(&current_sentence) {
            Ok(e) => e.is_error,
            Err(e) => return Err(run.abort(e)),
        };
        let (candidate, regenerated) = match perturb_with_mode(&current, grammar, &mut rng, config.perturb_mode) {
            Ok(tree) => (tree, false),
            Err(_) => {
                log::info!("iteration {index}: cannot perturb \"{current_sentence}\"; regenerating");
                (generate(grammar, &mut rng, config.max_depth)?, true)
            }
        };
        let sentence = yield_sentence(&candidate);
        let eval = match run.evaluator.evaluate(&sentence) {
            Ok(e) => e,
            Err(e) => return Err(run.abort(e)),
        };
        let transition = Transition::between(current_error, eval.is_error);
        let accepted = regenerated || strategy != Strategy::Directed || transition != Transition::EN;
        run.trace.push(IterationRecord {
            index,
            sentence: sentence.text().to_owned(),
            is_error: eval.is_error,
            jaccard: eval.jaccard,
            transition: Some(transition),
            accepted,
            regenerated,
        });
        if accepted {
            current = candidate;
        }
    }
    Ok(run.finish())
}

/// Independent random generation. `config.strategy` is ignored.
pub fn random_search(config: &CampaignConfig) -> Result<CampaignReport, SearchError> {
    let (mut run, _, mut previous_error) = start(config, Strategy::Random)?;
    let mut rng = stream(config.seed, SEARCH_STREAM);
    for index in 1..=config.iterations {
        let tree = generate(&config.grammar, &mut rng, config.max_depth)?;
        let sentence = yield_sentence(&tree);
        let eval = match run.evaluator.evaluate(&sentence) {
            Ok(e) => e,
            Err(e) => return Err(run.abort(e)),
        };
        run.trace.push(IterationRecord {
            index,
            sentence: sentence.text().to_owned(),
            is_error: eval.is_error,
            jaccard: eval.jaccard,
            transition: Some(Transition::between(previous_error, eval.is_error)),
            accepted: true,
            regenerated: false,
        });
        previous_error = eval.is_error;
    }
    Ok(run.finish())
}
