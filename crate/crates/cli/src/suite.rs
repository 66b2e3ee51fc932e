//! Expands a suite into individual runs, executes them on a bounded worker
//! pool and writes traces, reports and the CSV tables.
//!
//! Every run of campaign `c`, repetition `r` uses
//! `derive_seed(derive_seed(suite_seed, c), r)` whatever its strategy,
//! threshold or grammar, so sweeps are paired: each point of a sweep starts
//! from the same random stream.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use gramdiff_core::grammar::Grammar;
use gramdiff_core::oracle::{ClassifierHandle, QueryError};
use gramdiff_core::search::{
    derive_seed, improvement_pct, run_campaign, CampaignConfig, CampaignReport, SearchError, Strategy,
};
use log::{info, warn};

use crate::config::{load_grammar_set, Format, SuiteConfig};
use crate::Failure;

/// One fully specified campaign run.
struct Job {
    campaign: String,
    grammar: String,
    pair: String,
    threshold: f64,
    strategy: Strategy,
    repeat: usize,
    seed: u64,
    config: CampaignConfig,
}

impl Job {
    /// File stem under `runs/`; unique within a suite.
    fn stem(&self) -> String {
        let raw = format!(
            "{}__{}__J{}__{}__r{}",
            self.campaign, self.grammar, self.threshold, self.strategy, self.repeat
        );
        raw.chars()
            .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
            .collect()
    }
}

enum Outcome {
    Done(CampaignReport),
    /// Cut short by a classifier failure; the report covers what ran.
    Partial(CampaignReport, Failure),
    Failed(Failure),
}

pub fn run(path: &Path, seed: Option<u64>, output_dir: Option<PathBuf>, iterations: Option<usize>) -> Result<(), Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = SuiteConfig::from_json(&text)?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = match output_dir {
        Some(o) => o,
        None => base.join(&cfg.output_dir),
    };
    if let Some(n) = iterations {
        if n == 0 {
            return Err(Failure::config("--iterations must be at least 1"));
        }
        cfg.campaigns.iter_mut().for_each(|c| c.iterations = n);
    }

    let mut grammars: BTreeMap<String, Arc<Grammar>> = BTreeMap::new();
    for (name, reference) in &cfg.grammars {
        grammars.insert(name.clone(), Arc::new(load_grammar_set(reference, &base)?));
    }
    let mut classifiers: BTreeMap<String, ClassifierHandle> = BTreeMap::new();
    for (id, spec) in &cfg.classifiers {
        classifiers.insert(id.clone(), spec.build(id, &grammars, &base)?);
    }

    let jobs = expand(&cfg, &grammars, &classifiers);
    let runs_dir = out.join("runs");
    fs::create_dir_all(&runs_dir).map_err(|e| Failure::io(format!("cannot create {}: {e}", runs_dir.display())))?;
    info!("{} runs, parallelism {}", jobs.len(), cfg.parallelism);

    let outcomes = execute(&jobs, cfg.parallelism, &runs_dir, &cfg.formats);

    let mut summary = Vec::new();
    let mut worst: Option<Failure> = None;
    for (job, outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Outcome::Done(report) => summary.push((job, report)),
            Outcome::Partial(report, f) => {
                eprintln!("{}: {} (partial results kept)", job.stem(), f.message);
                summary.push((job, report));
                worst = Some(f);
            }
            Outcome::Failed(f) => {
                eprintln!("{}: {}", job.stem(), f.message);
                // Transport failures outrank the rest; they decide the exit code.
                if worst.as_ref().is_none_or(|w| w.code != 4) {
                    worst = Some(f);
                }
            }
        }
    }
    if cfg.formats.contains(&Format::Csv) {
        write_summary(&out.join("summary.csv"), &summary)?;
        write_comparison(&out.join("comparison.csv"), &summary)?;
    }
    for (job, report) in &summary {
        println!(
            "{:<40} n_inputs {:>6}  n_err {:>6}  err_r {:.4}{}",
            job.stem(),
            report.n_inputs,
            report.n_err,
            report.err_r,
            if report.partial { "  (partial)" } else { "" }
        );
    }
    match worst {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

fn expand(
    cfg: &SuiteConfig,
    grammars: &BTreeMap<String, Arc<Grammar>>,
    classifiers: &BTreeMap<String, ClassifierHandle>,
) -> Vec<Job> {
    let mut jobs = Vec::new();
    for (ci, c) in cfg.campaigns.iter().enumerate() {
        let campaign_seed = derive_seed(cfg.seed, ci as u64);
        for repeat in 0..c.repeat {
            let seed = derive_seed(campaign_seed, repeat as u64);
            for grammar in c.grammar.values() {
                for threshold in c.threshold.values() {
                    for strategy in c.strategy.values() {
                        let mut config = CampaignConfig::new(
                            grammars[&grammar].clone(),
                            classifiers[&c.pair[0]].clone(),
                            classifiers[&c.pair[1]].clone(),
                            threshold,
                            c.iterations,
                        )
                        .with_strategy(strategy)
                        .with_seed(seed)
                        .with_initial_mode(c.initial_mode)
                        .with_grammar_name(grammar.clone());
                        config.max_initial_probes = c.max_initial_probes;
                        config.max_depth = c.max_depth;
                        config.perturb_mode = c.perturb_mode;
                        jobs.push(Job {
                            campaign: c.name.clone(),
                            grammar: grammar.clone(),
                            pair: format!("{}-{}", c.pair[0], c.pair[1]),
                            threshold,
                            strategy,
                            repeat,
                            seed,
                            config,
                        });
                    }
                }
            }
        }
    }
    jobs
}

/// Runs jobs on at most `parallelism` threads. Each job writes only its own
/// files, so no two threads touch the same path.
fn execute(jobs: &[Job], parallelism: usize, runs_dir: &Path, formats: &[Format]) -> Vec<Outcome> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Outcome>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..parallelism.min(jobs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let outcome = run_one(job, runs_dir, formats);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(outcome);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|o| o.expect("every job ran"))
        .collect()
}

fn run_one(job: &Job, runs_dir: &Path, formats: &[Format]) -> Outcome {
    let report = match run_campaign(&job.config) {
        Ok(r) => r,
        Err(SearchError::Classifier { source, partial }) => {
            let failure = Failure::transport(describe(&source));
            // Keep what was collected before the classifier failed.
            return match *partial {
                Some(report) => {
                    if let Err(f) = write_run(job, &report, runs_dir, formats) {
                        warn!("{}", f.message);
                    }
                    Outcome::Partial(report, failure)
                }
                None => Outcome::Failed(failure),
            };
        }
        Err(SearchError::InvalidConfig(m)) => return Outcome::Failed(Failure::config(m)),
        Err(SearchError::Generation(e)) => return Outcome::Failed(Failure::grammar(e.to_string())),
        Err(e @ SearchError::ProbesExhausted { .. }) => return Outcome::Failed(Failure::io(e.to_string())),
    };
    match write_run(job, &report, runs_dir, formats) {
        Ok(()) => Outcome::Done(report),
        Err(f) => Outcome::Failed(f),
    }
}

fn describe(e: &QueryError) -> String {
    format!("classifier unavailable: {e}")
}

fn write_run(job: &Job, report: &CampaignReport, runs_dir: &Path, formats: &[Format]) -> Result<(), Failure> {
    let stem = job.stem();
    let write = |ext: &str, body: String| {
        let p = runs_dir.join(format!("{stem}.{ext}"));
        fs::write(&p, body).map_err(|e| Failure::io(format!("{}: {e}", p.display())))
    };
    if formats.contains(&Format::Jsonl) {
        write("jsonl", report.trace_jsonl())?;
    }
    if formats.contains(&Format::Json) {
        write("json", report.to_json())?;
    }
    Ok(())
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Failure + '_ {
    move |e| Failure::io(format!("{}: {e}", path.display()))
}

fn write_summary(path: &Path, rows: &[(&Job, CampaignReport)]) -> Result<(), Failure> {
    let err = csv_err(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    w.write_record([
        "campaign",
        "strategy",
        "grammar",
        "pair",
        "J",
        "repeat",
        "seed",
        "n_inputs",
        "n_err",
        "err_r",
        "unique_ratio",
        "iterations_to_first_error",
        "partial",
    ])
    .map_err(&err)?;
    for (job, r) in rows {
        w.write_record([
            job.campaign.clone(),
            job.strategy.to_string(),
            job.grammar.clone(),
            job.pair.clone(),
            job.threshold.to_string(),
            job.repeat.to_string(),
            job.seed.to_string(),
            r.n_inputs.to_string(),
            r.n_err.to_string(),
            format!("{:.6}", r.err_r),
            format!("{:.6}", r.unique_ratio()),
            r.iterations_to_first_error.map(|i| i.to_string()).unwrap_or_default(),
            r.partial.to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| Failure::io(e.to_string()))
}

/// Paired configuration: everything but the strategy. `repeat` is `None` for
/// the mean over repetitions.
type PairKey = (String, String, String, String, Option<usize>);

/// One row per paired configuration, plus a mean row per configuration when
/// a campaign repeats. Imp% compares each strategy's err_r to random's.
fn write_comparison(path: &Path, rows: &[(&Job, CampaignReport)]) -> Result<(), Failure> {
    let mut groups: BTreeMap<PairKey, BTreeMap<Strategy, Vec<f64>>> = BTreeMap::new();
    let mut repeats: BTreeMap<String, usize> = BTreeMap::new();
    for (job, r) in rows.iter().filter(|(_, r)| !r.partial) {
        let key = |repeat| (job.campaign.clone(), job.grammar.clone(), job.pair.clone(), job.threshold.to_string(), repeat);
        groups.entry(key(Some(job.repeat))).or_default().entry(job.strategy).or_default().push(r.err_r);
        groups.entry(key(None)).or_default().entry(job.strategy).or_default().push(r.err_r);
        let n = repeats.entry(job.campaign.clone()).or_default();
        *n = (*n).max(job.repeat + 1);
    }
    let err = csv_err(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    w.write_record([
        "campaign",
        "grammar",
        "pair",
        "J",
        "repeat",
        "err_r_directed",
        "err_r_no_backtrack",
        "err_r_random",
        "imp_directed_pct",
        "imp_no_backtrack_pct",
    ])
    .map_err(&err)?;
    let fmt = |v: Option<f64>, digits: usize| v.map(|x| format!("{x:.digits$}")).unwrap_or_default();
    for ((campaign, grammar, pair, j, repeat), by_strategy) in &groups {
        if repeat.is_none() && repeats[campaign] < 2 {
            continue;
        }
        let mean = |s: Strategy| by_strategy.get(&s).map(|v| v.iter().sum::<f64>() / v.len() as f64);
        let random = mean(Strategy::Random);
        let imp = |s: Strategy| mean(s).zip(random).and_then(|(e, b)| improvement_pct(e, b));
        w.write_record([
            campaign.clone(),
            grammar.clone(),
            pair.clone(),
            j.clone(),
            repeat.map(|r| r.to_string()).unwrap_or_else(|| "mean".into()),
            fmt(mean(Strategy::Directed), 6),
            fmt(mean(Strategy::NoBacktrack), 6),
            fmt(random, 6),
            fmt(imp(Strategy::Directed), 2),
            fmt(imp(Strategy::NoBacktrack), 2),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| Failure::io(e.to_string()))
}
