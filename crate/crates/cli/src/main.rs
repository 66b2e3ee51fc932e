mod config;
mod suite;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use gramdiff_core::derivation::{generate, perturb, perturbation_sites, yield_sentence, DEFAULT_MAX_DEPTH};
use gramdiff_core::grammar::Grammar;
use gramdiff_core::retrain::{run_murq, MurqConfig, MurqError, DEFAULT_FRACTIONS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// An error carrying the process exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(m: impl Into<String>) -> Self {
        Failure { code: 2, message: m.into() }
    }
    pub fn grammar(m: impl Into<String>) -> Self {
        Failure { code: 3, message: m.into() }
    }
    pub fn transport(m: impl Into<String>) -> Self {
        Failure { code: 4, message: m.into() }
    }
    pub fn io(m: impl Into<String>) -> Self {
        Failure { code: 1, message: m.into() }
    }
}

#[derive(Parser)]
#[command(name = "gramdiff", version, about = "Grammar-based differential testing of text classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every campaign in a suite config.
    Run {
        config: PathBuf,
        /// Override the suite seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Override every campaign's iteration count.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Sample sentences from a grammar.
    Gen {
        /// Grammar file, or builtin:NAME.
        grammar: String,
        #[arg(short, long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
        max_depth: usize,
        /// Print derivation trees instead of sentences.
        #[arg(long)]
        trees: bool,
    },
    /// Generate one sentence and show a single perturbation step.
    Perturb {
        grammar: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
        max_depth: usize,
        /// Number of consecutive steps.
        #[arg(long, default_value_t = 1)]
        steps: usize,
    },
    /// Retraining experiment: augment a model with oracle-labelled errors.
    Murq {
        #[arg(long, default_value = "builtin:toy1")]
        grammar_a: String,
        #[arg(long, default_value = "builtin:toy2")]
        grammar_b: String,
        #[arg(long, default_value = "G1")]
        label_a: String,
        #[arg(long, default_value = "G2")]
        label_b: String,
        #[arg(long, default_value_t = 50)]
        repetitions: usize,
        /// Iterations per campaign.
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 200)]
        train_per_label: usize,
        #[arg(long, default_value_t = 1000)]
        heldout_per_label: usize,
        /// Comma-separated percentages of the training-set size.
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Re-test with a fresh seed rather than the harvest campaign's.
        #[arg(long)]
        unpaired: bool,
        #[arg(long, default_value = "murq-out")]
        output_dir: PathBuf,
    },
    /// Check grammar files for problems.
    Validate {
        #[arg(required = true)]
        grammars: Vec<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, output_dir, iterations } => suite::run(&config, seed, output_dir, iterations),
        Command::Gen { grammar, count, seed, max_depth, trees } => gen(&grammar, count, seed, max_depth, trees),
        Command::Perturb { grammar, seed, max_depth, steps } => perturb_steps(&grammar, seed, max_depth, steps),
        Command::Murq {
            grammar_a,
            grammar_b,
            label_a,
            label_b,
            repetitions,
            iterations,
            train_per_label,
            heldout_per_label,
            fractions,
            threshold,
            seed,
            unpaired,
            output_dir,
        } => (|| {
            check_threshold(threshold)?;
            let cwd = Path::new(".");
            let mut cfg = MurqConfig::new(
                Arc::new(config::load_grammar(&grammar_a, cwd)?),
                Arc::new(config::load_grammar(&grammar_b, cwd)?),
            );
            cfg.label_a = label_a;
            cfg.label_b = label_b;
            cfg.repetitions = repetitions;
            cfg.campaign_iterations = iterations;
            cfg.train_per_label = train_per_label;
            cfg.heldout_per_label = heldout_per_label;
            cfg.fractions = fractions.unwrap_or_else(|| DEFAULT_FRACTIONS.to_vec());
            cfg.threshold = threshold;
            cfg.seed = seed;
            cfg.paired = !unpaired;
            murq(&cfg, &output_dir)
        })(),
        Command::Validate { grammars } => validate(&grammars),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

pub fn check_threshold(j: f64) -> Result<(), Failure> {
    if (0.0..=1.0).contains(&j) {
        Ok(())
    } else {
        Err(Failure::config(format!("threshold {j} is outside [0, 1]")))
    }
}

fn gen(grammar: &str, count: usize, seed: u64, max_depth: usize, trees: bool) -> Result<(), Failure> {
    let g = config::load_grammar(grammar, Path::new("."))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..count {
        let t = generate(&g, &mut rng, max_depth).map_err(|e| Failure::grammar(e.to_string()))?;
        if trees {
            println!("{}", t.render());
        } else {
            println!("{}", yield_sentence(&t));
        }
    }
    Ok(())
}

fn perturb_steps(grammar: &str, seed: u64, max_depth: usize, steps: usize) -> Result<(), Failure> {
    let g = config::load_grammar(grammar, Path::new("."))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = generate(&g, &mut rng, max_depth).map_err(|e| Failure::grammar(e.to_string()))?;
    println!("{}", t.render());
    println!("sentence: {}", yield_sentence(&t));
    for step in 1..=steps {
        let open: usize = perturbation_sites(&t, &g).iter().map(|s| s.replacements.len()).sum();
        match perturb(&t, &g, &mut rng) {
            Ok(p) => {
                let (a, b) = (yield_sentence(&t), yield_sentence(&p));
                let (i, (from, to)) = a
                    .tokens()
                    .iter()
                    .zip(b.tokens())
                    .enumerate()
                    .find(|(_, (x, y))| x != y)
                    .expect("a perturbation changes one token");
                println!("step {step}: token {i} {from:?} -> {to:?} ({open} moves available)");
                println!("sentence: {b}");
                t = p;
            }
            Err(e) => {
                println!("step {step}: {e}");
                break;
            }
        }
    }
    Ok(())
}

fn murq(cfg: &MurqConfig, out: &Path) -> Result<(), Failure> {
    let report = run_murq(cfg).map_err(|e| match e {
        MurqError::InvalidConfig(m) => Failure::config(m),
        MurqError::Grammar(g) => Failure::grammar(g.to_string()),
        other => Failure::io(other.to_string()),
    })?;
    std::fs::create_dir_all(out).map_err(|e| Failure::io(format!("{}: {e}", out.display())))?;
    let json = out.join("murq.json");
    std::fs::write(&json, report.to_json()).map_err(|e| Failure::io(format!("{}: {e}", json.display())))?;
    let csv_path = out.join("murq.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Failure::io(format!("{}: {e}", csv_path.display())))?;
    let io = |e: csv::Error| Failure::io(format!("{}: {e}", csv_path.display()));
    w.write_record(["percent_added", "mean_errors", "mean_added", "accuracy_oracle", "accuracy_retrained"])
        .map_err(io)?;
    for r in &report.rows {
        w.write_record([
            r.percent_added.to_string(),
            format!("{:.2}", r.mean_errors),
            format!("{:.2}", r.mean_added),
            format!("{:.4}", r.accuracy_oracle),
            format!("{:.4}", r.accuracy_retrained),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Failure::io(e.to_string()))?;
    println!("{:>8} {:>10} {:>10} {:>8} {:>10}", "%added", "#errors", "#added", "acc(NB)", "acc(perc)");
    for r in &report.rows {
        println!(
            "{:>8} {:>10.1} {:>10.1} {:>8.4} {:>10.4}",
            r.percent_added, r.mean_errors, r.mean_added, r.accuracy_oracle, r.accuracy_retrained
        );
    }
    Ok(())
}

/// Lint findings for one grammar; empty when clean.
fn lint(g: &Grammar) -> Vec<String> {
    let mut findings: Vec<String> = g
        .unreachable()
        .into_iter()
        .map(|n| format!("warning: nonterminal {n} is unreachable from {}", g.start()))
        .collect();
    // A nonterminal whose single-terminal alternatives number fewer than two
    // never offers a perturbation site.
    let fixed: Vec<&str> = g
        .productions()
        .iter()
        .filter(|p| {
            p.alternatives
                .iter()
                .filter(|a| a.len() == 1 && a[0].is_terminal())
                .count()
                == 1
        })
        .map(|p| p.lhs.as_str())
        .collect();
    if !fixed.is_empty() {
        findings.push(format!(
            "note: leaves under {} cannot be perturbed (only one single-terminal alternative)",
            fixed.join(", ")
        ));
    }
    findings
}

fn validate(refs: &[String]) -> Result<(), Failure> {
    let mut failure = None;
    for r in refs {
        match config::load_grammar(r, Path::new(".")) {
            Ok(g) => {
                let findings = lint(&g);
                println!(
                    "{r}: ok ({} nonterminals, {} terminals)",
                    g.productions().len(),
                    g.terminals().len()
                );
                for f in findings {
                    println!("  {f}");
                }
            }
            Err(f) => {
                println!("{r}: {}", f.message);
                failure = Some(f);
            }
        }
    }
    match failure {
        Some(f) if refs.len() == 1 => Err(f),
        Some(_) => Err(Failure::grammar("one or more grammars are invalid")),
        None => Ok(()),
    }
}
