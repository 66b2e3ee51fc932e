//! Browser bindings. Every export takes and returns plain strings (JSON where
//! structured) so the page needs no generated type glue beyond wasm-bindgen's.
//! The `*_json` functions hold the logic and are tested natively.

use std::collections::HashSet;
use std::sync::Arc;

use gramdiff_core::builtin;
use gramdiff_core::classifiers::KeywordClassifier;
use gramdiff_core::derivation::{generate, perturb, yield_sentence, DerivationTree};
use gramdiff_core::grammar::{parse_grammar, Grammar};
use gramdiff_core::oracle::{ClassifierHandle, LabelSet};
use gramdiff_core::search::{run_campaign, CampaignConfig, CampaignReport, Strategy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Points per curve; traces are downsampled to at most this many.
const CURVE_POINTS: usize = 200;

fn grammar(src: &str) -> Result<Grammar, String> {
    parse_grammar(src).map_err(|e| format!("grammar: {e}"))
}

fn tree_view(t: &DerivationTree) -> serde_json::Value {
    json!({"sentence": yield_sentence(t).text(), "tree": t, "rendered": t.render()})
}

pub fn builtin_json() -> String {
    let all: Vec<_> = builtin::ALL.iter().map(|(name, src)| json!({"name": name, "source": src})).collect();
    serde_json::to_string(&all).expect("serializable")
}

pub fn generate_json(grammar_src: &str, seed: u64, max_depth: usize) -> Result<String, String> {
    let g = grammar(grammar_src)?;
    let t = generate(&g, &mut ChaCha8Rng::seed_from_u64(seed), max_depth).map_err(|e| e.to_string())?;
    Ok(tree_view(&t).to_string())
}

pub fn perturb_json(grammar_src: &str, tree_json: &str, seed: u64) -> Result<String, String> {
    let g = grammar(grammar_src)?;
    let t: DerivationTree = serde_json::from_str(tree_json).map_err(|e| format!("tree: {e}"))?;
    t.conforms_to(&g).map_err(|e| e.to_string())?;
    let p = perturb(&t, &g, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
    let changed = yield_sentence(&t)
        .tokens()
        .iter()
        .zip(yield_sentence(&p).tokens())
        .position(|(a, b)| a != b);
    let mut view = tree_view(&p);
    view["changed"] = json!(changed);
    Ok(view.to_string())
}

#[derive(Serialize)]
struct Curve {
    strategy: Strategy,
    /// (iteration, err_r over the prefix ending there).
    points: Vec<(usize, f64)>,
    n_inputs: usize,
    n_err: usize,
    err_r: f64,
}

/// Running err_r: unique errors over unique inputs seen so far.
fn curve(report: &CampaignReport) -> Vec<(usize, f64)> {
    let step = report.trace.len().div_ceil(CURVE_POINTS).max(1);
    let (mut inputs, mut errors) = (HashSet::new(), HashSet::new());
    let mut points = Vec::new();
    for (i, r) in report.trace.iter().enumerate() {
        inputs.insert(r.sentence.as_str());
        if r.is_error {
            errors.insert(r.sentence.as_str());
        }
        if i % step == 0 || i + 1 == report.trace.len() {
            points.push((r.index, errors.len() as f64 / inputs.len() as f64));
        }
    }
    points
}

/// Runs every strategy with one seed against a keyword classifier pair: f1
/// always answers {A}, f2 answers {B} when the sentence has a keyword.
pub fn compare_json(grammar_src: &str, keywords: &str, threshold: f64, iterations: usize, seed: u64) -> Result<String, String> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(format!("threshold {threshold} is outside [0, 1]"));
    }
    let keywords: Vec<&str> = keywords.split([',', ' ']).map(str::trim).filter(|k| !k.is_empty()).collect();
    if keywords.is_empty() {
        return Err("give at least one keyword".into());
    }
    let g = Arc::new(grammar(grammar_src)?);
    let f1: ClassifierHandle = Arc::new(KeywordClassifier::constant("constant", LabelSet::new(["A"])));
    let f2: ClassifierHandle = Arc::new(KeywordClassifier::new(
        "keyword",
        keywords,
        LabelSet::new(["B"]),
        LabelSet::new(["A"]),
    ));
    let mut curves = Vec::new();
    for strategy in Strategy::ALL {
        let cfg = CampaignConfig::new(g.clone(), f1.clone(), f2.clone(), threshold, iterations)
            .with_strategy(strategy)
            .with_seed(seed);
        let report = run_campaign(&cfg).map_err(|e| e.to_string())?;
        curves.push(Curve {
            strategy,
            points: curve(&report),
            n_inputs: report.n_inputs,
            n_err: report.n_err,
            err_r: report.err_r,
        });
    }
    Ok(serde_json::to_string(&curves).expect("serializable"))
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

/// JSON list of `{name, source}` for the bundled grammars.
#[wasm_bindgen(js_name = builtinGrammars)]
pub fn builtin_grammars() -> String {
    builtin_json()
}

#[wasm_bindgen(js_name = generate)]
pub fn generate_js(grammar_src: &str, seed: u32, max_depth: u32) -> Result<String, JsError> {
    js(generate_json(grammar_src, seed.into(), max_depth as usize))
}

#[wasm_bindgen(js_name = perturb)]
pub fn perturb_js(grammar_src: &str, tree_json: &str, seed: u32) -> Result<String, JsError> {
    js(perturb_json(grammar_src, tree_json, seed.into()))
}

#[wasm_bindgen(js_name = compareStrategies)]
pub fn compare_js(grammar_src: &str, keywords: &str, threshold: f64, iterations: u32, seed: u32) -> Result<String, JsError> {
    js(compare_json(grammar_src, keywords, threshold, iterations as usize, seed.into()))
}
