use gramdiff_core::builtin;
use gramdiff_core::derivation::{
    generate, perturb, perturb_with_mode, perturbation_sites, similar, yield_sentence, PerturbMode,
};
use gramdiff_core::grammar::{parse_grammar, Grammar, Production, Symbol};
use gramdiff_core::oracle::{evaluate, jaccard, LabelSet};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bundled() -> Vec<(&'static str, Grammar)> {
    builtin::ALL
        .iter()
        .map(|(name, _)| (*name, builtin::grammar(name).unwrap()))
        .collect()
}

fn grammar_index() -> impl Strategy<Value = usize> {
    0..builtin::ALL.len()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn generated_trees_conform_and_respect_depth(gi in grammar_index(), seed in any::<u64>(), depth in 6usize..20) {
        let (name, g) = &bundled()[gi];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = generate(g, &mut rng, depth).unwrap();
        prop_assert!(t.conforms_to(g).is_ok(), "{}", name);
        prop_assert!(t.height() <= depth);
        prop_assert!(!yield_sentence(&t).tokens().is_empty());
        let mut again = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(generate(g, &mut again, depth).unwrap(), t);
    }

    #[test]
    fn perturbation_changes_exactly_one_token(gi in grammar_index(), seed in any::<u64>(), strict in any::<bool>()) {
        let (_, g) = &bundled()[gi];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = generate(g, &mut rng, 16).unwrap();
        let mode = if strict { PerturbMode::Strict } else { PerturbMode::Retry };
        match perturb_with_mode(&t, g, &mut rng, mode) {
            Ok(p) => {
                prop_assert!(p.conforms_to(g).is_ok());
                prop_assert!(similar(&t, &p));
                prop_assert!(similar(&p, &t));
                let (a, b) = (yield_sentence(&t), yield_sentence(&p));
                prop_assert_eq!(a.tokens().len(), b.tokens().len());
                let diffs = a.tokens().iter().zip(b.tokens()).filter(|(x, y)| x != y).count();
                prop_assert_eq!(diffs, 1);
            }
            Err(_) => {
                // Retry mode only gives up when no leaf has a replacement.
                if !strict {
                    prop_assert!(perturbation_sites(&t, g).iter().all(|s| s.replacements.is_empty()));
                }
            }
        }
    }

    #[test]
    fn similarity_is_symmetric_and_irreflexive(gi in grammar_index(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let (_, g) = &bundled()[gi];
        let a = generate(g, &mut ChaCha8Rng::seed_from_u64(s1), 16).unwrap();
        let b = match perturb(&a, g, &mut ChaCha8Rng::seed_from_u64(s2)) {
            Ok(p) if s2 % 2 == 0 => p,
            _ => generate(g, &mut ChaCha8Rng::seed_from_u64(s2), 16).unwrap(),
        };
        prop_assert_eq!(similar(&a, &b), similar(&b, &a));
        prop_assert!(!similar(&a, &a));
    }

    #[test]
    fn jaccard_is_a_bounded_symmetric_similarity(
        a in proptest::collection::btree_set("[a-e]", 0..5),
        b in proptest::collection::btree_set("[a-e]", 0..5),
        j in 0.0f64..=1.0,
    ) {
        let (x, y) = (LabelSet::new(a.iter().cloned()), LabelSet::new(b.iter().cloned()));
        let v = jaccard(&x, &y);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, jaccard(&y, &x));
        prop_assert_eq!(jaccard(&x, &x), 1.0);
        prop_assert_eq!(evaluate(&x, &y, j), v < j);
        prop_assert!(!evaluate(&x, &y, 0.0));
    }

    #[test]
    fn top_k_truncation(labels in proptest::collection::vec("[A-Z]{1,3}", 0..12), k in 0usize..8) {
        let set = LabelSet::from_ranked(labels.iter().map(String::as_str), k);
        prop_assert!(set.len() <= k);
        prop_assert!(set.iter().all(|l| labels.iter().any(|x| x == l)));
    }

    #[test]
    fn random_grammars_round_trip_through_text(g in arb_grammar()) {
        let text = g.to_string();
        let back = parse_grammar(&text).unwrap();
        prop_assert_eq!(back.to_string(), text);
        prop_assert_eq!(back.productions(), g.productions());
    }
}

/// Grammars over N0..Nk where every nonterminal has an all-terminal
/// alternative (so each is productive) and may refer to any nonterminal.
fn arb_grammar() -> impl Strategy<Value = Grammar> {
    (1usize..5).prop_flat_map(|n| {
        let symbol = prop_oneof![
            "[a-z]{1,4}".prop_map(Symbol::Terminal),
            (0..n).prop_map(|i| Symbol::Nonterminal(format!("N{i}"))),
        ];
        let alternative = proptest::collection::vec(symbol, 1..4);
        let base = proptest::collection::vec("[a-z]{1,4}".prop_map(Symbol::Terminal), 1..3);
        let production = (base, proptest::collection::vec(alternative, 0..3));
        proptest::collection::vec(production, n).prop_map(move |prods| {
            let productions = prods
                .into_iter()
                .enumerate()
                .map(|(i, (base, mut rest))| {
                    rest.insert(0, base);
                    rest.dedup();
                    Production::new(format!("N{i}"), rest)
                })
                .collect();
            Grammar::new("N0", productions).unwrap()
        })
    })
}
