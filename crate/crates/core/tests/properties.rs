use proptest::prelude::*;
use protofid_core::rules::{Condition, Rule, RuleSet};
use protofid_core::similarity::{ruleset_similarity, vector_similarity, SimilarityKind};
use protofid_core::vectorize::{assign_local_explanations, collect_thresholds, vectorize_rule, ExplanationVector, LocalExplanations};
use protofid_core::{FeatureSchema, LabeledDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn schema(m: usize) -> FeatureSchema {
    let names: Vec<String> = (0..m).map(|j| format!("f{j}")).collect();
    FeatureSchema::new(&names).unwrap()
}

fn random_ruleset(rng: &mut ChaCha8Rng, m: usize) -> RuleSet {
    let n_rules = rng.gen_range(1..=4);
    let rules = (0..n_rules)
        .map(|i| {
            let mut conds = Vec::new();
            for j in 0..m {
                if rng.gen_bool(0.6) {
                    let lo = rng.gen_range(0..10) as f64;
                    let hi = rng.gen_range(lo as i32 + 1..=10) as f64;
                    conds.push(Condition::between(&format!("f{j}"), lo, hi));
                }
            }
            Rule::new(&format!("r{i}"), conds, rng.gen_range(0..2)).unwrap()
        })
        .collect();
    RuleSet::new(["0", "1"], rules).unwrap()
}

#[test]
fn vector_bits_match_sampled_interval_membership() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..12 {
        let m = rng.gen_range(2..=3);
        let s = schema(m);
        let sets: Vec<RuleSet> = (0..rng.gen_range(1..=3)).map(|_| random_ruleset(&mut rng, m)).collect();
        let refs: Vec<&RuleSet> = sets.iter().collect();
        let dmap = collect_thresholds(&refs, &s).unwrap();
        let w = dmap.width();
        for rs in &sets {
            for rule in &rs.rules {
                let v = vectorize_rule(rule, &dmap, &s).unwrap();
                assert_eq!(v.len(), w);
                let mut pos = 0;
                for (k, t) in dmap.thresholds.iter().enumerate() {
                    let cond = rule.condition_on(&format!("f{k}"));
                    for iv in t.windows(2) {
                        let all = (0..10_000).all(|_| {
                            let x = rng.gen_range(iv[0]..=iv[1]);
                            cond.map_or(true, |c| {
                                let (lo, hi) = c.interval().unwrap();
                                lo <= x && x <= hi
                            })
                        });
                        assert_eq!(v.get(pos), all, "rule {} feature {k} interval {iv:?}", rule.name);
                        pos += 1;
                    }
                }
                assert_eq!(pos, w);
            }
        }
    }
}

#[test]
fn local_explanations_agree_with_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..30 {
        let m = rng.gen_range(2..=3);
        let s = schema(m);
        let rs = random_ruleset(&mut rng, m);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..m).map(|_| rng.gen_range(0..=20) as f64 / 2.0).collect())
            .collect();
        let labels: Vec<f64> = (0..200).map(|i| (i % 2) as f64).collect();
        let data = LabeledDataset::new(s.clone(), rows, labels).unwrap();
        let dmap = collect_thresholds(&[&rs], &s).unwrap();
        let le = assign_local_explanations(&rs, &data, &dmap).unwrap();
        let bound = rs.bind(&s).unwrap();
        for (i, row) in data.rows().enumerate() {
            let fired = bound.first_match(row);
            assert_eq!(le.rule_of(i), fired);
            assert_eq!(fired.map(|j| rs.rules[j].outcome), rs.evaluate(&s, row).unwrap());
            if let Some(j) = fired {
                assert_eq!(le.get(i), Some(&vectorize_rule(&rs.rules[j], &dmap, &s).unwrap()));
            }
        }
    }
}

fn vec_pair() -> impl Strategy<Value = (Vec<bool>, Vec<bool>)> {
    (1usize..80).prop_flat_map(|w| (prop::collection::vec(any::<bool>(), w), prop::collection::vec(any::<bool>(), w)))
}

proptest! {
    #[test]
    fn similarity_is_symmetric_and_bounded((a, b) in vec_pair()) {
        let (a, b) = (ExplanationVector::from_bits(&a), ExplanationVector::from_bits(&b));
        for kind in SimilarityKind::ALL {
            let ab = vector_similarity(kind, &a, &b).unwrap();
            let ba = vector_similarity(kind, &b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((vector_similarity(kind, &a, &a).unwrap() - 1.0).abs() < 1e-12);
        }
        prop_assert_eq!(vector_similarity(SimilarityKind::Xnor, &a, &a.complement()).unwrap(), 0.0);
    }

    #[test]
    fn dice_is_a_function_of_jaccard((a, b) in vec_pair()) {
        let (a, b) = (ExplanationVector::from_bits(&a), ExplanationVector::from_bits(&b));
        let j = vector_similarity(SimilarityKind::Jaccard, &a, &b).unwrap();
        let d = vector_similarity(SimilarityKind::Dice, &a, &b).unwrap();
        prop_assert!(d + 1e-12 >= j);
        if a.count_ones() + b.count_ones() > 0 {
            prop_assert!((d - 2.0 * j / (1.0 + j)).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_equals_dice_for_equal_weights(bits in prop::collection::vec(any::<bool>(), 2..60), seed in any::<u64>()) {
        // b is a random permutation of a, so both have the same number of ones
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm = bits.clone();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let (a, b) = (ExplanationVector::from_bits(&bits), ExplanationVector::from_bits(&perm));
        let c = vector_similarity(SimilarityKind::Cosine, &a, &b).unwrap();
        let d = vector_similarity(SimilarityKind::Dice, &a, &b).unwrap();
        prop_assert!((c - d).abs() < 1e-12);
    }

    #[test]
    fn ruleset_similarity_ignores_sample_order(
        assign in prop::collection::vec((0usize..3, 0usize..2), 1..50),
        seed in any::<u64>(),
    ) {
        let va = vec![
            ExplanationVector::parse("110010").unwrap(),
            ExplanationVector::parse("011100").unwrap(),
            ExplanationVector::parse("000111").unwrap(),
        ];
        let vb = vec![ExplanationVector::parse("110000").unwrap(), ExplanationVector::parse("001111").unwrap()];
        let a = LocalExplanations { rule_vectors: va, assigned: assign.iter().map(|p| Some(p.0)).collect(), multi_matches: 0 };
        let b = LocalExplanations { rule_vectors: vb, assigned: assign.iter().map(|p| Some(p.1)).collect(), multi_matches: 0 };
        let mut idx: Vec<usize> = (0..assign.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for kind in SimilarityKind::ALL {
            let base = ruleset_similarity(kind, &a, &b, &idx).unwrap();
            rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
            let shuffled = ruleset_similarity(kind, &a, &b, &idx).unwrap();
            prop_assert!((base - shuffled).abs() < 1e-12);
            // the grouped sum equals the plain per-sample mean
            let direct: f64 = idx.iter().map(|&s| vector_similarity(kind, a.get(s).unwrap(), b.get(s).unwrap()).unwrap()).sum::<f64>() / idx.len() as f64;
            prop_assert!((base - direct).abs() < 1e-12);
        }
    }
}
