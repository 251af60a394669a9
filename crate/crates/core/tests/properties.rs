//! Property tests over randomly generated schemas, trees, and update
//! sequences.

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xupol_core::oracle::{all_valid_ops, SearchBounds};
use xupol_core::policy::{is_valid_uat, matches, valid_set};
use xupol_core::schema::{parse_dtd, render_dtd, ContentModel, Dtd, ElementType};
use xupol_core::tree::{canon, conforms_at, enumerate_instances, gen_instance, isomorphic, IdGen};
use xupol_core::update::{apply, apply_seq, is_normal_shape, is_valid_op, normalize, UpdateOp};

/// Random non-recursive structured DTD: every element is reachable from the
/// root and rules reference freshly introduced children only.
fn random_dtd(seed: u64) -> Dtd {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rules: BTreeMap<ElementType, ContentModel> = BTreeMap::new();
    let mut next = 0usize;
    let fresh = |next: &mut usize| {
        let e = ElementType::new(format!("E{:02}", *next));
        *next += 1;
        e
    };
    let root = fresh(&mut next);
    let mut queue = vec![(root.clone(), 0usize)];
    while let Some((name, depth)) = queue.pop() {
        let model = if depth >= 3 || next > 16 {
            if rng.gen_bool(0.5) {
                ContentModel::Str
            } else {
                ContentModel::Empty
            }
        } else {
            match rng.gen_range(0..6) {
                0 => ContentModel::Str,
                1 => ContentModel::Empty,
                2 | 3 => {
                    let child = fresh(&mut next);
                    queue.push((child.clone(), depth + 1));
                    ContentModel::Star(child)
                }
                4 => {
                    let n = rng.gen_range(2..=3);
                    let children: Vec<ElementType> = (0..n)
                        .map(|_| {
                            let c = fresh(&mut next);
                            queue.push((c.clone(), depth + 1));
                            c
                        })
                        .collect();
                    ContentModel::Choice(children)
                }
                _ => {
                    let n = rng.gen_range(1..=3);
                    let children: Vec<ElementType> = (0..n)
                        .map(|_| {
                            let c = fresh(&mut next);
                            queue.push((c.clone(), depth + 1));
                            c
                        })
                        .collect();
                    ContentModel::Sequence(children)
                }
            }
        };
        rules.insert(name, model);
    }
    Dtd::new(root, rules).expect("generated DTD is valid")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// The subelement reachability relation is a partial order.
    #[test]
    fn below_is_a_partial_order(seed in any::<u64>()) {
        let d = random_dtd(seed);
        let els: Vec<ElementType> = d.elements().cloned().collect();
        for a in &els {
            prop_assert!(d.below(a, a).unwrap());
            for b in &els {
                if d.below(a, b).unwrap() && d.below(b, a).unwrap() {
                    prop_assert_eq!(a, b);
                }
                for c in &els {
                    if d.below(a, b).unwrap() && d.below(b, c).unwrap() {
                        prop_assert!(d.below(a, c).unwrap());
                    }
                }
            }
        }
    }

    /// Rendering and reparsing a DTD yields a structurally equal schema.
    #[test]
    fn dtd_round_trips(seed in any::<u64>()) {
        let d = random_dtd(seed);
        let reparsed = parse_dtd(&render_dtd(&d)).unwrap();
        prop_assert_eq!(d, reparsed);
    }

    /// Generated minimal instances conform, and every privilege reported
    /// valid matches at least the shape rules.
    #[test]
    fn generated_instances_conform(seed in any::<u64>()) {
        let d = random_dtd(seed);
        for a in d.elements() {
            let t = gen_instance(&d, a);
            prop_assert_eq!(conforms_at(&t, &d, a), Ok(true));
        }
        for u in valid_set(&d) {
            prop_assert!(is_valid_uat(&u, &d));
        }
    }

    /// Schema-respecting operations preserve conformance: the standing
    /// assumption behind privilege matching.
    #[test]
    fn valid_ops_preserve_conformance(seed in any::<u64>()) {
        let d = random_dtd(seed);
        let bounds = SearchBounds::new(6, 1, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b9);
        let trees = enumerate_instances(&d, d.root(), 6, &bounds.value_alphabet);
        for t in trees.iter().take(8) {
            for op in all_valid_ops(&d, t, &bounds) {
                prop_assert!(is_valid_op(&op, t));
                let out = apply(&op, t).unwrap();
                prop_assert_eq!(
                    conforms_at(&out, &d, d.root()),
                    Ok(true),
                    "op {} broke conformance", op
                );
                // generated ops match at least one valid privilege
                let covered = valid_set(&d).iter().any(|u| matches(&op, u, t, &d));
                prop_assert!(covered);
            }
            let _ = &mut rng;
        }
    }

    /// Normalization preserves semantics and produces the
    /// delete-replace-insert shape on random valid sequences.
    #[test]
    fn normalize_preserves_semantics(seed in any::<u64>()) {
        let d = random_dtd(seed);
        let bounds = SearchBounds::new(5, 1, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x2545f491));
        let trees = enumerate_instances(&d, d.root(), 6, &bounds.value_alphabet);
        if trees.is_empty() {
            return Ok(());
        }
        for _ in 0..6 {
            let t = &trees[rng.gen_range(0..trees.len())];
            let mut seq: Vec<UpdateOp> = Vec::new();
            let mut cur = t.clone();
            let len = rng.gen_range(0..=4);
            for _ in 0..len {
                let ops = all_valid_ops(&d, &cur, &bounds);
                if ops.is_empty() {
                    break;
                }
                let op = ops[rng.gen_range(0..ops.len())].clone();
                cur = apply(&op, &cur).unwrap();
                seq.push(op);
            }
            let norm = normalize(&seq, t).unwrap();
            prop_assert!(is_normal_shape(&norm));
            prop_assert!(isomorphic(
                &apply_seq(&norm, t).unwrap(),
                &apply_seq(&seq, t).unwrap()
            ));
        }
    }

    /// Canonical forms are invariant under construction order and node ids.
    #[test]
    fn canon_is_representation_independent(seed in any::<u64>()) {
        let d = random_dtd(seed);
        let values = vec!["s".to_string(), "t".to_string()];
        let trees = enumerate_instances(&d, d.root(), 6, &values);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
        for t in trees.iter().take(10) {
            let mut gen = IdGen::starting_at(rng.gen_range(100..10_000));
            let copy = t.relabeled(&mut gen);
            prop_assert_eq!(canon(t), canon(&copy));
            prop_assert!(isomorphic(t, &copy));
        }
    }
}

/// Reparsing the rendered form of enumerated trees preserves isomorphism.
#[test]
fn tree_literals_round_trip_on_enumerated_instances() {
    let d = random_dtd(12345);
    let values = vec!["a b".to_string(), "q\"w".to_string()];
    for t in enumerate_instances(&d, d.root(), 6, &values) {
        let text = xupol_core::tree::format_tree_literal(&t);
        let back = xupol_core::tree::parse_tree_literal(&text).unwrap();
        assert!(isomorphic(&t, &back), "{text}");
    }
}

/// Different instances of one element type get distinct canonical forms.
#[test]
fn enumerated_instances_are_pairwise_distinct() {
    for seed in [7u64, 99, 4242] {
        let d = random_dtd(seed);
        let values = vec!["s".to_string()];
        let trees = enumerate_instances(&d, d.root(), 7, &values);
        let mut forms: Vec<_> = trees.iter().map(canon).collect();
        forms.sort();
        let before = forms.len();
        forms.dedup();
        assert_eq!(before, forms.len());
    }
}
