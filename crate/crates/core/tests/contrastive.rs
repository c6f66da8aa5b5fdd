mod common;

use std::collections::BTreeSet;

use common::*;
use gimc::contrastive::*;
use gimc::corpus::{candidate_pairs, parse_dictionary, BilingualDictionary, Document, EventMention, Relation};
use gimc::encoder::{insert_event_tags, statement_tokens, Statement};
use gimc::graph::document_phrases;
use gimc::phrase::extract_phrases;
use gimc::GimcError;
use proptest::prelude::*;
use rand::Rng;

fn cfg() -> ContrastiveConfig {
    ContrastiveConfig::default()
}

fn vector(r: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| r.random_range(-1.0..1.0)).collect()
}

fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let n = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    dot / (n(u) * n(v))
}

/// Sum over positives of `-ln(e^{s_p} / (e^{s_p} + Σ_n e^{s_n}))`.
fn oracle_loss(a: &[f64], pos: &[Vec<f64>], neg: &[Vec<f64>], tau: f64) -> f64 {
    let z: f64 = neg.iter().map(|n| (cosine(a, n) / tau).exp()).sum();
    pos.iter()
        .map(|p| {
            let e = (cosine(a, p) / tau).exp();
            -(e / (e + z)).ln()
        })
        .sum()
}

fn en_da() -> BilingualDictionary {
    parse_dictionary(
        "two to\nfrench franske\nmilitary militær\nhelicopters helikoptere\nstorm storm\ntown by\nsoldiers soldater\n",
        "en",
        "da",
        "mem",
    )
    .unwrap()
}

proptest! {
    #[test]
    fn loss_matches_oracle(seed in any::<u64>(), np in 1usize..4, nn in 1usize..6, tau in 0.1f64..3.0) {
        let mut r = rng(seed);
        let a = vector(&mut r, 6);
        let pos: Vec<_> = (0..np).map(|_| vector(&mut r, 6)).collect();
        let neg: Vec<_> = (0..nn).map(|_| vector(&mut r, 6)).collect();
        let c = ContrastiveConfig { temperature: tau, ..cfg() };
        let got = contrastive_loss(&a, &pos, &neg, &c).unwrap().loss;
        prop_assert!((got - oracle_loss(&a, &pos, &neg, tau)).abs() < 1e-9);
        prop_assert!(got > 0.0);
    }

    #[test]
    fn cosine_loss_is_scale_invariant(seed in any::<u64>(), s in 0.01f64..100.0) {
        let mut r = rng(seed);
        let a = vector(&mut r, 5);
        let pos = vec![vector(&mut r, 5), vector(&mut r, 5)];
        let neg = vec![vector(&mut r, 5), vector(&mut r, 5), vector(&mut r, 5)];
        let scaled = |v: &Vec<f64>| v.iter().map(|x| x * s).collect::<Vec<_>>();
        let l1 = contrastive_loss(&a, &pos, &neg, &cfg()).unwrap().loss;
        let l2 = contrastive_loss(
            &scaled(&a),
            &pos.iter().map(scaled).collect::<Vec<_>>(),
            &neg.iter().map(scaled).collect::<Vec<_>>(),
            &cfg(),
        )
        .unwrap()
        .loss;
        prop_assert!((l1 - l2).abs() < 1e-9);
    }

    #[test]
    fn gradients_match_finite_differences(seed in any::<u64>(), raw in any::<bool>(), normalize in any::<bool>()) {
        let mut r = rng(seed);
        let c = ContrastiveConfig { raw_dot: raw, normalize, temperature: 0.7, ..cfg() };
        // keep raw dot products positive
        let draw = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            if raw { (0..4).map(|_| r.random_range(0.2..1.0)).collect() } else { vector(r, 4) }
        };
        let a = draw(&mut r);
        let pos = vec![draw(&mut r), draw(&mut r)];
        let neg = vec![draw(&mut r), draw(&mut r), draw(&mut r)];
        let g = contrastive_loss(&a, &pos, &neg, &c).unwrap();
        let loss = |a: &[f64], p: &[Vec<f64>], n: &[Vec<f64>]| contrastive_loss(a, p, n, &c).unwrap().loss;
        let h = 1e-6;
        for i in 0..4 {
            let mut up = a.clone();
            let mut dn = a.clone();
            up[i] += h;
            dn[i] -= h;
            let num = (loss(&up, &pos, &neg) - loss(&dn, &pos, &neg)) / (2.0 * h);
            prop_assert!((num - g.d_anchor[i]).abs() < 1e-6, "anchor {}", i);
        }
        for j in 0..pos.len() {
            for i in 0..4 {
                let (mut up, mut dn) = (pos.clone(), pos.clone());
                up[j][i] += h;
                dn[j][i] -= h;
                let num = (loss(&a, &up, &neg) - loss(&a, &dn, &neg)) / (2.0 * h);
                prop_assert!((num - g.d_positives[j][i]).abs() < 1e-6);
            }
        }
        for j in 0..neg.len() {
            for i in 0..4 {
                let (mut up, mut dn) = (neg.clone(), neg.clone());
                up[j][i] += h;
                dn[j][i] -= h;
                let num = (loss(&a, &pos, &up) - loss(&a, &pos, &dn)) / (2.0 * h);
                prop_assert!((num - g.d_negatives[j][i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn switching_preserves_shape(seed in any::<u64>(), n in 2usize..14) {
        let mut r = rng(seed);
        let sentence = random_tree(&mut r, n);
        let forms: Vec<String> = sentence.iter().map(|t| t.form.clone()).collect();
        let mut dict = BilingualDictionary::new("en", "xx");
        for w in 0..12 {
            if r.random_bool(0.7) {
                dict.insert(&format!("w{w}"), &format!("v{w}"));
                if r.random_bool(0.3) {
                    dict.insert(&format!("w{w}"), &format!("u{w}"));
                }
            }
        }
        let phrases = extract_phrases(&sentence, 0);
        let spans: Vec<_> = phrases.iter().map(|p| (p.start, p.end)).collect();
        let out = switch_phrases(&forms, &spans, &[dict.clone()], &mut r).unwrap();
        prop_assert_eq!(out.len(), forms.len());
        for (p, (a, b)) in forms.iter().zip(&out).enumerate() {
            let inside = spans.iter().any(|&(s, e)| (s..e).contains(&p));
            match dict.lookup(a) {
                Some(ts) if inside => prop_assert!(ts.contains(b)),
                _ => prop_assert_eq!(a, b),
            }
        }
        // a tagged positive keeps both tags around the same words
        let ev = vec![(0, 1)];
        let tagged = insert_event_tags(&out, &ev).unwrap();
        prop_assert_eq!(tagged.len(), out.len() + 2);
    }
}

#[test]
fn one_positive_one_negative_closed_form() {
    let a = [1.0, 0.0];
    let p = vec![vec![1.0, 1.0]];
    let n = vec![vec![0.0, 1.0]];
    let c = 0.5f64.sqrt();
    let expected = -(c.exp() / (c.exp() + 1.0)).ln();
    let got = contrastive_loss(&a, &p, &n, &cfg()).unwrap().loss;
    assert!((got - expected).abs() < 1e-12);

    let raw = ContrastiveConfig { raw_dot: true, normalize: false, ..cfg() };
    let got = contrastive_loss(&[1.0, 1.0], &[vec![2.0, 1.0]], &[vec![0.5, 0.5]], &raw).unwrap().loss;
    assert!((got - -(3.0f64 / 4.0).ln()).abs() < 1e-12);
    assert_eq!(sim(&[1.0, 1.0], &[2.0, 1.0], &raw).unwrap(), 3.0);
    assert!((sim(&a, &n[0], &cfg()).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn loss_moves_with_the_angles() {
    let a = [1.0, 0.0];
    let at = |t: f64| vec![t.cos(), t.sin()];
    let neg = vec![at(2.0)];
    let mut last = 0.0;
    for k in 0..=10 {
        let l = contrastive_loss(&a, &[at(0.3 * k as f64)], &neg, &cfg()).unwrap().loss;
        assert!(l > last);
        last = l;
    }
    let pos = vec![at(0.5)];
    let mut last = f64::INFINITY;
    for k in 0..=10 {
        let l = contrastive_loss(&a, &pos, &[at(0.3 * k as f64)], &cfg()).unwrap().loss;
        assert!(l < last);
        last = l;
    }
}

#[test]
fn degenerate_inputs_are_errors() {
    assert!(contrastive_loss(&[1.0], &[], &[vec![1.0]], &cfg()).is_err());
    assert!(contrastive_loss(&[1.0], &[vec![1.0]], &[], &cfg()).is_err());
    assert!(matches!(
        contrastive_loss(&[0.0, 0.0], &[vec![1.0, 0.0]], &[vec![0.0, 1.0]], &cfg()),
        Err(GimcError::Numeric(_))
    ));
    let raw = ContrastiveConfig { raw_dot: true, ..cfg() };
    assert!(contrastive_loss(&[1.0, 0.0], &[vec![-1.0, 0.0]], &[vec![1.0, 0.0]], &raw).is_err());
    assert!(ContrastiveConfig { temperature: 0.0, ..cfg() }.validate().is_err());
}

#[test]
fn helicopter_phrase_switches_to_danish() {
    let s = helicopter_sentence();
    let forms: Vec<String> = s.iter().map(|t| t.form.clone()).collect();
    let nsubj = extract_phrases(&s, 0).into_iter().find(|p| p.role_label() == "nsubj").unwrap();
    let phrase = &forms[nsubj.start..nsubj.end];
    let out = code_switch_phrase(phrase, &en_da(), &mut rng(0));
    assert_eq!(out.join(" "), "to franske militær helikoptere");
}

/// One sentence per event: "storm hit town" with the event on "hit".
fn chain_document(n: usize, relations: &[(usize, usize)]) -> Document {
    let sentence = || vec![tok(1, "storm", 2, "nsubj"), tok(2, "hit", 0, "root"), tok(3, "town", 2, "obj")];
    let doc = Document {
        id: "chain".into(),
        language: "en".into(),
        sentences: (0..n).map(|_| sentence()).collect(),
        events: (0..n)
            .map(|i| EventMention {
                id: format!("e{i}"),
                sentence_index: i,
                start: 1,
                end: 2,
            })
            .collect(),
        relations: relations
            .iter()
            .map(|&(a, b)| Relation {
                a: format!("e{a}"),
                b: format!("e{b}"),
            })
            .collect(),
    };
    doc.validate().unwrap();
    doc
}

fn statements(doc: &Document) -> (Vec<Statement>, Vec<bool>) {
    candidate_pairs(doc)
        .iter()
        .map(|p| (statement_tokens(&p.key, doc).unwrap(), p.causal))
        .unzip()
}

#[test]
fn four_negatives_from_six_eligible() {
    let doc = chain_document(6, &[(0, 1)]);
    let (st, causal) = statements(&doc);
    let phrases = document_phrases(&doc);
    let anchor = 0; // e0|e1
    let sel = select_negatives(&st, &causal, anchor, &phrases, &[en_da()], &cfg(), &mut rng(1)).unwrap();
    let NegativeSelection::Selected(neg) = sel else { panic!("expected negatives") };
    assert_eq!(neg.len(), 4);
    assert!(neg.iter().all(|n| !n.switched));
    let keys: BTreeSet<_> = neg.iter().map(|n| n.pair.to_string()).collect();
    assert_eq!(keys.len(), 4);
    for k in &keys {
        assert!(!k.contains("e0") && !k.contains("e1"), "{k}");
    }
}

#[test]
fn two_eligible_are_topped_up_with_switched_copies() {
    let doc = chain_document(5, &[(0, 1), (3, 4)]);
    let (st, causal) = statements(&doc);
    let phrases = document_phrases(&doc);
    let sel = select_negatives(&st, &causal, 0, &phrases, &[en_da()], &cfg(), &mut rng(2)).unwrap();
    let NegativeSelection::Selected(neg) = sel else { panic!("expected negatives") };
    assert_eq!(neg.len(), 4);
    let originals: Vec<_> = neg.iter().filter(|n| !n.switched).map(|n| n.pair.to_string()).collect();
    assert_eq!(originals, ["e2|e3", "e2|e4"]);
    for n in neg.iter().filter(|n| n.switched) {
        assert!(originals.contains(&n.pair.to_string()));
        assert!(n.forms.contains(&"by".to_string()));
        assert!(n.forms.contains(&"hit".to_string()));
    }
}

#[test]
fn anchors_without_negatives_are_skipped() {
    let doc = chain_document(2, &[(0, 1)]);
    let (st, causal) = statements(&doc);
    let phrases = document_phrases(&doc);
    assert_eq!(
        select_negatives(&st, &causal, 0, &phrases, &[en_da()], &cfg(), &mut rng(3)).unwrap(),
        NegativeSelection::NoEligible
    );
    let batch = build_anchor_sets(&doc, &st, &causal, &phrases, &[en_da()], &cfg(), &mut rng(3)).unwrap();
    assert!(batch.sets.is_empty());
    assert_eq!(batch.skipped.len(), 1);
}

#[test]
fn anchor_sets_cover_every_causal_pair() {
    let doc = chain_document(6, &[(0, 1), (2, 3)]);
    let (st, causal) = statements(&doc);
    let phrases = document_phrases(&doc);
    let batch = build_anchor_sets(&doc, &st, &causal, &phrases, &[en_da()], &cfg(), &mut rng(4)).unwrap();
    assert_eq!(batch.sets.len(), 2);
    for set in &batch.sets {
        assert!(causal[set.anchor_index]);
        assert_eq!(set.positives.len(), 2);
        assert_eq!(set.negatives.len(), 4);
        for p in &set.positives {
            assert_eq!(p.event_spans, set.anchor.event_spans);
            assert_eq!(p.forms.len(), set.anchor.forms.len());
            // the event word sits outside every phrase and is kept
            for &(s, e) in &p.event_spans {
                assert_eq!(p.forms[s..e], set.anchor.forms[s..e]);
            }
        }
    }
}

#[test]
fn no_dictionaries_is_a_usage_error() {
    let doc = chain_document(4, &[(0, 1)]);
    let (st, _) = statements(&doc);
    let err = generate_positives(&st[0], &[(0, 1)], &[], &cfg(), &mut rng(0)).unwrap_err();
    assert!(matches!(err, GimcError::NoDictionaries));
    assert_eq!(err.class(), gimc::error::ErrorClass::Usage);
}

#[test]
fn replay_with_two_dictionaries() {
    let doc = chain_document(6, &[(0, 1), (2, 5)]);
    let (st, causal) = statements(&doc);
    let phrases = document_phrases(&doc);
    let en_de = parse_dictionary("storm sturm\ntown stadt\n", "en", "de", "mem").unwrap();
    let dicts = [en_da(), en_de];
    let run = |epoch| {
        let mut r = document_rng(7, &doc.id, epoch);
        build_anchor_sets(&doc, &st, &causal, &phrases, &dicts, &cfg(), &mut r).unwrap()
    };
    assert_eq!(run(0), run(0));
    let towns: BTreeSet<String> = (0..20)
        .flat_map(|e| run(e).sets)
        .flat_map(|s| s.positives)
        .flat_map(|p| p.forms)
        .filter(|w| w == "by" || w == "stadt")
        .collect();
    assert_eq!(towns.len(), 2, "both dictionaries get used across epochs");
}
