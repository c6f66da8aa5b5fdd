mod common;

use common::*;
use gimc::phrase::*;
use proptest::prelude::*;

proptest! {
    #[test]
    fn spans_are_subtree_projections(seed in any::<u64>(), n in 1usize..14) {
        let sentence = random_tree(&mut rng(seed), n);
        let phrases = extract_phrases(&sentence, 2);
        prop_assert_eq!(phrase_set(&phrases), oracle_phrases(&sentence, 2));
        for p in &phrases {
            prop_assert!(p.contains(p.root_token));
            prop_assert!(is_retained(p.role_label()));
            prop_assert!(p.role_label() != "root");
        }
        let starts: Vec<_> = phrases.iter().map(|p| p.start).collect();
        let mut sorted = starts.clone();
        sorted.sort_unstable();
        prop_assert_eq!(starts, sorted);
        prop_assert_eq!(extract_phrases(&sentence, 2), phrases);
    }

    #[test]
    fn edges_follow_the_head_rule(seed in any::<u64>(), n in 1usize..14) {
        let sentence = random_tree(&mut rng(seed), n);
        let phrases = extract_phrases(&sentence, 0);
        let edges = phrase_edges(&phrases, &sentence);
        for i in 0..phrases.len() {
            for j in i + 1..phrases.len() {
                let head_in = |a: &InformativePhrase, b: &InformativePhrase| {
                    let h = sentence[b.root_token].head;
                    h != 0 && (a.start..a.end).contains(&(h - 1))
                };
                let expected = head_in(&phrases[i], &phrases[j]) || head_in(&phrases[j], &phrases[i]);
                prop_assert_eq!(edges.contains(&(i, j)), expected);
            }
        }
        prop_assert!(edges.iter().all(|(i, j)| i < j));
    }

    #[test]
    fn projective_flag_matches_subtree_size(seed in any::<u64>(), n in 1usize..12) {
        let sentence = random_tree(&mut rng(seed), n);
        let phrases = extract_phrases(&sentence, 0);
        let flagged = non_projective(&phrases, &sentence);
        for (i, p) in phrases.iter().enumerate() {
            let size = subtree_by_scan(&sentence, p.root_token).len();
            prop_assert_eq!(flagged.contains(&i), size != p.len());
        }
    }
}

#[test]
fn helicopter_subject() {
    let s = helicopter_sentence();
    let phrases = extract_phrases(&s, 0);
    let nsubj = phrases.iter().find(|p| p.role_label() == "nsubj").unwrap();
    assert_eq!(nsubj.surface(&s), "two French military helicopters");
    assert_eq!((nsubj.start, nsubj.end, nsubj.root_token), (0, 4, 3));
    let labels: Vec<_> = phrases.iter().map(|p| (p.role_label(), p.surface(&s))).collect();
    assert_eq!(
        labels,
        [
            ("nsubj", "two French military helicopters".to_string()),
            ("obl", "in Mali".to_string()),
            ("advcl", ", killing 13 soldiers".to_string()),
            ("obj", "13 soldiers".to_string()),
        ]
    );
}

#[test]
fn object_and_adverb_in_six_tokens() {
    // "she quickly ate the red apple"
    let s = vec![
        tok(1, "she", 3, "nsubj"),
        tok(2, "quickly", 3, "advmod"),
        tok(3, "ate", 0, "root"),
        tok(4, "the", 6, "det"),
        tok(5, "red", 6, "amod"),
        tok(6, "apple", 3, "obj"),
    ];
    let phrases = extract_phrases(&s, 0);
    assert_eq!(phrase_set(&phrases), oracle_phrases(&s, 0));
    let obj_adv: Vec<_> = phrases
        .iter()
        .filter(|p| matches!(p.role_label(), "obj" | "advmod"))
        .map(|p| (p.start, p.end))
        .collect();
    assert_eq!(obj_adv, [(1, 2), (3, 6)]);
    // all three hang off "ate", which none of them contains
    assert!(phrase_edges(&phrases, &s).is_empty());
}

#[test]
fn subtypes_need_an_exact_match() {
    let s = vec![
        tok(1, "it", 2, "nsubj:pass"),
        tok(2, "was", 0, "root"),
        tok(3, "them", 2, "obl:agent"),
    ];
    let phrases = extract_phrases(&s, 0);
    assert_eq!(phrases.len(), 1);
    assert_eq!(phrases[0].role_label(), "nsubj:pass");
}
