//! Seeded random fixtures and brute-force oracles shared by the test files.
#![allow(dead_code)]

use std::collections::BTreeSet;

use gimc::corpus::{candidate_pairs, Document, EventMention, PairKey, Relation, Token};
use gimc::phrase::{InformativePhrase, RETAINED_RELATIONS};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const OTHER_RELATIONS: [&str; 6] = ["det", "case", "punct", "amod", "nummod", "obl:agent"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tok(index: usize, form: &str, head: usize, deprel: &str) -> Token {
    Token {
        index,
        form: form.to_string(),
        head,
        deprel: deprel.to_string(),
    }
}

/// A random dependency tree of `n` tokens. Heads are drawn from a random
/// insertion order, so trees may be non-projective.
pub fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> Vec<Token> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut heads = vec![0usize; n];
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        heads[order[k]] = parent + 1;
    }
    (0..n)
        .map(|p| {
            let deprel = if heads[p] == 0 {
                "root"
            } else if rng.random_bool(0.6) {
                RETAINED_RELATIONS[..18].choose(rng).unwrap()
            } else {
                OTHER_RELATIONS.choose(rng).unwrap()
            };
            tok(p + 1, &format!("w{}", rng.random_range(0..12)), heads[p], deprel)
        })
        .collect()
}

/// A valid random document: 1-5 sentences, 0-6 non-overlapping single- or
/// two-token events, random gold pairs.
pub fn random_document(seed: u64) -> Document {
    let mut r = rng(seed);
    let sentences: Vec<Vec<Token>> = (0..r.random_range(1..=5))
        .map(|_| {
            let n = r.random_range(2..=8);
            random_tree(&mut r, n)
        })
        .collect();
    let mut events = Vec::new();
    let wanted = r.random_range(0..=6);
    let mut taken: BTreeSet<(usize, usize)> = BTreeSet::new();
    for _ in 0..wanted * 3 {
        if events.len() == wanted {
            break;
        }
        let s = r.random_range(0..sentences.len());
        let start = r.random_range(0..sentences[s].len());
        let end = (start + r.random_range(1..=2)).min(sentences[s].len());
        if (start..end).any(|p| taken.contains(&(s, p))) {
            continue;
        }
        (start..end).for_each(|p| {
            taken.insert((s, p));
        });
        events.push(EventMention {
            id: format!("e{}", events.len()),
            sentence_index: s,
            start,
            end,
        });
    }
    let mut relations = Vec::new();
    for i in 0..events.len() {
        for j in i + 1..events.len() {
            if r.random_bool(0.25) {
                relations.push(Relation {
                    a: events[i].id.clone(),
                    b: events[j].id.clone(),
                });
            }
        }
    }
    let doc = Document {
        id: format!("rand-{seed}"),
        language: "en".into(),
        sentences,
        events,
        relations,
    };
    doc.validate().expect("generator emits valid documents");
    doc
}

pub fn pair_keys(doc: &Document) -> Vec<PairKey> {
    candidate_pairs(doc).into_iter().map(|p| p.key).collect()
}

/// Subtree of `root` by repeated scanning of the head array.
pub fn subtree_by_scan(sentence: &[Token], root: usize) -> BTreeSet<usize> {
    let mut set = BTreeSet::from([root]);
    loop {
        let before = set.len();
        for (p, t) in sentence.iter().enumerate() {
            if t.head > 0 && set.contains(&(t.head - 1)) {
                set.insert(p);
            }
        }
        if set.len() == before {
            return set;
        }
    }
}

/// Phrases recomputed from first principles: one per retained non-root
/// dependent, spanning its subtree's min..=max.
pub fn oracle_phrases(sentence: &[Token], s: usize) -> BTreeSet<(usize, usize, usize, &'static str)> {
    let mut out = BTreeSet::new();
    for (p, t) in sentence.iter().enumerate() {
        if t.head == 0 || t.deprel == "root" {
            continue;
        }
        if let Some(label) = RETAINED_RELATIONS.iter().find(|r| **r == t.deprel) {
            let sub = subtree_by_scan(sentence, p);
            out.insert((
                s,
                *sub.iter().next().unwrap(),
                *sub.iter().next_back().unwrap() + 1,
                *label,
            ));
        }
    }
    out
}

pub fn phrase_set(phrases: &[InformativePhrase]) -> BTreeSet<(usize, usize, usize, &'static str)> {
    phrases
        .iter()
        .map(|p| (p.sentence_index, p.start, p.end, p.role_label()))
        .collect()
}

/// The helicopter example sentence:
/// "two French military helicopters crashed in Mali , killing 13 soldiers ."
pub fn helicopter_sentence() -> Vec<Token> {
    vec![
        tok(1, "two", 4, "nummod"),
        tok(2, "French", 4, "amod"),
        tok(3, "military", 4, "amod"),
        tok(4, "helicopters", 5, "nsubj"),
        tok(5, "crashed", 0, "root"),
        tok(6, "in", 7, "case"),
        tok(7, "Mali", 5, "obl"),
        tok(8, ",", 9, "punct"),
        tok(9, "killing", 5, "advcl"),
        tok(10, "13", 11, "nummod"),
        tok(11, "soldiers", 9, "obj"),
        tok(12, ".", 5, "punct"),
    ]
}

pub fn helicopter_document() -> Document {
    Document {
        id: "mali".into(),
        language: "en".into(),
        sentences: vec![helicopter_sentence()],
        events: vec![
            EventMention {
                id: "crashed".into(),
                sentence_index: 0,
                start: 4,
                end: 5,
            },
            EventMention {
                id: "killing".into(),
                sentence_index: 0,
                start: 8,
                end: 9,
            },
        ],
        relations: vec![Relation {
            a: "crashed".into(),
            b: "killing".into(),
        }],
    }
}

pub type Edges = BTreeSet<(usize, usize)>;

fn norm(x: usize, y: usize) -> (usize, usize) {
    (x.min(y), x.max(y))
}

/// Every edge set re-derived by looping over all candidate endpoints.
pub fn brute_force_edges(doc: &Document, phrases: &[InformativePhrase], pairs: &[PairKey]) -> [Edges; 6] {
    let np = phrases.len();
    let ns = doc.sentences.len();
    let nq = pairs.len();
    let sentence_node = |s: usize| np + s;
    let statement_node = |p: usize| np + ns + p;
    let pair_node = |p: usize| np + ns + nq + p;
    let event = |id: &str| doc.events.iter().find(|e| e.id == id).unwrap().clone();
    let [mut pp, mut sp, mut pe, mut se, mut ste, mut ee]: [Edges; 6] = Default::default();
    for i in 0..np {
        for j in 0..np {
            let (a, b) = (&phrases[i], &phrases[j]);
            if i == j || a.sentence_index != b.sentence_index {
                continue;
            }
            let h = doc.sentences[b.sentence_index][b.root_token].head;
            if h > 0 && a.start <= h - 1 && h - 1 < a.end {
                pp.insert(norm(i, j));
            }
        }
        sp.insert(norm(i, sentence_node(phrases[i].sentence_index)));
    }
    for (q, pair) in pairs.iter().enumerate() {
        let evs: [EventMention; 2] = [event(&pair.a), event(&pair.b)];
        for (i, ph) in phrases.iter().enumerate() {
            let hit = evs.iter().any(|e| {
                (e.start..e.end).any(|t| e.sentence_index == ph.sentence_index && ph.start <= t && t < ph.end)
            });
            if hit {
                pe.insert(norm(i, pair_node(q)));
            }
        }
        for s in 0..ns {
            if evs.iter().any(|e| e.sentence_index == s) {
                se.insert(norm(sentence_node(s), pair_node(q)));
            }
        }
        ste.insert(norm(statement_node(q), pair_node(q)));
        for (r, other) in pairs.iter().enumerate() {
            let shared = [&pair.a, &pair.b]
                .iter()
                .filter(|x| ***x == other.a || ***x == other.b)
                .count();
            if r != q && shared >= 1 {
                ee.insert(norm(pair_node(q), pair_node(r)));
            }
        }
    }
    [pp, sp, pe, se, ste, ee]
}

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

/// Random undirected graph with self-loops: sorted neighbor lists, node
/// features of width `dim`.
pub fn random_graph(seed: u64, nodes: usize, dim: usize) -> (Vec<Vec<usize>>, Vec<Vec<f64>>) {
    let mut r = rng(seed);
    let p = r.random_range(0.1..0.6);
    let mut adj: Vec<BTreeSet<usize>> = (0..nodes).map(|i| BTreeSet::from([i])).collect();
    for i in 0..nodes {
        for j in i + 1..nodes {
            if r.random_bool(p) {
                adj[i].insert(j);
                adj[j].insert(i);
            }
        }
    }
    let features = (0..nodes)
        .map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    (adj.into_iter().map(|s| s.into_iter().collect()).collect(), features)
}

pub fn random_stack(seed: u64, layers: usize, heads: usize, dim: usize) -> gimc::gat::GatStack {
    gimc::gat::GatStack::init(layers, heads, dim, gimc::gat::DEFAULT_LEAKY_SLOPE, &mut rng(seed ^ 0xa77e))
        .unwrap()
}
