//! Planted-cue fixture corpora with 1:1 linked vocabularies across languages.

use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{save_document, BilingualDictionary, Document, EventMention, Relation, Token};
use crate::encoder::fnv1a;
use crate::error::{GimcError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub languages: Vec<String>,
    pub docs_per_language: usize,
    pub events_per_doc: usize,
    /// Probability that a two-event sentence carries the causal cue.
    pub cue_strength: f64,
    /// Emit dictionaries between every ordered pair of languages.
    pub dictionaries: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            languages: vec!["en".into()],
            docs_per_language: 8,
            events_per_doc: 4,
            cue_strength: 0.6,
            dictionaries: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub documents: Vec<Document>,
    pub dictionaries: Vec<BilingualDictionary>,
}

impl SyntheticCorpus {
    pub fn language(&self, lang: &str) -> Vec<Document> {
        self.documents
            .iter()
            .filter(|d| d.language == lang)
            .cloned()
            .collect()
    }

    /// Writes `<dir>/<lang>/*.gimc.json` and `<dir>/dicts/<src>-<tgt>.txt`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        for doc in &self.documents {
            let sub = dir.join(&doc.language);
            fs::create_dir_all(&sub).map_err(|e| GimcError::io(&sub, e))?;
            save_document(doc, &sub)?;
        }
        if !self.dictionaries.is_empty() {
            let sub = dir.join("dicts");
            fs::create_dir_all(&sub).map_err(|e| GimcError::io(&sub, e))?;
            for d in &self.dictionaries {
                let path = sub.join(format!("{}-{}.txt", d.source_lang, d.target_lang));
                fs::write(&path, d.to_text()).map_err(|e| GimcError::io(&path, e))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Concept {
    Det,
    Punct,
    Cue,
    Connective(usize),
    Noun(usize),
    Event(usize),
    Verb(usize),
    Adverb(usize),
}

const CONNECTIVES: usize = 1;
const NOUNS: usize = 2;
const EVENTS: usize = 2;
const VERBS: usize = 4;
const ADVERBS: usize = 4;

fn all_concepts() -> Vec<Concept> {
    let mut v = vec![Concept::Det, Concept::Punct, Concept::Cue];
    v.extend((0..CONNECTIVES).map(Concept::Connective));
    v.extend((0..NOUNS).map(Concept::Noun));
    v.extend((0..EVENTS).map(Concept::Event));
    v.extend((0..VERBS).map(Concept::Verb));
    v.extend((0..ADVERBS).map(Concept::Adverb));
    v
}

const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// Pseudo-word vocabulary of one language, indexed like [`all_concepts`].
/// Depends only on the language code.
fn vocabulary(lang: &str) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(lang.as_bytes()));
    let mut words: Vec<String> = Vec::new();
    for c in all_concepts() {
        if c == Concept::Punct {
            words.push(".".into());
            continue;
        }
        loop {
            let syllables = rng.random_range(2..=3);
            let w: String = (0..syllables)
                .map(|_| {
                    format!(
                        "{}{}",
                        ONSETS.choose(&mut rng).unwrap(),
                        VOWELS.choose(&mut rng).unwrap()
                    )
                })
                .collect();
            if !words.contains(&w) {
                words.push(w);
                break;
            }
        }
    }
    words
}

fn word(vocab: &[String], c: Concept) -> &str {
    let i = all_concepts().iter().position(|x| *x == c).unwrap();
    &vocab[i]
}

enum SentencePlan {
    Pair { causal: bool },
    Single,
    Filler,
}

fn tok(index: usize, form: &str, head: usize, deprel: &str) -> Token {
    Token {
        index,
        form: form.to_string(),
        head,
        deprel: deprel.to_string(),
    }
}

fn generate_document(lang: &str, vocab: &[String], id: String, spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Document {
    let mut plans = Vec::new();
    let mut left = spec.events_per_doc;
    while left >= 2 {
        plans.push(SentencePlan::Pair {
            causal: rng.random_bool(spec.cue_strength.clamp(0.0, 1.0)),
        });
        left -= 2;
    }
    if left == 1 {
        plans.push(SentencePlan::Single);
    }
    if rng.random_bool(0.5) {
        plans.push(SentencePlan::Filler);
    }
    plans.shuffle(rng);

    let w = |c| word(vocab, c).to_string();
    let pick = |n: usize, rng: &mut ChaCha8Rng| rng.random_range(0..n);
    let mut sentences = Vec::new();
    let mut events = Vec::new();
    let mut relations = Vec::new();
    for (s, plan) in plans.iter().enumerate() {
        let noun1 = w(Concept::Noun(pick(NOUNS, rng)));
        let det = w(Concept::Det);
        let punct = w(Concept::Punct);
        match plan {
            SentencePlan::Pair { causal } => {
                let link = if *causal {
                    w(Concept::Cue)
                } else {
                    w(Concept::Connective(pick(CONNECTIVES, rng)))
                };
                let ev1 = w(Concept::Event(pick(EVENTS, rng)));
                let ev2 = w(Concept::Event(pick(EVENTS, rng)));
                let noun2 = w(Concept::Noun(pick(NOUNS, rng)));
                sentences.push(vec![
                    tok(1, &det, 2, "det"),
                    tok(2, &noun1, 3, "nsubj"),
                    tok(3, &ev1, 0, "root"),
                    tok(4, &link, 5, "mark"),
                    tok(5, &ev2, 3, "advcl"),
                    tok(6, &det, 7, "det"),
                    tok(7, &noun2, 5, "obj"),
                    tok(8, &punct, 3, "punct"),
                ]);
                let a = format!("e{}", events.len());
                events.push(EventMention {
                    id: a.clone(),
                    sentence_index: s,
                    start: 2,
                    end: 3,
                });
                let b = format!("e{}", events.len());
                events.push(EventMention {
                    id: b.clone(),
                    sentence_index: s,
                    start: 4,
                    end: 5,
                });
                if *causal {
                    relations.push(Relation { a, b });
                }
            }
            SentencePlan::Single | SentencePlan::Filler => {
                let verb = match plan {
                    SentencePlan::Single => w(Concept::Event(pick(EVENTS, rng))),
                    _ => w(Concept::Verb(pick(VERBS, rng))),
                };
                let adv = w(Concept::Adverb(pick(ADVERBS, rng)));
                sentences.push(vec![
                    tok(1, &det, 2, "det"),
                    tok(2, &noun1, 3, "nsubj"),
                    tok(3, &verb, 0, "root"),
                    tok(4, &adv, 3, "advmod"),
                    tok(5, &punct, 3, "punct"),
                ]);
                if matches!(plan, SentencePlan::Single) {
                    events.push(EventMention {
                        id: format!("e{}", events.len()),
                        sentence_index: s,
                        start: 2,
                        end: 3,
                    });
                }
            }
        }
    }
    Document {
        id,
        language: lang.to_string(),
        sentences,
        events,
        relations,
    }
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    if spec.languages.is_empty() {
        return Err(GimcError::Config("at least one language is required".into()));
    }
    let vocabs: Vec<Vec<String>> = spec.languages.iter().map(|l| vocabulary(l)).collect();
    let mut documents = Vec::new();
    for (lang, vocab) in spec.languages.iter().zip(&vocabs) {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ fnv1a(lang.as_bytes()));
        for i in 0..spec.docs_per_language {
            let id = format!("{lang}-{}-{i:03}", spec.seed);
            documents.push(generate_document(lang, vocab, id, spec, &mut rng));
        }
    }
    let mut dictionaries = Vec::new();
    if spec.dictionaries {
        for (i, src) in spec.languages.iter().enumerate() {
            for (j, tgt) in spec.languages.iter().enumerate() {
                if i == j {
                    continue;
                }
                let mut d = BilingualDictionary::new(src, tgt);
                for (a, b) in vocabs[i].iter().zip(&vocabs[j]) {
                    d.insert(a, b);
                }
                dictionaries.push(d);
            }
        }
    }
    Ok(SyntheticCorpus {
        documents,
        dictionaries,
    })
}

/// Word-by-word translation using the first listed translation of each form.
pub fn translate_document(doc: &Document, dict: &BilingualDictionary) -> Document {
    let mut out = doc.clone();
    out.language = dict.target_lang.clone();
    for sentence in &mut out.sentences {
        for t in sentence {
            if let Some(tr) = dict.lookup(&t.form).and_then(|v| v.first()) {
                t.form = tr.clone();
            }
        }
    }
    out
}
