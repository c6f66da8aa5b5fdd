//! Event-annotated, dependency-parsed documents and bilingual dictionaries.
//!
//! Documents travel as one JSON object per `*.gimc.json` file:
//!
//! ```json
//! {"id": "d1", "language": "en",
//!  "sentences": [[{"index": 1, "form": "Rain", "head": 2, "deprel": "nsubj"}, ...]],
//!  "events": [{"id": "e1", "sentence_index": 0, "start": 1, "end": 2}],
//!  "relations": [{"a": "e1", "b": "e2"}]}
//! ```
//!
//! Token indices are 1-based inside a sentence (head 0 marks the root) while
//! event spans are 0-based half-open ranges over the sentence's token list.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GimcError, Result};

pub const DOCUMENT_SUFFIX: &str = ".gimc.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub index: usize,
    pub form: String,
    pub head: usize,
    pub deprel: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventMention {
    pub id: String,
    pub sentence_index: usize,
    pub start: usize,
    pub end: usize,
}

impl EventMention {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, sentence: usize, position: usize) -> bool {
        self.sentence_index == sentence && (self.start..self.end).contains(&position)
    }
}

/// A gold causal link. Any direction field present in the input is ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub a: String,
    pub b: String,
}

pub type Sentence = Vec<Token>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub language: String,
    pub sentences: Vec<Sentence>,
    pub events: Vec<EventMention>,
    #[serde(default)]
    pub relations: Vec<Relation>,
}

/// Unordered event-id pair, stored with the smaller id first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairKey {
    pub a: String,
    pub b: String,
}

impl PairKey {
    pub fn new(x: &str, y: &str) -> Self {
        if x <= y {
            PairKey {
                a: x.to_string(),
                b: y.to_string(),
            }
        } else {
            PairKey {
                a: y.to_string(),
                b: x.to_string(),
            }
        }
    }

    pub fn shares_event(&self, other: &PairKey) -> bool {
        self.a == other.a || self.a == other.b || self.b == other.a || self.b == other.b
    }
}

impl std::fmt::Display for PairKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}|{}", self.a, self.b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub key: PairKey,
    pub causal: bool,
}

impl Document {
    pub fn event(&self, id: &str) -> Option<&EventMention> {
        self.events.iter().find(|e| e.id == id)
    }

    pub fn event_index(&self, id: &str) -> Option<usize> {
        self.events.iter().position(|e| e.id == id)
    }

    pub fn gold_pairs(&self) -> BTreeSet<PairKey> {
        self.relations
            .iter()
            .map(|r| PairKey::new(&r.a, &r.b))
            .collect()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    /// Checks every structural invariant of the document.
    pub fn validate(&self) -> Result<()> {
        let doc = self.id.as_str();
        if self.id.is_empty() {
            return Err(GimcError::schema("<unnamed>", None, "id", "empty document id"));
        }
        if self.language.is_empty() {
            return Err(GimcError::schema(doc, None, "language", "empty language code"));
        }
        for (s, sentence) in self.sentences.iter().enumerate() {
            validate_sentence(doc, s, sentence)?;
        }

        let mut ids = HashSet::new();
        for ev in &self.events {
            if !ids.insert(ev.id.as_str()) {
                return Err(GimcError::schema(
                    doc,
                    Some(ev.sentence_index),
                    "events.id",
                    format!("duplicate event id {}", ev.id),
                ));
            }
            let Some(sentence) = self.sentences.get(ev.sentence_index) else {
                return Err(GimcError::schema(
                    doc,
                    Some(ev.sentence_index),
                    "events.sentence_index",
                    format!("event {} refers to a missing sentence", ev.id),
                ));
            };
            if ev.start >= ev.end || ev.end > sentence.len() {
                return Err(GimcError::schema(
                    doc,
                    Some(ev.sentence_index),
                    "events.span",
                    format!(
                        "event {} span [{}, {}) outside sentence of length {}",
                        ev.id,
                        ev.start,
                        ev.end,
                        sentence.len()
                    ),
                ));
            }
        }
        for (i, x) in self.events.iter().enumerate() {
            for y in &self.events[i + 1..] {
                if x.sentence_index == y.sentence_index && x.start < y.end && y.start < x.end {
                    return Err(GimcError::schema(
                        doc,
                        Some(x.sentence_index),
                        "events.span",
                        format!("events {} and {} overlap", x.id, y.id),
                    ));
                }
            }
        }

        let mut seen = HashSet::new();
        for rel in &self.relations {
            for id in [&rel.a, &rel.b] {
                if !ids.contains(id.as_str()) {
                    return Err(GimcError::schema(
                        doc,
                        None,
                        "relations",
                        format!("relation references unknown event {id}"),
                    ));
                }
            }
            if rel.a == rel.b {
                return Err(GimcError::schema(
                    doc,
                    None,
                    "relations",
                    format!("relation links event {} to itself", rel.a),
                ));
            }
            if !seen.insert(PairKey::new(&rel.a, &rel.b)) {
                return Err(GimcError::schema(
                    doc,
                    None,
                    "relations",
                    format!("duplicate relation {}-{}", rel.a, rel.b),
                ));
            }
        }
        Ok(())
    }
}

fn validate_sentence(doc: &str, s: usize, sentence: &[Token]) -> Result<()> {
    let n = sentence.len();
    if n == 0 {
        return Err(GimcError::schema(doc, Some(s), "sentences", "empty sentence"));
    }
    let mut roots = 0;
    for (pos, tok) in sentence.iter().enumerate() {
        if tok.index != pos + 1 {
            return Err(GimcError::schema(
                doc,
                Some(s),
                "index",
                format!("token at position {} has index {}", pos, tok.index),
            ));
        }
        if tok.head > n {
            return Err(GimcError::schema(
                doc,
                Some(s),
                "head",
                format!("token {} has head {} beyond sentence length {}", tok.index, tok.head, n),
            ));
        }
        if tok.head == tok.index {
            return Err(GimcError::schema(
                doc,
                Some(s),
                "head",
                format!("self-headed token {}", tok.index),
            ));
        }
        if tok.head == 0 {
            roots += 1;
        }
        if tok.deprel.is_empty() {
            return Err(GimcError::schema(
                doc,
                Some(s),
                "deprel",
                format!("token {} has an empty relation label", tok.index),
            ));
        }
    }
    if roots != 1 {
        return Err(GimcError::schema(
            doc,
            Some(s),
            "head",
            format!("expected exactly one root, found {roots}"),
        ));
    }
    // With a single root and in-range heads, the head graph is a tree iff every
    // token reaches the root in at most n steps.
    for tok in sentence {
        let mut cur = tok.index;
        let mut steps = 0;
        while cur != 0 {
            cur = sentence[cur - 1].head;
            steps += 1;
            if steps > n {
                return Err(GimcError::schema(
                    doc,
                    Some(s),
                    "head",
                    format!("cyclic dependency tree through token {}", tok.index),
                ));
            }
        }
    }
    Ok(())
}

/// All unordered event pairs of a document, sorted by id pair, with gold labels.
pub fn candidate_pairs(doc: &Document) -> Vec<CandidatePair> {
    let gold = doc.gold_pairs();
    let mut ids: Vec<&str> = doc.events.iter().map(|e| e.id.as_str()).collect();
    ids.sort_unstable();
    let mut pairs = Vec::with_capacity(ids.len() * ids.len().saturating_sub(1) / 2);
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            let key = PairKey::new(a, b);
            let causal = gold.contains(&key);
            pairs.push(CandidatePair { key, causal });
        }
    }
    pairs
}

pub fn parse_document(text: &str, origin: &str) -> Result<Document> {
    let doc: Document = serde_json::from_str(text).map_err(|e| GimcError::Json {
        doc: origin.to_string(),
        msg: e.to_string(),
    })?;
    doc.validate()?;
    Ok(doc)
}

pub fn load_document(path: &Path) -> Result<Document> {
    let text = fs::read_to_string(path).map_err(|e| GimcError::io(path, e))?;
    parse_document(&text, &path.display().to_string())
}

pub fn document_to_json(doc: &Document) -> String {
    serde_json::to_string_pretty(doc).expect("documents always serialize")
}

pub fn save_document(doc: &Document, dir: &Path) -> Result<()> {
    let path = dir.join(format!("{}{}", doc.id, DOCUMENT_SUFFIX));
    fs::write(&path, document_to_json(doc)).map_err(|e| GimcError::io(&path, e))
}

/// Loads every `*.gimc.json` file under `path` (or the single file `path`).
pub fn load_corpus(path: &Path) -> Result<Vec<Document>> {
    if path.is_file() {
        return Ok(vec![load_document(path)?]);
    }
    let entries = fs::read_dir(path).map_err(|e| GimcError::io(path, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| GimcError::io(path, e))?;
        let p = entry.path();
        let is_doc = p
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(DOCUMENT_SUFFIX));
        if is_doc && p.is_file() {
            files.push(p);
        }
    }
    let mut by_file = Vec::with_capacity(files.len());
    for f in files {
        let doc = load_document(&f)?;
        by_file.push((f, doc));
    }
    by_file.sort_by(|(fa, da), (fb, db)| fa.cmp(fb).then_with(|| da.id.cmp(&db.id)));
    Ok(by_file.into_iter().map(|(_, d)| d).collect())
}

/// Word-to-word translations between two languages, MUSE style.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BilingualDictionary {
    pub source_lang: String,
    pub target_lang: String,
    pub entries: BTreeMap<String, Vec<String>>,
}

impl BilingualDictionary {
    pub fn new(source_lang: &str, target_lang: &str) -> Self {
        BilingualDictionary {
            source_lang: source_lang.to_string(),
            target_lang: target_lang.to_string(),
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, source: &str, target: &str) {
        self.entries
            .entry(source.to_lowercase())
            .or_default()
            .push(target.to_lowercase());
    }

    pub fn lookup(&self, word: &str) -> Option<&[String]> {
        self.entries.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Serializes back into the one-pair-per-line text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (src, targets) in &self.entries {
            for t in targets {
                out.push_str(src);
                out.push(' ');
                out.push_str(t);
                out.push('\n');
            }
        }
        out
    }
}

pub fn parse_dictionary(
    text: &str,
    source_lang: &str,
    target_lang: &str,
    origin: &str,
) -> Result<BilingualDictionary> {
    let mut dict = BilingualDictionary::new(source_lang, target_lang);
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(GimcError::Dictionary {
                path: origin.to_string(),
                line: i + 1,
                msg: format!("expected 2 fields, found {}", fields.len()),
            });
        }
        dict.insert(fields[0], fields[1]);
    }
    Ok(dict)
}

/// Loads a dictionary file. Languages come from a `xx-yy` file stem when present.
pub fn load_dictionary(path: &Path) -> Result<BilingualDictionary> {
    let text = fs::read_to_string(path).map_err(|e| GimcError::io(path, e))?;
    let stem = path
        .file_name()
        .and_then(|n| n.to_str())
        .map(|n| n.split('.').next().unwrap_or(n))
        .unwrap_or("");
    let (src, tgt) = match stem.split_once('-') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() => (a.to_string(), b.to_string()),
        _ => ("und".to_string(), "und".to_string()),
    };
    parse_dictionary(&text, &src, &tgt, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(index: usize, form: &str, head: usize, deprel: &str) -> Token {
        Token {
            index,
            form: form.into(),
            head,
            deprel: deprel.into(),
        }
    }

    fn doc_with_events(n: usize, gold: &[(usize, usize)]) -> Document {
        let sentence: Vec<Token> = (0..n)
            .map(|i| {
                if i == 0 {
                    tok(1, "w0", 0, "root")
                } else {
                    tok(i + 1, &format!("w{i}"), 1, "conj")
                }
            })
            .collect();
        Document {
            id: "d".into(),
            language: "en".into(),
            sentences: vec![sentence],
            events: (0..n)
                .map(|i| EventMention {
                    id: format!("e{i}"),
                    sentence_index: 0,
                    start: i,
                    end: i + 1,
                })
                .collect(),
            relations: gold
                .iter()
                .map(|&(a, b)| Relation {
                    a: format!("e{a}"),
                    b: format!("e{b}"),
                })
                .collect(),
        }
    }

    #[test]
    fn pair_counts() {
        assert!(candidate_pairs(&doc_with_events(1, &[])).is_empty());
        assert_eq!(candidate_pairs(&doc_with_events(3, &[])).len(), 3);
        let d = doc_with_events(5, &[(0, 3), (4, 2)]);
        d.validate().unwrap();
        let pairs = candidate_pairs(&d);
        assert_eq!(pairs.len(), 10);
        assert_eq!(pairs.iter().filter(|p| p.causal).count(), 2);
        let keys: Vec<_> = pairs.iter().map(|p| p.key.clone()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn self_headed_token_is_rejected() {
        let mut d = doc_with_events(2, &[]);
        d.sentences[0][1].head = 2;
        let err = d.validate().unwrap_err().to_string();
        assert!(err.contains("self-headed token"), "{err}");
    }

    #[test]
    fn cycles_are_rejected() {
        let mut d = doc_with_events(3, &[]);
        d.sentences[0][1].head = 3;
        d.sentences[0][2].head = 2;
        let err = d.validate().unwrap_err().to_string();
        assert!(err.contains("cyclic"), "{err}");
    }

    #[test]
    fn bad_relations_are_rejected() {
        let mut d = doc_with_events(3, &[(0, 1), (1, 0)]);
        assert!(d.validate().is_err());
        d.relations = vec![Relation {
            a: "e0".into(),
            b: "zz".into(),
        }];
        assert!(d.validate().is_err());
    }

    #[test]
    fn overlapping_events_are_rejected() {
        let mut d = doc_with_events(3, &[]);
        d.events[1].start = 0;
        let err = d.validate().unwrap_err().to_string();
        assert!(err.contains("overlap"), "{err}");
    }

    #[test]
    fn dictionary_parsing() {
        let d = parse_dictionary("helicopters helikoptere\n", "en", "da", "t").unwrap();
        assert_eq!(d.lookup("helicopters").unwrap(), ["helikoptere".to_string()]);
        assert!(parse_dictionary("", "en", "da", "t").unwrap().is_empty());
        let d = parse_dictionary("fast hurtig\nfast fast\n", "en", "da", "t").unwrap();
        assert_eq!(d.lookup("FAST").unwrap(), ["hurtig".to_string(), "fast".to_string()]);
        let err = parse_dictionary("ok ok\na b c\n", "en", "da", "t").unwrap_err();
        assert!(matches!(err, GimcError::Dictionary { line: 2, .. }));
    }
}
