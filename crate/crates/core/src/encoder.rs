//! Token, event, sentence, statement and aspect representations.
//!
//! Every representation the model consumes is `P · ū`, where `ū` is a weighted
//! mean of input vectors. A [`Bag`] records that mean without committing to
//! parameter values, so the same bag can be resolved under perturbed
//! parameters and pushed back through in the backward pass.
//!
//! Two input spaces exist. The toy space hashes lowercased word forms into a
//! trainable table whose first four rows are reserved for padding, the two
//! event tags and the mask token. The cache space reads frozen vectors from an
//! `EMBC` file written by an external encoder.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, PairKey};
use crate::error::{GimcError, Result};
use crate::tensor::{axpy, Matrix};

pub const OPEN_TAG: &str = "<t>";
pub const CLOSE_TAG: &str = "</t>";
pub const MASK_TOKEN: &str = "<mask>";

pub const PAD_ROW: usize = 0;
pub const OPEN_ROW: usize = 1;
pub const CLOSE_ROW: usize = 2;
pub const MASK_ROW: usize = 3;
pub const RESERVED_ROWS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderMode {
    Toy,
    Cache,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub mode: EncoderMode,
    pub dim_in: usize,
    pub dim: usize,
    pub hash_buckets: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            mode: EncoderMode::Toy,
            dim_in: 64,
            dim: 64,
            hash_buckets: 4096,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim_in == 0 {
            return Err(GimcError::Config("encoder widths must be positive".into()));
        }
        if self.mode == EncoderMode::Toy && self.hash_buckets <= RESERVED_ROWS {
            return Err(GimcError::Config(format!(
                "hash_buckets must exceed the {RESERVED_ROWS} reserved rows"
            )));
        }
        Ok(())
    }
}

/// FNV-1a, 64 bit. Stable across platforms and runs.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Embedding row for a surface form in the toy space.
pub fn hash_row(form: &str, buckets: usize) -> usize {
    match form {
        OPEN_TAG => OPEN_ROW,
        CLOSE_TAG => CLOSE_ROW,
        MASK_TOKEN => MASK_ROW,
        _ => {
            let h = fnv1a(form.to_lowercase().as_bytes());
            RESERVED_ROWS + (h % (buckets - RESERVED_ROWS) as u64) as usize
        }
    }
}

/// A weighted mean of embedding-table rows plus a frozen constant part.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    /// `(row, weight)`, sorted by row, no duplicates.
    pub rows: Vec<(usize, f64)>,
    pub frozen: Vec<f64>,
}

impl Bag {
    pub fn row(row: usize, dim_in: usize) -> Self {
        Bag {
            rows: vec![(row, 1.0)],
            frozen: vec![0.0; dim_in],
        }
    }

    pub fn frozen(v: Vec<f64>) -> Self {
        Bag {
            rows: Vec::new(),
            frozen: v,
        }
    }

    /// Uniform mean of the given bags.
    pub fn mean<'a, I>(bags: I, dim_in: usize) -> Option<Bag>
    where
        I: IntoIterator<Item = &'a Bag>,
    {
        let mut rows: Vec<(usize, f64)> = Vec::new();
        let mut frozen = vec![0.0; dim_in];
        let mut n = 0usize;
        for b in bags {
            rows.extend_from_slice(&b.rows);
            axpy(&mut frozen, 1.0, &b.frozen);
            n += 1;
        }
        if n == 0 {
            return None;
        }
        let inv = 1.0 / n as f64;
        rows.sort_by_key(|r| r.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(rows.len());
        for (r, w) in rows {
            match merged.last_mut() {
                Some(last) if last.0 == r => last.1 += w,
                _ => merged.push((r, w)),
            }
        }
        merged.iter_mut().for_each(|e| e.1 *= inv);
        frozen.iter_mut().for_each(|x| *x *= inv);
        Some(Bag {
            rows: merged,
            frozen,
        })
    }

    /// The mean input vector `ū`.
    pub fn resolve(&self, embed: &Matrix) -> Vec<f64> {
        let mut u = self.frozen.clone();
        for &(r, w) in &self.rows {
            axpy(&mut u, w, embed.row(r));
        }
        u
    }
}

/// Trainable encoder parameters: the toy table (empty in cache mode) and the
/// shared projection `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub embed: Matrix,
    pub proj: Matrix,
}

impl EncoderParams {
    /// `P · ū` together with `ū`.
    pub fn project(&self, bag: &Bag) -> (Vec<f64>, Vec<f64>) {
        let u = bag.resolve(&self.embed);
        (self.proj.matvec(&u), u)
    }

    /// Accumulates the gradient of `P · ū` given the upstream gradient `g`.
    pub fn backprop(&self, grads: &mut EncoderParams, bag: &Bag, u: &[f64], g: &[f64]) {
        grads.proj.add_outer(g, u, 1.0);
        if bag.rows.is_empty() {
            return;
        }
        let gu = self.proj.matvec_t(g);
        for &(r, w) in &bag.rows {
            axpy(grads.embed.row_mut(r), w, &gu);
        }
    }
}

/// The text a pair is classified from: one sentence, or two in document order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub pair: PairKey,
    pub sentences: Vec<usize>,
    pub forms: Vec<String>,
    /// `(sentence, position)` of every statement token.
    pub origin: Vec<(usize, usize)>,
    /// Event spans re-indexed into the statement, sorted by start.
    pub event_spans: Vec<(usize, usize)>,
}

impl Statement {
    pub fn overlaps(&self, other: &Statement) -> bool {
        self.sentences.iter().any(|s| other.sentences.contains(s))
    }
}

pub fn statement_tokens(pair: &PairKey, doc: &Document) -> Result<Statement> {
    let ea = doc.event(&pair.a).ok_or_else(|| {
        GimcError::schema(&doc.id, None, "events", format!("unknown event {}", pair.a))
    })?;
    let eb = doc.event(&pair.b).ok_or_else(|| {
        GimcError::schema(&doc.id, None, "events", format!("unknown event {}", pair.b))
    })?;
    let mut sentences = vec![ea.sentence_index, eb.sentence_index];
    sentences.sort_unstable();
    sentences.dedup();

    let mut forms = Vec::new();
    let mut origin = Vec::new();
    let mut offsets = Vec::new();
    for &s in &sentences {
        offsets.push((s, forms.len()));
        for (pos, tok) in doc.sentences[s].iter().enumerate() {
            forms.push(tok.form.clone());
            origin.push((s, pos));
        }
    }
    let offset_of = |s: usize| offsets.iter().find(|(x, _)| *x == s).map(|o| o.1).unwrap();
    let mut event_spans: Vec<(usize, usize)> = [ea, eb]
        .iter()
        .map(|e| {
            let o = offset_of(e.sentence_index);
            (e.start + o, e.end + o)
        })
        .collect();
    event_spans.sort_unstable();
    Ok(Statement {
        pair: pair.clone(),
        sentences,
        forms,
        origin,
        event_spans,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Open,
    Close,
    Token(usize),
}

/// Tagged layout of a sequence: which original token or tag sits at each slot.
pub fn tag_layout(len: usize, spans: &[(usize, usize)]) -> Result<Vec<Slot>> {
    let mut sorted = spans.to_vec();
    sorted.sort_unstable();
    for w in sorted.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(GimcError::OverlappingSpans(w[0].0, w[0].1, w[1].0, w[1].1));
        }
    }
    for &(s, e) in &sorted {
        if s >= e || e > len {
            return Err(GimcError::Config(format!(
                "event span [{s}, {e}) outside sequence of length {len}"
            )));
        }
    }
    let mut out = Vec::with_capacity(len + 2 * sorted.len());
    let mut next = sorted.iter().peekable();
    let mut open_end: Option<usize> = None;
    for pos in 0..len {
        if let Some(&&(s, e)) = next.peek() {
            if s == pos {
                out.push(Slot::Open);
                open_end = Some(e);
                next.next();
            }
        }
        out.push(Slot::Token(pos));
        if open_end == Some(pos + 1) {
            out.push(Slot::Close);
            open_end = None;
        }
    }
    Ok(out)
}

pub fn insert_event_tags(tokens: &[String], spans: &[(usize, usize)]) -> Result<Vec<String>> {
    Ok(tag_layout(tokens.len(), spans)?
        .into_iter()
        .map(|slot| match slot {
            Slot::Open => OPEN_TAG.to_string(),
            Slot::Close => CLOSE_TAG.to_string(),
            Slot::Token(p) => tokens[p].clone(),
        })
        .collect())
}

pub fn strip_event_tags(tokens: &[String]) -> Vec<String> {
    tokens
        .iter()
        .filter(|t| t.as_str() != OPEN_TAG && t.as_str() != CLOSE_TAG)
        .cloned()
        .collect()
}

/// Bags for the three statement-level views.
#[derive(Debug, Clone, PartialEq)]
pub struct StatementBags {
    pub cls: Bag,
    pub asp_event: Bag,
    pub asp_context: Bag,
}

/// Statement views in the toy space, computed from surface forms.
pub fn toy_statement_bags(
    forms: &[String],
    spans: &[(usize, usize)],
    buckets: usize,
    dim_in: usize,
) -> Result<StatementBags> {
    let layout = tag_layout(forms.len(), spans)?;
    let in_event = |p: usize| spans.iter().any(|&(s, e)| (s..e).contains(&p));
    let mut cls = Vec::with_capacity(layout.len());
    let mut asp_e = Vec::new();
    let mut asp_c = Vec::with_capacity(layout.len());
    let mut inside = false;
    for slot in &layout {
        let (row, masked, event_part) = match *slot {
            Slot::Open => {
                inside = true;
                (OPEN_ROW, OPEN_ROW, true)
            }
            Slot::Close => {
                inside = false;
                (CLOSE_ROW, CLOSE_ROW, true)
            }
            Slot::Token(p) => {
                let r = hash_row(&forms[p], buckets);
                let ev = in_event(p);
                (r, if ev { MASK_ROW } else { r }, inside && ev)
            }
        };
        cls.push(Bag::row(row, dim_in));
        asp_c.push(Bag::row(masked, dim_in));
        if event_part {
            asp_e.push(Bag::row(row, dim_in));
        }
    }
    let mean = |v: &[Bag]| Bag::mean(v, dim_in).expect("statements are never empty");
    Ok(StatementBags {
        cls: mean(&cls),
        asp_event: mean(&asp_e),
        asp_context: mean(&asp_c),
    })
}

/// Frozen vectors keyed by string, as written by an external encoder.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingCache {
    pub dim_in: usize,
    pub entries: BTreeMap<String, Vec<f32>>,
}

const CACHE_MAGIC: &[u8; 4] = b"EMBC";

impl EmbeddingCache {
    pub fn new(dim_in: usize) -> Self {
        EmbeddingCache {
            dim_in,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, key: String, v: Vec<f32>) -> Result<()> {
        if v.len() != self.dim_in {
            return Err(GimcError::Dimension {
                what: format!("cache record {key}"),
                expected: self.dim_in,
                got: v.len(),
            });
        }
        self.entries.insert(key, v);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<Vec<f64>> {
        self.entries
            .get(key)
            .map(|v| v.iter().map(|&x| f64::from(x)).collect())
            .ok_or_else(|| GimcError::MissingCacheKey(key.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&(self.dim_in as u32).to_le_bytes());
        for (k, v) in &self.entries {
            out.extend_from_slice(&(k.len() as u32).to_le_bytes());
            out.extend_from_slice(k.as_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(GimcError::Cache("bad magic, expected EMBC".into()));
        }
        let dim_in = read_u32(&mut r)? as usize;
        let mut cache = EmbeddingCache::new(dim_in);
        while !r.is_empty() {
            let len = read_u32(&mut r)? as usize;
            let mut key = vec![0u8; len];
            read_exact(&mut r, &mut key)?;
            let key = String::from_utf8(key)
                .map_err(|_| GimcError::Cache("record key is not UTF-8".into()))?;
            let mut v = Vec::with_capacity(dim_in);
            for _ in 0..dim_in {
                let mut b = [0u8; 4];
                read_exact(&mut r, &mut b)?;
                v.push(f32::from_le_bytes(b));
            }
            if cache.entries.insert(key.clone(), v).is_some() {
                return Err(GimcError::Cache(format!("duplicate key {key}")));
            }
        }
        Ok(cache)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| GimcError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| GimcError::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| GimcError::io(path, e))
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| GimcError::Cache("truncated file".into()))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn token_key(doc: &str, sentence: usize, position: usize) -> String {
    format!("{doc}|tok|{sentence}|{position}")
}

pub fn statement_key(kind: &str, doc: &str, pair: &PairKey) -> String {
    format!("{doc}|{kind}|{}|{}", pair.a, pair.b)
}

/// Every cache key the pipeline reads for `doc`, in a stable order.
pub fn required_cache_keys(doc: &Document) -> Vec<String> {
    let mut keys = Vec::new();
    for (s, sentence) in doc.sentences.iter().enumerate() {
        for pos in 0..sentence.len() {
            keys.push(token_key(&doc.id, s, pos));
        }
    }
    for pair in crate::corpus::candidate_pairs(doc) {
        for kind in ["stmt", "aspE", "aspC"] {
            keys.push(statement_key(kind, &doc.id, &pair.key));
        }
    }
    keys
}

/// Resolves token and statement bags in either input space.
#[derive(Debug, Clone, Copy)]
pub enum InputSpace<'a> {
    Toy { buckets: usize, dim_in: usize },
    Cache(&'a EmbeddingCache),
}

impl InputSpace<'_> {
    pub fn dim_in(&self) -> usize {
        match self {
            InputSpace::Toy { dim_in, .. } => *dim_in,
            InputSpace::Cache(c) => c.dim_in,
        }
    }

    pub fn token_bag(&self, doc: &Document, sentence: usize, position: usize) -> Result<Bag> {
        match self {
            InputSpace::Toy { buckets, dim_in } => Ok(Bag::row(
                hash_row(&doc.sentences[sentence][position].form, *buckets),
                *dim_in,
            )),
            InputSpace::Cache(c) => Ok(Bag::frozen(c.get(&token_key(&doc.id, sentence, position))?)),
        }
    }

    pub fn statement_bags(&self, doc: &Document, stmt: &Statement) -> Result<StatementBags> {
        match self {
            InputSpace::Toy { buckets, dim_in } => {
                toy_statement_bags(&stmt.forms, &stmt.event_spans, *buckets, *dim_in)
            }
            InputSpace::Cache(c) => Ok(StatementBags {
                cls: Bag::frozen(c.get(&statement_key("stmt", &doc.id, &stmt.pair))?),
                asp_event: Bag::frozen(c.get(&statement_key("aspE", &doc.id, &stmt.pair))?),
                asp_context: Bag::frozen(c.get(&statement_key("aspC", &doc.id, &stmt.pair))?),
            }),
        }
    }
}

/// Parameter-free description of every representation of one document.
#[derive(Debug, Clone)]
pub struct DocumentBags {
    pub tokens: Vec<Vec<Bag>>,
    pub events: Vec<Bag>,
    pub sentences: Vec<Bag>,
    pub statements: Vec<Statement>,
    pub statement_bags: Vec<StatementBags>,
}

impl DocumentBags {
    pub fn build(doc: &Document, pairs: &[PairKey], space: &InputSpace<'_>) -> Result<Self> {
        let dim_in = space.dim_in();
        let mut tokens = Vec::with_capacity(doc.sentences.len());
        for (s, sentence) in doc.sentences.iter().enumerate() {
            let row: Result<Vec<Bag>> = (0..sentence.len())
                .map(|p| space.token_bag(doc, s, p))
                .collect();
            tokens.push(row?);
        }
        let events = doc
            .events
            .iter()
            .map(|e| {
                Bag::mean(&tokens[e.sentence_index][e.start..e.end], dim_in)
                    .expect("validated spans are non-empty")
            })
            .collect();
        let sentences = tokens
            .iter()
            .map(|t| Bag::mean(t, dim_in).expect("validated sentences are non-empty"))
            .collect();
        let mut statements = Vec::with_capacity(pairs.len());
        let mut statement_bags = Vec::with_capacity(pairs.len());
        for p in pairs {
            let st = statement_tokens(p, doc)?;
            statement_bags.push(space.statement_bags(doc, &st)?);
            statements.push(st);
        }
        Ok(DocumentBags {
            tokens,
            events,
            sentences,
            statements,
            statement_bags,
        })
    }

    pub fn span_bag(&self, sentence: usize, start: usize, end: usize, dim_in: usize) -> Bag {
        Bag::mean(&self.tokens[sentence][start..end], dim_in).expect("non-empty span")
    }
}

/// Resolved representations of one document under given parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDocument {
    pub token_vectors: Vec<Vec<Vec<f64>>>,
    pub event_vectors: Vec<Vec<f64>>,
    pub sentence_vectors: Vec<Vec<f64>>,
    pub statement_vectors: Vec<Vec<f64>>,
    pub aspect_event_vectors: Vec<Vec<f64>>,
    pub aspect_context_vectors: Vec<Vec<f64>>,
}

impl EncodedDocument {
    pub fn all_finite(&self) -> bool {
        let ok = |vs: &[Vec<f64>]| vs.iter().flatten().all(|x| x.is_finite());
        self.token_vectors.iter().all(|s| ok(s))
            && ok(&self.event_vectors)
            && ok(&self.sentence_vectors)
            && ok(&self.statement_vectors)
            && ok(&self.aspect_event_vectors)
            && ok(&self.aspect_context_vectors)
    }
}

pub fn encode(
    doc: &Document,
    pairs: &[PairKey],
    space: &InputSpace<'_>,
    params: &EncoderParams,
) -> Result<EncodedDocument> {
    let bags = DocumentBags::build(doc, pairs, space)?;
    Ok(encode_bags(&bags, params))
}

pub fn encode_bags(bags: &DocumentBags, params: &EncoderParams) -> EncodedDocument {
    let p = |b: &Bag| params.project(b).0;
    EncodedDocument {
        token_vectors: bags
            .tokens
            .iter()
            .map(|s| s.iter().map(p).collect())
            .collect(),
        event_vectors: bags.events.iter().map(p).collect(),
        sentence_vectors: bags.sentences.iter().map(p).collect(),
        statement_vectors: bags.statement_bags.iter().map(|s| p(&s.cls)).collect(),
        aspect_event_vectors: bags.statement_bags.iter().map(|s| p(&s.asp_event)).collect(),
        aspect_context_vectors: bags
            .statement_bags
            .iter()
            .map(|s| p(&s.asp_context))
            .collect(),
    }
}
