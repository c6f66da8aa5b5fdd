//! Heterogeneous interaction graph over phrases, sentences, statements and
//! event pairs.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, PairKey};
use crate::encoder::EncodedDocument;
use crate::error::{GimcError, Result};
use crate::phrase::{extract_phrases, phrase_edges, InformativePhrase};
use crate::tensor::{add, concat, mean, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Phrase,
    Sentence,
    Statement,
    EventPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeKind {
    PP,
    SP,
    PE,
    SE,
    StE,
    EE,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 6] = [
        EdgeKind::PP,
        EdgeKind::SP,
        EdgeKind::PE,
        EdgeKind::SE,
        EdgeKind::StE,
        EdgeKind::EE,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EdgeKind::PP => "PP",
            EdgeKind::SP => "SP",
            EdgeKind::PE => "PE",
            EdgeKind::SE => "SE",
            EdgeKind::StE => "StE",
            EdgeKind::EE => "EE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub kind: NodeKind,
    /// Index into the phrase list, the sentence list, or the pair list.
    pub source_ref: usize,
}

/// Six sets of unordered node pairs, each stored as sorted `(low, high)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSets {
    pub pp: BTreeSet<(usize, usize)>,
    pub sp: BTreeSet<(usize, usize)>,
    pub pe: BTreeSet<(usize, usize)>,
    pub se: BTreeSet<(usize, usize)>,
    pub ste: BTreeSet<(usize, usize)>,
    pub ee: BTreeSet<(usize, usize)>,
}

impl EdgeSets {
    pub fn get(&self, kind: EdgeKind) -> &BTreeSet<(usize, usize)> {
        match kind {
            EdgeKind::PP => &self.pp,
            EdgeKind::SP => &self.sp,
            EdgeKind::PE => &self.pe,
            EdgeKind::SE => &self.se,
            EdgeKind::StE => &self.ste,
            EdgeKind::EE => &self.ee,
        }
    }

    fn get_mut(&mut self, kind: EdgeKind) -> &mut BTreeSet<(usize, usize)> {
        match kind {
            EdgeKind::PP => &mut self.pp,
            EdgeKind::SP => &mut self.sp,
            EdgeKind::PE => &mut self.pe,
            EdgeKind::SE => &mut self.se,
            EdgeKind::StE => &mut self.ste,
            EdgeKind::EE => &mut self.ee,
        }
    }

    fn insert(&mut self, kind: EdgeKind, x: usize, y: usize) {
        debug_assert_ne!(x, y);
        self.get_mut(kind).insert((x.min(y), x.max(y)));
    }
}

/// Node list and edge sets, independent of any parameter values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphLayout {
    pub nodes: Vec<GraphNode>,
    pub edges: EdgeSets,
    pub phrase_count: usize,
    pub sentence_count: usize,
    pub pair_count: usize,
}

impl GraphLayout {
    pub fn phrase_node(&self, i: usize) -> usize {
        i
    }

    pub fn sentence_node(&self, s: usize) -> usize {
        self.phrase_count + s
    }

    pub fn statement_node(&self, p: usize) -> usize {
        self.phrase_count + self.sentence_count + p
    }

    pub fn pair_node(&self, p: usize) -> usize {
        self.phrase_count + self.sentence_count + self.pair_count + p
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Undirected adjacency over all edge kinds plus a self-loop, sorted.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj: Vec<BTreeSet<usize>> = (0..self.len()).map(|i| BTreeSet::from([i])).collect();
        for kind in EdgeKind::ALL {
            for &(x, y) in self.edges.get(kind) {
                adj[x].insert(y);
                adj[y].insert(x);
            }
        }
        adj.into_iter().map(|s| s.into_iter().collect()).collect()
    }
}

/// All informative phrases of a document, sentence by sentence.
pub fn document_phrases(doc: &Document) -> Vec<InformativePhrase> {
    doc.sentences
        .iter()
        .enumerate()
        .flat_map(|(s, sent)| extract_phrases(sent, s))
        .collect()
}

pub fn layout(doc: &Document, phrases: &[InformativePhrase], pairs: &[PairKey]) -> Result<GraphLayout> {
    let mut g = GraphLayout {
        nodes: Vec::new(),
        edges: EdgeSets::default(),
        phrase_count: phrases.len(),
        sentence_count: doc.sentences.len(),
        pair_count: pairs.len(),
    };
    for (i, _) in phrases.iter().enumerate() {
        g.nodes.push(GraphNode {
            kind: NodeKind::Phrase,
            source_ref: i,
        });
    }
    for s in 0..doc.sentences.len() {
        g.nodes.push(GraphNode {
            kind: NodeKind::Sentence,
            source_ref: s,
        });
    }
    for kind in [NodeKind::Statement, NodeKind::EventPair] {
        for p in 0..pairs.len() {
            g.nodes.push(GraphNode { kind, source_ref: p });
        }
    }

    // PP within each sentence, SP to the owning sentence
    for s in 0..doc.sentences.len() {
        let members: Vec<usize> = (0..phrases.len())
            .filter(|&i| phrases[i].sentence_index == s)
            .collect();
        let local: Vec<InformativePhrase> = members.iter().map(|&i| phrases[i].clone()).collect();
        for (x, y) in phrase_edges(&local, &doc.sentences[s]) {
            g.edges.insert(EdgeKind::PP, members[x], members[y]);
        }
    }
    for (i, p) in phrases.iter().enumerate() {
        if p.sentence_index >= doc.sentences.len() {
            return Err(GimcError::schema(
                &doc.id,
                Some(p.sentence_index),
                "phrases",
                "phrase refers to a missing sentence",
            ));
        }
        g.edges
            .insert(EdgeKind::SP, g.phrase_node(i), g.sentence_node(p.sentence_index));
    }

    let mut pair_events = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let a = doc.event(&pair.a);
        let b = doc.event(&pair.b);
        match (a, b) {
            (Some(a), Some(b)) => pair_events.push([a, b]),
            _ => {
                return Err(GimcError::schema(
                    &doc.id,
                    None,
                    "events",
                    format!("pair {pair} references an unknown event"),
                ))
            }
        }
    }

    for (p, evs) in pair_events.iter().enumerate() {
        let pn = g.pair_node(p);
        for (i, ph) in phrases.iter().enumerate() {
            let touches = evs.iter().any(|e| {
                e.sentence_index == ph.sentence_index && e.start < ph.end && ph.start < e.end
            });
            if touches {
                g.edges.insert(EdgeKind::PE, g.phrase_node(i), pn);
            }
        }
        for s in evs.iter().map(|e| e.sentence_index).collect::<BTreeSet<_>>() {
            g.edges.insert(EdgeKind::SE, g.sentence_node(s), pn);
        }
        g.edges.insert(EdgeKind::StE, g.statement_node(p), pn);
    }
    for p in 0..pairs.len() {
        for q in p + 1..pairs.len() {
            if pairs[p].shares_event(&pairs[q]) {
                g.edges.insert(EdgeKind::EE, g.pair_node(p), g.pair_node(q));
            }
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    pub layout: GraphLayout,
    pub inits: Vec<Vec<f64>>,
}

/// Builds the graph with initial node vectors.
///
/// Phrase nodes start at the mean of their span's token vectors plus the role
/// embedding, sentence nodes at the sentence mean, statement nodes at the
/// statement vector and pair nodes at `W_v [e_a || e_b]`.
pub fn build_graph(
    doc: &Document,
    phrases: &[InformativePhrase],
    pairs: &[PairKey],
    encoded: &EncodedDocument,
    role_table: &Matrix,
    pair_proj: &Matrix,
) -> Result<HeteroGraph> {
    let layout = layout(doc, phrases, pairs)?;
    let dim = role_table.cols;
    let check = |what: &str, got: usize| {
        if got == dim {
            Ok(())
        } else {
            Err(GimcError::Dimension {
                what: what.to_string(),
                expected: dim,
                got,
            })
        }
    };
    if pair_proj.rows != dim || pair_proj.cols != 2 * dim {
        return Err(GimcError::Dimension {
            what: "pair projection columns".into(),
            expected: 2 * dim,
            got: pair_proj.cols,
        });
    }
    if encoded.statement_vectors.len() != pairs.len() {
        return Err(GimcError::Dimension {
            what: "statement vectors".into(),
            expected: pairs.len(),
            got: encoded.statement_vectors.len(),
        });
    }
    let mut inits = Vec::with_capacity(layout.len());
    for ph in phrases {
        let toks = &encoded.token_vectors[ph.sentence_index][ph.start..ph.end];
        let m = mean(toks.iter().map(Vec::as_slice), dim).expect("non-empty phrase");
        check("phrase init", m.len())?;
        inits.push(add(&m, role_table.row(ph.role)));
    }
    for v in &encoded.sentence_vectors {
        check("sentence vector", v.len())?;
        inits.push(v.clone());
    }
    for v in &encoded.statement_vectors {
        check("statement vector", v.len())?;
        inits.push(v.clone());
    }
    for pair in pairs {
        let a = doc.event_index(&pair.a).expect("checked by layout");
        let b = doc.event_index(&pair.b).expect("checked by layout");
        let ea = &encoded.event_vectors[a];
        let eb = &encoded.event_vectors[b];
        check("event vector", ea.len())?;
        inits.push(pair_proj.matvec(&concat(ea, eb)));
    }
    Ok(HeteroGraph { layout, inits })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub phrases: usize,
    pub sentences: usize,
    pub statements: usize,
    pub pairs: usize,
    #[serde(rename = "PP")]
    pub pp: usize,
    #[serde(rename = "SP")]
    pub sp: usize,
    #[serde(rename = "PE")]
    pub pe: usize,
    #[serde(rename = "SE")]
    pub se: usize,
    #[serde(rename = "StE")]
    pub ste: usize,
    #[serde(rename = "EE")]
    pub ee: usize,
}

pub fn graph_stats(g: &GraphLayout) -> GraphStats {
    let count = |k| g.nodes.iter().filter(|n| n.kind == k).count();
    GraphStats {
        phrases: count(NodeKind::Phrase),
        sentences: count(NodeKind::Sentence),
        statements: count(NodeKind::Statement),
        pairs: count(NodeKind::EventPair),
        pp: g.edges.pp.len(),
        sp: g.edges.sp.len(),
        pe: g.edges.pe.len(),
        se: g.edges.se.len(),
        ste: g.edges.ste.len(),
        ee: g.edges.ee.len(),
    }
}
