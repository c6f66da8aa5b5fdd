//! Informative phrase extraction over dependency trees.
//!
//! A phrase is the contiguous projection of the subtree under any token whose
//! relation label is in [`RETAINED_RELATIONS`]. Labels match exactly, so
//! subtypes outside the list (`obl:agent`, ...) are not retained.

use serde::{Deserialize, Serialize};

use crate::corpus::Token;

/// Dependency relations that carry event arguments.
pub const RETAINED_RELATIONS: [&str; 19] = [
    "nsubj",
    "nsubj:pass",
    "obj",
    "iobj",
    "csubj",
    "obl",
    "obl:loc",
    "obl:tmod",
    "obl:npmod",
    "dislocated",
    "advcl",
    "advmod",
    "appos",
    "acl",
    "acl:relcl",
    "conj",
    "list",
    "parataxis",
    "root",
];

pub fn role_index(label: &str) -> Option<usize> {
    RETAINED_RELATIONS.iter().position(|r| *r == label)
}

pub fn is_retained(label: &str) -> bool {
    role_index(label).is_some()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InformativePhrase {
    pub sentence_index: usize,
    /// Half-open range of 0-based token positions.
    pub start: usize,
    pub end: usize,
    /// Index into [`RETAINED_RELATIONS`].
    pub role: usize,
    /// 0-based position of the phrase's head token.
    pub root_token: usize,
}

impl InformativePhrase {
    pub fn role_label(&self) -> &'static str {
        RETAINED_RELATIONS[self.role]
    }

    pub fn contains(&self, position: usize) -> bool {
        (self.start..self.end).contains(&position)
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn surface(&self, sentence: &[Token]) -> String {
        sentence[self.start..self.end]
            .iter()
            .map(|t| t.form.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Children lists by 0-based position.
fn children(sentence: &[Token]) -> Vec<Vec<usize>> {
    let mut kids = vec![Vec::new(); sentence.len()];
    for (pos, tok) in sentence.iter().enumerate() {
        if tok.head > 0 {
            kids[tok.head - 1].push(pos);
        }
    }
    kids
}

/// (min, max, size) of the subtree rooted at `root`.
fn subtree_extent(kids: &[Vec<usize>], root: usize) -> (usize, usize, usize) {
    let (mut lo, mut hi, mut size) = (root, root, 0);
    let mut stack = vec![root];
    while let Some(n) = stack.pop() {
        lo = lo.min(n);
        hi = hi.max(n);
        size += 1;
        stack.extend_from_slice(&kids[n]);
    }
    (lo, hi, size)
}

pub fn extract_phrases(sentence: &[Token], sentence_index: usize) -> Vec<InformativePhrase> {
    let kids = children(sentence);
    let mut out: Vec<InformativePhrase> = sentence
        .iter()
        .enumerate()
        .filter(|(_, t)| t.head != 0 && t.deprel != "root")
        .filter_map(|(pos, t)| {
            let role = role_index(&t.deprel)?;
            let (lo, hi, _) = subtree_extent(&kids, pos);
            Some(InformativePhrase {
                sentence_index,
                start: lo,
                end: hi + 1,
                role,
                root_token: pos,
            })
        })
        .collect();
    // outer phrases first among equal starts
    out.sort_by(|x, y| {
        x.start
            .cmp(&y.start)
            .then(y.end.cmp(&x.end))
            .then(x.role.cmp(&y.role))
            .then(x.root_token.cmp(&y.root_token))
    });
    out.dedup_by(|x, y| x.start == y.start && x.end == y.end && x.role == y.role);
    out
}

/// Phrases whose subtree is not contiguous, so the span includes foreign tokens.
pub fn non_projective(phrases: &[InformativePhrase], sentence: &[Token]) -> Vec<usize> {
    let kids = children(sentence);
    phrases
        .iter()
        .enumerate()
        .filter(|(_, p)| subtree_extent(&kids, p.root_token).2 != p.len())
        .map(|(i, _)| i)
        .collect()
}

/// Unordered phrase pairs (i < j) linked by a dependency arc: the head of one
/// phrase's root token lies inside the other phrase.
pub fn phrase_edges(phrases: &[InformativePhrase], sentence: &[Token]) -> Vec<(usize, usize)> {
    let governs = |outer: &InformativePhrase, inner: &InformativePhrase| {
        let head = sentence[inner.root_token].head;
        head > 0 && outer.contains(head - 1)
    };
    let mut edges = Vec::new();
    for i in 0..phrases.len() {
        for j in i + 1..phrases.len() {
            if governs(&phrases[i], &phrases[j]) || governs(&phrases[j], &phrases[i]) {
                edges.push((i, j));
            }
        }
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sent(spec: &[(&str, usize, &str)]) -> Vec<Token> {
        spec.iter()
            .enumerate()
            .map(|(i, (f, h, r))| Token {
                index: i + 1,
                form: f.to_string(),
                head: *h,
                deprel: r.to_string(),
            })
            .collect()
    }

    #[test]
    fn nineteen_relations() {
        assert_eq!(RETAINED_RELATIONS.len(), 19);
        assert!(is_retained("obl:tmod"));
        assert!(!is_retained("obl:agent"));
        assert!(!is_retained("NSUBJ"));
    }

    #[test]
    fn function_words_only_yield_nothing() {
        let s = sent(&[("the", 2, "det"), ("x", 0, "root"), ("of", 2, "case"), (".", 2, "punct")]);
        assert!(extract_phrases(&s, 0).is_empty());
    }

    #[test]
    fn single_phrase_has_no_edges() {
        let s = sent(&[("rain", 2, "nsubj"), ("fell", 0, "root")]);
        let p = extract_phrases(&s, 0);
        assert_eq!(p.len(), 1);
        assert!(phrase_edges(&p, &s).is_empty());
    }

    #[test]
    fn siblings_under_an_outside_verb_are_not_linked() {
        // dogs chase cats
        let s = sent(&[("dogs", 2, "nsubj"), ("chase", 0, "root"), ("cats", 2, "obj")]);
        let p = extract_phrases(&s, 0);
        assert_eq!(p.len(), 2);
        assert!(phrase_edges(&p, &s).is_empty());
    }

    #[test]
    fn relative_clause_links_to_its_noun_phrase() {
        // the man who left slept
        let s = sent(&[
            ("the", 2, "det"),
            ("man", 5, "nsubj"),
            ("who", 4, "nsubj"),
            ("left", 2, "acl:relcl"),
            ("slept", 0, "root"),
        ]);
        let p = extract_phrases(&s, 0);
        let labels: Vec<_> = p.iter().map(|x| (x.role_label(), x.start, x.end)).collect();
        assert_eq!(
            labels,
            vec![("nsubj", 0, 4), ("acl:relcl", 2, 4), ("nsubj", 2, 3)]
        );
        let edges = phrase_edges(&p, &s);
        // relcl's root head ("man") lies in the outer nsubj phrase; "who" is
        // headed by "left" inside the relcl phrase; and "who" is inside the outer.
        assert_eq!(edges, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn non_projective_spans_are_flagged() {
        // a(root) b->d, c->a, d->a : subtree of d = {b, d}, span [1, 4) holds c
        let s = sent(&[("a", 0, "root"), ("b", 4, "det"), ("c", 1, "punct"), ("d", 1, "obj")]);
        let p = extract_phrases(&s, 0);
        assert_eq!((p[0].start, p[0].end), (1, 4));
        assert_eq!(non_projective(&p, &s), vec![0]);
    }
}
