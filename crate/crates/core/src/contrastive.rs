//! Code-switched positives, same-document negatives and the three contrastive
//! losses between an anchor statement and its samples.
//!
//! Each loss has the form
//!
//! ```text
//! L = -Σ_j log( s(q, p_j) / (s(q, p_j) + Σ_k s(q, n_k)) )
//! ```
//!
//! where `q` is the anchor's statement vector and `p_j`, `n_k` are the
//! statement, event-aspect or context-aspect vectors of the positives and
//! negatives. By default `s(u, v) = exp(cos(u, v) / τ)`; the raw-dot variant
//! uses the plain dot product and refuses non-positive similarities.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{BilingualDictionary, Document, PairKey};
use crate::encoder::{fnv1a, Statement};
use crate::error::{GimcError, Result};
use crate::phrase::InformativePhrase;
use crate::tensor::{axpy, dot, norm, softmax};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub n_positives: usize,
    pub k_negatives: usize,
    pub temperature: f64,
    pub normalize: bool,
    pub raw_dot: bool,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            n_positives: 2,
            k_negatives: 4,
            temperature: 1.0,
            normalize: true,
            raw_dot: false,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(GimcError::Config("temperature must be positive".into()));
        }
        if self.n_positives == 0 || self.k_negatives == 0 {
            return Err(GimcError::Config(
                "at least one positive and one negative are required".into(),
            ));
        }
        Ok(())
    }
}

/// Per-document generator, derived as `seed ^ hash(doc id)` and mixed with the epoch.
pub fn document_rng(seed: u64, doc_id: &str, epoch: u64) -> ChaCha8Rng {
    let mixed = seed ^ fnv1a(doc_id.as_bytes()) ^ epoch.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Replaces each word by a uniformly chosen translation; unknown words stay.
pub fn code_switch_phrase<R: Rng + ?Sized>(
    tokens: &[String],
    dict: &BilingualDictionary,
    rng: &mut R,
) -> Vec<String> {
    tokens
        .iter()
        .map(|w| match dict.lookup(w) {
            Some(ts) if !ts.is_empty() => ts[rng.random_range(0..ts.len())].clone(),
            _ => w.clone(),
        })
        .collect()
}

/// Switches every phrase of a token sequence, each phrase with one randomly
/// chosen dictionary. A token covered by several phrases is switched once, by
/// the first phrase that reaches it.
pub fn switch_phrases<R: Rng + ?Sized>(
    forms: &[String],
    phrase_spans: &[(usize, usize)],
    dicts: &[BilingualDictionary],
    rng: &mut R,
) -> Result<Vec<String>> {
    if dicts.is_empty() {
        return Err(GimcError::NoDictionaries);
    }
    let mut out = forms.to_vec();
    let mut done = vec![false; forms.len()];
    for &(s, e) in phrase_spans {
        let dict = &dicts[rng.random_range(0..dicts.len())];
        for p in s..e {
            if done[p] {
                continue;
            }
            done[p] = true;
            if let Some(ts) = dict.lookup(&forms[p]) {
                if !ts.is_empty() {
                    out[p] = ts[rng.random_range(0..ts.len())].clone();
                }
            }
        }
    }
    Ok(out)
}

/// A statement as seen by the contrastive module: surface forms plus the two
/// event spans, possibly code-switched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementSample {
    pub pair: PairKey,
    pub forms: Vec<String>,
    pub event_spans: Vec<(usize, usize)>,
    pub switched: bool,
}

impl StatementSample {
    pub fn original(stmt: &Statement) -> Self {
        StatementSample {
            pair: stmt.pair.clone(),
            forms: stmt.forms.clone(),
            event_spans: stmt.event_spans.clone(),
            switched: false,
        }
    }
}

/// Spans of the document's phrases re-indexed into a statement.
pub fn statement_phrase_spans(stmt: &Statement, phrases: &[InformativePhrase]) -> Vec<(usize, usize)> {
    let mut offset = 0;
    let mut spans = Vec::new();
    for &s in &stmt.sentences {
        for p in phrases.iter().filter(|p| p.sentence_index == s) {
            spans.push((p.start + offset, p.end + offset));
        }
        offset += stmt.origin.iter().filter(|o| o.0 == s).count();
    }
    spans
}

pub fn generate_positives<R: Rng + ?Sized>(
    anchor: &Statement,
    phrase_spans: &[(usize, usize)],
    dicts: &[BilingualDictionary],
    config: &ContrastiveConfig,
    rng: &mut R,
) -> Result<Vec<StatementSample>> {
    if dicts.is_empty() {
        return Err(GimcError::NoDictionaries);
    }
    (0..config.n_positives)
        .map(|_| {
            Ok(StatementSample {
                pair: anchor.pair.clone(),
                forms: switch_phrases(&anchor.forms, phrase_spans, dicts, rng)?,
                event_spans: anchor.event_spans.clone(),
                switched: true,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum NegativeSelection {
    Selected(Vec<StatementSample>),
    /// No non-causal statement avoids the anchor's text; the anchor is skipped.
    NoEligible,
}

/// Draws `k_negatives` non-causal statements whose sentences are disjoint from
/// the anchor's, topping up with code-switched copies when too few exist.
pub fn select_negatives<R: Rng + ?Sized>(
    statements: &[Statement],
    causal: &[bool],
    anchor: usize,
    phrases: &[InformativePhrase],
    dicts: &[BilingualDictionary],
    config: &ContrastiveConfig,
    rng: &mut R,
) -> Result<NegativeSelection> {
    let eligible: Vec<usize> = (0..statements.len())
        .filter(|&i| !causal[i] && !statements[i].overlaps(&statements[anchor]))
        .collect();
    if eligible.is_empty() {
        return Ok(NegativeSelection::NoEligible);
    }
    let mut picked: Vec<usize> = eligible
        .choose_multiple(rng, config.k_negatives.min(eligible.len()))
        .copied()
        .collect();
    picked.sort_unstable();
    let mut out: Vec<StatementSample> = picked
        .iter()
        .map(|&i| StatementSample::original(&statements[i]))
        .collect();
    let m = out.len();
    let mut i = 0;
    while out.len() < config.k_negatives {
        let src = &statements[picked[i % m]];
        let spans = statement_phrase_spans(src, phrases);
        out.push(StatementSample {
            pair: src.pair.clone(),
            forms: switch_phrases(&src.forms, &spans, dicts, rng)?,
            event_spans: src.event_spans.clone(),
            switched: true,
        });
        i += 1;
    }
    Ok(NegativeSelection::Selected(out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    /// Index of the anchor pair among the document's candidate pairs.
    pub anchor_index: usize,
    pub anchor: StatementSample,
    pub positives: Vec<StatementSample>,
    pub negatives: Vec<StatementSample>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnchorBatch {
    pub sets: Vec<AnchorSet>,
    /// Causal statements with no eligible negative.
    pub skipped: Vec<PairKey>,
}

/// Anchor sets for every gold-causal statement of a document.
pub fn build_anchor_sets<R: Rng + ?Sized>(
    doc: &Document,
    statements: &[Statement],
    causal: &[bool],
    phrases: &[InformativePhrase],
    dicts: &[BilingualDictionary],
    config: &ContrastiveConfig,
    rng: &mut R,
) -> Result<AnchorBatch> {
    config.validate()?;
    let mut batch = AnchorBatch::default();
    for (i, stmt) in statements.iter().enumerate() {
        if !causal[i] {
            continue;
        }
        let negatives = match select_negatives(statements, causal, i, phrases, dicts, config, rng)? {
            NegativeSelection::Selected(n) => n,
            NegativeSelection::NoEligible => {
                log::debug!("{}: anchor {} has no eligible negatives", doc.id, stmt.pair);
                batch.skipped.push(stmt.pair.clone());
                continue;
            }
        };
        let spans = statement_phrase_spans(stmt, phrases);
        let positives = generate_positives(stmt, &spans, dicts, config, rng)?;
        batch.sets.push(AnchorSet {
            anchor_index: i,
            anchor: StatementSample::original(stmt),
            positives,
            negatives,
        });
    }
    Ok(batch)
}

/// `exp(cos(u, v) / τ)`, or the plain dot product in raw-dot mode.
pub fn sim(u: &[f64], v: &[f64], config: &ContrastiveConfig) -> Result<f64> {
    let (z, _, _) = logit(u, v, config)?;
    Ok(if config.raw_dot { z } else { z.exp() })
}

/// The similarity's inner term with its gradients: `cos/τ` (or `u·v/τ`) in the
/// exponential form, the dot product itself in raw-dot mode.
fn logit(u: &[f64], v: &[f64], config: &ContrastiveConfig) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if u.len() != v.len() {
        return Err(GimcError::Dimension {
            what: "similarity operands".into(),
            expected: u.len(),
            got: v.len(),
        });
    }
    let scale = if config.raw_dot { 1.0 } else { 1.0 / config.temperature };
    if !config.normalize {
        let z = dot(u, v) * scale;
        return Ok((
            z,
            v.iter().map(|x| x * scale).collect(),
            u.iter().map(|x| x * scale).collect(),
        ));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(GimcError::Numeric(
            "cannot normalize a zero vector for cosine similarity".into(),
        ));
    }
    let c = dot(u, v) / (nu * nv);
    let du = u
        .iter()
        .zip(v)
        .map(|(ui, vi)| scale * (vi / (nu * nv) - c * ui / (nu * nu)))
        .collect();
    let dv = u
        .iter()
        .zip(v)
        .map(|(ui, vi)| scale * (ui / (nu * nv) - c * vi / (nv * nv)))
        .collect();
    Ok((c * scale, du, dv))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub d_anchor: Vec<f64>,
    pub d_positives: Vec<Vec<f64>>,
    pub d_negatives: Vec<Vec<f64>>,
}

/// The contrastive loss of one anchor against its positives and negatives.
pub fn contrastive_loss(
    anchor: &[f64],
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    config: &ContrastiveConfig,
) -> Result<LossGrad> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(GimcError::Config(
            "contrastive loss needs at least one positive and one negative".into(),
        ));
    }
    let pos: Vec<_> = positives
        .iter()
        .map(|p| logit(anchor, p, config))
        .collect::<Result<_>>()?;
    let neg: Vec<_> = negatives
        .iter()
        .map(|n| logit(anchor, n, config))
        .collect::<Result<_>>()?;

    // dL/d(logit) for every positive and negative
    let mut g_pos = vec![0.0; pos.len()];
    let mut g_neg = vec![0.0; neg.len()];
    let mut loss = 0.0;
    if config.raw_dot {
        if let Some(bad) = pos.iter().chain(&neg).find(|t| !(t.0 > 0.0)) {
            return Err(GimcError::Numeric(format!(
                "raw dot-product similarity {} is not positive",
                bad.0
            )));
        }
        let neg_sum: f64 = neg.iter().map(|t| t.0).sum();
        for (j, p) in pos.iter().enumerate() {
            let denom = p.0 + neg_sum;
            loss += -(p.0 / denom).ln();
            g_pos[j] = -1.0 / p.0 + 1.0 / denom;
            for g in g_neg.iter_mut() {
                *g += 1.0 / denom;
            }
        }
    } else {
        for (j, p) in pos.iter().enumerate() {
            let mut logits = Vec::with_capacity(neg.len() + 1);
            logits.push(p.0);
            logits.extend(neg.iter().map(|t| t.0));
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            loss += lse - p.0;
            let pi = softmax(&logits);
            g_pos[j] = pi[0] - 1.0;
            for (g, w) in g_neg.iter_mut().zip(&pi[1..]) {
                *g += w;
            }
        }
    }

    let mut d_anchor = vec![0.0; anchor.len()];
    let d_positives = pos
        .iter()
        .zip(&g_pos)
        .map(|((_, du, dv), g)| {
            axpy(&mut d_anchor, *g, du);
            dv.iter().map(|x| x * g).collect()
        })
        .collect();
    let d_negatives = neg
        .iter()
        .zip(&g_neg)
        .map(|((_, du, dv), g)| {
            axpy(&mut d_anchor, *g, du);
            dv.iter().map(|x| x * g).collect()
        })
        .collect();
    Ok(LossGrad {
        loss,
        d_anchor,
        d_positives,
        d_negatives,
    })
}

/// Encoded vectors of one statement sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleVectors {
    pub cls: Vec<f64>,
    pub asp_event: Vec<f64>,
    pub asp_context: Vec<f64>,
}

/// Statement-level loss: anchor against the positives' and negatives' statement vectors.
pub fn loss_statement(
    anchor: &[f64],
    positives: &[SampleVectors],
    negatives: &[SampleVectors],
    config: &ContrastiveConfig,
) -> Result<LossGrad> {
    view_loss(anchor, positives, negatives, config, |s| &s.cls)
}

/// Event-aspect loss: anchor statement vector against event-pair views.
pub fn loss_aspect_event(
    anchor: &[f64],
    positives: &[SampleVectors],
    negatives: &[SampleVectors],
    config: &ContrastiveConfig,
) -> Result<LossGrad> {
    view_loss(anchor, positives, negatives, config, |s| &s.asp_event)
}

/// Context-aspect loss: anchor statement vector against event-masked views.
pub fn loss_aspect_context(
    anchor: &[f64],
    positives: &[SampleVectors],
    negatives: &[SampleVectors],
    config: &ContrastiveConfig,
) -> Result<LossGrad> {
    view_loss(anchor, positives, negatives, config, |s| &s.asp_context)
}

fn view_loss(
    anchor: &[f64],
    positives: &[SampleVectors],
    negatives: &[SampleVectors],
    config: &ContrastiveConfig,
    view: impl Fn(&SampleVectors) -> &Vec<f64>,
) -> Result<LossGrad> {
    let p: Vec<Vec<f64>> = positives.iter().map(|s| view(s).clone()).collect();
    let n: Vec<Vec<f64>> = negatives.iter().map(|s| view(s).clone()).collect();
    contrastive_loss(anchor, &p, &n, config)
}
