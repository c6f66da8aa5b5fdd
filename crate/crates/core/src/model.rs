//! Full model: encoder projection, graph node initialization, GATv2 stack,
//! pair classifier and contrastive objectives, with one exact backward pass.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contrastive::{
    loss_aspect_context, loss_aspect_event, loss_statement, AnchorSet, ContrastiveConfig,
    SampleVectors,
};
use crate::corpus::{candidate_pairs, Document, PairKey};
use crate::encoder::{
    toy_statement_bags, Bag, DocumentBags, EncoderMode, EncoderParams, InputSpace, StatementBags,
};
use crate::error::{GimcError, Result};
use crate::gat::{stack_backward, stack_forward, GatStack, DEFAULT_LEAKY_SLOPE};
use crate::graph::{document_phrases, layout, GraphLayout};
use crate::phrase::{InformativePhrase, RETAINED_RELATIONS};
use crate::tensor::{axpy, concat, softmax, Matrix};

/// Which statement representation the pair classifier reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatementSource {
    /// The statement node after message passing.
    PostGraph,
    /// The encoder's statement vector before the graph.
    PreGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mode: EncoderMode,
    pub dim_in: usize,
    pub dim: usize,
    pub hash_buckets: usize,
    pub layers: usize,
    pub heads: usize,
    pub leaky_slope: f64,
    pub statement_source: StatementSource,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            mode: EncoderMode::Toy,
            dim_in: 64,
            dim: 64,
            hash_buckets: 4096,
            layers: 3,
            heads: 4,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            statement_source: StatementSource::PostGraph,
        }
    }
}

/// Probability columns of the classifier output.
pub const CAUSAL: usize = 0;
pub const NONE: usize = 1;

const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub encoder: EncoderParams,
    /// Role embeddings, one row per retained relation.
    pub roles: Matrix,
    /// `W_v`, maps `[e_a || e_b]` to the pair node's initial vector.
    pub pair_proj: Matrix,
    pub gat: GatStack,
    /// `W_p`, 2 × 2d.
    pub classifier: Matrix,
}

impl ModelParams {
    /// Weight matrices use Uniform(±1/√fan_in); embedding tables use N(0, 0.02²).
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        if config.dim == 0 || config.dim_in == 0 || config.layers == 0 {
            return Err(GimcError::Config("model sizes must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = match config.mode {
            EncoderMode::Toy => config.hash_buckets,
            EncoderMode::Cache => 0,
        };
        let embed = Matrix::normal(rows, config.dim_in, 0.02, &mut rng);
        let proj = Matrix::fan_in_uniform(config.dim, config.dim_in, &mut rng);
        let roles = Matrix::normal(RETAINED_RELATIONS.len(), config.dim, 0.02, &mut rng);
        let pair_proj = Matrix::fan_in_uniform(config.dim, 2 * config.dim, &mut rng);
        let gat = GatStack::init(
            config.layers,
            config.heads,
            config.dim,
            config.leaky_slope,
            &mut rng,
        )?;
        let classifier = Matrix::fan_in_uniform(2, 2 * config.dim, &mut rng);
        Ok(ModelParams {
            config: config.clone(),
            encoder: EncoderParams { embed, proj },
            roles,
            pair_proj,
            gat,
            classifier,
        })
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            config: self.config.clone(),
            encoder: EncoderParams {
                embed: self.encoder.embed.zeros_like(),
                proj: self.encoder.proj.zeros_like(),
            },
            roles: self.roles.zeros_like(),
            pair_proj: self.pair_proj.zeros_like(),
            gat: self.gat.zeros_like(),
            classifier: self.classifier.zeros_like(),
        }
    }

    pub fn named(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![
            ("encoder.embed".to_string(), &self.encoder.embed),
            ("encoder.proj".to_string(), &self.encoder.proj),
            ("roles".to_string(), &self.roles),
            ("pair_proj".to_string(), &self.pair_proj),
        ];
        out.extend(self.gat.named());
        out.push(("classifier".to_string(), &self.classifier));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = vec![
            ("encoder.embed".to_string(), &mut self.encoder.embed),
            ("encoder.proj".to_string(), &mut self.encoder.proj),
            ("roles".to_string(), &mut self.roles),
            ("pair_proj".to_string(), &mut self.pair_proj),
        ];
        out.extend(self.gat.named_mut());
        out.push(("classifier".to_string(), &mut self.classifier));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named().iter().map(|(_, m)| m.data.len()).sum()
    }
}

/// `softmax(W_p [v_pair || h_stmt])`, ordered (causal, none).
pub fn predict_pair(classifier: &Matrix, v_pair: &[f64], h_stmt: &[f64]) -> [f64; 2] {
    let z = classifier.matvec(&concat(v_pair, h_stmt));
    let p = softmax(&z);
    [p[CAUSAL], p[NONE]]
}

/// Cross entropy summed over pairs with gradients with respect to the logits.
/// The log is clamped at 1e-12, where its gradient is zero.
pub fn loss_classification(probs: &[[f64; 2]], causal: &[bool]) -> (f64, Vec<[f64; 2]>) {
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(probs.len());
    for (p, &y) in probs.iter().zip(causal) {
        let gold = if y { CAUSAL } else { NONE };
        let pg = p[gold];
        if pg >= LOG_FLOOR {
            loss -= pg.ln();
            let mut g = *p;
            g[gold] -= 1.0;
            grads.push(g);
        } else {
            loss -= LOG_FLOOR.ln();
            grads.push([0.0, 0.0]);
        }
    }
    (loss, grads)
}

/// Everything about a document that does not depend on parameter values.
#[derive(Debug, Clone)]
pub struct DocumentPlan {
    pub doc_id: String,
    pub language: String,
    pub pairs: Vec<PairKey>,
    pub causal: Vec<bool>,
    pub phrases: Vec<InformativePhrase>,
    pub layout: GraphLayout,
    pub neighbors: Vec<Vec<usize>>,
    pub bags: DocumentBags,
    pub phrase_bags: Vec<Bag>,
    /// Event indices of each pair.
    pub pair_events: Vec<(usize, usize)>,
    pub dim_in: usize,
}

pub fn plan_document(doc: &Document, space: &InputSpace<'_>) -> Result<DocumentPlan> {
    let candidates = candidate_pairs(doc);
    let pairs: Vec<PairKey> = candidates.iter().map(|c| c.key.clone()).collect();
    let causal = candidates.iter().map(|c| c.causal).collect();
    let phrases = document_phrases(doc);
    let layout = layout(doc, &phrases, &pairs)?;
    let neighbors = layout.neighbors();
    let bags = DocumentBags::build(doc, &pairs, space)?;
    let dim_in = space.dim_in();
    let phrase_bags = phrases
        .iter()
        .map(|p| bags.span_bag(p.sentence_index, p.start, p.end, dim_in))
        .collect();
    let pair_events = pairs
        .iter()
        .map(|p| {
            (
                doc.event_index(&p.a).expect("candidate pairs use known events"),
                doc.event_index(&p.b).expect("candidate pairs use known events"),
            )
        })
        .collect();
    Ok(DocumentPlan {
        doc_id: doc.id.clone(),
        language: doc.language.clone(),
        pairs,
        causal,
        phrases,
        layout,
        neighbors,
        bags,
        phrase_bags,
        pair_events,
        dim_in,
    })
}

/// Bags of an anchor set's samples, ready for the encoder.
#[derive(Debug, Clone)]
pub struct AnchorBags {
    pub anchor_index: usize,
    pub positives: Vec<StatementBags>,
    pub negatives: Vec<StatementBags>,
}

pub fn anchor_bags(set: &AnchorSet, config: &ModelConfig) -> Result<AnchorBags> {
    if config.mode != EncoderMode::Toy {
        return Err(GimcError::Config(
            "code-switched samples need the toy encoder".into(),
        ));
    }
    let bag = |s: &crate::contrastive::StatementSample| {
        toy_statement_bags(&s.forms, &s.event_spans, config.hash_buckets, config.dim_in)
    };
    Ok(AnchorBags {
        anchor_index: set.anchor_index,
        positives: set.positives.iter().map(bag).collect::<Result<_>>()?,
        negatives: set.negatives.iter().map(bag).collect::<Result<_>>()?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub classification: f64,
    pub statement: f64,
    pub aspect_event: f64,
    pub aspect_context: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            classification: 1.0,
            statement: 1.0,
            aspect_event: 1.0,
            aspect_context: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub classification: f64,
    pub statement: f64,
    pub aspect_event: f64,
    pub aspect_context: f64,
    pub total: f64,
}

struct Projected {
    x: Vec<f64>,
    u: Vec<f64>,
}

fn project(enc: &EncoderParams, bag: &Bag) -> Projected {
    let (x, u) = enc.project(bag);
    Projected { x, u }
}

struct NodeInputs {
    inits: Vec<Vec<f64>>,
    /// Encoder outputs behind each node: phrases, sentences, statements use
    /// one entry, pairs two (events a and b).
    parts: Vec<Vec<Projected>>,
}

fn node_inputs(params: &ModelParams, plan: &DocumentPlan) -> NodeInputs {
    let enc = &params.encoder;
    let mut inits = Vec::with_capacity(plan.layout.len());
    let mut parts = Vec::with_capacity(plan.layout.len());
    for (ph, bag) in plan.phrases.iter().zip(&plan.phrase_bags) {
        let p = project(enc, bag);
        let mut init = p.x.clone();
        axpy(&mut init, 1.0, params.roles.row(ph.role));
        inits.push(init);
        parts.push(vec![p]);
    }
    for bag in &plan.bags.sentences {
        let p = project(enc, bag);
        inits.push(p.x.clone());
        parts.push(vec![p]);
    }
    for sb in &plan.bags.statement_bags {
        let p = project(enc, &sb.cls);
        inits.push(p.x.clone());
        parts.push(vec![p]);
    }
    for &(a, b) in &plan.pair_events {
        let pa = project(enc, &plan.bags.events[a]);
        let pb = project(enc, &plan.bags.events[b]);
        inits.push(params.pair_proj.matvec(&concat(&pa.x, &pb.x)));
        parts.push(vec![pa, pb]);
    }
    NodeInputs { inits, parts }
}

/// Class probabilities for every candidate pair of the plan.
pub fn predict(params: &ModelParams, plan: &DocumentPlan) -> Vec<[f64; 2]> {
    let nodes = node_inputs(params, plan);
    let trace = stack_forward(&plan.neighbors, &nodes.inits, &params.gat);
    (0..plan.pairs.len())
        .map(|p| {
            let v = &trace.output[plan.layout.pair_node(p)];
            let h = statement_repr(params, plan, &nodes.inits, &trace.output, p);
            predict_pair(&params.classifier, v, h)
        })
        .collect()
}

/// LeakyReLU input signs of the whole stack; a change between two parameter
/// settings means a kink lies between them.
pub fn activation_signs(params: &ModelParams, plan: &DocumentPlan) -> Vec<bool> {
    let nodes = node_inputs(params, plan);
    let trace = stack_forward(&plan.neighbors, &nodes.inits, &params.gat);
    trace
        .caches
        .iter()
        .flat_map(|c| c.activation_signs())
        .collect()
}

fn statement_repr<'a>(
    params: &ModelParams,
    plan: &DocumentPlan,
    inits: &'a [Vec<f64>],
    output: &'a [Vec<f64>],
    p: usize,
) -> &'a [f64] {
    let node = plan.layout.statement_node(p);
    match params.config.statement_source {
        StatementSource::PostGraph => &output[node],
        StatementSource::PreGraph => &inits[node],
    }
}

struct SampleProjections {
    cls: Projected,
    asp_event: Projected,
    asp_context: Projected,
}

fn project_sample(enc: &EncoderParams, bags: &StatementBags) -> SampleProjections {
    SampleProjections {
        cls: project(enc, &bags.cls),
        asp_event: project(enc, &bags.asp_event),
        asp_context: project(enc, &bags.asp_context),
    }
}

fn vectors(s: &SampleProjections) -> SampleVectors {
    SampleVectors {
        cls: s.cls.x.clone(),
        asp_event: s.asp_event.x.clone(),
        asp_context: s.asp_context.x.clone(),
    }
}

/// Total objective of one document and, when `grads` is given, its exact gradient.
pub fn loss_and_grad(
    params: &ModelParams,
    plan: &DocumentPlan,
    anchors: &[AnchorBags],
    contrastive: &ContrastiveConfig,
    weights: &LossWeights,
    mut grads: Option<&mut ModelParams>,
) -> Result<LossBreakdown> {
    let nodes = node_inputs(params, plan);
    let trace = stack_forward(&plan.neighbors, &nodes.inits, &params.gat);
    let dim = params.config.dim;
    let n = plan.layout.len();

    let mut probs = Vec::with_capacity(plan.pairs.len());
    for p in 0..plan.pairs.len() {
        let v = &trace.output[plan.layout.pair_node(p)];
        let h = statement_repr(params, plan, &nodes.inits, &trace.output, p);
        probs.push(predict_pair(&params.classifier, v, h));
    }
    let (lc, dlogits) = loss_classification(&probs, &plan.causal);

    let mut out = LossBreakdown {
        classification: lc,
        ..Default::default()
    };

    let mut d_output = vec![vec![0.0; dim]; n];
    let mut d_init = vec![vec![0.0; dim]; n];

    if let Some(g) = grads.as_deref_mut() {
        for (p, dz) in dlogits.iter().enumerate() {
            let dz: Vec<f64> = dz.iter().map(|x| x * weights.classification).collect();
            let v = &trace.output[plan.layout.pair_node(p)];
            let h = statement_repr(params, plan, &nodes.inits, &trace.output, p);
            let input = concat(v, h);
            g.classifier.add_outer(&dz, &input, 1.0);
            let dinput = params.classifier.matvec_t(&dz);
            axpy(&mut d_output[plan.layout.pair_node(p)], 1.0, &dinput[..dim]);
            let sn = plan.layout.statement_node(p);
            match params.config.statement_source {
                StatementSource::PostGraph => axpy(&mut d_output[sn], 1.0, &dinput[dim..]),
                StatementSource::PreGraph => axpy(&mut d_init[sn], 1.0, &dinput[dim..]),
            }
        }
    }

    // contrastive terms on pre-graph encoder vectors
    let mut sample_grads: Vec<(SampleProjections, [Vec<f64>; 3])> = Vec::new();
    for set in anchors {
        let anchor_node = plan.layout.statement_node(set.anchor_index);
        let q = &nodes.inits[anchor_node];
        let pos: Vec<SampleProjections> = set
            .positives
            .iter()
            .map(|b| project_sample(&params.encoder, b))
            .collect();
        let neg: Vec<SampleProjections> = set
            .negatives
            .iter()
            .map(|b| project_sample(&params.encoder, b))
            .collect();
        let pv: Vec<SampleVectors> = pos.iter().map(vectors).collect();
        let nv: Vec<SampleVectors> = neg.iter().map(vectors).collect();
        let ls = loss_statement(q, &pv, &nv, contrastive)?;
        let le = loss_aspect_event(q, &pv, &nv, contrastive)?;
        let lx = loss_aspect_context(q, &pv, &nv, contrastive)?;
        out.statement += ls.loss;
        out.aspect_event += le.loss;
        out.aspect_context += lx.loss;
        if grads.is_none() {
            continue;
        }
        let wts = [weights.statement, weights.aspect_event, weights.aspect_context];
        for (lg, w) in [&ls, &le, &lx].iter().zip(wts) {
            axpy(&mut d_init[anchor_node], w, &lg.d_anchor);
        }
        let all = [&ls, &le, &lx];
        for (i, s) in pos.into_iter().enumerate() {
            let g = [0, 1, 2].map(|v| scaled(&all[v].d_positives[i], wts[v]));
            sample_grads.push((s, g));
        }
        for (i, s) in neg.into_iter().enumerate() {
            let g = [0, 1, 2].map(|v| scaled(&all[v].d_negatives[i], wts[v]));
            sample_grads.push((s, g));
        }
    }

    out.total = weights.classification * out.classification
        + weights.statement * out.statement
        + weights.aspect_event * out.aspect_event
        + weights.aspect_context * out.aspect_context;

    let Some(g) = grads else {
        return Ok(out);
    };

    let d_from_graph = stack_backward(&plan.neighbors, &params.gat, &trace, &d_output, &mut g.gat)?;
    for (d, extra) in d_init.iter_mut().zip(&d_from_graph) {
        axpy(d, 1.0, extra);
    }

    let enc = &params.encoder;
    let lay = &plan.layout;
    for (i, ph) in plan.phrases.iter().enumerate() {
        let gi = &d_init[lay.phrase_node(i)];
        axpy(g.roles.row_mut(ph.role), 1.0, gi);
        let p = &nodes.parts[lay.phrase_node(i)][0];
        enc.backprop(&mut g.encoder, &plan.phrase_bags[i], &p.u, gi);
    }
    for (s, bag) in plan.bags.sentences.iter().enumerate() {
        let node = lay.sentence_node(s);
        enc.backprop(&mut g.encoder, bag, &nodes.parts[node][0].u, &d_init[node]);
    }
    for (p, sb) in plan.bags.statement_bags.iter().enumerate() {
        let node = lay.statement_node(p);
        enc.backprop(&mut g.encoder, &sb.cls, &nodes.parts[node][0].u, &d_init[node]);
    }
    for (p, &(a, b)) in plan.pair_events.iter().enumerate() {
        let node = lay.pair_node(p);
        let parts = &nodes.parts[node];
        let gi = &d_init[node];
        g.pair_proj.add_outer(gi, &concat(&parts[0].x, &parts[1].x), 1.0);
        let de = params.pair_proj.matvec_t(gi);
        enc.backprop(&mut g.encoder, &plan.bags.events[a], &parts[0].u, &de[..dim]);
        enc.backprop(&mut g.encoder, &plan.bags.events[b], &parts[1].u, &de[dim..]);
    }
    backprop_samples(params, anchors, &sample_grads, g);
    Ok(out)
}

fn scaled(v: &[f64], w: f64) -> Vec<f64> {
    v.iter().map(|x| x * w).collect()
}

fn backprop_samples(
    params: &ModelParams,
    anchors: &[AnchorBags],
    sample_grads: &[(SampleProjections, [Vec<f64>; 3])],
    g: &mut ModelParams,
) {
    let bags = anchors
        .iter()
        .flat_map(|a| a.positives.iter().chain(a.negatives.iter()));
    for (b, (s, [gc, ge, gx])) in bags.zip(sample_grads) {
        params.encoder.backprop(&mut g.encoder, &b.cls, &s.cls.u, gc);
        params.encoder.backprop(&mut g.encoder, &b.asp_event, &s.asp_event.u, ge);
        params.encoder.backprop(&mut g.encoder, &b.asp_context, &s.asp_context.u, gx);
    }
}
