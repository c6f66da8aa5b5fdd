use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contrastive::{build_anchor_sets, document_rng, ContrastiveConfig};
use crate::corpus::{BilingualDictionary, Document};
use crate::encoder::{EmbeddingCache, EncoderMode, InputSpace};
use crate::error::{GimcError, Result};
use crate::eval::{confusion, prf1, MetricsReport};
use crate::model::{
    anchor_bags, loss_and_grad, plan_document, predict, AnchorBags, DocumentPlan, LossBreakdown,
    LossWeights, ModelConfig, ModelParams,
};
use crate::optim::{lr_schedule, AdamW, AdamWConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub optim: AdamWConfig,
    pub epochs: usize,
    pub seed: u64,
    pub contrastive: ContrastiveConfig,
    pub contrastive_enabled: bool,
    pub weights: LossWeights,
    /// Global gradient-norm clip; off when `None`.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            optim: AdamWConfig::default(),
            epochs: 60,
            seed: 0,
            contrastive: ContrastiveConfig::default(),
            contrastive_enabled: true,
            weights: LossWeights::default(),
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let o = &self.optim;
        if self.epochs == 0 {
            return Err(GimcError::Config("epochs must be positive".into()));
        }
        if !(o.lr > 0.0 && o.eps > 0.0 && o.weight_decay >= 0.0)
            || !(0.0..1.0).contains(&o.beta1)
            || !(0.0..1.0).contains(&o.beta2)
        {
            return Err(GimcError::Config("invalid optimizer settings".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(GimcError::Config("clip norm must be positive".into()));
            }
        }
        if self.model.dim % self.model.heads.max(1) != 0 || self.model.heads == 0 {
            return Err(GimcError::Config(format!(
                "model width {} is not divisible by {} heads",
                self.model.dim, self.model.heads
            )));
        }
        self.contrastive.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Losses summed over the epoch's documents.
    pub loss: LossBreakdown,
    pub train: MetricsReport,
    pub anchors: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub steps: usize,
}

pub fn input_space<'a>(config: &ModelConfig, cache: Option<&'a EmbeddingCache>) -> Result<InputSpace<'a>> {
    match (config.mode, cache) {
        (EncoderMode::Toy, _) => Ok(InputSpace::Toy {
            buckets: config.hash_buckets,
            dim_in: config.dim_in,
        }),
        (EncoderMode::Cache, Some(c)) => {
            if c.dim_in != config.dim_in {
                return Err(GimcError::Dimension {
                    what: "cache vector width".into(),
                    expected: config.dim_in,
                    got: c.dim_in,
                });
            }
            Ok(InputSpace::Cache(c))
        }
        (EncoderMode::Cache, None) => Err(GimcError::Config(
            "cache mode needs an embedding cache".into(),
        )),
    }
}

/// Dictionaries whose source side matches the document language.
fn dictionaries_for<'a>(dicts: &'a [BilingualDictionary], lang: &str) -> Vec<BilingualDictionary> {
    dicts
        .iter()
        .filter(|d| d.source_lang == lang || d.source_lang == "und")
        .cloned()
        .collect()
}

fn global_norm(g: &ModelParams) -> f64 {
    g.named()
        .iter()
        .flat_map(|(_, m)| m.data.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

fn anchors_for(
    doc: &Document,
    plan: &DocumentPlan,
    dicts: &[BilingualDictionary],
    config: &TrainConfig,
    epoch: usize,
) -> Result<Vec<AnchorBags>> {
    if !config.contrastive_enabled || config.model.mode != EncoderMode::Toy || dicts.is_empty() {
        return Ok(Vec::new());
    }
    let mut rng = document_rng(config.seed, &doc.id, epoch as u64);
    let batch = build_anchor_sets(
        doc,
        &plan.bags.statements,
        &plan.causal,
        &plan.phrases,
        dicts,
        &config.contrastive,
        &mut rng,
    )?;
    if batch.sets.is_empty() {
        log::debug!("{}: no contrastive anchors", doc.id);
    }
    batch
        .sets
        .iter()
        .map(|s| anchor_bags(s, &config.model))
        .collect()
}

/// One document per optimizer step, documents reshuffled every epoch.
pub fn train(
    docs: &[Document],
    dicts: &[BilingualDictionary],
    cache: Option<&EmbeddingCache>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if docs.is_empty() {
        return Err(GimcError::Config("training corpus is empty".into()));
    }
    let space = input_space(&config.model, cache)?;
    let plans = docs
        .iter()
        .map(|d| plan_document(d, &space))
        .collect::<Result<Vec<_>>>()?;
    let doc_dicts: Vec<Vec<BilingualDictionary>> = docs
        .iter()
        .map(|d| dictionaries_for(dicts, &d.language))
        .collect();
    if config.contrastive_enabled && config.model.mode == EncoderMode::Toy {
        let missing = doc_dicts.iter().filter(|d| d.is_empty()).count();
        if missing > 0 {
            log::warn!("{missing} documents have no dictionary for code-switching; contrastive terms skipped there");
        }
    }

    let mut params = ModelParams::init(&config.model, config.seed)?;
    let mut opt = AdamW::new(&params, config.optim);
    let total = config.epochs * docs.len();
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f_0de5);
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = LossBreakdown::default();
        let mut anchors_seen = 0;
        for &i in &order {
            let anchors = anchors_for(&docs[i], &plans[i], &doc_dicts[i], config, epoch)?;
            anchors_seen += anchors.len();
            let mut grads = params.zeros_like();
            let loss = loss_and_grad(
                &params,
                &plans[i],
                &anchors,
                &config.contrastive,
                &config.weights,
                Some(&mut grads),
            )?;
            if !loss.total.is_finite() {
                return Err(GimcError::NonFinite(format!(
                    "loss on {} at step {step}",
                    docs[i].id
                )));
            }
            if let Some(c) = config.clip_norm {
                let n = global_norm(&grads);
                if n > c {
                    for (_, m) in grads.named_mut() {
                        m.data.iter_mut().for_each(|x| *x *= c / n);
                    }
                }
            }
            let lr = lr_schedule(step, total, config.optim.lr)?;
            opt.step(&mut params, &grads, lr)?;
            step += 1;
            epoch_loss.classification += loss.classification;
            epoch_loss.statement += loss.statement;
            epoch_loss.aspect_event += loss.aspect_event;
            epoch_loss.aspect_context += loss.aspect_context;
            epoch_loss.total += loss.total;
        }
        let train = evaluate_plans(&params, &plans);
        log::info!(
            "epoch {epoch}: loss {:.4} train F1 {:.1}",
            epoch_loss.total,
            train.f1
        );
        history.push(EpochRecord {
            epoch,
            loss: epoch_loss,
            train,
            anchors: anchors_seen,
        });
    }
    Ok(TrainOutcome {
        params,
        history,
        steps: step,
    })
}

pub fn evaluate_plans(params: &ModelParams, plans: &[DocumentPlan]) -> MetricsReport {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for plan in plans {
        let (a, b, c) = confusion(&predict(params, plan), &plan.causal);
        tp += a;
        fp += b;
        fn_ += c;
    }
    prf1(tp, fp, fn_)
}
