//! Central finite-difference checks of the analytic gradients.

use serde::{Deserialize, Serialize};

use crate::contrastive::{build_anchor_sets, document_rng, ContrastiveConfig};
use crate::corpus::{BilingualDictionary, Document};
use crate::encoder::InputSpace;
use crate::error::{GimcError, Result};
use crate::model::{
    activation_signs, anchor_bags, loss_and_grad, plan_document, AnchorBags, DocumentPlan, LossWeights, ModelConfig,
    ModelParams,
};
use crate::synthetic::{gen_synthetic, SyntheticSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub loss: f64,
    pub nodes: usize,
    pub anchors: usize,
    /// Entries whose every probe crossed an activation kink.
    pub kinked: usize,
    pub tensors: Vec<TensorCheck>,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_rel_error)
            .fold(0.0, f64::max)
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Denominator floor: entries whose gradients are both below it are compared
/// absolutely, since their finite difference is dominated by rounding.
pub const REL_FLOOR: f64 = 1e-6;

pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, eps: f64) -> f64 {
    (f(x + eps) - f(x - eps)) / (2.0 * eps)
}

/// Fourth-order centered difference
/// `(-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h`.
pub fn central_difference4(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

/// Stencil step for the full-model check. Smaller steps let rounding in the
/// loss dominate the entries whose gradients sit near `REL_FLOOR`.
pub const DEFAULT_STEP: f64 = 1e-3;

/// How many times the step is divided by ten when a probe crosses a kink.
const KINK_RETRIES: usize = 3;

/// Compares every entry of every tensor against centered differences of the
/// full objective. Probes whose stencil crosses a LeakyReLU kink are retried
/// with a smaller step; entries that still cross one are counted in `kinked`.
pub fn gradcheck_model(
    params: &ModelParams,
    plan: &DocumentPlan,
    anchors: &[AnchorBags],
    contrastive: &ContrastiveConfig,
    weights: &LossWeights,
    eps: f64,
) -> Result<GradcheckReport> {
    let mut grads = params.zeros_like();
    let base = loss_and_grad(params, plan, anchors, contrastive, weights, Some(&mut grads))?;
    let base_signs = activation_signs(params, plan);
    let mut probe = params.clone();
    let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
    let analytic: Vec<Vec<f64>> = grads.named().into_iter().map(|(_, m)| m.data.clone()).collect();
    let mut tensors = Vec::with_capacity(names.len());
    let mut kinked = 0;
    for (t, name) in names.iter().enumerate() {
        let len = analytic[t].len();
        let mut check = TensorCheck {
            name: name.clone(),
            entries: len,
            max_rel_error: 0.0,
            max_abs_error: 0.0,
        };
        for i in 0..len {
            let orig = probe.named_mut()[t].1.data[i];
            let mut eval = |v: f64| -> Result<(f64, bool)> {
                probe.named_mut()[t].1.data[i] = v;
                let l = loss_and_grad(&probe, plan, anchors, contrastive, weights, None)?;
                let smooth = activation_signs(&probe, plan) == base_signs;
                Ok((l.total, smooth))
            };
            let mut h = eps;
            let mut numeric = 0.0;
            for attempt in 0..=KINK_RETRIES {
                let mut f = [0.0; 4];
                let mut smooth = true;
                for (k, off) in [2.0, 1.0, -1.0, -2.0].into_iter().enumerate() {
                    let (l, s) = eval(orig + off * h)?;
                    f[k] = l;
                    smooth &= s;
                }
                numeric = (-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * h);
                if smooth {
                    break;
                }
                if attempt == KINK_RETRIES {
                    kinked += 1;
                }
                h /= 10.0;
            }
            probe.named_mut()[t].1.data[i] = orig;
            let a = analytic[t][i];
            if !numeric.is_finite() || !a.is_finite() {
                return Err(GimcError::NonFinite(format!("gradient of {name}[{i}]")));
            }
            check.max_abs_error = check.max_abs_error.max((a - numeric).abs());
            check.max_rel_error = check.max_rel_error.max(relative_error(a, numeric, REL_FLOOR));
        }
        tensors.push(check);
    }
    Ok(GradcheckReport {
        loss: base.total,
        nodes: plan.layout.len(),
        anchors: anchors.len(),
        kinked,
        tensors,
    })
}

/// Small model used by the fixture check.
pub fn fixture_config() -> ModelConfig {
    ModelConfig {
        dim_in: 4,
        dim: 8,
        hash_buckets: 64,
        ..Default::default()
    }
}

/// Fixture parameters with the embedding and role tables rescaled to unit
/// variance and the attention weights doubled, which keeps each layer near
/// unit gain. At the plain initialization deep features shrink, attention
/// gradients fall to ~1e-8 and LeakyReLU inputs crowd around the kink, so
/// the comparison would measure finite-difference noise.
pub fn fixture_params(seed: u64) -> Result<ModelParams> {
    let mut params = ModelParams::init(&fixture_config(), seed)?;
    for m in [&mut params.encoder.embed, &mut params.roles] {
        m.data.iter_mut().for_each(|x| *x *= 50.0);
    }
    for (_, m) in params.gat.named_mut() {
        m.data.iter_mut().for_each(|x| *x *= 2.0);
    }
    Ok(params)
}

/// A bilingual planted-cue document whose graph has at most `max_nodes` nodes
/// and at least one anchor with negatives, searched from `seed` upwards.
pub fn fixture_document(seed: u64, max_nodes: usize) -> Result<(Document, Vec<BilingualDictionary>, DocumentPlan, Vec<AnchorBags>)> {
    let config = fixture_config();
    let space = InputSpace::Toy {
        buckets: config.hash_buckets,
        dim_in: config.dim_in,
    };
    for s in seed..seed + 1000 {
        let corpus = gen_synthetic(&SyntheticSpec {
            languages: vec!["en".into(), "da".into()],
            docs_per_language: 1,
            events_per_doc: 4,
            cue_strength: 0.5,
            dictionaries: true,
            seed: s,
        })?;
        let doc = corpus.language("en").remove(0);
        let dicts: Vec<BilingualDictionary> = corpus
            .dictionaries
            .into_iter()
            .filter(|d| d.source_lang == "en")
            .collect();
        let plan = plan_document(&doc, &space)?;
        if plan.layout.len() > max_nodes {
            continue;
        }
        let mut rng = document_rng(s, &doc.id, 0);
        let batch = build_anchor_sets(
            &doc,
            &plan.bags.statements,
            &plan.causal,
            &plan.phrases,
            &dicts,
            &ContrastiveConfig::default(),
            &mut rng,
        )?;
        if batch.sets.is_empty() {
            continue;
        }
        let anchors = batch
            .sets
            .iter()
            .map(|a| anchor_bags(a, &config))
            .collect::<Result<Vec<_>>>()?;
        return Ok((doc, dicts, plan, anchors));
    }
    Err(GimcError::Config(format!(
        "no fixture with at most {max_nodes} nodes"
    )))
}

/// Full-model check on the fixture document with default loss settings.
pub fn run_fixture_gradcheck(seed: u64, max_nodes: usize, eps: f64) -> Result<GradcheckReport> {
    let (_, _, plan, anchors) = fixture_document(seed, max_nodes)?;
    let params = fixture_params(seed)?;
    gradcheck_model(
        &params,
        &plan,
        &anchors,
        &ContrastiveConfig::default(),
        &LossWeights::default(),
        eps,
    )
}
