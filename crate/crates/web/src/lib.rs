//! Browser bindings. Every export takes and returns JSON text so the page can
//! stay plain JavaScript; the `*_json` functions are the native equivalents.

use gimc::contrastive::{
    contrastive_loss, document_rng, statement_phrase_spans, switch_phrases, ContrastiveConfig,
};
use gimc::corpus::{candidate_pairs, parse_dictionary, parse_document, Document};
use gimc::encoder::statement_tokens;
use gimc::graph::{document_phrases, graph_stats, layout};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

type Out = Result<String, String>;

const EXAMPLE: &str = r#"{
  "id": "mali",
  "language": "en",
  "sentences": [[
    {"index": 1, "form": "two", "head": 4, "deprel": "nummod"},
    {"index": 2, "form": "French", "head": 4, "deprel": "amod"},
    {"index": 3, "form": "military", "head": 4, "deprel": "amod"},
    {"index": 4, "form": "helicopters", "head": 5, "deprel": "nsubj"},
    {"index": 5, "form": "crashed", "head": 0, "deprel": "root"},
    {"index": 6, "form": "in", "head": 7, "deprel": "case"},
    {"index": 7, "form": "Mali", "head": 5, "deprel": "obl"},
    {"index": 8, "form": ",", "head": 9, "deprel": "punct"},
    {"index": 9, "form": "killing", "head": 5, "deprel": "advcl"},
    {"index": 10, "form": "13", "head": 11, "deprel": "nummod"},
    {"index": 11, "form": "soldiers", "head": 9, "deprel": "obj"},
    {"index": 12, "form": ".", "head": 5, "deprel": "punct"}
  ], [
    {"index": 1, "form": "the", "head": 2, "deprel": "det"},
    {"index": 2, "form": "army", "head": 3, "deprel": "nsubj"},
    {"index": 3, "form": "mourned", "head": 0, "deprel": "root"},
    {"index": 4, "form": "the", "head": 5, "deprel": "det"},
    {"index": 5, "form": "soldiers", "head": 3, "deprel": "obj"},
    {"index": 6, "form": ".", "head": 3, "deprel": "punct"}
  ]],
  "events": [
    {"id": "crashed", "sentence_index": 0, "start": 4, "end": 5},
    {"id": "killing", "sentence_index": 0, "start": 8, "end": 9},
    {"id": "mourned", "sentence_index": 1, "start": 2, "end": 3}
  ],
  "relations": [{"a": "crashed", "b": "killing"}, {"a": "killing", "b": "mourned"}]
}"#;

const EXAMPLE_DICT: &str = "two to\nfrench franske\nmilitary militær\nhelicopters helikoptere\n\
crashed styrtede\nmali mali\nkilling dræbte\n13 13\nsoldiers soldater\nthe den\narmy hær\n\
mourned sørgede\nin i\n";

/// A two-sentence document in the corpus JSON format.
#[wasm_bindgen]
pub fn example_document() -> String {
    EXAMPLE.to_string()
}

/// An English to Danish dictionary covering the example.
#[wasm_bindgen]
pub fn example_dictionary() -> String {
    EXAMPLE_DICT.to_string()
}

fn document(text: &str) -> Result<Document, String> {
    parse_document(text, "input").map_err(|e| e.to_string())
}

/// Phrases, candidate pairs and graph statistics of one document.
pub fn analyze_json(doc_json: &str) -> Out {
    let doc = document(doc_json)?;
    let phrases = document_phrases(&doc);
    let cands = candidate_pairs(&doc);
    let keys: Vec<_> = cands.iter().map(|p| p.key.clone()).collect();
    let g = layout(&doc, &phrases, &keys).map_err(|e| e.to_string())?;
    let phrases: Vec<Value> = phrases
        .iter()
        .map(|p| {
            json!({
                "sentence": p.sentence_index,
                "role": p.role_label(),
                "start": p.start,
                "end": p.end,
                "surface": p.surface(&doc.sentences[p.sentence_index]),
            })
        })
        .collect();
    let pairs: Vec<Value> = cands
        .iter()
        .map(|p| json!({"pair": p.key.to_string(), "causal": p.causal}))
        .collect();
    Ok(json!({"phrases": phrases, "pairs": pairs, "stats": graph_stats(&g)}).to_string())
}

/// Code-switches the phrases of every candidate statement with one dictionary.
pub fn code_switch_json(doc_json: &str, dict_text: &str, seed: u64, epoch: u64) -> Out {
    let doc = document(doc_json)?;
    let dict = parse_dictionary(dict_text, &doc.language, "und", "dictionary")
        .map_err(|e| e.to_string())?;
    let phrases = document_phrases(&doc);
    let mut rng = document_rng(seed, &doc.id, epoch);
    let mut rows = Vec::new();
    for cand in candidate_pairs(&doc) {
        let stmt = statement_tokens(&cand.key, &doc).map_err(|e| e.to_string())?;
        let spans = statement_phrase_spans(&stmt, &phrases);
        let switched = switch_phrases(&stmt.forms, &spans, std::slice::from_ref(&dict), &mut rng)
            .map_err(|e| e.to_string())?;
        rows.push(json!({
            "pair": cand.key.to_string(),
            "original": stmt.forms.join(" "),
            "switched": switched.join(" "),
        }));
    }
    Ok(Value::Array(rows).to_string())
}

/// Contrastive loss of the unit anchor `(1, 0)` against unit vectors at the
/// given angles in degrees.
pub fn contrastive_json(positive_deg: &[f64], negative_deg: &[f64], temperature: f64) -> Out {
    let unit = |d: &f64| {
        let r = d.to_radians();
        vec![r.cos(), r.sin()]
    };
    let pos: Vec<_> = positive_deg.iter().map(unit).collect();
    let neg: Vec<_> = negative_deg.iter().map(unit).collect();
    let config = ContrastiveConfig {
        temperature,
        ..ContrastiveConfig::default()
    };
    config.validate().map_err(|e| e.to_string())?;
    let g = contrastive_loss(&[1.0, 0.0], &pos, &neg, &config).map_err(|e| e.to_string())?;
    let cos = |v: &Vec<f64>| v[0];
    Ok(json!({
        "loss": g.loss,
        "positive_cos": pos.iter().map(cos).collect::<Vec<_>>(),
        "negative_cos": neg.iter().map(cos).collect::<Vec<_>>(),
        "d_anchor": g.d_anchor,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn analyze(doc_json: &str) -> Result<String, JsValue> {
    analyze_json(doc_json).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn code_switch(doc_json: &str, dict_text: &str, seed: u32, epoch: u32) -> Result<String, JsValue> {
    code_switch_json(doc_json, dict_text, seed as u64, epoch as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn contrastive(positive_deg: &[f64], negative_deg: &[f64], temperature: f64) -> Result<String, JsValue> {
    contrastive_json(positive_deg, negative_deg, temperature).map_err(|e| JsValue::from_str(&e))
}
