use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::encoder::InputSpace;
use crate::error::{GimcError, Result};
use crate::model::{plan_document, predict, ModelParams, CAUSAL};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// Percentages.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

pub fn prf1(tp: u64, fp: u64, fn_: u64) -> MetricsReport {
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    MetricsReport {
        tp,
        fp,
        fn_,
        precision,
        recall,
        f1: f1_from_pr(precision, recall),
    }
}

/// Harmonic mean of two percentages; 0 when both are 0.
pub fn f1_from_pr(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Half-up rounding to one decimal, done on integers so that values like
/// 10.35 are not pulled down by their binary representation.
pub fn round1(x: f64) -> f64 {
    let micro = (x * 1e6).round() as i64;
    (micro + 50_000).div_euclid(100_000) as f64 / 10.0
}

/// Micro-aggregated confusion counts of argmax predictions over a corpus.
pub fn evaluate(params: &ModelParams, docs: &[Document], space: &InputSpace<'_>) -> Result<MetricsReport> {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for doc in docs {
        let plan = plan_document(doc, space)?;
        let probs = predict(params, &plan);
        let (a, b, c) = confusion(&probs, &plan.causal);
        tp += a;
        fp += b;
        fn_ += c;
    }
    Ok(prf1(tp, fp, fn_))
}

/// Counts (tp, fp, fn) with ties resolved towards the causal class.
pub fn confusion(probs: &[[f64; 2]], gold: &[bool]) -> (u64, u64, u64) {
    let mut out = (0, 0, 0);
    for (p, &g) in probs.iter().zip(gold) {
        let pred = p[CAUSAL] >= p[1 - CAUSAL];
        match (pred, g) {
            (true, true) => out.0 += 1,
            (true, false) => out.1 += 1,
            (false, true) => out.2 += 1,
            (false, false) => {}
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CrossLingualReport {
    pub source: String,
    pub targets: BTreeMap<String, MetricsReport>,
    pub avg: f64,
    /// Absent when no source-language target was evaluated.
    pub delta: Option<f64>,
}

impl CrossLingualReport {
    /// AVG over every target F1; Δ = source F1 minus the mean of the others.
    pub fn from_targets(source: &str, targets: BTreeMap<String, MetricsReport>) -> Self {
        let f1s: Vec<f64> = targets.values().map(|m| m.f1).collect();
        let avg = if f1s.is_empty() {
            0.0
        } else {
            f1s.iter().sum::<f64>() / f1s.len() as f64
        };
        let delta = targets.get(source).map(|own| {
            let others: Vec<f64> = targets
                .iter()
                .filter(|(k, _)| k.as_str() != source)
                .map(|(_, m)| m.f1)
                .collect();
            if others.is_empty() {
                0.0
            } else {
                own.f1 - others.iter().sum::<f64>() / others.len() as f64
            }
        });
        CrossLingualReport {
            source: source.to_string(),
            targets,
            avg,
            delta,
        }
    }
}

pub fn run_cross_lingual(
    params: &ModelParams,
    source: &str,
    targets: &BTreeMap<String, Vec<Document>>,
    space: &InputSpace<'_>,
) -> Result<CrossLingualReport> {
    if targets.is_empty() {
        return Err(GimcError::Config("no target corpora given".into()));
    }
    let mut reports = BTreeMap::new();
    for (lang, docs) in targets {
        reports.insert(lang.clone(), evaluate(params, docs, space)?);
    }
    Ok(CrossLingualReport::from_targets(source, reports))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = GimcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(GimcError::Config(format!("unknown report format {other:?}"))),
        }
    }
}

pub fn emit_report(report: &CrossLingualReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("reports serialize"),
        ReportFormat::Markdown => {
            let mut s = String::new();
            let langs: Vec<&String> = report.targets.keys().collect();
            s.push_str("| source |");
            for l in &langs {
                let _ = write!(s, " {l} |");
            }
            s.push_str(" AVG | Δ |\n|---|");
            for _ in &langs {
                s.push_str("---|");
            }
            s.push_str("---|---|\n");
            if langs.is_empty() {
                return s;
            }
            let _ = write!(s, "| {} |", report.source);
            for m in report.targets.values() {
                let _ = write!(s, " {:.1} |", round1(m.f1));
            }
            let _ = write!(s, " {:.1} |", round1(report.avg));
            match report.delta {
                Some(d) => {
                    let _ = writeln!(s, " {:.1} |", round1(d));
                }
                None => s.push_str(" - |\n"),
            }
            s
        }
    }
}

pub fn emit_metrics(m: &MetricsReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(m).expect("reports serialize"),
        ReportFormat::Markdown => format!(
            "| P | R | F | tp | fp | fn |\n|---|---|---|---|---|---|\n| {:.1} | {:.1} | {:.1} | {} | {} | {} |\n",
            round1(m.precision),
            round1(m.recall),
            round1(m.f1),
            m.tp,
            m.fp,
            m.fn_
        ),
    }
}
