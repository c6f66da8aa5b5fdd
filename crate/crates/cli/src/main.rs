use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use gimc::checkpoint::{load_params, save_params};
use gimc::contrastive::{build_anchor_sets, document_rng};
use gimc::corpus::{candidate_pairs, load_corpus, load_dictionary, load_document, BilingualDictionary, Document};
use gimc::encoder::{required_cache_keys, statement_tokens, EmbeddingCache, EncoderMode, Statement};
use gimc::error::ErrorClass;
use gimc::eval::{emit_metrics, emit_report, evaluate, run_cross_lingual, ReportFormat};
use gimc::gradcheck::{run_fixture_gradcheck, DEFAULT_STEP};
use gimc::graph::{document_phrases, graph_stats, layout};
use gimc::model::StatementSource;
use gimc::synthetic::{gen_synthetic, SyntheticSpec};
use gimc::trainer::{input_space, train, TrainConfig};
use gimc::GimcError;

/// Cross-lingual document-level event causality: phrases, graphs, training and evaluation.
#[derive(Parser, Debug, Serialize)]
#[command(name = "gimc", version)]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Model width (overrides the default of the selected command).
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
enum Command {
    /// Check a corpus, its dictionaries and optionally an embedding cache.
    IngestValidate {
        /// Corpus directory or a single document file.
        corpus: PathBuf,
        #[arg(long, value_delimiter = ',')]
        dicts: Vec<PathBuf>,
        /// EMBC cache that must hold every key the corpus needs.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// One tab-separated line per phrase: sentence, role, span, surface.
    ExtractPhrases { doc: PathBuf },
    /// Node and edge counts of a document graph.
    BuildGraph { doc: PathBuf },
    /// Contrastive anchors with their positives and negatives.
    Augment {
        doc: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        dicts: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        epoch: u64,
        #[arg(long, default_value_t = 2)]
        positives: usize,
        #[arg(long, default_value_t = 4)]
        negatives: usize,
    },
    /// Finite-difference check of every parameter tensor on a fixture graph.
    Gradcheck {
        /// Largest fixture graph, in nodes.
        #[arg(long, default_value_t = 30)]
        nodes: usize,
        /// Stencil step.
        #[arg(long, default_value_t = DEFAULT_STEP)]
        step: f64,
        /// Largest accepted relative error.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Train on a corpus and write a checkpoint.
    Train(TrainArgs),
    /// Precision, recall and F1 of a checkpoint on one corpus.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Per-language F1 with AVG and Δ.
    CrossEval {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated LANG=DIR entries.
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<String>,
        /// Training language, used for Δ.
        #[arg(long, default_value = "en")]
        source: String,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Write a planted-cue corpus and its dictionaries.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "en")]
        languages: Vec<String>,
        #[arg(long, default_value_t = 8)]
        docs: usize,
        #[arg(long, default_value_t = 4)]
        events: usize,
        #[arg(long, default_value_t = 0.6)]
        cue_strength: f64,
        #[arg(long)]
        no_dictionaries: bool,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
enum Source {
    Post,
    Pre,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_delimiter = ',')]
    dicts: Vec<PathBuf>,
    /// Train on frozen vectors from an EMBC cache instead of the toy table.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch history as JSON.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    adam_eps: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    dim_in: Option<usize>,
    #[arg(long)]
    buckets: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    leaky_slope: Option<f64>,
    #[arg(long, value_enum)]
    statement_source: Option<Source>,
    #[arg(long)]
    positives: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Skip cosine normalization in the similarity.
    #[arg(long)]
    no_normalize: bool,
    /// Use the plain dot product as similarity.
    #[arg(long)]
    raw_dot: bool,
    #[arg(long)]
    no_contrastive: bool,
    #[arg(long)]
    w_classification: Option<f64>,
    #[arg(long)]
    w_statement: Option<f64>,
    #[arg(long)]
    w_aspect_event: Option<f64>,
    #[arg(long)]
    w_aspect_context: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
}

#[derive(Debug)]
enum Failure {
    Gimc(GimcError),
    Usage(String),
    Numeric(String),
}

impl From<GimcError> for Failure {
    fn from(e: GimcError) -> Self {
        Failure::Gimc(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        let class = match self {
            Failure::Gimc(e) => e.class(),
            Failure::Usage(_) => ErrorClass::Usage,
            Failure::Numeric(_) => ErrorClass::Numeric,
        };
        match class {
            ErrorClass::Usage => 1,
            ErrorClass::Data => 2,
            ErrorClass::Numeric => 3,
        }
    }

    fn message(&self) -> String {
        let m = match self {
            Failure::Gimc(e) => e.to_string(),
            Failure::Usage(m) | Failure::Numeric(m) => m.clone(),
        };
        m.replace('\n', " ")
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let rendered = e.to_string();
            eprintln!("{}", rendered.lines().next().unwrap_or("usage error"));
            return ExitCode::from(1);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn print_config<T: Serialize>(value: &T) {
    eprintln!("config: {}", serde_json::to_string(value).expect("config serializes"));
}

fn run(cli: &Cli) -> Outcome {
    if !matches!(cli.command, Command::Train(_)) {
        print_config(cli);
    }
    match &cli.command {
        Command::IngestValidate { corpus, dicts, cache } => ingest_validate(corpus, dicts, cache.as_deref()),
        Command::ExtractPhrases { doc } => extract_phrases(doc),
        Command::BuildGraph { doc } => build_graph(doc),
        Command::Augment {
            doc,
            dicts,
            epoch,
            positives,
            negatives,
        } => augment(doc, dicts, cli.seed, *epoch, *positives, *negatives),
        Command::Gradcheck { nodes, step, tolerance } => gradcheck(cli.seed, *nodes, *step, *tolerance),
        Command::Train(args) => train_cmd(cli, args),
        Command::Eval {
            model,
            corpus,
            cache,
            json,
        } => eval_cmd(model, corpus, cache.as_deref(), *json),
        Command::CrossEval {
            model,
            targets,
            source,
            cache,
            json,
        } => cross_eval(model, targets, source, cache.as_deref(), *json),
        Command::GenSynthetic {
            out,
            languages,
            docs,
            events,
            cue_strength,
            no_dictionaries,
        } => {
            let spec = SyntheticSpec {
                languages: languages.clone(),
                docs_per_language: *docs,
                events_per_doc: *events,
                cue_strength: *cue_strength,
                dictionaries: !no_dictionaries,
                seed: cli.seed,
            };
            let corpus = gen_synthetic(&spec)?;
            corpus.write_to(out)?;
            println!(
                "wrote {} documents and {} dictionaries to {}",
                corpus.documents.len(),
                corpus.dictionaries.len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn load_dicts(paths: &[PathBuf]) -> std::result::Result<Vec<BilingualDictionary>, GimcError> {
    paths.iter().map(|p| load_dictionary(p)).collect()
}

fn ingest_validate(corpus: &Path, dicts: &[PathBuf], cache: Option<&Path>) -> Outcome {
    let docs = load_corpus(corpus)?;
    for doc in &docs {
        doc.validate()?;
    }
    let dicts = load_dicts(dicts)?;
    let cache = cache.map(EmbeddingCache::load).transpose()?;
    for doc in &docs {
        let phrases = document_phrases(doc);
        let pairs: Vec<_> = candidate_pairs(doc).into_iter().map(|p| p.key).collect();
        let st = graph_stats(&layout(doc, &phrases, &pairs)?);
        let gold = candidate_pairs(doc).iter().filter(|p| p.causal).count();
        println!(
            "{}\t{}\tsentences={}\tevents={}\tpairs={}\tgold={}\tphrases={}",
            doc.id,
            doc.language,
            doc.sentences.len(),
            doc.events.len(),
            st.pairs,
            gold,
            st.phrases
        );
        if let Some(c) = &cache {
            for key in required_cache_keys(doc) {
                c.get(&key)?;
            }
        }
    }
    for d in &dicts {
        println!("dictionary {}-{}\tentries={}", d.source_lang, d.target_lang, d.entries.len());
    }
    match &cache {
        Some(c) => println!(
            "ok: {} documents, cache dim {} with {} records covers every required key",
            docs.len(),
            c.dim_in,
            c.entries.len()
        ),
        None => println!("ok: {} documents", docs.len()),
    }
    Ok(())
}

fn extract_phrases(path: &Path) -> Outcome {
    let doc = load_document(path)?;
    let mut out = String::new();
    for p in document_phrases(&doc) {
        let s = &doc.sentences[p.sentence_index];
        let _ = writeln!(
            out,
            "{}\t{}\t{}:{}\t{}",
            p.sentence_index,
            p.role_label(),
            p.start,
            p.end,
            p.surface(s)
        );
    }
    print!("{out}");
    Ok(())
}

fn build_graph(path: &Path) -> Outcome {
    let doc = load_document(path)?;
    let phrases = document_phrases(&doc);
    let pairs: Vec<_> = candidate_pairs(&doc).into_iter().map(|p| p.key).collect();
    let st = graph_stats(&layout(&doc, &phrases, &pairs)?);
    println!("{}", serde_json::to_string_pretty(&st).expect("stats serialize"));
    Ok(())
}

fn augment(path: &Path, dicts: &[PathBuf], seed: u64, epoch: u64, positives: usize, negatives: usize) -> Outcome {
    let doc = load_document(path)?;
    let dicts: Vec<_> = load_dicts(dicts)?
        .into_iter()
        .filter(|d| d.source_lang == doc.language || d.source_lang == "und")
        .collect();
    if dicts.is_empty() {
        return Err(Failure::Usage(format!(
            "no dictionary has source language {}",
            doc.language
        )));
    }
    let cands = candidate_pairs(&doc);
    let statements = cands
        .iter()
        .map(|p| statement_tokens(&p.key, &doc))
        .collect::<std::result::Result<Vec<Statement>, _>>()?;
    let causal: Vec<bool> = cands.iter().map(|p| p.causal).collect();
    let config = gimc::contrastive::ContrastiveConfig {
        n_positives: positives,
        k_negatives: negatives,
        ..Default::default()
    };
    let mut rng = document_rng(seed, &doc.id, epoch);
    let batch = build_anchor_sets(&doc, &statements, &causal, &document_phrases(&doc), &dicts, &config, &mut rng)?;
    let value = serde_json::json!({
        "document": doc.id,
        "anchors": batch.sets,
        "skipped": batch.skipped.iter().map(|k| k.to_string()).collect::<Vec<_>>(),
    });
    println!("{}", serde_json::to_string_pretty(&value).expect("anchors serialize"));
    Ok(())
}

fn gradcheck(seed: u64, nodes: usize, step: f64, tolerance: f64) -> Outcome {
    let r = run_fixture_gradcheck(seed, nodes, step)?;
    println!("nodes {}\tanchors {}\tloss {:.6}\tkinked {}", r.nodes, r.anchors, r.loss, r.kinked);
    for t in &r.tensors {
        println!("{}\t{}\t{:.3e}", t.name, t.entries, t.max_rel_error);
    }
    let worst = r.max_rel_error();
    println!("max relative error {worst:.3e}");
    if worst < tolerance {
        Ok(())
    } else {
        Err(Failure::Numeric(format!(
            "max relative error {worst:.3e} exceeds {tolerance:e}"
        )))
    }
}

fn resolve_train_config(cli: &Cli, a: &TrainArgs, cache: Option<&EmbeddingCache>) -> TrainConfig {
    let mut c = TrainConfig {
        seed: cli.seed,
        ..TrainConfig::default()
    };
    let m = &mut c.model;
    if let Some(d) = cli.dim {
        m.dim = d;
    }
    if let Some(cache) = cache {
        m.mode = EncoderMode::Cache;
        m.dim_in = cache.dim_in;
    } else if let Some(d) = a.dim_in {
        m.dim_in = d;
    }
    macro_rules! set {
        ($src:expr, $dst:expr) => {
            if let Some(v) = $src {
                $dst = v;
            }
        };
    }
    set!(a.buckets, m.hash_buckets);
    set!(a.layers, m.layers);
    set!(a.heads, m.heads);
    set!(a.leaky_slope, m.leaky_slope);
    if let Some(s) = a.statement_source {
        m.statement_source = match s {
            Source::Post => StatementSource::PostGraph,
            Source::Pre => StatementSource::PreGraph,
        };
    }
    set!(a.epochs, c.epochs);
    set!(a.lr, c.optim.lr);
    set!(a.beta1, c.optim.beta1);
    set!(a.beta2, c.optim.beta2);
    set!(a.adam_eps, c.optim.eps);
    set!(a.weight_decay, c.optim.weight_decay);
    set!(a.positives, c.contrastive.n_positives);
    set!(a.negatives, c.contrastive.k_negatives);
    set!(a.temperature, c.contrastive.temperature);
    c.contrastive.normalize = !a.no_normalize;
    c.contrastive.raw_dot = a.raw_dot;
    c.contrastive_enabled = !a.no_contrastive;
    set!(a.w_classification, c.weights.classification);
    set!(a.w_statement, c.weights.statement);
    set!(a.w_aspect_event, c.weights.aspect_event);
    set!(a.w_aspect_context, c.weights.aspect_context);
    c.clip_norm = a.clip_norm;
    c
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Outcome {
    let cache = a.cache.as_deref().map(EmbeddingCache::load).transpose()?;
    let config = resolve_train_config(cli, a, cache.as_ref());
    print_config(&serde_json::json!({ "command": "train", "args": a, "train": config }));
    config.validate()?;
    let docs = load_corpus(&a.corpus)?;
    let dicts = load_dicts(&a.dicts)?;
    let out = train(&docs, &dicts, cache.as_ref(), &config)?;
    save_params(&out.params, &a.out)?;
    if let Some(h) = &a.history {
        let text = serde_json::to_string_pretty(&out.history).expect("history serializes");
        std::fs::write(h, text).map_err(|e| GimcError::io(h, e))?;
    }
    let last = out.history.last().expect("at least one epoch");
    println!(
        "trained {} steps over {} documents; final loss {:.6}, train F1 {:.1}; wrote {}",
        out.steps,
        docs.len(),
        last.loss.total,
        last.train.f1,
        a.out.display()
    );
    Ok(())
}

fn eval_cmd(model: &Path, corpus: &Path, cache: Option<&Path>, json: bool) -> Outcome {
    let params = load_params(model)?;
    let cache = cache.map(EmbeddingCache::load).transpose()?;
    let space = input_space(&params.config, cache.as_ref())?;
    let docs = load_corpus(corpus)?;
    let m = evaluate(&params, &docs, &space)?;
    let format = if json { ReportFormat::Json } else { ReportFormat::Markdown };
    println!("{}", emit_metrics(&m, format).trim_end());
    Ok(())
}

fn cross_eval(model: &Path, targets: &[String], source: &str, cache: Option<&Path>, json: bool) -> Outcome {
    let params = load_params(model)?;
    let cache = cache.map(EmbeddingCache::load).transpose()?;
    let space = input_space(&params.config, cache.as_ref())?;
    let mut corpora: BTreeMap<String, Vec<Document>> = BTreeMap::new();
    for t in targets {
        let (lang, dir) = t
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("target {t:?} is not LANG=DIR")))?;
        if corpora.insert(lang.to_string(), load_corpus(Path::new(dir))?).is_some() {
            return Err(Failure::Usage(format!("language {lang} given twice")));
        }
    }
    let report = run_cross_lingual(&params, source, &corpora, &space)?;
    let format = if json { ReportFormat::Json } else { ReportFormat::Markdown };
    println!("{}", emit_report(&report, format).trim_end());
    Ok(())
}
