use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use hazardrag::agents::search::{FixtureSearchBackend, HttpSearchBackend, SearchBackend};
use hazardrag::agents::{AgentProvider, ChatCompletionsProvider, Script, ScriptedProvider};
use hazardrag::corpus::{chunk_corpus, read_chunks_jsonl, read_document, write_chunks_jsonl, ChunkingOptions, DocumentRecord, WhitespaceTokenizer};
use hazardrag::eval::{evaluate_with_traces, render_ablation, render_category_table, render_report, AblationReport, EvalConfig, EvalReport};
use hazardrag::pipeline::{write_traces_jsonl, Agents};
use hazardrag::qagen::{build_dataset, read_dataset_jsonl, write_dataset};
use hazardrag::retrieval::{LexicalScorer, LlmRelevanceScorer, RerankScorer};
use hazardrag::synthetic::{DeskAgent, DeskBenchmark};
use hazardrag::vecstore::{build_index, load_index, save_index, EmbeddingProvider, HashEmbeddingProvider, HttpEmbeddingProvider};
use hazardrag::{ChunkStrategy, CorpusIndex, Document, Engine, Hazard, PipelineConfig, PipelineVariant, Question};

use crate::config::{parse_config_file, usage, CliConfig, Credentials, EmbedderKind, Layers, ProviderKind, ScorerKind, SearchKind};
use crate::{Cli, Command};

/// One evaluation run: a variant, optionally on its own index.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub variant: PipelineVariant,
    pub index: Option<PathBuf>,
}

impl FromStr for RunSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (v, index) = match s.split_once('@') {
            Some((v, p)) if !p.is_empty() => (v, Some(PathBuf::from(p))),
            Some(_) => return Err(format!("missing index path in '{s}'")),
            None => (s, None),
        };
        Ok(RunSpec {
            variant: v.parse().map_err(|e: hazardrag::pipeline::UnknownVariant| e.to_string())?,
            index,
        })
    }
}

struct Ctx {
    cfg: CliConfig,
    creds: Credentials,
    trace: Option<PathBuf>,
}

fn layers(cli: &Cli) -> Result<Layers> {
    let mut flags = BTreeMap::new();
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        let k = k.trim().to_ascii_lowercase();
        if !crate::config::KEYS.contains(&k.as_str()) {
            return Err(usage(format!("--set: unknown key `{k}`")));
        }
        flags.insert(k, v.trim().to_string());
    }
    if let Some(p) = &cli.index {
        flags.insert("index".into(), p.display().to_string());
    }
    if let Some(n) = cli.parallelism {
        flags.insert("parallelism".into(), n.to_string());
    }
    if let Some(s) = cli.seed {
        flags.insert("seed".into(), s.to_string());
    }
    match &cli.command {
        Command::Ingest { strategy: Some(s), .. } => {
            flags.insert("strategy".into(), s.name().into());
        }
        Command::Ask { variant: Some(v), .. } => {
            flags.insert("variant".into(), v.name().into());
        }
        _ => {}
    }
    if let Command::Ingest { hazard: Some(h), .. } | Command::Genqa { hazard: Some(h), .. } = &cli.command {
        flags.insert("hazard".into(), h.name().into());
    }
    let file = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            parse_config_file(&text, p)?
        }
        None => BTreeMap::new(),
    };
    Ok(Layers {
        flags,
        env: Layers::env_from(std::env::vars()),
        file,
    })
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = CliConfig::resolve(&layers(&cli)?)?;
    let ctx = Ctx {
        cfg,
        creds: Credentials::from_env(),
        trace: cli.trace.clone(),
    };
    match cli.command {
        Command::Ingest { inputs, out, .. } => ingest(&ctx, &inputs, &out),
        Command::Index { chunks, out } => index(&ctx, &chunks, out.as_deref()),
        Command::Ask { question, options, .. } => ask(&ctx, &question, &options),
        Command::Genqa { inputs, out, force, .. } => genqa(&ctx, &inputs, &out, force),
        Command::Eval { dataset, runs, out, csv } => eval(&ctx, &dataset, &runs, out.as_deref(), csv.as_deref()),
        Command::Desk { out, variants, force } => desk(&ctx, &out, &variants, force),
    }
}

fn provider(ctx: &Ctx) -> Result<Arc<dyn AgentProvider>> {
    let c = &ctx.cfg;
    Ok(match c.provider {
        ProviderKind::Http => Arc::new(ChatCompletionsProvider::new(&c.llm_endpoint, &c.llm_model, ctx.creds.llm.clone())),
        ProviderKind::Script => {
            let path = c.script.as_ref().ok_or_else(|| usage("provider = script needs a `script` file"))?;
            let script = Script::load(path).with_context(|| format!("loading script {}", path.display()))?;
            Arc::new(ScriptedProvider::new(script))
        }
        ProviderKind::Desk => Arc::new(DeskAgent::new(c.seed)),
    })
}

fn embedder(ctx: &Ctx) -> Arc<dyn EmbeddingProvider> {
    let c = &ctx.cfg;
    match c.embedder {
        EmbedderKind::Hash => Arc::new(HashEmbeddingProvider::new(c.embed_dim, c.seed)),
        EmbedderKind::Http => Arc::new(HttpEmbeddingProvider::new(&c.embed_endpoint, &c.embed_model, c.embed_dim, ctx.creds.embed.clone())),
    }
}

fn search(ctx: &Ctx) -> Result<Arc<dyn SearchBackend>> {
    let c = &ctx.cfg;
    Ok(match c.search {
        SearchKind::None => Arc::new(FixtureSearchBackend::new()),
        SearchKind::Http => {
            if c.search_endpoint.is_empty() {
                return Err(usage("search = http needs `search_endpoint`"));
            }
            Arc::new(HttpSearchBackend::new(&c.search_endpoint, ctx.creds.search.clone()))
        }
        SearchKind::Fixtures => {
            let path = c.search_fixtures.as_ref().ok_or_else(|| usage("search = fixtures needs `search_fixtures`"))?;
            Arc::new(FixtureSearchBackend::load(path).with_context(|| format!("loading search fixtures {}", path.display()))?)
        }
    })
}

fn load_existing_index(path: &Path) -> Result<CorpusIndex> {
    if !path.exists() {
        bail!("index not found: {}", path.display());
    }
    load_index(path).with_context(|| format!("loading index {}", path.display()))
}

fn engine(ctx: &Ctx, index: Arc<CorpusIndex>, pipeline: PipelineConfig) -> Result<Engine> {
    let provider = provider(ctx)?;
    let embedder = embedder(ctx);
    if pipeline.variant.retrieves() && !index.is_empty() {
        index.check_embedder(embedder.as_ref()).context("index and configured embedder disagree")?;
    }
    let scorer: Arc<dyn RerankScorer> = match ctx.cfg.scorer {
        ScorerKind::Lexical => Arc::new(LexicalScorer),
        ScorerKind::Llm => Arc::new(LlmRelevanceScorer::new(provider.clone())),
    };
    Ok(Engine::new(index, embedder, Agents::shared(provider, search(ctx)?), scorer, pipeline))
}

/// Files named directly, plus `.json`/`.txt`/`.md` files of named
/// directories in name order.
fn expand(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && matches!(f.extension().and_then(|e| e.to_str()), Some("json" | "txt" | "md")))
                .collect();
            found.sort();
            out.extend(found);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            bail!("cannot read input {}", p.display());
        }
    }
    Ok(out)
}

fn read_documents(ctx: &Ctx, inputs: &[PathBuf]) -> Result<Vec<Document>> {
    expand(inputs)?
        .iter()
        .map(|p| read_document(p, ctx.cfg.hazard).with_context(|| format!("reading {}", p.display())))
        .collect()
}

fn ingest(ctx: &Ctx, inputs: &[PathBuf], out: &Path) -> Result<()> {
    let docs = read_documents(ctx, inputs)?;
    let strategy = ctx.cfg.strategy;
    let provider = if strategy.needs_provider() { Some(provider(ctx)?) } else { None };
    let options = ChunkingOptions {
        window: ctx.cfg.window,
        overlap: ctx.cfg.overlap,
        tokenizer: &WhitespaceTokenizer,
        provider: provider.as_deref(),
    };
    let (per_doc, _) = chunk_corpus(&docs, strategy, &options, ctx.cfg.parallelism)?;
    let all: Vec<_> = per_doc.iter().flatten().cloned().collect();
    write_chunks_jsonl(out, &all).with_context(|| format!("writing {}", out.display()))?;
    for (d, chunks) in docs.iter().zip(&per_doc) {
        println!("{}\t{}\t{} chunks", d.id, d.hazard_type, chunks.len());
    }
    println!("{} documents, {} {} chunks -> {}", docs.len(), all.len(), strategy, out.display());
    Ok(())
}

fn index(ctx: &Ctx, chunks: &Path, out: Option<&Path>) -> Result<()> {
    let chunks = read_chunks_jsonl(chunks).with_context(|| format!("reading {}", chunks.display()))?;
    let embedder = embedder(ctx);
    let index = build_index(&chunks, embedder.as_ref())?;
    let out = out.unwrap_or(&ctx.cfg.index);
    save_index(&index, out).with_context(|| format!("writing {}", out.display()))?;
    for db in index.databases() {
        println!("{}\t{} chunks", db.hazard_type(), db.len());
    }
    println!("{} chunks embedded with {} -> {}", index.len(), index.embedder_id(), out.display());
    Ok(())
}

fn question_from(text: &str, options: &[String]) -> Result<Question> {
    match options.len() {
        0 => Ok(Question::true_false(text)),
        4 => {
            let opts = options
                .iter()
                .zip(['A', 'B', 'C', 'D'])
                .map(|(o, l)| {
                    let o = o.trim();
                    let body = o.strip_prefix(&format!("{l}.")).unwrap_or(o).trim();
                    format!("{l}. {body}")
                })
                .collect();
            Ok(Question::multiple_choice(text, opts))
        }
        n => Err(usage(format!("a multiple-choice question needs exactly 4 options, got {n}"))),
    }
}

fn ask(ctx: &Ctx, text: &str, options: &[String]) -> Result<()> {
    let question = question_from(text, options)?;
    let pipeline = ctx.cfg.pipeline;
    let index = if pipeline.variant.retrieves() {
        load_existing_index(&ctx.cfg.index)?
    } else {
        CorpusIndex::new(embedder(ctx).identifier(), ctx.cfg.embed_dim)
    };
    let engine = engine(ctx, Arc::new(index), pipeline)?;
    let (answer, trace) = engine.infer(&question);
    match answer.value {
        Some(v) => println!("{v}"),
        None => println!("abstain"),
    }
    for s in &trace.evidence_sources {
        println!("evidence: {s}");
    }
    if let Some(err) = &trace.error {
        log::warn!("run failed: {err}");
    }
    if let Some(path) = &ctx.trace {
        let json = serde_json::to_string_pretty(&trace)?;
        std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn refuse_overwrite(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        bail!("{} exists; pass --force to replace it", path.display());
    }
    Ok(())
}

fn genqa(ctx: &Ctx, inputs: &[PathBuf], out: &Path, force: bool) -> Result<()> {
    refuse_overwrite(out, force)?;
    let docs = read_documents(ctx, inputs)?;
    let provider = provider(ctx)?;
    let build = build_dataset(&docs, provider.as_ref(), ctx.cfg.parallelism);
    write_dataset(out, &build).with_context(|| format!("writing {}", out.display()))?;
    print!("{}", build.dataset.summary.render());
    println!("{} items, {} paragraphs skipped -> {}", build.dataset.len(), build.ledger.len(), out.display());
    Ok(())
}

fn numbered(path: &Path, n: usize) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    let ext = path.extension().and_then(|s| s.to_str()).map(|e| format!(".{e}")).unwrap_or_default();
    path.with_file_name(format!("{stem}-{n}{ext}"))
}

fn write_reports(reports: Vec<EvalReport>, out: Option<&Path>, csv: Option<&Path>) -> Result<()> {
    print!("{}", render_category_table(&reports));
    if let Some(csv) = csv {
        if reports.len() == 1 {
            reports[0].write_items_csv(csv)?;
        } else {
            for (n, r) in reports.iter().enumerate() {
                r.write_items_csv(&numbered(csv, n + 1))?;
            }
        }
    }
    let json = if reports.len() == 1 {
        println!();
        print!("{}", render_report(&reports[0]));
        serde_json::to_string_pretty(&reports[0])?
    } else {
        let ablation = AblationReport::from_reports(reports)?;
        println!();
        print!("{}", render_ablation(&ablation));
        serde_json::to_string_pretty(&ablation)?
    };
    if let Some(out) = out {
        std::fs::write(out, json + "\n").with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn eval(ctx: &Ctx, dataset: &Path, runs: &[RunSpec], out: Option<&Path>, csv: Option<&Path>) -> Result<()> {
    let data = read_dataset_jsonl(dataset).with_context(|| format!("reading {}", dataset.display()))?;
    let runs = if runs.is_empty() {
        vec![RunSpec {
            variant: ctx.cfg.pipeline.variant,
            index: None,
        }]
    } else {
        runs.to_vec()
    };
    let distinct_indices = runs.iter().map(|r| r.index.as_ref()).collect::<std::collections::BTreeSet<_>>().len() > 1;
    let mut cache: BTreeMap<PathBuf, Arc<CorpusIndex>> = BTreeMap::new();
    let mut reports = Vec::new();
    let mut traces = Vec::new();
    for run in &runs {
        let path = run.index.clone().unwrap_or_else(|| ctx.cfg.index.clone());
        let index = match cache.get(&path) {
            Some(i) => i.clone(),
            None if !run.variant.retrieves() && !path.exists() => Arc::new(CorpusIndex::new(embedder(ctx).identifier(), ctx.cfg.embed_dim)),
            None => {
                let i = Arc::new(load_existing_index(&path)?);
                cache.insert(path.clone(), i.clone());
                i
            }
        };
        let chunking = index
            .databases()
            .flat_map(|db| db.records())
            .map(|r| r.chunk.strategy)
            .next()
            .unwrap_or(ctx.cfg.strategy);
        let name = if distinct_indices {
            format!("{} / {}", run.variant.label(), chunking_label(chunking))
        } else {
            run.variant.label().to_string()
        };
        let pipeline = PipelineConfig {
            variant: run.variant,
            ..ctx.cfg.pipeline
        };
        let cfg = EvalConfig { name, chunking, pipeline };
        let engine = engine(ctx, index, pipeline)?;
        let (report, t) = evaluate_with_traces(&data, &cfg, &engine, ctx.cfg.parallelism)?;
        reports.push(report);
        traces.extend(t);
    }
    if let Some(path) = &ctx.trace {
        write_traces_jsonl(path, &traces).with_context(|| format!("writing {}", path.display()))?;
    }
    write_reports(reports, out, csv)
}

fn chunking_label(s: ChunkStrategy) -> &'static str {
    match s {
        ChunkStrategy::FixedToken => "Fixed-token chunk",
        ChunkStrategy::Paragraph => "Paragraph chunk",
        ChunkStrategy::Proposition => "Proposition chunk",
        ChunkStrategy::Agentic => "Agentic chunk",
    }
}

fn desk(ctx: &Ctx, out: &Path, variants: &[PipelineVariant], force: bool) -> Result<()> {
    let dataset_path = out.join("desk_qa.jsonl");
    refuse_overwrite(&dataset_path, force)?;
    let bench = DeskBenchmark::build(ctx.cfg.seed, ctx.cfg.parallelism)?;
    let docs = out.join("docs");
    std::fs::create_dir_all(&docs).with_context(|| format!("creating {}", docs.display()))?;
    for d in &bench.world.documents {
        let json = serde_json::to_string_pretty(&DocumentRecord::from(d))?;
        std::fs::write(docs.join(format!("{}.json", d.id)), json + "\n")?;
    }
    let build = hazardrag::qagen::DatasetBuild {
        dataset: bench.dataset.clone(),
        ledger: bench.ledger.clone(),
        log: Default::default(),
    };
    write_dataset(&dataset_path, &build)?;
    let mut chunks = bench.chunks.clone();
    chunks.extend(bench.decoys.iter().cloned());
    write_chunks_jsonl(&out.join("desk_chunks.jsonl"), &chunks)?;
    save_index(&bench.index, &out.join("desk.index"))?;
    let variants = if variants.is_empty() {
        vec![
            PipelineVariant::VanillaRag,
            PipelineVariant::MorOnly,
            PipelineVariant::RagOnlineSearch,
            PipelineVariant::RagReflection,
            PipelineVariant::FullMora,
        ]
    } else {
        variants.to_vec()
    };
    let hazards: Vec<&str> = bench.world.documents.iter().map(|d| d.hazard_type).collect::<std::collections::BTreeSet<Hazard>>().into_iter().map(Hazard::name).collect();
    println!(
        "desk corpus: {} documents ({}), {} items, {} decoy chunks -> {}",
        bench.world.documents.len(),
        hazards.join(", "),
        bench.dataset.len(),
        bench.decoys.len(),
        out.display()
    );
    if variants.len() < 2 {
        let report = hazardrag::eval::evaluate(
            &bench.dataset,
            &EvalConfig::new(variants[0].label(), variants[0], ChunkStrategy::Paragraph),
            &bench.engine(variants[0]),
            ctx.cfg.parallelism,
        )?;
        return write_reports(vec![report], Some(&out.join("desk_report.json")), None);
    }
    let ablation = bench.ablate(&variants, ctx.cfg.parallelism)?;
    write_reports(ablation.reports, Some(&out.join("desk_report.json")), None)
}
