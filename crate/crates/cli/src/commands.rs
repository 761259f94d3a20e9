use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use claim_anchor::augment::augment_queries;
use claim_anchor::corpus::{load_corpus, load_queries, load_queries_detect};
use claim_anchor::eval::{load_run, mrr_at_k, write_predictions, write_run_to, Run};
use claim_anchor::experiment::{
    build_retriever, execute_pipeline, run_experiment, run_grid, summary_table, RerankConfig,
    RetrievalConfig, Retriever, SCORER_ENV,
};
use claim_anchor::rerank::rerank_run;
use claim_anchor::{
    AugmentMode, Corpus, ExperimentConfig, InvertedIndex, PreprocessConfig, QuerySet,
    RewriteTables, Stage, TableFormat,
};

use crate::error::CliError;
use crate::{
    AugmentArgs, EvaluateArgs, ExperimentArgs, IndexArgs, InputArgs, RerankArgs, RetrieveArgs,
    ScorerArgs,
};

type Result<T> = std::result::Result<T, CliError>;

/// Config file (if any) with flag overrides applied.
fn settings(input: &InputArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &input.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(PathBuf::new(), PathBuf::new(), PathBuf::new()),
    };
    if let Some(p) = &input.corpus {
        cfg.corpus_path = p.clone();
    }
    if input.corpus_format.is_some() {
        cfg.corpus_format = input.corpus_format;
    }
    if let Some(p) = &input.queries {
        cfg.queries_path = p.clone();
    }
    if input.queries_format.is_some() {
        cfg.queries_format = input.queries_format;
    }
    if input.k1.is_some() || input.b.is_some() {
        let RetrievalConfig::Bm25(params) = &mut cfg.retrieval else {
            return Err(CliError::validation(
                "--k1 and --b apply to BM25 retrieval only",
            ));
        };
        params.k1 = input.k1.unwrap_or(params.k1);
        params.b = input.b.unwrap_or(params.b);
    }
    if let Some(p) = &input.stopwords {
        cfg.preprocess.stopwords_path = Some(p.clone());
    }
    if let Some(n) = input.min_token_len {
        cfg.preprocess.min_token_len = n;
    }
    if let Some(mode) = input.augment {
        cfg.augment.mode = mode;
    }
    for (flag, slot) in [
        (&input.formal, &mut cfg.augment.formal),
        (&input.english_formal, &mut cfg.augment.english_formal),
        (&input.keywords, &mut cfg.augment.keywords),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    Ok(cfg)
}

fn require<'a>(path: &'a Path, flag: &str) -> Result<&'a Path> {
    if path.as_os_str().is_empty() {
        Err(CliError::Validation(format!(
            "{flag} is required (or set it in --config)"
        )))
    } else {
        Ok(path)
    }
}

fn preprocess_config(cfg: &ExperimentConfig) -> Result<PreprocessConfig> {
    cfg.preprocess.build().map_err(|e| {
        let source = cfg
            .preprocess
            .stopwords_path
            .as_ref()
            .map_or_else(String::new, |p| format!("{}: ", p.display()));
        CliError::Validation(format!("stopwords {source}{e}"))
    })
}

fn corpus(cfg: &ExperimentConfig) -> Result<Corpus> {
    let path = require(&cfg.corpus_path, "--corpus")?;
    let format = ExperimentConfig::table_format(path, cfg.corpus_format)?;
    load_corpus(path, format).map_err(CliError::validation)
}

fn queries(cfg: &ExperimentConfig) -> Result<QuerySet> {
    let path = require(&cfg.queries_path, "--queries")?;
    let format = ExperimentConfig::table_format(path, cfg.queries_format)?;
    load_queries_detect(path, format).map_err(CliError::validation)
}

fn tables(cfg: &ExperimentConfig) -> Result<RewriteTables> {
    let tables = cfg.augment.load_tables().map_err(CliError::validation)?;
    tables
        .check_mode(cfg.augment.mode)
        .map_err(CliError::validation)?;
    Ok(tables)
}

/// Writes to `path`, or standard output when absent.
fn with_output(
    path: Option<&Path>,
    f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<()> {
    let result = match path {
        Some(p) => File::create(p).and_then(|file| {
            let mut out = BufWriter::new(file);
            f(&mut out)?;
            out.flush()
        }),
        None => {
            let mut out = std::io::stdout().lock();
            f(&mut out).and_then(|()| out.flush())
        }
    };
    result.map_err(|e| match path {
        Some(p) => CliError::Runtime(format!("{}: {e}", p.display())),
        None => CliError::runtime(e),
    })
}

fn emit_run(run: &Run, output: Option<&Path>, predictions: Option<&Path>) -> Result<()> {
    with_output(output, |w| {
        write_run_to(run, w).map_err(std::io::Error::other)
    })?;
    if let Some(p) = predictions {
        write_predictions(run, p)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

pub fn index(args: IndexArgs) -> Result<()> {
    let cfg = settings(&args.input)?;
    let RetrievalConfig::Bm25(params) = cfg.retrieval else {
        return Err(CliError::validation(
            "the config selects dense retrieval; nothing to index",
        ));
    };
    params.validate().map_err(CliError::validation)?;
    let preproc = preprocess_config(&cfg)?;
    let corpus = corpus(&cfg)?;
    let index = InvertedIndex::build(&corpus, &preproc, params).map_err(CliError::validation)?;
    index
        .save(&args.output)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.output.display())))?;
    eprintln!(
        "indexed {} documents, {} terms, avg length {:.1} -> {}",
        index.n_docs(),
        index.n_terms(),
        index.avg_doc_len(),
        args.output.display()
    );
    Ok(())
}

pub fn retrieve(args: RetrieveArgs) -> Result<()> {
    let mut cfg = settings(&args.input)?;
    if let (Some(docs), Some(queries)) = (&args.doc_embeddings, &args.query_embeddings) {
        cfg.retrieval = RetrievalConfig::Dense {
            doc_embeddings: docs.clone(),
            query_embeddings: queries.clone(),
        };
    }
    if let Some(k) = args.k {
        cfg.retrieval_k = k;
    }
    // evaluation depth is irrelevant here; keep validation from tripping on it
    cfg.eval_k = cfg.eval_k.min(cfg.retrieval_k).max(1);
    cfg.validate()?;
    let preproc = preprocess_config(&cfg)?;
    let queries = queries(&cfg)?;
    let tables = tables(&cfg)?;

    let (corpus, retriever) = match &args.index {
        Some(path) => {
            if matches!(cfg.retrieval, RetrievalConfig::Dense { .. }) {
                return Err(CliError::validation(
                    "--index cannot be combined with dense retrieval",
                ));
            }
            // only insist on a matching configuration when one was given explicitly
            let explicit =
                args.input.config.is_some() || args.input.k1.is_some() || args.input.b.is_some();
            let expected = match &cfg.retrieval {
                RetrievalConfig::Bm25(params) if explicit => Some((&preproc, params)),
                _ => None,
            };
            let index = InvertedIndex::load(path, expected)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            (Corpus::default(), Retriever::Bm25(index))
        }
        None => {
            let corpus = corpus(&cfg)?;
            let retriever = build_retriever(&cfg, &corpus, &preproc)?;
            (corpus, retriever)
        }
    };
    let output = execute_pipeline(
        &corpus,
        &queries,
        &retriever,
        cfg.retrieval_k,
        cfg.augment.mode,
        &tables,
        None,
    )?;
    emit_run(
        &output.retrieval,
        args.output.as_deref(),
        args.predictions.as_deref(),
    )?;
    eprintln!(
        "retrieved up to {} candidates for {} queries",
        cfg.retrieval_k,
        output.retrieval.len()
    );
    Ok(())
}

/// Applies scorer flags on top of the config's rerank section.
fn apply_scorer(cfg: &mut ExperimentConfig, args: &ScorerArgs) {
    if let Some(choice) = args.scorer {
        cfg.rerank = choice.kind().map(|kind| match &cfg.rerank {
            Some(existing) if existing.kind == kind => existing.clone(),
            _ => RerankConfig::builtin(kind),
        });
    } else if args.endpoint.is_some() && cfg.rerank.is_none() {
        cfg.rerank = Some(RerankConfig::builtin(
            claim_anchor::experiment::ScorerKind::External,
        ));
    }
    if let Some(r) = &mut cfg.rerank {
        if args.endpoint.is_some() {
            r.endpoint.clone_from(&args.endpoint);
        }
        if let Some(t) = args.timeout_ms {
            r.timeout_ms = t;
        }
    }
}

pub fn rerank(args: RerankArgs) -> Result<()> {
    let mut cfg = settings(&args.input)?;
    apply_scorer(&mut cfg, &args.scorer);
    cfg.eval_k = cfg.eval_k.min(cfg.retrieval_k).max(1);
    cfg.validate()?;
    let Some(rerank_cfg) = &cfg.rerank else {
        return Err(CliError::validation(
            "no scorer selected; pass --scorer or add a [rerank] section",
        ));
    };
    let preproc = preprocess_config(&cfg)?;
    let env = std::env::var(SCORER_ENV).ok();
    let scorer = rerank_cfg.build(&preproc, env.as_deref())?;
    let corpus = corpus(&cfg)?;
    let queries = augment_queries(&queries(&cfg)?, cfg.augment.mode, &tables(&cfg)?)
        .map_err(CliError::validation)?;
    let run = load_run(&args.run, Stage::Retrieval)
        .map_err(|e| CliError::Validation(format!("{}: {e}", args.run.display())))?;
    let reranked = rerank_run(&queries, &run, &corpus, &scorer).map_err(CliError::runtime)?;
    emit_run(
        &reranked,
        args.output.as_deref(),
        args.predictions.as_deref(),
    )?;
    eprintln!(
        "reranked {} queries with `{}`",
        reranked.len(),
        rerank_cfg.label()
    );
    Ok(())
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let run = load_run(&args.run, Stage::Retrieval)
        .map_err(|e| CliError::Validation(format!("{}: {e}", args.run.display())))?;
    let format = ExperimentConfig::table_format(&args.gold, args.gold_format)?;
    let gold = load_queries(&args.gold, format, true)
        .map_err(|e| CliError::Validation(format!("{}: {e}", args.gold.display())))?
        .gold();
    let report = mrr_at_k(&run, &gold, args.k).map_err(CliError::validation)?;
    let missing = gold.keys().filter(|q| run.get(q).is_none()).count();
    if missing > 0 {
        eprintln!(
            "warning: {missing} of {} gold queries have no ranking and count as 0",
            gold.len()
        );
    }
    let mut out = std::io::stdout().lock();
    let mut print = || -> std::io::Result<()> {
        if args.per_query {
            for (post_id, rr) in &report.per_query {
                writeln!(out, "{post_id}\t{rr}")?;
            }
        }
        writeln!(out, "mrr@{}={}", report.k, report.mrr)
    };
    print().map_err(CliError::runtime)
}

fn parse_modes(raw: &[String]) -> Result<Vec<AugmentMode>> {
    if raw.iter().any(|m| m == "all") {
        return Ok(AugmentMode::ALL.to_vec());
    }
    raw.iter()
        .map(|m| {
            m.trim()
                .parse::<AugmentMode>()
                .map_err(CliError::validation)
        })
        .collect()
}

pub fn experiment(args: ExperimentArgs) -> Result<()> {
    let mut cfg = settings(&args.input)?;
    apply_scorer(&mut cfg, &args.scorer);
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(k) = args.retrieval_k {
        cfg.retrieval_k = k;
    }
    if let Some(k) = args.eval_k {
        cfg.eval_k = k;
    }
    require(&cfg.corpus_path, "--corpus")?;
    require(&cfg.queries_path, "--queries")?;
    require(&cfg.output_dir, "--output-dir")?;

    if let Some(raw) = &args.modes {
        let modes = parse_modes(raw)?;
        let rows = run_grid(&cfg, &modes)?;
        print!("{}", summary_table(&rows));
        eprintln!("reports written under {}", cfg.output_dir.display());
        return Ok(());
    }
    let report = run_experiment(&cfg)?;
    let k = report.config.eval_k;
    println!("retrieval mrr@{k}={}", report.mrr_after_retrieval);
    if let Some(m) = report.mrr_after_rerank {
        println!("rerank mrr@{k}={m}");
    }
    let timings = report
        .timings_ms
        .iter()
        .map(|(stage, ms)| format!("{stage} {ms:.0}ms"))
        .collect::<Vec<_>>()
        .join(", ");
    eprintln!(
        "{} queries; {timings}; outputs in {}",
        report.n_queries,
        cfg.output_dir.display()
    );
    Ok(())
}

pub fn augment(args: AugmentArgs) -> Result<()> {
    let cfg = settings(&args.input)?;
    let queries = queries(&cfg)?;
    let augmented = augment_queries(&queries, cfg.augment.mode, &tables(&cfg)?)
        .map_err(CliError::validation)?;
    let format = args
        .output
        .as_deref()
        .and_then(|p| TableFormat::from_path(p).ok())
        .unwrap_or(TableFormat::Tsv);
    with_output(args.output.as_deref(), |w| {
        augmented.write(w, format).map_err(std::io::Error::other)
    })?;
    eprintln!(
        "augmented {} queries with `{}`",
        augmented.len(),
        cfg.augment.mode
    );
    Ok(())
}
