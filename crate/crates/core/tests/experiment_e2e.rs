use std::fs;
use std::path::Path;

use claim_anchor::experiment::{
    run_experiment_with_env, run_grid, summary_table, RerankConfig, RetrievalConfig, ScorerKind,
    REPORT_FILE, RERANK_PREDICTIONS_FILE, RETRIEVAL_PREDICTIONS_FILE, RETRIEVAL_RUN_FILE,
};
use claim_anchor::synthetic::{SyntheticConfig, SyntheticDataset, SyntheticFiles};
use claim_anchor::{AugmentMode, EmbeddingKind, EmbeddingStore, ExperimentConfig, PipelineStage};

fn dataset(dir: &Path, n_docs: usize) -> SyntheticFiles {
    SyntheticDataset::generate(&SyntheticConfig {
        n_docs,
        ..SyntheticConfig::default()
    })
    .write_dir(&dir.join("data"))
    .unwrap()
}

fn ambiguous_config(files: &SyntheticFiles, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(&files.corpus, &files.ambiguous_queries, out);
    cfg.augment.formal = Some(files.formal.clone());
    cfg.augment.english_formal = Some(files.english_formal.clone());
    cfg.augment.keywords = Some(files.keywords.clone());
    cfg
}

#[test]
fn identity_rerank_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let files = dataset(dir.path(), 40);
    let mut cfg =
        ExperimentConfig::new(&files.corpus, &files.exact_queries, dir.path().join("out"));
    cfg.rerank = Some(RerankConfig::builtin(ScorerKind::Identity));
    let report = run_experiment_with_env(&cfg, None).unwrap();
    assert_eq!(report.n_queries, 40);
    assert_eq!(report.mrr_after_rerank, Some(report.mrr_after_retrieval));
    assert!(report.mrr_after_retrieval > 0.99);
    for f in [
        REPORT_FILE,
        RETRIEVAL_PREDICTIONS_FILE,
        RETRIEVAL_RUN_FILE,
        RERANK_PREDICTIONS_FILE,
    ] {
        assert!(cfg.output_dir.join(f).is_file(), "{f}");
    }
    let a = fs::read(cfg.output_dir.join(RETRIEVAL_PREDICTIONS_FILE)).unwrap();
    let b = fs::read(cfg.output_dir.join(RERANK_PREDICTIONS_FILE)).unwrap();
    assert_eq!(a, b);
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(cfg.output_dir.join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(json["config"]["preprocess"]["stopwords_count"], 143);
    assert_eq!(json["per_query"].as_array().unwrap().len(), 40);
}

#[test]
fn repeated_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let files = dataset(dir.path(), 60);
    let mut reports = Vec::new();
    for out in ["a", "b"] {
        let mut cfg = ambiguous_config(&files, &dir.path().join(out));
        cfg.augment.mode = AugmentMode::ConcatAll;
        cfg.rerank = Some(RerankConfig::builtin(ScorerKind::LexicalOverlap));
        reports.push(run_experiment_with_env(&cfg, None).unwrap());
    }
    assert_eq!(
        reports[0].deterministic_json(),
        reports[1].deterministic_json()
    );
    for f in [
        RETRIEVAL_PREDICTIONS_FILE,
        RERANK_PREDICTIONS_FILE,
        RETRIEVAL_RUN_FILE,
    ] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn grid_over_all_modes() {
    let dir = tempfile::tempdir().unwrap();
    let files = dataset(dir.path(), 80);
    let cfg = ambiguous_config(&files, &dir.path().join("grid"));
    let rows = run_grid(&cfg, &AugmentMode::ALL).unwrap();
    assert_eq!(rows.len(), 7);
    let mrr = |m: AugmentMode| {
        rows.iter()
            .find(|(x, _)| *x == m)
            .unwrap()
            .1
            .mrr_after_retrieval
    };
    assert!(mrr(AugmentMode::ConcatFormal) >= mrr(AugmentMode::None));
    assert!(mrr(AugmentMode::ReplaceFormal) > 0.99);
    assert!(mrr(AugmentMode::ReplaceKeywords) <= mrr(AugmentMode::None));
    let table = summary_table(&rows);
    assert_eq!(table.lines().count(), 9);
    assert!(table.contains("| Concat w/ Formal |"), "{table}");
    assert!(
        table.lines().nth(2).unwrap().starts_with("| None | - |"),
        "{table}"
    );
    for mode in AugmentMode::ALL {
        assert!(dir
            .path()
            .join("grid")
            .join(mode.as_str())
            .join(REPORT_FILE)
            .is_file());
    }
}

#[test]
fn toml_config_with_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path(), 20);
    let path = dir.path().join("exp.toml");
    fs::write(
        &path,
        r#"
name = "toml-run"
corpus_path = "data/corpus.csv"
queries_path = "data/ambiguous_queries.tsv"
output_dir = "out"
retrieval_k = 50

[retrieval]
kind = "bm25"
k1 = 1.2

[augment]
mode = "concat_formal"
formal = "data/formal.tsv"

[rerank]
kind = "lexical_overlap"
"#,
    )
    .unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.output_dir, dir.path().join("out"));
    let report = run_experiment_with_env(&cfg, None).unwrap();
    assert_eq!(report.config.name.as_deref(), Some("toml-run"));
    assert!(report.mrr_after_rerank.is_some());
    assert!(dir.path().join("out").join(REPORT_FILE).is_file());
}

#[test]
fn dense_retrieval_path() {
    let dir = tempfile::tempdir().unwrap();
    let files = dataset(dir.path(), 10);
    // one-hot document vectors, query vector points at its gold document
    let mut docs = EmbeddingStore::new(10, EmbeddingKind::Document);
    let mut queries = EmbeddingStore::new(10, EmbeddingKind::Query);
    for i in 0..10 {
        let mut v = vec![0.01; 10];
        v[i] = 1.0;
        docs.insert(format!("d{i:05}"), &v).unwrap();
        queries.insert(format!("e{i:05}"), &v).unwrap();
    }
    let doc_path = dir.path().join("docs.emb");
    let query_path = dir.path().join("queries.emb");
    docs.write(fs::File::create(&doc_path).unwrap()).unwrap();
    queries
        .write(fs::File::create(&query_path).unwrap())
        .unwrap();
    let mut cfg =
        ExperimentConfig::new(&files.corpus, &files.exact_queries, dir.path().join("out"));
    cfg.retrieval = RetrievalConfig::Dense {
        doc_embeddings: doc_path,
        query_embeddings: query_path,
    };
    let report = run_experiment_with_env(&cfg, None).unwrap();
    assert_eq!(report.mrr_after_retrieval, 1.0);
}

#[test]
fn errors_name_the_failing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let files = dataset(dir.path(), 10);

    let cfg = ExperimentConfig::new(
        dir.path().join("missing.csv"),
        &files.exact_queries,
        dir.path().join("o1"),
    );
    let err = run_experiment_with_env(&cfg, None).unwrap_err();
    assert_eq!(err.failed_stage(), Some(PipelineStage::Load));
    assert!(err.is_validation());

    // the formal table only covers the ambiguous set
    let mut cfg = ExperimentConfig::new(&files.corpus, &files.exact_queries, dir.path().join("o2"));
    cfg.augment.mode = AugmentMode::ReplaceFormal;
    cfg.augment.formal = Some(files.formal.clone());
    let err = run_experiment_with_env(&cfg, None).unwrap_err();
    assert_eq!(err.failed_stage(), Some(PipelineStage::Augment), "{err}");

    let mut cfg = ExperimentConfig::new(&files.corpus, &files.exact_queries, dir.path().join("o3"));
    cfg.rerank = Some(RerankConfig {
        endpoint: Some(format!("cmd:{} error", env!("CARGO_BIN_EXE_echo-scorer"))),
        ..RerankConfig::builtin(ScorerKind::External)
    });
    let err = run_experiment_with_env(&cfg, None).unwrap_err();
    assert_eq!(err.failed_stage(), Some(PipelineStage::Rerank));
    assert!(!err.is_validation());

    let mut cfg = ExperimentConfig::new(&files.corpus, &files.exact_queries, dir.path().join("o4"));
    cfg.rerank = Some(RerankConfig::builtin(ScorerKind::External));
    let err = run_experiment_with_env(&cfg, None).unwrap_err();
    assert_eq!(err.failed_stage(), None);
}

#[test]
fn external_scorer_from_environment_value() {
    let dir = tempfile::tempdir().unwrap();
    let files = dataset(dir.path(), 15);
    let mut cfg =
        ExperimentConfig::new(&files.corpus, &files.exact_queries, dir.path().join("out"));
    cfg.rerank = Some(RerankConfig::builtin(ScorerKind::External));
    let endpoint = format!("cmd:{} reverse", env!("CARGO_BIN_EXE_echo-scorer"));
    let report = run_experiment_with_env(&cfg, Some(&endpoint)).unwrap();
    // reverse scores keep the retrieval order
    assert_eq!(report.mrr_after_rerank, Some(report.mrr_after_retrieval));
    assert_eq!(
        report.config.rerank.unwrap().endpoint.as_deref(),
        Some(endpoint.as_str())
    );
}
