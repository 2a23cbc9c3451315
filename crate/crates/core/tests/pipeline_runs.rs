mod common;

use std::collections::HashMap;
use std::path::Path;

use tracelink::consensus::cons_distinc_variant;
use tracelink::corpus::load_project;
use tracelink::hashing::{content_hash, file_hash};
use tracelink::parsing::{extract_candidate_biterms, read_conllu, PosFilter};
use tracelink::pipeline::{self, execute, Mode, PipelineConfig, Services};
use tracelink::preprocess::{preprocess_artifact, DiffTrimConfig};
use tracelink::translation::{is_non_english, DetectorConfig, TranslationCache, TranslatorId};
use tracelink::weighting::artifact_len;

use common::planted_dir;

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        std::fs::copy(e.path(), to.join(e.file_name())).unwrap();
    }
}

/// Planted fixture copied into a scratch directory, so runs never touch the
/// checked-in caches.
fn planted(mode: &str) -> (tempfile::TempDir, PipelineConfig) {
    let dir = tempfile::tempdir().unwrap();
    let src = planted_dir();
    std::fs::copy(src.join("dataset.json"), dir.path().join("dataset.json")).unwrap();
    std::fs::copy(src.join("translations.jsonl"), dir.path().join("translations.jsonl")).unwrap();
    copy_dir(&src.join("parses"), &dir.path().join("parses"));
    let cfg = PipelineConfig {
        dataset: Some(dir.path().join("dataset.json")),
        mode: mode.parse().unwrap(),
        translators: ["alpha", "beta", "gamma"]
            .iter()
            .map(|t| TranslatorId::new(*t).unwrap())
            .collect(),
        translation_cache: Some(dir.path().join("translations.jsonl")),
        parse_cache: Some(dir.path().join("parses")),
        out: dir.path().join("out"),
        offline: true,
        ..PipelineConfig::default()
    };
    (dir, cfg)
}

#[test]
fn basic_run_writes_outputs_and_manifest() {
    let (_dir, cfg) = planted("basic");
    let manifest = pipeline::run(&cfg, &Services::offline()).unwrap();
    let metrics = std::fs::read_to_string(cfg.out.join("metrics.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&metrics).unwrap();
    assert_eq!(json["mode"], "basic");
    assert_eq!(json["project"], "planted");
    assert_eq!(json["excluded_queries"], serde_json::json!(["106"]));
    let ranked = std::fs::read_to_string(cfg.out.join("ranked.csv")).unwrap();
    assert_eq!(ranked.lines().count(), 1 + 6 * 8);
    assert!(ranked.starts_with("issue_id,commit_id,similarity,rank\n"));
    for name in ["ranked.csv", "metrics.json"] {
        assert_eq!(
            manifest.output_hash(name).unwrap(),
            file_hash(&cfg.out.join(name)).unwrap()
        );
    }
    let on_disk = tracelink::RunManifest::load(&cfg.out.join("manifest.json")).unwrap();
    assert_eq!(on_disk, manifest);
    assert!(manifest.input_hashes.contains_key("dataset"));
    assert!(!manifest.input_hashes.contains_key("parse_cache"));
}

#[test]
fn every_mode_is_deterministic() {
    for mode in ["basic", "single:alpha", "multicob", "aviate"] {
        let (_dir, cfg) = planted(mode);
        let a = pipeline::run(&cfg, &Services::offline()).unwrap();
        let first: Vec<Vec<u8>> = ["ranked.csv", "metrics.json"]
            .iter()
            .map(|n| std::fs::read(cfg.out.join(n)).unwrap())
            .collect();
        let b = pipeline::run(&cfg, &Services::offline()).unwrap();
        for (n, bytes) in ["ranked.csv", "metrics.json"].iter().zip(first) {
            assert_eq!(std::fs::read(cfg.out.join(n)).unwrap(), bytes, "{mode} {n}");
        }
        assert_eq!(a.outputs, b.outputs);
        assert_eq!(a.input_hashes, b.input_hashes);
    }
}

#[test]
fn weighting_helps_on_planted_fixture() {
    let ap = |mode: &str| {
        let (_dir, cfg) = planted(mode);
        pipeline::run(&cfg, &Services::offline()).unwrap().ap
    };
    let (basic, single, multicob, aviate) = (ap("basic"), ap("single:alpha"), ap("multicob"), ap("aviate"));
    assert!(
        basic <= single && single <= multicob && multicob <= aviate,
        "{basic} {single} {multicob} {aviate}"
    );
    assert!(aviate > single);
}

#[test]
fn corpus_baseline_matches_brute_force() {
    let (_dir, cfg) = planted("aviate");
    let project = load_project(cfg.dataset.as_ref().unwrap()).unwrap();
    let out = execute(&cfg, &project, &Services::offline()).unwrap();
    let index = out.consensus.as_ref().unwrap();

    let cache = TranslationCache::open(cfg.translation_cache.as_ref().unwrap()).unwrap();
    let biterms_of = |text: &str| {
        let path = cfg
            .parse_cache
            .as_ref()
            .unwrap()
            .join(format!("{}.conllu", content_hash(text)));
        let tokens = read_conllu(&std::fs::read_to_string(path).unwrap()).unwrap();
        extract_candidate_biterms(&tokens, &PosFilter::default())
    };
    let mut scores = Vec::new();
    let mut lens: HashMap<String, usize> = HashMap::new();
    for artifact in project.artifacts() {
        let mut base = Vec::new();
        for s in preprocess_artifact(artifact, &DiffTrimConfig::default()) {
            let texts: Vec<String> = if is_non_english(&s.text, &DetectorConfig::default()) {
                ["alpha", "beta", "gamma"]
                    .iter()
                    .map(|t| cache.get(&content_hash(&s.text), t).unwrap().to_string())
                    .collect()
            } else {
                vec![s.text.clone()]
            };
            base.push(texts[0].clone());
            let best = texts
                .iter()
                .map(|t| cons_distinc_variant(&biterms_of(t), index))
                .fold(f64::NEG_INFINITY, f64::max);
            scores.push(best);
        }
        lens.insert(artifact.id.clone(), artifact_len(&base.join("\n")));
    }
    let baseline = out.baseline.unwrap();
    assert_eq!(baseline.sentences, scores.len());
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    assert!((baseline.mean_cons_distinc - mean).abs() < 1e-12);

    for w in &out.weighting {
        assert!(w.emphasis >= baseline.mean_cons_distinc);
        let expected = (0.1 * w.emphasis * lens[&w.artifact_id] as f64 - 1e-9).ceil() as u32;
        assert_eq!(w.repetition_count, expected, "{}", w.artifact_id);
    }
}

#[test]
fn multicob_appends_each_token_once() {
    let (_dir, cfg) = planted("multicob");
    let project = load_project(cfg.dataset.as_ref().unwrap()).unwrap();
    let out = execute(&cfg, &project, &Services::offline()).unwrap();
    assert!(out.weighting.iter().all(|w| w.repetition_count == 0));
    for (_, _, doc) in &out.documents {
        let mut seen = std::collections::HashSet::new();
        assert!(doc.appended.iter().all(|t| seen.insert(t)), "{:?}", doc.appended);
    }
    assert!(out
        .documents
        .iter()
        .any(|(id, _, d)| id == "101" && d.appended.contains(&"attributdisabl".to_string())));
}

#[test]
fn missing_translation_fails_without_outputs() {
    let (dir, cfg) = planted("aviate");
    std::fs::write(dir.path().join("translations.jsonl"), "").unwrap();
    let err = pipeline::run(&cfg, &Services::offline()).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("alpha"), "{err}");
    assert!(!cfg.out.join("ranked.csv").exists());
    assert!(!cfg.out.join("manifest.json").exists());
}

#[test]
fn missing_parse_fails() {
    let (dir, cfg) = planted("multicob");
    let parses = dir.path().join("parses");
    let victim = std::fs::read_dir(&parses).unwrap().next().unwrap().unwrap().path();
    std::fs::remove_file(victim).unwrap();
    let err = pipeline::run(&cfg, &Services::offline()).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(!cfg.out.join("metrics.json").exists());
}

#[test]
fn basic_needs_no_caches() {
    let (_dir, mut cfg) = planted("basic");
    cfg.translators.clear();
    cfg.translation_cache = None;
    cfg.parse_cache = None;
    pipeline::run(&cfg, &Services::offline()).unwrap();
}

#[test]
fn eval_reproduces_run_metrics() {
    let (_dir, cfg) = planted("aviate");
    pipeline::run(&cfg, &Services::offline()).unwrap();
    let report =
        pipeline::evaluate_ranked(&cfg.out.join("ranked.csv"), cfg.dataset.as_ref().unwrap(), "aviate").unwrap();
    assert_eq!(
        report.to_json(),
        std::fs::read_to_string(cfg.out.join("metrics.json")).unwrap()
    );
}

#[test]
fn ablation_writes_table() {
    let (_dir, cfg) = planted("basic");
    let modes: Vec<Mode> = ["basic", "single:alpha", "multicob", "aviate"]
        .iter()
        .map(|m| m.parse().unwrap())
        .collect();
    let (manifests, report) = pipeline::ablate(&cfg, &modes, &Services::offline()).unwrap();
    assert_eq!(manifests.len(), 4);
    assert!(cfg.out.join("single-alpha/ranked.csv").exists());
    let csv = std::fs::read_to_string(cfg.out.join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(report.columns[3].0, "aviate");
}

#[test]
fn debug_exports_are_listed_in_manifest() {
    let (_dir, mut cfg) = planted("aviate");
    cfg.debug_exports = true;
    let m = pipeline::run(&cfg, &Services::offline()).unwrap();
    let tsv = std::fs::read_to_string(cfg.out.join("consensus.tsv")).unwrap();
    assert!(
        tsv.lines().any(|l| l.starts_with("attribut\tdisabl\tamod\t2\t")),
        "{tsv}"
    );
    assert!(m.output_hash("emphasis.json").is_some());
    assert!(m.consensual_biterms > 0);
    assert_eq!(m.variant_count, 57);
}
