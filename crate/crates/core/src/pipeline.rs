//! End-to-end runs: configuration, ablation modes, output files and the run
//! manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::{self, ConsensusIndex, EnrichmentToken, SentenceSelection, VariantBiterms};
use crate::corpus::{load_project, Artifact, ArtifactKind, Project, SectionKind};
use crate::error::{Error, Result};
use crate::evaluation::{round2, MetricsReport};
use crate::hashing::{bytes_hash, dir_hash, file_hash, write_atomic};
use crate::parsing::{
    extract_candidate_biterms, parse_variant, HttpParseProvider, ParseCache, ParseProvider, PosFilter,
};
use crate::preprocess::{preprocess_artifact, CleanSentence, DiffTrimConfig};
use crate::retrieval::{
    build_vectors, rank_links, ranked_csv, read_ranked_csv, similarity_matrix, Document, RankedLink, Stopwords,
};
use crate::translation::{
    translate_corpus, validate_roster, variant_count, ClientSet, DetectorConfig, HttpTranslator, LanguagePair,
    RetryPolicy, SentenceVariants, TranslateOptions, TranslationCache, Translator, TranslatorId,
};
use crate::weighting::{
    apply_enrichment, artifact_len, emphasis, repetition_count, section_score, sentence_score, validate_scale_factor,
    CorpusBaseline, EnrichedDocument, DEFAULT_SCALE_FACTOR,
};

pub const RANKED_FILE: &str = "ranked.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONSENSUS_FILE: &str = "consensus.tsv";
pub const EMPHASIS_FILE: &str = "emphasis.json";

/// Pipeline variant.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Mode {
    /// VSM over untranslated text.
    Basic,
    /// Non-English sentences replaced by one translator's output.
    Single(TranslatorId),
    /// Single-translator text plus consensual biterms, each appended once.
    MultiCob,
    /// MultiCob plus emphasis of summary/message biterms.
    Aviate,
}

impl Mode {
    pub fn needs_consensus(&self) -> bool {
        matches!(self, Mode::MultiCob | Mode::Aviate)
    }

    /// File-system friendly name.
    pub fn slug(&self) -> String {
        self.to_string().replace(':', "-")
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Basic => f.write_str("basic"),
            Mode::Single(t) => write!(f, "single:{t}"),
            Mode::MultiCob => f.write_str("multicob"),
            Mode::Aviate => f.write_str("aviate"),
        }
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "basic" => return Ok(Mode::Basic),
            "multicob" => return Ok(Mode::MultiCob),
            "aviate" => return Ok(Mode::Aviate),
            _ => {}
        }
        if let Some(t) = s.strip_prefix("single:") {
            return Ok(Mode::Single(TranslatorId::new(t)?));
        }
        Err(Error::Config(format!(
            "unknown mode \"{s}\" (expected basic, single:<translator>, multicob or aviate)"
        )))
    }
}

impl Serialize for Mode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Mode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub url: String,
    /// Environment variable holding a bearer token.
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default)]
    pub rate_limit_per_sec: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: Option<PathBuf>,
    pub mode: Mode,
    /// Translator roster, in tie-breaking order.
    pub translators: Vec<TranslatorId>,
    /// Translator whose text forms the document body in consensus modes;
    /// defaults to the first roster entry.
    pub base_translator: Option<TranslatorId>,
    pub language_pair: LanguagePair,
    pub scale_factor: f64,
    pub itvf_threshold: f64,
    pub diff_trim: DiffTrimConfig,
    pub detector: DetectorConfig,
    pub pos_filter: PosFilter,
    pub stopwords: Option<PathBuf>,
    pub translation_cache: Option<PathBuf>,
    pub parse_cache: Option<PathBuf>,
    pub out: PathBuf,
    /// Never contact translator or parser endpoints.
    pub offline: bool,
    /// Also write consensus.tsv and emphasis.json.
    pub debug_exports: bool,
    pub max_in_flight: usize,
    pub endpoints: BTreeMap<String, EndpointConfig>,
    pub parser: Option<EndpointConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dataset: None,
            mode: Mode::Aviate,
            translators: Vec::new(),
            base_translator: None,
            language_pair: LanguagePair::default(),
            scale_factor: DEFAULT_SCALE_FACTOR,
            itvf_threshold: consensus::DEFAULT_ITVF_THRESHOLD,
            diff_trim: DiffTrimConfig::default(),
            detector: DetectorConfig::default(),
            pos_filter: PosFilter::default(),
            stopwords: None,
            translation_cache: None,
            parse_cache: None,
            out: PathBuf::from("out"),
            offline: false,
            debug_exports: false,
            max_in_flight: 4,
            endpoints: BTreeMap::new(),
            parser: None,
        }
    }
}

impl PipelineConfig {
    /// Reads a TOML config. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut cfg.dataset,
            &mut cfg.stopwords,
            &mut cfg.translation_cache,
            &mut cfg.parse_cache,
        ]
        .into_iter()
        .flatten()
        {
            resolve(p);
        }
        resolve(&mut cfg.out);
        cfg.diff_trim = cfg.diff_trim.normalized();
        Ok(cfg)
    }

    /// Translator whose output forms the document body.
    pub fn base_translator(&self) -> Option<&TranslatorId> {
        match &self.mode {
            Mode::Basic => None,
            Mode::Single(t) => Some(t),
            Mode::MultiCob | Mode::Aviate => self.base_translator.as_ref().or(self.translators.first()),
        }
    }

    /// Translators that must supply a variant for every non-English sentence.
    pub fn active_roster(&self) -> Vec<TranslatorId> {
        match &self.mode {
            Mode::Basic => Vec::new(),
            Mode::Single(t) => vec![t.clone()],
            Mode::MultiCob | Mode::Aviate => self.translators.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.is_none() {
            return Err(Error::Config("no dataset given".into()));
        }
        validate_scale_factor(self.scale_factor)?;
        if !(0.0..=1.0).contains(&self.itvf_threshold) {
            return Err(Error::Config(format!(
                "ITVF threshold {} outside [0, 1]",
                self.itvf_threshold
            )));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        self.pos_filter.validate()?;
        match &self.mode {
            Mode::Basic => {}
            Mode::Single(_) => {
                if self.translation_cache.is_none() {
                    return Err(Error::Config(format!("mode {} needs a translation cache", self.mode)));
                }
            }
            Mode::MultiCob | Mode::Aviate => {
                validate_roster(&self.translators)
                    .map_err(|e| Error::Config(format!("mode {} needs a translator roster: {e}", self.mode)))?;
                let base = self.base_translator().expect("roster is nonempty");
                if !self.translators.contains(base) {
                    return Err(Error::Config(format!(
                        "base translator \"{base}\" is not in the roster"
                    )));
                }
                if self.translation_cache.is_none() {
                    return Err(Error::Config(format!("mode {} needs a translation cache", self.mode)));
                }
                if self.parse_cache.is_none() {
                    return Err(Error::Config(format!("mode {} needs a parse cache", self.mode)));
                }
            }
        }
        Ok(())
    }
}

/// External clients available to a run. Empty when offline.
#[derive(Default)]
pub struct Services {
    pub translators: ClientSet,
    pub parser: Option<Box<dyn ParseProvider>>,
}

impl Services {
    pub fn offline() -> Self {
        Services::default()
    }

    /// HTTP clients for every configured endpoint, unless the config is offline.
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self> {
        if cfg.offline {
            return Ok(Services::offline());
        }
        let mut translators = ClientSet::new();
        for (name, ep) in &cfg.endpoints {
            let token = match &ep.token_env {
                Some(var) => Some(std::env::var(var).map_err(|_| {
                    Error::Config(format!("environment variable {var} for translator {name} is not set"))
                })?),
                None => None,
            };
            let client = HttpTranslator::new(&ep.url, token, ep.rate_limit_per_sec)?;
            translators.insert(
                TranslatorId::new(name.as_str())?,
                Box::new(client) as Box<dyn Translator>,
            );
        }
        let parser = match &cfg.parser {
            Some(ep) => Some(Box::new(HttpParseProvider::new(&ep.url)?) as Box<dyn ParseProvider>),
            None => None,
        };
        Ok(Services { translators, parser })
    }
}

/// Weighting details of one artifact, for the debug export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactWeighting {
    pub artifact_id: String,
    pub kind: ArtifactKind,
    pub section_scores: BTreeMap<String, f64>,
    pub emphasis: f64,
    pub repetition_count: u32,
    pub appended: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub millis: u128,
}

/// In-memory result of a run.
#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub project: String,
    pub mode: Mode,
    pub documents: Vec<(String, ArtifactKind, EnrichedDocument)>,
    pub ranked: Vec<RankedLink>,
    pub metrics: MetricsReport,
    pub n_variants: usize,
    pub consensus: Option<ConsensusIndex>,
    pub baseline: Option<CorpusBaseline>,
    pub weighting: Vec<ArtifactWeighting>,
    pub timings: Vec<StageTiming>,
}

struct Timer {
    timings: Vec<StageTiming>,
    start: Instant,
}

impl Timer {
    fn new() -> Self {
        Timer {
            timings: Vec::new(),
            start: Instant::now(),
        }
    }

    fn lap(&mut self, stage: &str) {
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            millis: self.start.elapsed().as_millis(),
        });
        self.start = Instant::now();
    }
}

/// Runs every stage for `project` without touching the output directory.
pub fn execute(cfg: &PipelineConfig, project: &Project, services: &Services) -> Result<RunOutputs> {
    let mut timer = Timer::new();
    let stopwords = match &cfg.stopwords {
        Some(p) => Stopwords::load(p)?,
        None => Stopwords::default(),
    };

    let artifacts: Vec<&Artifact> = project.artifacts().collect();
    let sentences: Vec<Vec<CleanSentence>> = artifacts
        .par_iter()
        .map(|a| preprocess_artifact(a, &cfg.diff_trim))
        .collect();
    timer.lap("preprocess");

    let mut n_variants = 0;
    let mut consensus_index = None;
    let mut baseline = None;
    let mut weighting = Vec::new();

    let documents: Vec<EnrichedDocument> = if cfg.mode == Mode::Basic {
        sentences
            .iter()
            .map(|s| plain_document(s.iter().map(|c| c.text.as_str())))
            .collect()
    } else {
        let base = cfg.base_translator().expect("validated").clone();
        let translated = translate_sentences(cfg, &cfg.active_roster(), &sentences, services)?;
        n_variants = variant_count(&translated);
        timer.lap("translate");

        let grouped = regroup(&translated, &sentences);
        let base_texts: Vec<EnrichedDocument> = grouped
            .iter()
            .map(|group| {
                plain_document(group.iter().map(|sv| match sv.variant_by(&base) {
                    Some(v) => v.text.as_str(),
                    None => sv.variants[0].text.as_str(),
                }))
            })
            .collect();

        if cfg.mode.needs_consensus() {
            let parse_cache = ParseCache::open(cfg.parse_cache.as_ref().expect("validated"));
            let biterms = parse_all(
                &translated,
                &parse_cache,
                services.parser.as_deref(),
                &cfg.pos_filter,
                cfg.max_in_flight,
            )?;
            timer.lap("parse");

            let per_sentence: Vec<Vec<VariantBiterms>> = translated
                .iter()
                .map(|sv| {
                    sv.variants
                        .iter()
                        .map(|v| VariantBiterms {
                            source: v.translator.clone(),
                            biterms: biterms[v.text.as_str()].clone(),
                        })
                        .collect()
                })
                .collect();
            let side = |kind: ArtifactKind| {
                translated
                    .iter()
                    .zip(&per_sentence)
                    .filter(move |(sv, _)| sv.artifact_kind() == kind)
                    .flat_map(|(_, vbs)| vbs.iter().map(|vb| vb.biterms.as_slice()))
            };
            let index =
                ConsensusIndex::build(side(ArtifactKind::Issue), side(ArtifactKind::Commit), n_variants.max(1))?;
            let selections: Vec<SentenceSelection> = per_sentence
                .iter()
                .map(|vbs| {
                    consensus::select_sentence_biterms(vbs, &index, cfg.itvf_threshold)
                        .expect("every sentence has a variant")
                })
                .collect();
            let scores: Vec<f64> = selections
                .iter()
                .map(|s| sentence_score(&s.scores.iter().map(|(_, x)| *x).collect::<Vec<_>>()).unwrap_or(0.0))
                .collect();
            let corpus_baseline = CorpusBaseline::from_sentence_scores(&scores);
            timer.lap("consensus");

            let mut docs = Vec::with_capacity(artifacts.len());
            let mut offset = 0;
            for (artifact, (group, base_doc)) in artifacts.iter().zip(grouped.iter().zip(&base_texts)) {
                let range = offset..offset + group.len();
                offset += group.len();
                let sels = &selections[range.clone()];
                let sc = &scores[range];
                let routine = consensus::enrichment_tokens(sels.iter());
                let emphasized_section = match artifact.kind {
                    ArtifactKind::Issue => SectionKind::IssueSummary,
                    ArtifactKind::Commit => SectionKind::CommitMessage,
                };
                let in_section: Vec<usize> = group
                    .iter()
                    .enumerate()
                    .filter(|(_, sv)| sv.sentence.section == emphasized_section)
                    .map(|(i, _)| i)
                    .collect();
                let emphasized: Vec<EnrichmentToken> =
                    consensus::enrichment_tokens(in_section.iter().map(|&i| &sels[i]));
                let sec_score = section_score(&in_section.iter().map(|&i| sc[i]).collect::<Vec<_>>());
                let emph = emphasis(sec_score, &corpus_baseline);
                let rep = if cfg.mode == Mode::Aviate {
                    repetition_count(emph, artifact_len(&base_doc.text), cfg.scale_factor)?
                } else {
                    0
                };
                let doc = apply_enrichment(&base_doc.text, &routine, &emphasized, rep);
                let mut appended = BTreeMap::new();
                for t in &doc.appended {
                    *appended.entry(t.clone()).or_insert(0) += 1;
                }
                weighting.push(ArtifactWeighting {
                    artifact_id: artifact.id.clone(),
                    kind: artifact.kind,
                    section_scores: BTreeMap::from([(emphasized_section.to_string(), sec_score)]),
                    emphasis: emph,
                    repetition_count: rep,
                    appended,
                });
                docs.push(doc);
            }
            consensus_index = Some(index);
            baseline = Some(corpus_baseline);
            timer.lap("enrich");
            docs
        } else {
            base_texts
        }
    };

    let vsm_docs: Vec<Document> = artifacts
        .iter()
        .zip(&documents)
        .map(|(a, d)| Document::from_enriched(&a.id, a.kind, d, &stopwords))
        .collect();
    let space = build_vectors(&vsm_docs)?;
    let ranked = rank_links(&similarity_matrix(&space));
    timer.lap("retrieval");

    let metrics = MetricsReport::compute(&project.name, &cfg.mode.to_string(), &ranked, &project.ground_truth())?;
    timer.lap("evaluation");

    Ok(RunOutputs {
        project: project.name.clone(),
        mode: cfg.mode.clone(),
        documents: artifacts
            .iter()
            .zip(documents)
            .map(|(a, d)| (a.id.clone(), a.kind, d))
            .collect(),
        ranked,
        metrics,
        n_variants,
        consensus: consensus_index,
        baseline,
        weighting,
        timings: timer.timings,
    })
}

fn translate_sentences(
    cfg: &PipelineConfig,
    roster: &[TranslatorId],
    sentences: &[Vec<CleanSentence>],
    services: &Services,
) -> Result<Vec<SentenceVariants>> {
    let flat: Vec<CleanSentence> = sentences.iter().flatten().cloned().collect();
    let cache_path = cfg
        .translation_cache
        .as_ref()
        .ok_or_else(|| Error::Config("no translation cache given".into()))?;
    let mut cache = TranslationCache::open(cache_path)?;
    let opts = TranslateOptions {
        pair: cfg.language_pair.clone(),
        detector: cfg.detector.clone(),
        retry: RetryPolicy::default(),
        max_in_flight: cfg.max_in_flight,
    };
    let translated = translate_corpus(&flat, roster, &mut cache, &services.translators, &opts);
    cache.flush()?;
    translated
}

fn load_and_preprocess(cfg: &PipelineConfig) -> Result<Vec<Vec<CleanSentence>>> {
    let dataset = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| Error::Config("no dataset given".into()))?;
    let project = load_project(dataset)?;
    Ok(project
        .artifacts()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|a| preprocess_artifact(a, &cfg.diff_trim))
        .collect())
}

/// Fills the translation cache for every non-English sentence of the dataset
/// using the whole roster. Returns the number of variants.
pub fn populate_translations(cfg: &PipelineConfig, services: &Services) -> Result<usize> {
    validate_roster(&cfg.translators).map_err(|e| Error::Config(format!("translator roster: {e}")))?;
    let sentences = load_and_preprocess(cfg)?;
    let translated = translate_sentences(cfg, &cfg.translators, &sentences, services)?;
    Ok(variant_count(&translated))
}

/// Fills the parse cache for every variant text. Translations must already
/// be cached or obtainable from `services`. Returns the number of distinct
/// texts.
pub fn populate_parses(cfg: &PipelineConfig, services: &Services) -> Result<usize> {
    validate_roster(&cfg.translators).map_err(|e| Error::Config(format!("translator roster: {e}")))?;
    let parse_dir = cfg
        .parse_cache
        .as_ref()
        .ok_or_else(|| Error::Config("no parse cache given".into()))?;
    let sentences = load_and_preprocess(cfg)?;
    let translated = translate_sentences(cfg, &cfg.translators, &sentences, services)?;
    let cache = ParseCache::open(parse_dir);
    let parsed = parse_all(
        &translated,
        &cache,
        services.parser.as_deref(),
        &cfg.pos_filter,
        cfg.max_in_flight,
    )?;
    Ok(parsed.len())
}

/// Metrics of an existing ranked CSV against the dataset's true links.
pub fn evaluate_ranked(ranked_path: &Path, dataset: &Path, mode: &str) -> Result<MetricsReport> {
    let project = load_project(dataset)?;
    let mut ranked = read_ranked_csv(ranked_path)?;
    let issues: BTreeSet<&str> = project.issues.iter().map(|a| a.id.as_str()).collect();
    let commits: BTreeSet<&str> = project.commits.iter().map(|a| a.id.as_str()).collect();
    for l in &ranked {
        if !issues.contains(l.issue_id.as_str()) || !commits.contains(l.commit_id.as_str()) {
            return Err(Error::Validation(format!(
                "{}: link {} -> {} names an artifact missing from the dataset",
                ranked_path.display(),
                l.issue_id,
                l.commit_id
            )));
        }
    }
    // The file's own ranks are authoritative; printed similarities are rounded.
    ranked.sort_by_key(|l| l.rank);
    MetricsReport::compute(&project.name, mode, &ranked, &project.ground_truth())
}

fn plain_document<'a>(sentences: impl Iterator<Item = &'a str>) -> EnrichedDocument {
    EnrichedDocument {
        text: sentences.collect::<Vec<_>>().join("\n"),
        appended: Vec::new(),
    }
}

/// Splits the flat variant list back into per-artifact groups.
fn regroup<'a>(flat: &'a [SentenceVariants], per_artifact: &[Vec<CleanSentence>]) -> Vec<&'a [SentenceVariants]> {
    let mut out = Vec::with_capacity(per_artifact.len());
    let mut offset = 0;
    for s in per_artifact {
        out.push(&flat[offset..offset + s.len()]);
        offset += s.len();
    }
    out
}

/// Candidate biterms of every distinct variant text.
fn parse_all<'a>(
    translated: &'a [SentenceVariants],
    cache: &ParseCache,
    provider: Option<&dyn ParseProvider>,
    filter: &PosFilter,
    max_in_flight: usize,
) -> Result<BTreeMap<&'a str, Vec<crate::parsing::Biterm>>> {
    let texts: BTreeSet<&str> = translated
        .iter()
        .flat_map(|sv| sv.variants.iter().map(|v| v.text.as_str()))
        .collect();
    let texts: Vec<&str> = texts.into_iter().collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let parsed: Vec<Result<Vec<crate::parsing::Biterm>>> = pool.install(|| {
        texts
            .par_iter()
            .map(|t| parse_variant(t, cache, provider).map(|tokens| extract_candidate_biterms(&tokens, filter)))
            .collect()
    });
    texts.into_iter().zip(parsed).map(|(t, r)| r.map(|b| (t, b))).collect()
}

/// Record of one run, written last into the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub project: String,
    pub mode: String,
    pub config: PipelineConfig,
    pub input_hashes: BTreeMap<String, String>,
    pub timings: Vec<StageTiming>,
    pub outputs: Vec<OutputFile>,
    pub ap: f64,
    pub map: f64,
    pub variant_count: usize,
    pub consensual_biterms: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    pub sha256: String,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading manifest {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: Some(e.line()),
            column: Some(e.column()),
            message: e.to_string(),
        })
    }

    pub fn output_hash(&self, name: &str) -> Option<&str> {
        self.outputs.iter().find(|o| o.name == name).map(|o| o.sha256.as_str())
    }
}

fn input_hashes(cfg: &PipelineConfig) -> Result<BTreeMap<String, String>> {
    let mut h = BTreeMap::new();
    h.insert(
        "dataset".to_string(),
        file_hash(cfg.dataset.as_ref().expect("validated"))?,
    );
    if let Some(p) = &cfg.stopwords {
        h.insert("stopwords".to_string(), file_hash(p)?);
    }
    if cfg.mode != Mode::Basic {
        if let Some(p) = cfg.translation_cache.as_ref().filter(|p| p.exists()) {
            h.insert("translation_cache".to_string(), file_hash(p)?);
        }
    }
    if cfg.mode.needs_consensus() {
        if let Some(p) = &cfg.parse_cache {
            h.insert("parse_cache".to_string(), dir_hash(p)?);
        }
    }
    Ok(h)
}

/// Loads the dataset, executes the pipeline and writes `ranked.csv`,
/// `metrics.json` (plus debug exports when enabled) and finally
/// `manifest.json` under `cfg.out`. Nothing is left behind on failure.
pub fn run(cfg: &PipelineConfig, services: &Services) -> Result<RunManifest> {
    cfg.validate()?;
    let mut timer = Timer::new();
    let project = load_project(cfg.dataset.as_ref().expect("validated"))?;
    timer.lap("load");
    let outputs = execute(cfg, &project, services)?;

    let mut files: Vec<(&str, Vec<u8>)> = vec![
        (RANKED_FILE, ranked_csv(&outputs.ranked).into_bytes()),
        (METRICS_FILE, outputs.metrics.to_json().into_bytes()),
    ];
    if cfg.debug_exports {
        if let Some(index) = &outputs.consensus {
            files.push((CONSENSUS_FILE, index.to_tsv().into_bytes()));
            let mut json = serde_json::to_string_pretty(&outputs.weighting).expect("weighting serializes");
            json.push('\n');
            files.push((EMPHASIS_FILE, json.into_bytes()));
        }
    }

    let mut timings = timer.timings;
    timings.extend(outputs.timings.iter().cloned());
    let manifest = RunManifest {
        project: outputs.project.clone(),
        mode: outputs.mode.to_string(),
        config: cfg.clone(),
        input_hashes: input_hashes(cfg)?,
        timings,
        outputs: files
            .iter()
            .map(|(name, bytes)| OutputFile {
                name: name.to_string(),
                sha256: bytes_hash(bytes),
            })
            .collect(),
        ap: round2(outputs.metrics.global_ap),
        map: round2(outputs.metrics.map),
        variant_count: outputs.n_variants,
        consensual_biterms: outputs.consensus.as_ref().map_or(0, |c| c.consensual().len()),
    };
    let mut manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    manifest_json.push('\n');
    files.push((MANIFEST_FILE, manifest_json.into_bytes()));

    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(format!("creating {}", cfg.out.display()), e))?;
    let mut written = Vec::new();
    for (name, bytes) in &files {
        let path = cfg.out.join(name);
        if let Err(e) = write_atomic(&path, bytes) {
            for p in written {
                let _ = std::fs::remove_file(p);
            }
            return Err(e);
        }
        written.push(path);
    }
    Ok(manifest)
}

/// Side-by-side AP/MAP of several runs over one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub project: String,
    pub columns: Vec<(String, f64, f64)>,
}

pub fn ablation_report(manifests: &[RunManifest]) -> Result<AblationReport> {
    if manifests.len() < 2 {
        return Err(Error::Validation(format!(
            "an ablation report needs at least 2 runs, got {}",
            manifests.len()
        )));
    }
    let dataset = manifests[0].input_hashes.get("dataset");
    for m in &manifests[1..] {
        if m.input_hashes.get("dataset") != dataset || m.project != manifests[0].project {
            return Err(Error::Validation(format!(
                "runs {} and {} are over different datasets",
                manifests[0].mode, m.mode
            )));
        }
    }
    Ok(AblationReport {
        project: manifests[0].project.clone(),
        columns: manifests.iter().map(|m| (m.mode.clone(), m.ap, m.map)).collect(),
    })
}

impl AblationReport {
    /// Δ rows are relative to the first column.
    pub fn to_text(&self) -> String {
        let width = self.columns.iter().map(|(m, _, _)| m.len()).max().unwrap_or(0).max(8);
        let mut out = format!("project: {}\n{:<6}", self.project, "");
        for (mode, _, _) in &self.columns {
            out.push_str(&format!("  {mode:>width$}"));
        }
        out.push('\n');
        let (_, ap0, map0) = self.columns[0];
        let rows = [
            ("AP", self.columns.iter().map(|c| c.1).collect::<Vec<_>>()),
            ("MAP", self.columns.iter().map(|c| c.2).collect()),
            ("ΔAP", self.columns.iter().map(|c| c.1 - ap0).collect()),
            ("ΔMAP", self.columns.iter().map(|c| c.2 - map0).collect()),
        ];
        for (label, values) in rows {
            out.push_str(&format!("{label:<6}"));
            for v in values {
                out.push_str(&format!("  {v:>width$.2}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let (_, ap0, map0) = self.columns[0];
        let mut out = String::from("mode,ap,map,delta_ap,delta_map\n");
        for (mode, ap, map) in &self.columns {
            out.push_str(&format!("{mode},{ap:.2},{map:.2},{:.2},{:.2}\n", ap - ap0, map - map0));
        }
        out
    }
}

/// Runs each mode into `<out>/<mode>/` and writes `ablation.txt` and
/// `ablation.csv` under `<out>`.
pub fn ablate(cfg: &PipelineConfig, modes: &[Mode], services: &Services) -> Result<(Vec<RunManifest>, AblationReport)> {
    let mut manifests = Vec::new();
    for mode in modes {
        let mut c = cfg.clone();
        c.mode = mode.clone();
        c.out = cfg.out.join(mode.slug());
        log::info!("running mode {mode}");
        manifests.push(run(&c, services)?);
    }
    let report = ablation_report(&manifests)?;
    write_atomic(&cfg.out.join("ablation.txt"), report.to_text().as_bytes())?;
    write_atomic(&cfg.out.join("ablation.csv"), report.to_csv().as_bytes())?;
    Ok((manifests, report))
}
