//! Non-English sentence detection, multi-translator fan-out and the
//! replayable translation cache.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::ArtifactKind;
use crate::error::{Error, Result};
use crate::hashing::{content_hash, write_atomic};
use crate::preprocess::CleanSentence;

pub const IDENTITY: &str = "identity";

/// Name of a translation service in the run's roster.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TranslatorId(String);

impl TranslatorId {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        let trimmed = name.trim();
        if trimmed.is_empty() {
            return Err(Error::Config("translator name must be nonempty".into()));
        }
        if trimmed == IDENTITY {
            return Err(Error::Config(format!(
                "\"{IDENTITY}\" is reserved for untranslated sentences"
            )));
        }
        if trimmed.contains(|c: char| c == ',' || c == ':' || c.is_whitespace()) {
            return Err(Error::Config(format!("invalid translator name \"{trimmed}\"")));
        }
        Ok(TranslatorId(trimmed.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TranslatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for TranslatorId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TranslatorId::new(s)
    }
}

impl TryFrom<String> for TranslatorId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        TranslatorId::new(s)
    }
}

impl From<TranslatorId> for String {
    fn from(id: TranslatorId) -> String {
        id.0
    }
}

/// Checks that a roster is nonempty and free of duplicates.
pub fn validate_roster(roster: &[TranslatorId]) -> Result<()> {
    if roster.is_empty() {
        return Err(Error::Config("translator roster is empty".into()));
    }
    let mut seen = BTreeSet::new();
    for t in roster {
        if !seen.insert(t) {
            return Err(Error::Config(format!("translator \"{t}\" listed twice in roster")));
        }
    }
    Ok(())
}

/// Where a variant's text came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VariantSource {
    /// English source sentence, passed through unchanged.
    Identity,
    Translator(TranslatorId),
}

impl VariantSource {
    pub fn name(&self) -> &str {
        match self {
            VariantSource::Identity => IDENTITY,
            VariantSource::Translator(t) => t.as_str(),
        }
    }
}

impl fmt::Display for VariantSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationVariant {
    /// Content hash of the source sentence text.
    pub source_hash: String,
    pub translator: VariantSource,
    pub text: String,
    /// The translator left non-English characters in its output.
    pub partial: bool,
}

/// All variants of one cleaned sentence, in roster order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceVariants {
    pub sentence: CleanSentence,
    pub variants: Vec<TranslationVariant>,
}

impl SentenceVariants {
    pub fn artifact_kind(&self) -> ArtifactKind {
        self.sentence.section.artifact_kind()
    }

    pub fn variant_by(&self, translator: &TranslatorId) -> Option<&TranslationVariant> {
        self.variants
            .iter()
            .find(|v| matches!(&v.translator, VariantSource::Translator(t) if t == translator))
    }
}

/// Characters beyond ASCII that still count as English.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub extra_english_chars: String,
}

pub fn is_non_english(sentence: &str, cfg: &DetectorConfig) -> bool {
    sentence
        .chars()
        .any(|c| !(c.is_ascii_graphic() || c.is_ascii_whitespace() || cfg.extra_english_chars.contains(c)))
}

/// Source/target language hint sent to translators, e.g. "zh-en".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LanguagePair {
    pub source: String,
    pub target: String,
}

impl Default for LanguagePair {
    fn default() -> Self {
        LanguagePair {
            source: "zh".into(),
            target: "en".into(),
        }
    }
}

impl FromStr for LanguagePair {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (src, tgt) = s
            .split_once("->")
            .or_else(|| s.split_once('→'))
            .or_else(|| s.split_once('-'))
            .ok_or_else(|| Error::Config(format!("language pair \"{s}\" is not of the form src-tgt")))?;
        let (src, tgt) = (src.trim(), tgt.trim());
        if src.is_empty() || tgt.is_empty() {
            return Err(Error::Config(format!(
                "language pair \"{s}\" is not of the form src-tgt"
            )));
        }
        Ok(LanguagePair {
            source: src.to_string(),
            target: tgt.to_string(),
        })
    }
}

impl TryFrom<String> for LanguagePair {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LanguagePair> for String {
    fn from(p: LanguagePair) -> String {
        format!("{}-{}", p.source, p.target)
    }
}

/// One line of the JSON-lines cache file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub src_sha256: String,
    pub translator: String,
    pub text: String,
}

/// Append-only store of translations keyed by (source hash, translator).
#[derive(Debug, Default)]
pub struct TranslationCache {
    entries: BTreeMap<(String, String), String>,
    path: Option<PathBuf>,
    unsaved: Vec<CacheEntry>,
}

impl TranslationCache {
    pub fn new() -> Self {
        TranslationCache::default()
    }

    /// Loads a cache file; a missing file gives an empty cache bound to `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cache = if path.exists() {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::io(format!("reading translation cache {}", path.display()), e))?;
            Self::parse_jsonl(&text, path)?
        } else {
            TranslationCache::new()
        };
        cache.path = Some(path.to_path_buf());
        Ok(cache)
    }

    pub fn parse_jsonl(text: &str, origin: &Path) -> Result<Self> {
        let mut cache = TranslationCache::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: CacheEntry = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: Some(n + 1),
                column: Some(e.column()),
                message: e.to_string(),
            })?;
            cache
                .entries
                .entry((entry.src_sha256, entry.translator))
                .or_insert(entry.text);
        }
        Ok(cache)
    }

    pub fn get(&self, src_hash: &str, translator: &str) -> Option<&str> {
        self.entries
            .get(&(src_hash.to_string(), translator.to_string()))
            .map(String::as_str)
    }

    /// Adds an entry unless the key is already present. Returns whether it was added.
    pub fn insert(&mut self, src_hash: &str, translator: &str, text: &str) -> bool {
        let key = (src_hash.to_string(), translator.to_string());
        if self.entries.contains_key(&key) {
            return false;
        }
        self.entries.insert(key, text.to_string());
        self.unsaved.push(CacheEntry {
            src_sha256: src_hash.to_string(),
            translator: translator.to_string(),
            text: text.to_string(),
        });
        true
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = CacheEntry> + '_ {
        self.entries.iter().map(|((h, t), text)| CacheEntry {
            src_sha256: h.clone(),
            translator: t.clone(),
            text: text.clone(),
        })
    }

    /// Adds every entry of `other` not already present; returns how many were added.
    pub fn merge(&mut self, other: &TranslationCache) -> usize {
        other
            .entries
            .iter()
            .filter(|((h, t), text)| self.insert(h, t, text))
            .count()
    }

    /// Appends entries added since load to the bound file.
    pub fn flush(&mut self) -> Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        if self.unsaved.is_empty() {
            return Ok(());
        }
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(format!("opening translation cache {}", path.display()), e))?;
        let mut buf = String::new();
        for e in &self.unsaved {
            buf.push_str(&serde_json::to_string(e).expect("cache entry serializes"));
            buf.push('\n');
        }
        file.write_all(buf.as_bytes())
            .map_err(|e| Error::io(format!("appending to translation cache {}", path.display()), e))?;
        self.unsaved.clear();
        Ok(())
    }

    /// Writes every entry, sorted by key, to `path`.
    pub fn export(&self, path: &Path) -> Result<()> {
        let mut buf = String::new();
        for e in self.entries() {
            buf.push_str(&serde_json::to_string(&e).expect("cache entry serializes"));
            buf.push('\n');
        }
        write_atomic(path, buf.as_bytes())
    }
}

/// A translation service: sentence plus language hint in, English out.
pub trait Translator: Send + Sync {
    fn translate(&self, text: &str, pair: &LanguagePair) -> std::result::Result<String, String>;
}

pub type ClientSet = BTreeMap<TranslatorId, Box<dyn Translator>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn run<T>(&self, mut f: impl FnMut() -> std::result::Result<T, String>) -> std::result::Result<T, String> {
        let mut last = String::new();
        for attempt in 0..self.attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(self.base_delay * 2u32.pow(attempt - 1));
            }
            match f() {
                Ok(v) => return Ok(v),
                Err(e) => {
                    log::warn!("attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(format!("{} (after {} attempts)", last, self.attempts.max(1)))
    }
}

/// Client for a JSON translation endpoint.
///
/// Request: `POST {"text": str, "source": str, "target": str}` with an
/// optional bearer token. Response: `{"text": str}`.
pub struct HttpTranslator {
    endpoint: String,
    token: Option<String>,
    min_interval: Option<Duration>,
    last_call: Mutex<Option<Instant>>,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct TranslateRequest<'a> {
    text: &'a str,
    source: &'a str,
    target: &'a str,
}

#[derive(Deserialize)]
struct TranslateResponse {
    text: String,
}

impl HttpTranslator {
    pub fn new(endpoint: impl Into<String>, token: Option<String>, rate_limit_per_sec: Option<f64>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| Error::Config(format!("building HTTP client: {e}")))?;
        let min_interval = rate_limit_per_sec
            .filter(|r| *r > 0.0)
            .map(|r| Duration::from_secs_f64(1.0 / r));
        Ok(HttpTranslator {
            endpoint: endpoint.into(),
            token,
            min_interval,
            last_call: Mutex::new(None),
            client,
        })
    }

    fn throttle(&self) {
        let Some(interval) = self.min_interval else {
            return;
        };
        let mut last = self.last_call.lock().unwrap();
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < interval {
                std::thread::sleep(interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}

impl Translator for HttpTranslator {
    fn translate(&self, text: &str, pair: &LanguagePair) -> std::result::Result<String, String> {
        self.throttle();
        let mut req = self.client.post(&self.endpoint).json(&TranslateRequest {
            text,
            source: &pair.source,
            target: &pair.target,
        });
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("HTTP {status} from {}", self.endpoint));
        }
        let body: TranslateResponse = resp.json().map_err(|e| format!("bad response body: {e}"))?;
        Ok(body.text)
    }
}

/// Serves translations from a recorded cache and fails on anything unrecorded.
pub struct ReplayTranslator {
    entries: HashMap<String, String>,
}

impl ReplayTranslator {
    pub fn from_cache(cache: &TranslationCache, translator: &TranslatorId) -> Self {
        ReplayTranslator {
            entries: cache
                .entries()
                .filter(|e| e.translator == translator.as_str())
                .map(|e| (e.src_sha256, e.text))
                .collect(),
        }
    }
}

impl Translator for ReplayTranslator {
    fn translate(&self, text: &str, _pair: &LanguagePair) -> std::result::Result<String, String> {
        self.entries
            .get(&content_hash(text))
            .cloned()
            .ok_or_else(|| "no recorded translation".to_string())
    }
}

#[derive(Debug, Clone)]
pub struct TranslateOptions {
    pub pair: LanguagePair,
    pub detector: DetectorConfig,
    pub retry: RetryPolicy,
    /// Bound on concurrent requests per translator.
    pub max_in_flight: usize,
}

impl Default for TranslateOptions {
    fn default() -> Self {
        TranslateOptions {
            pair: LanguagePair::default(),
            detector: DetectorConfig::default(),
            retry: RetryPolicy::default(),
            max_in_flight: 4,
        }
    }
}

/// Produces the translation variants of every sentence.
///
/// English sentences get a single identity variant and are never sent to a
/// client. Non-English sentences get one variant per roster translator, in
/// roster order, served from `cache` when possible; fresh translations are
/// added to the cache.
pub fn translate_corpus(
    sentences: &[CleanSentence],
    roster: &[TranslatorId],
    cache: &mut TranslationCache,
    clients: &ClientSet,
    opts: &TranslateOptions,
) -> Result<Vec<SentenceVariants>> {
    validate_roster(roster)?;

    let hashes: Vec<String> = sentences.iter().map(|s| content_hash(&s.text)).collect();
    let foreign: Vec<bool> = sentences
        .iter()
        .map(|s| is_non_english(&s.text, &opts.detector))
        .collect();

    for translator in roster {
        let mut missing: BTreeMap<&str, &str> = BTreeMap::new();
        for ((s, h), non_en) in sentences.iter().zip(&hashes).zip(&foreign) {
            if *non_en && cache.get(h, translator.as_str()).is_none() {
                missing.insert(h, &s.text);
            }
        }
        if missing.is_empty() {
            continue;
        }
        let Some(client) = clients.get(translator) else {
            let (hash, _) = missing.first_key_value().unwrap();
            return Err(Error::Translation {
                sentence_hash: hash.to_string(),
                translator: translator.to_string(),
                message: format!(
                    "no cached translation and no client available ({} sentences missing)",
                    missing.len()
                ),
            });
        };
        log::info!("translating {} sentences with {translator}", missing.len());
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.max_in_flight.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        let work: Vec<(&str, &str)> = missing.into_iter().collect();
        let results: Vec<(&str, std::result::Result<String, String>)> = pool.install(|| {
            work.par_iter()
                .map(|(hash, text)| (*hash, opts.retry.run(|| client.translate(text, &opts.pair))))
                .collect()
        });
        let mut first_error = None;
        for (hash, result) in results {
            match result {
                Ok(text) => {
                    cache.insert(hash, translator.as_str(), &text);
                }
                Err(message) if first_error.is_none() => {
                    first_error = Some(Error::Translation {
                        sentence_hash: hash.to_string(),
                        translator: translator.to_string(),
                        message,
                    });
                }
                Err(_) => {}
            }
        }
        if let Some(err) = first_error {
            // Keep what did succeed so a retry resumes where this run stopped.
            cache.flush()?;
            return Err(err);
        }
    }

    let mut out = Vec::with_capacity(sentences.len());
    for ((sentence, hash), non_en) in sentences.iter().zip(hashes).zip(foreign) {
        let variants = if non_en {
            roster
                .iter()
                .map(|t| {
                    let text = cache.get(&hash, t.as_str()).expect("filled above").to_string();
                    TranslationVariant {
                        source_hash: hash.clone(),
                        translator: VariantSource::Translator(t.clone()),
                        partial: is_non_english(&text, &opts.detector),
                        text,
                    }
                })
                .collect()
        } else {
            vec![TranslationVariant {
                source_hash: hash,
                translator: VariantSource::Identity,
                text: sentence.text.clone(),
                partial: false,
            }]
        };
        out.push(SentenceVariants {
            sentence: sentence.clone(),
            variants,
        });
    }
    Ok(out)
}

/// N: the total number of variants over issues and commits.
pub fn variant_count(groups: &[SentenceVariants]) -> usize {
    groups.iter().map(|g| g.variants.len()).sum()
}
