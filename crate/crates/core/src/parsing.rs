//! Dependency parses of translation variants and candidate biterm extraction.
//!
//! Parses come from a [`ParseProvider`] and are cached as one CoNLL-U file
//! per sentence hash, so reruns never need the provider again.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::{content_hash, write_atomic};
use crate::stem::stem;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedToken {
    /// 1-based position in the sentence.
    pub index: usize,
    #[serde(alias = "form")]
    pub surface: String,
    pub pos: String,
    /// Index of the governing token, 0 for the root.
    pub head: usize,
    pub deprel: String,
}

/// `gov --reln--> dep`
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DependencyEdge<'a> {
    pub gov: &'a ParsedToken,
    pub dep: &'a ParsedToken,
    pub reln: &'a str,
}

/// Checks head ranges and index uniqueness/contiguity.
pub fn validate_tokens(tokens: &[ParsedToken]) -> std::result::Result<(), String> {
    for (i, t) in tokens.iter().enumerate() {
        if t.index != i + 1 {
            return Err(format!("token {} has index {}, expected {}", i + 1, t.index, i + 1));
        }
        if t.head > tokens.len() {
            return Err(format!(
                "token {} has head {} beyond sentence length {}",
                t.index,
                t.head,
                tokens.len()
            ));
        }
    }
    Ok(())
}

/// Non-root, non-self-loop dependency edges in token order.
pub fn edges(tokens: &[ParsedToken]) -> impl Iterator<Item = DependencyEdge<'_>> {
    tokens.iter().filter_map(move |dep| {
        if dep.head == 0 || dep.head == dep.index {
            return None;
        }
        let gov = tokens.get(dep.head - 1)?;
        Some(DependencyEdge {
            gov,
            dep,
            reln: &dep.deprel,
        })
    })
}

/// A (governor stem, dependent stem, relation) triple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Biterm {
    pub gov: String,
    pub dep: String,
    pub reln: String,
}

impl Biterm {
    pub fn new(gov: impl Into<String>, dep: impl Into<String>, reln: impl Into<String>) -> Self {
        Biterm {
            gov: gov.into(),
            dep: dep.into(),
            reln: reln.into(),
        }
    }
}

impl fmt::Display for Biterm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.gov, self.dep, self.reln)
    }
}

/// Tag sets (exact tags or prefixes) for the three content POS classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PosFilter {
    pub noun_tags: Vec<String>,
    pub verb_tags: Vec<String>,
    pub adj_tags: Vec<String>,
}

impl Default for PosFilter {
    /// Penn Treebank prefixes plus Universal Dependencies tags.
    fn default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        PosFilter {
            noun_tags: v(&["NN", "NOUN", "PROPN"]),
            verb_tags: v(&["VB", "VERB"]),
            adj_tags: v(&["JJ", "ADJ"]),
        }
    }
}

impl PosFilter {
    pub fn validate(&self) -> Result<()> {
        let sets = [&self.noun_tags, &self.verb_tags, &self.adj_tags];
        for (i, a) in sets.iter().enumerate() {
            for b in &sets[i + 1..] {
                if let Some(t) = a.iter().find(|t| b.contains(t)) {
                    return Err(Error::Config(format!("POS tag \"{t}\" appears in two classes")));
                }
            }
        }
        Ok(())
    }

    pub fn accepts(&self, pos: &str) -> bool {
        [&self.noun_tags, &self.verb_tags, &self.adj_tags]
            .iter()
            .any(|set| set.iter().any(|tag| pos.starts_with(tag.as_str())))
    }
}

/// Biterms of every edge whose endpoints both pass `filter`, with
/// multiplicity, in token order.
pub fn extract_candidate_biterms(tokens: &[ParsedToken], filter: &PosFilter) -> Vec<Biterm> {
    edges(tokens)
        .filter(|e| filter.accepts(&e.gov.pos) && filter.accepts(&e.dep.pos))
        .filter_map(|e| {
            let gov = stem(&e.gov.surface);
            let dep = stem(&e.dep.surface);
            (!gov.is_empty() && !dep.is_empty()).then(|| Biterm::new(gov, dep, e.reln))
        })
        .collect()
}

/// Reads CoNLL-U text into one token list. Multiword ranges and empty nodes
/// are skipped; several sentences are concatenated with their indices
/// shifted. POS comes from XPOS, falling back to UPOS.
pub fn read_conllu(text: &str) -> std::result::Result<Vec<ParsedToken>, String> {
    let mut out: Vec<ParsedToken> = Vec::new();
    let mut offset = 0;
    let mut sentence_len = 0;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            offset += sentence_len;
            sentence_len = 0;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(format!(
                "line {}: expected 10 tab-separated columns, found {}",
                n + 1,
                cols.len()
            ));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let id: usize = cols[0]
            .parse()
            .map_err(|_| format!("line {}: bad ID \"{}\"", n + 1, cols[0]))?;
        let head: usize = cols[6]
            .parse()
            .map_err(|_| format!("line {}: bad HEAD \"{}\"", n + 1, cols[6]))?;
        let pos = if cols[4] != "_" { cols[4] } else { cols[3] };
        out.push(ParsedToken {
            index: id + offset,
            surface: cols[1].to_string(),
            pos: pos.to_string(),
            head: if head == 0 { 0 } else { head + offset },
            deprel: cols[7].to_string(),
        });
        sentence_len += 1;
    }
    validate_tokens(&out)?;
    Ok(out)
}

/// Writes tokens as one CoNLL-U sentence; POS goes to XPOS.
pub fn write_conllu(tokens: &[ParsedToken], text: &str) -> String {
    let mut out = format!("# text = {}\n", text.replace('\n', " "));
    for t in tokens {
        let field = |s: &str| {
            if s.is_empty() {
                "_".to_string()
            } else {
                s.replace(['\t', '\n'], " ")
            }
        };
        out.push_str(&format!(
            "{}\t{}\t_\t_\t{}\t_\t{}\t{}\t_\t_\n",
            t.index,
            field(&t.surface),
            field(&t.pos),
            t.head,
            field(&t.deprel)
        ));
    }
    out.push('\n');
    out
}

/// Something that can dependency-parse an English sentence.
pub trait ParseProvider: Send + Sync {
    fn parse(&self, text: &str) -> std::result::Result<Vec<ParsedToken>, String>;
}

/// Client for a JSON parse endpoint.
///
/// Request: `POST {"text": str}`. Response: an array of
/// `{"index": n, "form": str, "pos": str, "head": n, "deprel": str}`.
pub struct HttpParseProvider {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpParseProvider {
    pub fn new(endpoint: impl Into<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Config(format!("building HTTP client: {e}")))?;
        Ok(HttpParseProvider {
            endpoint: endpoint.into(),
            client,
        })
    }
}

#[derive(Serialize)]
struct ParseRequest<'a> {
    text: &'a str,
}

impl ParseProvider for HttpParseProvider {
    fn parse(&self, text: &str) -> std::result::Result<Vec<ParsedToken>, String> {
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&ParseRequest { text })
            .send()
            .map_err(|e| e.to_string())?;
        let status = resp.status();
        let body = resp.text().map_err(|e| e.to_string())?;
        if !status.is_success() {
            return Err(format!("HTTP {status} from {}", self.endpoint));
        }
        serde_json::from_str(&body).map_err(|e| format!("malformed parse payload ({e}): {}", snippet(&body)))
    }
}

fn snippet(s: &str) -> String {
    let mut out: String = s.chars().take(200).collect();
    if out.len() < s.len() {
        out.push_str("...");
    }
    out
}

/// Directory of `<sha256>.conllu` files.
#[derive(Debug)]
pub struct ParseCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl ParseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Self {
        ParseCache {
            dir: dir.into(),
            write_lock: Mutex::new(()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.conllu"))
    }

    pub fn get(&self, hash: &str) -> Result<Option<Vec<ParsedToken>>> {
        let path = self.path_for(hash);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        read_conllu(&text).map(Some).map_err(|message| Error::Parse {
            path,
            line: None,
            column: None,
            message,
        })
    }

    pub fn put(&self, hash: &str, text: &str, tokens: &[ParsedToken]) -> Result<()> {
        let _guard = self.write_lock.lock().unwrap();
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(format!("creating {}", self.dir.display()), e))?;
        write_atomic(&self.path_for(hash), write_conllu(tokens, text).as_bytes())
    }
}

/// Parses one variant text, consulting the cache first.
pub fn parse_variant(text: &str, cache: &ParseCache, provider: Option<&dyn ParseProvider>) -> Result<Vec<ParsedToken>> {
    let hash = content_hash(text);
    if let Some(tokens) = cache.get(&hash)? {
        return Ok(tokens);
    }
    let Some(provider) = provider else {
        return Err(Error::ParseProvider {
            sentence_hash: hash,
            message: "not in parse cache and no provider available".into(),
        });
    };
    let tokens = provider.parse(text).map_err(|message| Error::ParseProvider {
        sentence_hash: hash.clone(),
        message,
    })?;
    validate_tokens(&tokens).map_err(|m| Error::ParseProvider {
        sentence_hash: hash.clone(),
        message: format!("malformed parse: {m}"),
    })?;
    cache.put(&hash, text, &tokens)?;
    Ok(tokens)
}
