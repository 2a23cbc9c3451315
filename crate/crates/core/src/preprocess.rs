//! Sentence splitting, sentence cleaning and commit-diff trimming.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{Artifact, SectionKind};

/// One cleaned sentence of an artifact section.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CleanSentence {
    pub artifact_id: String,
    pub section: SectionKind,
    /// Ordinal among the sentences kept for this section.
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffTrimConfig {
    pub excluded_extensions: BTreeSet<String>,
    pub keep_added_only: bool,
}

pub const DEFAULT_EXCLUDED_EXTENSIONS: [&str; 6] = [".properties", ".pom", ".axml", ".vue", ".css", ".styl"];

impl Default for DiffTrimConfig {
    fn default() -> Self {
        DiffTrimConfig::new(DEFAULT_EXCLUDED_EXTENSIONS, true)
    }
}

impl DiffTrimConfig {
    pub fn new<I, S>(extensions: I, keep_added_only: bool) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        DiffTrimConfig {
            excluded_extensions: extensions
                .into_iter()
                .map(|e| normalize_extension(e.as_ref()))
                .filter(|e| e.len() > 1)
                .collect(),
            keep_added_only,
        }
    }

    /// Re-normalizes extensions that came in through deserialization.
    pub fn normalized(self) -> Self {
        DiffTrimConfig::new(self.excluded_extensions, self.keep_added_only)
    }

    fn excludes(&self, path: &str) -> bool {
        extension_of(path).is_some_and(|ext| self.excluded_extensions.contains(&ext))
    }
}

/// "CSS", ".css" and "..css" all become ".css".
pub fn normalize_extension(ext: &str) -> String {
    format!(".{}", ext.trim().trim_start_matches('.').to_lowercase())
}

fn extension_of(path: &str) -> Option<String> {
    let file = path.rsplit('/').next().unwrap_or(path);
    let dot = file.rfind('.')?;
    if dot + 1 == file.len() {
        return None;
    }
    Some(file[dot..].to_lowercase())
}

const HARD_BREAKS: [char; 5] = ['\n', '\r', '。', '！', '？'];
const SOFT_BREAKS: [char; 3] = ['.', '!', '?'];

/// Splits section text into raw sentences.
///
/// Line breaks and full-width CJK terminators always split. ASCII `.`, `!`
/// and `?` split only when followed by whitespace or end of text, so that
/// identifiers such as `this.props.disabled` or `1.2.3` stay intact.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        let breaks =
            HARD_BREAKS.contains(&c) || (SOFT_BREAKS.contains(&c) && chars.peek().is_none_or(|n| n.is_whitespace()));
        if breaks {
            push_trimmed(&mut out, &mut current);
        } else {
            current.push(c);
        }
    }
    push_trimmed(&mut out, &mut current);
    out
}

fn push_trimmed(out: &mut Vec<String>, current: &mut String) {
    let t = current.trim();
    if !t.is_empty() {
        out.push(t.to_string());
    }
    current.clear();
}

/// Characters stripped as noise after the structural removals.
pub const DEFAULT_JUNK_PUNCTUATION: &str = "*#~`|<>[]{}=^\\\"“”【】「」";

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[A-Za-z][A-Za-z0-9+.\-]*://\S+").unwrap())
}

fn mention_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(^|\s)@\w+").unwrap())
}

fn formatting_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\*{2,}|_{2,}|~{2,}|`+|^\s*#{1,6}\s|^\s*>+\s?").unwrap())
}

fn is_path_token(token: &str) -> bool {
    token.contains('/') && token.split('/').filter(|s| !s.is_empty()).count() >= 2
}

fn clean_once(raw: &str, junk: &str) -> String {
    let s = url_re().replace_all(raw, " ");
    let s: Vec<&str> = s.split_whitespace().filter(|t| !is_path_token(t)).collect();
    let s = s.join(" ");
    let s = mention_re().replace_all(&s, "$1");
    let s = formatting_re().replace_all(&s, " ");
    let s: String = s.chars().map(|c| if junk.contains(c) { ' ' } else { c }).collect();
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Removes URLs, file paths, `@mentions`, markdown formatting runs and junk
/// punctuation (in that order), then normalizes whitespace.
///
/// The rules are applied until a fixpoint, since removing a junk character
/// can expose a new mention or path. Returns `None` for an empty residue.
pub fn clean_sentence(raw: &str) -> Option<String> {
    clean_sentence_with(raw, DEFAULT_JUNK_PUNCTUATION)
}

pub fn clean_sentence_with(raw: &str, junk: &str) -> Option<String> {
    let mut current = clean_once(raw, junk);
    loop {
        let next = clean_once(&current, junk);
        if next == current {
            break;
        }
        current = next;
    }
    (!current.is_empty()).then_some(current)
}

/// Keeps only the added lines of a unified diff, dropping whole file
/// segments whose extension is excluded.
pub fn trim_diff(diff_text: &str, cfg: &DiffTrimConfig) -> String {
    let lines: Vec<&str> = diff_text.lines().collect();
    let mut out: Vec<&str> = Vec::new();
    let mut skipping = false;
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        if let Some(rest) = line.strip_prefix("diff --git ") {
            skipping = git_header_path(rest).is_some_and(|p| cfg.excludes(p));
            i += 1;
            continue;
        }
        if line.starts_with("--- ") && lines.get(i + 1).is_some_and(|n| n.starts_with("+++ ")) {
            let old = header_path(&line[4..]);
            let new = header_path(&lines[i + 1][4..]);
            let path = if new == "/dev/null" { old } else { new };
            skipping = cfg.excludes(path);
            i += 2;
            continue;
        }
        i += 1;
        if skipping {
            continue;
        }
        let content = if let Some(added) = line.strip_prefix('+') {
            added
        } else if !cfg.keep_added_only {
            match line.strip_prefix(' ') {
                Some(ctx) => ctx,
                None => continue,
            }
        } else {
            continue;
        };
        // Markdown bullets in added lines would otherwise surface as "-" lines.
        let content = content.trim_start_matches(|c: char| c == '-' || c.is_whitespace());
        if !content.is_empty() {
            out.push(content);
        }
    }
    out.join("\n")
}

fn header_path(rest: &str) -> &str {
    let p = rest.split('\t').next().unwrap_or(rest).trim();
    p.strip_prefix("a/").or_else(|| p.strip_prefix("b/")).unwrap_or(p)
}

fn git_header_path(rest: &str) -> Option<&str> {
    rest.rsplit_once(" b/").map(|(_, p)| p.trim())
}

/// Full preprocessing of one artifact: diff trimming for commit diffs,
/// sentence splitting and cleaning for every section.
pub fn preprocess_artifact(artifact: &Artifact, diff_cfg: &DiffTrimConfig) -> Vec<CleanSentence> {
    let mut out = Vec::new();
    for section in &artifact.sections {
        let trimmed;
        let text = if section.kind == SectionKind::CommitDiff {
            trimmed = trim_diff(&section.text, diff_cfg);
            trimmed.as_str()
        } else {
            section.text.as_str()
        };
        let kept = split_sentences(text).into_iter().filter_map(|s| clean_sentence(&s));
        out.extend(kept.enumerate().map(|(index, text)| CleanSentence {
            artifact_id: artifact.id.clone(),
            section: section.kind,
            index,
            text,
        }));
    }
    out
}
