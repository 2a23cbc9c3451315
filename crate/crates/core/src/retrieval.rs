//! Vector space model: corpus normalization, TF-IDF vectors, cosine
//! similarity and the ranked candidate link list.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::ArtifactKind;
use crate::error::{Error, Result};
use crate::stem::stem;
use crate::weighting::EnrichedDocument;

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Default for Stopwords {
    fn default() -> Self {
        Stopwords::parse(DEFAULT_STOPWORDS)
    }
}

impl Stopwords {
    /// One word per line, `#` comments allowed.
    pub fn parse(text: &str) -> Self {
        Stopwords(
            text.lines()
                .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading stopwords {}", path.display()), e))?;
        Ok(Stopwords::parse(&text))
    }

    pub fn contains(&self, lower: &str) -> bool {
        self.0.contains(lower)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Splits at lower-to-upper case transitions: "parseTemplate" -> parse, Template.
pub fn split_camel_case(token: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut start = 0;
    let mut prev_lower = false;
    for (i, c) in token.char_indices() {
        if prev_lower && c.is_uppercase() {
            parts.push(&token[start..i]);
            start = i;
        }
        prev_lower = c.is_lowercase();
    }
    parts.push(&token[start..]);
    parts
}

/// Tokenizes on non-alphanumeric boundaries, splits camelCase, drops
/// stopwords, lowercases and stems. Order is preserved.
pub fn normalize_tokens(text: &str, stopwords: &Stopwords) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .flat_map(split_camel_case)
        .filter_map(|part| {
            let lower = part.to_lowercase();
            (!stopwords.contains(&lower)).then(|| stem(&lower))
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Normalized terms of one artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub artifact_id: String,
    pub kind: ArtifactKind,
    pub terms: Vec<String>,
}

impl Document {
    /// Normalizes the document text; enrichment terms are already stems and
    /// are taken verbatim.
    pub fn from_enriched(artifact_id: &str, kind: ArtifactKind, doc: &EnrichedDocument, stopwords: &Stopwords) -> Self {
        let mut terms = normalize_tokens(&doc.text, stopwords);
        terms.extend(doc.appended.iter().cloned());
        Document {
            artifact_id: artifact_id.to_string(),
            kind,
            terms,
        }
    }
}

/// Sparse TF-IDF vector over a shared vocabulary, entries sorted by term id.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentVector {
    pub artifact_id: String,
    pub kind: ArtifactKind,
    entries: Vec<(u32, f64)>,
    norm: f64,
}

impl DocumentVector {
    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }
}

/// `dot(a, b) / (|a| |b|)`, or 0 when either vector is zero.
pub fn cosine(a: &DocumentVector, b: &DocumentVector) -> f64 {
    if a.norm == 0.0 || b.norm == 0.0 {
        return 0.0;
    }
    let (mut i, mut j, mut dot) = (0, 0, 0.0);
    while i < a.entries.len() && j < b.entries.len() {
        let (ta, wa) = a.entries[i];
        let (tb, wb) = b.entries[j];
        match ta.cmp(&tb) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += wa * wb;
                i += 1;
                j += 1;
            }
        }
    }
    (dot / (a.norm * b.norm)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone)]
pub struct VectorSpace {
    vocabulary: Vec<String>,
    idf: Vec<f64>,
    vectors: Vec<DocumentVector>,
}

/// TF(t, d) = count / |d|, IDF(t) = log10(D / df(t)), weight = TF * IDF.
pub fn build_vectors(documents: &[Document]) -> Result<VectorSpace> {
    if documents.len() < 2 {
        return Err(Error::Validation(format!(
            "vector space needs at least 2 documents, got {}",
            documents.len()
        )));
    }
    let vocab_set: BTreeSet<&str> = documents
        .iter()
        .flat_map(|d| d.terms.iter().map(String::as_str))
        .collect();
    let vocabulary: Vec<String> = vocab_set.iter().map(|s| s.to_string()).collect();
    let ids: BTreeMap<&str, u32> = vocab_set.iter().enumerate().map(|(i, t)| (*t, i as u32)).collect();

    let counts: Vec<BTreeMap<u32, usize>> = documents
        .par_iter()
        .map(|d| {
            let mut c = BTreeMap::new();
            for t in &d.terms {
                *c.entry(ids[t.as_str()]).or_insert(0) += 1;
            }
            c
        })
        .collect();

    let mut df = vec![0usize; vocabulary.len()];
    for c in &counts {
        for &t in c.keys() {
            df[t as usize] += 1;
        }
    }
    let n_docs = documents.len() as f64;
    let idf: Vec<f64> = df.iter().map(|&d| (n_docs / d as f64).log10()).collect();

    let vectors = documents
        .par_iter()
        .zip(counts.par_iter())
        .map(|(doc, c)| {
            let len = doc.terms.len() as f64;
            let entries: Vec<(u32, f64)> = c.iter().map(|(&t, &n)| (t, n as f64 / len * idf[t as usize])).collect();
            let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
            DocumentVector {
                artifact_id: doc.artifact_id.clone(),
                kind: doc.kind,
                entries,
                norm,
            }
        })
        .collect();

    Ok(VectorSpace {
        vocabulary,
        idf,
        vectors,
    })
}

impl VectorSpace {
    pub fn vectors(&self) -> &[DocumentVector] {
        &self.vectors
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.term_id(term).map(|i| self.idf[i as usize])
    }

    fn term_id(&self, term: &str) -> Option<u32> {
        self.vocabulary
            .binary_search_by(|t| t.as_str().cmp(term))
            .ok()
            .map(|i| i as u32)
    }

    /// Term → weight map of one vector.
    pub fn weights(&self, v: &DocumentVector) -> BTreeMap<&str, f64> {
        v.entries
            .iter()
            .map(|&(t, w)| (self.vocabulary[t as usize].as_str(), w))
            .collect()
    }

    pub fn find(&self, kind: ArtifactKind, artifact_id: &str) -> Option<&DocumentVector> {
        self.vectors
            .iter()
            .find(|v| v.kind == kind && v.artifact_id == artifact_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedLink {
    pub issue_id: String,
    pub commit_id: String,
    pub similarity: f64,
    /// 1-based.
    pub rank: usize,
}

/// Issue × commit similarity matrix, rows and columns in document order.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub issue_ids: Vec<String>,
    pub commit_ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

pub fn similarity_matrix(space: &VectorSpace) -> SimilarityMatrix {
    let issues: Vec<&DocumentVector> = space.vectors.iter().filter(|v| v.kind == ArtifactKind::Issue).collect();
    let commits: Vec<&DocumentVector> = space
        .vectors
        .iter()
        .filter(|v| v.kind == ArtifactKind::Commit)
        .collect();
    let values = issues
        .par_iter()
        .map(|i| commits.iter().map(|c| cosine(i, c)).collect())
        .collect();
    SimilarityMatrix {
        issue_ids: issues.iter().map(|v| v.artifact_id.clone()).collect(),
        commit_ids: commits.iter().map(|v| v.artifact_id.clone()).collect(),
        values,
    }
}

/// Every issue-commit pair, by similarity descending, ties broken by
/// (issue id, commit id) ascending.
pub fn rank_links(matrix: &SimilarityMatrix) -> Vec<RankedLink> {
    let mut links: Vec<RankedLink> = Vec::with_capacity(matrix.issue_ids.len() * matrix.commit_ids.len());
    for (i, issue) in matrix.issue_ids.iter().enumerate() {
        for (j, commit) in matrix.commit_ids.iter().enumerate() {
            links.push(RankedLink {
                issue_id: issue.clone(),
                commit_id: commit.clone(),
                similarity: matrix.values[i][j],
                rank: 0,
            });
        }
    }
    sort_links(&mut links);
    links
}

/// Sorts by the ranking order and renumbers ranks from 1.
pub fn sort_links(links: &mut [RankedLink]) {
    links.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.issue_id.cmp(&b.issue_id))
            .then_with(|| a.commit_id.cmp(&b.commit_id))
    });
    for (i, l) in links.iter_mut().enumerate() {
        l.rank = i + 1;
    }
}

pub fn ranked_csv(links: &[RankedLink]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["issue_id", "commit_id", "similarity", "rank"])
        .expect("in-memory write");
    for l in links {
        w.write_record([
            l.issue_id.as_str(),
            l.commit_id.as_str(),
            &format!("{:.6}", l.similarity),
            &l.rank.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn read_ranked_csv(path: &Path) -> Result<Vec<RankedLink>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: None,
        column: None,
        message: e.to_string(),
    })?;
    let headers = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["issue_id", "commit_id", "similarity", "rank"] {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: Some(1),
            column: None,
            message: "expected header issue_id,commit_id,similarity,rank".into(),
        });
    }
    let mut out = Vec::new();
    for rec in r.deserialize() {
        let link: RankedLink = rec.map_err(|e| csv_error(path, e))?;
        out.push(link);
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: e.position().map(|p| p.line() as usize),
        column: None,
        message: e.to_string(),
    }
}
