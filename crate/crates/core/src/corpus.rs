//! Artifact data model and project dataset ingestion.
//!
//! A project dataset is a single JSON document:
//!
//! ```json
//! {"name": "San",
//!  "issues":  [{"id": "338", "summary": "...", "description": "..."}],
//!  "commits": [{"id": "13f6a354", "message": "...", "diff": "..."}],
//!  "links":   [{"issue": "338", "commit": "13f6a354"}]}
//! ```

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArtifactKind {
    Issue,
    Commit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SectionKind {
    IssueSummary,
    IssueDescription,
    CommitMessage,
    CommitDiff,
}

impl SectionKind {
    pub fn artifact_kind(self) -> ArtifactKind {
        match self {
            SectionKind::IssueSummary | SectionKind::IssueDescription => ArtifactKind::Issue,
            SectionKind::CommitMessage | SectionKind::CommitDiff => ArtifactKind::Commit,
        }
    }

    /// Issue summaries and commit messages carry the short, hand-written
    /// statement of intent; their biterms are repeated during weighting.
    pub fn is_emphasized(self) -> bool {
        matches!(self, SectionKind::IssueSummary | SectionKind::CommitMessage)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SectionKind::IssueSummary => "issue_summary",
            SectionKind::IssueDescription => "issue_description",
            SectionKind::CommitMessage => "commit_message",
            SectionKind::CommitDiff => "commit_diff",
        }
    }
}

impl fmt::Display for SectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub kind: SectionKind,
    /// Raw text with original line breaks.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub id: String,
    pub kind: ArtifactKind,
    pub sections: Vec<Section>,
}

impl Artifact {
    pub fn issue(id: impl Into<String>, summary: impl Into<String>, description: impl Into<String>) -> Self {
        Artifact {
            id: id.into(),
            kind: ArtifactKind::Issue,
            sections: vec![
                Section {
                    kind: SectionKind::IssueSummary,
                    text: summary.into(),
                },
                Section {
                    kind: SectionKind::IssueDescription,
                    text: description.into(),
                },
            ],
        }
    }

    pub fn commit(id: impl Into<String>, message: impl Into<String>, diff: impl Into<String>) -> Self {
        Artifact {
            id: id.into(),
            kind: ArtifactKind::Commit,
            sections: vec![
                Section {
                    kind: SectionKind::CommitMessage,
                    text: message.into(),
                },
                Section {
                    kind: SectionKind::CommitDiff,
                    text: diff.into(),
                },
            ],
        }
    }

    /// Text of the section of the given kind, or "" if the artifact has none.
    pub fn section_text(&self, kind: SectionKind) -> &str {
        self.sections
            .iter()
            .find(|s| s.kind == kind)
            .map(|s| s.text.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TraceLink {
    pub issue: String,
    pub commit: String,
}

impl TraceLink {
    pub fn new(issue: impl Into<String>, commit: impl Into<String>) -> Self {
        TraceLink {
            issue: issue.into(),
            commit: commit.into(),
        }
    }
}

/// The set of true issue→commit links.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    links: BTreeSet<(String, String)>,
}

impl GroundTruth {
    pub fn new<I, S1, S2>(links: I) -> Self
    where
        I: IntoIterator<Item = (S1, S2)>,
        S1: Into<String>,
        S2: Into<String>,
    {
        GroundTruth {
            links: links.into_iter().map(|(i, c)| (i.into(), c.into())).collect(),
        }
    }

    pub fn contains(&self, issue: &str, commit: &str) -> bool {
        // BTreeSet<(String, String)> can't be probed with borrowed tuples.
        self.links
            .range((issue.to_string(), commit.to_string())..)
            .next()
            .is_some_and(|(i, c)| i == issue && c == commit)
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.links.iter().map(|(i, c)| (i.as_str(), c.as_str()))
    }

    /// Number of true links whose issue endpoint is `issue`.
    pub fn links_for_issue(&self, issue: &str) -> usize {
        self.links
            .range((issue.to_string(), String::new())..)
            .take_while(|(i, _)| i == issue)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Project {
    pub name: String,
    pub issues: Vec<Artifact>,
    pub commits: Vec<Artifact>,
    /// True links in file order.
    pub true_links: Vec<TraceLink>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectStats {
    pub issues: usize,
    pub commits: usize,
    pub links: usize,
}

impl Project {
    /// Checks every dataset invariant: artifact kinds and sections, id
    /// uniqueness per kind, link endpoints, and link uniqueness.
    pub fn validate(&self) -> Result<()> {
        check_artifacts(&self.issues, ArtifactKind::Issue)?;
        check_artifacts(&self.commits, ArtifactKind::Commit)?;

        let issue_ids: HashSet<&str> = self.issues.iter().map(|a| a.id.as_str()).collect();
        let commit_ids: HashSet<&str> = self.commits.iter().map(|a| a.id.as_str()).collect();
        let mut seen = HashSet::new();
        for link in &self.true_links {
            if !issue_ids.contains(link.issue.as_str()) {
                return Err(Error::Validation(format!(
                    "link ({}, {}) refers to unknown issue \"{}\"",
                    link.issue, link.commit, link.issue
                )));
            }
            if !commit_ids.contains(link.commit.as_str()) {
                return Err(Error::Validation(format!(
                    "link ({}, {}) refers to unknown commit \"{}\"",
                    link.issue, link.commit, link.commit
                )));
            }
            if !seen.insert(link) {
                return Err(Error::Validation(format!(
                    "duplicate link ({}, {})",
                    link.issue, link.commit
                )));
            }
        }
        Ok(())
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth::new(self.true_links.iter().map(|l| (l.issue.clone(), l.commit.clone())))
    }

    pub fn stats(&self) -> ProjectStats {
        project_stats(self)
    }

    /// Issues followed by commits, in file order.
    pub fn artifacts(&self) -> impl Iterator<Item = &Artifact> {
        self.issues.iter().chain(self.commits.iter())
    }

    pub fn to_json(&self) -> String {
        let file = ProjectFile {
            name: self.name.clone(),
            issues: self
                .issues
                .iter()
                .map(|a| IssueRecord {
                    id: a.id.clone(),
                    summary: a.section_text(SectionKind::IssueSummary).to_string(),
                    description: a.section_text(SectionKind::IssueDescription).to_string(),
                })
                .collect(),
            commits: self
                .commits
                .iter()
                .map(|a| CommitRecord {
                    id: a.id.clone(),
                    message: a.section_text(SectionKind::CommitMessage).to_string(),
                    diff: a.section_text(SectionKind::CommitDiff).to_string(),
                })
                .collect(),
            links: self.true_links.clone(),
        };
        serde_json::to_string_pretty(&file).expect("project serializes")
    }

    pub fn from_json(json: &str, origin: &Path) -> Result<Project> {
        let file: ProjectFile = serde_json::from_str(json).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: Some(e.line()),
            column: Some(e.column()),
            message: e.to_string(),
        })?;
        let project = Project {
            name: file.name,
            issues: file
                .issues
                .into_iter()
                .map(|r| Artifact::issue(r.id, r.summary, r.description))
                .collect(),
            commits: file
                .commits
                .into_iter()
                .map(|r| Artifact::commit(r.id, r.message, r.diff))
                .collect(),
            true_links: file.links,
        };
        project.validate()?;
        Ok(project)
    }
}

fn check_artifacts(artifacts: &[Artifact], kind: ArtifactKind) -> Result<()> {
    let expected: &[SectionKind] = match kind {
        ArtifactKind::Issue => &[SectionKind::IssueSummary, SectionKind::IssueDescription],
        ArtifactKind::Commit => &[SectionKind::CommitMessage, SectionKind::CommitDiff],
    };
    let mut ids = HashSet::new();
    for a in artifacts {
        if a.kind != kind {
            return Err(Error::Validation(format!("artifact \"{}\" is not a {kind:?}", a.id)));
        }
        let kinds: Vec<SectionKind> = a.sections.iter().map(|s| s.kind).collect();
        if kinds != expected {
            return Err(Error::Validation(format!(
                "artifact \"{}\" has sections {kinds:?}, expected {expected:?}",
                a.id
            )));
        }
        if !ids.insert(a.id.as_str()) {
            return Err(Error::Validation(format!("duplicate {kind:?} id \"{}\"", a.id)));
        }
    }
    Ok(())
}

pub fn load_project(path: impl AsRef<Path>) -> Result<Project> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading dataset {}", path.display()), e))?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
    Project::from_json(text, path)
}

pub fn project_stats(p: &Project) -> ProjectStats {
    ProjectStats {
        issues: p.issues.len(),
        commits: p.commits.len(),
        links: p.true_links.len(),
    }
}

#[derive(Serialize, Deserialize)]
struct ProjectFile {
    name: String,
    #[serde(default)]
    issues: Vec<IssueRecord>,
    #[serde(default)]
    commits: Vec<CommitRecord>,
    #[serde(default)]
    links: Vec<TraceLink>,
}

#[derive(Serialize, Deserialize)]
struct IssueRecord {
    id: String,
    #[serde(default)]
    summary: String,
    #[serde(default)]
    description: String,
}

#[derive(Serialize, Deserialize)]
struct CommitRecord {
    id: String,
    #[serde(default)]
    message: String,
    #[serde(default)]
    diff: String,
}
