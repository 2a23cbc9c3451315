//! Section emphasis and repetition of consensual biterms from issue
//! summaries and commit messages.

use serde::{Deserialize, Serialize};

use crate::consensus::EnrichmentToken;
use crate::corpus::SectionKind;
use crate::error::{Error, Result};

pub const DEFAULT_SCALE_FACTOR: f64 = 0.1;

/// Best variant score of a sentence; `None` when it has no variants.
pub fn sentence_score(variant_scores: &[f64]) -> Option<f64> {
    variant_scores.iter().copied().reduce(f64::max)
}

/// Mean sentence score of a section; 0 for a section without sentences.
pub fn section_score(sentence_scores: &[f64]) -> f64 {
    if sentence_scores.is_empty() {
        0.0
    } else {
        sentence_scores.iter().sum::<f64>() / sentence_scores.len() as f64
    }
}

/// Mean sentence score over the whole project.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusBaseline {
    pub mean_cons_distinc: f64,
    pub sentences: usize,
}

impl CorpusBaseline {
    pub fn from_sentence_scores(scores: &[f64]) -> Self {
        CorpusBaseline {
            mean_cons_distinc: section_score(scores),
            sentences: scores.len(),
        }
    }
}

pub fn emphasis(section_score: f64, baseline: &CorpusBaseline) -> f64 {
    section_score.max(baseline.mean_cons_distinc)
}

pub fn validate_scale_factor(scale: f64) -> Result<()> {
    if scale > 0.0 && scale < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("scale factor {scale} outside (0, 1)")))
    }
}

/// `ceil(scale * emph * artifact_len)`.
///
/// Products within 1e-9 above an integer round down to it, so exact values
/// like 0.1 * 1.0 * 100 are not pushed up by float error.
pub fn repetition_count(emph: f64, artifact_len: usize, scale: f64) -> Result<u32> {
    validate_scale_factor(scale)?;
    let x = scale * emph * artifact_len as f64;
    if x <= 0.0 {
        return Ok(0);
    }
    Ok((x - 1e-9).ceil().max(0.0) as u32)
}

/// Per-artifact weighting record, also used for the debug export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionEmphasis {
    pub artifact_id: String,
    pub section: SectionKind,
    pub cons_distinc: f64,
    pub emph: f64,
    pub repetition_count: u32,
}

/// Document text plus appended enrichment terms.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichedDocument {
    pub text: String,
    pub appended: Vec<String>,
}

/// Appends every routine token once, then the emphasized tokens `rep` more
/// times. Both lists are appended in text order; the original text is kept
/// untouched.
pub fn apply_enrichment(
    text: &str,
    routine: &[EnrichmentToken],
    emphasized: &[EnrichmentToken],
    rep: u32,
) -> EnrichedDocument {
    let mut routine: Vec<&str> = routine.iter().map(|t| t.text.as_str()).collect();
    routine.sort_unstable();
    let mut emphasized: Vec<&str> = emphasized.iter().map(|t| t.text.as_str()).collect();
    emphasized.sort_unstable();
    let mut appended: Vec<String> = routine.iter().map(|s| s.to_string()).collect();
    for _ in 0..rep {
        appended.extend(emphasized.iter().map(|s| s.to_string()));
    }
    EnrichedDocument {
        text: text.to_string(),
        appended,
    }
}

/// Whitespace token count, the unit of artifact length.
pub fn artifact_len(text: &str) -> usize {
    text.split_whitespace().count()
}
