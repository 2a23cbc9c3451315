//! Consensual biterms: issue/commit intersection, inverse translation
//! variant frequency, per-sentence two-tier selection, and enrichment tokens.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parsing::Biterm;
use crate::translation::VariantSource;

/// Consensual biterms of one project with their variant statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConsensusIndex {
    consensual: BTreeSet<Biterm>,
    /// Number of variants containing each candidate biterm.
    tvf: BTreeMap<Biterm, usize>,
    itvf_raw: BTreeMap<Biterm, f64>,
    itvf_norm: BTreeMap<Biterm, f64>,
    n_variants: usize,
}

/// `log10(N / (1 + tvf))`.
pub fn itvf(n_variants: usize, tvf: usize) -> f64 {
    (n_variants as f64 / (1.0 + tvf as f64)).log10()
}

impl ConsensusIndex {
    /// Builds the index from the per-variant biterm multisets of each side.
    ///
    /// `n_variants` is the total number of variants over issues and commits,
    /// including variants that yielded no biterms.
    pub fn build<I, C>(issue_variants: I, commit_variants: C, n_variants: usize) -> Result<Self>
    where
        I: IntoIterator,
        I::Item: AsRef<[Biterm]>,
        C: IntoIterator,
        C::Item: AsRef<[Biterm]>,
    {
        if n_variants == 0 {
            return Err(Error::Validation(
                "consensus index needs at least one translation variant".into(),
            ));
        }
        let mut tvf: BTreeMap<Biterm, usize> = BTreeMap::new();
        let mut issue_side = BTreeSet::new();
        let mut commit_side = BTreeSet::new();
        let mut seen_variants = 0;
        for (variants, side) in [
            (collect_sets(issue_variants), &mut issue_side),
            (collect_sets(commit_variants), &mut commit_side),
        ] {
            for distinct in variants {
                seen_variants += 1;
                for bt in distinct {
                    *tvf.entry(bt.clone()).or_default() += 1;
                    side.insert(bt);
                }
            }
        }
        if seen_variants > n_variants {
            return Err(Error::Validation(format!(
                "{seen_variants} variants supplied but N = {n_variants}"
            )));
        }

        let consensual: BTreeSet<Biterm> = issue_side.intersection(&commit_side).cloned().collect();
        let itvf_raw: BTreeMap<Biterm, f64> = consensual
            .iter()
            .map(|bt| (bt.clone(), itvf(n_variants, tvf[bt])))
            .collect();

        let min = itvf_raw.values().copied().fold(f64::INFINITY, f64::min);
        let max = itvf_raw.values().copied().fold(f64::NEG_INFINITY, f64::max);
        let itvf_norm = itvf_raw
            .iter()
            .map(|(bt, &raw)| {
                let v = if max > min { (raw - min) / (max - min) } else { 1.0 };
                (bt.clone(), v)
            })
            .collect();

        Ok(ConsensusIndex {
            consensual,
            tvf,
            itvf_raw,
            itvf_norm,
            n_variants,
        })
    }

    pub fn is_consensual(&self, bt: &Biterm) -> bool {
        self.consensual.contains(bt)
    }

    pub fn consensual(&self) -> &BTreeSet<Biterm> {
        &self.consensual
    }

    pub fn tvf(&self, bt: &Biterm) -> usize {
        self.tvf.get(bt).copied().unwrap_or(0)
    }

    /// Raw ITVF; 0 for non-consensual biterms.
    pub fn itvf_raw(&self, bt: &Biterm) -> f64 {
        self.itvf_raw.get(bt).copied().unwrap_or(0.0)
    }

    /// Min-max normalized ITVF over the consensual set; 0 for non-consensual biterms.
    pub fn itvf_norm(&self, bt: &Biterm) -> f64 {
        self.itvf_norm.get(bt).copied().unwrap_or(0.0)
    }

    pub fn n_variants(&self) -> usize {
        self.n_variants
    }

    /// Consensual biterm table as TSV, highest raw ITVF first.
    pub fn to_tsv(&self) -> String {
        let mut rows: Vec<&Biterm> = self.consensual.iter().collect();
        rows.sort_by(|a, b| self.itvf_raw(b).total_cmp(&self.itvf_raw(a)).then_with(|| a.cmp(b)));
        let mut out = String::from("gov_stem\tdep_stem\treln\ttvf\titvf_raw\titvf_norm\n");
        for bt in rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\n",
                bt.gov,
                bt.dep,
                bt.reln,
                self.tvf(bt),
                self.itvf_raw(bt),
                self.itvf_norm(bt)
            ));
        }
        out
    }
}

fn collect_sets<I>(variants: I) -> Vec<BTreeSet<Biterm>>
where
    I: IntoIterator,
    I::Item: AsRef<[Biterm]>,
{
    variants
        .into_iter()
        .map(|v| v.as_ref().iter().cloned().collect())
        .collect()
}

/// Consensual distinctiveness of one variant: the sum over its distinct
/// biterms of (relative frequency within the variant) x (normalized ITVF).
pub fn cons_distinc_variant(biterms: &[Biterm], index: &ConsensusIndex) -> f64 {
    if biterms.is_empty() {
        return 0.0;
    }
    let mut counts: BTreeMap<&Biterm, usize> = BTreeMap::new();
    for bt in biterms {
        *counts.entry(bt).or_default() += 1;
    }
    let total = biterms.len() as f64;
    counts
        .into_iter()
        .map(|(bt, c)| c as f64 / total * index.itvf_norm(bt))
        .sum()
}

/// Candidate biterms of one translation variant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantBiterms {
    pub source: VariantSource,
    pub biterms: Vec<Biterm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceSelection {
    /// Per-variant scores in the order the variants were given.
    pub scores: Vec<(VariantSource, f64)>,
    /// Position of the highest-scoring variant.
    pub winner: usize,
    pub selected: BTreeSet<Biterm>,
}

impl SentenceSelection {
    /// The sentence's score: its best variant's.
    pub fn best_score(&self) -> f64 {
        self.scores[self.winner].1
    }
}

pub const DEFAULT_ITVF_THRESHOLD: f64 = 0.6;

/// Two-tier selection over one sentence's variants (given in roster order,
/// identity first): every consensual biterm of the best-scoring variant, plus
/// consensual biterms of the other variants whose normalized ITVF exceeds
/// `threshold`. Ties on score go to the earlier variant.
pub fn select_sentence_biterms(
    variants: &[VariantBiterms],
    index: &ConsensusIndex,
    threshold: f64,
) -> Option<SentenceSelection> {
    if variants.is_empty() {
        return None;
    }
    let scores: Vec<(VariantSource, f64)> = variants
        .iter()
        .map(|v| (v.source.clone(), cons_distinc_variant(&v.biterms, index)))
        .collect();
    let mut winner = 0;
    for (i, (_, s)) in scores.iter().enumerate() {
        if *s > scores[winner].1 {
            winner = i;
        }
    }
    let mut selected: BTreeSet<Biterm> = variants[winner]
        .biterms
        .iter()
        .filter(|bt| index.is_consensual(bt))
        .cloned()
        .collect();
    for (i, v) in variants.iter().enumerate() {
        if i == winner {
            continue;
        }
        selected.extend(
            v.biterms
                .iter()
                .filter(|bt| index.is_consensual(bt) && index.itvf_norm(bt) > threshold)
                .cloned(),
        );
    }
    Some(SentenceSelection {
        scores,
        winner,
        selected,
    })
}

/// A term appended to an artifact document for a consensual biterm.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EnrichmentToken {
    pub text: String,
    pub origin: Biterm,
}

impl EnrichmentToken {
    /// Concatenates the two stems in dictionary order; the relation is dropped.
    pub fn from_biterm(bt: &Biterm) -> Self {
        let (a, b) = if bt.gov <= bt.dep {
            (&bt.gov, &bt.dep)
        } else {
            (&bt.dep, &bt.gov)
        };
        EnrichmentToken {
            text: format!("{a}{b}"),
            origin: bt.clone(),
        }
    }
}

/// Union of per-sentence selections as enrichment tokens, one per distinct
/// text, sorted by text.
pub fn enrichment_tokens<'a, I>(selections: I) -> Vec<EnrichmentToken>
where
    I: IntoIterator<Item = &'a SentenceSelection>,
{
    let mut by_text: BTreeMap<String, EnrichmentToken> = BTreeMap::new();
    let biterms: BTreeSet<&Biterm> = selections.into_iter().flat_map(|s| s.selected.iter()).collect();
    for bt in biterms {
        let tok = EnrichmentToken::from_biterm(bt);
        by_text.entry(tok.text.clone()).or_insert(tok);
    }
    by_text.into_values().collect()
}
