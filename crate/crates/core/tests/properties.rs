mod common;

use std::collections::{BTreeSet, HashSet};

use proptest::prelude::*;
use tracelink::consensus::{enrichment_tokens, itvf, select_sentence_biterms, ConsensusIndex, VariantBiterms};
use tracelink::corpus::{ArtifactKind, GroundTruth};
use tracelink::evaluation::{average_precision, mean_average_precision, per_issue_rankings};
use tracelink::parsing::Biterm;
use tracelink::preprocess::{clean_sentence, split_sentences, trim_diff, DiffTrimConfig};
use tracelink::retrieval::{build_vectors, cosine, rank_links, split_camel_case, Document, SimilarityMatrix};
use tracelink::translation::{TranslatorId, VariantSource};
use tracelink::weighting::{apply_enrichment, repetition_count};

use common::*;

fn docs(terms: &[Vec<String>]) -> Vec<Document> {
    terms
        .iter()
        .enumerate()
        .map(|(i, t)| Document {
            artifact_id: format!("d{i}"),
            kind: if i % 2 == 0 {
                ArtifactKind::Issue
            } else {
                ArtifactKind::Commit
            },
            terms: t.clone(),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn clean_is_idempotent(raw in messy_text()) {
        if let Some(once) = clean_sentence(&raw) {
            prop_assert_eq!(clean_sentence(&once), Some(once.clone()));
            prop_assert!(!once.contains("://"));
            prop_assert!(!once.contains("**"));
            prop_assert_eq!(once.trim(), once.as_str());
        }
    }

    #[test]
    fn split_sentences_yields_trimmed_nonempty(raw in messy_text()) {
        for s in split_sentences(&raw) {
            prop_assert!(!s.is_empty());
            prop_assert_eq!(s.trim(), s.as_str());
            prop_assert!(!s.contains('\n'));
        }
    }

    #[test]
    fn trim_diff_drops_removals_and_excluded_files(diff in diff_text()) {
        let out = trim_diff(&diff, &DiffTrimConfig::default());
        for line in out.lines() {
            prop_assert!(!line.starts_with('-'), "{line:?}");
        }
        for ext in ["css", "properties", "pom", "vue", "styl", "axml"] {
            let marker = format!("payload_{ext}");
            prop_assert!(!out.contains(&marker), "{marker} leaked");
        }
        for ext in ["js", "ts", "md"] {
            let marker = format!("payload_{ext}");
            prop_assert_eq!(diff.contains(&marker), out.contains(&marker));
        }
    }

    #[test]
    fn camel_case_parts_reassemble(token in "[a-zA-Z0-9]{1,16}") {
        let parts = split_camel_case(&token);
        prop_assert_eq!(parts.concat(), token.clone());
        prop_assert!(parts.iter().all(|p| !p.is_empty()));
    }

    #[test]
    fn cosine_matches_oracle_and_is_symmetric(corpus in small_corpus()) {
        let space = build_vectors(&docs(&corpus)).unwrap();
        let expected = naive_cosines(&corpus);
        let v = space.vectors();
        for a in 0..v.len() {
            for b in 0..v.len() {
                let c = cosine(&v[a], &v[b]);
                prop_assert!((c - expected[a][b]).abs() < 1e-9, "{a},{b}: {c} vs {}", expected[a][b]);
                prop_assert_eq!(c, cosine(&v[b], &v[a]));
                prop_assert!((0.0..=1.0).contains(&c));
            }
        }
    }

    #[test]
    fn cosine_ignores_document_scaling(corpus in small_corpus(), pick in 0usize..8, k in 2usize..=10) {
        let pick = pick % corpus.len();
        let mut scaled = corpus.clone();
        scaled[pick] = corpus[pick].iter().flat_map(|t| std::iter::repeat_n(t.clone(), k)).collect();
        let a = build_vectors(&docs(&corpus)).unwrap();
        let b = build_vectors(&docs(&scaled)).unwrap();
        for x in 0..corpus.len() {
            for y in 0..corpus.len() {
                let ca = cosine(&a.vectors()[x], &a.vectors()[y]);
                let cb = cosine(&b.vectors()[x], &b.vectors()[y]);
                prop_assert!((ca - cb).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn consensus_matches_naive_scan((issues, commits) in variant_sides()) {
        let n = issues.len() + commits.len();
        let index = ConsensusIndex::build(&issues, &commits, n).unwrap();
        let naive = naive_consensual(&issues, &commits);
        prop_assert_eq!(index.consensual().iter().cloned().collect::<HashSet<_>>(), naive.clone());
        for bt in issues.iter().chain(&commits).flatten() {
            prop_assert_eq!(index.tvf(bt), naive_tvf(bt, &issues, &commits));
            if naive.contains(bt) {
                prop_assert!((index.itvf_raw(bt) - (n as f64 / (1.0 + naive_tvf(bt, &issues, &commits) as f64)).log10()).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&index.itvf_norm(bt)));
            } else {
                prop_assert_eq!(index.itvf_raw(bt), 0.0);
                prop_assert_eq!(index.itvf_norm(bt), 0.0);
            }
        }
        if !naive.is_empty() {
            let max = naive.iter().map(|b| index.itvf_norm(b)).fold(f64::MIN, f64::max);
            prop_assert_eq!(max, 1.0);
        }
    }

    #[test]
    fn selection_keeps_only_consensual_biterms((issues, commits) in variant_sides(), threshold in 0.0f64..1.0) {
        let index = ConsensusIndex::build(&issues, &commits, issues.len() + commits.len()).unwrap();
        let variants: Vec<VariantBiterms> = issues
            .iter()
            .take(4)
            .enumerate()
            .map(|(i, b)| VariantBiterms {
                source: VariantSource::Translator(TranslatorId::new(format!("t{i}")).unwrap()),
                biterms: b.clone(),
            })
            .collect();
        let sel = select_sentence_biterms(&variants, &index, threshold).unwrap();
        prop_assert!(sel.selected.iter().all(|b| index.is_consensual(b)));
        let best = sel.best_score();
        prop_assert!(sel.scores.iter().all(|(_, s)| *s <= best));
        prop_assert!(sel.scores[..sel.winner].iter().all(|(_, s)| *s < best));
        let winner_consensual: BTreeSet<&Biterm> =
            variants[sel.winner].biterms.iter().filter(|b| index.is_consensual(b)).collect();
        prop_assert!(winner_consensual.iter().all(|b| sel.selected.contains(*b)));
        for b in &sel.selected {
            prop_assert!(winner_consensual.contains(b) || index.itvf_norm(b) > threshold);
        }
    }

    #[test]
    fn enrichment_length_invariant((issues, commits) in variant_sides(), rep in 0u32..6) {
        let index = ConsensusIndex::build(&issues, &commits, issues.len() + commits.len()).unwrap();
        let sels: Vec<_> = issues
            .iter()
            .map(|b| select_sentence_biterms(&[VariantBiterms { source: VariantSource::Identity, biterms: b.clone() }], &index, 0.6).unwrap())
            .collect();
        let routine = enrichment_tokens(sels.iter());
        let emphasized = enrichment_tokens(sels.iter().take(2));
        let doc = apply_enrichment("base text here", &routine, &emphasized, rep);
        prop_assert_eq!(doc.appended.len(), routine.len() + rep as usize * emphasized.len());
        prop_assert_eq!(doc.text.as_str(), "base text here");
        let texts: Vec<&str> = routine.iter().map(|t| t.text.as_str()).collect();
        prop_assert!(texts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn repetition_grows_with_emphasis_and_length(e1 in 0.0f64..1.0, e2 in 0.0f64..1.0, len in 0usize..500, scale in 0.01f64..0.99) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let a = repetition_count(lo, len, scale).unwrap();
        let b = repetition_count(hi, len, scale).unwrap();
        prop_assert!(a <= b);
        prop_assert!(repetition_count(hi, len + 10, scale).unwrap() >= b);
        prop_assert!((b as f64) >= scale * hi * len as f64 - 1e-6);
    }

    #[test]
    fn itvf_decreases_with_frequency(n in 2usize..30000, t in 0usize..1000) {
        prop_assert!(itvf(n, t + 1) < itvf(n, t));
    }

    #[test]
    fn ap_and_map_match_naive_oracle(fx in metric_fixture()) {
        check_metrics(&fx)?;
    }
}

fn check_metrics(fx: &MetricFixture) -> Result<(), TestCaseError> {
    let matrix = SimilarityMatrix {
        issue_ids: fx.issues.clone(),
        commit_ids: fx.commits.clone(),
        values: fx.sims.clone(),
    };
    let ranked = rank_links(&matrix);
    let truth_pairs: HashSet<(String, String)> = fx
        .truth
        .iter()
        .map(|&(i, c)| (fx.issues[i].clone(), fx.commits[c].clone()))
        .collect();
    let truth = GroundTruth::new(truth_pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())));
    let naive = naive_ranking(&fx.issues, &fx.commits, &fx.sims);
    let order: Vec<(String, String)> = ranked
        .iter()
        .map(|l| (l.issue_id.clone(), l.commit_id.clone()))
        .collect();
    prop_assert_eq!(&order, &naive);

    let ap = average_precision(&ranked, &truth).unwrap();
    prop_assert_eq!(format!("{ap:.10}"), format!("{:.10}", naive_ap(&naive, &truth_pairs)));
    let map = mean_average_precision(&per_issue_rankings(&ranked), &truth)
        .unwrap()
        .map;
    prop_assert_eq!(
        format!("{map:.10}"),
        format!("{:.10}", naive_map(&naive, &truth_pairs, &fx.issues).unwrap())
    );
    prop_assert!((0.0..=100.0).contains(&ap) && (0.0..=100.0).contains(&map));
    Ok(())
}
