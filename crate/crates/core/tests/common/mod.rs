//! Independent reference implementations and generators shared by the
//! property tests and the acceptance suite.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

use proptest::prelude::*;
use tracelink::parsing::Biterm;

pub fn planted_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/planted")
}

// ---- evaluation oracle ----

/// Sorts all pairs of a dense similarity matrix by (-similarity, issue, commit)
/// with a plain comparison sort.
pub fn naive_ranking(issues: &[String], commits: &[String], sims: &[Vec<f64>]) -> Vec<(String, String)> {
    let mut all = Vec::new();
    for (i, a) in issues.iter().enumerate() {
        for (j, b) in commits.iter().enumerate() {
            all.push((sims[i][j], a.clone(), b.clone()));
        }
    }
    all.sort_by(|x, y| {
        y.0.partial_cmp(&x.0)
            .unwrap()
            .then_with(|| x.1.cmp(&y.1))
            .then_with(|| x.2.cmp(&y.2))
    });
    all.into_iter().map(|(_, a, b)| (a, b)).collect()
}

/// AP recomputed by counting hits in every prefix.
pub fn naive_ap(ranked: &[(String, String)], truth: &HashSet<(String, String)>) -> f64 {
    let mut total = 0.0;
    for r in 1..=ranked.len() {
        if !truth.contains(&ranked[r - 1]) {
            continue;
        }
        let hits = ranked[..r].iter().filter(|p| truth.contains(*p)).count();
        total += hits as f64 / r as f64;
    }
    total / truth.len() as f64 * 100.0
}

pub fn naive_map(ranked: &[(String, String)], truth: &HashSet<(String, String)>, issues: &[String]) -> Option<f64> {
    let mut aps = Vec::new();
    for issue in issues {
        let own_truth: HashSet<(String, String)> = truth.iter().filter(|(i, _)| i == issue).cloned().collect();
        if own_truth.is_empty() {
            continue;
        }
        let own: Vec<(String, String)> = ranked.iter().filter(|(i, _)| i == issue).cloned().collect();
        aps.push(naive_ap(&own, &own_truth));
    }
    if aps.is_empty() {
        None
    } else {
        Some(aps.iter().sum::<f64>() / aps.len() as f64)
    }
}

#[derive(Debug, Clone)]
pub struct MetricFixture {
    pub issues: Vec<String>,
    pub commits: Vec<String>,
    pub sims: Vec<Vec<f64>>,
    pub truth: Vec<(usize, usize)>,
}

/// Up to 10 x 10 with coarse similarity levels (so ties occur) and at least
/// one true link.
pub fn metric_fixture() -> impl Strategy<Value = MetricFixture> {
    (1usize..=10, 1usize..=10)
        .prop_flat_map(|(ni, nc)| {
            (
                Just(ni),
                Just(nc),
                prop::collection::vec(prop::collection::vec(0u8..=20, nc), ni),
                prop::collection::vec((0..ni, 0..nc), 1..=(ni * nc).min(12)),
            )
        })
        .prop_map(|(ni, nc, levels, truth)| MetricFixture {
            issues: (0..ni).map(|i| format!("i{i:02}")).collect(),
            commits: (0..nc).map(|j| format!("c{j:02}")).collect(),
            sims: levels
                .into_iter()
                .map(|row| row.into_iter().map(|l| l as f64 / 20.0).collect())
                .collect(),
            truth,
        })
}

// ---- TF-IDF / cosine oracle ----

/// Cosine of TF-IDF vectors built with hash maps, straight from the
/// definitions: tf = count / length, idf = log10(D / df).
pub fn naive_cosines(docs: &[Vec<String>]) -> Vec<Vec<f64>> {
    let d = docs.len() as f64;
    let mut df: HashMap<&str, usize> = HashMap::new();
    for doc in docs {
        let uniq: HashSet<&str> = doc.iter().map(String::as_str).collect();
        for t in uniq {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let vecs: Vec<HashMap<&str, f64>> = docs
        .iter()
        .map(|doc| {
            let mut counts: HashMap<&str, usize> = HashMap::new();
            for t in doc {
                *counts.entry(t.as_str()).or_insert(0) += 1;
            }
            counts
                .into_iter()
                .map(|(t, c)| (t, c as f64 / doc.len() as f64 * (d / df[t] as f64).log10()))
                .collect()
        })
        .collect();
    let norm = |v: &HashMap<&str, f64>| v.values().map(|w| w * w).sum::<f64>().sqrt();
    let mut out = vec![vec![0.0; docs.len()]; docs.len()];
    for (a, va) in vecs.iter().enumerate() {
        for (b, vb) in vecs.iter().enumerate() {
            let (na, nb) = (norm(va), norm(vb));
            if na == 0.0 || nb == 0.0 {
                continue;
            }
            let dot: f64 = va.iter().map(|(t, w)| w * vb.get(t).copied().unwrap_or(0.0)).sum();
            out[a][b] = dot / (na * nb);
        }
    }
    out
}

/// 2..=8 documents of 1..=12 terms over a vocabulary of up to 30 terms.
pub fn small_corpus() -> impl Strategy<Value = Vec<Vec<String>>> {
    (1usize..=30).prop_flat_map(|vocab| {
        prop::collection::vec(
            prop::collection::vec((0..vocab).prop_map(|t| format!("t{t}")), 1..=12),
            2..=8,
        )
    })
}

// ---- consensus oracle ----

pub fn naive_consensual(issue_side: &[Vec<Biterm>], commit_side: &[Vec<Biterm>]) -> HashSet<Biterm> {
    let mut out = HashSet::new();
    for iv in issue_side {
        for bt in iv {
            for cv in commit_side {
                for other in cv {
                    if bt == other {
                        out.insert(bt.clone());
                    }
                }
            }
        }
    }
    out
}

pub fn naive_tvf(bt: &Biterm, issue_side: &[Vec<Biterm>], commit_side: &[Vec<Biterm>]) -> usize {
    issue_side
        .iter()
        .chain(commit_side)
        .filter(|v| v.iter().any(|x| x == bt))
        .count()
}

fn biterm() -> impl Strategy<Value = Biterm> {
    (0..6u8, 0..6u8, 0..3u8).prop_map(|(g, d, r)| {
        Biterm::new(
            format!("g{g}"),
            format!("d{d}"),
            ["obj", "amod", "compound"][r as usize],
        )
    })
}

/// Issue-side and commit-side variants, at most 50 in total, with biterms
/// drawn from a small pool so that overlaps are common.
pub fn variant_sides() -> impl Strategy<Value = (Vec<Vec<Biterm>>, Vec<Vec<Biterm>>)> {
    (1usize..=25, 1usize..=25).prop_flat_map(|(ni, nc)| {
        (
            prop::collection::vec(prop::collection::vec(biterm(), 0..6), ni),
            prop::collection::vec(prop::collection::vec(biterm(), 0..6), nc),
        )
    })
}

// ---- preprocessing fuzz input ----

/// Raw sentences mixing prose, CJK, URLs, paths, mentions, markdown and
/// junk punctuation.
pub fn messy_text() -> impl Strategy<Value = String> {
    let piece = prop_oneof![
        "[a-zA-Z]{1,8}",
        "[\\u{4e00}-\\u{9fa5}]{1,6}",
        Just("https://github.com/baidu/san/issues/338".to_string()),
        Just("src/view/node.js".to_string()),
        Just("/usr/lib".to_string()),
        Just("@errorrik".to_string()),
        Just("**bold**".to_string()),
        Just("`code`".to_string()),
        Just("## ".to_string()),
        Just("> ".to_string()),
        Just("__init__".to_string()),
        Just("~~x~~".to_string()),
        "[*#~`|<>\\[\\]{}=^\\\\\"“”【】「」@/_.,:;()!?-]{1,4}",
        "[ \\t]{1,3}",
    ];
    prop::collection::vec(piece, 0..12).prop_map(|v| v.concat())
}

/// Unified-diff-like text over a mix of kept and excluded file types.
pub fn diff_text() -> impl Strategy<Value = String> {
    let file = prop_oneof![
        Just("src/a.js"),
        Just("src/b.ts"),
        Just("style/main.css"),
        Just("conf/app.properties"),
        Just("pom/build.pom"),
        Just("ui/App.vue"),
        Just("theme/x.styl"),
        Just("res/layout.axml"),
        Just("README.md"),
    ];
    let line = prop_oneof![
        "\\+[ a-z=;()-]{0,20}",
        "-[ a-z=;()-]{0,20}",
        " [ a-z=;()-]{0,20}",
        Just("+- bullet".to_string()),
        Just("+--".to_string()),
        Just("@@ -1,2 +1,3 @@".to_string()),
    ];
    let segment = (file, prop::bool::ANY, prop::collection::vec(line, 0..8)).prop_map(|(f, git, lines)| {
        let mut out = Vec::new();
        if git {
            out.push(format!("diff --git a/{f} b/{f}"));
        }
        out.push(format!("--- a/{f}"));
        out.push(format!("+++ b/{f}"));
        out.extend(lines);
        // Tags every segment's content with its file type.
        out.push(format!("+payload_{}", f.rsplit('.').next().unwrap()));
        out.join("\n")
    });
    prop::collection::vec(segment, 0..5).prop_map(|s| s.join("\n"))
}
