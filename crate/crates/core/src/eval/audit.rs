use std::cmp::Ordering;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::EmbeddingMatrix;
use crate::negatives::top_k_cosine;
use crate::{Error, Real, Result};

pub const DEFAULT_CUTOFF: f64 = 0.995;
const TOP: usize = 5;
const RESTARTS: usize = 10;
const ITERATIONS: usize = 100;

/// Share of queries whose max similarity is at most / strictly above `threshold`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub threshold: f64,
    pub below: f64,
    pub exceeding: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub queries: Vec<String>,
    /// Per query; `-1` when the corpus is empty.
    pub max_similarity: Vec<f64>,
    pub top5: Vec<Vec<(String, f64)>>,
    pub thresholds: Vec<ThresholdRow>,
    /// Corpus ids dropped by a contamination filter.
    pub removed: Vec<String>,
}

fn percent(f: f64) -> String {
    let p = 100.0 * f;
    if (p - p.round()).abs() < 1e-9 {
        format!("{}%", p.round())
    } else {
        format!("{p:.2}%")
    }
}

impl AuditReport {
    /// Lines such as `<0.995 100%`.
    pub fn threshold_lines(&self) -> Vec<String> {
        self.thresholds.iter().map(|r| format!("<{} {}", r.threshold, percent(r.below))).collect()
    }

    pub fn markdown(&self) -> String {
        let mut out = String::from("| threshold | below | exceeding |\n|---|---|---|\n");
        for r in &self.thresholds {
            let _ = writeln!(out, "| <{} | {} | {} |", r.threshold, percent(r.below), percent(r.exceeding));
        }
        if !self.removed.is_empty() {
            let _ = writeln!(out, "\nremoved {} corpus items", self.removed.len());
        }
        out
    }

    /// `query,max_similarity,top5` where `top5` is `id:score` joined by `;`.
    pub fn csv(&self) -> String {
        let mut out = String::from("query,max_similarity,top5\n");
        for ((q, m), top) in self.queries.iter().zip(&self.max_similarity).zip(&self.top5) {
            let top: Vec<String> = top.iter().map(|(id, s)| format!("{id}:{s:.6}")).collect();
            let _ = writeln!(out, "{q},{m},{}", top.join(";"));
        }
        out
    }
}

fn check_dims<T>(a: &EmbeddingMatrix<T>, b: &EmbeddingMatrix<T>) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch { expected: a.dim, found: b.dim });
    }
    Ok(())
}

fn audit_inner<T: Real>(queries: &EmbeddingMatrix<T>, corpus: &EmbeddingMatrix<T>, thresholds: &[f64]) -> AuditReport {
    let mut max_similarity = Vec::with_capacity(queries.len());
    let mut top5 = Vec::with_capacity(queries.len());
    for q in queries.rows() {
        let top = top_k_cosine(q, corpus, TOP.min(corpus.len()), None);
        max_similarity.push(top.first().map_or(-1.0, |&(_, s)| s.to_f64_lossy()));
        top5.push(top.into_iter().map(|(i, s)| (corpus.ids()[i].clone(), s.to_f64_lossy())).collect());
    }
    let mut ts = thresholds.to_vec();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let n = max_similarity.len().max(1) as f64;
    let thresholds = ts
        .into_iter()
        .map(|t| {
            let below = max_similarity.iter().filter(|&&m| m <= t).count() as f64 / n;
            ThresholdRow { threshold: t, below, exceeding: 1.0 - below }
        })
        .collect();
    AuditReport { queries: queries.ids().to_vec(), max_similarity, top5, thresholds, removed: Vec::new() }
}

/// Max and top-5 cosine of each query against the corpus, with threshold shares.
pub fn max_similarity_audit<T: Real>(
    queries: &EmbeddingMatrix<T>,
    corpus: &EmbeddingMatrix<T>,
    thresholds: &[f64],
) -> Result<AuditReport> {
    check_dims(queries, corpus)?;
    if corpus.is_empty() {
        return Err(Error::Empty("audit corpus"));
    }
    Ok(audit_inner(queries, corpus, thresholds))
}

/// Drops training rows whose max similarity to any test row exceeds `cutoff`,
/// then audits the test rows against what is left.
pub fn contamination_filter<T: Real>(
    train: &EmbeddingMatrix<T>,
    test: &EmbeddingMatrix<T>,
    cutoff: f64,
) -> Result<(EmbeddingMatrix<T>, AuditReport)> {
    check_dims(train, test)?;
    if test.is_empty() {
        return Err(Error::Empty("test corpus"));
    }
    let flagged: Vec<bool> = train
        .rows()
        .map(|r| top_k_cosine(r, test, 1, None).first().is_some_and(|&(_, s)| s.to_f64_lossy() > cutoff))
        .collect();
    let kept = train.filter(|i| !flagged[i]);
    let mut report = audit_inner(test, &kept, &[cutoff]);
    report.removed = train.ids().iter().zip(&flagged).filter(|(_, &f)| f).map(|(id, _)| id.clone()).collect();
    Ok((kept, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    /// Best agreement of unsupervised 2-means clusters with the true split, in [0.5, 1].
    pub kmeans_accuracy: f64,
    /// Share of points whose 2-means cluster is their own set's majority cluster.
    pub natural_score: f64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn mean(points: &[(Vec<f64>, bool)], pick: impl Fn(usize) -> bool, dim: usize) -> Option<Vec<f64>> {
    let mut c = vec![0.0; dim];
    let mut n = 0usize;
    for (i, (p, _)) in points.iter().enumerate() {
        if pick(i) {
            c.iter_mut().zip(p).for_each(|(c, x)| *c += x);
            n += 1;
        }
    }
    (n > 0).then(|| c.into_iter().map(|x| x / n as f64).collect())
}

fn two_means(points: &[(Vec<f64>, bool)], rng: &mut ChaCha8Rng) -> (Vec<bool>, f64) {
    let n = points.len();
    let i = rng.random_range(0..n);
    let j = (i + rng.random_range(1..n)) % n;
    let mut centers = [points[i].0.clone(), points[j].0.clone()];
    let mut assign = vec![false; n];
    for _ in 0..ITERATIONS {
        let next: Vec<bool> = points.iter().map(|(p, _)| dist2(p, &centers[1]) < dist2(p, &centers[0])).collect();
        let changed = next != assign;
        assign = next;
        for (k, c) in centers.iter_mut().enumerate() {
            if let Some(m) = mean(points, |i| assign[i] == (k == 1), c.len()) {
                *c = m;
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = points.iter().zip(&assign).map(|((p, _), &a)| dist2(p, &centers[a as usize])).sum();
    (assign, inertia)
}

/// How separable two embedding sets are: 2-means agreement and nearest-centroid score.
/// Symmetric in its arguments.
pub fn separation_scores<T: Real>(a: &EmbeddingMatrix<T>, b: &EmbeddingMatrix<T>, seed: u64) -> Result<Separation> {
    check_dims(a, b)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("separation set"));
    }
    let lift = |m: &EmbeddingMatrix<T>, label: bool| {
        m.rows().map(move |r| (r.iter().map(|x| x.to_f64_lossy()).collect::<Vec<_>>(), label)).collect::<Vec<_>>()
    };
    let mut points = lift(a, false);
    points.extend(lift(b, true));
    points.sort_by(|(p, _), (q, _)| {
        p.iter().zip(q).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
    });

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<bool>, f64)> = None;
    for _ in 0..RESTARTS {
        let run = two_means(&points, &mut rng);
        if best.as_ref().is_none_or(|(_, inertia)| run.1 < *inertia) {
            best = Some(run);
        }
    }
    let (assign, _) = best.expect("at least one restart");
    let n = points.len() as f64;
    let agree = points.iter().zip(&assign).filter(|((_, l), a)| l == *a).count();

    // Majority cluster of each group; a tied group's choice does not change the count.
    let majority = |label: bool| {
        let (ones, total) = points
            .iter()
            .zip(&assign)
            .filter(|((_, l), _)| *l == label)
            .fold((0usize, 0usize), |(o, t), (_, &c)| (o + c as usize, t + 1));
        2 * ones > total
    };
    let (ma, mb) = (majority(false), majority(true));
    let natural = points.iter().zip(&assign).filter(|((_, l), &c)| c == if *l { mb } else { ma }).count() as f64 / n;
    Ok(Separation { kmeans_accuracy: agree.max(points.len() - agree) as f64 / n, natural_score: natural })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(prefix: &str, rows: Vec<Vec<f64>>) -> EmbeddingMatrix<f64> {
        let ids = (0..rows.len()).map(|i| format!("{prefix}{i}")).collect();
        EmbeddingMatrix::from_rows(2, ids, rows).unwrap()
    }

    fn unit(deg: f64) -> Vec<f64> {
        let r = deg.to_radians();
        vec![r.cos(), r.sin()]
    }

    #[test]
    fn filter_removes_near_duplicates() {
        let train = m("t", vec![unit(0.0), unit(1.0), unit(90.0)]);
        let test = m("q", vec![unit(0.5)]);
        let (kept, report) = contamination_filter(&train, &test, DEFAULT_CUTOFF).unwrap();
        assert_eq!(report.removed, vec!["t0", "t1"]);
        assert_eq!(kept.ids(), ["t2"]);
        assert_eq!(report.threshold_lines(), vec!["<0.995 100%"]);
        assert!(report.max_similarity[0] <= DEFAULT_CUTOFF);
    }

    #[test]
    fn filter_to_empty_corpus_still_reports() {
        let train = m("t", vec![unit(0.0)]);
        let test = m("q", vec![unit(0.0)]);
        let (kept, report) = contamination_filter(&train, &test, DEFAULT_CUTOFF).unwrap();
        assert!(kept.is_empty());
        assert_eq!(report.thresholds[0].below, 1.0);
        assert!(report.top5[0].is_empty());
    }

    #[test]
    fn audit_shares_and_top5() {
        let corpus = m("c", (0..7).map(|i| unit(10.0 * i as f64)).collect());
        let queries = m("q", vec![unit(0.0), unit(45.0)]);
        let r = max_similarity_audit(&queries, &corpus, &[0.999, 0.9]).unwrap();
        assert_eq!(r.top5[0].len(), 5);
        assert_eq!(r.top5[0][0].0, "c0");
        assert_eq!(r.thresholds[0].threshold, 0.9);
        assert_eq!(r.thresholds[1].below, 0.5);
        assert_eq!(r.thresholds[1].exceeding, 0.5);
        assert!(r.csv().starts_with("query,max_similarity,top5\nq0,"));
        assert!(max_similarity_audit(&queries, &m("e", vec![]), &[0.9]).is_err());
    }

    #[test]
    fn separated_clusters_score_one() {
        let a = m("a", (0..5).map(|i| unit(i as f64)).collect());
        let b = m("b", (0..5).map(|i| unit(90.0 + i as f64)).collect());
        let s = separation_scores(&a, &b, 3).unwrap();
        assert_eq!(s, Separation { kmeans_accuracy: 1.0, natural_score: 1.0 });
    }

    #[test]
    fn separation_is_symmetric() {
        let a = m("a", (0..6).map(|i| unit(37.0 * i as f64)).collect());
        let b = m("b", (0..4).map(|i| unit(11.0 + 53.0 * i as f64)).collect());
        assert_eq!(separation_scores(&a, &b, 9).unwrap(), separation_scores(&b, &a, 9).unwrap());
    }

    #[test]
    fn hand_built_audit() {
        let corpus = m(
            "c",
            vec![vec![0.2, (1.0f64 - 0.04).sqrt()], vec![0.5, (0.75f64).sqrt()], vec![0.9, (1.0f64 - 0.81).sqrt()]],
        );
        let q = m("q", vec![vec![1.0, 0.0]]);
        let r = max_similarity_audit(&q, &corpus, &[0.85, 0.95]).unwrap();
        assert!((r.max_similarity[0] - 0.9).abs() < 1e-12);
        assert_eq!((r.thresholds[0].exceeding, r.thresholds[1].below), (1.0, 1.0));
    }

    #[test]
    fn antipodal_singletons() {
        let s = separation_scores(&m("a", vec![unit(0.0)]), &m("b", vec![unit(180.0)]), 0).unwrap();
        assert_eq!(s, Separation { kmeans_accuracy: 1.0, natural_score: 1.0 });
    }

    #[test]
    fn identical_sets_are_inseparable() {
        let a = m("a", vec![unit(0.0), unit(90.0)]);
        let s = separation_scores(&a, &a, 1).unwrap();
        assert_eq!(s.kmeans_accuracy, 0.5);
        assert_eq!(s.natural_score, 0.5);
    }
}
