use geoneg::contrastive::{backward, loss, HybridBatch};
use geoneg::encoder::{DualEncoder, EmbeddingMatrix, FeatureVector};
use geoneg::eval::{
    contamination_filter, hit_at_1, max_similarity_audit, separation_scores, EvalItem, EvalSet, EvalSetName,
};
use geoneg::negatives::Modality;
use proptest::prelude::*;

fn unit(v: Vec<f64>) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 1e-3).then(|| v.into_iter().map(|x| x / n).collect())
}

fn matrix(prefix: &str, rows: Vec<Vec<f64>>) -> EmbeddingMatrix<f64> {
    let rows: Vec<Vec<f64>> = rows.into_iter().filter_map(unit).collect();
    let dim = 4;
    EmbeddingMatrix::from_rows(dim, (0..rows.len()).map(|i| format!("{prefix}{i}")).collect(), rows).unwrap()
}

fn rows(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 4), n)
}

proptest! {
    #[test]
    fn filter_is_idempotent(train in rows(1..40), test in rows(1..10), cutoff in 0.5..0.999f64) {
        let (train, test) = (matrix("t", train), matrix("q", test));
        prop_assume!(!test.is_empty() && !train.is_empty());
        let (once, _) = contamination_filter(&train, &test, cutoff).unwrap();
        let (twice, report) = contamination_filter(&once, &test, cutoff).unwrap();
        prop_assert!(report.removed.is_empty());
        prop_assert_eq!(once, twice);
        prop_assert_eq!(report.thresholds[0].below, 1.0);
    }

    #[test]
    fn audit_fractions_are_monotone(q in rows(1..20), c in rows(1..20), mut ts in prop::collection::vec(-1.0..1.0f64, 1..6)) {
        let (q, c) = (matrix("q", q), matrix("c", c));
        prop_assume!(!q.is_empty() && !c.is_empty());
        ts.sort_by(f64::total_cmp);
        let r = max_similarity_audit(&q, &c, &ts).unwrap();
        for w in r.thresholds.windows(2) {
            prop_assert!(w[0].below <= w[1].below);
        }
        for row in &r.thresholds {
            prop_assert!((0.0..=1.0).contains(&row.below));
            prop_assert!((row.below + row.exceeding - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn separation_is_symmetric(a in rows(1..15), b in rows(1..15), seed in 0u64..100) {
        let (a, b) = (matrix("a", a), matrix("b", b));
        prop_assume!(!a.is_empty() && !b.is_empty());
        let (ab, ba) = (separation_scores(&a, &b, seed).unwrap(), separation_scores(&b, &a, seed).unwrap());
        prop_assert_eq!(ab, ba);
        prop_assert!((0.5..=1.0).contains(&ab.kmeans_accuracy));
        prop_assert!((0.0..=1.0).contains(&ab.natural_score));
    }

    #[test]
    fn oracle_projection_hits_everything(vs in rows(2..20)) {
        // anchors and candidates share embeddings; positives equal their anchors
        let m = matrix("x", vs);
        prop_assume!(m.len() >= 2);
        let distinct = (0..m.len()).all(|i| (0..m.len()).all(|j| i == j || m.cosine(i, j) < 1.0 - 1e-12));
        prop_assume!(distinct);
        let ids = m.ids().to_vec();
        let items = ids
            .iter()
            .map(|id| EvalItem { anchor: id.clone(), positive: id.clone(), negatives: ids.iter().filter(|o| *o != id).cloned().collect() })
            .collect();
        let set = EvalSet { name: EvalSetName::RetrievalNeg, items };
        prop_assert_eq!(hit_at_1(&set, &m, &m).unwrap(), 1.0);
    }
}

#[test]
fn hybrid_gradients_match_finite_differences() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let mut feature =
        |d: usize| FeatureVector::new(unit((0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap());
    let pairs: Vec<_> = (0..4).map(|_| (feature(64), feature(256))).collect();
    let negatives = (0..4)
        .map(|i| {
            if i % 2 == 0 {
                (Modality::Text, vec![feature(256), feature(256)])
            } else {
                (Modality::Image, vec![feature(64)])
            }
        })
        .collect();
    let batch = HybridBatch { pairs, negatives };
    let enc = DualEncoder::<f64>::new(3);
    let (_, g) = backward(&batch, &enc).unwrap();
    let h = 1e-5;
    let fd = |f: &dyn Fn(&mut DualEncoder<f64>, f64)| {
        let (mut p, mut m) = (enc.clone(), enc.clone());
        f(&mut p, h);
        f(&mut m, -h);
        (loss(&batch, &p).unwrap() - loss(&batch, &m).unwrap()) / (2.0 * h)
    };
    let check = |a: f64, n: f64| assert!((a - n).abs() / a.abs().max(n.abs()).max(1e-4) < 1e-5, "{a} vs {n}");
    for i in (0..enc.image.weights.len()).step_by(97) {
        check(g.image[i], fd(&|e, d| e.image.weights[i] += d));
    }
    for i in (0..enc.text.weights.len()).step_by(211) {
        check(g.text[i], fd(&|e, d| e.text.weights[i] += d));
    }
    check(g.logit_scale, fd(&|e, d| e.logit_scale += d));
}
