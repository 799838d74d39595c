mod common;

use amrdia::metrics::{
    bleu, corpus_rouge_l, corpus_rouge_n, distinct_n, lcs_len, modified_precision, render_table, rouge_l, rouge_n,
    MetricError, ScoreReport,
};
use proptest::prelude::*;

use common::{brute_lcs, clipped, naive_bleu, ngram_counts, words};

fn sentence(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 0..=max)
        .prop_map(|v| v.into_iter().map(str::to_string).collect())
}

fn corpus() -> impl Strategy<Value = (Vec<Vec<String>>, Vec<Vec<String>>)> {
    (1usize..6).prop_flat_map(|n| {
        (
            prop::collection::vec(sentence(8), n),
            prop::collection::vec(sentence(8), n),
        )
    })
}

#[test]
fn clipped_unigram_precision() {
    let c = [words("the the the the the the the")];
    let r = [words("the cat is on the mat")];
    assert_eq!(modified_precision(&c, &r, 1).unwrap(), (2, 7));
    assert_eq!(clipped(&c[0], &r[0], 1), (2, 7));
}

#[test]
fn identical_corpus_scores_one() {
    let c = vec![words("rest and drink water"), words("see a doctor today please")];
    let b = bleu(&c, &c, 4).unwrap();
    assert!(b.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    assert!((corpus_rouge_n(&c, &c, 1).unwrap() - 100.0).abs() < 1e-9);
    assert!((corpus_rouge_n(&c, &c, 2).unwrap() - 100.0).abs() < 1e-9);
    assert!((corpus_rouge_l(&c, &c).unwrap() - 100.0).abs() < 1e-9);
}

#[test]
fn empty_candidate_scores_zero() {
    let b = bleu(&[Vec::<String>::new()], &[words("a b")], 4).unwrap();
    assert_eq!(b, vec![0.0; 4]);
}

#[test]
fn length_mismatch() {
    let err = bleu(&[words("a")], &[], 4).unwrap_err();
    assert_eq!(err, MetricError::LengthMismatch { candidates: 1, references: 0 });
}

#[test]
fn rouge_hand_counts() {
    let p = rouge_n(&words("a b c"), &words("a x c"), 1);
    assert!((p.recall - 2.0 / 3.0).abs() < 1e-12);
    assert!((p.precision - 2.0 / 3.0).abs() < 1e-12);
    assert!((100.0 * p.f1 - 66.666_666_666_666_67).abs() < 1e-9);
    assert_eq!(rouge_n(&words("a b"), &words("c d"), 1).f1, 0.0);

    let l = rouge_l(&words("the cat sat"), &words("the cat on the mat sat"));
    assert_eq!(lcs_len(&words("the cat sat"), &words("the cat on the mat sat")), 3);
    assert!((l.recall - 0.5).abs() < 1e-12);
    assert!((l.precision - 1.0).abs() < 1e-12);
    assert!((100.0 * l.f1 - 66.666_666_666_666_67).abs() < 1e-9);
    assert_eq!(lcs_len(&words("a b c d e"), &words("e d c b a")), 1);
}

#[test]
fn distinct_hand_cases() {
    assert_eq!(distinct_n(&[words("a a a")], 1), 1.0 / 3.0);
    assert_eq!(distinct_n(&[words("a b a b")], 2), 2.0 / 3.0);
    let same = vec![words("x"); 5];
    assert_eq!(distinct_n(&same, 1), 1.0 / 5.0);
    assert_eq!(distinct_n(&[Vec::<String>::new()], 1), 0.0);
}

#[test]
fn table_has_every_column() {
    let c = vec![words("a b c d")];
    let r = ScoreReport::compute("full", &c, &c).unwrap();
    let t = render_table(&[r.clone()]);
    for col in ["B-1", "B-4", "R-1", "R-2", "R-L", "Dist-1", "Dist-4"] {
        assert!(t.contains(col));
    }
    let back: ScoreReport = serde_json::from_str(&r.to_json_line()).unwrap();
    assert_eq!(back, r);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lcs_matches_brute_force(a in sentence(12), b in sentence(12)) {
        prop_assert_eq!(lcs_len(&a, &b), brute_lcs(&a, &b));
    }

    #[test]
    fn bleu_matches_naive((c, r) in corpus()) {
        let got = bleu(&c, &r, 4).unwrap();
        for n in 1..=4 {
            let expect = naive_bleu(&c, &r, n);
            prop_assert!((got[n - 1] - expect).abs() < 1e-12, "B-{} {} vs {}", n, got[n - 1], expect);
            prop_assert!((0.0..=1.0).contains(&got[n - 1]));
        }
    }

    #[test]
    fn bleu_is_order_invariant((c, r) in corpus(), k in 0usize..6) {
        let k = k % c.len();
        let mut c2 = c.clone();
        let mut r2 = r.clone();
        c2.rotate_left(k);
        r2.rotate_left(k);
        prop_assert_eq!(bleu(&c, &r, 4).unwrap(), bleu(&c2, &r2, 4).unwrap());
    }

    #[test]
    fn rouge_n_matches_naive(a in sentence(10), b in sentence(10), n in 1usize..3) {
        let (hits, cand_total) = clipped(&a, &b, n);
        let ref_total: usize = ngram_counts(&b, n).values().sum();
        let p = rouge_n(&a, &b, n);
        let ratio = |x: usize, y: usize| if y == 0 { 0.0 } else { x as f64 / y as f64 };
        prop_assert_eq!(p.recall, ratio(hits, ref_total));
        prop_assert_eq!(p.precision, ratio(hits, cand_total));
    }

    #[test]
    fn distinct_matches_naive((c, _) in corpus(), n in 1usize..5) {
        let mut all = std::collections::HashMap::new();
        for s in &c {
            for (g, k) in ngram_counts(s, n) {
                *all.entry(g).or_insert(0) += k;
            }
        }
        let total: usize = all.values().sum();
        let expect = if total == 0 { 0.0 } else { all.len() as f64 / total as f64 };
        let got = distinct_n(&c, n);
        prop_assert_eq!(got, expect);
        prop_assert!((0.0..=1.0).contains(&got));
    }
}
