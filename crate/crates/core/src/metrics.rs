//! Corpus BLEU, ROUGE-N, ROUGE-L and Distinct-n over tokenized text.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("{candidates} candidates but {references} references")]
    LengthMismatch { candidates: usize, references: usize },
}

pub fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> Vec<Vec<&str>> {
    if n == 0 || tokens.len() < n {
        return Vec::new();
    }
    tokens
        .windows(n)
        .map(|w| w.iter().map(AsRef::as_ref).collect())
        .collect()
}

fn counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut m = HashMap::new();
    for g in ngrams(tokens, n) {
        *m.entry(g).or_insert(0) += 1;
    }
    m
}

/// Σ min(count in candidate, count in reference) over candidate n-grams.
fn clipped_overlap<S: AsRef<str>>(candidate: &[S], reference: &[S], n: usize) -> usize {
    let r = counts(reference, n);
    counts(candidate, n)
        .iter()
        .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum()
}

fn check_lengths(c: usize, r: usize) -> Result<(), MetricError> {
    if c != r {
        return Err(MetricError::LengthMismatch {
            candidates: c,
            references: r,
        });
    }
    Ok(())
}

/// Corpus clipped n-gram matches and candidate n-gram total.
pub fn modified_precision<S: AsRef<str>>(
    candidates: &[Vec<S>],
    references: &[Vec<S>],
    n: usize,
) -> Result<(usize, usize), MetricError> {
    check_lengths(candidates.len(), references.len())?;
    let mut matched = 0;
    let mut total = 0;
    for (c, r) in candidates.iter().zip(references) {
        matched += clipped_overlap(c, r, n);
        total += c.len().saturating_sub(n - 1);
    }
    Ok((matched, total))
}

/// `B-1 ..= B-max_n`: brevity penalty times the geometric mean of the first
/// k modified precisions. Orders above one with no match use
/// `1 / (total + 1)`.
pub fn bleu<S: AsRef<str>>(
    candidates: &[Vec<S>],
    references: &[Vec<S>],
    max_n: usize,
) -> Result<Vec<f64>, MetricError> {
    check_lengths(candidates.len(), references.len())?;
    let c_len: usize = candidates.iter().map(Vec::len).sum();
    let r_len: usize = references.iter().map(Vec::len).sum();
    if c_len == 0 {
        return Ok(vec![0.0; max_n]);
    }
    let bp = if c_len > r_len {
        1.0
    } else {
        (1.0 - r_len as f64 / c_len as f64).exp()
    };
    let mut log_p = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let (m, t) = modified_precision(candidates, references, n)?;
        let p = if m > 0 {
            m as f64 / t as f64
        } else if n == 1 {
            0.0
        } else {
            1.0 / (t as f64 + 1.0)
        };
        log_p.push(p.ln());
    }
    Ok((1..=max_n)
        .map(|k| {
            let mean = log_p[..k].iter().sum::<f64>() / k as f64;
            if mean == f64::NEG_INFINITY {
                0.0
            } else {
                bp * mean.exp()
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(overlap: usize, ref_total: usize, cand_total: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let recall = ratio(overlap, ref_total);
        let precision = ratio(overlap, cand_total);
        let f1 = if recall + precision == 0.0 {
            0.0
        } else {
            2.0 * recall * precision / (recall + precision)
        };
        Self { recall, precision, f1 }
    }
}

pub fn rouge_n<S: AsRef<str>>(candidate: &[S], reference: &[S], n: usize) -> Prf {
    let overlap = clipped_overlap(candidate, reference, n);
    Prf::from_counts(
        overlap,
        reference.len().saturating_sub(n - 1),
        candidate.len().saturating_sub(n - 1),
    )
}

/// Longest common subsequence length.
pub fn lcs_len<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut prev = vec![0; b.len() + 1];
    let mut cur = vec![0; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> Prf {
    Prf::from_counts(lcs_len(candidate, reference), reference.len(), candidate.len())
}

fn mean_f1(values: impl Iterator<Item = Prf>, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    100.0 * values.map(|p| p.f1).sum::<f64>() / n as f64
}

/// Mean per-example ROUGE-N F1, in percent.
pub fn corpus_rouge_n<S: AsRef<str>>(
    candidates: &[Vec<S>],
    references: &[Vec<S>],
    n: usize,
) -> Result<f64, MetricError> {
    check_lengths(candidates.len(), references.len())?;
    let it = candidates.iter().zip(references).map(|(c, r)| rouge_n(c, r, n));
    Ok(mean_f1(it, candidates.len()))
}

/// Mean per-example ROUGE-L F1, in percent.
pub fn corpus_rouge_l<S: AsRef<str>>(
    candidates: &[Vec<S>],
    references: &[Vec<S>],
) -> Result<f64, MetricError> {
    check_lengths(candidates.len(), references.len())?;
    let it = candidates.iter().zip(references).map(|(c, r)| rouge_l(c, r));
    Ok(mean_f1(it, candidates.len()))
}

/// Unique n-grams over total n-grams across all candidates.
pub fn distinct_n<S: AsRef<str>>(candidates: &[Vec<S>], n: usize) -> f64 {
    let mut seen = HashSet::new();
    let mut total = 0;
    for c in candidates {
        for g in ngrams(c, n) {
            total += 1;
            seen.insert(g);
        }
    }
    if total == 0 {
        0.0
    } else {
        seen.len() as f64 / total as f64
    }
}

/// Scores in table column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub system: String,
    pub size: usize,
    pub bleu: [f64; 4],
    pub rouge_1: f64,
    pub rouge_2: f64,
    pub rouge_l: f64,
    pub distinct: [f64; 4],
}

pub const COLUMNS: [&str; 11] = [
    "B-1", "B-2", "B-3", "B-4", "R-1", "R-2", "R-L", "Dist-1", "Dist-2", "Dist-3", "Dist-4",
];

impl ScoreReport {
    pub fn compute<S: AsRef<str>>(
        system: &str,
        candidates: &[Vec<S>],
        references: &[Vec<S>],
    ) -> Result<Self, MetricError> {
        let b = bleu(candidates, references, 4)?;
        Ok(Self {
            system: system.to_string(),
            size: candidates.len(),
            bleu: [b[0], b[1], b[2], b[3]],
            rouge_1: corpus_rouge_n(candidates, references, 1)?,
            rouge_2: corpus_rouge_n(candidates, references, 2)?,
            rouge_l: corpus_rouge_l(candidates, references)?,
            distinct: [1, 2, 3, 4].map(|n| distinct_n(candidates, n)),
        })
    }

    pub fn values(&self) -> [f64; 11] {
        let [b1, b2, b3, b4] = self.bleu;
        let [d1, d2, d3, d4] = self.distinct;
        [b1, b2, b3, b4, self.rouge_1, self.rouge_2, self.rouge_l, d1, d2, d3, d4]
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Aligned text table, one row per report.
pub fn render_table(reports: &[ScoreReport]) -> String {
    let name_w = reports
        .iter()
        .map(|r| r.system.len())
        .chain(["System".len()])
        .max()
        .unwrap_or(6);
    let mut out = format!("{:<name_w$}", "System");
    for c in COLUMNS {
        let _ = write!(out, " {c:>8}");
    }
    let _ = writeln!(out, " {:>6}", "N");
    for r in reports {
        let _ = write!(out, "{:<name_w$}", r.system);
        for (i, v) in r.values().iter().enumerate() {
            if (4..7).contains(&i) {
                let _ = write!(out, " {v:>8.2}");
            } else {
                let _ = write!(out, " {v:>8.4}");
            }
        }
        let _ = writeln!(out, " {:>6}", r.size);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn identical_corpus_scores_one() {
        let c = vec![toks("the cat sat on the mat"), toks("a dog barked loudly today")];
        for b in bleu(&c, &c, 4).unwrap() {
            assert!((b - 1.0).abs() < 1e-12);
        }
        assert_eq!(corpus_rouge_n(&c, &c, 1).unwrap(), 100.0);
        assert_eq!(corpus_rouge_n(&c, &c, 2).unwrap(), 100.0);
        assert_eq!(corpus_rouge_l(&c, &c).unwrap(), 100.0);
    }

    #[test]
    fn clipped_unigram_precision() {
        let c = vec![toks("the the the the the the the")];
        let r = vec![toks("the cat is on the mat")];
        assert_eq!(modified_precision(&c, &r, 1).unwrap(), (2, 7));
    }

    #[test]
    fn empty_candidate_scores_zero() {
        let c = vec![Vec::<String>::new()];
        let r = vec![toks("a b c")];
        assert_eq!(bleu(&c, &r, 4).unwrap(), vec![0.0; 4]);
        assert_eq!(rouge_l(&c[0], &r[0]).f1, 0.0);
        assert_eq!(distinct_n(&c, 1), 0.0);
    }

    #[test]
    fn length_mismatch() {
        let c = vec![toks("a")];
        assert_eq!(
            bleu(&c, &[], 4).unwrap_err(),
            MetricError::LengthMismatch {
                candidates: 1,
                references: 0
            }
        );
    }

    #[test]
    fn smoothing_and_brevity() {
        // two unigram matches out of three, no bigram match among two bigrams
        let c = vec![toks("a x c")];
        let r = vec![toks("a y c")];
        let b = bleu(&c, &r, 2).unwrap();
        assert!((b[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((b[1] - ((2.0f64 / 3.0) * (1.0 / 3.0)).sqrt()).abs() < 1e-12);
        // shorter candidate: exp(1 - 4/2)
        let b = bleu(&[toks("a b")], &[toks("a b c d")], 1).unwrap();
        assert!((b[0] - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn rouge_cases() {
        let p = rouge_n(&toks("a b c"), &toks("a x c"), 1);
        assert!((p.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((100.0 * p.f1 - 66.666_666_666_666_7).abs() < 1e-9);
        assert_eq!(rouge_n(&toks("a b"), &toks("c d"), 1).f1, 0.0);
        let l = rouge_l(&toks("the cat sat"), &toks("the cat on the mat sat"));
        assert_eq!(l.recall, 0.5);
        assert_eq!(l.precision, 1.0);
        assert!((100.0 * l.f1 - 66.666_666_666_666_7).abs() < 1e-9);
        assert_eq!(lcs_len(&toks("a b c d"), &toks("d c b a")), 1);
    }

    #[test]
    fn distinct_cases() {
        assert!((distinct_n(&[toks("a a a")], 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((distinct_n(&[toks("a b a b")], 2) - 2.0 / 3.0).abs() < 1e-15);
        let same = vec![toks("x"); 5];
        assert!((distinct_n(&same, 1) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn report_table_and_json() {
        let c = vec![toks("a b c d")];
        let r = ScoreReport::compute("full", &c, &c).unwrap();
        let table = render_table(&[r.clone()]);
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines[0].starts_with("System"));
        assert!(lines[0].contains("Dist-4"));
        assert!(lines[1].starts_with("full"));
        assert!(lines[1].contains("100.00"));
        let back: ScoreReport = serde_json::from_str(&r.to_json_line()).unwrap();
        assert_eq!(back, r);
    }
}
