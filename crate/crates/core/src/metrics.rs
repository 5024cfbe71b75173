//! Ranking metrics over the full candidate universe of a held-out fold.
//!
//! The universe is every `(drug, disease)` pair that is not a training
//! positive. Held-out positives are labeled 1, everything else 0. Pairs with
//! equal scores share one operating point, so precision-recall points,
//! average precision and F1 do not depend on the order of tied pairs.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::Write;

use crate::data::AssociationMatrix;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Thresholds at which confusion matrices are reported.
pub const CONFUSION_THRESHOLDS: [f64; 2] = [0.1, 0.3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn true_positive_rate(&self) -> f64 {
        let pos = self.tp + self.fn_;
        if pos == 0 {
            0.0
        } else {
            self.tp as f64 / pos as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    /// Pairs scoring at or above this value are predicted positive.
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
}

/// Scored and labeled evaluation pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub pairs: Vec<(usize, usize)>,
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl EvalSet {
    /// Builds the universe of non-training pairs with held-out positives as
    /// the positive class.
    pub fn new(scores: &DenseMatrix, train: &AssociationMatrix, test: &[(usize, usize)]) -> Result<Self> {
        let (m, n) = (train.num_drugs(), train.num_diseases());
        if scores.shape() != (m, n) {
            return Err(Error::ShapeMismatch(format!(
                "score matrix {:?} vs association matrix {m}x{n}",
                scores.shape()
            )));
        }
        if test.is_empty() {
            return Err(Error::InvalidData("no held-out positives to evaluate".into()));
        }
        let test: HashSet<(usize, usize)> = test.iter().copied().collect();
        for &(i, j) in &test {
            train.check_drug(i)?;
            train.check_disease(j)?;
            if train.contains(i, j) {
                return Err(Error::InvalidData(format!("test pair ({i}, {j}) is also a training positive")));
            }
        }
        let mut set = EvalSet { pairs: Vec::new(), scores: Vec::new(), labels: Vec::new() };
        for i in 0..m {
            for j in 0..n {
                if train.contains(i, j) {
                    continue;
                }
                let s = scores.get(i, j);
                if !s.is_finite() {
                    return Err(Error::NonFinite(format!("score at ({i}, {j})")));
                }
                set.pairs.push((i, j));
                set.scores.push(s);
                set.labels.push(test.contains(&(i, j)));
            }
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn num_positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

/// Indices sorted by descending score, ties in original order.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// One point per distinct score, in descending-threshold order, so recall is
/// non-decreasing along the list.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Vec<PrPoint> {
    assert_eq!(scores.len(), labels.len());
    let total_pos = labels.iter().filter(|&&l| l).count();
    let order = ranking(scores);
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (rank, &idx) in order.iter().enumerate() {
        if labels[idx] {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = order.get(rank + 1).is_none_or(|&next| scores[next] != scores[idx]);
        if last_of_group {
            points.push(PrPoint {
                recall: if total_pos == 0 { 0.0 } else { tp as f64 / total_pos as f64 },
                precision: tp as f64 / (tp + fp) as f64,
                threshold: scores[idx],
                tp,
                fp,
            });
        }
    }
    points
}

/// Average precision: the mean over positives of the precision at the
/// operating point where each positive is first retrieved.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> f64 {
    let total_pos = labels.iter().filter(|&&l| l).count();
    if total_pos == 0 {
        return 0.0;
    }
    ap_from_points(&pr_curve(scores, labels), total_pos)
}

fn ap_from_points(points: &[PrPoint], total_pos: usize) -> f64 {
    let mut sum = 0.0;
    let mut prev_tp = 0;
    for p in points {
        let new = p.tp - prev_tp;
        if new > 0 {
            sum += new as f64 * (p.tp as f64 / (p.tp + p.fp) as f64);
        }
        prev_tp = p.tp;
    }
    sum / total_pos as f64
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        0.0
    } else {
        (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Best F1 over all operating points of the precision-recall curve.
pub fn max_f1(scores: &[f64], labels: &[bool]) -> f64 {
    let total_pos = labels.iter().filter(|&&l| l).count();
    pr_curve(scores, labels)
        .iter()
        .map(|p| f1_from_counts(p.tp, p.fp, total_pos - p.tp))
        .fold(0.0, f64::max)
}

/// Counts with `score >= threshold` predicted positive.
pub fn confusion_at(scores: &[f64], labels: &[bool], threshold: f64) -> Confusion {
    let mut c = Confusion::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// Fraction of held-out positives `(i, j)` ranked within the top `cutoff` of
/// drug `i`'s candidates. Ties rank the lower disease index first.
pub fn hit_ratio(set: &EvalSet, cutoff: usize) -> f64 {
    let num_drugs = set.pairs.iter().map(|p| p.0 + 1).max().unwrap_or(0);
    let mut per_drug: Vec<Vec<(usize, f64, bool)>> = vec![Vec::new(); num_drugs];
    for ((&(i, j), &s), &l) in set.pairs.iter().zip(&set.scores).zip(&set.labels) {
        per_drug[i].push((j, s, l));
    }
    let (mut hits, mut total) = (0usize, 0usize);
    for cands in &per_drug {
        for &(j, s, l) in cands {
            if !l {
                continue;
            }
            total += 1;
            let better = cands
                .iter()
                .filter(|&&(j2, s2, _)| s2 > s || (s2 == s && j2 < j))
                .count();
            if better < cutoff {
                hits += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub aupr: f64,
    pub f1: f64,
    pub hit_ratio: f64,
    pub hr_cutoff: usize,
    pub num_pairs: usize,
    pub num_positives: usize,
    pub pr_points: Vec<PrPoint>,
    pub confusion: Vec<(f64, Confusion)>,
}

/// Scores the held-out positives `test` against every non-training pair.
pub fn evaluate(
    scores: &DenseMatrix,
    train: &AssociationMatrix,
    test: &[(usize, usize)],
    hr_cutoff: usize,
) -> Result<MetricsReport> {
    let set = EvalSet::new(scores, train, test)?;
    Ok(evaluate_set(&set, hr_cutoff))
}

pub fn evaluate_set(set: &EvalSet, hr_cutoff: usize) -> MetricsReport {
    let total_pos = set.num_positives();
    let pr_points = pr_curve(&set.scores, &set.labels);
    let aupr = if total_pos == 0 { 0.0 } else { ap_from_points(&pr_points, total_pos) };
    let f1 = pr_points
        .iter()
        .map(|p| f1_from_counts(p.tp, p.fp, total_pos - p.tp))
        .fold(0.0, f64::max);
    let confusion = CONFUSION_THRESHOLDS
        .iter()
        .map(|&t| (t, confusion_at(&set.scores, &set.labels, t)))
        .collect();
    MetricsReport {
        aupr,
        f1,
        hit_ratio: hit_ratio(set, hr_cutoff),
        hr_cutoff,
        num_pairs: set.len(),
        num_positives: total_pos,
        pr_points,
        confusion,
    }
}

impl MetricsReport {
    /// `threshold,recall,precision`
    pub fn write_pr_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "threshold,recall,precision")?;
        for p in &self.pr_points {
            writeln!(w, "{},{},{}", p.threshold, p.recall, p.precision)?;
        }
        Ok(())
    }

    /// `threshold,tp,fp,tn,fn`
    pub fn write_confusion_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "threshold,tp,fp,tn,fn")?;
        for (t, c) in &self.confusion {
            writeln!(w, "{t},{},{},{},{}", c.tp, c.fp, c.tn, c.fn_)?;
        }
        Ok(())
    }

    /// Flat `key=value` summary lines.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "aupr={}", self.aupr);
        let _ = writeln!(s, "f1={}", self.f1);
        let _ = writeln!(s, "hit_ratio={}", self.hit_ratio);
        let _ = writeln!(s, "hr_cutoff={}", self.hr_cutoff);
        let _ = writeln!(s, "num_pairs={}", self.num_pairs);
        let _ = writeln!(s, "num_positives={}", self.num_positives);
        for (t, c) in &self.confusion {
            let _ = writeln!(s, "confusion@{t}={},{},{},{}", c.tp, c.fp, c.tn, c.fn_);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(m: usize, n: usize, pairs: &[(usize, usize)]) -> AssociationMatrix {
        AssociationMatrix::from_parts(
            (0..m).map(|i| format!("d{i}")).collect(),
            (0..n).map(|j| format!("s{j}")).collect(),
            pairs.iter().copied(),
        )
        .unwrap()
    }

    #[test]
    fn ap_of_alternating_labels() {
        let ap = average_precision(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]);
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_ranking() {
        let train = mat(2, 3, &[(0, 0), (1, 1)]);
        let scores = DenseMatrix::from_vec(2, 3, vec![0.0, 0.9, 0.1, 0.95, 0.0, 0.2]);
        let r = evaluate(&scores, &train, &[(0, 1), (1, 0)], 1).unwrap();
        assert_eq!((r.aupr, r.f1, r.hit_ratio), (1.0, 1.0, 1.0));
        assert_eq!(r.num_pairs, 4);
    }

    #[test]
    fn empty_test_set_is_an_error() {
        let train = mat(2, 2, &[(0, 0)]);
        let scores = DenseMatrix::zeros(2, 2);
        assert!(evaluate(&scores, &train, &[], 5).is_err());
        assert!(evaluate(&scores, &train, &[(0, 0)], 5).is_err());
    }

    #[test]
    fn tied_scores_collapse_to_prevalence() {
        let pts = pr_curve(&[0.4; 5], &[true, false, false, true, false]);
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].precision, 0.4);
        assert_eq!(pts[0].recall, 1.0);
    }

    #[test]
    fn curve_starts_with_top_positive() {
        let pts = pr_curve(&[0.9, 0.5, 0.2], &[true, false, true]);
        assert_eq!((pts[0].recall, pts[0].precision, pts[0].threshold), (0.5, 1.0, 0.9));
        assert!(pts.windows(2).all(|w| w[0].recall <= w[1].recall));
    }

    #[test]
    fn confusion_extremes() {
        let scores = [0.2, 0.5, 0.7, 0.9];
        let labels = [false, true, false, true];
        let c = confusion_at(&scores, &labels, 0.1);
        assert_eq!((c.fn_, c.tn), (0, 0));
        let c = confusion_at(&scores, &labels, 0.95);
        assert_eq!((c.tp, c.fp), (0, 0));
        let mut last = usize::MAX;
        for t in [0.1, 0.3, 0.6, 0.8, 0.95] {
            let c = confusion_at(&scores, &labels, t);
            assert_eq!(c.total(), 4);
            assert!(c.tp <= last);
            last = c.tp;
        }
    }

    #[test]
    fn hit_ratio_cutoffs() {
        let train = mat(1, 4, &[(0, 0)]);
        let scores = DenseMatrix::from_vec(1, 4, vec![0.0, 0.9, 0.3, 0.5]);
        let set = EvalSet::new(&scores, &train, &[(0, 2)]).unwrap();
        assert_eq!(hit_ratio(&set, 2), 0.0);
        assert_eq!(hit_ratio(&set, 3), 1.0);
        // ties go to the lower disease index
        let scores = DenseMatrix::from_vec(1, 4, vec![0.0, 0.5, 0.5, 0.5]);
        let set = EvalSet::new(&scores, &train, &[(0, 2)]).unwrap();
        assert_eq!(hit_ratio(&set, 1), 0.0);
        assert_eq!(hit_ratio(&set, 2), 1.0);
    }

    #[test]
    fn csv_layouts() {
        let train = mat(1, 3, &[(0, 0)]);
        let scores = DenseMatrix::from_vec(1, 3, vec![0.0, 0.25, 0.5]);
        let r = evaluate(&scores, &train, &[(0, 2)], 10).unwrap();
        let mut pr = Vec::new();
        r.write_pr_csv(&mut pr).unwrap();
        assert_eq!(String::from_utf8(pr).unwrap(), "threshold,recall,precision\n0.5,1,1\n0.25,1,0.5\n");
        let mut cm = Vec::new();
        r.write_confusion_csv(&mut cm).unwrap();
        assert_eq!(String::from_utf8(cm).unwrap(), "threshold,tp,fp,tn,fn\n0.1,1,1,0,0\n0.3,1,0,1,0\n");
        assert!(r.to_kv().starts_with("aupr=1\nf1=1\n"));
    }
}
