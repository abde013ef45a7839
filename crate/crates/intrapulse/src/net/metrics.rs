//! Decision rules and evaluation metrics.

use crate::error::{Error, Result};
use crate::net::train::Evaluation;

/// How multiple per-pulse predictions of one emitter are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CombineRule {
    /// Argmax of the mean log-probability (probabilities clipped at 1e-12).
    #[default]
    LogMean,
    /// Majority vote over per-pulse argmax decisions.
    Vote,
}

/// Combine the predictions of several pulses into one class decision.
/// Ties break toward the lowest class index.
pub fn combine_predictions(probs: &[Vec<f64>], rule: CombineRule) -> Result<usize> {
    let first = probs
        .first()
        .ok_or_else(|| Error::config("cannot combine an empty prediction list"))?;
    let c = first.len();
    if probs.iter().any(|p| p.len() != c) {
        return Err(Error::shape("prediction vectors of unequal length"));
    }
    let decision = match rule {
        CombineRule::LogMean => {
            let mut score = vec![0.0; c];
            for p in probs {
                for (s, &v) in score.iter_mut().zip(p) {
                    *s += v.max(1e-12).ln();
                }
            }
            argmax_first(&score)
        }
        CombineRule::Vote => {
            let mut votes = vec![0usize; c];
            for p in probs {
                votes[argmax_first(p)] += 1;
            }
            argmax_first(&votes.iter().map(|&v| v as f64).collect::<Vec<_>>())
        }
    };
    Ok(decision)
}

/// First (lowest) index achieving the maximum.
fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Row-major `c x c` confusion matrix: `rows` true class, `cols` predicted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub c: usize,
    pub counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn at(&self, true_class: usize, predicted: usize) -> usize {
        self.counts[true_class * self.c + predicted]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn diagonal(&self) -> usize {
        (0..self.c).map(|i| self.at(i, i)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.diagonal() as f64 / self.total() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.c {
            let row: Vec<String> = (0..self.c).map(|p| self.at(r, p).to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Summary metrics of an evaluation: single-pulse and combined-N accuracy
/// plus the single-pulse confusion matrix.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub n_records: usize,
    pub single_accuracy: f64,
    pub combined_accuracy: f64,
    pub group_size: usize,
    pub confusion: ConfusionMatrix,
}

/// Compute the report from per-record probabilities. Same-class records are
/// grouped in file order into chunks of `group_size` for the combined
/// decision (a trailing short group still gets a decision).
pub fn eval_report(eval: &Evaluation, group_size: usize, rule: CombineRule) -> Result<EvalReport> {
    let c = eval.class_count;
    let n = eval.labels.len();
    if n == 0 {
        return Err(Error::config("empty evaluation"));
    }
    let mut counts = vec![0usize; c * c];
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, &label) in eval.labels.iter().enumerate() {
        let row = &eval.probs[i * c..(i + 1) * c];
        let pred = argmax_first(row);
        if (label as usize) >= c {
            return Err(Error::shape(format!("label {label} out of range")));
        }
        counts[label as usize * c + pred] += 1;
        per_class[label as usize].push(i);
    }
    let confusion = ConfusionMatrix { c, counts };

    let mut group_total = 0usize;
    let mut group_correct = 0usize;
    for (class, idxs) in per_class.iter().enumerate() {
        for chunk in idxs.chunks(group_size) {
            if chunk.is_empty() {
                continue;
            }
            let probs: Vec<Vec<f64>> = chunk
                .iter()
                .map(|&i| eval.probs[i * c..(i + 1) * c].to_vec())
                .collect();
            let decision = combine_predictions(&probs, rule)?;
            group_total += 1;
            if decision == class {
                group_correct += 1;
            }
        }
    }

    Ok(EvalReport {
        n_records: n,
        single_accuracy: confusion.accuracy(),
        combined_accuracy: group_correct as f64 / group_total as f64,
        group_size,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(c: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; c];
        v[i] = 1.0;
        v
    }

    #[test]
    fn identical_one_hots_pick_that_class() {
        let probs = vec![one_hot(7, 3); 10];
        assert_eq!(combine_predictions(&probs, CombineRule::LogMean).unwrap(), 3);
        assert_eq!(combine_predictions(&probs, CombineRule::Vote).unwrap(), 3);
    }

    #[test]
    fn single_vector_reduces_to_argmax() {
        let probs = vec![vec![0.1, 0.2, 0.7]];
        assert_eq!(combine_predictions(&probs, CombineRule::LogMean).unwrap(), 2);
    }

    #[test]
    fn log_mean_resolves_strong_minority() {
        // Nine weakly-wrong votes against one strongly-right one: the mean
        // log-probability favors the class that is never ruled out.
        let weak_wrong: Vec<f64> = vec![0.4, 0.35, 0.25];
        let strong_right: Vec<f64> = vec![1e-12, 0.999_999, 1e-12];
        let mut probs = vec![weak_wrong.clone(); 9];
        probs.push(strong_right);
        // Direct evaluation of the rule.
        let mut score = [0.0f64; 3];
        for p in &probs {
            for (s, &v) in score.iter_mut().zip(p.iter()) {
                *s += v.max(1e-12).ln();
            }
        }
        let expect = score
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(
            combine_predictions(&probs, CombineRule::LogMean).unwrap(),
            expect
        );
        // The vote rule disagrees here, which is exactly why it is separate.
        assert_eq!(combine_predictions(&probs, CombineRule::Vote).unwrap(), 0);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let probs = vec![vec![0.5, 0.5]];
        assert_eq!(combine_predictions(&probs, CombineRule::LogMean).unwrap(), 0);
        assert!(combine_predictions(&[], CombineRule::LogMean).is_err());
    }

    fn fake_eval(labels: Vec<u16>, preds: Vec<usize>, c: usize) -> Evaluation {
        let probs = preds
            .iter()
            .flat_map(|&p| {
                let mut row = vec![0.01; c];
                row[p] = 0.9;
                row
            })
            .collect();
        Evaluation {
            labels,
            probs,
            class_count: c,
            accuracy: 0.0,
        }
    }

    #[test]
    fn perfect_classifier_reports_perfect_metrics() {
        let labels: Vec<u16> = (0..30).map(|i| (i % 3) as u16).collect();
        let preds: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
        let eval = fake_eval(labels, preds, 3);
        let report = eval_report(&eval, 10, CombineRule::LogMean).unwrap();
        assert_eq!(report.single_accuracy, 1.0);
        assert_eq!(report.combined_accuracy, 1.0);
        assert_eq!(report.confusion.diagonal(), 30);
        assert_eq!(report.confusion.total(), 30);
    }

    #[test]
    fn confusion_matrix_counts_off_diagonal() {
        let eval = fake_eval(vec![0, 0, 1, 1], vec![0, 1, 1, 1], 2);
        let report = eval_report(&eval, 2, CombineRule::LogMean).unwrap();
        assert_eq!(report.confusion.at(0, 0), 1);
        assert_eq!(report.confusion.at(0, 1), 1);
        assert_eq!(report.confusion.at(1, 1), 2);
        assert_eq!(report.single_accuracy, 0.75);
        let csv = report.confusion.to_csv();
        assert_eq!(csv, "1,1\n0,2\n");
    }

    #[test]
    fn grouping_collects_same_class_records() {
        // 12 records of class 0 (all right), 12 of class 1 (all wrong):
        // groups of 10 -> 2 groups per class (10 + 2).
        let mut labels = vec![0u16; 12];
        labels.extend(vec![1u16; 12]);
        let mut preds = vec![0usize; 12];
        preds.extend(vec![0usize; 12]);
        let eval = fake_eval(labels, preds, 2);
        let report = eval_report(&eval, 10, CombineRule::LogMean).unwrap();
        assert_eq!(report.combined_accuracy, 0.5);
    }
}
