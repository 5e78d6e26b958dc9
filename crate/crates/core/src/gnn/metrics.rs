use serde::{Deserialize, Serialize};

use super::GnnError;
use crate::labels::NodeClass;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub classes: Vec<NodeClass>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    /// Indices of wrongly predicted nodes, ascending.
    pub misclassified: Vec<usize>,
    /// Classes whose precision or recall was 0/0 and reported as 0.
    pub undefined: Vec<NodeClass>,
}

pub fn evaluate(preds: &[usize], truth: &[usize], classes: &[NodeClass]) -> Result<Metrics, GnnError> {
    if preds.len() != truth.len() {
        return Err(GnnError::NodeSetMismatch { predicted: preds.len(), labeled: truth.len() });
    }
    let c = classes.len();
    if let Some(&bad) = preds.iter().chain(truth).find(|&&k| k >= c) {
        return Err(GnnError::Dimension(format!("class index {bad} out of range for {c} classes")));
    }
    let mut confusion = vec![vec![0u64; c]; c];
    let mut misclassified = Vec::new();
    for (i, (&p, &t)) in preds.iter().zip(truth).enumerate() {
        confusion[t][p] += 1;
        if p != t {
            misclassified.push(i);
        }
    }
    let ratio = |num: u64, den: u64| if den == 0 { None } else { Some(num as f64 / den as f64) };
    let mut undefined = Vec::new();
    let (mut precision, mut recall, mut f1) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..c {
        let tp = confusion[k][k];
        let predicted: u64 = (0..c).map(|t| confusion[t][k]).sum();
        let actual: u64 = confusion[k].iter().sum();
        let (p, r) = (ratio(tp, predicted), ratio(tp, actual));
        if p.is_none() || r.is_none() {
            undefined.push(classes[k]);
        }
        let (p, r) = (p.unwrap_or(0.0), r.unwrap_or(0.0));
        precision.push(p);
        recall.push(r);
        f1.push(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) });
    }
    let n = preds.len();
    Ok(Metrics {
        classes: classes.to_vec(),
        confusion,
        accuracy: if n == 0 { 0.0 } else { (n - misclassified.len()) as f64 / n as f64 },
        precision,
        recall,
        f1,
        misclassified,
        undefined,
    })
}

impl Metrics {
    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    /// Off-diagonal confusion cells as `"2 DN as PN"`, row-major.
    pub fn misclassification_summary(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (t, row) in self.confusion.iter().enumerate() {
            for (p, &n) in row.iter().enumerate() {
                if t != p && n > 0 {
                    out.push(format!("{n} {} as {}", self.classes[t].code(), self.classes[p].code()));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: [NodeClass; 2] = [NodeClass::Design, NodeClass::AntiSat];

    #[test]
    fn all_correct() {
        let m = evaluate(&[0, 1, 1, 0], &[0, 1, 1, 0], &TWO).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.f1, vec![1.0, 1.0]);
        assert!(m.misclassified.is_empty());
    }

    #[test]
    fn hand_confusion() {
        // [[5, 1], [2, 4]]
        let truth = [0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1];
        let preds = [0, 0, 0, 0, 0, 1, 0, 0, 1, 1, 1, 1];
        let m = evaluate(&preds, &truth, &TWO).unwrap();
        assert_eq!(m.confusion, vec![vec![5, 1], vec![2, 4]]);
        assert!((m.precision[0] - 5.0 / 7.0).abs() < 1e-15);
        assert!((m.recall[0] - 5.0 / 6.0).abs() < 1e-15);
        assert!((m.f1[0] - 10.0 / 13.0).abs() < 1e-15);
        assert!((m.accuracy - 9.0 / 12.0).abs() < 1e-15);
        assert_eq!(m.total(), 12);
        assert_eq!(m.misclassified, vec![5, 6, 7]);
        assert_eq!(m.misclassification_summary(), vec!["1 DN as AN", "2 AN as DN"]);
    }

    #[test]
    fn zero_over_zero_is_zero() {
        let m = evaluate(&[0, 0], &[0, 0], &TWO).unwrap();
        assert_eq!((m.precision[1], m.recall[1], m.f1[1]), (0.0, 0.0, 0.0));
        assert_eq!(m.undefined, vec![NodeClass::AntiSat]);
    }

    #[test]
    fn mismatched_lengths() {
        assert!(matches!(evaluate(&[0], &[0, 1], &TWO), Err(GnnError::NodeSetMismatch { .. })));
    }
}
