//! Multi-class F1 scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Average {
    /// Unweighted mean over classes.
    #[default]
    Macro,
    /// Mean over classes weighted by true-class support.
    Weighted,
}

/// `matrix[true][pred]` counts.
pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], num_classes: usize) -> Result<Vec<Vec<usize>>> {
    if y_true.is_empty() {
        return Err(Error::Invalid("F1 of an empty prediction set".into()));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::Invalid(format!(
            "{} labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut m = vec![vec![0; num_classes]; num_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= num_classes || p >= num_classes {
            return Err(Error::Invalid(format!("class index outside 0..{num_classes}")));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

/// Per-class `2PR / (P + R)`; a class with no true positive scores 0.
pub fn per_class_f1(y_true: &[usize], y_pred: &[usize], num_classes: usize) -> Result<Vec<f64>> {
    let m = confusion_matrix(y_true, y_pred, num_classes)?;
    Ok((0..num_classes)
        .map(|c| {
            let tp = m[c][c];
            let fn_ = m[c].iter().sum::<usize>() - tp;
            let fp = (0..num_classes).map(|t| m[t][c]).sum::<usize>() - tp;
            if tp == 0 {
                return 0.0;
            }
            let p = tp as f64 / (tp + fp) as f64;
            let r = tp as f64 / (tp + fn_) as f64;
            2.0 * p * r / (p + r)
        })
        .collect())
}

pub fn macro_f1(y_true: &[usize], y_pred: &[usize], num_classes: usize) -> Result<f64> {
    let f1 = per_class_f1(y_true, y_pred, num_classes)?;
    Ok(f1.iter().sum::<f64>() / num_classes as f64)
}

pub fn weighted_f1(y_true: &[usize], y_pred: &[usize], num_classes: usize) -> Result<f64> {
    let f1 = per_class_f1(y_true, y_pred, num_classes)?;
    let mut support = vec![0usize; num_classes];
    for &t in y_true {
        support[t] += 1;
    }
    Ok(f1.iter().zip(&support).map(|(f, &s)| f * s as f64).sum::<f64>() / y_true.len() as f64)
}

pub fn f1_score(y_true: &[usize], y_pred: &[usize], num_classes: usize, average: F1Average) -> Result<f64> {
    match average {
        F1Average::Macro => macro_f1(y_true, y_pred, num_classes),
        F1Average::Weighted => weighted_f1(y_true, y_pred, num_classes),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_case() {
        let f = per_class_f1(&[0, 0, 1, 1], &[0, 0, 1, 0], 2).unwrap();
        assert!((f[0] - 0.8).abs() < 1e-15);
        assert!((f[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((macro_f1(&[0, 0, 1, 1], &[0, 0, 1, 0], 2).unwrap() - 11.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn constant_prediction_on_balanced_classes() {
        let y: Vec<usize> = (0..40).map(|i| i % 4).collect();
        assert!((macro_f1(&y, &[2; 40], 4).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_empty() {
        assert_eq!(macro_f1(&[0, 1, 2], &[0, 1, 2], 3).unwrap(), 1.0);
        assert!(macro_f1(&[], &[], 3).is_err());
        assert!(macro_f1(&[0], &[0, 1], 3).is_err());
        assert_eq!(weighted_f1(&[0, 1, 1], &[0, 1, 1], 2).unwrap(), 1.0);
    }
}
