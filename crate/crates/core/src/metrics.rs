//! Classification metrics shared by model selection and evaluation.

use crate::error::{GateError, Result};

/// F1 of one class, treating `class` as positive.
///
/// `None` when the class is absent from both truth and predictions; `Some(0)`
/// when it exists in the truth but is never predicted (or vice versa).
pub fn f1_for_class(pred: &[bool], truth: &[bool], class: bool) -> Option<f64> {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p == class, t == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp + fn_ == 0 {
        return None;
    }
    let denom = 2 * tp + fp + fn_;
    Some(2.0 * tp as f64 / denom as f64)
}

/// Area under the ROC curve via the Mann-Whitney rank statistic, ties ½.
///
/// `positive[i]` marks the positive class. Returns `None` unless both classes
/// are present.
pub fn auc_roc(scores: &[f64], positive: &[bool]) -> Result<Option<f64>> {
    if scores.len() != positive.len() {
        return Err(GateError::LengthMismatch {
            left: scores.len(),
            right: positive.len(),
        });
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Midranks, accumulated in doubled units to stay integral.
    let mut rank_sum_x2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank_x2 = (i + 1 + j + 1) as u128;
        for &k in &order[i..=j] {
            if positive[k] {
                rank_sum_x2 += midrank_x2;
            }
        }
        i = j + 1;
    }
    let np = n_pos as u128;
    let u_x2 = rank_sum_x2 - np * (np + 1);
    Ok(Some(u_x2 as f64 / (2.0 * n_pos as f64 * n_neg as f64)))
}
