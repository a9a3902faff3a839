use crate::tensor::{Tape, Tensor, TensorError, Var};

/// `w_c = N / (C · count_c)` for classes present in `targets`, 0 otherwise.
pub fn class_weights(targets: &[usize], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &t in targets {
        counts[t] += 1;
    }
    let n = targets.len() as f64;
    counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { n / (n_classes as f64 * c as f64) })
        .collect()
}

/// Cross-entropy over all nodes, weighted by inverse class frequency.
pub fn weighted_loss(tape: &mut Tape<'_>, logits: Var, targets: &[usize]) -> Result<Var, TensorError> {
    let c = tape.value(logits).cols();
    if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
        return Err(TensorError::Contract(format!("target {bad} out of range for {c} classes")));
    }
    let w = class_weights(targets, c);
    tape.softmax_cross_entropy(logits, targets, &w, None)
}

/// Row-wise argmax; ties go to the lowest index.
pub fn predictions(logits: &Tensor) -> Vec<usize> {
    (0..logits.rows())
        .map(|i| {
            let row = logits.row_slice(i);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Mean over present classes of the fraction of that class predicted
/// correctly (macro-averaged recall).
pub fn accuracy_of(predicted: &[usize], targets: &[usize]) -> f64 {
    assert_eq!(predicted.len(), targets.len());
    let c = targets.iter().chain(predicted).max().map_or(0, |&m| m + 1);
    let mut size = vec![0usize; c];
    let mut hit = vec![0usize; c];
    for (&p, &t) in predicted.iter().zip(targets) {
        size[t] += 1;
        if p == t {
            hit[t] += 1;
        }
    }
    let present: Vec<f64> = size
        .iter()
        .zip(&hit)
        .filter(|(&s, _)| s > 0)
        .map(|(&s, &h)| h as f64 / s as f64)
        .collect();
    if present.is_empty() {
        return 0.0;
    }
    present.iter().sum::<f64>() / present.len() as f64
}

pub fn accuracy(logits: &Tensor, targets: &[usize]) -> f64 {
    accuracy_of(&predictions(logits), targets)
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
