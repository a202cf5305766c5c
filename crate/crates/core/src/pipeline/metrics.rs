use super::PipelineError;

fn check(y: &[f64], pred: &[f64]) -> Result<(), PipelineError> {
    if y.len() != pred.len() {
        return Err(PipelineError::LengthMismatch(y.len(), pred.len()));
    }
    if y.len() < 2 {
        return Err(PipelineError::TooFewPoints(y.len()));
    }
    Ok(())
}

/// Coefficient of determination.
pub fn r2(y: &[f64], pred: &[f64]) -> Result<f64, PipelineError> {
    check(y, pred)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let total: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if total <= 0.0 {
        return Err(PipelineError::DegenerateVariance);
    }
    let resid: f64 = y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - resid / total)
}

pub fn rmse(y: &[f64], pred: &[f64]) -> Result<f64, PipelineError> {
    check(y, pred)?;
    let mse = y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64;
    Ok(mse.sqrt())
}

/// Area under the precision-recall curve by step-wise integration:
/// `Σ (R_k − R_{k−1}) · P_k` over distinct score thresholds in descending
/// order. `None` when there are no positives.
pub fn average_precision(positive: &[bool], scores: &[f64]) -> Option<f64> {
    assert_eq!(positive.len(), scores.len());
    let total_pos = positive.iter().filter(|&&p| p).count();
    if total_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / total_pos as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Some(area)
}

/// One-vs-rest average precision per class and their mean over classes
/// that occur in `labels`. `scores[i][c]` is the score of item `i` for class `c`.
pub fn auprc_macro(labels: &[usize], scores: &[Vec<f64>], classes: usize) -> (Option<f64>, Vec<Option<f64>>) {
    let per_class: Vec<Option<f64>> = (0..classes)
        .map(|c| {
            let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
            let s: Vec<f64> = scores.iter().map(|row| row[c]).collect();
            average_precision(&pos, &s)
        })
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let macro_avg = if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    };
    (macro_avg, per_class)
}

/// Mean and sample standard deviation (zero for a single value).
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_mean_predictions() {
        let y = [1.0, 2.0, 4.0, 7.0];
        assert_eq!(r2(&y, &y).unwrap(), 1.0);
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        let mean = [3.5; 4];
        assert_eq!(r2(&y, &mean).unwrap(), 0.0);
    }

    #[test]
    fn constant_truth_is_degenerate() {
        assert!(matches!(
            r2(&[2.0, 2.0], &[1.0, 3.0]),
            Err(PipelineError::DegenerateVariance)
        ));
    }

    #[test]
    fn perfect_ranking_has_unit_precision() {
        let pos = [true, true, false, false];
        assert_eq!(average_precision(&pos, &[0.9, 0.8, 0.3, 0.1]), Some(1.0));
        assert_eq!(average_precision(&[false, false], &[0.1, 0.2]), None);
    }

    #[test]
    fn ties_form_one_threshold() {
        // all tied: a single step at precision = prevalence
        let ap = average_precision(&[true, false, false, true], &[0.5; 4]).unwrap();
        assert_eq!(ap, 0.5);
    }
}
