use crate::diff::Matrix;

pub const COLLAPSE_THRESHOLD: f64 = 1e-4;
pub const COLLAPSE_PATIENCE: usize = 10;

/// Mean over columns of the per-column population standard deviation.
pub fn embedding_std(rows: &Matrix) -> f64 {
    if rows.rows < 2 || rows.cols == 0 {
        return 0.0;
    }
    let n = rows.rows as f64;
    let mut total = 0.0;
    for c in 0..rows.cols {
        let mean = (0..rows.rows).map(|r| rows.get(r, c)).sum::<f64>() / n;
        let var = (0..rows.rows).map(|r| (rows.get(r, c) - mean).powi(2)).sum::<f64>() / n;
        total += var.sqrt();
    }
    total / rows.cols as f64
}

/// Flags a run once the embedding spread stays below the threshold for
/// `patience` consecutive epochs.
#[derive(Debug, Clone)]
pub struct CollapseGate {
    pub threshold: f64,
    pub patience: usize,
    run: usize,
    degenerate: bool,
}

impl Default for CollapseGate {
    fn default() -> Self {
        Self::new(COLLAPSE_THRESHOLD, COLLAPSE_PATIENCE)
    }
}

impl CollapseGate {
    pub fn new(threshold: f64, patience: usize) -> Self {
        Self {
            threshold,
            patience,
            run: 0,
            degenerate: false,
        }
    }

    /// Record one epoch; returns whether the run is flagged.
    pub fn observe(&mut self, std: f64) -> bool {
        if std < self.threshold {
            self.run += 1;
        } else {
            self.run = 0;
        }
        if self.run >= self.patience {
            self.degenerate = true;
        }
        self.degenerate
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use rand::Rng;

    #[test]
    fn identical_rows_flag_after_patience() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]);
        let s = embedding_std(&m);
        assert_eq!(s, 0.0);
        let mut gate = CollapseGate::default();
        for epoch in 1..=COLLAPSE_PATIENCE {
            assert_eq!(gate.observe(s), epoch == COLLAPSE_PATIENCE);
        }
    }

    #[test]
    fn spread_rows_do_not_flag() {
        let mut rng = rng_from(&[2]);
        let mut gate = CollapseGate::default();
        for _ in 0..50 {
            let rows: Vec<Vec<f64>> = (0..16)
                .map(|_| (0..8).map(|_| rng.gen_range(-1.7..1.7)).collect())
                .collect();
            assert!(!gate.observe(embedding_std(&Matrix::from_rows(&rows))));
        }
    }
}
