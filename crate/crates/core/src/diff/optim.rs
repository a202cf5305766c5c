use super::matrix::Matrix;
use super::params::ParamSet;
use super::DiffError;
use std::collections::BTreeMap;

/// Adaptive-moment optimizer with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: BTreeMap<String, Matrix>,
    second: BTreeMap<String, Matrix>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self::with_betas(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply one update from the accumulated gradients. Gradients are left in place.
    pub fn step(&mut self, params: &mut ParamSet) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (name, p) in params.iter_mut() {
            let m = self
                .first
                .entry(name.to_string())
                .or_insert_with(|| Matrix::zeros(p.value.rows, p.value.cols));
            let v = self
                .second
                .entry(name.to_string())
                .or_insert_with(|| Matrix::zeros(p.value.rows, p.value.cols));
            for i in 0..p.value.data.len() {
                let g = p.grad.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * g;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * g * g;
                let mh = m.data[i] / c1;
                let vh = v.data[i] / c2;
                p.value.data[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// `target ← τ·target + (1−τ)·online` over identical name sets.
pub fn ema_update(target: &mut ParamSet, online: &ParamSet, tau: f64) -> Result<(), DiffError> {
    if target.len() != online.len() || target.names().zip(online.names()).any(|(a, b)| a != b) {
        let t: Vec<_> = target.names().collect();
        let o: Vec<_> = online.names().collect();
        return Err(DiffError::NameSetMismatch(format!("{t:?} vs {o:?}")));
    }
    for ((name, tp), (_, op)) in target.iter_mut().zip(online.iter()) {
        if tp.value.shape() != op.value.shape() {
            return Err(DiffError::ParameterShape {
                name: name.to_string(),
                expected: tp.value.shape(),
                found: op.value.shape(),
            });
        }
        for (t, &o) in tp.value.data.iter_mut().zip(&op.value.data) {
            *t = tau * *t + (1.0 - tau) * o;
        }
    }
    Ok(())
}

/// Linear ramp of the EMA coefficient from `start` to `end` over `total` steps.
pub fn ema_schedule(start: f64, end: f64, step: usize, total: usize) -> f64 {
    if total <= 1 {
        return end;
    }
    let frac = (step as f64 / (total - 1) as f64).min(1.0);
    start + (end - start) * frac
}
