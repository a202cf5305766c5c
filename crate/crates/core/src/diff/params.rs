use super::matrix::Matrix;
use super::tape::{Gradients, Tape, Var};
use super::DiffError;
use rand::Rng;
use std::collections::BTreeMap;

/// Named trainable array with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub value: Matrix,
    pub grad: Matrix,
}

impl Parameter {
    pub fn new(value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows, value.cols);
        Self { value, grad }
    }
}

/// Ordered map of parameters; iteration order is lexicographic by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: BTreeMap<String, Parameter>,
}

/// Tape handles for every parameter of a [`ParamSet`].
#[derive(Debug, Clone, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Var {
        match self.vars.get(name) {
            Some(&v) => v,
            None => panic!("parameter {name} not bound"),
        }
    }

    pub fn try_var(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }
}

/// Glorot-uniform initialization.
pub fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect())
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) {
        self.params.insert(name.into(), Parameter::new(value));
    }

    /// Adds `{prefix}.W` (fan_in × fan_out, Glorot) and `{prefix}.b` (zeros).
    pub fn add_linear<R: Rng>(&mut self, prefix: &str, fan_in: usize, fan_out: usize, rng: &mut R) {
        self.insert(format!("{prefix}.W"), glorot(fan_in, fan_out, rng));
        self.insert(format!("{prefix}.b"), Matrix::zeros(1, fan_out));
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.params.get_mut(name)
    }

    pub fn value(&self, name: &str) -> &Matrix {
        &self.params[name].value
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Parameter)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Parameters whose name starts with `prefix`.
    pub fn subset(&self, prefix: &str) -> ParamSet {
        ParamSet {
            params: self
                .params
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Copy of the set with `from` replaced by `to` at the start of every name.
    pub fn renamed(&self, from: &str, to: &str) -> ParamSet {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|(k, v)| {
                    let name = match k.strip_prefix(from) {
                        Some(rest) => format!("{to}{rest}"),
                        None => k.clone(),
                    };
                    (name, v.clone())
                })
                .collect(),
        }
    }

    /// Overwrite values of every parameter also present in `other`.
    pub fn copy_values_from(&mut self, other: &ParamSet) -> Result<usize, DiffError> {
        let mut copied = 0;
        for (name, p) in &mut self.params {
            if let Some(src) = other.params.get(name) {
                if src.value.shape() != p.value.shape() {
                    return Err(DiffError::ParameterShape {
                        name: name.clone(),
                        expected: p.value.shape(),
                        found: src.value.shape(),
                    });
                }
                p.value = src.value.clone();
                copied += 1;
            }
        }
        Ok(copied)
    }

    /// Place every parameter on the tape, as trainable leaves or constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|(k, p)| {
                let v = if trainable {
                    tape.param(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                };
                (k.clone(), v)
            })
            .collect();
        Bound { vars }
    }

    /// Add tape gradients into the accumulators of the bound parameters.
    pub fn accumulate(&mut self, bound: &Bound, grads: &Gradients) {
        for (name, &var) in &bound.vars {
            if let (Some(p), Some(g)) = (self.params.get_mut(name), grads.get(var)) {
                p.grad.add_assign(g);
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for p in self.params.values_mut() {
            p.grad.data.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params.values().map(|p| p.grad.sq_norm()).sum::<f64>().sqrt()
    }

    /// Rescale gradients so their global norm is at most `max_norm`; returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for p in self.params.values_mut() {
                p.grad.data.iter_mut().for_each(|g| *g *= s);
            }
        }
        norm
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().all(|p| p.value.is_finite())
    }

    pub fn scalar_count(&self) -> usize {
        self.params.values().map(|p| p.value.data.len()).sum()
    }
}
