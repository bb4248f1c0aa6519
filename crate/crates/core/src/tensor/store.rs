//! Named trainable parameters with Adam state.

use super::scalar::Scalar;
use super::Shape;
use crate::error::{DdlError, Result};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

/// One trainable tensor plus its optimizer state.
#[derive(Clone)]
pub struct Param<T: Scalar> {
    pub shape: Shape,
    pub value: Vec<T>,
    /// Adam first moment.
    pub m: Vec<T>,
    /// Adam second moment.
    pub v: Vec<T>,
    pub step: u64,
    pub grad: Option<Vec<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Ordered map of named parameters. Iteration order is the lexicographic
/// name order, which keeps checkpoints and updates reproducible.
#[derive(Clone, Default)]
pub struct ParameterStore<T: Scalar> {
    entries: BTreeMap<String, Param<T>>,
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        ParameterStore {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, shape: Shape, value: Vec<T>) -> Result<()> {
        if shape.numel() != value.len() {
            return Err(DdlError::ShapeMismatch(format!(
                "parameter {name}: shape {shape} implies {} elements, got {}",
                shape.numel(),
                value.len()
            )));
        }
        if self.entries.contains_key(name) {
            return Err(DdlError::InvalidArgument(format!(
                "parameter {name} already exists"
            )));
        }
        let n = value.len();
        self.entries.insert(
            name.to_string(),
            Param {
                shape,
                value,
                m: vec![T::ZERO; n],
                v: vec![T::ZERO; n],
                step: 0,
                grad: None,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Param<T>> {
        self.entries
            .get(name)
            .ok_or_else(|| DdlError::InvalidArgument(format!("unknown parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param<T>> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| DdlError::InvalidArgument(format!("unknown parameter {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param<T>)> {
        self.entries.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn total_elements(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }

    pub(crate) fn accumulate_grad(&mut self, name: &str, grad: &[T]) -> Result<()> {
        let param = self.get_mut(name)?;
        if grad.len() != param.value.len() {
            return Err(DdlError::ShapeMismatch(format!(
                "gradient for {name} has {} elements, parameter has {}",
                grad.len(),
                param.value.len()
            )));
        }
        match param.grad.as_mut() {
            Some(g) => {
                for (d, s) in g.iter_mut().zip(grad.iter()) {
                    *d += *s;
                }
            }
            None => param.grad = Some(grad.to_vec()),
        }
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        for p in self.entries.values_mut() {
            p.grad = None;
        }
    }

    /// Largest absolute gradient entry, for divergence diagnostics.
    pub fn max_abs_grad(&self) -> f64 {
        self.entries
            .values()
            .flat_map(|p| p.grad.iter().flat_map(|g| g.iter()))
            .map(|g| g.to_f64().abs())
            .fold(0.0, f64::max)
    }

    /// Bias-corrected Adam update over every parameter; clears gradients.
    /// Rejected when any parameter is missing its gradient.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        for (name, p) in self.entries.iter() {
            if p.grad.is_none() {
                return Err(DdlError::Gradient(format!(
                    "adam_step: parameter {name} has no gradient; run backward first"
                )));
            }
        }
        let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
        let (one_m_b1, one_m_b2) = (
            T::from_f64(1.0 - cfg.beta1),
            T::from_f64(1.0 - cfg.beta2),
        );
        let eps = T::from_f64(cfg.eps);
        for p in self.entries.values_mut() {
            let grad = p.grad.take().expect("checked above");
            p.step += 1;
            let corr1 = T::from_f64(1.0 / (1.0 - cfg.beta1.powi(p.step as i32)));
            let corr2 = T::from_f64(1.0 / (1.0 - cfg.beta2.powi(p.step as i32)));
            let lr = T::from_f64(cfg.lr);
            for i in 0..p.value.len() {
                let g = grad[i];
                p.m[i] = b1 * p.m[i] + one_m_b1 * g;
                p.v[i] = b2 * p.v[i] + one_m_b2 * g * g;
                let m_hat = p.m[i] * corr1;
                let v_hat = p.v[i] * corr2;
                p.value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// SHA-256 over names, shapes and values; detects any parameter mutation.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, p) in &self.entries {
            hasher.update(name.as_bytes());
            for d in p.shape.dims() {
                hasher.update((*d as u64).to_le_bytes());
            }
            for v in &p.value {
                hasher.update(v.to_f64().to_le_bytes());
            }
        }
        format!("{:x}", hasher.finalize())
    }
}
