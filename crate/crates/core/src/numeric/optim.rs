use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{PllError, Result};
use crate::numeric::{Gradients, Matrix, Tape};

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
    m: Matrix,
    v: Matrix,
}

/// Named parameters with gradient buffers and Adam moments.
#[derive(Debug)]
pub struct ParamStore {
    uid: u64,
    params: Vec<Param>,
    step: u64,
}

impl Clone for ParamStore {
    // A clone is a distinct store; tapes built from it must not feed the original.
    fn clone(&self) -> Self {
        ParamStore {
            uid: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
            params: self.params.clone(),
            step: self.step,
        }
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            uid: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
            params: Vec::new(),
            step: 0,
        }
    }

    pub(crate) fn uid(&self) -> u64 {
        self.uid
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> usize {
        let (r, c) = value.shape();
        self.params.push(Param {
            name: name.into(),
            value,
            grad: Matrix::zeros(r, c),
            m: Matrix::zeros(r, c),
            v: Matrix::zeros(r, c),
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn value(&self, index: usize) -> &Matrix {
        &self.params[index].value
    }

    pub fn value_mut(&mut self, index: usize) -> &mut Matrix {
        &mut self.params[index].value
    }

    pub fn grad(&self, index: usize) -> &Matrix {
        &self.params[index].grad
    }

    pub fn name(&self, index: usize) -> &str {
        &self.params[index].name
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Adds the gradients of every tape entry that came from this store.
    pub fn accumulate(&mut self, tape: &Tape, grads: &Gradients) -> Result<()> {
        for (var, store, index) in tape.param_refs() {
            if store != self.uid {
                continue;
            }
            if let Some(g) = grads.get(var) {
                self.params[index].grad.add_assign(g)?;
            }
        }
        Ok(())
    }

    pub fn grads_finite(&self) -> bool {
        self.params.iter().all(|p| p.grad.is_finite())
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Adam with decoupled weight decay; gradient buffers are zeroed afterwards.
    pub fn adam_step(&mut self, lr: f64, weight_decay: f64) -> Result<()> {
        self.adam_step_with(&AdamConfig {
            lr,
            weight_decay,
            ..AdamConfig::default()
        })
    }

    pub fn adam_step_with(&mut self, cfg: &AdamConfig) -> Result<()> {
        if let Some(p) = self.params.iter().find(|p| !p.grad.is_finite()) {
            return Err(PllError::NonFinite(format!("gradient of parameter '{}'", p.name)));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for p in &mut self.params {
            let values = p.value.as_mut_slice();
            let grads = p.grad.as_slice();
            let m = p.m.as_mut_slice();
            let v = p.v.as_mut_slice();
            for k in 0..values.len() {
                let g = grads[k];
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                values[k] -= cfg.lr * cfg.weight_decay * values[k];
                values[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        self.zero_grad();
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", Matrix::filled(1, 1, x));
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = scalar_store(1.25);
        s.adam_step(0.1, 0.0).unwrap();
        assert_eq!(s.value(0)[(0, 0)], 1.25);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + eps)
        let mut s = scalar_store(2.0);
        s.params[0].grad[(0, 0)] = 1.0;
        s.adam_step(0.1, 0.0).unwrap();
        let moved = 2.0 - s.value(0)[(0, 0)];
        assert!((moved - 0.1).abs() < 1e-8, "moved {moved}");
        assert_eq!(s.grad(0)[(0, 0)], 0.0);
    }

    #[test]
    fn decoupled_decay() {
        let mut s = scalar_store(3.0);
        s.adam_step(0.1, 0.1).unwrap();
        assert!((s.value(0)[(0, 0)] - 3.0 * 0.99).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut s = scalar_store(0.0);
        s.add("bad", Matrix::zeros(2, 2));
        s.params[1].grad[(1, 0)] = f64::NAN;
        let err = s.adam_step(0.1, 0.0).unwrap_err().to_string();
        assert!(err.contains("bad"), "{err}");
    }

    #[test]
    fn accumulate_ignores_other_stores() {
        let a = scalar_store(2.0);
        let mut b = scalar_store(5.0);
        let mut t = Tape::new();
        let x = t.param(&a, 0);
        let y = t.param(&b, 0);
        let p = t.mul(x, y).unwrap();
        let s = t.sum(p);
        let g = t.backward(s).unwrap();
        b.accumulate(&t, &g).unwrap();
        assert_eq!(b.grad(0)[(0, 0)], 2.0);
    }
}
