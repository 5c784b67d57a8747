//! Adam with bias correction, operating on the toy model's tensors.

use serde::{Deserialize, Serialize};

use super::model::{Head, ToyModel};

/// Optimizer hyperparameters; the defaults are the published ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Parameter-shaped gradient (or moment) storage. `head_b` is empty when
/// the head has no bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grads {
    pub enc_w: Vec<f64>,
    pub enc_b: Vec<f64>,
    pub pool_w: Vec<f64>,
    pub pool_b: Vec<f64>,
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

impl Grads {
    pub fn zeros_like(model: &ToyModel) -> Self {
        let (head_w_len, head_b_len) = match &model.head {
            Head::Fc { weight, bias } => (weight.len(), bias.len()),
            Head::Cos { weight, .. } => (weight.len(), 0),
        };
        Self {
            enc_w: vec![0.0; model.enc_w.len()],
            enc_b: vec![0.0; model.enc_b.len()],
            pool_w: vec![0.0; model.pool_w.len()],
            pool_b: vec![0.0; model.pool_b.len()],
            head_w: vec![0.0; head_w_len],
            head_b: vec![0.0; head_b_len],
        }
    }

    /// Tensors in a fixed order, with names for diagnostics.
    pub fn tensors(&self) -> [(&'static str, &[f64]); 6] {
        [
            ("enc_w", &self.enc_w),
            ("enc_b", &self.enc_b),
            ("pool_w", &self.pool_w),
            ("pool_b", &self.pool_b),
            ("head_w", &self.head_w),
            ("head_b", &self.head_b),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.enc_w,
            &mut self.enc_b,
            &mut self.pool_w,
            &mut self.pool_b,
            &mut self.head_w,
            &mut self.head_b,
        ]
    }

    pub fn scale(&mut self, factor: f64) {
        for tensor in self.tensors_mut() {
            for g in tensor.iter_mut() {
                *g *= factor;
            }
        }
    }
}

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Grads,
    pub v: Grads,
    pub t: u64,
}

impl AdamState {
    pub fn new(model: &ToyModel) -> Self {
        Self {
            m: Grads::zeros_like(model),
            v: Grads::zeros_like(model),
            t: 0,
        }
    }
}

fn update_tensor(
    params: &mut [f64],
    m: &mut [f64],
    v: &mut [f64],
    grads: &[f64],
    lr: f64,
    hp: &AdamParams,
    bias1: f64,
    bias2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + hp.epsilon);
    }
}

/// One bias-corrected Adam step over every model tensor. Frozen tensors
/// are handled upstream by zeroing their gradients: zero gradients from a
/// fresh state leave parameters untouched.
pub fn adam_step(
    model: &mut ToyModel,
    state: &mut AdamState,
    grads: &Grads,
    lr: f64,
    hp: &AdamParams,
) {
    state.t += 1;
    let bias1 = 1.0 - hp.beta1.powi(state.t as i32);
    let bias2 = 1.0 - hp.beta2.powi(state.t as i32);
    update_tensor(
        &mut model.enc_w,
        &mut state.m.enc_w,
        &mut state.v.enc_w,
        &grads.enc_w,
        lr,
        hp,
        bias1,
        bias2,
    );
    update_tensor(
        &mut model.enc_b,
        &mut state.m.enc_b,
        &mut state.v.enc_b,
        &grads.enc_b,
        lr,
        hp,
        bias1,
        bias2,
    );
    update_tensor(
        &mut model.pool_w,
        &mut state.m.pool_w,
        &mut state.v.pool_w,
        &grads.pool_w,
        lr,
        hp,
        bias1,
        bias2,
    );
    update_tensor(
        &mut model.pool_b,
        &mut state.m.pool_b,
        &mut state.v.pool_b,
        &grads.pool_b,
        lr,
        hp,
        bias1,
        bias2,
    );
    match &mut model.head {
        Head::Fc { weight, bias } => {
            update_tensor(
                weight,
                &mut state.m.head_w,
                &mut state.v.head_w,
                &grads.head_w,
                lr,
                hp,
                bias1,
                bias2,
            );
            update_tensor(
                bias,
                &mut state.m.head_b,
                &mut state.v.head_b,
                &grads.head_b,
                lr,
                hp,
                bias1,
                bias2,
            );
        }
        Head::Cos { weight, .. } => {
            update_tensor(
                weight,
                &mut state.m.head_w,
                &mut state.v.head_w,
                &grads.head_w,
                lr,
                hp,
                bias1,
                bias2,
            );
        }
    }
}
