use serde::{Deserialize, Serialize};

use crate::detector::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Classic (coupled) L2 term added to the gradient; 0 disables it.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    step: u64,
    m: ParamStore,
    v: ParamStore,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        Self {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update, applied tensor by tensor.
pub fn adam_step(params: &mut ParamStore, grads: &ParamStore, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if !params.same_layout(grads) || !params.same_layout(&state.m) {
        return Err(Error::Shape("adam: params, grads and state disagree".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let tensors = params
        .tensors_mut()
        .iter_mut()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut().iter_mut().zip(state.v.tensors_mut()));
    for ((p, g), (m, v)) in tensors {
        for i in 0..p.data.len() {
            let grad = g.data[i] + cfg.weight_decay * p.data[i];
            m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * grad;
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * grad * grad;
            let m_hat = m.data[i] / bc1;
            let v_hat = v.data[i] / bc2;
            p.data[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::Tensor;

    fn store(vals: &[&[f64]]) -> ParamStore {
        ParamStore::from_tensors(
            vals.iter()
                .enumerate()
                .map(|(i, v)| Tensor {
                    name: format!("t{i}"),
                    shape: vec![v.len()],
                    data: v.to_vec(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = store(&[&[1.0, -2.0], &[3.0]]);
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let zero = p.zeros_like();
        adam_step(&mut p, &zero, &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut p = store(&[&[0.0, 0.0, 0.0]]);
        let g = store(&[&[0.5, -3.0, 1e-3]]);
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig::default();
        adam_step(&mut p, &g, &mut st, &cfg).unwrap();
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        for (x, gv) in p.tensors()[0].data.iter().zip(&g.tensors()[0].data) {
            let want = -cfg.lr * gv / (gv.abs() + cfg.eps);
            assert!((x - want).abs() < 1e-18);
            assert!((x + cfg.lr * gv.signum()).abs() < 1e-9);
        }
    }

    #[test]
    fn tensors_update_independently() {
        let mut a = store(&[&[1.0], &[1.0]]);
        let g = store(&[&[1.0], &[0.0]]);
        let mut st = AdamState::new(&a);
        adam_step(&mut a, &g, &mut st, &AdamConfig::default()).unwrap();
        assert!(a.tensors()[0].data[0] < 1.0);
        assert_eq!(a.tensors()[1].data[0], 1.0);
    }

    #[test]
    fn shape_mismatch() {
        let mut a = store(&[&[1.0]]);
        let g = store(&[&[1.0, 2.0]]);
        let mut st = AdamState::new(&a);
        assert!(adam_step(&mut a, &g, &mut st, &AdamConfig::default()).is_err());
    }
}
