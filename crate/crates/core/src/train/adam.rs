//! Bias-corrected Adam.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        AdamHyper {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, h: AdamHyper) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let t = state.t.min(i32::MAX as u64) as i32;
    let c1 = 1.0 - h.beta1.powi(t);
    let c2 = 1.0 - h.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * g;
        state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * g * g;
        let mhat = state.m[i] / c1;
        let vhat = state.v[i] / c2;
        params[i] -= h.lr * mhat / (vhat.sqrt() + h.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params_and_decays_moments() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        s.m = vec![0.5, 0.5];
        s.v = vec![0.25, 0.25];
        s.t = 3;
        let before = p.clone();
        adam_step(&mut p, &[0.0, 0.0], &mut s, AdamHyper::with_lr(0.1));
        assert_eq!(s.m, vec![0.45, 0.45]);
        assert!((s.v[0] - 0.249_75).abs() < 1e-15);
        // moments are nonzero so the update is too, but a fresh state stays put
        assert_ne!(p, before);
        let mut q = before.clone();
        let mut fresh = AdamState::new(2);
        adam_step(&mut q, &[0.0, 0.0], &mut fresh, AdamHyper::with_lr(0.1));
        assert_eq!(q, before);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut p = vec![0.0, 0.0, 0.0];
        let mut s = AdamState::new(3);
        adam_step(&mut p, &[3.0, -0.01, 1e3], &mut s, AdamHyper::with_lr(1e-3));
        assert!((p[0] + 1e-3).abs() < 1e-11);
        assert!((p[1] - 1e-3).abs() < 1e-9);
        assert!((p[2] + 1e-3).abs() < 1e-11);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = vec![0.3, 0.1];
            let mut s = AdamState::new(2);
            for k in 0..10 {
                let g = [p[0] * 2.0 + k as f64, (p[1] * 7.0).sin()];
                adam_step(&mut p, &g, &mut s, AdamHyper::with_lr(0.01));
            }
            (p, s)
        };
        assert_eq!(run(), run());
    }
}
