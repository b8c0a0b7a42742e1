use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
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

/// First and second moment estimates, one pair per parameter.
#[derive(Clone, Debug)]
pub struct AdamState {
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = |p: &super::Param| Tensor::zeros(p.value.rows(), p.value.cols());
        AdamState {
            step: 0,
            m: store.iter().map(zeros).collect(),
            v: store.iter().map(zeros).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update using the gradients held in `store`.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState, cfg: &AdamConfig) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (k, p) in store.params_mut().iter_mut().enumerate() {
        let m = state.m[k].data_mut();
        let v = state.v[k].data_mut();
        for (((w, g), mi), vi) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(p.grad.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
            let mhat = *mi / c1;
            let vhat = *vi / c2;
            *w -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
}

pub fn sgd_step(store: &mut ParamStore, lr: f64) {
    for p in store.params_mut() {
        for (w, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
            *w -= lr * g;
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

/// Stateful optimizer over a whole [`ParamStore`].
#[derive(Clone, Debug)]
pub enum Optimizer {
    Adam(AdamConfig, AdamState),
    Sgd { lr: f64 },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, store: &ParamStore) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(AdamConfig::with_lr(lr), AdamState::new(store)),
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
        }
    }

    pub fn step(&mut self, store: &mut ParamStore) {
        match self {
            Optimizer::Adam(cfg, state) => adam_step(store, state, cfg),
            Optimizer::Sgd { lr } => sgd_step(store, *lr),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lr_leaves_params_unchanged() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::from_vec(1, 3, vec![1.0, -2.0, 3.0]).unwrap());
        store.params_mut()[0].grad = Tensor::filled(1, 3, 0.5);
        let before = store.value(id).clone();
        let mut st = AdamState::new(&store);
        adam_step(&mut store, &mut st, &AdamConfig::with_lr(0.0));
        sgd_step(&mut store, 0.0);
        assert_eq!(store.value(id), &before);
    }

    #[test]
    fn sgd_on_square() {
        // f(x) = x^2, f'(1) = 2, x <- 1 - 0.1 * 2
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::scalar(1.0));
        store.params_mut()[0].grad = Tensor::scalar(2.0);
        sgd_step(&mut store, 0.1);
        assert!((store.value(id).item() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        // t=1: m = (1-b1) g, v = (1-b2) g^2, mhat = g, vhat = g^2,
        // update = lr * 1 / (1 + eps)
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::scalar(0.0));
        store.params_mut()[0].grad = Tensor::scalar(1.0);
        let cfg = AdamConfig::with_lr(0.01);
        let mut st = AdamState::new(&store);
        adam_step(&mut store, &mut st, &cfg);
        let expected = -0.01 * 1.0 / (1.0 + 1e-8);
        assert!((store.value(id).item() - expected).abs() < 1e-15);
        assert_eq!(st.step_count(), 1);
    }
}
