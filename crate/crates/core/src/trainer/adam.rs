use super::TrainError;
use crate::autodiff::Tensor;
use crate::params::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First and second moment estimates of one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
}

impl AdamState {
    pub fn zeros_like(t: &Tensor) -> Self {
        Self { m: Tensor::zeros(t.rows(), t.cols()), v: Tensor::zeros(t.rows(), t.cols()) }
    }
}

/// One bias-corrected Adam update; `step` counts from 1.
pub fn adam_step(
    param: &mut Tensor,
    grad: &Tensor,
    state: &mut AdamState,
    step: u64,
    cfg: &AdamConfig,
) -> Result<(), TrainError> {
    if param.shape() != grad.shape() || state.m.shape() != param.shape() {
        return Err(TrainError::Shape(format!(
            "parameter {:?}, gradient {:?}, state {:?}",
            param.shape(),
            grad.shape(),
            state.m.shape()
        )));
    }
    assert!(step >= 1, "Adam steps count from 1");
    let c1 = 1.0 - cfg.beta1.powi(step as i32);
    let c2 = 1.0 - cfg.beta2.powi(step as i32);
    let (m, v) = (state.m.data_mut(), state.v.data_mut());
    for (k, (p, &g)) in param.data_mut().iter_mut().zip(grad.data()).enumerate() {
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[k] / c1;
        let v_hat = v[k] / c2;
        *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Adam over every tensor of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let states = store.iter().map(|(_, p)| AdamState::zeros_like(&p.value)).collect();
        Self { config, step: 0, states }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// `grads` is aligned with the store.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) -> Result<(), TrainError> {
        if grads.len() != self.states.len() {
            return Err(TrainError::Shape(format!("{} gradients for {} parameters", grads.len(), self.states.len())));
        }
        self.step += 1;
        let ids: Vec<_> = store.ids().collect();
        for ((id, g), state) in ids.into_iter().zip(grads).zip(&mut self.states) {
            adam_step(store.get_mut(id), g, state, self.step, &self.config)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: AdamConfig = AdamConfig { lr: 0.1, beta1: 0.9, beta2: 0.999, eps: 1e-8 };

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Tensor::row(vec![1.0, -2.0]);
        let mut s = AdamState::zeros_like(&p);
        for t in 1..=5 {
            adam_step(&mut p, &Tensor::zeros(1, 2), &mut s, t, &CFG).unwrap();
        }
        assert_eq!(p.data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Tensor::row(vec![0.0, 0.0, 0.0]);
        let mut s = AdamState::zeros_like(&p);
        adam_step(&mut p, &Tensor::row(vec![3.0, -0.01, 250.0]), &mut s, 1, &CFG).unwrap();
        for (&v, sign) in p.data().iter().zip([-1.0, 1.0, -1.0]) {
            assert!((v - sign * CFG.lr).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn descends_a_parabola() {
        let mut p = Tensor::scalar(1.0);
        let mut s = AdamState::zeros_like(&p);
        let mut prev = 1.0;
        for t in 1..=10 {
            let g = Tensor::scalar(2.0 * p.item());
            adam_step(&mut p, &g, &mut s, t, &CFG).unwrap();
            let f = p.item().powi(2);
            assert!(f < prev);
            prev = f;
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut p = Tensor::zeros(1, 2);
        let mut s = AdamState::zeros_like(&p);
        assert!(adam_step(&mut p, &Tensor::zeros(2, 1), &mut s, 1, &CFG).is_err());
    }
}
