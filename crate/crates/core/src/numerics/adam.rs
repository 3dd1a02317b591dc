use super::Tensor;
use crate::error::{contract_err, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for a fixed list of parameter tensors.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    t: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let (m, v) = params
            .into_iter()
            .map(|p| (vec![0.0; p.len()], vec![0.0; p.len()]))
            .unzip();
        AdamState { config, t: 0, m, v }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(contract_err!(
                "adam: {} params, {} grads, state for {}",
                params.len(),
                grads.len(),
                self.m.len()
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.len() != self.m[i].len() {
                return Err(contract_err!(
                    "adam: parameter {i} shape {:?} vs gradient {:?}",
                    p.shape(),
                    g.shape()
                ));
            }
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = (1.0 - (beta1 as f64).powi(self.t as i32)) as f32;
        let bc2 = (1.0 - (beta2 as f64).powi(self.t as i32)) as f32;
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((w, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState) -> Result<()> {
    state.step(params, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fresh(lr: f32) -> (Vec<Tensor>, AdamState) {
        let params = vec![Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap()];
        let cfg = AdamConfig {
            lr,
            ..Default::default()
        };
        let st = AdamState::new(cfg, &params);
        (params, st)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (mut p, mut st) = fresh(1e-3);
        let before = p.clone();
        st.step(&mut p, &[Tensor::zeros(&[3])]).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.steps(), 1);
    }

    #[test]
    fn zero_lr_leaves_params() {
        let (mut p, mut st) = fresh(0.0);
        let before = p.clone();
        for _ in 0..5 {
            st.step(&mut p, &[Tensor::new(&[3], vec![1.0, -3.0, 0.2]).unwrap()])
                .unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.steps(), 5);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient() {
        // At t=1, m̂ = g and v̂ = g², so the step is lr·g/(|g|+ε) ≈ lr·sign(g).
        let (mut p, mut st) = fresh(1e-2);
        let g = [0.3f32, -5.0, 1e-3];
        st.step(&mut p, &[Tensor::new(&[3], g.to_vec()).unwrap()])
            .unwrap();
        let start = [0.5f32, -1.0, 2.0];
        for i in 0..3 {
            let expected = 1e-2 * g[i] / (g[i].abs() + 1e-8);
            let moved = start[i] - p[0].data()[i];
            assert!((moved - expected).abs() < 1e-6, "{i}: {moved} vs {expected}");
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (mut p, mut st) = fresh(1e-3);
        assert!(st.step(&mut p, &[Tensor::zeros(&[4])]).is_err());
        assert!(st.step(&mut p, &[]).is_err());
    }
}
