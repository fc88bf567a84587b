use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Array;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// ADAM moment estimates for a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Array<T>>,
    v: Vec<Array<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Array<T>>) -> Self {
        let (m, v) = params
            .into_iter()
            .map(|p| (Array::zeros(p.rows(), p.cols()), Array::zeros(p.rows(), p.cols())))
            .unzip();
        Self { config, step: 0, m, v }
    }

    /// One bias-corrected descent step `p ← p − lr·m̂/(√v̂ + ε)`.
    pub fn update(&mut self, params: &mut [&mut Array<T>], grads: &[Array<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Usage(format!(
                "adam: {} moments, {} params, {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let one = T::one();
        let bc1 = one - T::lit(c.beta1.powi(self.step as i32));
        let bc2 = one - T::lit(c.beta2.powi(self.step as i32));
        let lr = T::lit(c.lr);
        let eps = T::lit(c.eps);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let pd = p.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for (k, &gk) in g.data().iter().enumerate() {
                md[k] = b1 * md[k] + (one - b1) * gk;
                vd[k] = b2 * vd[k] + (one - b2) * gk * gk;
                let mhat = md[k] / bc1;
                let vhat = vd[k] / bc2;
                pd[k] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Array::scalar(0.0f64);
        let mut st = AdamState::new(AdamConfig::default(), [&p]);
        st.update(&mut [&mut p], &[Array::scalar(1.0)]).unwrap();
        // −1e-3·1/(1 + 1e-8)
        assert!((p.item() - (-9.999_999_900_000_001e-4)).abs() < 1e-18);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = Array::new(2, 2, vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(AdamConfig::default(), [&p]);
        for _ in 0..3 {
            st.update(&mut [&mut p], &[Array::zeros(2, 2)]).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn two_steps_match_scalar_reimplementation() {
        let c = AdamConfig { lr: 0.01, ..Default::default() };
        let g = 0.7;
        let mut p = Array::scalar(2.0f64);
        let mut st = AdamState::new(c, [&p]);
        for _ in 0..2 {
            st.update(&mut [&mut p], &[Array::scalar(g)]).unwrap();
        }
        let (mut x, mut m, mut v) = (2.0f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.01 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((p.item() - x).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = Array::<f64>::zeros(2, 1);
        let mut st = AdamState::new(AdamConfig::default(), [&p]);
        assert!(st.update(&mut [&mut p], &[Array::zeros(1, 2)]).is_err());
    }
}
