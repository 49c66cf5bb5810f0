use std::collections::BTreeMap;

use super::TrainConfig;
use crate::model::Moments;
use crate::scalar::{lit, Scalar};
use crate::tensor::nn::decays;
use crate::tensor::{Matrix, ParamStore};

/// Parameters excluded from weight decay (biases, norm scales and shifts, the ICB gate).
pub fn decay_exempt<T: Scalar>(params: &ParamStore<T>) -> Vec<String> {
    params.names().into_iter().filter(|n| !decays(n)).collect()
}

/// Adam with decoupled weight decay, applied in the order
/// `p *= 1 - lr*wd; m, v updated; p -= lr/(1-b1^t) * m / (sqrt(v)/sqrt(1-b2^t) + eps)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW<T: Scalar> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub weight_decay: T,
    pub steps: u64,
    pub moments: Moments<T>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(config: &TrainConfig, params: &ParamStore<T>) -> Self {
        let zeros: BTreeMap<String, Matrix<T>> = params
            .params()
            .map(|(n, m)| (n.clone(), Matrix::zeros(m.rows(), m.cols())))
            .collect();
        AdamW {
            beta1: lit(config.beta1),
            beta2: lit(config.beta2),
            eps: lit(config.eps),
            weight_decay: lit(config.weight_decay),
            steps: 0,
            moments: Moments {
                first: zeros.clone(),
                second: zeros,
            },
        }
    }

    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &BTreeMap<String, Matrix<T>>, lr: T) {
        self.steps += 1;
        let t = self.steps as i32;
        let one = T::one();
        let bc1 = one - self.beta1.powi(t);
        let bc2_sqrt = (one - self.beta2.powi(t)).sqrt();
        let step_size = lr / bc1;
        for (name, p) in params.params_mut() {
            let Some(g) = grads.get(name) else { continue };
            let m = self.moments.first.get_mut(name).expect("moment per parameter");
            let v = self.moments.second.get_mut(name).expect("moment per parameter");
            let shrink = if decays(name) {
                one - lr * self.weight_decay
            } else {
                one
            };
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *pi = *pi * shrink;
                *mi = self.beta1 * *mi + (one - self.beta1) * gi;
                *vi = self.beta2 * *vi + (one - self.beta2) * gi * gi;
                let denom = vi.sqrt() / bc2_sqrt + self.eps;
                *pi = *pi - step_size * (*mi / denom);
            }
        }
    }
}
