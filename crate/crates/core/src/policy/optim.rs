use ndarray::{ArrayD, Zip};
use serde::{Deserialize, Serialize};

use super::network::{PolicyNetwork, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected first and second moments.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    config: AdamConfig,
    step: u64,
    m: Vec<ArrayD<T>>,
    v: Vec<ArrayD<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &PolicyNetwork<T>) -> Self {
        let zeros: Vec<ArrayD<T>> = params
            .tensors()
            .iter()
            .map(|(_, t)| ArrayD::zeros(t.raw_dim()))
            .collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut PolicyNetwork<T>, grads: &PolicyNetwork<T>) {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let b1 = T::lit(c.beta1);
        let b2 = T::lit(c.beta2);
        let one = T::one();
        let bc1 = T::lit(1.0 - c.beta1.powi(t));
        let bc2 = T::lit(1.0 - c.beta2.powi(t));
        let lr = T::lit(c.lr);
        let eps = T::lit(c.eps);

        let grads = grads.tensors();
        for (((mut p, (_, g)), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.iter())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            Zip::from(&mut p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::network::NetworkDims;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_step_moves_each_parameter_by_lr() {
        let dims = NetworkDims {
            hidden: 4,
            layers: 1,
            heads: 1,
            ffn: 4,
            history: 1,
            chunk: 1,
            robot_points: 1,
            object_points: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = PolicyNetwork::<f64>::init(dims, &mut rng).unwrap();
        let before = net.clone();
        let mut grads = net.zeros_like();
        for mut t in grads.tensors_mut() {
            t.fill(0.5);
        }
        let mut adam = Adam::new(AdamConfig::default(), &net);
        adam.update(&mut net, &grads);
        // bias-corrected first step is lr·sign(g) (up to ε)
        for ((_, a), (_, b)) in before.tensors().iter().zip(net.tensors().iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!(((x - y) - 1e-4).abs() < 1e-10);
            }
        }
        assert_eq!(adam.steps_taken(), 1);
    }
}
