use super::Tensor;
use crate::error::{Error, Result};

/// A named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    /// Frozen parameters are never updated by the optimizer.
    pub frozen: bool,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Self { name: name.into(), value, frozen: false }
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub const DEFAULT_LR: f64 = 1e-3;

    pub fn new(params: &[Parameter], lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            m: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
        }
    }

    pub fn first_moment(&self, i: usize) -> &Tensor {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &Tensor {
        &self.v[i]
    }

    /// Applies one update. `grads[i]` belongs to `params[i]`; frozen
    /// parameters keep their values and moments.
    pub fn step(&mut self, params: &mut [Parameter], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::invalid(format!(
                "adam state tracks {} parameters, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if !p.value.same_shape(g) || !p.value.same_shape(&self.m[i]) {
                return Err(Error::invalid(format!(
                    "gradient shape {:?} does not match parameter `{}` {:?}",
                    g.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
            if p.frozen {
                continue;
            }
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (((w, &gv), mv), vv) in p.value.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(v: f64) -> Parameter {
        Parameter::new("w", Tensor::from_vec(vec![v]))
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut ps = vec![param(1.5)];
        let mut adam = AdamState::new(&ps, 0.01);
        for _ in 0..3 {
            adam.step(&mut ps, &[Tensor::from_vec(vec![0.0])]).unwrap();
        }
        assert_eq!(ps[0].value.data(), &[1.5]);
        assert_eq!(adam.step_count, 3);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps)
        let mut ps = vec![param(1.0)];
        let mut adam = AdamState::new(&ps, 0.01);
        adam.step(&mut ps, &[Tensor::from_vec(vec![4.0])]).unwrap();
        let expected = 1.0 - 0.01 * 4.0 / (4.0 + 1e-8);
        assert!((ps[0].value.data()[0] - expected).abs() < 1e-15);
        assert!((ps[0].value.data()[0] - 0.99).abs() < 1e-8);
    }

    #[test]
    fn frozen_parameter_is_untouched() {
        let mut ps = vec![param(0.123456789), param(2.0)];
        ps[0].frozen = true;
        let mut adam = AdamState::new(&ps, 0.1);
        let g = [Tensor::from_vec(vec![3.0]), Tensor::from_vec(vec![3.0])];
        adam.step(&mut ps, &g).unwrap();
        assert_eq!(ps[0].value.data()[0].to_bits(), 0.123456789f64.to_bits());
        assert_eq!(adam.first_moment(0).data(), &[0.0]);
        assert_eq!(adam.second_moment(0).data(), &[0.0]);
        assert!(ps[1].value.data()[0] < 2.0);
    }

    #[test]
    fn mismatched_gradient_is_an_error() {
        let mut ps = vec![param(1.0)];
        let mut adam = AdamState::new(&ps, 0.1);
        assert!(adam.step(&mut ps, &[Tensor::from_vec(vec![1.0, 2.0])]).is_err());
    }
}
