//! AdamW with inspectable state so checkpoints can carry the moments.

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};

use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

#[derive(Debug)]
struct Slot {
    name: String,
    var: Var,
    first: Tensor,
    second: Tensor,
}

/// Adam with decoupled weight decay over a fixed, name-ordered set of variables.
#[derive(Debug)]
pub struct AdamW {
    params: AdamWParams,
    slots: Vec<Slot>,
    step: usize,
}

impl AdamW {
    pub fn new(vars: Vec<(String, Var)>, params: AdamWParams) -> Result<Self> {
        let slots = vars
            .into_iter()
            .map(|(name, var)| {
                let first = var.zeros_like()?;
                let second = var.zeros_like()?;
                Ok(Slot { name, var, first, second })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { params, slots, step: 0 })
    }

    pub fn params(&self) -> AdamWParams {
        self.params
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.params.lr = lr;
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// Applies one update. Variables absent from `grads` are left untouched.
    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        self.step += 1;
        let AdamWParams { lr, beta1, beta2, eps, weight_decay } = self.params;
        let t = self.step as i32;
        let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
        for slot in &mut self.slots {
            let Some(g) = grads.get(slot.var.as_tensor()) else {
                continue;
            };
            slot.first = ((&slot.first * beta1)? + (g * (1.0 - beta1))?)?.detach();
            slot.second = ((&slot.second * beta2)? + (g.sqr()? * (1.0 - beta2))?)?.detach();
            let m_hat = (&slot.first / c1)?;
            let v_hat = (&slot.second / c2)?;
            let decayed = (slot.var.as_tensor() * (1.0 - lr * weight_decay))?;
            let update = (m_hat / (v_hat.sqrt()? + eps)?)?;
            slot.var.set(&(decayed - (update * lr)?)?)?;
        }
        Ok(())
    }

    /// `(name, first moment, second moment)` per variable.
    pub fn moments(&self) -> impl Iterator<Item = (&str, &Tensor, &Tensor)> {
        self.slots.iter().map(|s| (s.name.as_str(), &s.first, &s.second))
    }

    /// Restores moments and the step counter.
    pub fn restore(&mut self, step: usize, mut lookup: impl FnMut(&str) -> Option<(Tensor, Tensor)>) -> Result<()> {
        for slot in &mut self.slots {
            if let Some((first, second)) = lookup(&slot.name) {
                slot.first = first.to_dtype(slot.var.dtype())?;
                slot.second = second.to_dtype(slot.var.dtype())?;
            }
        }
        self.step = step;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    #[test]
    fn minimizes_a_quadratic() {
        let x = Var::from_tensor(&Tensor::new(&[3.0f64, -2.0], &Device::Cpu).unwrap()).unwrap();
        let params = AdamWParams { lr: 0.1, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 };
        let mut opt = AdamW::new(vec![("x".into(), x.clone())], params).unwrap();
        for _ in 0..300 {
            let loss = x.as_tensor().sqr().unwrap().sum_all().unwrap();
            opt.step(&loss.backward().unwrap()).unwrap();
        }
        let v = x.as_tensor().to_vec1::<f64>().unwrap();
        assert!(v.iter().all(|a| a.abs() < 0.05), "{v:?}");
    }

    #[test]
    fn first_step_matches_closed_form() {
        // with bias correction the first Adam step is lr·sign(g) (up to eps)
        let x = Var::from_tensor(&Tensor::new(&[1.0f64], &Device::Cpu).unwrap()).unwrap();
        let params = AdamWParams { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-12, weight_decay: 0.1 };
        let mut opt = AdamW::new(vec![("x".into(), x.clone())], params).unwrap();
        let loss = (x.as_tensor() * 5.0).unwrap().sum_all().unwrap();
        opt.step(&loss.backward().unwrap()).unwrap();
        let v = x.as_tensor().to_vec1::<f64>().unwrap()[0];
        assert!((v - (1.0 * (1.0 - 0.01 * 0.1) - 0.01)).abs() < 1e-12);
        assert_eq!(opt.moments().count(), 1);
    }
}
