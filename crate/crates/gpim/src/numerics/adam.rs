//! Adam optimizer with bias correction.

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct AdamState {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(param_shapes: &[&[usize]], lr: f64) -> AdamState {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: param_shapes
                .iter()
                .map(|s| Tensor::zeros(s.to_vec()))
                .collect(),
            v: param_shapes
                .iter()
                .map(|s| Tensor::zeros(s.to_vec()))
                .collect(),
        }
    }

    pub fn for_params(params: &[Tensor], lr: f64) -> AdamState {
        let shapes: Vec<&[usize]> = params.iter().map(|p| p.shape()).collect();
        AdamState::new(&shapes, lr)
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update. `grads` must supply one gradient per parameter, with
    /// matching shapes.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::contract(format!(
                "adam: {} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads.iter()).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::shape(
                    p.shape(),
                    g.shape(),
                    format!("adam gradient for parameter {i}"),
                ));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for i in 0..params.len() {
            self.m[i] = self.m[i]
                .scale(self.beta1)
                .add(&grads[i].scale(1.0 - self.beta1));
            self.v[i] = self.v[i]
                .scale(self.beta2)
                .add(&grads[i].map(|g| g * g).scale(1.0 - self.beta2));
            let update = self.m[i].zip(&self.v[i], |m, v| {
                let mhat = m / bc1;
                let vhat = v / bc2;
                self.lr * mhat / (vhat.sqrt() + self.eps)
            });
            params[i] = params[i].sub(&update);
        }
        Ok(())
    }

    /// Serialized as flat f64 blobs: [step], then interleaved m/v.
    pub fn flatten(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = vec![(
            "meta".to_string(),
            vec![self.step as f64, self.lr, self.beta1, self.beta2, self.eps],
        )];
        for (i, (m, v)) in self.m.iter().zip(self.v.iter()).enumerate() {
            out.push((format!("m{i}"), m.data().to_vec()));
            out.push((format!("v{i}"), v.data().to_vec()));
        }
        out
    }

    pub fn restore(&mut self, blobs: &[(String, Vec<f64>)]) -> Result<()> {
        for (name, data) in blobs {
            if name == "meta" {
                if data.len() != 5 {
                    return Err(Error::Checkpoint("bad adam meta blob".into()));
                }
                self.step = data[0] as u64;
                self.lr = data[1];
                self.beta1 = data[2];
                self.beta2 = data[3];
                self.eps = data[4];
            } else if let Some(idx) = name.strip_prefix('m').and_then(|s| s.parse::<usize>().ok()) {
                let shape = self.m[idx].shape().to_vec();
                self.m[idx] = Tensor::from_vec(shape, data.clone());
            } else if let Some(idx) = name.strip_prefix('v').and_then(|s| s.parse::<usize>().ok()) {
                let shape = self.v[idx].shape().to_vec();
                self.v[idx] = Tensor::from_vec(shape, data.clone());
            }
        }
        Ok(())
    }
}
