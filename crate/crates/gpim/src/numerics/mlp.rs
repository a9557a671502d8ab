//! Fully-connected networks over the gradient tape.

use super::tape::{Grads, Tape, Tx};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::SplitRng;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

/// Multi-layer perceptron. Parameters are stored as `[w0, b0, w1, b1, ...]`
/// with weight `i` shaped `[widths[i], widths[i+1]]`. The final layer is
/// linear; hidden layers use `activation`.
#[derive(Clone, Debug)]
pub struct Mlp {
    widths: Vec<usize>,
    activation: Activation,
    params: Vec<Tensor>,
}

/// Tape handles for one network's parameters within a single forward pass.
/// Built with [`Mlp::watch`] (trainable) or [`Mlp::frozen`] (constants).
pub struct MlpHandle {
    widths: Vec<usize>,
    activation: Activation,
    params: Vec<Tx>,
}

impl Mlp {
    pub fn new(widths: Vec<usize>, activation: Activation, rng: &mut SplitRng) -> Mlp {
        assert!(
            widths.len() >= 2,
            "an MLP needs at least input and output widths"
        );
        assert!(
            widths.iter().all(|&w| w > 0),
            "layer widths must be positive"
        );
        let mut params = Vec::new();
        for i in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[i], widths[i + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.uniform(-bound, bound))
                .collect();
            params.push(Tensor::matrix(fan_in, fan_out, w));
            let bb = 1.0 / (fan_in as f64).sqrt();
            let b: Vec<f64> = (0..fan_out).map(|_| rng.uniform(-bb, bb)).collect();
            params.push(Tensor::vector(b));
        }
        Mlp {
            widths,
            activation,
            params,
        }
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn in_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn set_params(&mut self, params: Vec<Tensor>) {
        assert_eq!(params.len(), self.params.len());
        for (new, old) in params.iter().zip(self.params.iter()) {
            assert_eq!(new.shape(), old.shape(), "parameter shape changed");
        }
        self.params = params;
    }

    pub fn params_mut(&mut self) -> &mut Vec<Tensor> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    fn check_input(&self, input: &Tensor) -> Result<Tensor> {
        let x = if input.shape().len() == 1 {
            input.reshape(vec![1, input.len()])
        } else {
            input.clone()
        };
        if x.cols() != self.in_dim() {
            return Err(Error::shape(
                &[x.rows(), self.in_dim()],
                x.shape(),
                "mlp input width",
            ));
        }
        Ok(x)
    }

    /// Plain forward pass without gradient recording.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let mut x = self.check_input(input)?;
        let layers = self.widths.len() - 1;
        for i in 0..layers {
            x = x
                .matmul(&self.params[2 * i])
                .add_row(&self.params[2 * i + 1]);
            if i + 1 < layers {
                x = match self.activation {
                    Activation::Tanh => x.map(f64::tanh),
                    Activation::Relu => x.map(|v| v.max(0.0)),
                };
            }
        }
        Ok(x)
    }

    /// Register trainable parameter leaves on a tape.
    pub fn watch(&self, tape: &mut Tape) -> MlpHandle {
        MlpHandle {
            widths: self.widths.clone(),
            activation: self.activation,
            params: self.params.iter().map(|p| tape.leaf(p.clone())).collect(),
        }
    }

    /// Register parameters as constants: the forward pass is differentiable
    /// with respect to its inputs but the parameters receive no gradients.
    pub fn frozen(&self, tape: &mut Tape) -> MlpHandle {
        MlpHandle {
            widths: self.widths.clone(),
            activation: self.activation,
            params: self
                .params
                .iter()
                .map(|p| tape.constant(p.clone()))
                .collect(),
        }
    }
}

impl MlpHandle {
    pub fn forward(&self, tape: &mut Tape, input: Tx) -> Tx {
        assert_eq!(
            tape.value(input).cols(),
            self.widths[0],
            "mlp input width {} expected, got {:?}",
            self.widths[0],
            tape.value(input).shape()
        );
        let layers = self.widths.len() - 1;
        let mut x = input;
        for i in 0..layers {
            let z = tape.matmul(x, self.params[2 * i]);
            x = tape.add_row(z, self.params[2 * i + 1]);
            if i + 1 < layers {
                x = match self.activation {
                    Activation::Tanh => tape.tanh(x),
                    Activation::Relu => tape.relu(x),
                };
            }
        }
        x
    }

    /// Gradients aligned with [`Mlp::params`], zero-filled where a parameter
    /// did not influence the loss.
    pub fn grads(&self, mlp: &Mlp, grads: &Grads) -> Vec<Tensor> {
        self.params
            .iter()
            .zip(mlp.params.iter())
            .map(|(&tx, p)| grads.get_or_zeros(tx, p.shape()))
            .collect()
    }
}
