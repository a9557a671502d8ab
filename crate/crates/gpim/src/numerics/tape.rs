//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation of one forward pass. Calling
//! [`Tape::backward`] on a scalar root consumes the tape and returns the
//! gradient of the root with respect to every watched leaf.
//!
//! Nodes created with [`Tape::constant`] do not receive gradients and no
//! work is spent computing them; this is how frozen networks (target
//! critics, the discriminator during imitation updates) are evaluated
//! inside a differentiated expression.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a tape.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Tx(usize);

type BackFn = Box<dyn Fn(&Tensor, &[bool]) -> Vec<Option<Tensor>>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    backprop: Option<BackFn>,
    /// Whether a watched leaf is reachable from this node.
    active: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients keyed by tape handle, produced by [`Tape::backward`].
pub struct Grads {
    g: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, tx: Tx) -> Option<&Tensor> {
        self.g.get(tx.0).and_then(|o| o.as_ref())
    }

    /// Gradient of a watched leaf, defaulting to zeros when the leaf did not
    /// influence the root.
    pub fn get_or_zeros(&self, tx: Tx, shape: &[usize]) -> Tensor {
        self.get(tx)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(shape.to_vec()))
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn value(&self, tx: Tx) -> &Tensor {
        &self.nodes[tx.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, parents: Vec<usize>, backprop: Option<BackFn>) -> Tx {
        let active = backprop.is_some() && parents.iter().any(|&p| self.nodes[p].active);
        self.nodes.push(Node {
            value,
            parents,
            backprop,
            active,
        });
        Tx(self.nodes.len() - 1)
    }

    /// A leaf whose gradient will be reported by `backward`.
    pub fn leaf(&mut self, value: Tensor) -> Tx {
        let tx = self.push(value, vec![], None);
        self.nodes[tx.0].active = true;
        tx
    }

    /// A value that participates in the forward pass but never needs a
    /// gradient.
    pub fn constant(&mut self, value: Tensor) -> Tx {
        self.push(value, vec![], None)
    }

    fn unary(&mut self, x: Tx, value: Tensor, back: impl Fn(&Tensor) -> Tensor + 'static) -> Tx {
        self.push(
            value,
            vec![x.0],
            Some(Box::new(move |g, needs| {
                vec![if needs[0] { Some(back(g)) } else { None }]
            })),
        )
    }

    pub fn add(&mut self, a: Tx, b: Tx) -> Tx {
        let value = self.value(a).add(self.value(b));
        self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(move |g, needs| {
                vec![needs[0].then(|| g.clone()), needs[1].then(|| g.clone())]
            })),
        )
    }

    pub fn sub(&mut self, a: Tx, b: Tx) -> Tx {
        let value = self.value(a).sub(self.value(b));
        self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(move |g, needs| {
                vec![needs[0].then(|| g.clone()), needs[1].then(|| g.scale(-1.0))]
            })),
        )
    }

    pub fn mul(&mut self, a: Tx, b: Tx) -> Tx {
        let (av, bv) = (self.value(a).clone(), self.value(b).clone());
        let value = av.mul(&bv);
        self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(move |g, needs| {
                vec![needs[0].then(|| g.mul(&bv)), needs[1].then(|| g.mul(&av))]
            })),
        )
    }

    pub fn neg(&mut self, x: Tx) -> Tx {
        let value = self.value(x).scale(-1.0);
        self.unary(x, value, |g| g.scale(-1.0))
    }

    pub fn scale(&mut self, x: Tx, c: f64) -> Tx {
        let value = self.value(x).scale(c);
        self.unary(x, value, move |g| g.scale(c))
    }

    pub fn add_scalar(&mut self, x: Tx, c: f64) -> Tx {
        let value = self.value(x).map(|v| v + c);
        self.unary(x, value, |g| g.clone())
    }

    /// [m,k] x [k,n] -> [m,n].
    pub fn matmul(&mut self, a: Tx, b: Tx) -> Tx {
        let (av, bv) = (self.value(a).clone(), self.value(b).clone());
        let value = av.matmul(&bv);
        self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(move |g, needs| {
                vec![
                    needs[0].then(|| g.matmul(&bv.transpose())),
                    needs[1].then(|| av.transpose().matmul(g)),
                ]
            })),
        )
    }

    /// Broadcast-add a bias vector to every row.
    pub fn add_row(&mut self, x: Tx, bias: Tx) -> Tx {
        let value = self.value(x).add_row(self.value(bias));
        self.push(
            value,
            vec![x.0, bias.0],
            Some(Box::new(move |g, needs| {
                vec![needs[0].then(|| g.clone()), needs[1].then(|| g.sum_cols())]
            })),
        )
    }

    pub fn tanh(&mut self, x: Tx) -> Tx {
        let y = self.value(x).map(f64::tanh);
        let yc = y.clone();
        self.unary(x, y, move |g| g.zip(&yc, |gv, yv| gv * (1.0 - yv * yv)))
    }

    pub fn relu(&mut self, x: Tx) -> Tx {
        let xv = self.value(x).clone();
        let y = xv.map(|v| v.max(0.0));
        self.unary(x, y, move |g| {
            g.zip(&xv, |gv, v| if v > 0.0 { gv } else { 0.0 })
        })
    }

    pub fn exp(&mut self, x: Tx) -> Tx {
        let y = self.value(x).map(f64::exp);
        let yc = y.clone();
        self.unary(x, y, move |g| g.mul(&yc))
    }

    pub fn ln(&mut self, x: Tx) -> Tx {
        let xv = self.value(x).clone();
        let y = xv.map(f64::ln);
        self.unary(x, y, move |g| g.zip(&xv, |gv, v| gv / v))
    }

    pub fn square(&mut self, x: Tx) -> Tx {
        let xv = self.value(x).clone();
        let y = xv.map(|v| v * v);
        self.unary(x, y, move |g| g.zip(&xv, |gv, v| 2.0 * v * gv))
    }

    /// Clamp with pass-through gradient strictly inside the range.
    pub fn clamp(&mut self, x: Tx, lo: f64, hi: f64) -> Tx {
        let xv = self.value(x).clone();
        let y = xv.map(|v| v.clamp(lo, hi));
        self.unary(x, y, move |g| {
            g.zip(&xv, |gv, v| if v > lo && v < hi { gv } else { 0.0 })
        })
    }

    /// [m,n] -> [m,1].
    pub fn sum_rows(&mut self, x: Tx) -> Tx {
        let (m, n) = (self.value(x).rows(), self.value(x).cols());
        let y = self.value(x).sum_rows();
        self.unary(x, y, move |g| {
            let mut out = Vec::with_capacity(m * n);
            for i in 0..m {
                out.extend(std::iter::repeat(g.data()[i]).take(n));
            }
            Tensor::matrix(m, n, out)
        })
    }

    pub fn mean_all(&mut self, x: Tx) -> Tx {
        let shape = self.value(x).shape().to_vec();
        let n = self.value(x).len() as f64;
        let y = Tensor::scalar(self.value(x).mean());
        self.unary(x, y, move |g| Tensor::full(shape.clone(), g.item() / n))
    }

    pub fn sum_all(&mut self, x: Tx) -> Tx {
        let shape = self.value(x).shape().to_vec();
        let y = Tensor::scalar(self.value(x).sum());
        self.unary(x, y, move |g| Tensor::full(shape.clone(), g.item()))
    }

    /// x[m,n] - c[m,1], broadcasting c across columns.
    pub fn sub_col(&mut self, x: Tx, c: Tx) -> Tx {
        let (m, n) = (self.value(x).rows(), self.value(x).cols());
        assert_eq!(
            self.value(c).shape(),
            &[m, 1],
            "sub_col expects [m,1] column"
        );
        let xv = self.value(x).clone();
        let cv = self.value(c).clone();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let ci = cv.data()[i];
            out.extend(xv.row(i).iter().map(|v| v - ci));
        }
        let value = Tensor::matrix(m, n, out);
        self.push(
            value,
            vec![x.0, c.0],
            Some(Box::new(move |g, needs| {
                vec![
                    needs[0].then(|| g.clone()),
                    needs[1].then(|| g.sum_rows().scale(-1.0)),
                ]
            })),
        )
    }

    /// x[m,n] * c[m,1], broadcasting c across columns.
    pub fn mul_col(&mut self, x: Tx, c: Tx) -> Tx {
        let (m, n) = (self.value(x).rows(), self.value(x).cols());
        assert_eq!(
            self.value(c).shape(),
            &[m, 1],
            "mul_col expects [m,1] column"
        );
        let xv = self.value(x).clone();
        let cv = self.value(c).clone();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let ci = cv.data()[i];
            out.extend(xv.row(i).iter().map(|v| v * ci));
        }
        let value = Tensor::matrix(m, n, out);
        self.push(
            value,
            vec![x.0, c.0],
            Some(Box::new(move |g, needs| {
                let gx = needs[0].then(|| {
                    let mut out = Vec::with_capacity(m * n);
                    for i in 0..m {
                        let ci = cv.data()[i];
                        out.extend(g.row(i).iter().map(|v| v * ci));
                    }
                    Tensor::matrix(m, n, out)
                });
                let gc = needs[1].then(|| g.mul(&xv).sum_rows());
                vec![gx, gc]
            })),
        )
    }

    /// [m,a] ++ [m,b] -> [m,a+b].
    pub fn concat_cols(&mut self, a: Tx, b: Tx) -> Tx {
        let value = self.value(a).concat_cols(self.value(b));
        let (m, wa, wb) = (
            self.value(a).rows(),
            self.value(a).cols(),
            self.value(b).cols(),
        );
        self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(move |g, needs| {
                let ga = needs[0].then(|| {
                    let mut out = Vec::with_capacity(m * wa);
                    for i in 0..m {
                        out.extend_from_slice(&g.row(i)[..wa]);
                    }
                    Tensor::matrix(m, wa, out)
                });
                let gb = needs[1].then(|| {
                    let mut out = Vec::with_capacity(m * wb);
                    for i in 0..m {
                        out.extend_from_slice(&g.row(i)[wa..]);
                    }
                    Tensor::matrix(m, wb, out)
                });
                vec![ga, gb]
            })),
        )
    }

    /// Columns lo..hi of an [m,n] tensor -> [m, hi-lo].
    pub fn slice_cols(&mut self, x: Tx, lo: usize, hi: usize) -> Tx {
        let (m, n) = (self.value(x).rows(), self.value(x).cols());
        assert!(
            lo < hi && hi <= n,
            "slice {lo}..{hi} out of range for width {n}"
        );
        let w = hi - lo;
        let mut out = Vec::with_capacity(m * w);
        for i in 0..m {
            out.extend_from_slice(&self.value(x).row(i)[lo..hi]);
        }
        let value = Tensor::matrix(m, w, out);
        self.unary(x, value, move |g| {
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                out[i * n + lo..i * n + hi].copy_from_slice(g.row(i));
            }
            Tensor::matrix(m, n, out)
        })
    }

    /// Select one column per row: x[m,n], idx[m] -> [m,1].
    pub fn pick_col(&mut self, x: Tx, idx: &[usize]) -> Tx {
        let (m, n) = (self.value(x).rows(), self.value(x).cols());
        assert_eq!(
            idx.len(),
            m,
            "pick_col index count {} vs rows {m}",
            idx.len()
        );
        let idx = idx.to_vec();
        let mut out = Vec::with_capacity(m);
        for (i, &j) in idx.iter().enumerate() {
            assert!(j < n, "pick_col index {j} out of range for width {n}");
            out.push(self.value(x).row(i)[j]);
        }
        let value = Tensor::matrix(m, 1, out);
        self.unary(x, value, move |g| {
            let mut out = vec![0.0; m * n];
            for (i, &j) in idx.iter().enumerate() {
                out[i * n + j] = g.data()[i];
            }
            Tensor::matrix(m, n, out)
        })
    }

    /// Elementwise minimum, subgradient routed to the smaller operand.
    pub fn min2(&mut self, a: Tx, b: Tx) -> Tx {
        let (av, bv) = (self.value(a).clone(), self.value(b).clone());
        let value = av.zip(&bv, f64::min);
        self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(move |g, needs| {
                let ga = needs[0].then(|| {
                    let mut out = g.data().to_vec();
                    for (o, (x, y)) in out.iter_mut().zip(av.data().iter().zip(bv.data().iter())) {
                        if x > y {
                            *o = 0.0;
                        }
                    }
                    Tensor::from_vec(g.shape().to_vec(), out)
                });
                let gb = needs[1].then(|| {
                    let mut out = g.data().to_vec();
                    for (o, (x, y)) in out.iter_mut().zip(av.data().iter().zip(bv.data().iter())) {
                        if x <= y {
                            *o = 0.0;
                        }
                    }
                    Tensor::from_vec(g.shape().to_vec(), out)
                });
                vec![ga, gb]
            })),
        )
    }

    /// Numerically stable log-softmax over the last axis of an [m,n] tensor.
    pub fn log_softmax(&mut self, x: Tx) -> Tx {
        let (m, _n) = (self.value(x).rows(), self.value(x).cols());
        // Row maxima enter as a constant shift; the result is exact either way.
        let maxes: Vec<f64> = (0..m)
            .map(|i| {
                self.value(x)
                    .row(i)
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let shift = self.constant(Tensor::matrix(m, 1, maxes));
        let centered = self.sub_col(x, shift);
        let e = self.exp(centered);
        let s = self.sum_rows(e);
        let lse_centered = self.ln(s);
        self.sub_col(centered, lse_centered)
    }

    /// Mean squared error between a tape value and a constant target.
    pub fn mse(&mut self, x: Tx, target: &Tensor) -> Tx {
        let t = self.constant(target.clone());
        let d = self.sub(x, t);
        let sq = self.square(d);
        self.mean_all(sq)
    }

    /// Reverse pass from a scalar root. Consumes the tape.
    pub fn backward(self, root: Tx) -> Result<Grads> {
        let root_val = &self.nodes[root.0].value;
        if root_val.len() != 1 {
            return Err(Error::contract(format!(
                "backward root must be scalar, got shape {:?}",
                root_val.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::full(root_val.shape().to_vec(), 1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].clone() else { continue };
            let node = &self.nodes[i];
            let Some(back) = &node.backprop else { continue };
            let needs: Vec<bool> = node.parents.iter().map(|&p| self.nodes[p].active).collect();
            let parent_grads = back(&g, &needs);
            for (&p, pg) in node.parents.iter().zip(parent_grads) {
                if let Some(pg) = pg {
                    grads[p] = Some(match grads[p].take() {
                        Some(acc) => acc.add(&pg),
                        None => pg,
                    });
                }
            }
        }
        Ok(Grads { g: grads })
    }
}
