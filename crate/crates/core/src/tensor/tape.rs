//! Reverse-mode automatic differentiation on a recorded tape.
//!
//! Every operation appends a node holding its value and the variables it
//! read; node indices only ever point backwards, so the graph is acyclic by
//! construction and a single reverse sweep computes all adjoints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conv::{
    adjoint_kernel, bias_grad_kernel, check_conv, check_transpose, forward_kernel,
    weight_grad_kernel, ConvGeometry, Padding,
};
use super::{conv1d, conv1d_transpose, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DropoutMode {
    /// Drop elements using a mask drawn from this seed.
    Train { seed: u64 },
    /// Identity.
    Eval,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv1d { input: Var, weight: Var, bias: Var, geo: ConvGeometry },
    Conv1dTranspose { input: Var, weight: Var, bias: Var, geo: ConvGeometry },
    Relu(Var),
    /// `mask` holds 0 for dropped elements and `1 / (1 - rate)` for survivors.
    Dropout { input: Var, mask: Vec<f64> },
    Mae(Var, Var),
    /// Scalar `<input, weights>` with constant weights.
    Project { input: Var, weights: Tensor },
}

impl Op {
    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Conv1d { input, weight, bias, .. }
            | Op::Conv1dTranspose { input, weight, bias, .. } => vec![*input, *weight, *bias],
            Op::Relu(x) => vec![*x],
            Op::Dropout { input, .. } | Op::Project { input, .. } => vec![*input],
            Op::Mae(a, b) => vec![*a, *b],
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    faulty: bool,
}

/// Adjoints of every tape variable reachable from the loss.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of `like`'s shape when the loss does not
    /// depend on it.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.shape()))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Makes `backward` return a wrong conv1d weight gradient. Exists so the
    /// gradient checker can be shown to catch a broken rule.
    #[doc(hidden)]
    pub fn inject_backward_fault(&mut self) {
        self.faulty = true;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn parents(&self, v: Var) -> Vec<Var> {
        self.nodes[v.0].op.parents()
    }

    pub fn conv1d(&mut self, input: Var, weight: Var, bias: Var, stride: usize, padding: Padding) -> Result<Var> {
        let (x, w, b) = (self.value(input), self.value(weight), self.value(bias));
        let geo = check_conv(x, w, b, stride, padding)?.geo;
        let out = conv1d(x, w, b, stride, padding)?;
        Ok(self.push(out, Op::Conv1d { input, weight, bias, geo }))
    }

    pub fn conv1d_transpose(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: Padding,
    ) -> Result<Var> {
        let (x, w, b) = (self.value(input), self.value(weight), self.value(bias));
        let geo = check_transpose(x, w, b, stride, padding)?.geo;
        let out = conv1d_transpose(x, w, b, stride, padding)?;
        Ok(self.push(out, Op::Conv1dTranspose { input, weight, bias, geo }))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let out = super::relu(self.value(input));
        self.push(out, Op::Relu(input))
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1 / (1 - rate)`.
    pub fn dropout(&mut self, input: Var, rate: f64, mode: DropoutMode) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        let x = self.value(input);
        let (out, mask) = match mode {
            DropoutMode::Eval => (x.clone(), vec![1.0; x.len()]),
            DropoutMode::Train { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let keep = 1.0 / (1.0 - rate);
                let mask: Vec<f64> = (0..x.len())
                    .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                    .collect();
                let mut out = x.clone();
                for (v, m) in out.data_mut().iter_mut().zip(&mask) {
                    *v *= m;
                }
                (out, mask)
            }
        };
        Ok(self.push(out, Op::Dropout { input, mask }))
    }

    pub fn mae(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = super::mae(self.value(a), self.value(b))?;
        Ok(self.push(Tensor::scalar(v), Op::Mae(a, b)))
    }

    /// Scalar `<input, weights>`; used to turn any tensor into a loss with a
    /// known upstream gradient.
    pub fn project(&mut self, input: Var, weights: Tensor) -> Result<Var> {
        let x = self.value(input);
        if !x.same_shape(&weights) {
            return Err(Error::invalid(format!(
                "projection weights {:?} do not match input {:?}",
                weights.shape(),
                x.shape()
            )));
        }
        let v = x.dot(&weights);
        Ok(self.push(Tensor::scalar(v), Op::Project { input, weights }))
    }

    /// Signs at every non-differentiable point the tape passed through:
    /// relu inputs and mae residuals. Two evaluations with equal signatures
    /// lie on the same smooth piece of the function.
    pub fn kink_signature(&self) -> Vec<i8> {
        let sign = |v: f64| (v > 0.0) as i8 - (v < 0.0) as i8;
        let mut sig = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => sig.extend(self.value(*x).data().iter().map(|&v| sign(v))),
                Op::Mae(a, b) => sig.extend(
                    self.value(*a).data().iter().zip(self.value(*b).data()).map(|(x, y)| sign(x - y)),
                ),
                _ => {}
            }
        }
        sig
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            // Parents always precede their node, so they live in `before`.
            let (before, rest) = grads.split_at_mut(idx);
            let Some(g) = rest[0].as_ref() else { continue };
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Conv1d { input, weight, bias, geo } => {
                    let x = self.value(*input);
                    let w = self.value(*weight);
                    let (batch, c_in, _) = x.dims3("conv1d input")?;
                    let c_out = w.shape()[0];
                    let mut gx = Tensor::zeros(x.shape());
                    adjoint_kernel(g.data(), w.data(), gx.data_mut(), batch, c_in, c_out, geo);
                    let mut gw = Tensor::zeros(w.shape());
                    weight_grad_kernel(g.data(), x.data(), gw.data_mut(), batch, c_in, c_out, geo);
                    if self.faulty {
                        gw.data_mut().iter_mut().for_each(|v| *v *= 1.01);
                    }
                    let mut gb = Tensor::zeros(&[c_out]);
                    bias_grad_kernel(g.data(), gb.data_mut(), batch, c_out, geo.l_out);
                    accumulate(before, *input, gx);
                    accumulate(before, *weight, gw);
                    accumulate(before, *bias, gb);
                }
                Op::Conv1dTranspose { input, weight, bias, geo } => {
                    let x = self.value(*input);
                    let w = self.value(*weight);
                    let (batch, c_in, _) = x.dims3("conv1d_transpose input")?;
                    let c_out = w.shape()[1];
                    // Forward conv view: its input is our output (c_out
                    // channels), its output is our input (c_in channels).
                    let mut gx = Tensor::zeros(x.shape());
                    forward_kernel(g.data(), w.data(), gx.data_mut(), batch, c_out, c_in, geo);
                    let mut gw = Tensor::zeros(w.shape());
                    weight_grad_kernel(x.data(), g.data(), gw.data_mut(), batch, c_out, c_in, geo);
                    let mut gb = Tensor::zeros(&[c_out]);
                    bias_grad_kernel(g.data(), gb.data_mut(), batch, c_out, geo.l_in);
                    accumulate(before, *input, gx);
                    accumulate(before, *weight, gw);
                    accumulate(before, *bias, gb);
                }
                Op::Relu(input) => {
                    let x = self.value(*input);
                    let mut gx = g.clone();
                    for (gv, &xv) in gx.data_mut().iter_mut().zip(x.data()) {
                        if xv <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    accumulate(before, *input, gx);
                }
                Op::Dropout { input, mask } => {
                    let mut gx = g.clone();
                    for (gv, m) in gx.data_mut().iter_mut().zip(mask) {
                        *gv *= m;
                    }
                    accumulate(before, *input, gx);
                }
                Op::Mae(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let scale = g.data()[0] / av.len() as f64;
                    // subgradient 0 where the residual is exactly 0
                    let ga = Tensor::new(
                        av.shape().to_vec(),
                        av.data()
                            .iter()
                            .zip(bv.data())
                            .map(|(x, y)| match (x - y).partial_cmp(&0.0) {
                                Some(std::cmp::Ordering::Greater) => scale,
                                Some(std::cmp::Ordering::Less) => -scale,
                                _ => 0.0,
                            })
                            .collect(),
                    )?;
                    let gb = ga.map(|v| -v);
                    accumulate(before, *a, ga);
                    accumulate(before, *b, gb);
                }
                Op::Project { input, weights } => {
                    let s = g.data()[0];
                    accumulate(before, *input, weights.map(|w| w * s));
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::conv1d_transpose;

    fn t(shape: &[usize], data: Vec<f64>) -> Tensor {
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn mae_at_its_minimum_has_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], vec![1.0, -2.0, 0.5]));
        let c = tape.leaf(t(&[3], vec![1.0, -2.0, 0.5]));
        let loss = tape.mae(x, c).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], vec![1.0, 2.0]));
        let y = tape.relu(x);
        assert!(matches!(tape.backward(y), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn conv_input_gradient_is_the_transpose_of_upstream() {
        let x = t(&[1, 2, 10], (0..20).map(|i| (i as f64 * 0.37).sin()).collect());
        let w = t(&[3, 2, 4], (0..24).map(|i| (i as f64 * 0.91).cos()).collect());
        let up = t(&[1, 3, 5], (0..15).map(|i| (i as f64 * 1.3).sin()).collect());
        let mut tape = Tape::new();
        let (xv, wv, bv) = (tape.leaf(x), tape.leaf(w.clone()), tape.leaf(Tensor::zeros(&[3])));
        let y = tape.conv1d(xv, wv, bv, 2, Padding::Same).unwrap();
        let loss = tape.project(y, up.clone()).unwrap();
        let g = tape.backward(loss).unwrap();
        let expected = conv1d_transpose(&up, &w, &Tensor::zeros(&[2]), 2, Padding::Same).unwrap();
        assert_eq!(g.get(xv).unwrap(), &expected);
    }

    #[test]
    fn relu_subgradient_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], vec![-1.0, 0.0, 2.0]));
        let y = tape.relu(x);
        let loss = tape.project(y, t(&[3], vec![1.0, 1.0, 1.0])).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn gradients_accumulate_over_shared_inputs() {
        // loss = <x, a> + <relu(x), b> uses x twice
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], vec![1.0, -1.0]));
        let r = tape.relu(x);
        let l1 = tape.project(r, t(&[2], vec![2.0, 2.0])).unwrap();
        let g = tape.backward(l1).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0, 0.0]);
    }

    #[test]
    fn dropout_modes() {
        let x = Tensor::filled(&[10_000], 1.0);
        let eval = crate::tensor::dropout(&x, 0.5, DropoutMode::Eval).unwrap();
        assert_eq!(eval, x);
        let train = crate::tensor::dropout(&x, 0.5, DropoutMode::Train { seed: 7 }).unwrap();
        let kept = train.data().iter().filter(|&&v| v != 0.0).count() as f64 / 10_000.0;
        assert!((kept - 0.5).abs() < 0.05, "survivor fraction {kept}");
        assert!(train.data().iter().all(|&v| v == 0.0 || v == 2.0));
        let again = crate::tensor::dropout(&x, 0.5, DropoutMode::Train { seed: 7 }).unwrap();
        assert_eq!(train, again);
        assert!(crate::tensor::dropout(&x, 1.0, DropoutMode::Eval).is_err());
        assert!(crate::tensor::dropout(&x, -0.1, DropoutMode::Eval).is_err());
    }
}
