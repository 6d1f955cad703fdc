//! Central finite-difference verification of analytic gradients, run in
//! double precision.

use super::{Graph, Padding, Real, Tensor, Var};
use crate::error::{Error, Result};

pub const FD_STEP: f64 = 1e-4;

/// Differentiable operation with its static arguments.
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    MatMul,
    Conv2d { stride: usize, padding: Padding, bias: bool },
    MaxPool { size: usize, stride: usize },
    Relu,
    Tanh,
    Sigmoid,
    Add,
    Mul,
    Scale(f64),
    Concat { axis: usize },
    Softmax,
    Embedding { indices: Vec<usize> },
    Slice { axis: usize, start: usize, len: usize },
    Reshape { shape: Vec<usize> },
    Transpose,
    Sum,
    Mean,
    BceWithLogits { labels: Vec<f64>, weights: Vec<f64> },
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::Conv2d { .. } => "conv2d",
            OpKind::MaxPool { .. } => "max_pool",
            OpKind::Relu => "relu",
            OpKind::Tanh => "tanh",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Add => "add",
            OpKind::Mul => "mul",
            OpKind::Scale(_) => "scale",
            OpKind::Concat { .. } => "concat",
            OpKind::Softmax => "softmax",
            OpKind::Embedding { .. } => "embedding",
            OpKind::Slice { .. } => "slice",
            OpKind::Reshape { .. } => "reshape",
            OpKind::Transpose => "transpose",
            OpKind::Sum => "reduce_sum",
            OpKind::Mean => "reduce_mean",
            OpKind::BceWithLogits { .. } => "bce_with_logits",
        }
    }
}

impl<T: Real> Graph<T> {
    /// Dispatches `kind` over `inputs`.
    pub fn forward(&mut self, kind: &OpKind, inputs: &[Var]) -> Result<Var> {
        let arity = |n: usize| -> Result<()> {
            if inputs.len() == n {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{} takes {n} inputs, got {}", kind.name(), inputs.len())))
            }
        };
        match kind {
            OpKind::MatMul => {
                arity(2)?;
                self.matmul(inputs[0], inputs[1])
            }
            OpKind::Conv2d { stride, padding, bias } => {
                arity(if *bias { 3 } else { 2 })?;
                self.conv2d(inputs[0], inputs[1], inputs.get(2).copied(), *stride, *padding)
            }
            OpKind::MaxPool { size, stride } => {
                arity(1)?;
                self.max_pool(inputs[0], *size, *stride)
            }
            OpKind::Relu => {
                arity(1)?;
                self.relu(inputs[0])
            }
            OpKind::Tanh => {
                arity(1)?;
                self.tanh(inputs[0])
            }
            OpKind::Sigmoid => {
                arity(1)?;
                self.sigmoid(inputs[0])
            }
            OpKind::Add => {
                arity(2)?;
                self.add(inputs[0], inputs[1])
            }
            OpKind::Mul => {
                arity(2)?;
                self.mul(inputs[0], inputs[1])
            }
            OpKind::Scale(s) => {
                arity(1)?;
                self.scale(inputs[0], T::from_f64(*s))
            }
            OpKind::Concat { axis } => self.concat(inputs, *axis),
            OpKind::Softmax => {
                arity(1)?;
                self.softmax(inputs[0])
            }
            OpKind::Embedding { indices } => {
                arity(1)?;
                self.embedding(inputs[0], indices)
            }
            OpKind::Slice { axis, start, len } => {
                arity(1)?;
                self.slice(inputs[0], *axis, *start, *len)
            }
            OpKind::Reshape { shape } => {
                arity(1)?;
                self.reshape(inputs[0], shape)
            }
            OpKind::Transpose => {
                arity(1)?;
                self.transpose(inputs[0])
            }
            OpKind::Sum => {
                arity(1)?;
                self.sum(inputs[0])
            }
            OpKind::Mean => {
                arity(1)?;
                self.mean(inputs[0])
            }
            OpKind::BceWithLogits { labels, weights } => {
                arity(1)?;
                let l: Vec<T> = labels.iter().map(|&v| T::from_f64(v)).collect();
                let w: Vec<T> = weights.iter().map(|&v| T::from_f64(v)).collect();
                self.bce_with_logits(inputs[0], &l, &w)
            }
        }
    }
}

/// Max relative gradient error of `kind` at `inputs`. The op output is
/// contracted with a fixed non-uniform weighting so that every output
/// element contributes a distinct gradient.
pub fn grad_check(kind: &OpKind, inputs: &[Tensor<f64>]) -> Result<f64> {
    grad_check_fn(inputs, |g, vars| {
        let y = g.forward(kind, vars)?;
        project(g, y)
    })
}

/// Scalar `sum(y * r)` with deterministic, non-uniform `r`.
pub fn project(g: &mut Graph<f64>, y: Var) -> Result<Var> {
    let shape = g.shape(y).to_vec();
    let n = g.value(y).numel();
    let r = (0..n).map(|i| (i as f64 * 1.618 + 0.5).sin() + 0.1).collect();
    let r = g.constant(Tensor::new(shape, r)?);
    let p = g.mul(y, r)?;
    g.sum(p)
}

/// Compares backward-mode gradients of the scalar built by `f` against
/// central differences with step [`FD_STEP`], over every element of every
/// input. Returns `max |a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check_fn<F>(inputs: &[Tensor<f64>], f: F) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|x| g.constant(x.clone())).collect();
        let l = f(&mut g, &vars)?;
        Ok(g.value(l).item())
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|x| g.param(x.clone())).collect();
    let loss = f(&mut g, &vars)?;
    g.backward(loss)?;

    let mut worst = 0.0f64;
    let mut work = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let zeros = vec![0.0; inputs[k].numel()];
        let analytic = g.grad(*var).unwrap_or(&zeros).to_vec();
        for (j, &a) in analytic.iter().enumerate() {
            let orig = inputs[k].data()[j];
            work[k].data_mut()[j] = orig + FD_STEP;
            let plus = eval(&work)?;
            work[k].data_mut()[j] = orig - FD_STEP;
            let minus = eval(&work)?;
            work[k].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
