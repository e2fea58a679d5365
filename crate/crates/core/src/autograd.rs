//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every op evaluates eagerly and, when at least one input is tracked,
//! records a closure mapping the output gradient to input gradients. Nodes
//! are appended in evaluation order, so the tape is always topologically
//! sorted and [`Tape::backward`] is a single reverse sweep.
//!
//! ```
//! use equikit::autograd::Tape;
//! use equikit::tensor::Tensor;
//!
//! let tape = Tape::new();
//! let x = tape.leaf(Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap());
//! let loss = x.add(x).sum();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, 2.0, 2.0]);
//! ```

use crate::error::{shape_err, Error, Result};
use crate::tensor::kernels::{self, conv2d_backward_cols, conv2d_with_cols, crop_to, gemm};
use crate::tensor::{inverse_axes, Conv2dSpec, Tensor};
use std::cell::RefCell;
use std::rc::Rc;

type BackwardFn = Box<dyn Fn(&Tensor) -> Vec<(usize, Tensor)>>;

struct Node {
    value: Rc<Tensor>,
    tracked: bool,
    backward: Option<BackwardFn>,
}

/// Records operations for one forward pass. Not `Sync`: a tape belongs to a
/// single thread of execution.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    nonfinite: RefCell<Option<String>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.value().shape())
            .finish()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by variable.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when the variable is untracked or does not reach the loss.
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    /// Gradient or zeros of the variable's shape.
    pub fn get_or_zeros(&self, v: Var<'_>) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(v.value().shape()))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A tensor that requires gradients.
    pub fn leaf(&self, t: Tensor) -> Var<'_> {
        self.push("leaf", t, true, None)
    }

    /// A tensor treated as a constant.
    pub fn constant(&self, t: Tensor) -> Var<'_> {
        self.push("constant", t, false, None)
    }

    fn push(&self, op: &str, value: Tensor, tracked: bool, backward: Option<BackwardFn>) -> Var<'_> {
        if !value.is_finite() {
            let mut slot = self.nonfinite.borrow_mut();
            if slot.is_none() {
                *slot = Some(op.to_string());
            }
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            tracked,
            backward,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Records a user-defined op. `backward` receives the output gradient
    /// and returns one optional gradient per input (same order).
    pub fn custom<'t>(
        &'t self,
        op: &str,
        inputs: &[Var<'t>],
        value: Tensor,
        backward: impl Fn(&Tensor) -> Vec<Option<Tensor>> + 'static,
    ) -> Var<'t> {
        let tracked: Vec<(usize, bool)> = inputs.iter().map(|v| (v.id, v.tracked())).collect();
        if !tracked.iter().any(|&(_, t)| t) {
            return self.push(op, value, false, None);
        }
        let bw: BackwardFn = Box::new(move |g| {
            backward(g)
                .into_iter()
                .zip(&tracked)
                .filter_map(|(grad, &(id, t))| if t { grad.map(|g| (id, g)) } else { None })
                .collect()
        });
        self.push(op, value, true, Some(bw))
    }

    /// Name of the first op that produced a NaN or infinity, if any.
    pub fn check_finite(&self) -> Result<()> {
        match self.nonfinite.borrow().as_ref() {
            Some(op) => Err(Error::NonFinite(op.clone())),
            None => Ok(()),
        }
    }

    /// Reverse sweep from a scalar `loss`; gradients from several paths into
    /// the same node are summed.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let shape = loss.value().shape().to_vec();
        if loss.value().numel() != 1 {
            return Err(Error::NonScalarLoss(shape));
        }
        self.check_finite()?;
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::ones(&shape));
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.tracked {
                grads[id] = None;
                continue;
            }
            let Some(bw) = &node.backward else { continue };
            let Some(g) = grads[id].as_ref() else { continue };
            for (pid, pg) in bw(g) {
                match &mut grads[pid] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        for g in grads.iter().flatten() {
            g.check_finite("backward")?;
        }
        Ok(Gradients { grads })
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn tracked(&self) -> bool {
        self.tape.nodes.borrow()[self.id].tracked
    }

    /// Same value, cut from the graph.
    pub fn detach(self) -> Var<'t> {
        self.tape.constant((*self.value()).clone())
    }

    fn unary(self, op: &str, value: Tensor, back: impl Fn(&Tensor) -> Tensor + 'static) -> Var<'t> {
        self.tape.custom(op, &[self], value, move |g| vec![Some(back(g))])
    }

    pub fn add(self, other: Var<'t>) -> Var<'t> {
        let v = self.value().zip_map(&other.value(), |a, b| a + b).expect("add: shape mismatch");
        self.tape
            .custom("add", &[self, other], v, |g| vec![Some(g.clone()), Some(g.clone())])
    }

    pub fn sub(self, other: Var<'t>) -> Var<'t> {
        let v = self.value().zip_map(&other.value(), |a, b| a - b).expect("sub: shape mismatch");
        self.tape
            .custom("sub", &[self, other], v, |g| vec![Some(g.clone()), Some(g.scale(-1.0))])
    }

    pub fn mul(self, other: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), other.value());
        let v = a.zip_map(&b, |x, y| x * y).expect("mul: shape mismatch");
        self.tape.custom("mul", &[self, other], v, move |g| {
            vec![
                Some(g.zip_map(&b, |g, y| g * y).unwrap()),
                Some(g.zip_map(&a, |g, x| g * x).unwrap()),
            ]
        })
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        self.unary("scale", self.value().scale(s), move |g| g.scale(s))
    }

    pub fn add_scalar(self, s: f64) -> Var<'t> {
        self.unary("add_scalar", self.value().map(|v| v + s), |g| g.clone())
    }

    pub fn relu(self) -> Var<'t> {
        let x = self.value();
        let v = x.map(|v| v.max(0.0));
        self.unary("relu", v, move |g| g.zip_map(&x, |g, x| if x > 0.0 { g } else { 0.0 }).unwrap())
    }

    pub fn sigmoid(self) -> Var<'t> {
        let y = Rc::new(self.value().map(sigmoid));
        let y2 = y.clone();
        self.unary("sigmoid", (*y).clone(), move |g| g.zip_map(&y2, |g, s| g * s * (1.0 - s)).unwrap())
    }

    pub fn sum(self) -> Var<'t> {
        let shape = self.shape();
        self.unary("sum", Tensor::scalar(self.value().sum()), move |g| Tensor::full(&shape, g.item()))
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.value().numel().max(1) as f64;
        self.sum().scale(1.0 / n)
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'t> {
        let old = self.shape();
        let v = self.value().reshape(shape).expect("reshape: element count mismatch");
        self.unary("reshape", v, move |g| g.reshape(&old).unwrap())
    }

    /// Output axis `i` is input axis `axes[i]`.
    pub fn permute(self, axes: &[usize]) -> Var<'t> {
        let inv = inverse_axes(axes);
        let v = self.value().permute(axes);
        self.unary("permute", v, move |g| g.permute(&inv))
    }

    /// Adds `bias [C]` along the leading axis of a `[C, ...]` tensor.
    pub fn add_channel_bias(self, bias: Var<'t>) -> Var<'t> {
        let x = self.value();
        let b = bias.value();
        let c = x.shape()[0];
        assert_eq!(b.shape(), [c], "bias shape {:?} vs {c} channels", b.shape());
        let inner = x.numel() / c.max(1);
        let mut out = (*x).clone();
        for (ch, chunk) in out.data_mut().chunks_mut(inner).enumerate() {
            chunk.iter_mut().for_each(|v| *v += b.data()[ch]);
        }
        self.tape.custom("add_channel_bias", &[self, bias], out, move |g| {
            let gb: Vec<f64> = g.data().chunks(inner).map(|c| c.iter().sum()).collect();
            vec![Some(g.clone()), Some(Tensor::from_parts(vec![c], gb))]
        })
    }

    /// `[m,k] x [k,n]` matrix product.
    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), other.value());
        let (m, k) = (a.shape()[0], a.shape()[1]);
        let (k2, n) = (b.shape()[0], b.shape()[1]);
        assert_eq!(k, k2, "matmul: inner dimensions {k} vs {k2}");
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, a.data(), false, b.data(), false, &mut out, false);
        self.tape
            .custom("matmul", &[self, other], Tensor::from_parts(vec![m, n], out), move |g| {
                let mut ga = vec![0.0; m * k];
                gemm(m, n, k, g.data(), false, b.data(), true, &mut ga, false);
                let mut gb = vec![0.0; k * n];
                gemm(k, m, n, a.data(), true, g.data(), false, &mut gb, false);
                vec![Some(Tensor::from_parts(vec![m, k], ga)), Some(Tensor::from_parts(vec![k, n], gb))]
            })
    }

    /// Differentiable [`kernels::conv2d`].
    pub fn conv2d(self, weight: Var<'t>, spec: Conv2dSpec) -> Result<Var<'t>> {
        let (x, w) = (self.value(), weight.value());
        let (out, cols) = conv2d_with_cols(&x, &w, spec)?;
        Ok(self.tape.custom("conv2d", &[self, weight], out, move |g| {
            let (gx, gw) = conv2d_backward_cols(g, &x, &w, &cols, spec).expect("conv2d backward");
            vec![Some(gx), Some(gw)]
        }))
    }

    pub fn pad_to_odd(self) -> Var<'t> {
        let (h, w) = self.value().hw();
        let v = kernels::pad_to_odd(&self.value());
        self.unary("pad_to_odd", v, move |g| crop_to(g, h, w))
    }

    /// Differentiable [`kernels::bilinear_sample`] with points as a `[P, 2]`
    /// tensor of `(x, y)` rows.
    pub fn bilinear_sample(self, points: Var<'t>) -> Result<Var<'t>> {
        let f = self.value();
        let p = points.value();
        if p.rank() != 2 || p.shape()[1] != 2 {
            return Err(shape_err("bilinear_sample", format!("points {:?}", p.shape())));
        }
        let pts: Vec<(f64, f64)> = p.data().chunks(2).map(|c| (c[0], c[1])).collect();
        let out = kernels::bilinear_sample(&f, &pts)?;
        let np = pts.len();
        Ok(self.tape.custom("bilinear_sample", &[self, points], out, move |g| {
            let (gf, gp) = kernels::bilinear_sample_backward(g, &f, &pts).unwrap();
            let gp = gp.into_iter().flat_map(|(a, b)| [a, b]).collect();
            vec![Some(gf), Some(Tensor::from_parts(vec![np, 2], gp))]
        }))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Analytic-vs-central-difference comparison for a scalar function of
/// several tensors.
#[derive(Clone, Copy, Debug, Default)]
pub struct GradCheck {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub evaluations: usize,
}

/// Compares reverse-mode gradients of `f` against central finite
/// differences with step `eps`. `f` must build a scalar on the tape it is
/// given.
pub fn grad_check<F>(inputs: &[Tensor], eps: f64, floor: f64, f: F) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.get_or_zeros(v)).collect();
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = xs.iter().map(|t| tape.constant(t.clone())).collect();
        Ok(f(&tape, &vars)?.value().item())
    };
    let mut report = GradCheck::default();
    let mut xs = inputs.to_vec();
    for (i, a) in analytic.iter().enumerate() {
        for j in 0..xs[i].numel() {
            let orig = xs[i].data()[j];
            xs[i].data_mut()[j] = orig + eps;
            let up = eval(&xs)?;
            xs[i].data_mut()[j] = orig - eps;
            let down = eval(&xs)?;
            xs[i].data_mut()[j] = orig;
            report.evaluations += 2;
            let numeric = (up - down) / (2.0 * eps);
            let an = a.data()[j];
            let abs = (an - numeric).abs();
            let rel = abs / an.abs().max(numeric.abs()).max(floor);
            report.max_abs_err = report.max_abs_err.max(abs);
            report.max_rel_err = report.max_rel_err.max(rel);
        }
    }
    Ok(report)
}
