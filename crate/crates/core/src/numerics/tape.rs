//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! Every operation on a [`Var`] appends a node to its [`Tape`]. Node ids grow
//! in execution order, so [`Tape::backward`] walks ids from the root down to
//! zero, which is exactly reverse execution order. Gradients reaching a node
//! from several consumers are summed.

use std::cell::RefCell;
use std::rc::Rc;

use super::conv::{
    conv2d_backward, conv2d_forward, conv_transpose2d_backward, conv_transpose2d_forward,
};
use super::gram::{project_backward, project_forward, Normalization, ProjectionCache};
use super::{Scalar, Tensor};
use crate::error::{config_err, Error, Result};

enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    LeakyRelu { x: usize, slope: T },
    Conv2d { x: usize, w: usize, b: usize, stride: usize, padding: usize },
    ConvTranspose2d { x: usize, w: usize, b: usize, stride: usize },
    Project { basis: usize, x: usize, cache: Box<ProjectionCache<T>> },
    Concat { parts: Vec<usize>, axis: usize },
    Reshape(usize),
    Permute { x: usize, perm: Vec<usize> },
    Sum(usize),
    Mean(usize),
    Crop2d { x: usize, top: usize, left: usize },
    L1Loss { pred: usize, target: usize },
}

struct Node<T> {
    value: Rc<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Ordered record of executed operations.
pub struct Tape<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Scalar> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Scalar> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("id", &self.id).field("shape", &self.shape()).finish()
    }
}

/// Gradients of a scalar root with respect to the leaves of a tape.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the root with respect to `var`, if any flowed there.
    pub fn get(&self, var: &Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient of `var`, or zeros of its shape when nothing flowed there.
    pub fn get_or_zeros(&self, var: &Var<'_, T>) -> Tensor<T> {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(var.shape().as_slice()))
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a differentiable leaf.
    pub fn var(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, false)
    }

    pub fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        self.push(value, Op::Leaf, requires_grad)
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: Rc::new(value), op, requires_grad });
        Var { tape: self, id: nodes.len() - 1 }
    }

    fn value(&self, id: usize) -> Rc<Tensor<T>> {
        self.nodes.borrow()[id].value.clone()
    }

    fn requires_grad(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn record(&self, value: Tensor<T>, op: Op<T>, inputs: &[usize], name: &'static str) -> Result<Var<'_, T>> {
        value.ensure_finite(name)?;
        let rg = self.requires_grad(inputs);
        Ok(self.push(value, op, rg))
    }

    /// Back-propagates from a single-element `root`.
    pub fn backward(&self, root: Var<'_, T>) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        if nodes[root.id].value.len() != 1 {
            return config_err(format!(
                "backward needs a scalar root, got shape {:?}",
                nodes[root.id].value.shape()
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[root.id] = Some(Tensor::full(nodes[root.id].value.shape(), T::one()));
        for id in (0..=root.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let (lower, upper) = grads.split_at_mut(id);
            let Some(g) = upper[0].take() else { continue };
            for (input, grad) in vjp(&nodes, node, &g)? {
                if nodes[input].requires_grad {
                    accumulate(&mut lower[input], grad);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, grad: Tensor<T>) {
    match slot {
        None => *slot = Some(grad),
        Some(acc) => {
            for (a, g) in acc.data_mut().iter_mut().zip(grad.data()) {
                *a = *a + *g;
            }
        }
    }
}

fn vjp<T: Scalar>(nodes: &[Node<T>], node: &Node<T>, g: &Tensor<T>) -> Result<Vec<(usize, Tensor<T>)>> {
    let val = |i: usize| -> &Tensor<T> { &nodes[i].value };
    let wants = |i: usize| nodes[i].requires_grad;
    let mut out = Vec::new();
    match &node.op {
        Op::Leaf => {}
        &Op::Add(a, b) => {
            out.push((a, g.clone()));
            out.push((b, g.clone()));
        }
        &Op::Sub(a, b) => {
            out.push((a, g.clone()));
            out.push((b, g.map(|v| -v)));
        }
        &Op::Mul(a, b) => {
            if wants(a) {
                out.push((a, zip_map(g, val(b), |g, y| g * y)));
            }
            if wants(b) {
                out.push((b, zip_map(g, val(a), |g, x| g * x)));
            }
        }
        &Op::Scale(a, c) => out.push((a, g.map(|v| v * c))),
        &Op::LeakyRelu { x, slope } => {
            out.push((x, zip_map(g, val(x), |g, x| if x > T::zero() { g } else { g * slope })));
        }
        &Op::Conv2d { x, w, b, stride, padding } => {
            let gr = conv2d_backward(val(x), val(w), g, stride, padding, [wants(x), wants(w), wants(b)])?;
            push_some(&mut out, x, gr.input);
            push_some(&mut out, w, gr.weight);
            push_some(&mut out, b, gr.bias);
        }
        &Op::ConvTranspose2d { x, w, b, stride } => {
            let gr = conv_transpose2d_backward(val(x), val(w), g, stride, [wants(x), wants(w), wants(b)])?;
            push_some(&mut out, x, gr.input);
            push_some(&mut out, w, gr.weight);
            push_some(&mut out, b, gr.bias);
        }
        Op::Project { basis, x, cache } => {
            let (dv, dx) = project_backward(val(*basis), val(*x), cache, g, [wants(*basis), wants(*x)])?;
            push_some(&mut out, *basis, dv);
            push_some(&mut out, *x, dx);
        }
        Op::Concat { parts, axis } => {
            let shapes: Vec<&[usize]> = parts.iter().map(|&p| val(p).shape()).collect();
            for (p, piece) in parts.iter().zip(split_axis(g, &shapes, *axis)) {
                out.push((*p, piece));
            }
        }
        &Op::Reshape(x) => out.push((x, g.clone().reshape(val(x).shape())?)),
        Op::Permute { x, perm } => {
            let mut inverse = vec![0; perm.len()];
            for (i, &p) in perm.iter().enumerate() {
                inverse[p] = i;
            }
            out.push((*x, permute(g, &inverse)));
        }
        &Op::Sum(x) => out.push((x, Tensor::full(val(x).shape(), g.item()))),
        &Op::Mean(x) => {
            let n = T::from_usize(val(x).len()).unwrap();
            out.push((x, Tensor::full(val(x).shape(), g.item() / n)));
        }
        &Op::Crop2d { x, top, left } => {
            let [b, c, h, w] = val(x).dims4()?;
            let [_, _, ch, cw] = g.dims4()?;
            let mut d = Tensor::zeros(&[b, c, h, w]);
            for plane in 0..b * c {
                for i in 0..ch {
                    let src = &g.data()[(plane * ch + i) * cw..(plane * ch + i + 1) * cw];
                    let start = (plane * h + top + i) * w + left;
                    d.data_mut()[start..start + cw].copy_from_slice(src);
                }
            }
            out.push((x, d));
        }
        &Op::L1Loss { pred, target } => {
            let n = T::from_usize(val(pred).len()).unwrap();
            let scale = g.item() / n;
            let sign = zip_map(val(pred), val(target), |p, t| {
                if p > t {
                    scale
                } else if p < t {
                    -scale
                } else {
                    T::zero()
                }
            });
            if wants(target) {
                out.push((target, sign.map(|v| -v)));
            }
            out.push((pred, sign));
        }
    }
    Ok(out)
}

fn push_some<T>(out: &mut Vec<(usize, T)>, id: usize, v: Option<T>) {
    if let Some(v) = v {
        out.push((id, v));
    }
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

fn same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return config_err(format!("{op}: shapes {:?} and {:?} differ", a.shape(), b.shape()));
    }
    Ok(())
}

pub(crate) fn permute<T: Scalar>(x: &Tensor<T>, perm: &[usize]) -> Tensor<T> {
    let shape = x.shape();
    let rank = shape.len();
    let mut strides = vec![1; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let out_strides: Vec<usize> = perm.iter().map(|&p| strides[p]).collect();
    let mut data = Vec::with_capacity(x.len());
    let mut idx = vec![0usize; rank];
    let mut offset = 0usize;
    for _ in 0..x.len() {
        data.push(x.data()[offset]);
        for d in (0..rank).rev() {
            idx[d] += 1;
            offset += out_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            offset -= out_strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    Tensor::from_parts(out_shape, data)
}

fn concat<T: Scalar>(parts: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
    let first = parts[0].shape();
    if axis >= first.len() {
        return config_err(format!("concat axis {axis} out of range for shape {first:?}"));
    }
    for p in parts {
        let s = p.shape();
        if s.len() != first.len()
            || s.iter().zip(first).enumerate().any(|(d, (a, b))| d != axis && a != b)
        {
            return config_err(format!("concat: incompatible shapes {first:?} and {s:?}"));
        }
    }
    let outer: usize = first[..axis].iter().product();
    let inner: usize = first[axis + 1..].iter().product();
    let mut shape = first.to_vec();
    shape[axis] = parts.iter().map(|p| p.shape()[axis]).sum();
    let mut data = Vec::with_capacity(shape.iter().product());
    for o in 0..outer {
        for p in parts {
            let chunk = p.shape()[axis] * inner;
            data.extend_from_slice(&p.data()[o * chunk..(o + 1) * chunk]);
        }
    }
    Ok(Tensor::from_parts(shape, data))
}

fn split_axis<T: Scalar>(g: &Tensor<T>, shapes: &[&[usize]], axis: usize) -> Vec<Tensor<T>> {
    let full = g.shape();
    let outer: usize = full[..axis].iter().product();
    let inner: usize = full[axis + 1..].iter().product();
    let mut pieces: Vec<Vec<T>> = shapes.iter().map(|s| Vec::with_capacity(s.iter().product())).collect();
    let mut offset = 0;
    for _ in 0..outer {
        for (piece, s) in pieces.iter_mut().zip(shapes) {
            let chunk = s[axis] * inner;
            piece.extend_from_slice(&g.data()[offset..offset + chunk]);
            offset += chunk;
        }
    }
    pieces.into_iter().zip(shapes).map(|(d, s)| Tensor::from_parts(s.to_vec(), d)).collect()
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    fn same_tape(&self, other: &Var<'_, T>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            config_err("variables belong to different tapes")
        }
    }

    fn binary(
        &self,
        other: &Var<'t, T>,
        name: &'static str,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var<'t, T>> {
        self.same_tape(other)?;
        let (a, b) = (self.value(), other.value());
        same_shape(&a, &b, name)?;
        self.tape.record(zip_map(&a, &b, f), op, &[self.id, other.id], name)
    }

    pub fn add(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, "add", |x, y| x + y, Op::Add(self.id, other.id))
    }

    pub fn sub(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, "sub", |x, y| x - y, Op::Sub(self.id, other.id))
    }

    pub fn mul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, "mul", |x, y| x * y, Op::Mul(self.id, other.id))
    }

    pub fn scale(&self, c: T) -> Result<Var<'t, T>> {
        let v = self.value().map(|x| x * c);
        self.tape.record(v, Op::Scale(self.id, c), &[self.id], "scale")
    }

    /// Elementwise `max(x, slope * x)`.
    pub fn leaky_relu(&self, slope: T) -> Result<Var<'t, T>> {
        if !(slope > T::zero() && slope < T::one()) {
            return config_err(format!("leaky_relu slope {slope} must lie in (0, 1)"));
        }
        let v = self.value().map(|x| if x > T::zero() { x } else { x * slope });
        self.tape.record(v, Op::LeakyRelu { x: self.id, slope }, &[self.id], "leaky_relu")
    }

    /// Zero-padded cross-correlation. `weight` is `[Cout, Cin, kh, kw]`.
    pub fn conv2d(
        &self,
        weight: &Var<'t, T>,
        bias: &Var<'t, T>,
        stride: usize,
        padding: usize,
    ) -> Result<Var<'t, T>> {
        self.same_tape(weight)?;
        self.same_tape(bias)?;
        let v = conv2d_forward(&self.value(), &weight.value(), &bias.value(), stride, padding)?;
        let op = Op::Conv2d { x: self.id, w: weight.id, b: bias.id, stride, padding };
        self.tape.record(v, op, &[self.id, weight.id, bias.id], "conv2d")
    }

    /// Fractionally strided convolution with `kernel == stride`.
    /// `weight` is `[Cin, Cout, k, k]`.
    pub fn conv_transpose2d(&self, weight: &Var<'t, T>, bias: &Var<'t, T>, stride: usize) -> Result<Var<'t, T>> {
        self.same_tape(weight)?;
        self.same_tape(bias)?;
        let v = conv_transpose2d_forward(&self.value(), &weight.value(), &bias.value(), stride)?;
        let op = Op::ConvTranspose2d { x: self.id, w: weight.id, b: bias.id, stride };
        self.tape.record(v, op, &[self.id, weight.id, bias.id], "conv_transpose2d")
    }

    /// Projects the columns of `self` (`[B, N, C]`) onto the span of
    /// `basis` (`[B, N, K]`).
    pub fn project_onto(&self, basis: &Var<'t, T>, mode: Normalization) -> Result<Var<'t, T>> {
        batched_gram_solve(basis, self, mode)
    }

    pub fn concat(parts: &[Var<'t, T>], axis: usize) -> Result<Var<'t, T>> {
        let first = parts.first().ok_or_else(|| Error::Config("concat of nothing".into()))?;
        for p in parts {
            first.same_tape(p)?;
        }
        let values: Vec<Rc<Tensor<T>>> = parts.iter().map(|p| p.value()).collect();
        let refs: Vec<&Tensor<T>> = values.iter().map(|v| v.as_ref()).collect();
        let v = concat(&refs, axis)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        first.tape.record(v, Op::Concat { parts: ids.clone(), axis }, &ids, "concat")
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t, T>> {
        let v = self.value().as_ref().clone().reshape(shape)?;
        self.tape.record(v, Op::Reshape(self.id), &[self.id], "reshape")
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Var<'t, T>> {
        let value = self.value();
        let rank = value.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return config_err(format!("invalid permutation {perm:?} for rank {rank}"));
        }
        let v = permute(&value, perm);
        self.tape.record(v, Op::Permute { x: self.id, perm: perm.to_vec() }, &[self.id], "permute")
    }

    pub fn sum(&self) -> Result<Var<'t, T>> {
        let s: T = self.value().data().iter().copied().sum();
        self.tape.record(Tensor::scalar(s), Op::Sum(self.id), &[self.id], "sum")
    }

    pub fn mean(&self) -> Result<Var<'t, T>> {
        let value = self.value();
        let s: T = value.data().iter().copied().sum();
        let m = s / T::from_usize(value.len()).unwrap();
        self.tape.record(Tensor::scalar(m), Op::Mean(self.id), &[self.id], "mean")
    }

    /// Spatial window `[top, top + height) x [left, left + width)` of a
    /// `[B, C, H, W]` tensor.
    pub fn crop2d(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Var<'t, T>> {
        let value = self.value();
        let [b, c, h, w] = value.dims4()?;
        if height == 0 || width == 0 || top + height > h || left + width > w {
            return config_err(format!(
                "crop {height}x{width} at ({top}, {left}) exceeds {h}x{w}"
            ));
        }
        let mut data = Vec::with_capacity(b * c * height * width);
        for plane in 0..b * c {
            for i in 0..height {
                let start = (plane * h + top + i) * w + left;
                data.extend_from_slice(&value.data()[start..start + width]);
            }
        }
        let v = Tensor::from_parts(vec![b, c, height, width], data);
        self.tape.record(v, Op::Crop2d { x: self.id, top, left }, &[self.id], "crop2d")
    }

    /// Mean absolute difference; the subgradient at exact ties is zero.
    pub fn l1_loss(&self, target: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.same_tape(target)?;
        let (p, t) = (self.value(), target.value());
        same_shape(&p, &t, "l1_loss")?;
        let s: T = p.data().iter().zip(t.data()).map(|(&a, &b)| (a - b).abs()).sum();
        let v = Tensor::scalar(s / T::from_usize(p.len()).unwrap());
        let op = Op::L1Loss { pred: self.id, target: target.id };
        self.tape.record(v, op, &[self.id, target.id], "l1_loss")
    }
}

/// `V (VᵀV + εI)⁻¹ Vᵀ X` per batch element (or `V Vᵀ X` without
/// normalization), differentiable in both `V` and `X`.
pub fn batched_gram_solve<'t, T: Scalar>(
    basis: &Var<'t, T>,
    x: &Var<'t, T>,
    mode: Normalization,
) -> Result<Var<'t, T>> {
    basis.same_tape(x)?;
    let (y, cache) = project_forward(&basis.value(), &x.value(), mode)?;
    let op = Op::Project { basis: basis.id, x: x.id, cache: Box::new(cache) };
    basis.tape.record(y, op, &[basis.id, x.id], "batched_gram_solve")
}
