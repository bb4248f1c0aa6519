//! Append-only computation graph with reverse-mode differentiation.
//!
//! Nodes are recorded in construction order, which is already a topological
//! order, so the backward pass is a single reverse sweep. Gradients of
//! interior nodes are dropped as soon as their consumers are processed; leaf
//! gradients stay readable after [`Graph::backward`].

use super::ops;
use super::scalar::Scalar;
use super::store::ParameterStore;
use super::{ConvSpec, Shape};
use crate::error::{DdlError, Result};

/// Handle to a tensor recorded in a [`Graph`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct NodeRef(pub(crate) usize);

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum UnaryKind {
    Relu,
    Tanh,
    Sigmoid,
    Neg,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum ReduceKind {
    Sum,
    Mean,
}

pub(crate) enum Op<T: Scalar> {
    Leaf,
    Conv3d {
        input: NodeRef,
        weights: NodeRef,
        bias: Option<NodeRef>,
        spec: ConvSpec,
    },
    MaxPool3d {
        input: NodeRef,
        /// Flat input index of the window maximum, per output element.
        argmax: Vec<u32>,
    },
    GroupNorm {
        input: NodeRef,
        gamma: NodeRef,
        beta: NodeRef,
        groups: usize,
        /// Saved per-(batch, group) statistics from the forward pass.
        mean: Vec<T>,
        inv_std: Vec<T>,
    },
    Unary {
        input: NodeRef,
        kind: UnaryKind,
    },
    Binary {
        lhs: NodeRef,
        rhs: NodeRef,
        kind: BinaryKind,
    },
    /// y = scale * x + offset; only the scale matters for the gradient.
    Affine {
        input: NodeRef,
        scale: T,
    },
    ConcatChannels {
        a: NodeRef,
        b: NodeRef,
    },
    SliceChannels {
        input: NodeRef,
        start: usize,
    },
    MeanOverSet {
        inputs: Vec<NodeRef>,
    },
    Upsample2x {
        input: NodeRef,
    },
    Reduce {
        input: NodeRef,
        kind: ReduceKind,
    },
}

pub(crate) struct Node<T: Scalar> {
    pub shape: Shape,
    pub value: Vec<T>,
    pub requires_grad: bool,
    pub op: Op<T>,
}

/// One recorded forward computation.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    /// Parameter bindings: node index -> store entry name.
    params: Vec<(usize, String)>,
    grads: Vec<Option<Vec<T>>>,
    grad_enabled: bool,
    backward_run: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: Vec::new(),
            grads: Vec::new(),
            grad_enabled: true,
            backward_run: false,
        }
    }

    /// Graph that records values only; every tensor gets `requires_grad =
    /// false` and `backward` is rejected.
    pub fn inference() -> Self {
        Graph {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, node: Node<T>) -> NodeRef {
        self.nodes.push(node);
        NodeRef(self.nodes.len() - 1)
    }

    fn node(&self, t: NodeRef) -> &Node<T> {
        &self.nodes[t.0]
    }

    pub fn shape(&self, t: NodeRef) -> &Shape {
        &self.node(t).shape
    }

    pub fn value(&self, t: NodeRef) -> &[T] {
        &self.node(t).value
    }

    pub fn value_vec(&self, t: NodeRef) -> Vec<T> {
        self.node(t).value.clone()
    }

    /// Scalar value of a one-element tensor.
    pub fn scalar_value(&self, t: NodeRef) -> Result<T> {
        let node = self.node(t);
        if !node.shape.is_scalar() {
            return Err(DdlError::ShapeMismatch(format!(
                "expected scalar tensor, got shape {}",
                node.shape
            )));
        }
        Ok(node.value[0])
    }

    /// Gradient of a tensor after `backward`. Interior gradients are
    /// discarded during the sweep; only leaves stay readable.
    pub fn grad(&self, t: NodeRef) -> Option<&[T]> {
        self.grads.get(t.0).and_then(|g| g.as_deref())
    }

    pub fn requires_grad(&self, t: NodeRef) -> bool {
        self.node(t).requires_grad
    }

    // ---- leaf constructors ----

    pub fn leaf(&mut self, shape: Shape, value: Vec<T>, requires_grad: bool) -> Result<NodeRef> {
        if shape.numel() != value.len() {
            return Err(DdlError::ShapeMismatch(format!(
                "shape {} implies {} elements, got {}",
                shape,
                shape.numel(),
                value.len()
            )));
        }
        Ok(self.push(Node {
            shape,
            value,
            requires_grad: requires_grad && self.grad_enabled,
            op: Op::Leaf,
        }))
    }

    pub fn constant(&mut self, shape: Shape, value: Vec<T>) -> Result<NodeRef> {
        self.leaf(shape, value, false)
    }

    pub fn scalar_const(&mut self, v: f64) -> NodeRef {
        self.push(Node {
            shape: Shape::scalar(),
            value: vec![T::from_f64(v)],
            requires_grad: false,
            op: Op::Leaf,
        })
    }

    /// Bind a store parameter as a trainable leaf. Gradients flow back to the
    /// store through [`Graph::backward`].
    pub fn param(&mut self, store: &ParameterStore<T>, name: &str) -> Result<NodeRef> {
        let param = store.get(name)?;
        let id = self.leaf(param.shape.clone(), param.value.clone(), true)?;
        if self.grad_enabled {
            self.params.push((id.0, name.to_string()));
        }
        Ok(id)
    }

    /// Bind every parameter in the store; returns nothing, parameters are
    /// fetched later by name via [`Graph::param_ref`].
    pub fn param_ref(&self, name: &str) -> Option<NodeRef> {
        self.params
            .iter()
            .find(|(_, n)| n == name)
            .map(|(i, _)| NodeRef(*i))
    }

    // ---- operations ----

    pub fn conv3d(
        &mut self,
        input: NodeRef,
        weights: NodeRef,
        bias: Option<NodeRef>,
        spec: &ConvSpec,
    ) -> Result<NodeRef> {
        spec.validate()?;
        let [n, c, d, h, w] = self.shape(input).as_5d()?;
        if c != spec.in_channels {
            return Err(DdlError::ShapeMismatch(format!(
                "conv3d expects {} input channels, got {c}",
                spec.in_channels
            )));
        }
        if *self.shape(weights) != spec.weight_shape() {
            return Err(DdlError::ShapeMismatch(format!(
                "conv3d weights shaped {}, spec requires {}",
                self.shape(weights),
                spec.weight_shape()
            )));
        }
        match (spec.bias, bias) {
            (true, Some(b)) => {
                if self.shape(b).dims() != [spec.out_channels] {
                    return Err(DdlError::ShapeMismatch(format!(
                        "conv3d bias shaped {}, expected [{}]",
                        self.shape(b),
                        spec.out_channels
                    )));
                }
            }
            (false, None) => {}
            (true, None) => {
                return Err(DdlError::InvalidArgument(
                    "conv3d spec declares bias but none was provided".into(),
                ))
            }
            (false, Some(_)) => {
                return Err(DdlError::InvalidArgument(
                    "conv3d spec declares no bias but one was provided".into(),
                ))
            }
        }
        let od = spec.out_extent(0, d)?;
        let oh = spec.out_extent(1, h)?;
        let ow = spec.out_extent(2, w)?;
        let out_shape = Shape::new(vec![n, spec.out_channels, od, oh, ow]);
        let mut out = vec![T::ZERO; out_shape.numel()];
        ops::conv3d_forward(
            self.value(input),
            [n, c, d, h, w],
            self.value(weights),
            bias.map(|b| self.value(b)),
            spec,
            [od, oh, ow],
            &mut out,
        );
        let requires_grad = self.any_requires_grad(&[Some(input), Some(weights), bias]);
        Ok(self.push(Node {
            shape: out_shape,
            value: out,
            requires_grad,
            op: Op::Conv3d {
                input,
                weights,
                bias,
                spec: spec.clone(),
            },
        }))
    }

    pub fn maxpool3d(
        &mut self,
        input: NodeRef,
        window: [usize; 3],
        stride: [usize; 3],
    ) -> Result<NodeRef> {
        let [n, c, d, h, w] = self.shape(input).as_5d()?;
        if window.iter().any(|&x| x == 0) || stride.iter().any(|&x| x == 0) {
            return Err(DdlError::InvalidArgument(
                "maxpool3d window and stride must be positive".into(),
            ));
        }
        for (axis, (&extent, &s)) in [d, h, w].iter().zip(stride.iter()).enumerate() {
            if extent % s != 0 {
                return Err(DdlError::ShapeMismatch(format!(
                    "maxpool3d: spatial extent {extent} on axis {axis} not divisible by stride {s}"
                )));
            }
        }
        if window[0] > d || window[1] > h || window[2] > w {
            return Err(DdlError::ShapeMismatch(
                "maxpool3d window exceeds input extents".into(),
            ));
        }
        let out_sp = [d / stride[0], h / stride[1], w / stride[2]];
        // Pad-free policy: every window must stay in bounds.
        for axis in 0..3 {
            if (out_sp[axis] - 1) * stride[axis] + window[axis] > [d, h, w][axis] {
                return Err(DdlError::ShapeMismatch(format!(
                    "maxpool3d window {} overruns axis {axis}",
                    window[axis]
                )));
            }
        }
        let out_shape = Shape::new(vec![n, c, out_sp[0], out_sp[1], out_sp[2]]);
        let mut out = vec![T::ZERO; out_shape.numel()];
        let mut argmax = vec![0u32; out_shape.numel()];
        ops::maxpool3d_forward(
            self.value(input),
            [n, c, d, h, w],
            window,
            stride,
            out_sp,
            &mut out,
            &mut argmax,
        );
        let requires_grad = self.node(input).requires_grad;
        Ok(self.push(Node {
            shape: out_shape,
            value: out,
            requires_grad,
            op: Op::MaxPool3d { input, argmax },
        }))
    }

    pub fn group_norm(
        &mut self,
        input: NodeRef,
        groups: usize,
        gamma: NodeRef,
        beta: NodeRef,
        eps: f64,
    ) -> Result<NodeRef> {
        let [n, c, d, h, w] = self.shape(input).as_5d()?;
        if groups == 0 || c % groups != 0 {
            return Err(DdlError::ShapeMismatch(format!(
                "group_norm: {c} channels not divisible by {groups} groups"
            )));
        }
        for (name, t) in [("gamma", gamma), ("beta", beta)] {
            if self.shape(t).dims() != [c] {
                return Err(DdlError::ShapeMismatch(format!(
                    "group_norm {name} shaped {}, expected [{c}]",
                    self.shape(t)
                )));
            }
        }
        let eps_t = T::from_f64(eps);
        let mut out = vec![T::ZERO; self.shape(input).numel()];
        let mut mean = vec![T::ZERO; n * groups];
        let mut inv_std = vec![T::ZERO; n * groups];
        ops::group_norm_forward(
            self.value(input),
            [n, c, d, h, w],
            groups,
            self.value(gamma),
            self.value(beta),
            eps_t,
            &mut out,
            &mut mean,
            &mut inv_std,
        );
        let shape = self.shape(input).clone();
        let requires_grad = self.any_requires_grad(&[Some(input), Some(gamma), Some(beta)]);
        Ok(self.push(Node {
            shape,
            value: out,
            requires_grad,
            op: Op::GroupNorm {
                input,
                gamma,
                beta,
                groups,
                mean,
                inv_std,
            },
        }))
    }

    pub fn unary(&mut self, input: NodeRef, kind: UnaryKind) -> NodeRef {
        let value = ops::unary_forward(self.value(input), kind);
        let shape = self.shape(input).clone();
        let requires_grad = self.node(input).requires_grad;
        self.push(Node {
            shape,
            value,
            requires_grad,
            op: Op::Unary { input, kind },
        })
    }

    pub fn relu(&mut self, input: NodeRef) -> NodeRef {
        self.unary(input, UnaryKind::Relu)
    }

    pub fn tanh(&mut self, input: NodeRef) -> NodeRef {
        self.unary(input, UnaryKind::Tanh)
    }

    pub fn sigmoid(&mut self, input: NodeRef) -> NodeRef {
        self.unary(input, UnaryKind::Sigmoid)
    }

    pub fn neg(&mut self, input: NodeRef) -> NodeRef {
        self.unary(input, UnaryKind::Neg)
    }

    fn binary(&mut self, lhs: NodeRef, rhs: NodeRef, kind: BinaryKind) -> Result<NodeRef> {
        if self.shape(lhs) != self.shape(rhs) {
            return Err(DdlError::ShapeMismatch(format!(
                "elementwise {:?} on shapes {} and {}",
                kind,
                self.shape(lhs),
                self.shape(rhs)
            )));
        }
        let value = ops::binary_forward(self.value(lhs), self.value(rhs), kind);
        let shape = self.shape(lhs).clone();
        let requires_grad = self.any_requires_grad(&[Some(lhs), Some(rhs), None]);
        Ok(self.push(Node {
            shape,
            value,
            requires_grad,
            op: Op::Binary { lhs, rhs, kind },
        }))
    }

    pub fn add(&mut self, lhs: NodeRef, rhs: NodeRef) -> Result<NodeRef> {
        self.binary(lhs, rhs, BinaryKind::Add)
    }

    pub fn sub(&mut self, lhs: NodeRef, rhs: NodeRef) -> Result<NodeRef> {
        self.binary(lhs, rhs, BinaryKind::Sub)
    }

    pub fn mul(&mut self, lhs: NodeRef, rhs: NodeRef) -> Result<NodeRef> {
        self.binary(lhs, rhs, BinaryKind::Mul)
    }

    pub fn div(&mut self, lhs: NodeRef, rhs: NodeRef) -> Result<NodeRef> {
        self.binary(lhs, rhs, BinaryKind::Div)
    }

    /// y = scale * x + offset, elementwise with plain constants.
    pub fn affine(&mut self, input: NodeRef, scale: f64, offset: f64) -> NodeRef {
        let (s, o) = (T::from_f64(scale), T::from_f64(offset));
        let value = self.value(input).iter().map(|&x| s * x + o).collect();
        let shape = self.shape(input).clone();
        let requires_grad = self.node(input).requires_grad;
        self.push(Node {
            shape,
            value,
            requires_grad,
            op: Op::Affine { input, scale: s },
        })
    }

    pub fn scale(&mut self, input: NodeRef, factor: f64) -> NodeRef {
        self.affine(input, factor, 0.0)
    }

    pub fn add_scalar(&mut self, input: NodeRef, offset: f64) -> NodeRef {
        self.affine(input, 1.0, offset)
    }

    pub fn concat_channels(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        let [na, ca, da, ha, wa] = self.shape(a).as_5d()?;
        let [nb, cb, db, hb, wb] = self.shape(b).as_5d()?;
        if (na, da, ha, wa) != (nb, db, hb, wb) {
            return Err(DdlError::ShapeMismatch(format!(
                "concat_channels: non-channel extents differ, {} vs {}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out_shape = Shape::new(vec![na, ca + cb, da, ha, wa]);
        let mut out = vec![T::ZERO; out_shape.numel()];
        ops::concat_channels_forward(
            self.value(a),
            ca,
            self.value(b),
            cb,
            na,
            da * ha * wa,
            &mut out,
        );
        let requires_grad = self.any_requires_grad(&[Some(a), Some(b), None]);
        Ok(self.push(Node {
            shape: out_shape,
            value: out,
            requires_grad,
            op: Op::ConcatChannels { a, b },
        }))
    }

    /// Channel slice `[start, start+len)`; exact inverse of `concat_channels`.
    pub fn slice_channels(&mut self, input: NodeRef, start: usize, len: usize) -> Result<NodeRef> {
        let [n, c, d, h, w] = self.shape(input).as_5d()?;
        if start + len > c || len == 0 {
            return Err(DdlError::ShapeMismatch(format!(
                "slice_channels [{start}, {}) out of {c} channels",
                start + len
            )));
        }
        let out_shape = Shape::new(vec![n, len, d, h, w]);
        let mut out = vec![T::ZERO; out_shape.numel()];
        ops::slice_channels_forward(self.value(input), [n, c, d * h * w], start, len, &mut out);
        let requires_grad = self.node(input).requires_grad;
        Ok(self.push(Node {
            shape: out_shape,
            value: out,
            requires_grad,
            op: Op::SliceChannels { input, start },
        }))
    }

    /// Elementwise arithmetic mean over a non-empty set of same-shape tensors.
    ///
    /// The inputs are summed in a content-canonical order, so any permutation
    /// of the same tensors produces bit-identical output.
    pub fn mean_over_set(&mut self, inputs: &[NodeRef]) -> Result<NodeRef> {
        if inputs.is_empty() {
            return Err(DdlError::InvalidArgument(
                "mean_over_set requires at least one tensor".into(),
            ));
        }
        let shape = self.shape(inputs[0]).clone();
        for &t in &inputs[1..] {
            if *self.shape(t) != shape {
                return Err(DdlError::ShapeMismatch(format!(
                    "mean_over_set: shapes {} and {} differ",
                    shape,
                    self.shape(t)
                )));
            }
        }
        let mut order: Vec<NodeRef> = inputs.to_vec();
        order.sort_by(|&x, &y| ops::lex_cmp(self.value(x), self.value(y)));
        let inv_k = T::from_f64(1.0 / inputs.len() as f64);
        let mut out = vec![T::ZERO; shape.numel()];
        for &t in &order {
            let v = self.value(t);
            for (o, x) in out.iter_mut().zip(v.iter()) {
                *o += *x;
            }
        }
        for o in out.iter_mut() {
            *o *= inv_k;
        }
        let requires_grad = inputs.iter().any(|&t| self.node(t).requires_grad);
        Ok(self.push(Node {
            shape,
            value: out,
            requires_grad,
            op: Op::MeanOverSet {
                inputs: inputs.to_vec(),
            },
        }))
    }

    /// Trilinear upsampling by a factor of 2 (align-corners = false).
    pub fn upsample_trilinear2x(&mut self, input: NodeRef) -> Result<NodeRef> {
        let [n, c, d, h, w] = self.shape(input).as_5d()?;
        let out_shape = Shape::new(vec![n, c, 2 * d, 2 * h, 2 * w]);
        let mut out = vec![T::ZERO; out_shape.numel()];
        ops::upsample2x_forward(self.value(input), [n, c, d, h, w], &mut out);
        let requires_grad = self.node(input).requires_grad;
        Ok(self.push(Node {
            shape: out_shape,
            value: out,
            requires_grad,
            op: Op::Upsample2x { input },
        }))
    }

    fn reduce(&mut self, input: NodeRef, kind: ReduceKind) -> NodeRef {
        let total = ops::pairwise_sum(self.value(input));
        let value = match kind {
            ReduceKind::Sum => total,
            ReduceKind::Mean => total * T::from_f64(1.0 / self.value(input).len() as f64),
        };
        let requires_grad = self.node(input).requires_grad;
        self.push(Node {
            shape: Shape::scalar(),
            value: vec![value],
            requires_grad,
            op: Op::Reduce { input, kind },
        })
    }

    pub fn sum(&mut self, input: NodeRef) -> NodeRef {
        self.reduce(input, ReduceKind::Sum)
    }

    pub fn mean(&mut self, input: NodeRef) -> NodeRef {
        self.reduce(input, ReduceKind::Mean)
    }

    fn any_requires_grad(&self, refs: &[Option<NodeRef>; 3]) -> bool {
        refs.iter()
            .flatten()
            .any(|&t| self.node(t).requires_grad)
    }

    // ---- reverse sweep ----

    /// Reverse-mode sweep from a scalar loss. Gradients accumulate for every
    /// tensor with `requires_grad`; a second call on the same graph is an
    /// error (build a new graph per step).
    pub fn backward(&mut self, loss: NodeRef) -> Result<()> {
        if self.backward_run {
            return Err(DdlError::Gradient(
                "backward already ran on this graph; record a new forward pass first".into(),
            ));
        }
        let loss_node = self.node(loss);
        if !loss_node.shape.is_scalar() {
            return Err(DdlError::Gradient(format!(
                "backward requires a scalar loss, got shape {}",
                loss_node.shape
            )));
        }
        if !loss_node.requires_grad {
            return Err(DdlError::Gradient(
                "loss does not depend on any tensor with requires_grad".into(),
            ));
        }
        self.backward_run = true;
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(vec![T::ONE]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                grads[i] = None;
                continue;
            }
            let Some(gout) = grads[i].take() else {
                continue;
            };
            let keep = matches!(self.nodes[i].op, Op::Leaf);
            self.propagate(i, &gout, &mut grads);
            if keep {
                grads[i] = Some(gout);
            }
        }
        self.grads = grads;
        Ok(())
    }

    /// Backward plus transfer of parameter gradients into their store.
    pub fn backward_into(&mut self, loss: NodeRef, store: &mut ParameterStore<T>) -> Result<()> {
        self.backward(loss)?;
        for (idx, name) in &self.params {
            if let Some(g) = self.grads[*idx].as_ref() {
                store.accumulate_grad(name, g)?;
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, gout: &[T], grads: &mut [Option<Vec<T>>]) {
        // Split borrows: the node being processed is read-only except for
        // ops that saved forward state (none mutate during backward).
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Conv3d {
                input,
                weights,
                bias,
                spec,
            } => {
                let in_shape = self.nodes[input.0].shape.as_5d().expect("validated");
                let out_sp = {
                    let d = node.shape.dims();
                    [d[2], d[3], d[4]]
                };
                if self.nodes[input.0].requires_grad {
                    let gin = grad_buf(grads, input.0, self.nodes[input.0].value.len());
                    ops::conv3d_backward_input(
                        gin,
                        gout,
                        &self.nodes[weights.0].value,
                        in_shape,
                        spec,
                        out_sp,
                    );
                }
                if self.nodes[weights.0].requires_grad {
                    let gw = grad_buf(grads, weights.0, self.nodes[weights.0].value.len());
                    ops::conv3d_backward_weights(
                        gw,
                        gout,
                        &self.nodes[input.0].value,
                        in_shape,
                        spec,
                        out_sp,
                    );
                }
                if let Some(b) = bias {
                    if self.nodes[b.0].requires_grad {
                        let gb = grad_buf(grads, b.0, self.nodes[b.0].value.len());
                        ops::conv3d_backward_bias(gb, gout, spec.out_channels);
                    }
                }
            }
            Op::MaxPool3d { input, argmax } => {
                if self.nodes[input.0].requires_grad {
                    let gin = grad_buf(grads, input.0, self.nodes[input.0].value.len());
                    for (g, &src) in gout.iter().zip(argmax.iter()) {
                        gin[src as usize] += *g;
                    }
                }
            }
            Op::GroupNorm {
                input,
                gamma,
                beta,
                groups,
                mean,
                inv_std,
            } => {
                let in_shape = self.nodes[input.0].shape.as_5d().expect("validated");
                let wants_input = self.nodes[input.0].requires_grad;
                let wants_gamma = self.nodes[gamma.0].requires_grad;
                let wants_beta = self.nodes[beta.0].requires_grad;
                let mut gi = if wants_input {
                    vec![T::ZERO; self.nodes[input.0].value.len()]
                } else {
                    Vec::new()
                };
                let mut gg = vec![T::ZERO; self.nodes[gamma.0].value.len()];
                let mut gb = vec![T::ZERO; self.nodes[beta.0].value.len()];
                ops::group_norm_backward(
                    gout,
                    &self.nodes[input.0].value,
                    in_shape,
                    *groups,
                    &self.nodes[gamma.0].value,
                    mean,
                    inv_std,
                    wants_input.then_some(&mut gi),
                    &mut gg,
                    &mut gb,
                );
                if wants_input {
                    add_into(grad_buf(grads, input.0, gi.len()), &gi);
                }
                if wants_gamma {
                    add_into(grad_buf(grads, gamma.0, gg.len()), &gg);
                }
                if wants_beta {
                    add_into(grad_buf(grads, beta.0, gb.len()), &gb);
                }
            }
            Op::Unary { input, kind } => {
                if self.nodes[input.0].requires_grad {
                    let contribution =
                        ops::unary_backward(gout, &node.value, &self.nodes[input.0].value, *kind);
                    add_into(
                        grad_buf(grads, input.0, self.nodes[input.0].value.len()),
                        &contribution,
                    );
                }
            }
            Op::Binary { lhs, rhs, kind } => {
                let (gl, gr) = ops::binary_backward(
                    gout,
                    &self.nodes[lhs.0].value,
                    &self.nodes[rhs.0].value,
                    *kind,
                    self.nodes[lhs.0].requires_grad,
                    self.nodes[rhs.0].requires_grad,
                );
                if let Some(gl) = gl {
                    add_into(grad_buf(grads, lhs.0, gl.len()), &gl);
                }
                if let Some(gr) = gr {
                    add_into(grad_buf(grads, rhs.0, gr.len()), &gr);
                }
            }
            Op::Affine { input, scale, .. } => {
                if self.nodes[input.0].requires_grad {
                    let gin = grad_buf(grads, input.0, self.nodes[input.0].value.len());
                    T::axpy(gin, gout, *scale);
                }
            }
            Op::ConcatChannels { a, b } => {
                let [n, ca, d, h, w] = self.nodes[a.0].shape.as_5d().expect("validated");
                let cb = self.nodes[b.0].shape.dims()[1];
                let sp = d * h * w;
                if self.nodes[a.0].requires_grad {
                    let ga = grad_buf(grads, a.0, self.nodes[a.0].value.len());
                    ops::concat_backward_part(ga, gout, n, ca, cb, sp, 0, ca);
                }
                if self.nodes[b.0].requires_grad {
                    let gb = grad_buf(grads, b.0, self.nodes[b.0].value.len());
                    ops::concat_backward_part(gb, gout, n, cb, ca, sp, ca, cb);
                }
            }
            Op::SliceChannels { input, start } => {
                if self.nodes[input.0].requires_grad {
                    let [n, c, d, h, w] = self.nodes[input.0].shape.as_5d().expect("validated");
                    let len = node.shape.dims()[1];
                    let gin = grad_buf(grads, input.0, self.nodes[input.0].value.len());
                    ops::slice_channels_backward(gin, gout, [n, c, d * h * w], *start, len);
                }
            }
            Op::MeanOverSet { inputs } => {
                let inv_k = T::from_f64(1.0 / inputs.len() as f64);
                for &t in inputs {
                    if self.nodes[t.0].requires_grad {
                        let gt = grad_buf(grads, t.0, self.nodes[t.0].value.len());
                        T::axpy(gt, gout, inv_k);
                    }
                }
            }
            Op::Upsample2x { input } => {
                if self.nodes[input.0].requires_grad {
                    let in_shape = self.nodes[input.0].shape.as_5d().expect("validated");
                    let gin = grad_buf(grads, input.0, self.nodes[input.0].value.len());
                    ops::upsample2x_backward(gin, gout, in_shape);
                }
            }
            Op::Reduce { input, kind } => {
                if self.nodes[input.0].requires_grad {
                    let n = self.nodes[input.0].value.len();
                    let per = match kind {
                        ReduceKind::Sum => gout[0],
                        ReduceKind::Mean => gout[0] * T::from_f64(1.0 / n as f64),
                    };
                    let gin = grad_buf(grads, input.0, n);
                    for g in gin.iter_mut() {
                        *g += per;
                    }
                }
            }
        }
    }
}

fn grad_buf<'a, T: Scalar>(
    grads: &'a mut [Option<Vec<T>>],
    idx: usize,
    len: usize,
) -> &'a mut Vec<T> {
    grads[idx].get_or_insert_with(|| vec![T::ZERO; len])
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d += *s;
    }
}
