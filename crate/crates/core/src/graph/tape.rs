use std::collections::BTreeMap;

use super::tensor::{advance, strides, Tensor};
use super::GraphError;

/// Index of a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Arithmetic used for node values and adjoints.
///
/// `F32` evaluates every primitive in double precision and rounds its
/// output (and every adjoint contribution) to binary32. With
/// `flush_subnormals` set, subnormal results become signed zero, matching
/// the flush-to-zero kernels common in deep-learning runtimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F64,
    F32 {
        flush_subnormals: bool,
    },
}

impl Precision {
    /// Binary32 with flush-to-zero.
    pub fn f32() -> Self {
        Precision::F32 { flush_subnormals: true }
    }

    #[inline]
    fn round(self, v: f64) -> f64 {
        match self {
            Precision::F64 => v,
            Precision::F32 { flush_subnormals } => {
                let f = v as f32;
                if flush_subnormals && f.is_subnormal() {
                    if f.is_sign_negative() {
                        -0.0
                    } else {
                        0.0
                    }
                } else {
                    f as f64
                }
            }
        }
    }

    fn round_all(self, data: &mut [f64]) {
        if self != Precision::F64 {
            for v in data.iter_mut() {
                *v = self.round(*v);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
    /// Hard maximum; ties resolve to the lowest flat index.
    Max,
    /// `C + ln(sum(exp(x - C)))` with `C` the group maximum.
    LogSumExp,
}

impl ReduceKind {
    fn name(self) -> &'static str {
        match self {
            ReduceKind::Sum => "sum-reduce",
            ReduceKind::Mean => "mean-reduce",
            ReduceKind::Max => "max-reduce",
            ReduceKind::LogSumExp => "logsumexp",
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    ScalarMul(NodeId, f64),
    Neg(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Power(NodeId, f64),
    Elu(NodeId),
    LogSigmoid(NodeId),
    LogSoftmax(NodeId),
    MatMul(NodeId, NodeId),
    Reduce {
        input: NodeId,
        kind: ReduceKind,
        axes: Vec<usize>,
        mask: Option<Vec<bool>>,
        /// Per-group included count (mean) or flat argmax (max).
        aux: Vec<usize>,
    },
    Broadcast {
        input: NodeId,
        axis_map: Vec<usize>,
    },
    Concat {
        inputs: Vec<NodeId>,
        axis: usize,
    },
    Select {
        input: NodeId,
        axis: usize,
        indices: Vec<usize>,
    },
    Reshape(NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param => "param",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::ScalarMul(..) => "scalar-mul",
            Op::Neg(_) => "neg",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Power(..) => "power",
            Op::Elu(_) => "elu",
            Op::LogSigmoid(_) => "log-sigmoid",
            Op::LogSoftmax(_) => "log-softmax",
            Op::MatMul(..) => "matmul",
            Op::Reduce { kind, .. } => kind.name(),
            Op::Broadcast { .. } => "broadcast",
            Op::Concat { .. } => "concat",
            Op::Select { .. } => "slice",
            Op::Reshape(_) => "reshape",
        }
    }

    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Constant | Op::Param => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) => vec![*a, *b],
            Op::ScalarMul(a, _)
            | Op::Neg(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Power(a, _)
            | Op::Elu(a)
            | Op::LogSigmoid(a)
            | Op::LogSoftmax(a)
            | Op::Reshape(a) => vec![*a],
            Op::Reduce { input, .. } | Op::Broadcast { input, .. } | Op::Select { input, .. } => {
                vec![*input]
            }
            Op::Concat { inputs, .. } => inputs.clone(),
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Append-only record of a forward computation.
///
/// Parents always precede their children, so [`Tape::backward`] is a
/// single reverse sweep over node ids.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<NodeId>,
    precision: Precision,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<Option<Tensor>>,
    params: Vec<(NodeId, Vec<usize>)>,
}

impl Gradients {
    /// Adjoint of any node reached by the sweep.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.adjoints.get(id.0).and_then(|a| a.as_ref())
    }

    /// Adjoint of `id`, or zeros of `shape` when the node was not reached.
    pub fn get_or_zeros(&self, id: NodeId, shape: &[usize]) -> Tensor {
        self.get(id).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }

    /// Gradient for every registered parameter, zeros where unreachable.
    pub fn params(&self) -> BTreeMap<NodeId, Tensor> {
        self.params
            .iter()
            .map(|(id, shape)| (*id, self.get_or_zeros(*id, shape)))
            .collect()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_precision(precision: Precision) -> Self {
        Tape {
            precision,
            ..Self::default()
        }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Name of the primitive that produced `id`.
    pub fn op_name(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.name()
    }

    pub fn parents(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes[id.0].op.parents()
    }

    pub fn param_ids(&self) -> &[NodeId] {
        &self.params
    }

    fn push(&mut self, op: Op, mut value: Tensor) -> NodeId {
        self.precision.round_all(value.data_mut());
        #[cfg(debug_assertions)]
        {
            let inputs_clean = op.parents().iter().all(|p| !self.nodes[p.0].value.has_nan());
            let domain_checked = !matches!(op, Op::Log(_) | Op::Power(..) | Op::Constant | Op::Param);
            debug_assert!(
                !(inputs_clean && domain_checked && value.has_nan()),
                "{} produced NaN from NaN-free inputs",
                op.name()
            );
        }
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Constant, value)
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.constant(Tensor::scalar(v))
    }

    /// Trainable leaf; its gradient is reported by [`Gradients::params`].
    pub fn param(&mut self, value: Tensor) -> NodeId {
        let id = self.push(Op::Param, value);
        self.params.push(id);
        id
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<(), GraphError> {
        if self.shape(a) != self.shape(b) {
            return Err(GraphError::ShapeMismatch {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn zip(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape().to_vec(), data).expect("zip shapes")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.same_shape("add", a, b)?;
        let v = self.zip(a, b, |x, y| x + y);
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.same_shape("sub", a, b)?;
        let v = self.zip(a, b, |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.same_shape("mul", a, b)?;
        let v = self.zip(a, b, |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn scalar_mul(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x * c);
        self.push(Op::ScalarMul(a, c), v)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| -x);
        self.push(Op::Neg(a), v)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::ln);
        self.push(Op::Log(a), v)
    }

    /// Elementwise `x^p`.
    pub fn power(&mut self, a: NodeId, p: f64) -> NodeId {
        let v = self.value(a).map(|x| x.powf(p));
        self.push(Op::Power(a, p), v)
    }

    /// `x` for `x > 0`, `exp(x) - 1` otherwise.
    pub fn elu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { x.exp_m1() });
        self.push(Op::Elu(a), v)
    }

    /// Fused `log(sigmoid(x))`, finite for every finite `x`.
    pub fn log_sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(log_sigmoid);
        self.push(Op::LogSigmoid(a), v)
    }

    /// Fused `log(softmax(z))` over the last axis.
    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId, GraphError> {
        let x = self.value(a);
        let k = *x.shape().last().ok_or(GraphError::InvalidAxis {
            op: "log-softmax",
            axis: 0,
            rank: 0,
        })?;
        if k == 0 {
            return Err(GraphError::EmptyReduction { op: "log-softmax" });
        }
        let mut out = x.data().to_vec();
        for row in out.chunks_mut(k) {
            let lse = logsumexp_slice(row);
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        let v = Tensor::new(x.shape().to_vec(), out)?;
        Ok(self.push(Op::LogSoftmax(a), v))
    }

    /// `(m x k) . (k x n)`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(GraphError::ShapeMismatch {
                op: "matmul",
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push(Op::MatMul(a, b), Tensor::matrix(m, n, out)))
    }

    pub fn sum(&mut self, a: NodeId, axes: &[usize], mask: Option<&[bool]>) -> Result<NodeId, GraphError> {
        self.reduce(a, ReduceKind::Sum, axes, mask)
    }

    pub fn mean(&mut self, a: NodeId, axes: &[usize], mask: Option<&[bool]>) -> Result<NodeId, GraphError> {
        self.reduce(a, ReduceKind::Mean, axes, mask)
    }

    pub fn max(&mut self, a: NodeId, axes: &[usize], mask: Option<&[bool]>) -> Result<NodeId, GraphError> {
        self.reduce(a, ReduceKind::Max, axes, mask)
    }

    pub fn logsumexp(&mut self, a: NodeId, axes: &[usize], mask: Option<&[bool]>) -> Result<NodeId, GraphError> {
        self.reduce(a, ReduceKind::LogSumExp, axes, mask)
    }

    /// Reduces `axes` of `a`. Masked-out entries are excluded entirely;
    /// a group with no included entry is an error.
    pub fn reduce(
        &mut self,
        a: NodeId,
        kind: ReduceKind,
        axes: &[usize],
        mask: Option<&[bool]>,
    ) -> Result<NodeId, GraphError> {
        let x = self.value(a);
        let rank = x.rank();
        let mut axes = axes.to_vec();
        axes.sort_unstable();
        axes.dedup();
        if let Some(&ax) = axes.iter().find(|&&ax| ax >= rank) {
            return Err(GraphError::InvalidAxis {
                op: kind.name(),
                axis: ax,
                rank,
            });
        }
        if let Some(m) = mask {
            if m.len() != x.numel() {
                return Err(GraphError::MaskLength {
                    expected: x.numel(),
                    got: m.len(),
                });
            }
        }
        let (out_shape, groups) = group_index(x.shape(), &axes);
        let n_out: usize = out_shape.iter().product();
        let included = |i: usize| mask.is_none_or(|m| m[i]);
        let mut counts = vec![0usize; n_out];
        for (i, &g) in groups.iter().enumerate() {
            if included(i) {
                counts[g] += 1;
            }
        }
        if counts.contains(&0) {
            return Err(GraphError::EmptyReduction { op: kind.name() });
        }
        let xd = x.data();
        let mut out = vec![0.0; n_out];
        let aux = match kind {
            ReduceKind::Sum | ReduceKind::Mean => {
                for (i, &g) in groups.iter().enumerate() {
                    if included(i) {
                        out[g] += xd[i];
                    }
                }
                if kind == ReduceKind::Mean {
                    for (o, &c) in out.iter_mut().zip(&counts) {
                        *o /= c as f64;
                    }
                }
                counts
            }
            ReduceKind::Max => {
                let mut arg = vec![usize::MAX; n_out];
                for (i, &g) in groups.iter().enumerate() {
                    if included(i) && (arg[g] == usize::MAX || xd[i] > xd[arg[g]]) {
                        arg[g] = i;
                    }
                }
                for (o, &j) in out.iter_mut().zip(&arg) {
                    *o = xd[j];
                }
                arg
            }
            ReduceKind::LogSumExp => {
                let mut shift = vec![f64::NEG_INFINITY; n_out];
                for (i, &g) in groups.iter().enumerate() {
                    if included(i) && xd[i] > shift[g] {
                        shift[g] = xd[i];
                    }
                }
                for (i, &g) in groups.iter().enumerate() {
                    if included(i) && shift[g].is_finite() {
                        out[g] += (xd[i] - shift[g]).exp();
                    }
                }
                for (o, &c) in out.iter_mut().zip(&shift) {
                    *o = if c.is_finite() { c + o.ln() } else { c };
                }
                Vec::new()
            }
        };
        let v = Tensor::new(out_shape, out)?;
        Ok(self.push(
            Op::Reduce {
                input: a,
                kind,
                axes,
                mask: mask.map(<[bool]>::to_vec),
                aux,
            },
            v,
        ))
    }

    /// Places axis `i` of `a` at axis `axis_map[i]` of a tensor of `shape`,
    /// repeating values along the unmapped axes. Covers both expansion and
    /// transposition.
    pub fn broadcast(&mut self, a: NodeId, shape: &[usize], axis_map: &[usize]) -> Result<NodeId, GraphError> {
        let src = self.shape(a).to_vec();
        let bad = || GraphError::ShapeMismatch {
            op: "broadcast",
            left: src.clone(),
            right: shape.to_vec(),
        };
        if axis_map.len() != src.len() {
            return Err(bad());
        }
        let mut seen = vec![false; shape.len()];
        for (i, &t) in axis_map.iter().enumerate() {
            if t >= shape.len() || seen[t] || shape[t] != src[i] {
                return Err(bad());
            }
            seen[t] = true;
        }
        let idx = broadcast_index(&src, shape, axis_map);
        let xd = self.value(a).data();
        let data = idx.iter().map(|&i| xd[i]).collect();
        let v = Tensor::new(shape.to_vec(), data)?;
        Ok(self.push(
            Op::Broadcast {
                input: a,
                axis_map: axis_map.to_vec(),
            },
            v,
        ))
    }

    /// Concatenates along an existing axis.
    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId, GraphError> {
        let first = *inputs.first().ok_or(GraphError::EmptyReduction { op: "concat" })?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(GraphError::InvalidAxis {
                op: "concat",
                axis,
                rank: base.len(),
            });
        }
        let mut total = 0;
        for &id in inputs {
            let s = self.shape(id);
            let compatible =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(GraphError::ShapeMismatch {
                    op: "concat",
                    left: base.clone(),
                    right: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &id in inputs {
                let w = self.shape(id)[axis] * inner;
                data.extend_from_slice(&self.value(id).data()[o * w..(o + 1) * w]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let v = Tensor::new(shape, data)?;
        Ok(self.push(
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            v,
        ))
    }

    /// Gathers `indices` along `axis` (a contiguous range is a plain slice).
    pub fn select(&mut self, a: NodeId, axis: usize, indices: &[usize]) -> Result<NodeId, GraphError> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(GraphError::InvalidAxis {
                op: "slice",
                axis,
                rank: shape.len(),
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= shape[axis]) {
            return Err(GraphError::IndexOutOfRange {
                index: bad,
                len: shape[axis],
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let xd = self.value(a).data();
        let mut data = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &i in indices {
                let start = (o * shape[axis] + i) * inner;
                data.extend_from_slice(&xd[start..start + inner]);
            }
        }
        let mut out_shape = shape;
        out_shape[axis] = indices.len();
        let v = Tensor::new(out_shape, data)?;
        Ok(self.push(
            Op::Select {
                input: a,
                axis,
                indices: indices.to_vec(),
            },
            v,
        ))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId, GraphError> {
        let v = self.value(a).clone().reshaped(shape.to_vec())?;
        Ok(self.push(Op::Reshape(a), v))
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: NodeId) -> Result<Gradients, GraphError> {
        let rv = self.value(root);
        if rv.numel() != 1 {
            return Err(GraphError::NonScalarRoot {
                shape: rv.shape().to_vec(),
            });
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(vec![1.0]);
        for id in (0..=root.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            self.propagate(id, &g, &mut adj);
            adj[id] = Some(g);
        }
        let adjoints = adj
            .into_iter()
            .enumerate()
            .map(|(i, a)| a.map(|d| Tensor::new(self.nodes[i].value.shape().to_vec(), d).expect("adjoint shape")))
            .collect();
        let params = self.params.iter().map(|&p| (p, self.shape(p).to_vec())).collect();
        Ok(Gradients { adjoints, params })
    }

    fn accumulate(&self, adj: &mut [Option<Vec<f64>>], target: NodeId, mut contrib: Vec<f64>) {
        let prec = self.precision;
        prec.round_all(&mut contrib);
        match &mut adj[target.0] {
            Some(existing) => {
                for (e, c) in existing.iter_mut().zip(contrib) {
                    *e = prec.round(*e + c);
                }
            }
            slot @ None => *slot = Some(contrib),
        }
    }

    fn propagate(&self, id: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let y = node.value.data();
        let val = |n: NodeId| self.nodes[n.0].value.data();
        match &node.op {
            Op::Constant | Op::Param => {}
            Op::Add(a, b) => {
                self.accumulate(adj, *a, g.to_vec());
                self.accumulate(adj, *b, g.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(adj, *a, g.to_vec());
                self.accumulate(adj, *b, g.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let ga = g.iter().zip(vb).map(|(g, y)| g * y).collect();
                let gb = g.iter().zip(va).map(|(g, x)| g * x).collect();
                self.accumulate(adj, *a, ga);
                self.accumulate(adj, *b, gb);
            }
            Op::ScalarMul(a, c) => self.accumulate(adj, *a, g.iter().map(|v| v * c).collect()),
            Op::Neg(a) => self.accumulate(adj, *a, g.iter().map(|v| -v).collect()),
            Op::Exp(a) => self.accumulate(adj, *a, g.iter().zip(y).map(|(g, y)| g * y).collect()),
            Op::Log(a) => {
                let x = val(*a);
                self.accumulate(adj, *a, g.iter().zip(x).map(|(g, x)| g / x).collect());
            }
            Op::Power(a, p) => {
                let x = val(*a);
                let d = g.iter().zip(x).map(|(g, &x)| g * p * x.powf(p - 1.0)).collect();
                self.accumulate(adj, *a, d);
            }
            Op::Elu(a) => {
                let x = val(*a);
                let d = g
                    .iter()
                    .zip(x)
                    .map(|(g, &x)| if x > 0.0 { *g } else { g * x.exp() })
                    .collect();
                self.accumulate(adj, *a, d);
            }
            Op::LogSigmoid(a) => {
                let x = val(*a);
                let d = g.iter().zip(x).map(|(g, &x)| g * sigmoid(-x)).collect();
                self.accumulate(adj, *a, d);
            }
            Op::LogSoftmax(a) => {
                let k = *node.value.shape().last().unwrap();
                let mut d = vec![0.0; g.len()];
                for ((drow, grow), yrow) in d.chunks_mut(k).zip(g.chunks(k)).zip(y.chunks(k)) {
                    let gsum: f64 = grow.iter().sum();
                    for j in 0..k {
                        drow[j] = grow[j] - yrow[j].exp() * gsum;
                    }
                }
                self.accumulate(adj, *a, d);
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let bt = transpose(val(*b), k, n);
                let at = transpose(val(*a), m, k);
                self.accumulate(adj, *a, matmul_raw(g, &bt, m, n, k));
                self.accumulate(adj, *b, matmul_raw(&at, g, k, m, n));
            }
            Op::Reduce {
                input,
                kind,
                axes,
                mask,
                aux,
            } => {
                let x = &self.nodes[input.0].value;
                let (_, groups) = group_index(x.shape(), axes);
                let xd = x.data();
                let included = |i: usize| mask.as_ref().is_none_or(|m| m[i]);
                let mut d = vec![0.0; xd.len()];
                match kind {
                    ReduceKind::Sum => {
                        for (i, &gi) in groups.iter().enumerate() {
                            if included(i) {
                                d[i] = g[gi];
                            }
                        }
                    }
                    ReduceKind::Mean => {
                        for (i, &gi) in groups.iter().enumerate() {
                            if included(i) {
                                d[i] = g[gi] / aux[gi] as f64;
                            }
                        }
                    }
                    ReduceKind::Max => {
                        for (gi, &j) in aux.iter().enumerate() {
                            d[j] = g[gi];
                        }
                    }
                    ReduceKind::LogSumExp => {
                        for (i, &gi) in groups.iter().enumerate() {
                            if included(i) && y[gi].is_finite() {
                                d[i] = g[gi] * (xd[i] - y[gi]).exp();
                            }
                        }
                    }
                }
                self.accumulate(adj, *input, d);
            }
            Op::Broadcast { input, axis_map } => {
                let src = self.shape(*input);
                let idx = broadcast_index(src, node.value.shape(), axis_map);
                let mut d = vec![0.0; self.nodes[input.0].value.numel()];
                for (t, &s) in idx.iter().enumerate() {
                    d[s] += g[t];
                }
                self.accumulate(adj, *input, d);
            }
            Op::Concat { inputs, axis } => {
                let shape = node.value.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let row = shape[*axis] * inner;
                let mut offset = 0;
                for &inp in inputs {
                    let w = self.shape(inp)[*axis] * inner;
                    let mut d = Vec::with_capacity(outer * w);
                    for o in 0..outer {
                        d.extend_from_slice(&g[o * row + offset..o * row + offset + w]);
                    }
                    offset += w;
                    self.accumulate(adj, inp, d);
                }
            }
            Op::Select { input, axis, indices } => {
                let shape = self.shape(*input);
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let mut d = vec![0.0; self.nodes[input.0].value.numel()];
                let mut k = 0;
                for o in 0..outer {
                    for &i in indices {
                        let start = (o * shape[*axis] + i) * inner;
                        for v in &mut d[start..start + inner] {
                            *v += g[k];
                            k += 1;
                        }
                    }
                }
                self.accumulate(adj, *input, d);
            }
            Op::Reshape(a) => self.accumulate(adj, *a, g.to_vec()),
        }
    }
}

/// Stable `log(1 / (1 + exp(-x)))`.
pub fn log_sigmoid(x: f64) -> f64 {
    x.min(0.0) - (-x.abs()).exp().ln_1p()
}

/// Stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted log-sum-exp of a slice; `-inf` for an all `-inf` slice.
pub fn logsumexp_slice(xs: &[f64]) -> f64 {
    let c = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !c.is_finite() {
        return c;
    }
    c + xs.iter().map(|x| (x - c).exp()).sum::<f64>().ln()
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// Output shape and, for each input element, its output group.
fn group_index(shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let kept: Vec<usize> = (0..shape.len()).filter(|a| !axes.contains(a)).collect();
    let out_shape: Vec<usize> = kept.iter().map(|&a| shape[a]).collect();
    let out_strides = strides(&out_shape);
    let mut axis_stride = vec![0usize; shape.len()];
    for (k, &a) in kept.iter().enumerate() {
        axis_stride[a] = out_strides[k];
    }
    let n: usize = shape.iter().product();
    let mut groups = Vec::with_capacity(n);
    if n == 0 {
        return (out_shape, groups);
    }
    let mut coord = vec![0usize; shape.len()];
    let mut g = 0usize;
    loop {
        groups.push(g);
        match advance(&mut coord, shape) {
            None => break,
            Some(ax) => {
                // axes after `ax` wrapped to zero
                for a in ax + 1..shape.len() {
                    g -= axis_stride[a] * (shape[a] - 1);
                }
                g += axis_stride[ax];
            }
        }
    }
    (out_shape, groups)
}

/// For each element of the broadcast target, the flat source index.
fn broadcast_index(src: &[usize], target: &[usize], axis_map: &[usize]) -> Vec<usize> {
    let src_strides = strides(src);
    let mut step = vec![0usize; target.len()];
    for (i, &t) in axis_map.iter().enumerate() {
        step[t] = src_strides[i];
    }
    let n: usize = target.iter().product();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let mut coord = vec![0usize; target.len()];
    let mut s = 0usize;
    loop {
        out.push(s);
        match advance(&mut coord, target) {
            None => break,
            Some(ax) => {
                for a in ax + 1..target.len() {
                    s -= step[a] * (target[a] - 1);
                }
                s += step[ax];
            }
        }
    }
    out
}

/// Number of included entries per output group of a reduction over `axes`.
pub fn group_counts(shape: &[usize], axes: &[usize], mask: Option<&[bool]>) -> Result<Tensor, GraphError> {
    let numel: usize = shape.iter().product();
    if let Some(m) = mask {
        if m.len() != numel {
            return Err(GraphError::MaskLength {
                expected: numel,
                got: m.len(),
            });
        }
    }
    let mut axes = axes.to_vec();
    axes.sort_unstable();
    axes.dedup();
    let (out_shape, groups) = group_index(shape, &axes);
    let mut counts = vec![0.0; out_shape.iter().product()];
    for (i, &g) in groups.iter().enumerate() {
        if mask.is_none_or(|m| m[i]) {
            counts[g] += 1.0;
        }
    }
    Tensor::new(out_shape, counts)
}

/// Repeats a boolean mask the way [`Tape::broadcast`] repeats values.
pub fn broadcast_mask(
    mask: &[bool],
    src: &[usize],
    target: &[usize],
    axis_map: &[usize],
) -> Result<Vec<bool>, GraphError> {
    let bad = || GraphError::ShapeMismatch {
        op: "broadcast_mask",
        left: src.to_vec(),
        right: target.to_vec(),
    };
    if axis_map.len() != src.len() || mask.len() != src.iter().product::<usize>() {
        return Err(bad());
    }
    for (i, &t) in axis_map.iter().enumerate() {
        if t >= target.len() || target[t] != src[i] {
            return Err(bad());
        }
    }
    Ok(broadcast_index(src, target, axis_map)
        .into_iter()
        .map(|i| mask[i])
        .collect())
}
