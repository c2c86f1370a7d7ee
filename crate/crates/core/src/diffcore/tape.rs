//! Tape-recorded reverse-mode differentiation over [`Tensor`]s.
//!
//! Every primitive evaluates eagerly and appends a node to the tape. Node ids
//! are assigned in execution order, so walking the ids backwards visits the
//! graph in exact reverse topological order.
//!
//! Shape mismatches are programming errors and panic. A non-finite forward
//! value does not panic: the first offending primitive is remembered and
//! reported by [`Tape::check`] and [`Tape::backward`].

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::sync::Arc;

use super::params::{ParamId, ParamStore};
use super::tensor::{gemm, Tensor};
use super::DiffError;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Concat(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    SegmentSum(Var, Vec<usize>),
    SegmentMean(Var, Vec<usize>, Vec<usize>),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    LogSigmoid(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    Transpose(Var),
    Reshape(Var),
    MeanAxis(Var, usize),
    SumAll(Var),
    Affine(Var, f64),
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    /// Whether any parameter feeds into this node.
    needs_grad: bool,
}

impl Op {
    fn for_each_input(&self, mut f: impl FnMut(Var)) {
        match self {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::MulCol(a, b) => {
                f(*a);
                f(*b);
            }
            Op::Concat(parts) | Op::ConcatRows(parts) => parts.iter().for_each(|p| f(*p)),
            Op::SliceCols(a, _)
            | Op::GatherRows(a, _)
            | Op::SegmentSum(a, _)
            | Op::SegmentMean(a, _, _)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::LogSigmoid(a)
            | Op::SoftmaxRows(a)
            | Op::LogSoftmaxRows(a)
            | Op::Transpose(a)
            | Op::Reshape(a)
            | Op::MeanAxis(a, _)
            | Op::SumAll(a)
            | Op::Affine(a, _) => f(*a),
        }
    }
}

/// Records primitive operations and differentiates them.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    params: RefCell<HashMap<ParamId, Var>>,
    non_finite: Cell<Option<(usize, &'static str)>>,
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

    fn push(&self, value: Tensor, op: Op, name: &'static str) -> Var {
        self.push_arc(Arc::new(value), op, name)
    }

    fn push_arc(&self, value: Arc<Tensor>, op: Op, name: &'static str) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        if self.non_finite.get().is_none() && !value.is_finite() {
            self.non_finite.set(Some((id, name)));
        }
        let mut needs_grad = matches!(op, Op::Param(_));
        op.for_each_input(|v| needs_grad |= nodes[v.0].needs_grad);
        nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(id)
    }

    /// Forward value of `v`.
    pub fn value(&self, v: Var) -> Arc<Tensor> {
        Arc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes.borrow()[v.0].value.shape()
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes.borrow()[v.0].value.item()
    }

    /// Fails if any primitive so far produced a NaN or infinity.
    pub fn check(&self) -> Result<(), DiffError> {
        match self.non_finite.get() {
            Some((node, op)) => Err(DiffError::NonFinite { op, node }),
            None => Ok(()),
        }
    }

    /// Leaf that receives no gradient.
    pub fn constant(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, "constant")
    }

    /// Leaf whose gradient is reported by [`Tape::gradients`].
    pub fn variable(&self, value: Tensor) -> Var {
        let v = self.push(value, Op::Leaf, "variable");
        self.nodes.borrow_mut()[v.0].needs_grad = true;
        v
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same node.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.borrow().get(&id) {
            return v;
        }
        let v = self.push_arc(store.value_arc(id), Op::Param(id), "param");
        self.params.borrow_mut().insert(id, v);
        v
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let out = {
            let nodes = self.nodes.borrow();
            gemm(&nodes[a.0].value, false, &nodes[b.0].value, false)
        };
        self.push(out, Op::MatMul(a, b), "matmul")
    }

    fn binary(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let nodes = self.nodes.borrow();
        let (x, y) = (&nodes[a.0].value, &nodes[b.0].value);
        assert_eq!(
            x.shape(),
            y.shape(),
            "elementwise shape mismatch: {:?} vs {:?}",
            x.shape(),
            y.shape()
        );
        x.zip_map(y, f)
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let out = self.binary(a, b, |x, y| x + y);
        self.push(out, Op::Add(a, b), "add")
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let out = self.binary(a, b, |x, y| x - y);
        self.push(out, Op::Sub(a, b), "sub")
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        let out = self.binary(a, b, |x, y| x * y);
        self.push(out, Op::Mul(a, b), "mul")
    }

    /// Adds the `1 x c` row `bias` to every row of `a`.
    pub fn add_row(&self, a: Var, bias: Var) -> Var {
        let out = {
            let nodes = self.nodes.borrow();
            let (x, r) = (&nodes[a.0].value, &nodes[bias.0].value);
            assert!(
                r.rows() == 1 && r.cols() == x.cols(),
                "add_row shape mismatch: {:?} + {:?}",
                x.shape(),
                r.shape()
            );
            let mut out = (**x).clone();
            for i in 0..out.rows() {
                for (o, b) in out.row_slice_mut(i).iter_mut().zip(r.values()) {
                    *o += b;
                }
            }
            out
        };
        self.push(out, Op::AddRow(a, bias), "add_row")
    }

    /// Scales row `i` of `a` by entry `i` of the column `scale`.
    pub fn mul_col(&self, a: Var, scale: Var) -> Var {
        let out = {
            let nodes = self.nodes.borrow();
            let (x, s) = (&nodes[a.0].value, &nodes[scale.0].value);
            assert!(
                s.cols() == 1 && s.rows() == x.rows(),
                "mul_col shape mismatch: {:?} * {:?}",
                x.shape(),
                s.shape()
            );
            let mut out = (**x).clone();
            for i in 0..out.rows() {
                let k = s.values()[i];
                out.row_slice_mut(i).iter_mut().for_each(|o| *o *= k);
            }
            out
        };
        self.push(out, Op::MulCol(a, scale), "mul_col")
    }

    /// Column-wise concatenation.
    pub fn concat(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let out = {
            let nodes = self.nodes.borrow();
            let rows = nodes[parts[0].0].value.rows();
            let cols: usize = parts.iter().map(|p| nodes[p.0].value.cols()).sum();
            let mut out = Vec::with_capacity(rows * cols);
            for p in parts {
                assert_eq!(
                    nodes[p.0].value.rows(),
                    rows,
                    "concat row mismatch: {:?}",
                    parts
                        .iter()
                        .map(|q| nodes[q.0].value.shape())
                        .collect::<Vec<_>>()
                );
            }
            for i in 0..rows {
                for p in parts {
                    out.extend_from_slice(nodes[p.0].value.row_slice(i));
                }
            }
            Tensor::new(rows, cols, out)
        };
        self.push(out, Op::Concat(parts.to_vec()), "concat")
    }

    /// Stacks the parts vertically; all must have the same column count.
    pub fn concat_rows(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let out = {
            let nodes = self.nodes.borrow();
            let cols = nodes[parts[0].0].value.cols();
            let mut rows = 0;
            let mut out = Vec::new();
            for p in parts {
                let v = &nodes[p.0].value;
                assert_eq!(v.cols(), cols, "concat_rows column mismatch");
                rows += v.rows();
                out.extend_from_slice(v.values());
            }
            Tensor::new(rows, cols, out)
        };
        self.push(out, Op::ConcatRows(parts.to_vec()), "concat_rows")
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&self, a: Var, start: usize, end: usize) -> Var {
        let out = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            assert!(
                start <= end && end <= x.cols(),
                "slice {start}..{end} out of range for {:?}",
                x.shape()
            );
            let mut out = Vec::with_capacity(x.rows() * (end - start));
            for i in 0..x.rows() {
                out.extend_from_slice(&x.row_slice(i)[start..end]);
            }
            Tensor::new(x.rows(), end - start, out)
        };
        self.push(out, Op::SliceCols(a, start), "slice_cols")
    }

    /// Row `idx[k]` of `a` becomes row `k` of the output. Doubles as embedding lookup.
    pub fn gather_rows(&self, a: Var, idx: &[usize]) -> Var {
        let out = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            let mut out = Vec::with_capacity(idx.len() * x.cols());
            for &i in idx {
                assert!(
                    i < x.rows(),
                    "gather index {i} out of range for {:?}",
                    x.shape()
                );
                out.extend_from_slice(x.row_slice(i));
            }
            Tensor::new(idx.len(), x.cols(), out)
        };
        self.push(out, Op::GatherRows(a, idx.to_vec()), "gather_rows")
    }

    /// Sums rows of `a` into `segments` output rows; row `k` goes to `seg[k]`.
    pub fn segment_sum(&self, a: Var, seg: &[usize], segments: usize) -> Var {
        let out = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            assert_eq!(seg.len(), x.rows(), "segment ids must cover every row");
            let mut out = Tensor::zeros(segments, x.cols());
            for (k, &s) in seg.iter().enumerate() {
                assert!(s < segments, "segment id {s} >= {segments}");
                for (o, v) in out.row_slice_mut(s).iter_mut().zip(x.row_slice(k)) {
                    *o += v;
                }
            }
            out
        };
        self.push(out, Op::SegmentSum(a, seg.to_vec()), "segment_sum")
    }

    /// Mean of the rows in each segment; an empty segment yields a zero row.
    pub fn segment_mean(&self, a: Var, seg: &[usize], segments: usize) -> Var {
        let mut counts = vec![0usize; segments];
        for &s in seg {
            assert!(s < segments, "segment id {s} >= {segments}");
            counts[s] += 1;
        }
        let out = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            assert_eq!(seg.len(), x.rows(), "segment ids must cover every row");
            let mut out = Tensor::zeros(segments, x.cols());
            for (k, &s) in seg.iter().enumerate() {
                for (o, v) in out.row_slice_mut(s).iter_mut().zip(x.row_slice(k)) {
                    *o += v;
                }
            }
            for (s, &c) in counts.iter().enumerate() {
                if c > 1 {
                    let inv = 1.0 / c as f64;
                    out.row_slice_mut(s).iter_mut().for_each(|o| *o *= inv);
                }
            }
            out
        };
        self.push(
            out,
            Op::SegmentMean(a, seg.to_vec(), counts),
            "segment_mean",
        )
    }

    fn unary(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        self.nodes.borrow()[a.0].value.map(f)
    }

    pub fn relu(&self, a: Var) -> Var {
        let out = self.unary(a, |x| if x > 0.0 { x } else { 0.0 });
        self.push(out, Op::Relu(a), "relu")
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let out = self.unary(a, sigmoid);
        self.push(out, Op::Sigmoid(a), "sigmoid")
    }

    pub fn tanh(&self, a: Var) -> Var {
        let out = self.unary(a, f64::tanh);
        self.push(out, Op::Tanh(a), "tanh")
    }

    pub fn exp(&self, a: Var) -> Var {
        let out = self.unary(a, f64::exp);
        self.push(out, Op::Exp(a), "exp")
    }

    pub fn log(&self, a: Var) -> Var {
        let out = self.unary(a, f64::ln);
        self.push(out, Op::Log(a), "log")
    }

    /// `log(sigmoid(a))`, evaluated without overflow.
    pub fn log_sigmoid(&self, a: Var) -> Var {
        let out = self.unary(a, log_sigmoid);
        self.push(out, Op::LogSigmoid(a), "log_sigmoid")
    }

    /// Softmax along `axis` (0 normalizes columns, 1 normalizes rows).
    pub fn softmax(&self, a: Var, axis: usize) -> Var {
        match axis {
            1 => {
                let out = softmax_rows(&self.nodes.borrow()[a.0].value);
                self.push(out, Op::SoftmaxRows(a), "softmax")
            }
            0 => {
                let t = self.transpose(a);
                let s = self.softmax(t, 1);
                self.transpose(s)
            }
            _ => panic!("softmax axis must be 0 or 1"),
        }
    }

    /// Log-softmax along `axis`.
    pub fn log_softmax(&self, a: Var, axis: usize) -> Var {
        match axis {
            1 => {
                let out = log_softmax_rows(&self.nodes.borrow()[a.0].value);
                self.push(out, Op::LogSoftmaxRows(a), "log_softmax")
            }
            0 => {
                let t = self.transpose(a);
                let s = self.log_softmax(t, 1);
                self.transpose(s)
            }
            _ => panic!("log_softmax axis must be 0 or 1"),
        }
    }

    pub fn transpose(&self, a: Var) -> Var {
        let out = self.nodes.borrow()[a.0].value.transpose();
        self.push(out, Op::Transpose(a), "transpose")
    }

    pub fn reshape(&self, a: Var, rows: usize, cols: usize) -> Var {
        let out = self.nodes.borrow()[a.0].value.reshape(rows, cols);
        self.push(out, Op::Reshape(a), "reshape")
    }

    /// Mean along `axis`: 0 gives a `1 x c` row, 1 gives an `r x 1` column.
    pub fn mean_axis(&self, a: Var, axis: usize) -> Var {
        let out = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            let [r, c] = x.shape();
            match axis {
                0 => {
                    assert!(r > 0, "mean over empty axis");
                    let mut out = vec![0.0; c];
                    for i in 0..r {
                        for (o, v) in out.iter_mut().zip(x.row_slice(i)) {
                            *o += v;
                        }
                    }
                    out.iter_mut().for_each(|o| *o /= r as f64);
                    Tensor::new(1, c, out)
                }
                1 => {
                    assert!(c > 0, "mean over empty axis");
                    Tensor::new(
                        r,
                        1,
                        (0..r)
                            .map(|i| x.row_slice(i).iter().sum::<f64>() / c as f64)
                            .collect(),
                    )
                }
                _ => panic!("mean axis must be 0 or 1"),
            }
        };
        self.push(out, Op::MeanAxis(a, axis), "mean_axis")
    }

    /// Sum of every entry, as a `1 x 1` tensor.
    pub fn sum(&self, a: Var) -> Var {
        let s = self.nodes.borrow()[a.0].value.values().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a), "sum")
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&self, a: Var, scale: f64, shift: f64) -> Var {
        let out = self.unary(a, |x| scale * x + shift);
        self.push(out, Op::Affine(a, scale), "affine")
    }

    pub fn scale(&self, a: Var, k: f64) -> Var {
        self.affine(a, k, 0.0)
    }

    /// Sum of the given nodes, all of identical shape.
    pub fn add_all(&self, terms: &[Var]) -> Option<Var> {
        let mut it = terms.iter();
        let first = *it.next()?;
        Some(it.fold(first, |acc, &t| self.add(acc, t)))
    }

    /// Gradients of `loss` with respect to every node, indexed by node id.
    pub fn gradients(&self, loss: Var) -> Result<Vec<Option<Tensor>>, DiffError> {
        self.check()?;
        let nodes = self.nodes.borrow();
        let shape = nodes[loss.0].value.shape();
        if shape != [1, 1] {
            return Err(DiffError::NotScalar { shape });
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for id in (0..=loss.0).rev() {
            if !nodes[id].needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            propagate(&nodes, node, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(grads)
    }

    /// Reverse pass from the scalar `loss`, adding parameter gradients into `store`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<(), DiffError> {
        let grads = self.gradients(loss)?;
        let nodes = self.nodes.borrow();
        for (id, g) in grads.into_iter().enumerate() {
            if let (Op::Param(pid), Some(g)) = (&nodes[id].op, g) {
                store.accumulate_grad(*pid, &g);
            }
        }
        Ok(())
    }
}

fn accumulate(nodes: &[Node], grads: &mut [Option<Tensor>], v: Var, g: impl FnOnce() -> Tensor) {
    if !nodes[v.0].needs_grad {
        return;
    }
    let g = g();
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn propagate(nodes: &[Node], node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let val = |v: Var| -> &Tensor { &nodes[v.0].value };
    let y = &node.value;
    match &node.op {
        Op::Leaf | Op::Param(_) => {}
        Op::MatMul(a, b) => {
            accumulate(nodes, grads, *a, || gemm(g, false, val(*b), true));
            accumulate(nodes, grads, *b, || gemm(val(*a), true, g, false));
        }
        Op::Add(a, b) => {
            accumulate(nodes, grads, *a, || g.clone());
            accumulate(nodes, grads, *b, || g.clone());
        }
        Op::Sub(a, b) => {
            accumulate(nodes, grads, *a, || g.clone());
            accumulate(nodes, grads, *b, || g.map(|x| -x));
        }
        Op::Mul(a, b) => {
            accumulate(nodes, grads, *a, || g.zip_map(val(*b), |x, y| x * y));
            accumulate(nodes, grads, *b, || g.zip_map(val(*a), |x, y| x * y));
        }
        Op::AddRow(a, bias) => {
            accumulate(nodes, grads, *a, || g.clone());
            let mut col_sums = vec![0.0; g.cols()];
            for i in 0..g.rows() {
                for (s, v) in col_sums.iter_mut().zip(g.row_slice(i)) {
                    *s += v;
                }
            }
            accumulate(nodes, grads, *bias, || Tensor::row(col_sums));
        }
        Op::MulCol(a, scale) => {
            let x = val(*a);
            let s = val(*scale);
            let mut ga = g.clone();
            let mut gs = vec![0.0; g.rows()];
            for i in 0..g.rows() {
                let k = s.values()[i];
                gs[i] = g
                    .row_slice(i)
                    .iter()
                    .zip(x.row_slice(i))
                    .map(|(gv, xv)| gv * xv)
                    .sum();
                ga.row_slice_mut(i).iter_mut().for_each(|v| *v *= k);
            }
            accumulate(nodes, grads, *a, || ga);
            accumulate(nodes, grads, *scale, || Tensor::column(gs));
        }
        Op::Concat(parts) => {
            let mut offset = 0;
            for p in parts {
                let c = val(*p).cols();
                accumulate(nodes, grads, *p, || {
                    let mut out = Vec::with_capacity(g.rows() * c);
                    for i in 0..g.rows() {
                        out.extend_from_slice(&g.row_slice(i)[offset..offset + c]);
                    }
                    Tensor::new(g.rows(), c, out)
                });
                offset += c;
            }
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for p in parts {
                let n = val(*p).len();
                let [r, c] = val(*p).shape();
                accumulate(nodes, grads, *p, || {
                    Tensor::new(r, c, g.values()[offset..offset + n].to_vec())
                });
                offset += n;
            }
        }
        Op::SliceCols(a, start) => {
            let x = val(*a);
            let mut out = Tensor::zeros(x.rows(), x.cols());
            for i in 0..g.rows() {
                out.row_slice_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row_slice(i));
            }
            accumulate(nodes, grads, *a, || out);
        }
        Op::GatherRows(a, idx) => {
            let x = val(*a);
            let mut out = Tensor::zeros(x.rows(), x.cols());
            for (k, &i) in idx.iter().enumerate() {
                for (o, v) in out.row_slice_mut(i).iter_mut().zip(g.row_slice(k)) {
                    *o += v;
                }
            }
            accumulate(nodes, grads, *a, || out);
        }
        Op::SegmentSum(a, seg) => {
            let mut out = Vec::with_capacity(seg.len() * g.cols());
            for &s in seg {
                out.extend_from_slice(g.row_slice(s));
            }
            accumulate(nodes, grads, *a, || Tensor::new(seg.len(), g.cols(), out));
        }
        Op::SegmentMean(a, seg, counts) => {
            let mut out = Vec::with_capacity(seg.len() * g.cols());
            for &s in seg {
                let inv = 1.0 / counts[s] as f64;
                out.extend(g.row_slice(s).iter().map(|v| v * inv));
            }
            accumulate(nodes, grads, *a, || Tensor::new(seg.len(), g.cols(), out));
        }
        Op::Relu(a) => {
            let x = val(*a);
            accumulate(nodes, grads, *a, || {
                g.zip_map(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 })
            });
        }
        Op::Sigmoid(a) => {
            accumulate(nodes, grads, *a, || {
                g.zip_map(y, |gv, s| gv * s * (1.0 - s))
            });
        }
        Op::Tanh(a) => {
            accumulate(nodes, grads, *a, || {
                g.zip_map(y, |gv, t| gv * (1.0 - t * t))
            });
        }
        Op::Exp(a) => {
            accumulate(nodes, grads, *a, || g.zip_map(y, |gv, e| gv * e));
        }
        Op::Log(a) => {
            accumulate(nodes, grads, *a, || g.zip_map(val(*a), |gv, x| gv / x));
        }
        Op::LogSigmoid(a) => {
            accumulate(nodes, grads, *a, || {
                g.zip_map(val(*a), |gv, x| gv * sigmoid(-x))
            });
        }
        Op::SoftmaxRows(a) => {
            let mut out = Tensor::zeros(y.rows(), y.cols());
            for i in 0..y.rows() {
                let (yr, gr) = (y.row_slice(i), g.row_slice(i));
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                for ((o, yv), gv) in out.row_slice_mut(i).iter_mut().zip(yr).zip(gr) {
                    *o = yv * (gv - dot);
                }
            }
            accumulate(nodes, grads, *a, || out);
        }
        Op::LogSoftmaxRows(a) => {
            let mut out = Tensor::zeros(y.rows(), y.cols());
            for i in 0..y.rows() {
                let (yr, gr) = (y.row_slice(i), g.row_slice(i));
                let total: f64 = gr.iter().sum();
                for ((o, yv), gv) in out.row_slice_mut(i).iter_mut().zip(yr).zip(gr) {
                    *o = gv - yv.exp() * total;
                }
            }
            accumulate(nodes, grads, *a, || out);
        }
        Op::Transpose(a) => accumulate(nodes, grads, *a, || g.transpose()),
        Op::Reshape(a) => {
            let [r, c] = val(*a).shape();
            accumulate(nodes, grads, *a, || g.reshape(r, c));
        }
        Op::MeanAxis(a, axis) => {
            let [r, c] = val(*a).shape();
            let mut out = Tensor::zeros(r, c);
            for i in 0..r {
                for j in 0..c {
                    let v = if *axis == 0 {
                        g.get(0, j) / r as f64
                    } else {
                        g.get(i, 0) / c as f64
                    };
                    out.set(i, j, v);
                }
            }
            accumulate(nodes, grads, *a, || out);
        }
        Op::SumAll(a) => {
            let [r, c] = val(*a).shape();
            accumulate(nodes, grads, *a, || Tensor::filled(r, c, g.item()));
        }
        Op::Affine(a, scale) => {
            let k = *scale;
            accumulate(nodes, grads, *a, || g.map(|v| v * k));
        }
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

pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_slice_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}

fn log_softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_slice_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    out
}
