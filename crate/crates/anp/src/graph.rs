//! Define-by-run reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every primitive operation as it runs; [`Graph::backward`]
//! replays the record in reverse to produce exact adjoints for every leaf.
//! Graphs are rebuilt per step (context and target sizes vary per episode),
//! single-threaded by construction.

use std::cell::RefCell;
use std::rc::Rc;

use crate::tensor::{sigmoid, Tensor};

#[derive(Clone, Default)]
pub struct Graph {
    inner: Rc<RefCell<Vec<Node>>>,
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

enum Op {
    Leaf,
    Constant,
    MatMul(usize, usize),
    MatMulBT(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    ScalarMul(usize, f64),
    ScalarAdd(usize),
    Relu(usize),
    Sigmoid(usize),
    Softplus(usize),
    Exp(usize),
    Ln(usize),
    SoftmaxRows(usize),
    MeanRows(usize),
    SumRows(usize),
    MeanAll(usize),
    SumAll(usize),
    RepeatRows(usize),
    SliceCols(usize, usize, usize),
    ConcatCols(Vec<usize>),
    L1Dist(usize, usize),
}

/// Handle to a node on a [`Graph`].
#[derive(Clone)]
pub struct Var {
    graph: Graph,
    idx: usize,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    /// Trainable input: participates in `backward`.
    pub fn leaf(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-trainable input: carried on the graph but receives no adjoint.
    pub fn constant(&self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.borrow().is_empty()
    }

    fn push(&self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        let mut nodes = self.inner.borrow_mut();
        nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var {
            graph: self.clone(),
            idx: nodes.len() - 1,
        }
    }

    fn record(&self, value: Tensor, op: Op, parents: &[usize]) -> Var {
        value.debug_check_finite(op_name(&op));
        let needs_grad = {
            let nodes = self.inner.borrow();
            parents.iter().any(|&p| nodes[p].needs_grad)
        };
        self.push(value, op, needs_grad)
    }

    fn value_of<R>(&self, idx: usize, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.inner.borrow()[idx].value)
    }

    /// Reverse pass from a scalar loss. Visits each recorded node exactly
    /// once in reverse topological order.
    pub fn backward(&self, loss: &Var) -> Gradients {
        assert!(
            Rc::ptr_eq(&self.inner, &loss.graph.inner),
            "backward: loss is not on this graph"
        );
        let nodes = self.inner.borrow();
        assert_eq!(
            nodes[loss.idx].value.shape(),
            (1, 1),
            "backward: loss must be scalar, got [{}, {}]",
            nodes[loss.idx].value.rows(),
            nodes[loss.idx].value.cols()
        );
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.idx] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.idx).rev() {
            if !nodes[i].needs_grad {
                grads[i] = None;
                continue;
            }
            if matches!(nodes[i].op, Op::Leaf | Op::Constant) {
                continue; // keep accumulated gradient for leaves
            }
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            let mut acc = |idx: usize, t: Tensor| {
                if !nodes[idx].needs_grad {
                    return;
                }
                match &mut grads[idx] {
                    Some(existing) => *existing = existing.add(&t),
                    slot @ None => *slot = Some(t),
                }
            };
            let val = |idx: usize| &nodes[idx].value;
            match &nodes[i].op {
                Op::Leaf | Op::Constant => unreachable!(),
                Op::MatMul(a, b) => {
                    acc(*a, g.matmul_bt(val(*b)));
                    acc(*b, val(*a).matmul_at(&g));
                }
                Op::MatMulBT(a, b) => {
                    // c = a b^T: dc/da = g b, dc/db = g^T a
                    acc(*a, g.matmul(val(*b)));
                    acc(*b, g.matmul_at(val(*a)));
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::AddRow(a, b) => {
                    acc(*b, g.sum_rows());
                    acc(*a, g);
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.scale(-1.0));
                }
                Op::Mul(a, b) => {
                    acc(*a, g.mul(val(*b)));
                    acc(*b, g.mul(val(*a)));
                }
                Op::Div(a, b) => {
                    let bv = val(*b);
                    acc(*a, g.div(bv));
                    acc(*b, g.mul(val(*a)).div(bv).div(bv).scale(-1.0));
                }
                Op::ScalarMul(a, c) => acc(*a, g.scale(*c)),
                Op::ScalarAdd(a) => acc(*a, g),
                Op::Relu(a) => {
                    acc(*a, g.zip_map(val(*a), "relu_grad", |gx, x| if x > 0.0 { gx } else { 0.0 }));
                }
                Op::Sigmoid(a) => {
                    let out = &nodes[i].value;
                    acc(*a, g.zip_map(out, "sigmoid_grad", |gx, s| gx * s * (1.0 - s)));
                }
                Op::Softplus(a) => {
                    acc(*a, g.zip_map(val(*a), "softplus_grad", |gx, x| gx * sigmoid(x)));
                }
                Op::Exp(a) => acc(*a, g.mul(&nodes[i].value)),
                Op::Ln(a) => acc(*a, g.div(val(*a))),
                Op::SoftmaxRows(a) => {
                    let s = &nodes[i].value;
                    let mut da = Tensor::zeros(s.rows(), s.cols());
                    for r in 0..s.rows() {
                        let srow = s.row(r);
                        let grow = g.row(r);
                        let dot: f64 = srow.iter().zip(grow).map(|(a, b)| a * b).sum();
                        for c in 0..s.cols() {
                            da.set(r, c, srow[c] * (grow[c] - dot));
                        }
                    }
                    acc(*a, da);
                }
                Op::MeanRows(a) => {
                    let r = val(*a).rows();
                    acc(*a, g.scale(1.0 / r as f64).repeat_rows(r));
                }
                Op::SumRows(a) => {
                    let r = val(*a).rows();
                    acc(*a, g.repeat_rows(r));
                }
                Op::MeanAll(a) => {
                    let (r, c) = val(*a).shape();
                    acc(*a, Tensor::filled(r, c, g.item() / (r * c) as f64));
                }
                Op::SumAll(a) => {
                    let (r, c) = val(*a).shape();
                    acc(*a, Tensor::filled(r, c, g.item()));
                }
                Op::RepeatRows(a) => acc(*a, g.sum_rows()),
                Op::SliceCols(a, start, _end) => {
                    let (r, c) = val(*a).shape();
                    let mut da = Tensor::zeros(r, c);
                    for row in 0..r {
                        for col in 0..g.cols() {
                            da.set(row, start + col, g.get(row, col));
                        }
                    }
                    acc(*a, da);
                }
                Op::ConcatCols(parts) => {
                    let parts = parts.clone();
                    let mut start = 0;
                    for p in parts {
                        let w = val(p).cols();
                        acc(p, g.slice_cols(start, start + w));
                        start += w;
                    }
                }
                Op::L1Dist(q, k) => {
                    let qv = val(*q);
                    let kv = val(*k);
                    let mut dq = Tensor::zeros(qv.rows(), qv.cols());
                    let mut dk = Tensor::zeros(kv.rows(), kv.cols());
                    for i1 in 0..qv.rows() {
                        for j1 in 0..kv.rows() {
                            let gij = g.get(i1, j1);
                            if gij == 0.0 {
                                continue;
                            }
                            for d in 0..qv.cols() {
                                let diff = qv.get(i1, d) - kv.get(j1, d);
                                let s = if diff > 0.0 {
                                    1.0
                                } else if diff < 0.0 {
                                    -1.0
                                } else {
                                    0.0
                                };
                                dq.set(i1, d, dq.get(i1, d) + gij * s);
                                dk.set(j1, d, dk.get(j1, d) - gij * s);
                            }
                        }
                    }
                    acc(*q, dq);
                    acc(*k, dk);
                }
            }
        }
        Gradients { grads }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Constant => "constant",
        Op::MatMul(..) => "matmul",
        Op::MatMulBT(..) => "matmul_t",
        Op::Add(..) => "add",
        Op::AddRow(..) => "add_row",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Div(..) => "div",
        Op::ScalarMul(..) => "scale",
        Op::ScalarAdd(..) => "offset",
        Op::Relu(..) => "relu",
        Op::Sigmoid(..) => "sigmoid",
        Op::Softplus(..) => "softplus",
        Op::Exp(..) => "exp",
        Op::Ln(..) => "ln",
        Op::SoftmaxRows(..) => "softmax_rows",
        Op::MeanRows(..) => "mean_rows",
        Op::SumRows(..) => "sum_rows",
        Op::MeanAll(..) => "mean_all",
        Op::SumAll(..) => "sum_all",
        Op::RepeatRows(..) => "repeat_rows",
        Op::SliceCols(..) => "slice_cols",
        Op::ConcatCols(..) => "concat_cols",
        Op::L1Dist(..) => "l1_dist",
    }
}

/// Adjoints produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: &Var) -> Option<&Tensor> {
        self.grads.get(v.idx).and_then(|g| g.as_ref())
    }
}

impl Var {
    pub fn value(&self) -> Tensor {
        self.graph.value_of(self.idx, |t| t.clone())
    }

    pub fn shape(&self) -> (usize, usize) {
        self.graph.value_of(self.idx, |t| t.shape())
    }

    pub fn item(&self) -> f64 {
        self.graph.value_of(self.idx, |t| t.item())
    }

    fn same_graph(&self, other: &Var) {
        assert!(
            Rc::ptr_eq(&self.graph.inner, &other.graph.inner),
            "operands recorded on different graphs"
        );
    }

    fn unary(&self, f: impl FnOnce(&Tensor) -> Tensor, op: impl FnOnce(usize) -> Op) -> Var {
        let value = self.graph.value_of(self.idx, f);
        self.graph.record(value, op(self.idx), &[self.idx])
    }

    fn binary(
        &self,
        other: &Var,
        f: impl FnOnce(&Tensor, &Tensor) -> Tensor,
        op: impl FnOnce(usize, usize) -> Op,
    ) -> Var {
        self.same_graph(other);
        let value = {
            let nodes = self.graph.inner.borrow();
            f(&nodes[self.idx].value, &nodes[other.idx].value)
        };
        self.graph
            .record(value, op(self.idx, other.idx), &[self.idx, other.idx])
    }

    pub fn matmul(&self, other: &Var) -> Var {
        self.binary(other, |a, b| a.matmul(b), Op::MatMul)
    }

    /// `self @ other^T` without materializing the transpose.
    pub fn matmul_t(&self, other: &Var) -> Var {
        self.binary(other, |a, b| a.matmul_bt(b), Op::MatMulBT)
    }

    pub fn add(&self, other: &Var) -> Var {
        self.binary(other, |a, b| a.add(b), Op::Add)
    }

    /// Broadcast-add a `[1, c]` bias row to every row.
    pub fn add_row(&self, row: &Var) -> Var {
        self.binary(row, |a, b| a.add_row(b), Op::AddRow)
    }

    pub fn sub(&self, other: &Var) -> Var {
        self.binary(other, |a, b| a.sub(b), Op::Sub)
    }

    pub fn mul(&self, other: &Var) -> Var {
        self.binary(other, |a, b| a.mul(b), Op::Mul)
    }

    pub fn div(&self, other: &Var) -> Var {
        self.binary(other, |a, b| a.div(b), Op::Div)
    }

    pub fn scale(&self, c: f64) -> Var {
        self.unary(|a| a.scale(c), |i| Op::ScalarMul(i, c))
    }

    pub fn offset(&self, c: f64) -> Var {
        self.unary(|a| a.offset(c), Op::ScalarAdd)
    }

    pub fn relu(&self) -> Var {
        self.unary(|a| a.relu(), Op::Relu)
    }

    pub fn sigmoid(&self) -> Var {
        self.unary(|a| a.sigmoid(), Op::Sigmoid)
    }

    pub fn softplus(&self) -> Var {
        self.unary(|a| a.softplus(), Op::Softplus)
    }

    pub fn exp(&self) -> Var {
        self.unary(|a| a.exp_elem(), Op::Exp)
    }

    pub fn ln(&self) -> Var {
        self.unary(|a| a.ln_elem(), Op::Ln)
    }

    pub fn softmax_rows(&self) -> Var {
        self.unary(|a| a.softmax_rows(), Op::SoftmaxRows)
    }

    pub fn mean_rows(&self) -> Var {
        self.unary(|a| a.mean_rows(), Op::MeanRows)
    }

    pub fn sum_rows(&self) -> Var {
        self.unary(|a| a.sum_rows(), Op::SumRows)
    }

    pub fn mean_all(&self) -> Var {
        self.unary(|a| Tensor::scalar(a.mean_all()), Op::MeanAll)
    }

    pub fn sum_all(&self) -> Var {
        self.unary(|a| Tensor::scalar(a.sum_all()), Op::SumAll)
    }

    pub fn repeat_rows(&self, m: usize) -> Var {
        self.unary(|a| a.repeat_rows(m), Op::RepeatRows)
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Var {
        self.unary(|a| a.slice_cols(start, end), |i| Op::SliceCols(i, start, end))
    }

    pub fn l1_dist(&self, other: &Var) -> Var {
        self.binary(other, |a, b| a.l1_dist(b), Op::L1Dist)
    }

    pub fn square(&self) -> Var {
        self.mul(self)
    }
}

pub fn concat_cols(parts: &[&Var]) -> Var {
    assert!(!parts.is_empty(), "concat_cols: no inputs");
    let graph = parts[0].graph.clone();
    for p in parts {
        parts[0].same_graph(p);
    }
    let idxs: Vec<usize> = parts.iter().map(|p| p.idx).collect();
    let value = {
        let nodes = graph.inner.borrow();
        let tensors: Vec<&Tensor> = idxs.iter().map(|&i| &nodes[i].value).collect();
        Tensor::concat_cols(&tensors)
    };
    graph.record(value, Op::ConcatCols(idxs.clone()), &idxs)
}
