//! Reverse-mode autodiff over 2-D f64 tensors.
//!
//! A [`Graph`] is a define-by-run tape: every operation evaluates eagerly
//! and records how it was built. [`Graph::backward`] walks the tape in
//! reverse and *emits new graph nodes* for the gradients, so gradients are
//! themselves differentiable — calling `backward` on a scalar built from
//! gradient nodes yields second-order gradients. The gradient-penalty
//! terms of the adversarial losses rely on this.
//!
//! Graphs are cheap, single-threaded, and built per batch element; shared
//! parameters enter each graph as leaves.

use ndarray::{concatenate, s, Array2, Axis};
use std::rc::Rc;

pub type Arr = Array2<f64>;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Var(usize);

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    Matmul(Var, Var),
    Transpose(Var),
    Exp(Var),
    Ln(Var),
    Tanh(Var),
    Sigmoid(Var),
    Sqrt(Var),
    Relu(Var),
    SumAll(Var),
    Broadcast(Var),
    SumRows(Var),
    RepeatRow(Var),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    PadRows(Var, usize),
    PadCols(Var, usize),
    RowSelect(Var, Rc<Vec<usize>>),
    RowScatterAdd(Var, Rc<Vec<usize>>),
    Cell(Var, usize, usize),
    CellScatter(Var, usize, usize),
    MulMask(Var, Rc<Arr>),
}

struct Node {
    op: Op,
    value: Arr,
    needs_grad: bool,
}

/// Define-by-run computation graph.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Arr, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Differentiable leaf (a parameter or an input we want gradients for).
    pub fn param(&mut self, value: Arr) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Arr) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.constant(Arr::from_elem((1, 1), x))
    }

    pub fn value(&self, v: Var) -> &Arr {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        let a = self.value(v);
        assert_eq!(a.dim(), (1, 1), "scalar_value on non-scalar");
        a[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    // ---- elementwise ----

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let v = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(Op::Add(a, b), v, self.ng(a) || self.ng(b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub shape mismatch");
        let v = &self.nodes[a.0].value - &self.nodes[b.0].value;
        self.push(Op::Sub(a, b), v, self.ng(a) || self.ng(b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shape mismatch");
        let v = &self.nodes[a.0].value * &self.nodes[b.0].value;
        self.push(Op::Mul(a, b), v, self.ng(a) || self.ng(b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "div shape mismatch");
        let v = &self.nodes[a.0].value / &self.nodes[b.0].value;
        self.push(Op::Div(a, b), v, self.ng(a) || self.ng(b))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| -x);
        self.push(Op::Neg(a), v, self.ng(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| c * x);
        self.push(Op::Scale(a, c), v, self.ng(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(f64::exp);
        self.push(Op::Exp(a), v, self.ng(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(f64::ln);
        self.push(Op::Ln(a), v, self.ng(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(f64::tanh);
        self.push(Op::Tanh(a), v, self.ng(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(Op::Sigmoid(a), v, self.ng(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(f64::sqrt);
        self.push(Op::Sqrt(a), v, self.ng(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| x.max(0.0));
        self.push(Op::Relu(a), v, self.ng(a))
    }

    /// Elementwise product with a constant mask.
    pub fn mul_mask(&mut self, a: Var, mask: Rc<Arr>) -> Var {
        assert_eq!(self.shape(a), mask.dim(), "mask shape mismatch");
        let v = &self.nodes[a.0].value * &*mask;
        self.push(Op::MulMask(a, mask), v, self.ng(a))
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        assert_eq!(ac, br, "matmul inner dims: {ar}x{ac} . {br}x{bc}");
        let v = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        self.push(Op::Matmul(a, b), v, self.ng(a) || self.ng(b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.t().to_owned();
        self.push(Op::Transpose(a), v, self.ng(a))
    }

    // ---- reductions and broadcasts ----

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Arr::from_elem((1, 1), self.nodes[a.0].value.sum());
        self.push(Op::SumAll(a), v, self.ng(a))
    }

    /// 1x1 -> r x c, replicating the scalar.
    pub fn broadcast(&mut self, a: Var, r: usize, c: usize) -> Var {
        assert_eq!(self.shape(a), (1, 1), "broadcast source must be scalar");
        let v = Arr::from_elem((r, c), self.nodes[a.0].value[[0, 0]]);
        self.push(Op::Broadcast(a), v, self.ng(a))
    }

    /// RxC -> 1xC column sums.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0]
            .value
            .sum_axis(Axis(0))
            .insert_axis(Axis(0))
            .to_owned();
        self.push(Op::SumRows(a), v, self.ng(a))
    }

    /// 1xC -> RxC, replicating the row.
    pub fn repeat_row(&mut self, a: Var, r: usize) -> Var {
        let (ar, c) = self.shape(a);
        assert_eq!(ar, 1, "repeat_row source must be a row");
        let row = self.nodes[a.0].value.row(0).to_owned();
        let mut v = Arr::zeros((r, c));
        for mut out in v.rows_mut() {
            out.assign(&row);
        }
        self.push(Op::RepeatRow(a), v, self.ng(a))
    }

    // ---- structural ----

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|v| self.nodes[v.0].value.view()).collect();
        let v = concatenate(Axis(0), &views).expect("concat_rows");
        let ng = parts.iter().any(|p| self.ng(*p));
        self.push(Op::ConcatRows(parts.to_vec()), v, ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|v| self.nodes[v.0].value.view()).collect();
        let v = concatenate(Axis(1), &views).expect("concat_cols");
        let ng = parts.iter().any(|p| self.ng(*p));
        self.push(Op::ConcatCols(parts.to_vec()), v, ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let (r, _) = self.shape(a);
        assert!(start < end && end <= r, "slice_rows {start}..{end} of {r}");
        let v = self.nodes[a.0].value.slice(s![start..end, ..]).to_owned();
        self.push(Op::SliceRows(a, start), v, self.ng(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let (_, c) = self.shape(a);
        assert!(start < end && end <= c, "slice_cols {start}..{end} of {c}");
        let v = self.nodes[a.0].value.slice(s![.., start..end]).to_owned();
        self.push(Op::SliceCols(a, start), v, self.ng(a))
    }

    /// Embeds `a` into a zero matrix of `total` rows at row `offset`.
    pub fn pad_rows(&mut self, a: Var, total: usize, offset: usize) -> Var {
        let (r, c) = self.shape(a);
        assert!(offset + r <= total);
        let mut v = Arr::zeros((total, c));
        v.slice_mut(s![offset..offset + r, ..])
            .assign(&self.nodes[a.0].value);
        self.push(Op::PadRows(a, offset), v, self.ng(a))
    }

    pub fn pad_cols(&mut self, a: Var, total: usize, offset: usize) -> Var {
        let (r, c) = self.shape(a);
        assert!(offset + c <= total);
        let mut v = Arr::zeros((r, total));
        v.slice_mut(s![.., offset..offset + c])
            .assign(&self.nodes[a.0].value);
        self.push(Op::PadCols(a, offset), v, self.ng(a))
    }

    /// Gathers rows of a table: `ids.len() x C`. Used for embedding lookup.
    pub fn row_select(&mut self, table: Var, ids: Rc<Vec<usize>>) -> Var {
        let (r, c) = self.shape(table);
        assert!(!ids.is_empty());
        let mut v = Arr::zeros((ids.len(), c));
        for (i, &id) in ids.iter().enumerate() {
            assert!(id < r, "row_select id {id} out of {r}");
            v.row_mut(i).assign(&self.nodes[table.0].value.row(id));
        }
        self.push(Op::RowSelect(table, ids), v, self.ng(table))
    }

    /// Scatters rows of `a` into a zero matrix of `total` rows, summing
    /// duplicates. Adjoint of `row_select`; also aggregates copy-attention
    /// mass per token id.
    pub fn row_scatter_add(&mut self, a: Var, ids: Rc<Vec<usize>>, total: usize) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(r, ids.len(), "row_scatter_add id count");
        let mut v = Arr::zeros((total, c));
        for (i, &id) in ids.iter().enumerate() {
            assert!(id < total);
            let row = self.nodes[a.0].value.row(i).to_owned();
            let mut dst = v.row_mut(id);
            dst += &row;
        }
        self.push(Op::RowScatterAdd(a, ids), v, self.ng(a))
    }

    /// Extracts a single entry as a 1x1.
    pub fn cell(&mut self, a: Var, i: usize, j: usize) -> Var {
        let (r, c) = self.shape(a);
        assert!(i < r && j < c);
        let v = Arr::from_elem((1, 1), self.nodes[a.0].value[[i, j]]);
        self.push(Op::Cell(a, i, j), v, self.ng(a))
    }

    /// Embeds a 1x1 into a zero (r x c) matrix at (i, j).
    pub fn cell_scatter(&mut self, a: Var, i: usize, j: usize, r: usize, c: usize) -> Var {
        assert_eq!(self.shape(a), (1, 1));
        let mut v = Arr::zeros((r, c));
        v[[i, j]] = self.nodes[a.0].value[[0, 0]];
        self.push(Op::CellScatter(a, i, j), v, self.ng(a))
    }

    // ---- composites ----

    /// Row-wise softmax of a 1xC row. Subtracts the (detached) row max
    /// before exponentiating; softmax is shift-invariant so the gradient
    /// is unaffected.
    pub fn softmax_row(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(r, 1, "softmax_row expects a single row");
        let m = self.value(a).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let shift = self.constant(Arr::from_elem((1, c), m));
        let z = self.sub(a, shift);
        let e = self.exp(z);
        let s = self.sum_all(e);
        let sb = self.broadcast(s, 1, c);
        self.div(e, sb)
    }

    /// L2 norm of all entries: sqrt(sum(a*a)).
    pub fn norm2(&mut self, a: Var) -> Var {
        let sq = self.mul(a, a);
        let s = self.sum_all(sq);
        self.sqrt(s)
    }

    /// x·W + b for a 1xA row, with b a 1xB row.
    pub fn affine_row(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add(xw, b)
    }

    /// Mean of all entries.
    pub fn mean_all(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let s = self.sum_all(a);
        self.scale(s, 1.0 / (r * c) as f64)
    }

    // ---- backward ----

    /// Builds gradient nodes of scalar `y` with respect to each var in
    /// `wrt`, returning them in order. Vars with no path to `y` get zero
    /// gradients. The returned vars live in the same graph and are
    /// differentiable in turn.
    pub fn backward(&mut self, y: Var, wrt: &[Var]) -> Vec<Var> {
        assert_eq!(self.shape(y), (1, 1), "backward target must be scalar");
        let mut adj: Vec<Option<Var>> = vec![None; y.0 + 1];
        let seed = self.constant(Arr::from_elem((1, 1), 1.0));
        adj[y.0] = Some(seed);

        for idx in (0..=y.0).rev() {
            let dz = match adj[idx] {
                Some(v) => v,
                None => continue,
            };
            if !self.nodes[idx].needs_grad {
                continue;
            }
            self.emit_vjps(idx, dz, &mut adj);
        }

        wrt.iter()
            .map(|w| match adj.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let (r, c) = self.shape(*w);
                    self.constant(Arr::zeros((r, c)))
                }
            })
            .collect()
    }

    fn accumulate(&mut self, adj: &mut [Option<Var>], target: Var, grad: Var) {
        if !self.nodes[target.0].needs_grad {
            return;
        }
        adj[target.0] = Some(match adj[target.0] {
            Some(existing) => self.add(existing, grad),
            None => grad,
        });
    }

    fn emit_vjps(&mut self, idx: usize, dz: Var, adj: &mut [Option<Var>]) {
        // Clone the lightweight op description so we can mutate self.
        enum D {
            One(Var, Var),
            Two(Var, Var, Var, Var),
            Many(Vec<(Var, Var)>),
            None,
        }
        let out = Var(idx);
        let d = match &self.nodes[idx].op {
            Op::Leaf => D::None,
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                D::Two(a, dz, b, dz)
            }
            Op::Sub(a, b) => {
                let (a, b) = (*a, *b);
                let ndz = self.neg(dz);
                D::Two(a, dz, b, ndz)
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                let da = self.mul(dz, b);
                let db = self.mul(dz, a);
                D::Two(a, da, b, db)
            }
            Op::Div(a, b) => {
                let (a, b) = (*a, *b);
                let da = self.div(dz, b);
                let num = self.mul(dz, a);
                let den = self.mul(b, b);
                let q = self.div(num, den);
                let db = self.neg(q);
                D::Two(a, da, b, db)
            }
            Op::Neg(a) => {
                let a = *a;
                let da = self.neg(dz);
                D::One(a, da)
            }
            Op::Scale(a, c) => {
                let (a, c) = (*a, *c);
                let da = self.scale(dz, c);
                D::One(a, da)
            }
            Op::Matmul(a, b) => {
                let (a, b) = (*a, *b);
                let bt = self.transpose(b);
                let da = self.matmul(dz, bt);
                let at = self.transpose(a);
                let db = self.matmul(at, dz);
                D::Two(a, da, b, db)
            }
            Op::Transpose(a) => {
                let a = *a;
                let da = self.transpose(dz);
                D::One(a, da)
            }
            Op::Exp(a) => {
                let a = *a;
                let da = self.mul(dz, out);
                D::One(a, da)
            }
            Op::Ln(a) => {
                let a = *a;
                let da = self.div(dz, a);
                D::One(a, da)
            }
            Op::Tanh(a) => {
                let a = *a;
                let (r, c) = self.shape(out);
                let one = self.constant(Arr::from_elem((r, c), 1.0));
                let sq = self.mul(out, out);
                let oneminus = self.sub(one, sq);
                let da = self.mul(dz, oneminus);
                D::One(a, da)
            }
            Op::Sigmoid(a) => {
                let a = *a;
                let (r, c) = self.shape(out);
                let one = self.constant(Arr::from_elem((r, c), 1.0));
                let oneminus = self.sub(one, out);
                let prod = self.mul(out, oneminus);
                let da = self.mul(dz, prod);
                D::One(a, da)
            }
            Op::Sqrt(a) => {
                let a = *a;
                let half = self.scale(dz, 0.5);
                let da = self.div(half, out);
                D::One(a, da)
            }
            Op::Relu(a) => {
                let a = *a;
                let mask = Rc::new(self.nodes[a.0].value.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 }));
                let da = self.mul_mask(dz, mask);
                D::One(a, da)
            }
            Op::SumAll(a) => {
                let a = *a;
                let (r, c) = self.shape(a);
                let da = self.broadcast(dz, r, c);
                D::One(a, da)
            }
            Op::Broadcast(a) => {
                let a = *a;
                let da = self.sum_all(dz);
                D::One(a, da)
            }
            Op::SumRows(a) => {
                let a = *a;
                let (r, _) = self.shape(a);
                let da = self.repeat_row(dz, r);
                D::One(a, da)
            }
            Op::RepeatRow(a) => {
                let a = *a;
                let da = self.sum_rows(dz);
                D::One(a, da)
            }
            Op::ConcatRows(parts) => {
                let parts = parts.clone();
                let mut pairs = Vec::with_capacity(parts.len());
                let mut off = 0;
                for p in parts {
                    let (r, _) = self.shape(p);
                    let dp = self.slice_rows(dz, off, off + r);
                    pairs.push((p, dp));
                    off += r;
                }
                D::Many(pairs)
            }
            Op::ConcatCols(parts) => {
                let parts = parts.clone();
                let mut pairs = Vec::with_capacity(parts.len());
                let mut off = 0;
                for p in parts {
                    let (_, c) = self.shape(p);
                    let dp = self.slice_cols(dz, off, off + c);
                    pairs.push((p, dp));
                    off += c;
                }
                D::Many(pairs)
            }
            Op::SliceRows(a, start) => {
                let (a, start) = (*a, *start);
                let (r, _) = self.shape(a);
                let da = self.pad_rows(dz, r, start);
                D::One(a, da)
            }
            Op::SliceCols(a, start) => {
                let (a, start) = (*a, *start);
                let (_, c) = self.shape(a);
                let da = self.pad_cols(dz, c, start);
                D::One(a, da)
            }
            Op::PadRows(a, offset) => {
                let (a, offset) = (*a, *offset);
                let (r, _) = self.shape(a);
                let da = self.slice_rows(dz, offset, offset + r);
                D::One(a, da)
            }
            Op::PadCols(a, offset) => {
                let (a, offset) = (*a, *offset);
                let (_, c) = self.shape(a);
                let da = self.slice_cols(dz, offset, offset + c);
                D::One(a, da)
            }
            Op::RowSelect(table, ids) => {
                let (table, ids) = (*table, ids.clone());
                let (r, _) = self.shape(table);
                let da = self.row_scatter_add(dz, ids, r);
                D::One(table, da)
            }
            Op::RowScatterAdd(a, ids) => {
                let (a, ids) = (*a, ids.clone());
                let da = self.row_select(dz, ids);
                D::One(a, da)
            }
            Op::Cell(a, i, j) => {
                let (a, i, j) = (*a, *i, *j);
                let (r, c) = self.shape(a);
                let da = self.cell_scatter(dz, i, j, r, c);
                D::One(a, da)
            }
            Op::CellScatter(a, i, j) => {
                let (a, i, j) = (*a, *i, *j);
                let da = self.cell(dz, i, j);
                D::One(a, da)
            }
            Op::MulMask(a, mask) => {
                let (a, mask) = (*a, mask.clone());
                let da = self.mul_mask(dz, mask);
                D::One(a, da)
            }
        };
        match d {
            D::None => {}
            D::One(a, da) => self.accumulate(adj, a, da),
            D::Two(a, da, b, db) => {
                self.accumulate(adj, a, da);
                self.accumulate(adj, b, db);
            }
            D::Many(pairs) => {
                for (p, dp) in pairs {
                    self.accumulate(adj, p, dp);
                }
            }
        }
    }
}

/// Central finite differences of a black-box scalar function, one tensor of
/// partials per input tensor. Independent of the graph backward pass; used
/// as the gradient oracle in tests.
pub fn central_diff(inputs: &[Arr], eps: f64, f: impl Fn(&[Arr]) -> f64) -> Vec<Arr> {
    let mut grads = Vec::with_capacity(inputs.len());
    for (ti, t) in inputs.iter().enumerate() {
        let mut g = Arr::zeros(t.dim());
        for idx in 0..t.len() {
            let (r, c) = t.dim();
            let (i, j) = (idx / c, idx % c);
            debug_assert!(i < r);
            let mut plus = inputs.to_vec();
            plus[ti][[i, j]] += eps;
            let mut minus = inputs.to_vec();
            minus[ti][[i, j]] -= eps;
            g[[i, j]] = (f(&plus) - f(&minus)) / (2.0 * eps);
        }
        grads.push(g);
    }
    grads
}

/// Norm-based relative error between an analytic and a numeric gradient.
pub fn rel_error(analytic: &Arr, numeric: &Arr) -> f64 {
    let diff = (analytic - numeric).mapv(f64::abs);
    let num = diff.iter().fold(0.0f64, |m, &x| m.max(x));
    let scale = analytic
        .iter()
        .chain(numeric.iter())
        .fold(0.0f64, |m, &x| m.max(x.abs()))
        .max(1e-8);
    num / scale
}
