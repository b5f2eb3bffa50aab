//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every op appends one node holding its forward value. Nodes only refer to
//! earlier nodes, so the tape order is a topological order and the backward
//! pass is a single reverse sweep that visits each node at most once.
//! Nodes that cannot reach a trainable leaf are skipped on the way back.

use std::borrow::Cow;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::params::{Gradients, ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::{self, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    MatVec(Var, Var),
    VecMat(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    Nll { logits: Var, target: usize },
    Sum(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Row(Var, usize),
    StackRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    ConcatCols(Var, Var),
    Conv1d(Var, Var),
    Outer(Var, Var),
}

#[derive(Debug)]
struct Node<'s, T: Clone> {
    value: Cow<'s, Tensor<T>>,
    op: Op<T>,
    needs_grad: bool,
}

/// The computation tape. Parameters are bound lazily from an optional
/// [`ParamStore`] and borrowed, not copied.
pub struct Graph<'s, T: Real> {
    store: Option<&'s ParamStore<T>>,
    nodes: Vec<Node<'s, T>>,
    bound: HashMap<ParamId, Var>,
}

/// Result of a backward sweep.
#[derive(Debug, Clone)]
pub struct Backward<T> {
    params: Option<Gradients<T>>,
    leaves: HashMap<Var, Tensor<T>>,
}

impl<T: Real> Backward<T> {
    /// Gradients for every parameter in the bound store; zero where the loss
    /// does not depend on the parameter or the parameter is frozen.
    pub fn params(&self) -> Option<&Gradients<T>> {
        self.params.as_ref()
    }

    pub fn into_params(self) -> Option<Gradients<T>> {
        self.params
    }

    /// Gradient of a differentiable leaf created with [`Graph::input`].
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.leaves.get(&v)
    }
}

impl<'s, T: Real> Default for Graph<'s, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'s, T: Real> Graph<'s, T> {
    pub fn new() -> Self {
        Graph {
            store: None,
            nodes: Vec::new(),
            bound: HashMap::new(),
        }
    }

    pub fn with_params(store: &'s ParamStore<T>) -> Self {
        Graph {
            store: Some(store),
            nodes: Vec::new(),
            bound: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn item(&self, v: Var) -> T {
        self.nodes[v.0].value.item()
    }

    fn push(&mut self, value: Cow<'s, Tensor<T>>, op: Op<T>) -> Var {
        let needs_grad = match &op {
            Op::Leaf => value.requires_grad(),
            Op::Param(_) => true,
            op => parents(op).iter().any(|p| self.nodes[p.0].needs_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn owned(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.push(Cow::Owned(value), op)
    }

    /// A constant: never differentiated.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.owned(value.with_requires_grad(false), Op::Leaf)
    }

    /// A leaf that is differentiated iff `value.requires_grad()`.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.owned(value, Op::Leaf)
    }

    /// Binds a parameter from the attached store. Repeated binds return the
    /// same node. Frozen parameters bind as constants.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let store = self
            .store
            .expect("Graph::param called on a graph without a parameter store");
        let value = store.value(id);
        let v = if value.requires_grad() {
            self.push(Cow::Borrowed(value), Op::Param(id))
        } else {
            self.push(Cow::Borrowed(value), Op::Leaf)
        };
        self.bound.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.owned(out, Op::MatMul(a, b)))
    }

    /// `a b^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul_nt(self.value(a), self.value(b))?;
        Ok(self.owned(out, Op::MatMulNt(a, b)))
    }

    pub fn matvec(&mut self, a: Var, x: Var) -> Result<Var> {
        let out = tensor::matvec(self.value(a), self.value(x))?;
        Ok(self.owned(out, Op::MatVec(a, x)))
    }

    pub fn vecmat(&mut self, x: Var, a: Var) -> Result<Var> {
        let out = tensor::vecmat(self.value(x), self.value(a))?;
        Ok(self.owned(out, Op::VecMat(x, a)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape(), data).expect("shape checked by caller")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_with(a, b, |x, y| x + y);
        Ok(self.owned(out, Op::Add(a, b)))
    }

    /// Adds vector `b` (`[n]`) to every row of `a` (`[m, n]`).
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2("add_row")?;
        let nb = self.value(b).dims1("add_row")?;
        if n != nb {
            return Err(Error::shape("add_row", format!("[{m},{n}] + [{nb}]")));
        }
        let (ta, tb) = (self.value(a), self.value(b));
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(n) {
            for (x, &y) in row.iter_mut().zip(tb.data()) {
                *x = *x + y;
            }
        }
        let out = Tensor::new(&[m, n], data)?;
        Ok(self.owned(out, Op::AddRow(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_with(a, b, |x, y| x * y);
        Ok(self.owned(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.owned(out, Op::Scale(a, s))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.owned(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.tanh());
        self.owned(out, Op::Tanh(a))
    }

    /// Softmax of a vector; frames with `mask[t] == false` get weight 0.
    pub fn softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var> {
        let out = tensor::masked_softmax(self.value(a), mask)?;
        Ok(self.owned(out, Op::Softmax(a)))
    }

    /// `-log softmax(logits)[target]` as a scalar.
    pub fn nll(&mut self, logits: Var, target: usize) -> Result<Var> {
        let n = self.value(logits).dims1("nll")?;
        if target >= n {
            return Err(Error::TokenOutOfRange { id: target, size: n });
        }
        let lp = tensor::log_softmax(self.value(logits).data());
        let out = Tensor::scalar(-lp[target]);
        Ok(self.owned(out, Op::Nll { logits, target }))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().fold(T::zero(), |acc, &x| acc + x);
        self.owned(Tensor::scalar(s), Op::Sum(a))
    }

    /// Concatenates vectors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat", "no inputs"));
        }
        let mut data = Vec::new();
        for &p in parts {
            self.value(p).dims1("concat")?;
            data.extend_from_slice(self.value(p).data());
        }
        Ok(self.owned(Tensor::vector(data), Op::Concat(parts.to_vec())))
    }

    /// `a[start..start + len]` of a vector.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.value(a).dims1("slice")?;
        if len == 0 || start + len > n {
            return Err(Error::shape("slice", format!("{start}..{} of {n}", start + len)));
        }
        let out = Tensor::vector(self.value(a).data()[start..start + len].to_vec());
        Ok(self.owned(out, Op::Slice(a, start)))
    }

    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        let (m, _) = self.value(a).dims2("row")?;
        if i >= m {
            return Err(Error::shape("row", format!("row {i} of {m}")));
        }
        let out = Tensor::vector(self.value(a).row(i).to_vec());
        Ok(self.owned(out, Op::Row(a, i)))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = rows.first().ok_or_else(|| Error::shape("stack_rows", "no rows"))?;
        let n = self.value(*first).dims1("stack_rows")?;
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            if self.value(r).shape() != [n] {
                return Err(Error::shape(
                    "stack_rows",
                    format!("row {:?} vs [{n}]", self.value(r).shape()),
                ));
            }
            data.extend_from_slice(self.value(r).data());
        }
        let out = Tensor::new(&[rows.len(), n], data)?;
        Ok(self.owned(out, Op::StackRows(rows.to_vec())))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (m, n) = self.value(a).dims2("gather_rows")?;
        if idx.is_empty() || idx.iter().any(|&i| i >= m) {
            return Err(Error::shape("gather_rows", format!("indices {idx:?} of {m} rows")));
        }
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            data.extend_from_slice(self.value(a).row(i));
        }
        let out = Tensor::new(&[idx.len(), n], data)?;
        Ok(self.owned(out, Op::GatherRows(a, idx.to_vec())))
    }

    /// `[m,p] | [m,q] -> [m,p+q]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, p) = self.value(a).dims2("concat_cols")?;
        let (m2, q) = self.value(b).dims2("concat_cols")?;
        if m != m2 {
            return Err(Error::shape("concat_cols", format!("[{m},{p}] | [{m2},{q}]")));
        }
        let mut data = Vec::with_capacity(m * (p + q));
        for i in 0..m {
            data.extend_from_slice(self.value(a).row(i));
            data.extend_from_slice(self.value(b).row(i));
        }
        let out = Tensor::new(&[m, p + q], data)?;
        Ok(self.owned(out, Op::ConcatCols(a, b)))
    }

    /// See [`tensor::conv1d`]; output is `[T, C]`.
    pub fn conv1d(&mut self, kernels: Var, signal: Var) -> Result<Var> {
        let out = tensor::conv1d(self.value(kernels), self.value(signal))?;
        Ok(self.owned(out, Op::Conv1d(kernels, signal)))
    }

    /// `u w^T` for vectors `u` (`[m]`) and `w` (`[n]`).
    pub fn outer(&mut self, u: Var, w: Var) -> Result<Var> {
        let m = self.value(u).dims1("outer")?;
        let n = self.value(w).dims1("outer")?;
        let (tu, tw) = (self.value(u), self.value(w));
        let mut data = Vec::with_capacity(m * n);
        for &x in tu.data() {
            for &y in tw.data() {
                data.push(x * y);
            }
        }
        let out = Tensor::new(&[m, n], data)?;
        Ok(self.owned(out, Op::Outer(u, w)))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Backward<T>> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);

        let mut param_grads = self.store.map(|s| s.zero_grads());
        let mut leaves = HashMap::new();

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Leaf => {
                    let t = Tensor::new(node.value.shape(), g)?;
                    leaves.insert(Var(i), t);
                }
                Op::Param(id) => {
                    if let Some(pg) = param_grads.as_mut() {
                        for (x, y) in pg.get_mut(*id).data_mut().iter_mut().zip(&g) {
                            *x = *x + *y;
                        }
                    }
                }
                op => self.propagate(op, &node.value, &g, &mut grads),
            }
        }
        Ok(Backward {
            params: param_grads,
            leaves,
        })
    }

    fn propagate(&self, op: &Op<T>, out: &Tensor<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let val = |v: &Var| -> &Tensor<T> { &nodes[v.0].value };
        let live = |v: &Var| nodes[v.0].needs_grad;
        macro_rules! buf {
            ($v:expr) => {{
                let v: &Var = $v;
                grads[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].value.len()])
            }};
        }

        match op {
            Op::Leaf | Op::Param(_) => unreachable!(),
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(a), val(b));
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                if live(a) {
                    let da = buf!(a);
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            da[i * k + p] = da[i * k + p] + tensor::dot(grow, tb.row(p));
                        }
                    }
                }
                if live(b) {
                    let db = buf!(b);
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av = ta.data()[i * k + p];
                            for (d, &gv) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *d = *d + av * gv;
                            }
                        }
                    }
                }
            }
            Op::MatMulNt(a, b) => {
                let (ta, tb) = (val(a), val(b));
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[0];
                if live(a) {
                    let da = buf!(a);
                    for i in 0..m {
                        let drow = &mut da[i * k..(i + 1) * k];
                        for j in 0..n {
                            let gv = g[i * n + j];
                            for (d, &bv) in drow.iter_mut().zip(tb.row(j)) {
                                *d = *d + gv * bv;
                            }
                        }
                    }
                }
                if live(b) {
                    let db = buf!(b);
                    for i in 0..m {
                        let arow = ta.row(i);
                        for j in 0..n {
                            let gv = g[i * n + j];
                            for (d, &av) in db[j * k..(j + 1) * k].iter_mut().zip(arow) {
                                *d = *d + gv * av;
                            }
                        }
                    }
                }
            }
            Op::MatVec(a, x) => {
                let (ta, tx) = (val(a), val(x));
                let k = ta.shape()[1];
                if live(a) {
                    let da = buf!(a);
                    for (i, &gv) in g.iter().enumerate() {
                        for (d, &xv) in da[i * k..(i + 1) * k].iter_mut().zip(tx.data()) {
                            *d = *d + gv * xv;
                        }
                    }
                }
                if live(x) {
                    let dx = buf!(x);
                    for (i, &gv) in g.iter().enumerate() {
                        for (d, &av) in dx.iter_mut().zip(ta.row(i)) {
                            *d = *d + gv * av;
                        }
                    }
                }
            }
            Op::VecMat(x, a) => {
                let (tx, ta) = (val(x), val(a));
                let n = ta.shape()[1];
                if live(x) {
                    let dx = buf!(x);
                    for (t, d) in dx.iter_mut().enumerate() {
                        *d = *d + tensor::dot(g, ta.row(t));
                    }
                }
                if live(a) {
                    let da = buf!(a);
                    for (t, &w) in tx.data().iter().enumerate() {
                        for (d, &gv) in da[t * n..(t + 1) * n].iter_mut().zip(g) {
                            *d = *d + w * gv;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if live(v) {
                        add_into(buf!(v), g);
                    }
                }
            }
            Op::AddRow(a, b) => {
                if live(a) {
                    add_into(buf!(a), g);
                }
                if live(b) {
                    let db = buf!(b);
                    let n = db.len();
                    for row in g.chunks(n) {
                        add_into(db, row);
                    }
                }
            }
            Op::Mul(a, b) => {
                if live(a) {
                    let tb = val(b).data();
                    let da = buf!(a);
                    for ((d, &gv), &bv) in da.iter_mut().zip(g).zip(tb) {
                        *d = *d + gv * bv;
                    }
                }
                if live(b) {
                    let ta = val(a).data();
                    let db = buf!(b);
                    for ((d, &gv), &av) in db.iter_mut().zip(g).zip(ta) {
                        *d = *d + gv * av;
                    }
                }
            }
            Op::Scale(a, s) => {
                if live(a) {
                    for (d, &gv) in buf!(a).iter_mut().zip(g) {
                        *d = *d + gv * *s;
                    }
                }
            }
            Op::Sigmoid(a) => {
                if live(a) {
                    for ((d, &gv), &y) in buf!(a).iter_mut().zip(g).zip(out.data()) {
                        *d = *d + gv * y * (T::one() - y);
                    }
                }
            }
            Op::Tanh(a) => {
                if live(a) {
                    for ((d, &gv), &y) in buf!(a).iter_mut().zip(g).zip(out.data()) {
                        *d = *d + gv * (T::one() - y * y);
                    }
                }
            }
            Op::Softmax(a) => {
                if live(a) {
                    let y = out.data();
                    let s = tensor::dot(y, g);
                    for ((d, &gv), &yv) in buf!(a).iter_mut().zip(g).zip(y) {
                        *d = *d + yv * (gv - s);
                    }
                }
            }
            Op::Nll { logits, target } => {
                if live(logits) {
                    let lp = tensor::log_softmax(val(logits).data());
                    let gv = g[0];
                    for (j, (d, &l)) in buf!(logits).iter_mut().zip(&lp).enumerate() {
                        let onehot = if j == *target { T::one() } else { T::zero() };
                        *d = *d + gv * (l.exp() - onehot);
                    }
                }
            }
            Op::Sum(a) => {
                if live(a) {
                    for d in buf!(a).iter_mut() {
                        *d = *d + g[0];
                    }
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = val(p).len();
                    if live(p) {
                        add_into(buf!(p), &g[off..off + n]);
                    }
                    off += n;
                }
            }
            Op::Slice(a, start) => {
                if live(a) {
                    add_into(&mut buf!(a)[*start..*start + g.len()], g);
                }
            }
            Op::Row(a, i) => {
                if live(a) {
                    let n = g.len();
                    add_into(&mut buf!(a)[i * n..(i + 1) * n], g);
                }
            }
            Op::StackRows(rows) => {
                let n = out.shape()[1];
                for (i, r) in rows.iter().enumerate() {
                    if live(r) {
                        add_into(buf!(r), &g[i * n..(i + 1) * n]);
                    }
                }
            }
            Op::GatherRows(a, idx) => {
                if live(a) {
                    let n = out.shape()[1];
                    let da = buf!(a);
                    for (r, &i) in idx.iter().enumerate() {
                        add_into(&mut da[i * n..(i + 1) * n], &g[r * n..(r + 1) * n]);
                    }
                }
            }
            Op::ConcatCols(a, b) => {
                let m = out.shape()[0];
                let p = val(a).shape()[1];
                let q = val(b).shape()[1];
                if live(a) {
                    let da = buf!(a);
                    for i in 0..m {
                        add_into(&mut da[i * p..(i + 1) * p], &g[i * (p + q)..i * (p + q) + p]);
                    }
                }
                if live(b) {
                    let db = buf!(b);
                    for i in 0..m {
                        add_into(
                            &mut db[i * q..(i + 1) * q],
                            &g[i * (p + q) + p..(i + 1) * (p + q)],
                        );
                    }
                }
            }
            Op::Conv1d(k, s) => {
                let (tk, ts) = (val(k), val(s));
                let (channels, width) = (tk.shape()[0], tk.shape()[1]);
                let len = ts.len();
                let half = width / 2;
                let tap = |t: usize, j: usize| {
                    let pos = t + j;
                    (pos >= half && pos - half < len).then(|| pos - half)
                };
                if live(k) {
                    let dk = buf!(k);
                    for t in 0..len {
                        for c in 0..channels {
                            let gv = g[t * channels + c];
                            for j in 0..width {
                                if let Some(src) = tap(t, j) {
                                    dk[c * width + j] = dk[c * width + j] + gv * ts.data()[src];
                                }
                            }
                        }
                    }
                }
                if live(s) {
                    let ds = buf!(s);
                    for t in 0..len {
                        for c in 0..channels {
                            let gv = g[t * channels + c];
                            for j in 0..width {
                                if let Some(src) = tap(t, j) {
                                    ds[src] = ds[src] + gv * tk.data()[c * width + j];
                                }
                            }
                        }
                    }
                }
            }
            Op::Outer(u, w) => {
                let (tu, tw) = (val(u), val(w));
                let n = tw.len();
                if live(u) {
                    let du = buf!(u);
                    for (i, d) in du.iter_mut().enumerate() {
                        *d = *d + tensor::dot(&g[i * n..(i + 1) * n], tw.data());
                    }
                }
                if live(w) {
                    let dw = buf!(w);
                    for (i, &uv) in tu.data().iter().enumerate() {
                        for (d, &gv) in dw.iter_mut().zip(&g[i * n..(i + 1) * n]) {
                            *d = *d + uv * gv;
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

fn parents<T>(op: &Op<T>) -> Vec<Var> {
    match op {
        Op::Leaf | Op::Param(_) => vec![],
        Op::MatMul(a, b)
        | Op::MatMulNt(a, b)
        | Op::MatVec(a, b)
        | Op::VecMat(a, b)
        | Op::Add(a, b)
        | Op::AddRow(a, b)
        | Op::Mul(a, b)
        | Op::ConcatCols(a, b)
        | Op::Conv1d(a, b)
        | Op::Outer(a, b) => vec![*a, *b],
        Op::Scale(a, _)
        | Op::Sigmoid(a)
        | Op::Tanh(a)
        | Op::Softmax(a)
        | Op::Sum(a)
        | Op::Slice(a, _)
        | Op::Row(a, _)
        | Op::GatherRows(a, _) => vec![*a],
        Op::Nll { logits, .. } => vec![*logits],
        Op::Concat(v) | Op::StackRows(v) => v.clone(),
    }
}
