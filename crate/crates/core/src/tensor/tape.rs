use std::collections::HashMap;
use std::rc::Rc;

use super::{gemm_acc, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How a loss primitive reduces over its elements.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    VStack(Vec<Var>),
    GatherRows(Var, Rc<[usize]>),
    ScatterRows(Var, Rc<[usize]>),
    SegmentMean {
        input: Var,
        offsets: Rc<[usize]>,
        members: Rc<[usize]>,
    },
    RowSum(Var),
    RowMean(Var),
    Sum(Var),
    Sigmoid(Var),
    Relu(Var),
    BceWithLogits {
        logits: Var,
        targets: Tensor,
        reduction: Reduction,
    },
    Mse {
        pred: Var,
        target: Tensor,
        reduction: Reduction,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of differentiable operations.
///
/// Nodes are appended as operations execute, so every node's inputs precede
/// it and the reverse index order is a valid topological order for
/// [`Tape::backward`]. Leaf gradients accumulate across `backward` calls until
/// [`Tape::zero_grad`].
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    leaf_grads: HashMap<usize, Tensor>,
    bound: HashMap<ParamId, Var>,
}

fn shape_err(op: &'static str, left: &Tensor, right: &Tensor) -> Error {
    Error::Shape {
        op,
        left: left.shape(),
        right: right.shape(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a leaf. Gradients are kept only when `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Binds a stored parameter as a gradient-tracking leaf. Binding the same
    /// parameter twice returns the same handle.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let v = self.leaf(store.value(id).clone(), true);
        self.bound.insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.leaf_grads.get(&v.0)
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.clear();
    }

    /// Adds the gradients of all bound parameters into the store.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for (&id, &v) in &self.bound {
            if let Some(g) = self.leaf_grads.get(&v.0) {
                store.params_mut()[id.0].grad.add_assign(g);
            }
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(shape_err("matmul", va, vb));
        }
        let mut out = Tensor::zeros(va.rows(), vb.cols());
        gemm_acc(va, false, vb, false, &mut out, 0.0);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn zip_same(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(name, va, vb));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::from_vec(va.rows(), va.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// Adds a `1 × c` row to every row of `a` (bias broadcast).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(shape_err("add_row", va, vr));
        }
        let mut out = va.clone();
        let r = vr.data().to_vec();
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(&r) {
                *o += b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(out, Op::AddRow(a, row), rg))
    }

    /// Scales row `i` of `a` by `col[i]` where `col` is `n × 1`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (va, vc) = (self.value(a), self.value(col));
        if vc.cols() != 1 || vc.rows() != va.rows() {
            return Err(shape_err("mul_col", va, vc));
        }
        let mut out = va.clone();
        for i in 0..out.rows() {
            let s = vc.data()[i];
            out.row_mut(i).iter_mut().for_each(|o| *o *= s);
        }
        let rg = self.rg(a) || self.rg(col);
        Ok(self.push(out, Op::MulCol(a, col), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let va = self.value(a);
        let data = va.data().iter().map(|x| x * s).collect();
        let out = Tensor::from_vec(va.rows(), va.cols(), data).expect("same shape");
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, s), rg)
    }

    /// Concatenation along the last (column) axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        let rows = self.value(*first).rows();
        for p in parts {
            if self.value(*p).rows() != rows {
                return Err(shape_err("concat_cols", self.value(*first), self.value(*p)));
            }
        }
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            for p in parts {
                let v = self.value(*p);
                out.row_mut(i)[off..off + v.cols()].copy_from_slice(v.row(i));
                off += v.cols();
            }
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Concatenation along rows.
    pub fn vstack(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("vstack of zero tensors".into()))?;
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let v = self.value(*p);
            if v.cols() != cols {
                return Err(shape_err("vstack", self.value(*first), v));
            }
            data.extend_from_slice(v.data());
            rows += v.rows();
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(out, Op::VStack(parts.to_vec()), rg))
    }

    /// Row `k` of the output is row `idx[k]` of `a`.
    pub fn gather_rows(&mut self, a: Var, idx: impl Into<Rc<[usize]>>) -> Result<Var> {
        let idx: Rc<[usize]> = idx.into();
        let va = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= va.rows()) {
            return Err(Error::InvalidArgument(format!(
                "gather index {bad} out of range for {} rows",
                va.rows()
            )));
        }
        let out = va.select_rows(&idx);
        let rg = self.rg(a);
        Ok(self.push(out, Op::GatherRows(a, idx), rg))
    }

    /// Places row `k` of `a` at output row `idx[k]` of an `n_rows` matrix,
    /// summing rows that land on the same index.
    pub fn scatter_rows(&mut self, a: Var, idx: impl Into<Rc<[usize]>>, n_rows: usize) -> Result<Var> {
        let idx: Rc<[usize]> = idx.into();
        let va = self.value(a);
        if idx.len() != va.rows() {
            return Err(Error::InvalidArgument(format!(
                "scatter of {} rows with {} indices",
                va.rows(),
                idx.len()
            )));
        }
        let mut out = Tensor::zeros(n_rows, va.cols());
        for (k, &i) in idx.iter().enumerate() {
            if i >= n_rows {
                return Err(Error::InvalidArgument(format!(
                    "scatter index {i} out of range for {n_rows} rows"
                )));
            }
            for (o, x) in out.row_mut(i).iter_mut().zip(va.row(k)) {
                *o += x;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::ScatterRows(a, idx), rg))
    }

    /// Grouped row mean: output row `g` is the mean of rows
    /// `members[offsets[g]..offsets[g + 1]]` of `a`, or zero for an empty group.
    pub fn segment_mean(
        &mut self,
        a: Var,
        offsets: impl Into<Rc<[usize]>>,
        members: impl Into<Rc<[usize]>>,
    ) -> Result<Var> {
        let offsets: Rc<[usize]> = offsets.into();
        let members: Rc<[usize]> = members.into();
        let va = self.value(a);
        if offsets.is_empty() || *offsets.last().unwrap() != members.len() {
            return Err(Error::InvalidArgument("malformed segment offsets".into()));
        }
        if let Some(&bad) = members.iter().find(|&&m| m >= va.rows()) {
            return Err(Error::InvalidArgument(format!(
                "segment member {bad} out of range for {} rows",
                va.rows()
            )));
        }
        let groups = offsets.len() - 1;
        let mut out = Tensor::zeros(groups, va.cols());
        for g in 0..groups {
            let span = &members[offsets[g]..offsets[g + 1]];
            if span.is_empty() {
                continue;
            }
            let row = out.row_mut(g);
            for &m in span {
                for (o, x) in row.iter_mut().zip(va.row(m)) {
                    *o += x;
                }
            }
            let inv = 1.0 / span.len() as f64;
            row.iter_mut().for_each(|o| *o *= inv);
        }
        let rg = self.rg(a);
        Ok(self.push(
            out,
            Op::SegmentMean {
                input: a,
                offsets,
                members,
            },
            rg,
        ))
    }

    /// Per-row sum, `n × c → n × 1`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let data = (0..va.rows()).map(|i| va.row(i).iter().sum()).collect();
        let out = Tensor::column(data);
        let rg = self.rg(a);
        self.push(out, Op::RowSum(a), rg)
    }

    /// Mean over rows, `n × c → 1 × c`.
    pub fn row_mean(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let mut out = Tensor::zeros(1, va.cols());
        for i in 0..va.rows() {
            for (o, x) in out.data_mut().iter_mut().zip(va.row(i)) {
                *o += x;
            }
        }
        let n = va.rows().max(1) as f64;
        out.data_mut().iter_mut().for_each(|o| *o /= n);
        let rg = self.rg(a);
        self.push(out, Op::RowMean(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let data = va.data().iter().map(|&x| sigmoid(x)).collect();
        let out = Tensor::from_vec(va.rows(), va.cols(), data).expect("same shape");
        let rg = self.rg(a);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let data = va.data().iter().map(|&x| x.max(0.0)).collect();
        let out = Tensor::from_vec(va.rows(), va.cols(), data).expect("same shape");
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    /// Fused sigmoid + binary cross-entropy in log-sum-exp form.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &Tensor, reduction: Reduction) -> Result<Var> {
        let vl = self.value(logits);
        if vl.shape() != targets.shape() {
            return Err(shape_err("bce_with_logits", vl, targets));
        }
        let total: f64 = vl
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&z, &t)| bce_term(z, t))
            .sum();
        let loss = reduce(total, vl.len(), reduction);
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::BceWithLogits {
                logits,
                targets: targets.clone(),
                reduction,
            },
            rg,
        ))
    }

    /// Mean squared error against a constant target. With [`Reduction::Sum`]
    /// the per-row mean errors are summed over rows.
    pub fn mse(&mut self, pred: Var, target: &Tensor, reduction: Reduction) -> Result<Var> {
        let vp = self.value(pred);
        if vp.shape() != target.shape() {
            return Err(shape_err("mse", vp, target));
        }
        let sq: f64 = vp
            .data()
            .iter()
            .zip(target.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        let loss = mse_value(sq, vp.rows(), vp.cols(), reduction);
        let rg = self.rg(pred);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Mse {
                pred,
                target: target.clone(),
                reduction,
            },
            rg,
        ))
    }

    /// Back-propagates from a scalar `loss`, accumulating into leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss);
        if shape != [1, 1] {
            return Err(Error::Shape {
                op: "backward (loss must be scalar)",
                left: shape,
                right: [1, 1],
            });
        }
        if !self.rg(loss) {
            return Ok(());
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                match self.leaf_grads.get_mut(&i) {
                    Some(acc) => acc.add_assign(&g),
                    None => {
                        self.leaf_grads.insert(i, g);
                    }
                }
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let nodes = &self.nodes;
        let out = &nodes[i].value;
        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                if let Some(ga) = slot(nodes, grads, *a) {
                    gemm_acc(g, false, vb, true, ga, 1.0);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    gemm_acc(va, true, g, false, gb, 1.0);
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    gb.add_assign(g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    for (o, x) in gb.data_mut().iter_mut().zip(g.data()) {
                        *o -= x;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((o, x), y) in ga.data_mut().iter_mut().zip(g.data()).zip(vb.data()) {
                        *o += x * y;
                    }
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    for ((o, x), y) in gb.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                        *o += x * y;
                    }
                }
            }
            Op::AddRow(a, row) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gr) = slot(nodes, grads, *row) {
                    for k in 0..g.rows() {
                        for (o, x) in gr.data_mut().iter_mut().zip(g.row(k)) {
                            *o += x;
                        }
                    }
                }
            }
            Op::MulCol(a, col) => {
                let (va, vc) = (&nodes[a.0].value, &nodes[col.0].value);
                if let Some(ga) = slot(nodes, grads, *a) {
                    for k in 0..g.rows() {
                        let s = vc.data()[k];
                        for (o, x) in ga.row_mut(k).iter_mut().zip(g.row(k)) {
                            *o += x * s;
                        }
                    }
                }
                if let Some(gc) = slot(nodes, grads, *col) {
                    for k in 0..g.rows() {
                        let d: f64 = g.row(k).iter().zip(va.row(k)).map(|(x, y)| x * y).sum();
                        gc.data_mut()[k] += d;
                    }
                }
            }
            Op::Scale(a, s) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    for (o, x) in ga.data_mut().iter_mut().zip(g.data()) {
                        *o += s * x;
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let w = nodes[p.0].value.cols();
                    if let Some(gp) = slot(nodes, grads, *p) {
                        for k in 0..g.rows() {
                            for (o, x) in gp.row_mut(k).iter_mut().zip(&g.row(k)[off..off + w]) {
                                *o += x;
                            }
                        }
                    }
                    off += w;
                }
            }
            Op::VStack(parts) => {
                let mut off = 0;
                for p in parts {
                    let h = nodes[p.0].value.rows();
                    if let Some(gp) = slot(nodes, grads, *p) {
                        let c = g.cols();
                        for (o, x) in gp.data_mut().iter_mut().zip(&g.data()[off * c..(off + h) * c]) {
                            *o += x;
                        }
                    }
                    off += h;
                }
            }
            Op::GatherRows(a, idx) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    for (k, &src) in idx.iter().enumerate() {
                        for (o, x) in ga.row_mut(src).iter_mut().zip(g.row(k)) {
                            *o += x;
                        }
                    }
                }
            }
            Op::ScatterRows(a, idx) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    for (k, &dst) in idx.iter().enumerate() {
                        for (o, x) in ga.row_mut(k).iter_mut().zip(g.row(dst)) {
                            *o += x;
                        }
                    }
                }
            }
            Op::SegmentMean {
                input,
                offsets,
                members,
            } => {
                if let Some(ga) = slot(nodes, grads, *input) {
                    for grp in 0..offsets.len() - 1 {
                        let span = &members[offsets[grp]..offsets[grp + 1]];
                        if span.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / span.len() as f64;
                        for &m in span {
                            for (o, x) in ga.row_mut(m).iter_mut().zip(g.row(grp)) {
                                *o += x * inv;
                            }
                        }
                    }
                }
            }
            Op::RowSum(a) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    for k in 0..ga.rows() {
                        let s = g.data()[k];
                        ga.row_mut(k).iter_mut().for_each(|o| *o += s);
                    }
                }
            }
            Op::RowMean(a) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    let n = ga.rows().max(1) as f64;
                    for k in 0..ga.rows() {
                        for (o, x) in ga.row_mut(k).iter_mut().zip(g.data()) {
                            *o += x / n;
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    let s = g.item();
                    ga.data_mut().iter_mut().for_each(|o| *o += s);
                }
            }
            Op::Sigmoid(a) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((o, x), s) in ga.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                        *o += x * s * (1.0 - s);
                    }
                }
            }
            Op::Relu(a) => {
                let va = &nodes[a.0].value;
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((o, x), z) in ga.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                        if *z > 0.0 {
                            *o += x;
                        }
                    }
                }
            }
            Op::BceWithLogits {
                logits,
                targets,
                reduction,
            } => {
                let vl = &nodes[logits.0].value;
                let scale = g.item() * reduce(1.0, vl.len(), *reduction);
                if let Some(gl) = slot(nodes, grads, *logits) {
                    for ((o, z), t) in gl.data_mut().iter_mut().zip(vl.data()).zip(targets.data()) {
                        *o += scale * (sigmoid(*z) - t);
                    }
                }
            }
            Op::Mse {
                pred,
                target,
                reduction,
            } => {
                let vp = &nodes[pred.0].value;
                let scale = g.item() * mse_value(1.0, vp.rows(), vp.cols(), *reduction);
                if let Some(gp) = slot(nodes, grads, *pred) {
                    for ((o, p), t) in gp.data_mut().iter_mut().zip(vp.data()).zip(target.data()) {
                        *o += scale * 2.0 * (p - t);
                    }
                }
            }
        }
    }
}

/// Numerically stable logistic function.
/// Gradient accumulator for `v`, allocated on first use; `None` for constants.
fn slot<'a>(nodes: &[Node], grads: &'a mut [Option<Tensor>], v: Var) -> Option<&'a mut Tensor> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let [r, c] = nodes[v.0].value.shape();
    Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(r, c)))
}

/// Logistic function, rounded toward the interior so the result stays in
/// the open interval (0, 1) for every finite input.
pub fn sigmoid(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    y.clamp(BELOW_ZERO_SIDE, BELOW_ONE)
}

/// Smallest positive f64.
const BELOW_ZERO_SIDE: f64 = f64::from_bits(1);
/// Largest f64 below one.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

fn bce_term(z: f64, t: f64) -> f64 {
    z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
}

fn reduce(total: f64, n: usize, reduction: Reduction) -> f64 {
    match reduction {
        Reduction::Mean if n > 0 => total / n as f64,
        Reduction::Mean => 0.0,
        Reduction::Sum => total,
    }
}

fn mse_value(sq: f64, rows: usize, cols: usize, reduction: Reduction) -> f64 {
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    match reduction {
        Reduction::Mean => sq / (rows * cols) as f64,
        Reduction::Sum => sq / cols as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    /// Central finite differences of `f` with respect to every entry of `x`.
    fn numeric_grad(x: &Tensor, f: &dyn Fn(&Tensor) -> f64) -> Tensor {
        let h = 1e-6;
        let mut g = Tensor::zeros(x.rows(), x.cols());
        for k in 0..x.len() {
            let mut plus = x.clone();
            plus.data_mut()[k] += h;
            let mut minus = x.clone();
            minus.data_mut()[k] -= h;
            g.data_mut()[k] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        g
    }

    fn rel_err(a: &Tensor, b: &Tensor) -> f64 {
        let num: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = a.data().iter().zip(b.data()).map(|(x, y)| x * x + y * y).sum();
        if den < 1e-24 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }

    /// Checks the gradient of a unary builder on a random 4×3 input, reduced
    /// through a fixed random projection so every output entry matters.
    fn check_unary(build: impl Fn(&mut Tape, Var) -> Var) {
        let mut rng = Rng::new(11);
        let x = Tensor::glorot(4, 3, &mut rng);
        let probe = {
            let mut t = Tape::new();
            let v = t.constant(x.clone());
            let y = build(&mut t, v);
            Tensor::glorot(t.value(y).rows(), t.value(y).cols(), &mut rng)
        };
        let eval = |input: &Tensor| {
            let mut t = Tape::new();
            let v = t.leaf(input.clone(), true);
            let y = build(&mut t, v);
            let p = t.constant(probe.clone());
            let m = t.mul(y, p).unwrap();
            let s = t.sum(m);
            (t, v, s)
        };
        let (mut t, v, s) = eval(&x);
        t.backward(s).unwrap();
        let analytic = t.grad(v).unwrap().clone();
        let numeric = numeric_grad(&x, &|z| {
            let (t, _, s) = eval(z);
            t.value(s).item()
        });
        let e = rel_err(&analytic, &numeric);
        assert!(e < 1e-5, "relative error {e}");
    }

    #[test]
    fn sigmoid_and_derivative_at_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(0.0), true);
        let y = t.sigmoid(x);
        assert_eq!(t.value(y).item(), 0.5);
        t.backward(y).unwrap();
        assert_eq!(t.grad(x).unwrap().item(), 0.25);
    }

    #[test]
    fn sigmoid_stays_inside_the_unit_interval() {
        for x in [-1e308, -800.0, -745.5, -40.0, 0.0, 36.0, 40.0, 800.0, 1e308] {
            let y = sigmoid(x);
            assert!(y > 0.0 && y < 1.0, "sigmoid({x}) = {y}");
        }
        assert_eq!(sigmoid(800.0), BELOW_ONE);
        assert_eq!(sigmoid(-800.0), BELOW_ZERO_SIDE);
        assert_eq!(sigmoid(-40.0), (-40f64).exp() / (1.0 + (-40f64).exp()));
    }

    #[test]
    fn bce_with_logits_at_zero_is_ln2() {
        let mut t = Tape::new();
        let z = t.leaf(Tensor::scalar(0.0), true);
        let l = t.bce_with_logits(z, &Tensor::scalar(1.0), Reduction::Mean).unwrap();
        assert!((t.value(l).item() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn bce_saturated_logits_stay_finite() {
        let mut t = Tape::new();
        let z = t.leaf(Tensor::column(vec![800.0, -800.0]), true);
        let l = t
            .bce_with_logits(z, &Tensor::column(vec![0.0, 1.0]), Reduction::Sum)
            .unwrap();
        assert!((t.value(l).item() - 1600.0).abs() < 1e-9);
        t.backward(l).unwrap();
        assert!(t.grad(z).unwrap().is_finite());
    }

    #[test]
    fn sum_gives_all_ones_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::filled(2, 3, 0.7), true);
        let s = t.sum(x);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap(), &Tensor::ones(2, 3));
    }

    #[test]
    fn mse_of_identical_inputs_has_zero_gradient() {
        let mut rng = Rng::new(1);
        let v = Tensor::glorot(3, 3, &mut rng);
        let mut t = Tape::new();
        let x = t.leaf(v.clone(), true);
        let l = t.mse(x, &v, Reduction::Mean).unwrap();
        assert_eq!(t.value(l).item(), 0.0);
        t.backward(l).unwrap();
        assert!(t.grad(x).unwrap().data().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::zeros(2, 2), true);
        assert!(matches!(t.backward(x), Err(Error::Shape { .. })));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::filled(1, 2, 3.0), true);
        let s = t.sum(x);
        t.backward(s).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap().data(), &[2.0, 2.0]);
        t.zero_grad();
        assert!(t.grad(x).is_none());
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(2, 3));
        let b = t.constant(Tensor::zeros(3, 2));
        let msg = t.add(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[3, 2]"), "{msg}");
    }

    #[test]
    fn grad_matmul() {
        let mut rng = Rng::new(5);
        let w = Tensor::glorot(3, 5, &mut rng);
        check_unary(move |t, x| {
            let wv = t.constant(w.clone());
            t.matmul(x, wv).unwrap()
        });
        let a = Tensor::glorot(2, 4, &mut Rng::new(6));
        check_unary(move |t, x| {
            let av = t.constant(a.clone());
            t.matmul(av, x).unwrap()
        });
    }

    #[test]
    fn grad_elementwise_family() {
        let other = Tensor::glorot(4, 3, &mut Rng::new(8));
        let o1 = other.clone();
        check_unary(move |t, x| {
            let o = t.constant(o1.clone());
            t.add(x, o).unwrap()
        });
        let o2 = other.clone();
        check_unary(move |t, x| {
            let o = t.constant(o2.clone());
            t.sub(o, x).unwrap()
        });
        let o3 = other.clone();
        check_unary(move |t, x| {
            let o = t.constant(o3.clone());
            t.mul(x, o).unwrap()
        });
        check_unary(|t, x| t.mul(x, x).unwrap());
        check_unary(|t, x| t.scale(x, -1.7));
        check_unary(|t, x| t.sigmoid(x));
        check_unary(|t, x| t.relu(x));
        check_unary(|t, x| t.row_sum(x));
        check_unary(|t, x| t.row_mean(x));
        check_unary(|t, x| t.sum(x));
    }

    #[test]
    fn grad_broadcast_and_layout_ops() {
        let bias = Tensor::glorot(1, 3, &mut Rng::new(9));
        check_unary(move |t, x| {
            let b = t.constant(bias.clone());
            t.add_row(x, b).unwrap()
        });
        // bias position
        let base = Tensor::glorot(5, 3, &mut Rng::new(10));
        check_unary(move |t, x| {
            let b = t.constant(base.clone());
            let r = t.row_mean(x);
            t.add_row(b, r).unwrap()
        });
        let col = Tensor::glorot(4, 1, &mut Rng::new(12));
        check_unary(move |t, x| {
            let c = t.constant(col.clone());
            t.mul_col(x, c).unwrap()
        });
        check_unary(|t, x| {
            let c = t.row_sum(x);
            t.mul_col(x, c).unwrap()
        });
        check_unary(|t, x| {
            let y = t.sigmoid(x);
            t.concat_cols(&[x, y, x]).unwrap()
        });
        check_unary(|t, x| {
            let y = t.relu(x);
            t.vstack(&[y, x]).unwrap()
        });
        check_unary(|t, x| t.gather_rows(x, vec![3, 0, 0, 2]).unwrap());
        check_unary(|t, x| t.scatter_rows(x, vec![4, 1, 1, 0], 6).unwrap());
        check_unary(|t, x| t.segment_mean(x, vec![0, 2, 2, 5], vec![0, 3, 1, 2, 3]).unwrap());
    }

    #[test]
    fn grad_losses() {
        let targets = Tensor::from_rows(&[[1.0, 0.0, 1.0], [0.0, 0.0, 1.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]])
            .unwrap();
        for red in [Reduction::Mean, Reduction::Sum] {
            let tg = targets.clone();
            check_unary(move |t, x| {
                let s = t.scale(x, 3.0);
                t.bce_with_logits(s, &tg, red).unwrap()
            });
            let tg = targets.clone();
            check_unary(move |t, x| t.mse(x, &tg, red).unwrap());
        }
    }

    #[test]
    fn two_layer_mlp_matches_finite_differences() {
        let mut rng = Rng::new(21);
        let x = Tensor::glorot(6, 4, &mut rng);
        let w1 = Tensor::glorot(4, 5, &mut rng);
        let b1 = Tensor::glorot(1, 5, &mut rng);
        let w2 = Tensor::glorot(5, 1, &mut rng);
        let y = Tensor::column(vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let loss = |w1v: &Tensor| {
            let mut t = Tape::new();
            let xv = t.constant(x.clone());
            let w1l = t.leaf(w1v.clone(), true);
            let b1l = t.constant(b1.clone());
            let w2l = t.constant(w2.clone());
            let h = t.matmul(xv, w1l).unwrap();
            let h = t.add_row(h, b1l).unwrap();
            let h = t.relu(h);
            let z = t.matmul(h, w2l).unwrap();
            let l = t.bce_with_logits(z, &y, Reduction::Mean).unwrap();
            (t, w1l, l)
        };
        let (mut t, w1l, l) = loss(&w1);
        t.backward(l).unwrap();
        let analytic = t.grad(w1l).unwrap().clone();
        let numeric = numeric_grad(&w1, &|w| {
            let (t, _, l) = loss(w);
            t.value(l).item()
        });
        assert!(rel_err(&analytic, &numeric) < 1e-4);
    }

    #[test]
    fn param_binding_is_cached_and_grads_flow_to_store() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::filled(1, 2, 2.0));
        let mut t = Tape::new();
        let a = t.param(&store, id);
        let b = t.param(&store, id);
        assert_eq!(a, b);
        let m = t.mul(a, b).unwrap();
        let s = t.sum(m);
        t.backward(s).unwrap();
        t.accumulate_into(&mut store);
        assert_eq!(store.grad(id).data(), &[4.0, 4.0]);
    }
}
