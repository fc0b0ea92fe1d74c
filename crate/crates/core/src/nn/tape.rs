//! Reverse-mode tape.
//!
//! Every operation appends a node holding its forward value. `backward`
//! walks the nodes in reverse and accumulates gradients for the nodes that
//! depend on a trainable leaf. Shape errors are programming errors and panic
//! with both shapes in the message.

use alloc::vec;
use alloc::vec::Vec;

use super::ops::{self, PROB_EPS};
use super::{Real, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Select {
        on: Var,
        off: Var,
        mask: Vec<bool>,
    },
    Gather {
        src: Var,
        ids: Vec<usize>,
        frozen: Option<usize>,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Row(Var, usize),
    Col(Var, usize),
    RowDot(Var, Var),
    ScaleRows(Var, Var),
    Softmax(Var),
    CrossEntropy {
        probs: Var,
        gold: Vec<Option<usize>>,
        weights: Vec<T>,
        total: T,
    },
    Sum(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    clamped: usize,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            clamped: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of cross-entropy terms whose gold probability was clamped.
    pub fn clamp_count(&self) -> usize {
        self.clamped
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self
            .value(a)
            .matmul(self.value(b))
            .unwrap_or_else(|e| panic!("{e}"));
        self.push(value, Op::MatMul(a, b), &[a, b])
    }

    /// Adds a `1 x cols` bias row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(bias));
        assert!(
            bv.rows() == 1 && bv.cols() == av.cols(),
            "add_bias shape mismatch: {:?} + {:?}",
            av.shape(),
            bv.shape()
        );
        let mut value = av.clone();
        for r in 0..value.rows() {
            for (v, &b) in value.row_mut(r).iter_mut().zip(bv.data()) {
                *v += b;
            }
        }
        self.push(value, Op::AddBias(a, bias), &[a, bias])
    }

    /// `xW + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add_bias(xw, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        self.push(value, Op::Add(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(
            av.shape(),
            bv.shape(),
            "mul shape mismatch: {:?} vs {:?}",
            av.shape(),
            bv.shape()
        );
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x * y).collect();
        let value = Tensor::from_vec(av.rows(), av.cols(), data).expect("shape checked");
        self.push(value, Op::Mul(a, b), &[a, b])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(ops::sigmoid);
        self.push(value, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(ops::tanh);
        self.push(value, Op::Tanh(a), &[a])
    }

    /// Row-wise choice: row `r` comes from `on` where `mask[r]`, else `off`.
    pub fn select_rows(&mut self, on: Var, off: Var, mask: &[bool]) -> Var {
        let (ov, fv) = (self.value(on), self.value(off));
        assert!(
            ov.shape() == fv.shape() && mask.len() == ov.rows(),
            "select_rows shape mismatch: {:?} / {:?} with {} mask rows",
            ov.shape(),
            fv.shape(),
            mask.len()
        );
        let mut value = fv.clone();
        for (r, &m) in mask.iter().enumerate() {
            if m {
                value.row_mut(r).copy_from_slice(ov.row(r));
            }
        }
        self.push(
            value,
            Op::Select {
                on,
                off,
                mask: mask.to_vec(),
            },
            &[on, off],
        )
    }

    /// Gathers rows of `src` by index. Row `frozen` never receives gradient.
    pub fn gather(&mut self, src: Var, ids: &[usize], frozen: Option<usize>) -> Var {
        let sv = self.value(src);
        let mut value = Tensor::zeros(ids.len(), sv.cols());
        for (r, &id) in ids.iter().enumerate() {
            assert!(
                id < sv.rows(),
                "gather index {id} out of range for {} rows",
                sv.rows()
            );
            value.row_mut(r).copy_from_slice(sv.row(id));
        }
        self.push(
            value,
            Op::Gather {
                src,
                ids: ids.to_vec(),
                frozen,
            },
            &[src],
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut value = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(
                pv.rows(),
                rows,
                "concat_cols row mismatch: {:?} among {} rows",
                pv.shape(),
                rows
            );
            for r in 0..rows {
                value.row_mut(r)[offset..offset + pv.cols()].copy_from_slice(pv.row(r));
            }
            offset += pv.cols();
        }
        self.push(value, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(
                pv.cols(),
                cols,
                "concat_rows column mismatch: {:?} among {} columns",
                pv.shape(),
                cols
            );
            data.extend_from_slice(pv.data());
            rows += pv.rows();
        }
        let value = Tensor::from_vec(rows, cols, data).expect("shape checked");
        self.push(value, Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Row `i` of `a` as a `1 x cols` tensor.
    pub fn row(&mut self, a: Var, i: usize) -> Var {
        let value = Tensor::row_vector(self.value(a).row(i).to_vec());
        self.push(value, Op::Row(a, i), &[a])
    }

    /// Column `j` of `a` as a `rows x 1` tensor.
    pub fn col(&mut self, a: Var, j: usize) -> Var {
        let av = self.value(a);
        let value = Tensor::column_vector((0..av.rows()).map(|r| av.get(r, j)).collect());
        self.push(value, Op::Col(a, j), &[a])
    }

    /// `out[r] = Σ_j t[r][j] · k[j]` for a `1 x D` weight row `k`.
    pub fn row_dot(&mut self, t: Var, k: Var) -> Var {
        let (tv, kv) = (self.value(t), self.value(k));
        assert!(
            kv.rows() == 1 && kv.cols() == tv.cols(),
            "row_dot shape mismatch: {:?} · {:?}",
            tv.shape(),
            kv.shape()
        );
        let value = Tensor::column_vector(
            (0..tv.rows())
                .map(|r| {
                    tv.row(r)
                        .iter()
                        .zip(kv.data())
                        .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
                })
                .collect(),
        );
        self.push(value, Op::RowDot(t, k), &[t, k])
    }

    /// Scales row `r` of `a` by `p[r]` for a `rows x 1` column `p`.
    pub fn scale_rows(&mut self, a: Var, p: Var) -> Var {
        let (av, pv) = (self.value(a), self.value(p));
        assert!(
            pv.cols() == 1 && pv.rows() == av.rows(),
            "scale_rows shape mismatch: {:?} by {:?}",
            av.shape(),
            pv.shape()
        );
        let mut value = av.clone();
        for r in 0..value.rows() {
            let s = pv.data()[r];
            for v in value.row_mut(r) {
                *v *= s;
            }
        }
        self.push(value, Op::ScaleRows(a, p), &[a, p])
    }

    /// Row-wise softmax. With a mask (row-major, same shape as `a`), masked
    /// entries get probability zero; a row with no live entry comes out all
    /// zeros.
    pub fn softmax_rows(&mut self, a: Var, mask: Option<&[bool]>) -> Var {
        let av = self.value(a);
        if let Some(m) = mask {
            assert_eq!(
                m.len(),
                av.len(),
                "softmax mask of {} entries for {:?}",
                m.len(),
                av.shape()
            );
        }
        let mut value = Tensor::zeros(av.rows(), av.cols());
        let cols = av.cols();
        for r in 0..av.rows() {
            let row_mask = mask.map(|m| &m[r * cols..(r + 1) * cols]);
            ops::softmax_into(av.row(r), row_mask, value.row_mut(r));
        }
        self.push(value, Op::Softmax(a), &[a])
    }

    /// Weighted mean cross-entropy over rows of `probs`. Rows with no gold
    /// label are skipped entirely; the mean divides by the summed weights of
    /// the scored rows.
    pub fn cross_entropy(&mut self, probs: Var, gold: &[Option<usize>], weights: &[T]) -> Var {
        let pv = self.value(probs);
        assert!(
            gold.len() == pv.rows() && weights.len() == pv.rows(),
            "cross_entropy: {} labels / {} weights for {:?}",
            gold.len(),
            weights.len(),
            pv.shape()
        );
        let mut total = T::zero();
        let mut loss = T::zero();
        let mut clamped = 0;
        for (r, g) in gold.iter().enumerate() {
            let Some(g) = *g else { continue };
            let ce = ops::cross_entropy(pv.row(r), g);
            clamped += ce.clamped as usize;
            loss += weights[r] * ce.loss;
            total += weights[r];
        }
        let value = if total > T::zero() {
            loss / total
        } else {
            T::zero()
        };
        self.clamped += clamped;
        self.push(
            Tensor::row_vector(vec![value]),
            Op::CrossEntropy {
                probs,
                gold: gold.to_vec(),
                weights: weights.to_vec(),
                total,
            },
            &[probs],
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::row_vector(vec![self.value(a).sum()]);
        self.push(value, Op::Sum(a), &[a])
    }

    /// Gradients of the scalar `loss` with respect to every node that
    /// depends on a trainable leaf.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(
            self.value(loss).shape(),
            (1, 1),
            "backward needs a scalar loss"
        );
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(1, 1, T::one()));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Tensor<T>>], v: Var) -> &'g mut Tensor<T> {
        let (r, c) = self.value(v).shape();
        grads[v.0].get_or_insert_with(|| Tensor::zeros(r, c))
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.wants(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    let ga = g.matmul_nt(self.value(*b)).expect("forward shapes");
                    self.accumulate(grads, *a, ga);
                }
                if self.wants(*b) {
                    let gb = self.value(*a).matmul_tn(g).expect("forward shapes");
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::AddBias(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.wants(*b) {
                    let gb = self.slot(grads, *b);
                    for r in 0..g.rows() {
                        for (acc, &x) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *acc += x;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let data = g.data().iter().zip(bv.data()).map(|(&x, &y)| x * y).collect();
                    self.accumulate(grads, *a, Tensor::from_vec(g.rows(), g.cols(), data).unwrap());
                }
                if self.wants(*b) {
                    let data = g.data().iter().zip(av.data()).map(|(&x, &y)| x * y).collect();
                    self.accumulate(grads, *b, Tensor::from_vec(g.rows(), g.cols(), data).unwrap());
                }
            }
            Op::Sigmoid(a) => {
                let data = g
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(&x, &y)| x * ops::sigmoid_grad(y))
                    .collect();
                self.accumulate(grads, *a, Tensor::from_vec(g.rows(), g.cols(), data).unwrap());
            }
            Op::Tanh(a) => {
                let data = g
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(&x, &y)| x * ops::tanh_grad(y))
                    .collect();
                self.accumulate(grads, *a, Tensor::from_vec(g.rows(), g.cols(), data).unwrap());
            }
            Op::Select { on, off, mask } => {
                for (target, pick) in [(*on, true), (*off, false)] {
                    if !self.wants(target) {
                        continue;
                    }
                    let acc = self.slot(grads, target);
                    for (r, &m) in mask.iter().enumerate() {
                        if m == pick {
                            for (a, &x) in acc.row_mut(r).iter_mut().zip(g.row(r)) {
                                *a += x;
                            }
                        }
                    }
                }
            }
            Op::Gather { src, ids, frozen } => {
                if self.wants(*src) {
                    let acc = self.slot(grads, *src);
                    for (r, &id) in ids.iter().enumerate() {
                        if Some(id) == *frozen {
                            continue;
                        }
                        for (a, &x) in acc.row_mut(id).iter_mut().zip(g.row(r)) {
                            *a += x;
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.wants(p) {
                        let part =
                            Tensor::from_fn(g.rows(), w, |r, c| g.get(r, offset + c));
                        self.accumulate(grads, p, part);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let h = self.value(p).rows();
                    if self.wants(p) {
                        let cols = g.cols();
                        let part = Tensor::from_vec(
                            h,
                            cols,
                            g.data()[offset * cols..(offset + h) * cols].to_vec(),
                        )
                        .unwrap();
                        self.accumulate(grads, p, part);
                    }
                    offset += h;
                }
            }
            Op::Row(a, i) => {
                if self.wants(*a) {
                    let acc = self.slot(grads, *a);
                    for (x, &y) in acc.row_mut(*i).iter_mut().zip(g.data()) {
                        *x += y;
                    }
                }
            }
            Op::Col(a, j) => {
                if self.wants(*a) {
                    let acc = self.slot(grads, *a);
                    for r in 0..g.rows() {
                        let v = acc.get(r, *j) + g.data()[r];
                        acc.set(r, *j, v);
                    }
                }
            }
            Op::RowDot(t, k) => {
                let (tv, kv) = (self.value(*t), self.value(*k));
                if self.wants(*t) {
                    let gt = Tensor::from_fn(tv.rows(), tv.cols(), |r, c| g.data()[r] * kv.data()[c]);
                    self.accumulate(grads, *t, gt);
                }
                if self.wants(*k) {
                    let acc = self.slot(grads, *k);
                    for r in 0..tv.rows() {
                        let gr = g.data()[r];
                        for (a, &x) in acc.data_mut().iter_mut().zip(tv.row(r)) {
                            *a += gr * x;
                        }
                    }
                }
            }
            Op::ScaleRows(a, p) => {
                let (av, pv) = (self.value(*a), self.value(*p));
                if self.wants(*a) {
                    let ga = Tensor::from_fn(av.rows(), av.cols(), |r, c| g.get(r, c) * pv.data()[r]);
                    self.accumulate(grads, *a, ga);
                }
                if self.wants(*p) {
                    let gp = Tensor::column_vector(
                        (0..av.rows())
                            .map(|r| {
                                g.row(r)
                                    .iter()
                                    .zip(av.row(r))
                                    .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
                            })
                            .collect(),
                    );
                    self.accumulate(grads, *p, gp);
                }
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let mut ga = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let row = ops::softmax_backward(y.row(r), g.row(r));
                    ga.row_mut(r).copy_from_slice(&row);
                }
                self.accumulate(grads, *a, ga);
            }
            Op::CrossEntropy {
                probs,
                gold,
                weights,
                total,
            } => {
                if *total <= T::zero() {
                    return;
                }
                let pv = self.value(*probs);
                let upstream = g.data()[0];
                let acc = self.slot(grads, *probs);
                for (r, gl) in gold.iter().enumerate() {
                    let Some(gl) = *gl else { continue };
                    let p = pv.get(r, gl);
                    if p > T::lit(PROB_EPS) {
                        let v = acc.get(r, gl) - upstream * weights[r] / (*total * p);
                        acc.set(r, gl, v);
                    }
                }
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                self.accumulate(grads, *a, Tensor::filled(r, c, g.data()[0]));
            }
        }
    }
}

/// Output of [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn gather_accumulates_duplicates_and_freezes_pad() {
        let mut tape = Tape::new();
        let table = tape.leaf(t(3, 2, &[0.0, 0.0, 1.0, 2.0, 3.0, 4.0]));
        let rows = tape.gather(table, &[0, 1, 1, 2], Some(0));
        assert_eq!(tape.value(rows).row(0), &[0.0, 0.0]);
        let loss = tape.sum(rows);
        let grads = tape.backward(loss);
        let g = grads.get(table).unwrap();
        assert_eq!(g.row(0), &[0.0, 0.0]);
        assert_eq!(g.row(1), &[2.0, 2.0]);
        assert_eq!(g.row(2), &[1.0, 1.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let a = tape.constant(t(1, 2, &[1.0, 2.0]));
        let b = tape.leaf(t(1, 2, &[3.0, 4.0]));
        let m = tape.mul(a, b);
        let loss = tape.sum(m);
        let grads = tape.backward(loss);
        assert!(grads.get(a).is_none());
        assert_eq!(grads.get(b).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn cross_entropy_skips_unlabelled_rows() {
        let mut tape = Tape::new();
        let p = tape.leaf(t(2, 2, &[0.5, 0.5, 0.9, 0.1]));
        let a = tape.cross_entropy(p, &[Some(0), None], &[1.0, 1.0]);
        let mut tape2 = Tape::new();
        let p2 = tape2.leaf(t(1, 2, &[0.5, 0.5]));
        let b = tape2.cross_entropy(p2, &[Some(0)], &[1.0]);
        assert_eq!(
            tape.value(a).data()[0].to_bits(),
            tape2.value(b).data()[0].to_bits()
        );
    }

    #[test]
    fn masked_softmax_row_all_masked_is_zero() {
        let mut tape = Tape::<f64>::new();
        let s = tape.leaf(t(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let p = tape.softmax_rows(s, Some(&[true, true, false, false]));
        assert_eq!(tape.value(p).row(1), &[0.0, 0.0]);
        let row0: f64 = tape.value(p).row(0).iter().sum();
        assert!((row0 - 1.0).abs() < 1e-12);
    }
}
