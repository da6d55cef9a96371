//! Reverse-mode differentiation over dense tensors.
//!
//! A [`Tape`] records every primitive in evaluation order. [`Tape::backward`]
//! replays the record in reverse, visiting each node once and accumulating
//! adjoints into its inputs. Nodes that cannot reach a parameter are never
//! given an adjoint buffer.

use std::cell::{Ref, RefCell};

use crate::error::{Error, Result};
use crate::numerics::tensor::matmul_into;
use crate::numerics::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, T),
    AddScalar(usize),
    Relu(usize),
    Sigmoid(usize),
    Log { input: usize, floor: T },
    Exp(usize),
    Clamp { input: usize, lo: T, hi: T },
    SoftmaxRows(usize),
    LogSoftmaxRows(usize),
    Sum(usize),
    Mean(usize),
    SumCols(usize),
    Extreme { input: usize, axis: Axis, picks: Vec<usize> },
    SelectRows { input: usize, rows: Vec<usize> },
    Gather { input: usize, cols: Vec<usize> },
    Reverse { input: usize, coefficient: T },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Record of primitive operations for one forward evaluation.
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trainable leaf: receives a gradient on [`Tape::backward`].
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that is treated as a constant.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: T) -> Var<'_, T> {
        self.constant(Tensor::scalar(value))
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Propagates adjoints from a single-element `loss` back to every node.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id].value;
        if root.len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                lhs: root.shape().to_vec(),
                rhs: vec![1, 1],
            });
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![T::one()]);

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else {
                continue;
            };
            let node = &nodes[id];
            propagate(&nodes, &mut grads, node, &g);
            grads[id] = Some(g);
        }

        let grads = nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| match g {
                Some(g) if node.requires_grad => Some(Tensor::from_vec(node.value.shape(), g)),
                None if node.requires_grad && matches!(node.op, Op::Leaf) => {
                    Some(Ok(Tensor::zeros(node.value.shape())))
                }
                _ => None,
            })
            .map(Option::transpose)
            .collect::<Result<Vec<_>>>()?;
        Ok(Gradients { grads })
    }
}

fn accumulate<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Vec<T>>],
    id: usize,
    f: impl FnOnce(&mut [T]),
) {
    if !nodes[id].requires_grad {
        return;
    }
    let buf = grads[id].get_or_insert_with(|| vec![T::zero(); nodes[id].value.len()]);
    f(buf);
}

fn propagate<T: Scalar>(nodes: &[Node<T>], grads: &mut [Option<Vec<T>>], node: &Node<T>, g: &[T]) {
    let out = node.value.data();
    match &node.op {
        Op::Leaf => {}
        &Op::MatMul(a, b) => {
            let (av, bv) = (&nodes[a].value, &nodes[b].value);
            let (m, k, n) = (av.rows(), av.cols(), bv.cols());
            accumulate(nodes, grads, a, |ga| {
                // dA = dC · Bᵀ
                let bt = bv.transpose();
                matmul_into(g, bt.data(), ga, m, n, k);
            });
            accumulate(nodes, grads, b, |gb| {
                // dB = Aᵀ · dC
                let at = av.transpose();
                matmul_into(at.data(), g, gb, k, m, n);
            });
        }
        &Op::Add(a, b) => {
            accumulate(nodes, grads, a, |ga| add_into(ga, g));
            accumulate(nodes, grads, b, |gb| add_into(gb, g));
        }
        &Op::Sub(a, b) => {
            accumulate(nodes, grads, a, |ga| add_into(ga, g));
            accumulate(nodes, grads, b, |gb| {
                for (d, &s) in gb.iter_mut().zip(g) {
                    *d = *d - s;
                }
            });
        }
        &Op::Mul(a, b) => {
            let (av, bv) = (nodes[a].value.data(), nodes[b].value.data());
            accumulate(nodes, grads, a, |ga| {
                for i in 0..ga.len() {
                    ga[i] = ga[i] + g[i] * bv[i];
                }
            });
            accumulate(nodes, grads, b, |gb| {
                for i in 0..gb.len() {
                    gb[i] = gb[i] + g[i] * av[i];
                }
            });
        }
        &Op::AddRow(a, b) => {
            let cols = nodes[b].value.len();
            accumulate(nodes, grads, a, |ga| add_into(ga, g));
            accumulate(nodes, grads, b, |gb| {
                for row in g.chunks(cols) {
                    add_into(gb, row);
                }
            });
        }
        &Op::Scale(a, c) => accumulate(nodes, grads, a, |ga| {
            for (d, &s) in ga.iter_mut().zip(g) {
                *d = *d + c * s;
            }
        }),
        &Op::AddScalar(a) => accumulate(nodes, grads, a, |ga| add_into(ga, g)),
        &Op::Relu(a) => {
            let x = nodes[a].value.data();
            accumulate(nodes, grads, a, |ga| {
                for i in 0..ga.len() {
                    if x[i] > T::zero() {
                        ga[i] = ga[i] + g[i];
                    }
                }
            });
        }
        &Op::Sigmoid(a) => accumulate(nodes, grads, a, |ga| {
            for i in 0..ga.len() {
                ga[i] = ga[i] + g[i] * out[i] * (T::one() - out[i]);
            }
        }),
        &Op::Log { input, floor } => {
            let x = nodes[input].value.data();
            accumulate(nodes, grads, input, |ga| {
                for i in 0..ga.len() {
                    if x[i] > floor {
                        ga[i] = ga[i] + g[i] / x[i];
                    }
                }
            });
        }
        &Op::Exp(a) => accumulate(nodes, grads, a, |ga| {
            for i in 0..ga.len() {
                ga[i] = ga[i] + g[i] * out[i];
            }
        }),
        &Op::Clamp { input, lo, hi } => {
            let x = nodes[input].value.data();
            accumulate(nodes, grads, input, |ga| {
                for i in 0..ga.len() {
                    if x[i] >= lo && x[i] <= hi {
                        ga[i] = ga[i] + g[i];
                    }
                }
            });
        }
        &Op::SoftmaxRows(a) => {
            let cols = node.value.cols();
            accumulate(nodes, grads, a, |ga| {
                for ((gr, yr), dr) in g.chunks(cols).zip(out.chunks(cols)).zip(ga.chunks_mut(cols)) {
                    let dot = gr.iter().zip(yr).fold(T::zero(), |acc, (&gv, &yv)| acc + gv * yv);
                    for j in 0..cols {
                        dr[j] = dr[j] + yr[j] * (gr[j] - dot);
                    }
                }
            });
        }
        &Op::LogSoftmaxRows(a) => {
            let cols = node.value.cols();
            accumulate(nodes, grads, a, |ga| {
                for ((gr, yr), dr) in g.chunks(cols).zip(out.chunks(cols)).zip(ga.chunks_mut(cols)) {
                    let total = gr.iter().fold(T::zero(), |acc, &gv| acc + gv);
                    for j in 0..cols {
                        dr[j] = dr[j] + gr[j] - yr[j].exp() * total;
                    }
                }
            });
        }
        &Op::Sum(a) => accumulate(nodes, grads, a, |ga| {
            for d in ga.iter_mut() {
                *d = *d + g[0];
            }
        }),
        &Op::Mean(a) => {
            let n = T::of_usize(nodes[a].value.len());
            accumulate(nodes, grads, a, |ga| {
                for d in ga.iter_mut() {
                    *d = *d + g[0] / n;
                }
            });
        }
        &Op::SumCols(a) => {
            let cols = nodes[a].value.cols();
            accumulate(nodes, grads, a, |ga| {
                for (dr, &gv) in ga.chunks_mut(cols).zip(g) {
                    for d in dr.iter_mut() {
                        *d = *d + gv;
                    }
                }
            });
        }
        Op::Extreme { input, axis, picks } => {
            let cols = nodes[*input].value.cols();
            accumulate(nodes, grads, *input, |ga| match axis {
                Axis::Cols => {
                    for (i, &j) in picks.iter().enumerate() {
                        ga[i * cols + j] = ga[i * cols + j] + g[i];
                    }
                }
                Axis::Rows => {
                    for (j, &i) in picks.iter().enumerate() {
                        ga[i * cols + j] = ga[i * cols + j] + g[j];
                    }
                }
            });
        }
        Op::SelectRows { input, rows } => {
            let cols = nodes[*input].value.cols();
            accumulate(nodes, grads, *input, |ga| {
                for (k, &r) in rows.iter().enumerate() {
                    add_into(&mut ga[r * cols..(r + 1) * cols], &g[k * cols..(k + 1) * cols]);
                }
            });
        }
        Op::Gather { input, cols: picks } => {
            let cols = nodes[*input].value.cols();
            accumulate(nodes, grads, *input, |ga| {
                for (i, &j) in picks.iter().enumerate() {
                    ga[i * cols + j] = ga[i * cols + j] + g[i];
                }
            });
        }
        &Op::Reverse { input, coefficient } => accumulate(nodes, grads, input, |ga| {
            for (d, &s) in ga.iter_mut().zip(g) {
                *d = *d - coefficient * s;
            }
        }),
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `var`; `None` when the node does not require one.
    pub fn get(&self, var: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient for `var`, or zeros shaped like its value.
    pub fn wrt(&self, var: Var<'_, T>) -> Tensor<T> {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.value().shape()))
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor<T>> {
        Ref::map(self.tape.nodes.borrow(), |nodes| &nodes[self.id].value)
    }

    pub fn to_tensor(&self) -> Tensor<T> {
        self.value().clone()
    }

    /// Value of a single-element variable.
    pub fn item(&self) -> T {
        self.value().item()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad(self.id)
    }

    /// Copy of the current value with no path back to the inputs.
    pub fn detach(self) -> Self {
        self.tape.constant(self.to_tensor())
    }

    fn unary(self, value: Tensor<T>, op: Op<T>) -> Self {
        let rg = self.requires_grad();
        self.tape.push(value, op, rg)
    }

    fn binary(self, other: Self, value: Tensor<T>, op: Op<T>) -> Self {
        let rg = self.requires_grad() || other.requires_grad();
        self.tape.push(value, op, rg)
    }

    fn check_same(self, other: Self, op: &'static str) -> Result<()> {
        let (a, b) = (self.shape(), other.shape());
        if a != b {
            return Err(Error::Shape { op, lhs: a, rhs: b });
        }
        Ok(())
    }

    fn zip_with(self, other: Self, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let a = self.value();
        let b = other.value();
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(a.shape(), data).expect("same-shape operands")
    }

    pub fn matmul(self, other: Self) -> Result<Self> {
        let value = self.value().matmul(&other.value())?;
        Ok(self.binary(other, value, Op::MatMul(self.id, other.id)))
    }

    pub fn add(self, other: Self) -> Result<Self> {
        self.check_same(other, "add")?;
        let value = self.zip_with(other, |a, b| a + b);
        Ok(self.binary(other, value, Op::Add(self.id, other.id)))
    }

    pub fn sub(self, other: Self) -> Result<Self> {
        self.check_same(other, "sub")?;
        let value = self.zip_with(other, |a, b| a - b);
        Ok(self.binary(other, value, Op::Sub(self.id, other.id)))
    }

    pub fn mul(self, other: Self) -> Result<Self> {
        self.check_same(other, "mul")?;
        let value = self.zip_with(other, |a, b| a * b);
        Ok(self.binary(other, value, Op::Mul(self.id, other.id)))
    }

    /// Adds a `[1, m]` row to every row of an `[n, m]` matrix.
    pub fn add_row(self, row: Self) -> Result<Self> {
        let (shape, rshape) = (self.shape(), row.shape());
        let cols = self.value().cols();
        if rshape.len() != 2 || rshape[0] != 1 || rshape[1] != cols {
            return Err(Error::Shape {
                op: "add_row",
                lhs: shape,
                rhs: rshape,
            });
        }
        let value = {
            let a = self.value();
            let r = row.value();
            let data = a
                .data()
                .chunks(cols)
                .flat_map(|chunk| chunk.iter().zip(r.data()).map(|(&x, &b)| x + b))
                .collect();
            Tensor::from_vec(a.shape(), data)?
        };
        Ok(self.binary(row, value, Op::AddRow(self.id, row.id)))
    }

    pub fn scale(self, c: T) -> Self {
        let value = self.value().map(|v| v * c);
        self.unary(value, Op::Scale(self.id, c))
    }

    pub fn neg(self) -> Self {
        self.scale(-T::one())
    }

    pub fn add_scalar(self, c: T) -> Self {
        let value = self.value().map(|v| v + c);
        self.unary(value, Op::AddScalar(self.id))
    }

    pub fn relu(self) -> Self {
        let value = self.value().map(|v| if v > T::zero() { v } else { T::zero() });
        self.unary(value, Op::Relu(self.id))
    }

    pub fn sigmoid(self) -> Self {
        let value = self.value().map(sigmoid);
        self.unary(value, Op::Sigmoid(self.id))
    }

    /// Natural log with the input floored at `floor`; no gradient below it.
    pub fn log_floor(self, floor: T) -> Self {
        let value = self.value().map(|v| v.max(floor).ln());
        self.unary(value, Op::Log { input: self.id, floor })
    }

    pub fn exp(self) -> Self {
        let value = self.value().map(T::exp);
        self.unary(value, Op::Exp(self.id))
    }

    /// Clamps into `[lo, hi]`; gradient passes only inside the interval.
    pub fn clamp(self, lo: T, hi: T) -> Self {
        let value = self.value().map(|v| v.max(lo).min(hi));
        self.unary(value, Op::Clamp { input: self.id, lo, hi })
    }

    pub fn softmax_rows(self) -> Self {
        let value = super::functional::softmax_rows(&self.value());
        self.unary(value, Op::SoftmaxRows(self.id))
    }

    pub fn log_softmax_rows(self) -> Self {
        let value = super::functional::log_softmax_rows(&self.value());
        self.unary(value, Op::LogSoftmaxRows(self.id))
    }

    pub fn sum(self) -> Self {
        let value = Tensor::scalar(self.value().data().iter().fold(T::zero(), |a, &v| a + v));
        self.unary(value, Op::Sum(self.id))
    }

    /// Mean over all elements; the mean of an empty tensor is zero.
    pub fn mean(self) -> Self {
        let v = self.value();
        let total = v.data().iter().fold(T::zero(), |a, &x| a + x);
        let value = if v.is_empty() {
            T::zero()
        } else {
            total / T::of_usize(v.len())
        };
        drop(v);
        self.unary(Tensor::scalar(value), Op::Mean(self.id))
    }

    /// Row sums: `[n, m] → [n, 1]`.
    pub fn sum_cols(self) -> Self {
        let value = {
            let v = self.value();
            let cols = v.cols();
            let sums = v
                .data()
                .chunks(cols.max(1))
                .map(|r| r.iter().fold(T::zero(), |a, &x| a + x))
                .collect();
            Tensor::column(sums)
        };
        self.unary(value, Op::SumCols(self.id))
    }

    fn extreme(self, axis: Axis, better: impl Fn(T, T) -> bool) -> Self {
        let (value, picks) = {
            let v = self.value();
            let (rows, cols) = (v.rows(), v.cols());
            let mut picks = Vec::new();
            let mut vals = Vec::new();
            match axis {
                Axis::Cols => {
                    for i in 0..rows {
                        let row = v.row(i);
                        let mut best = 0;
                        for j in 1..cols {
                            if better(row[j], row[best]) {
                                best = j;
                            }
                        }
                        picks.push(best);
                        vals.push(row[best]);
                    }
                    (Tensor::column(vals), picks)
                }
                Axis::Rows => {
                    for j in 0..cols {
                        let mut best = 0;
                        for i in 1..rows {
                            if better(v.get(i, j), v.get(best, j)) {
                                best = i;
                            }
                        }
                        picks.push(best);
                        vals.push(v.get(best, j));
                    }
                    (Tensor::from_vec(&[1, cols], vals).expect("row shape"), picks)
                }
            }
        };
        self.unary(
            value,
            Op::Extreme {
                input: self.id,
                axis,
                picks,
            },
        )
    }

    /// Maximum along `axis`; ties resolve to the first index.
    pub fn max_along(self, axis: Axis) -> Self {
        self.extreme(axis, |a, b| a > b)
    }

    pub fn min_along(self, axis: Axis) -> Self {
        self.extreme(axis, |a, b| a < b)
    }

    pub fn select_rows(self, rows: &[usize]) -> Result<Self> {
        let n = self.value().rows();
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::Shape {
                op: "select_rows",
                lhs: self.shape(),
                rhs: vec![bad],
            });
        }
        let value = self.value().select_rows(rows);
        Ok(self.unary(
            value,
            Op::SelectRows {
                input: self.id,
                rows: rows.to_vec(),
            },
        ))
    }

    /// Picks element `cols[i]` from row `i`: `[n, m] → [n, 1]`.
    pub fn gather(self, cols: &[usize]) -> Result<Self> {
        let value = {
            let v = self.value();
            if cols.len() != v.rows() || cols.iter().any(|&c| c >= v.cols()) {
                return Err(Error::Shape {
                    op: "gather",
                    lhs: v.shape().to_vec(),
                    rhs: vec![cols.len()],
                });
            }
            Tensor::column(cols.iter().enumerate().map(|(i, &j)| v.get(i, j)).collect())
        };
        Ok(self.unary(
            value,
            Op::Gather {
                input: self.id,
                cols: cols.to_vec(),
            },
        ))
    }

    /// Identity forward; the adjoint is multiplied by `-coefficient`.
    pub fn reverse_gradient(self, coefficient: T) -> Self {
        let value = self.to_tensor();
        self.unary(
            value,
            Op::Reverse {
                input: self.id,
                coefficient,
            },
        )
    }
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f64>]) -> Tensor<f64> {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let tape = Tape::new();
        let i2 = tape.constant(Tensor::identity(2));
        let m = tape.constant(t(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        assert_eq!(i2.matmul(m).unwrap().to_tensor(), m.to_tensor());

        let a = tape.constant(t(&[vec![1.0, 0.0]]));
        let b = tape.constant(t(&[vec![0.0], vec![5.0]]));
        assert_eq!(a.matmul(b).unwrap().to_tensor().data(), &[0.0]);
        assert!(matches!(a.matmul(a), Err(Error::Shape { .. })));
    }

    #[test]
    fn matmul_adjoints_match_closed_form() {
        let tape = Tape::new();
        let a = tape.param(t(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let b = tape.param(t(&[vec![5.0], vec![6.0]]));
        let loss = a.matmul(b).unwrap().sum();
        let g = tape.backward(loss).unwrap();
        // dA = 1·Bᵀ, dB = Aᵀ·1
        assert_eq!(g.wrt(a).data(), &[5.0, 6.0, 5.0, 6.0]);
        assert_eq!(g.wrt(b).data(), &[4.0, 6.0]);
    }

    #[test]
    fn unreached_params_get_zero_gradients() {
        let tape = Tape::new();
        let a = tape.param(Tensor::full(&[2, 2], 1.0));
        let unused = tape.param(Tensor::full(&[3, 1], 1.0));
        let c = tape.constant(Tensor::full(&[2, 2], 2.0));
        let loss = a.mul(c).unwrap().sum();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(unused).data(), &[0.0; 3]);
        assert!(g.get(unused).is_some());
        assert!(g.get(c).is_none());
    }

    #[test]
    fn backward_requires_scalar_root() {
        let tape = Tape::<f64>::new();
        let a = tape.param(Tensor::zeros(&[2, 2]));
        assert!(tape.backward(a).is_err());
    }

    #[test]
    fn reverse_gradient_negates_adjoint() {
        let tape = Tape::new();
        let a = tape.param(t(&[vec![1.0, -2.0]]));
        let plain = tape.backward(a.sigmoid().sum()).unwrap().wrt(a);
        let reversed = tape.backward(a.reverse_gradient(1.0).sigmoid().sum()).unwrap().wrt(a);
        for (p, r) in plain.data().iter().zip(reversed.data()) {
            assert_eq!(*r, -*p);
        }
        let killed = tape.backward(a.reverse_gradient(0.0).sigmoid().sum()).unwrap().wrt(a);
        assert!(killed.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn extremes_pick_first_on_ties() {
        let tape = Tape::new();
        let a = tape.param(t(&[vec![1.0, 3.0, 3.0], vec![0.0, -1.0, 0.0]]));
        let mx = a.max_along(Axis::Cols);
        assert_eq!(mx.to_tensor().data(), &[3.0, 0.0]);
        let g = tape.backward(mx.sum()).unwrap().wrt(a);
        assert_eq!(g.data(), &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let mn = a.min_along(Axis::Rows);
        assert_eq!(mn.to_tensor().data(), &[0.0, -1.0, 0.0]);
    }
}
