use crate::error::{Error, Result};
use crate::scalar::Real;

use super::tensor::Tensor;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise operation selector for [`Graph::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise<T> {
    Add,
    Sub,
    Mul,
    Scale(T),
    Relu,
    Abs,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Abs(Var),
    AddBias(Var, Var),
    Reshape(Var),
    GroupMax { input: Var, argmax: Vec<usize> },
    Concat(Var, Var),
    Gather { input: Var, indices: Vec<usize> },
    Interpolate {
        input: Var,
        indices: Vec<usize>,
        weights: Vec<T>,
        k: usize,
    },
    RowNorm(Var),
    Sum(Var),
}

impl<T> Op<T> {
    fn operands(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::AddBias(a, b) | Op::Concat(a, b) => vec![*a, *b],
            Op::Scale(a, _) | Op::Relu(a) | Op::Abs(a) | Op::Reshape(a) => vec![*a],
            Op::RowNorm(a) | Op::Sum(a) => vec![*a],
            Op::GroupMax { input, .. }
            | Op::Gather { input, .. }
            | Op::Interpolate { input, .. } => vec![*input],
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    // some ancestor requires a gradient
    tracked: bool,
    grad: Option<Vec<T>>,
}

/// Append-only record of tensor operations supporting one reverse sweep.
///
/// Every node only refers to nodes recorded before it, so the insertion order
/// is already a topological order and `backward` walks it in reverse.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            tracked: requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let tracked = op.operands().iter().any(|v| self.nodes[v.0].tracked);
        self.nodes.push(Node {
            value,
            op,
            requires_grad: false,
            tracked,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a `requires_grad` node, if any backward pass
    /// reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Operand indices of a node, all strictly smaller than the node's own.
    pub fn operands(&self, v: Var) -> Vec<Var> {
        self.nodes[v.0].op.operands()
    }

    fn matrix_dims(&self, v: Var) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::Dimension(format!("expected a matrix, got shape {s:?}"))),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims(a)?;
        let (k2, n) = self.matrix_dims(b)?;
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul of {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            self.value(a).data(),
            (k as isize, 1),
            self.value(b).data(),
            (n as isize, 1),
            &mut out,
            false,
        );
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn elementwise(&mut self, kind: Elementwise<T>, a: Var, b: Option<Var>) -> Result<Var> {
        match (kind, b) {
            (Elementwise::Add, Some(b)) => self.add(a, b),
            (Elementwise::Sub, Some(b)) => self.sub(a, b),
            (Elementwise::Mul, Some(b)) => self.mul(a, b),
            (Elementwise::Scale(s), None) => Ok(self.scale(a, s)),
            (Elementwise::Relu, None) => Ok(self.relu(a)),
            (Elementwise::Abs, None) => Ok(self.abs(a)),
            (k, _) => Err(Error::Contract(format!("wrong operand count for {k:?}"))),
        }
    }

    fn broadcast_shape(&self, a: Var, b: Var) -> Result<Vec<usize>> {
        let (sa, sb) = (self.value(a), self.value(b));
        if sa.shape() == sb.shape() {
            Ok(sa.shape().to_vec())
        } else if sb.is_scalar() {
            Ok(sa.shape().to_vec())
        } else if sa.is_scalar() {
            Ok(sb.shape().to_vec())
        } else {
            Err(Error::Dimension(format!(
                "elementwise on {:?} and {:?}",
                sa.shape(),
                sb.shape()
            )))
        }
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let shape = self.broadcast_shape(a, b)?;
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let len: usize = shape.iter().product();
        let pick = |d: &[T], i: usize| if d.len() == 1 { d[0] } else { d[i] };
        let data = (0..len).map(|i| f(pick(va, i), pick(vb, i))).collect();
        Tensor::new(shape, data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    fn unary(&mut self, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let src = self.value(a);
        let data = src.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        self.push(value, op)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        self.unary(a, Op::Scale(a, s), |x| x * s)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > T::zero() { x } else { T::zero() })
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Op::Abs(a), |x| x.abs())
    }

    /// Adds a length-`c` bias to every row of an `n×c` matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (n, c) = self.matrix_dims(a)?;
        if self.value(bias).len() != c {
            return Err(Error::Dimension(format!(
                "bias {:?} for rows of width {c}",
                self.shape(bias)
            )));
        }
        let b = self.value(bias).data();
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_exact_mut(c.max(1)).take(n) {
            row.iter_mut().zip(b).for_each(|(x, &y)| *x += y);
        }
        let value = Tensor::new(vec![n, c], data)?;
        Ok(self.push(value, Op::AddBias(a, bias)))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let src = self.value(a);
        if shape.iter().product::<usize>() != src.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} into {shape:?}",
                src.shape()
            )));
        }
        let value = src.clone().with_shape(shape);
        Ok(self.push(value, Op::Reshape(a)))
    }

    /// Max over the middle axis of a `g×n×c` tensor, giving `g×c`.
    ///
    /// The backward pass routes each gradient entry to the first maximal
    /// element of its group.
    pub fn reduce_max_over_group(&mut self, a: Var) -> Result<Var> {
        let (g, n, c) = match self.shape(a) {
            [g, n, c] => (*g, *n, *c),
            s => {
                return Err(Error::Dimension(format!(
                    "group max expects rank 3, got {s:?}"
                )))
            }
        };
        if n == 0 {
            return Err(Error::Contract("max over an empty group".into()));
        }
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(g * c);
        let mut argmax = Vec::with_capacity(g * c);
        for gi in 0..g {
            let base = gi * n * c;
            for ci in 0..c {
                let mut best = base + ci;
                for ni in 1..n {
                    let idx = base + ni * c + ci;
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                out.push(src[best]);
                argmax.push(best);
            }
        }
        let value = Tensor::new(vec![g, c], out)?;
        Ok(self.push(value, Op::GroupMax { input: a, argmax }))
    }

    /// Channel-wise concatenation of `n×c1` and `n×c2`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, ca) = self.matrix_dims(a)?;
        let (nb, cb) = self.matrix_dims(b)?;
        if na != nb {
            return Err(Error::Dimension(format!(
                "concat of {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(na * (ca + cb));
        for i in 0..na {
            data.extend_from_slice(&va[i * ca..(i + 1) * ca]);
            data.extend_from_slice(&vb[i * cb..(i + 1) * cb]);
        }
        let value = Tensor::new(vec![na, ca + cb], data)?;
        Ok(self.push(value, Op::Concat(a, b)))
    }

    /// Copies rows of an `n×c` matrix in the given order.
    pub fn gather_points(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let (n, c) = self.matrix_dims(a)?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::Index { index: bad, len: n });
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            data.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        let value = Tensor::new(vec![indices.len(), c], data)?;
        Ok(self.push(
            value,
            Op::Gather {
                input: a,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Weighted sum of `k` source rows per output row:
    /// `out[i] = Σ_j weights[i·k+j] · a[indices[i·k+j]]`.
    pub fn interpolate(
        &mut self,
        a: Var,
        indices: Vec<usize>,
        weights: Vec<T>,
        k: usize,
    ) -> Result<Var> {
        let (n, c) = self.matrix_dims(a)?;
        if k == 0 || indices.len() != weights.len() || indices.len() % k != 0 {
            return Err(Error::Dimension(format!(
                "interpolation with {} indices, {} weights, k={k}",
                indices.len(),
                weights.len()
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::Index { index: bad, len: n });
        }
        let rows = indices.len() / k;
        let src = self.value(a).data();
        let mut data = vec![T::zero(); rows * c];
        for (r, out) in data.chunks_exact_mut(c.max(1)).enumerate().take(rows) {
            for j in 0..k {
                let (idx, w) = (indices[r * k + j], weights[r * k + j]);
                let row = &src[idx * c..(idx + 1) * c];
                out.iter_mut().zip(row).for_each(|(o, &x)| *o += w * x);
            }
        }
        let value = Tensor::new(vec![rows, c], data)?;
        Ok(self.push(
            value,
            Op::Interpolate {
                input: a,
                indices,
                weights,
                k,
            },
        ))
    }

    /// Euclidean norm of each row of an `n×c` matrix, giving a length-`n`
    /// vector. The gradient at a zero row is the zero vector.
    pub fn row_norm(&mut self, a: Var) -> Result<Var> {
        let (n, c) = self.matrix_dims(a)?;
        let src = self.value(a).data();
        let data = (0..n)
            .map(|i| {
                src[i * c..(i + 1) * c]
                    .iter()
                    .map(|&x| x * x)
                    .sum::<T>()
                    .sqrt()
            })
            .collect();
        let value = Tensor::new(vec![n], data)?;
        Ok(self.push(value, Op::RowNorm(a)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(total), Op::Sum(a))
    }

    /// Reverse sweep from a scalar node. Gradients accumulate into every
    /// `requires_grad` node reachable from `loss` until [`Graph::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward from non-scalar of shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            self.propagate(idx, &g, &mut grads);
            let node = &mut self.nodes[idx];
            if node.requires_grad {
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                    None => node.grad = Some(g),
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[idx];
        let val = |v: Var| self.nodes[v.0].value.data();

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.matrix_dims(*a).expect("matrix");
                let n = self.nodes[b.0].value.shape()[1];
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    // dA = dC · Bᵀ
                    T::gemm(m, n, k, g, (n as isize, 1), val(*b), (1, n as isize), ga, true);
                }
                if let Some(gb) = slot(&self.nodes, grads, *b) {
                    // dB = Aᵀ · dC
                    T::gemm(k, m, n, val(*a), (1, k as isize), g, (n as isize, 1), gb, true);
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) {
                    -T::one()
                } else {
                    T::one()
                };
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    accumulate_broadcast(ga, g, T::one());
                }
                if let Some(gb) = slot(&self.nodes, grads, *b) {
                    accumulate_broadcast(gb, g, sign);
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let pick = |d: &[T], i: usize| if d.len() == 1 { d[0] } else { d[i] };
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    let prod: Vec<T> = (0..g.len()).map(|i| g[i] * pick(vb, i)).collect();
                    accumulate_broadcast(ga, &prod, T::one());
                }
                if let Some(gb) = slot(&self.nodes, grads, *b) {
                    let prod: Vec<T> = (0..g.len()).map(|i| g[i] * pick(va, i)).collect();
                    accumulate_broadcast(gb, &prod, T::one());
                }
            }
            Op::Scale(a, s) => {
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y * *s);
                }
            }
            Op::Relu(a) => {
                let va = val(*a);
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    for ((x, &y), &v) in ga.iter_mut().zip(g).zip(va) {
                        if v > T::zero() {
                            *x += y;
                        }
                    }
                }
            }
            Op::Abs(a) => {
                let va = val(*a);
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    for ((x, &y), &v) in ga.iter_mut().zip(g).zip(va) {
                        if v > T::zero() {
                            *x += y;
                        } else if v < T::zero() {
                            *x -= y;
                        }
                    }
                }
            }
            Op::AddBias(a, b) => {
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y);
                }
                if let Some(gb) = slot(&self.nodes, grads, *b) {
                    let c = gb.len();
                    if c > 0 {
                        for row in g.chunks_exact(c) {
                            gb.iter_mut().zip(row).for_each(|(x, &y)| *x += y);
                        }
                    }
                }
            }
            Op::Reshape(a) => {
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y);
                }
            }
            Op::GroupMax { input, argmax } => {
                if let Some(ga) = slot(&self.nodes, grads, *input) {
                    for (&src, &y) in argmax.iter().zip(g) {
                        ga[src] += y;
                    }
                }
            }
            Op::Concat(a, b) => {
                let ca = self.nodes[a.0].value.shape()[1];
                let cb = self.nodes[b.0].value.shape()[1];
                let width = ca + cb;
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    if ca > 0 {
                        for (dst, row) in ga.chunks_exact_mut(ca).zip(g.chunks_exact(width)) {
                            dst.iter_mut().zip(&row[..ca]).for_each(|(x, &y)| *x += y);
                        }
                    }
                }
                if let Some(gb) = slot(&self.nodes, grads, *b) {
                    if cb > 0 {
                        for (dst, row) in gb.chunks_exact_mut(cb).zip(g.chunks_exact(width)) {
                            dst.iter_mut().zip(&row[ca..]).for_each(|(x, &y)| *x += y);
                        }
                    }
                }
            }
            Op::Gather { input, indices } => {
                let c = self.nodes[input.0].value.shape()[1];
                if let Some(ga) = slot(&self.nodes, grads, *input) {
                    for (r, &i) in indices.iter().enumerate() {
                        let dst = &mut ga[i * c..(i + 1) * c];
                        dst.iter_mut()
                            .zip(&g[r * c..(r + 1) * c])
                            .for_each(|(x, &y)| *x += y);
                    }
                }
            }
            Op::Interpolate {
                input,
                indices,
                weights,
                k,
            } => {
                let c = self.nodes[input.0].value.shape()[1];
                if let Some(ga) = slot(&self.nodes, grads, *input) {
                    for (j, (&i, &w)) in indices.iter().zip(weights).enumerate() {
                        let r = j / k;
                        let dst = &mut ga[i * c..(i + 1) * c];
                        dst.iter_mut()
                            .zip(&g[r * c..(r + 1) * c])
                            .for_each(|(x, &y)| *x += w * y);
                    }
                }
            }
            Op::RowNorm(a) => {
                let c = self.nodes[a.0].value.shape()[1];
                let va = val(*a);
                let norms = node.value.data();
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    for (r, (&norm, &y)) in norms.iter().zip(g).enumerate() {
                        if norm > T::zero() {
                            let f = y / norm;
                            for j in r * c..(r + 1) * c {
                                ga[j] += f * va[j];
                            }
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    let y = g[0];
                    ga.iter_mut().for_each(|x| *x += y);
                }
            }
        }
    }
}

fn slot<'a, T: Real>(
    nodes: &[Node<T>],
    grads: &'a mut [Option<Vec<T>>],
    v: Var,
) -> Option<&'a mut Vec<T>> {
    if !nodes[v.0].tracked {
        return None;
    }
    let len = nodes[v.0].value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); len]))
}

fn accumulate_broadcast<T: Real>(dst: &mut [T], g: &[T], sign: T) {
    if dst.len() == g.len() {
        dst.iter_mut().zip(g).for_each(|(x, &y)| *x += sign * y);
    } else {
        // scalar operand broadcast over g
        let total: T = g.iter().copied().sum();
        dst[0] += sign * total;
    }
}
