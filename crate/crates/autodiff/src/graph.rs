use crate::{AutodiffError, Element, ParamId, ParamSet, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Clone, Debug)]
pub(crate) enum Op<T> {
    Leaf,
    Param(usize),
    /// `[M, k] × [k, n]`, leading dimensions of the left operand flattened into `M`.
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    /// Per-batch `[m, k] × [k, n]`, or `× [n, k]ᵀ` when `trans_b`.
    BatchMatMul { a: Var, b: Var, batch: usize, m: usize, k: usize, n: usize, trans_b: bool },
    AddBias { x: Var, b: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, c: T },
    AddScalar { x: Var },
    Tanh { x: Var },
    Relu { x: Var },
    Exp { x: Var },
    Log { x: Var },
    Square { x: Var },
    Softmax { x: Var, n: usize },
    LogSoftmax { x: Var, n: usize },
    MaskedFill { x: Var, mask: Vec<bool> },
    Sum { x: Var },
    Mean { x: Var },
    SumLast { x: Var, n: usize },
    MeanRows { x: Var, rows: usize, cols: usize },
    ConcatLast { a: Var, b: Var, na: usize, nb: usize },
    GatherLast { x: Var, index: Vec<usize>, n: usize },
    Transpose { x: Var, batch: usize, m: usize, n: usize },
    Reshape { x: Var },
    Clamp { x: Var, lo: T, hi: T },
    Minimum { a: Var, b: Var },
}

pub(crate) struct Node<T> {
    pub value: Tensor<T>,
    pub op: Op<T>,
    pub needs_grad: bool,
}

/// A tape of tensor operations. Build the forward pass with the methods
/// below, then call [`Graph::backward`] on a scalar.
///
/// ```
/// use bridge_autodiff::{Graph, ParamSet, Tensor};
///
/// let mut params = ParamSet::<f64>::new();
/// let w = params.add("w", Tensor::from_f64(&[2, 1], &[3.0, -1.0]).unwrap()).unwrap();
/// let mut g = Graph::new();
/// let x = g.input(Tensor::from_f64(&[1, 2], &[2.0, 5.0]).unwrap());
/// let w = g.param(&params, w);
/// let y = g.matmul(x, w).unwrap();
/// let loss = g.sum(y);
/// assert_eq!(g.value(loss).item(), 1.0);
/// g.backward(loss, &mut params).unwrap();
/// assert_eq!(params.get("w").unwrap().grad, vec![2.0, 5.0]);
/// ```
pub struct Graph<T> {
    pub(crate) nodes: Vec<Node<T>>,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(op: &'static str, left: &[usize], right: &[usize]) -> AutodiffError {
    AutodiffError::ShapeMismatch { op, left: left.to_vec(), right: right.to_vec() }
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, x: Var, data: Vec<T>, op: Op<T>) -> Var {
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x);
        self.push(Tensor::new(&shape, data).expect("same length as input"), op, needs)
    }

    /// A constant: no gradient flows into it.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A free leaf whose gradient is reported by [`Graph::gradients`].
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Records the current value of a trainable parameter.
    pub fn param(&mut self, params: &ParamSet<T>, id: ParamId) -> Var {
        self.push(params.value(id).clone(), Op::Param(id.0), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.is_empty() || sb.len() != 2 || sa[sa.len() - 1] != sb[0] {
            return Err(mismatch("matmul", &sa, &sb));
        }
        let (k, n) = (sb[0], sb[1]);
        let m = sa.iter().product::<usize>() / k.max(1);
        let mut out = vec![T::zero(); m * n];
        T::gemm(m, k, n, self.data(a), (k as isize, 1), self.data(b), (n as isize, 1), T::zero(), &mut out, (n as isize, 1));
        let mut shape = sa.clone();
        *shape.last_mut().expect("non-empty") = n;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(&shape, out)?, Op::MatMul { a, b, m, k, n }, needs))
    }

    fn batch_dims(&self, op: &'static str, a: Var, b: Var, trans_b: bool) -> Result<(usize, usize, usize, usize), AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(mismatch(op, sa, sb));
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let (kb, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if kb != k {
            return Err(mismatch(op, sa, sb));
        }
        Ok((batch, m, k, n))
    }

    fn batch_product(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var, AutodiffError> {
        let op = if trans_b { "bmm_nt" } else { "bmm" };
        let (batch, m, k, n) = self.batch_dims(op, a, b, trans_b)?;
        let mut out = vec![T::zero(); batch * m * n];
        let (da, db) = (self.data(a), self.data(b));
        let bs = if trans_b { (1, k as isize) } else { (n as isize, 1) };
        for i in 0..batch {
            T::gemm(
                m,
                k,
                n,
                &da[i * m * k..(i + 1) * m * k],
                (k as isize, 1),
                &db[i * k * n..(i + 1) * k * n],
                bs,
                T::zero(),
                &mut out[i * m * n..(i + 1) * m * n],
                (n as isize, 1),
            );
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(&[batch, m, n], out)?, Op::BatchMatMul { a, b, batch, m, k, n, trans_b }, needs))
    }

    /// `[B, m, k] × [B, k, n] → [B, m, n]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.batch_product(a, b, false)
    }

    /// `[B, m, k] × [B, n, k]ᵀ → [B, m, n]`.
    pub fn bmm_nt(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.batch_product(a, b, true)
    }

    /// Adds a `[n]` bias to every row of a `[..., n]` tensor.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sx, sb) = (self.shape(x).to_vec(), self.shape(b).to_vec());
        let n = *sx.last().unwrap_or(&0);
        if sb.len() != 1 || sb[0] != n || n == 0 {
            return Err(mismatch("add_bias", &sx, &sb));
        }
        let bias = self.data(b);
        let out = self.data(x).chunks(n).flat_map(|row| row.iter().zip(bias).map(|(&v, &c)| v + c)).collect();
        let needs = self.needs(x) || self.needs(b);
        Ok(self.push(Tensor::new(&sx, out)?, Op::AddBias { x, b }, needs))
    }

    fn zip(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, node: Op<T>) -> Result<Var, AutodiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(op, self.shape(a), self.shape(b)));
        }
        let out = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| f(x, y)).collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(&shape, out)?, node, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip("minimum", a, b, |x, y| if x <= y { x } else { y }, Op::Minimum { a, b })
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let c = T::from_f64(c);
        let out = self.data(x).iter().map(|&v| v * c).collect();
        self.unary(x, out, Op::Scale { x, c })
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let c = T::from_f64(c);
        let out = self.data(x).iter().map(|&v| v + c).collect();
        self.unary(x, out, Op::AddScalar { x })
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.data(x).iter().map(|v| v.tanh()).collect();
        self.unary(x, out, Op::Tanh { x })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.data(x).iter().map(|&v| v.max(T::zero())).collect();
        self.unary(x, out, Op::Relu { x })
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.data(x).iter().map(|v| v.exp()).collect();
        self.unary(x, out, Op::Exp { x })
    }

    pub fn log(&mut self, x: Var) -> Var {
        let out = self.data(x).iter().map(|v| v.ln()).collect();
        self.unary(x, out, Op::Log { x })
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out = self.data(x).iter().map(|&v| v * v).collect();
        self.unary(x, out, Op::Square { x })
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let (lo, hi) = (T::from_f64(lo), T::from_f64(hi));
        let out = self.data(x).iter().map(|&v| v.max(lo).min(hi)).collect();
        self.unary(x, out, Op::Clamp { x, lo, hi })
    }

    fn rows(&self, x: Var) -> usize {
        self.shape(x).last().copied().unwrap_or(1)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let n = self.rows(x);
        let mut out = self.data(x).to_vec();
        for row in out.chunks_mut(n) {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total = total + *v;
            }
            for v in row.iter_mut() {
                *v = *v / total;
            }
        }
        self.unary(x, out, Op::Softmax { x, n })
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, x: Var) -> Var {
        let n = self.rows(x);
        let mut out = self.data(x).to_vec();
        for row in out.chunks_mut(n) {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let lse = row.iter().map(|&v| (v - max).exp()).fold(T::zero(), |a, b| a + b).ln() + max;
            for v in row.iter_mut() {
                *v = *v - lse;
            }
        }
        self.unary(x, out, Op::LogSoftmax { x, n })
    }

    /// Replaces entries where `mask` is true with `value`; those entries get no gradient.
    pub fn masked_fill(&mut self, x: Var, mask: &[bool], value: f64) -> Result<Var, AutodiffError> {
        if mask.len() != self.value(x).len() {
            return Err(mismatch("masked_fill", self.shape(x), &[mask.len()]));
        }
        let value = T::from_f64(value);
        let out = self.data(x).iter().zip(mask).map(|(&v, &m)| if m { value } else { v }).collect();
        Ok(self.unary(x, out, Op::MaskedFill { x, mask: mask.to_vec() }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.data(x).iter().fold(T::zero(), |a, &b| a + b);
        let needs = self.needs(x);
        self.push(Tensor::scalar(total), Op::Sum { x }, needs)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let len = self.value(x).len();
        let total = self.data(x).iter().fold(T::zero(), |a, &b| a + b);
        let needs = self.needs(x);
        self.push(Tensor::scalar(total / T::from_f64(len as f64)), Op::Mean { x }, needs)
    }

    /// Sums the last axis away: `[..., n] → [...]`.
    pub fn sum_last(&mut self, x: Var) -> Var {
        let n = self.rows(x);
        let shape = self.shape(x);
        let shape = shape[..shape.len().saturating_sub(1)].to_vec();
        let out = self.data(x).chunks(n).map(|r| r.iter().fold(T::zero(), |a, &b| a + b)).collect();
        let needs = self.needs(x);
        self.push(Tensor::new(&shape, out).expect("row count"), Op::SumLast { x, n }, needs)
    }

    /// Averages over the second-to-last axis: `[..., r, c] → [..., c]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(mismatch("mean_rows", &shape, &[]));
        }
        let (rows, cols) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let inv = T::from_f64(1.0 / rows as f64);
        let mut out = Vec::with_capacity(self.value(x).len() / rows.max(1));
        for block in self.data(x).chunks(rows * cols) {
            for c in 0..cols {
                let mut s = T::zero();
                for r in 0..rows {
                    s = s + block[r * cols + c];
                }
                out.push(s * inv);
            }
        }
        let mut out_shape = shape[..shape.len() - 2].to_vec();
        out_shape.push(cols);
        let needs = self.needs(x);
        Ok(self.push(Tensor::new(&out_shape, out)?, Op::MeanRows { x, rows, cols }, needs))
    }

    /// Concatenates along the last axis; leading dimensions must agree.
    pub fn concat_last(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.is_empty() || sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(mismatch("concat_last", &sa, &sb));
        }
        let (na, nb) = (sa[sa.len() - 1], sb[sb.len() - 1]);
        let mut out = Vec::with_capacity(self.value(a).len() + self.value(b).len());
        for (ra, rb) in self.data(a).chunks(na.max(1)).zip(self.data(b).chunks(nb.max(1))) {
            out.extend_from_slice(ra);
            out.extend_from_slice(rb);
        }
        let mut shape = sa.clone();
        *shape.last_mut().expect("non-empty") = na + nb;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(&shape, out)?, Op::ConcatLast { a, b, na, nb }, needs))
    }

    /// Picks one entry per row of the last axis: `[..., n] → [...]`.
    pub fn gather_last(&mut self, x: Var, index: &[usize]) -> Result<Var, AutodiffError> {
        let n = self.rows(x);
        let shape = self.shape(x).to_vec();
        let rows = self.value(x).len() / n.max(1);
        if index.len() != rows || index.iter().any(|&i| i >= n) {
            return Err(AutodiffError::InvalidArgument {
                op: "gather_last",
                detail: format!("{} indices into {rows} rows of width {n}", index.len()),
            });
        }
        let out = index.iter().enumerate().map(|(r, &i)| self.data(x)[r * n + i]).collect();
        let needs = self.needs(x);
        Ok(self.push(Tensor::new(&shape[..shape.len() - 1], out)?, Op::GatherLast { x, index: index.to_vec(), n }, needs))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(mismatch("transpose", &shape, &[]));
        }
        let (m, n) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let batch = self.value(x).len() / (m * n).max(1);
        let src = self.data(x);
        let mut out = vec![T::zero(); src.len()];
        for b in 0..batch {
            for i in 0..m {
                for j in 0..n {
                    out[b * m * n + j * m + i] = src[b * m * n + i * n + j];
                }
            }
        }
        let mut out_shape = shape.clone();
        let l = out_shape.len();
        out_shape.swap(l - 2, l - 1);
        let needs = self.needs(x);
        Ok(self.push(Tensor::new(&out_shape, out)?, Op::Transpose { x, batch, m, n }, needs))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        let t = self.value(x).clone().reshaped(shape)?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::Reshape { x }, needs))
    }
}
