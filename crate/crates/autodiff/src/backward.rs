use crate::graph::{Graph, Op, Var};
use crate::{AutodiffError, Element, ParamSet};

/// Gradients of one scalar with respect to every leaf and parameter node.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Element> Gradients<T> {
    /// `None` when the scalar does not depend on `v` (or `v` is a constant).
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

struct Acc<'a, T> {
    grads: &'a mut [Option<Vec<T>>],
    lens: &'a [usize],
    needs: &'a [bool],
}

impl<T: Element> Acc<'_, T> {
    fn with(&mut self, v: Var, f: impl FnOnce(&mut [T])) {
        if !self.needs[v.0] {
            return;
        }
        let len = self.lens[v.0];
        f(self.grads[v.0].get_or_insert_with(|| vec![T::zero(); len]));
    }

    fn add_scaled(&mut self, v: Var, gy: &[T], c: T) {
        self.with(v, |g| g.iter_mut().zip(gy).for_each(|(g, &d)| *g = *g + c * d));
    }
}

impl<T: Element> Graph<T> {
    /// Reverse pass from a scalar node.
    pub fn gradients(&self, loss: Var) -> Result<Gradients<T>, AutodiffError> {
        let shape = self.shape(loss);
        if self.value(loss).len() != 1 {
            return Err(AutodiffError::NonScalarLoss(shape.to_vec()));
        }
        let lens: Vec<usize> = self.nodes.iter().map(|n| n.value.len()).collect();
        let needs: Vec<bool> = self.nodes.iter().map(|n| n.needs_grad).collect();
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf | Op::Param(_)) {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            let y = node.value.data();
            let mut acc = Acc { grads: &mut grads, lens: &lens, needs: &needs };
            match &node.op {
                Op::Leaf | Op::Param(_) => unreachable!(),
                &Op::MatMul { a, b, m, k, n } => {
                    let (da, db) = (self.value(a).data(), self.value(b).data());
                    acc.with(a, |g| {
                        T::gemm(m, n, k, &gy, (n as isize, 1), db, (1, n as isize), T::one(), g, (k as isize, 1))
                    });
                    acc.with(b, |g| {
                        T::gemm(k, m, n, da, (1, k as isize), &gy, (n as isize, 1), T::one(), g, (n as isize, 1))
                    });
                }
                &Op::BatchMatMul { a, b, batch, m, k, n, trans_b } => {
                    let (da, db) = (self.value(a).data(), self.value(b).data());
                    let (sa, sb, sy) = (m * k, k * n, m * n);
                    acc.with(a, |g| {
                        for t in 0..batch {
                            let bs = if trans_b { (k as isize, 1) } else { (1, n as isize) };
                            T::gemm(
                                m,
                                n,
                                k,
                                &gy[t * sy..(t + 1) * sy],
                                (n as isize, 1),
                                &db[t * sb..(t + 1) * sb],
                                bs,
                                T::one(),
                                &mut g[t * sa..(t + 1) * sa],
                                (k as isize, 1),
                            );
                        }
                    });
                    acc.with(b, |g| {
                        for t in 0..batch {
                            let (gy_t, a_t, g_t) =
                                (&gy[t * sy..(t + 1) * sy], &da[t * sa..(t + 1) * sa], &mut g[t * sb..(t + 1) * sb]);
                            if trans_b {
                                T::gemm(n, m, k, gy_t, (1, n as isize), a_t, (k as isize, 1), T::one(), g_t, (k as isize, 1));
                            } else {
                                T::gemm(k, m, n, a_t, (1, k as isize), gy_t, (n as isize, 1), T::one(), g_t, (n as isize, 1));
                            }
                        }
                    });
                }
                &Op::AddBias { x, b } => {
                    acc.add_scaled(x, &gy, T::one());
                    let n = lens[b.0];
                    acc.with(b, |g| {
                        for row in gy.chunks(n) {
                            g.iter_mut().zip(row).for_each(|(g, &d)| *g = *g + d);
                        }
                    });
                }
                &Op::Add { a, b } => {
                    acc.add_scaled(a, &gy, T::one());
                    acc.add_scaled(b, &gy, T::one());
                }
                &Op::Sub { a, b } => {
                    acc.add_scaled(a, &gy, T::one());
                    acc.add_scaled(b, &gy, -T::one());
                }
                &Op::Mul { a, b } => {
                    let (va, vb) = (self.value(a).data(), self.value(b).data());
                    acc.with(a, |g| (0..g.len()).for_each(|j| g[j] = g[j] + gy[j] * vb[j]));
                    acc.with(b, |g| (0..g.len()).for_each(|j| g[j] = g[j] + gy[j] * va[j]));
                }
                &Op::Minimum { a, b } => {
                    let (va, vb) = (self.value(a).data(), self.value(b).data());
                    acc.with(a, |g| (0..g.len()).filter(|&j| va[j] <= vb[j]).for_each(|j| g[j] = g[j] + gy[j]));
                    acc.with(b, |g| (0..g.len()).filter(|&j| va[j] > vb[j]).for_each(|j| g[j] = g[j] + gy[j]));
                }
                &Op::Scale { x, c } => acc.add_scaled(x, &gy, c),
                &Op::AddScalar { x } | &Op::Reshape { x } => acc.add_scaled(x, &gy, T::one()),
                &Op::Tanh { x } => acc.with(x, |g| (0..g.len()).for_each(|j| g[j] = g[j] + gy[j] * (T::one() - y[j] * y[j]))),
                &Op::Relu { x } => {
                    let vx = self.value(x).data();
                    acc.with(x, |g| (0..g.len()).filter(|&j| vx[j] > T::zero()).for_each(|j| g[j] = g[j] + gy[j]));
                }
                &Op::Exp { x } => acc.with(x, |g| (0..g.len()).for_each(|j| g[j] = g[j] + gy[j] * y[j])),
                &Op::Log { x } => {
                    let vx = self.value(x).data();
                    acc.with(x, |g| (0..g.len()).for_each(|j| g[j] = g[j] + gy[j] / vx[j]));
                }
                &Op::Square { x } => {
                    let vx = self.value(x).data();
                    let two = T::from_f64(2.0);
                    acc.with(x, |g| (0..g.len()).for_each(|j| g[j] = g[j] + two * vx[j] * gy[j]));
                }
                &Op::Clamp { x, lo, hi } => {
                    let vx = self.value(x).data();
                    acc.with(x, |g| {
                        (0..g.len()).filter(|&j| vx[j] >= lo && vx[j] <= hi).for_each(|j| g[j] = g[j] + gy[j])
                    });
                }
                &Op::Softmax { x, n } => acc.with(x, |g| {
                    for ((g, yr), dr) in g.chunks_mut(n).zip(y.chunks(n)).zip(gy.chunks(n)) {
                        let s = yr.iter().zip(dr).fold(T::zero(), |a, (&p, &d)| a + p * d);
                        for j in 0..n {
                            g[j] = g[j] + yr[j] * (dr[j] - s);
                        }
                    }
                }),
                &Op::LogSoftmax { x, n } => acc.with(x, |g| {
                    for ((g, yr), dr) in g.chunks_mut(n).zip(y.chunks(n)).zip(gy.chunks(n)) {
                        let s = dr.iter().fold(T::zero(), |a, &d| a + d);
                        for j in 0..n {
                            g[j] = g[j] + dr[j] - yr[j].exp() * s;
                        }
                    }
                }),
                Op::MaskedFill { x, mask } => {
                    acc.with(*x, |g| (0..g.len()).filter(|&j| !mask[j]).for_each(|j| g[j] = g[j] + gy[j]));
                }
                &Op::Sum { x } => acc.with(x, |g| g.iter_mut().for_each(|g| *g = *g + gy[0])),
                &Op::Mean { x } => {
                    let d = gy[0] / T::from_f64(lens[x.0] as f64);
                    acc.with(x, |g| g.iter_mut().for_each(|g| *g = *g + d));
                }
                &Op::SumLast { x, n } => acc.with(x, |g| {
                    for (row, &d) in g.chunks_mut(n).zip(gy.iter()) {
                        row.iter_mut().for_each(|g| *g = *g + d);
                    }
                }),
                &Op::MeanRows { x, rows, cols } => {
                    let inv = T::from_f64(1.0 / rows as f64);
                    acc.with(x, |g| {
                        for (block, dr) in g.chunks_mut(rows * cols).zip(gy.chunks(cols)) {
                            for r in 0..rows {
                                for c in 0..cols {
                                    block[r * cols + c] = block[r * cols + c] + dr[c] * inv;
                                }
                            }
                        }
                    });
                }
                &Op::ConcatLast { a, b, na, nb } => {
                    let w = na + nb;
                    acc.with(a, |g| {
                        for (row, dr) in g.chunks_mut(na.max(1)).zip(gy.chunks(w)) {
                            row.iter_mut().zip(&dr[..na]).for_each(|(g, &d)| *g = *g + d);
                        }
                    });
                    acc.with(b, |g| {
                        for (row, dr) in g.chunks_mut(nb.max(1)).zip(gy.chunks(w)) {
                            row.iter_mut().zip(&dr[na..]).for_each(|(g, &d)| *g = *g + d);
                        }
                    });
                }
                Op::GatherLast { x, index, n } => {
                    let n = *n;
                    acc.with(*x, |g| {
                        for (r, &i) in index.iter().enumerate() {
                            g[r * n + i] = g[r * n + i] + gy[r];
                        }
                    });
                }
                &Op::Transpose { x, batch, m, n } => acc.with(x, |g| {
                    for t in 0..batch {
                        for i in 0..m {
                            for j in 0..n {
                                let src = t * m * n + j * m + i;
                                g[t * m * n + i * n + j] = g[t * m * n + i * n + j] + gy[src];
                            }
                        }
                    }
                }),
            }
        }
        Ok(Gradients { grads })
    }

    /// Reverse pass that adds every parameter's gradient into `params`.
    /// Consumes the tape.
    pub fn backward(self, loss: Var, params: &mut ParamSet<T>) -> Result<(), AutodiffError> {
        let grads = self.gradients(loss)?;
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(p), Some(g)) = (&node.op, grads.grads[i].as_ref()) {
                params.accumulate(*p, g);
            }
        }
        Ok(())
    }
}
