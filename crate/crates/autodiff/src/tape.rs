use std::sync::Arc;

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::kernels;
use crate::params::{ParamId, ParamStore};
use crate::tensor::{split_axis, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<F: Element> {
    Leaf,
    Param(ParamId),
    MatMul {
        a: usize,
        b: usize,
        ta: bool,
        tb: bool,
    },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, F),
    Relu(usize),
    LeakyRelu(usize, F),
    Sigmoid(usize),
    Softmax {
        x: usize,
        axis: usize,
    },
    MaskedSoftmax {
        x: usize,
    },
    TemporalConv {
        x: usize,
        w: usize,
        stride: usize,
        pad: usize,
    },
    BatchNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<F>,
        inv_std: Vec<F>,
        batch_stats: bool,
    },
    Concat {
        inputs: Vec<usize>,
        axis: usize,
    },
    Slice {
        x: usize,
        axis: usize,
        start: usize,
    },
    Gather {
        x: usize,
        axis: usize,
        indices: Arc<Vec<usize>>,
    },
    Pad {
        x: usize,
        axis: usize,
        before: usize,
    },
    MeanAxis {
        x: usize,
        axis: usize,
    },
    SumAll(usize),
    MeanAll(usize),
    Permute {
        x: usize,
        perm: Vec<usize>,
    },
    Reshape(usize),
    CrossEntropy {
        logits: usize,
        labels: Vec<usize>,
        probs: Vec<F>,
    },
}

#[derive(Clone, Debug)]
struct Node<F: Element> {
    value: Tensor<F>,
    op: Op<F>,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
///
/// Nodes are stored in creation order, which is a topological order, so the
/// backward pass is a single reverse sweep.
#[derive(Clone, Debug, Default)]
pub struct Tape<F: Element = f64> {
    nodes: Vec<Node<F>>,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients<F: Element = f64> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Element> Gradients<F> {
    pub fn get(&self, v: Var) -> Option<&Tensor<F>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

fn shape_err(op: &'static str, a: &[usize], b: &[usize]) -> TensorError {
    TensorError::Shape {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

fn check_axis(op: &'static str, axis: usize, ndim: usize) -> Result<()> {
    if axis >= ndim {
        return Err(TensorError::InvalidArgument {
            op,
            msg: format!("axis {axis} out of range for {ndim}-d tensor"),
        });
    }
    Ok(())
}

impl<F: Element> Tape<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, requires_grad: bool) -> Var {
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

    /// A constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// An input whose gradient is tracked (retrievable via [`Gradients::get`]).
    pub fn input(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Loads a trainable parameter; its gradient is accumulated into the store
    /// by [`Tape::backward`].
    pub fn param(&mut self, store: &ParamStore<F>, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id), true)
    }

    // ---- linear algebra -------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, false)
    }

    /// Product of `op(a)` and `op(b)` over the last two axes, with identical
    /// leading (batch) axes. `ta`/`tb` transpose the operand's last two axes.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() < 2 || sa.len() != sb.len() || sa[..sa.len() - 2] != sb[..sb.len() - 2] {
            return Err(shape_err("matmul", &sa, &sb));
        }
        let r = sa.len();
        let (m, ka) = if ta {
            (sa[r - 1], sa[r - 2])
        } else {
            (sa[r - 2], sa[r - 1])
        };
        let (kb, n) = if tb {
            (sb[r - 1], sb[r - 2])
        } else {
            (sb[r - 2], sb[r - 1])
        };
        if ka != kb {
            return Err(shape_err("matmul", &sa, &sb));
        }
        let batch: usize = sa[..r - 2].iter().product();
        let out = kernels::batched_gemm(
            self.value(a).data(),
            self.value(b).data(),
            batch,
            m,
            ka,
            n,
            ta,
            tb,
        );
        let mut shape = sa[..r - 2].to_vec();
        shape.extend([m, n]);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::MatMul {
                a: a.0,
                b: b.0,
                ta,
                tb,
            },
            rg,
        ))
    }

    // ---- elementwise ----------------------------------------------------

    fn binary(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(F, F) -> F,
        mk: impl Fn(usize, usize) -> Op<F>,
    ) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let out_shape = kernels::broadcast_shape(sa, sb).ok_or_else(|| shape_err(op, sa, sb))?;
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let data = if sa == sb {
            va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect()
        } else {
            let sta = kernels::broadcast_strides(sa, &out_shape);
            let stb = kernels::broadcast_strides(sb, &out_shape);
            let mut out = vec![F::ZERO; out_shape.iter().product()];
            kernels::for_each_broadcast(&out_shape, &sta, &stb, |i, ia, ib| {
                out[i] = f(va[ia], vb[ib])
            });
            out
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(out_shape, data)?, mk(a.0, b.0), rg))
    }

    /// Broadcasting elementwise sum.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    /// Broadcasting elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn scale(&mut self, a: Var, s: F) -> Var {
        let v = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        self.push(v, Op::Scale(a.0, s), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > F::ZERO { x } else { F::ZERO });
        let rg = self.rg(a);
        self.push(v, Op::Relu(a.0), rg)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: F) -> Var {
        let v = self
            .value(a)
            .map(|x| if x > F::ZERO { x } else { x * slope });
        let rg = self.rg(a);
        self.push(v, Op::LeakyRelu(a.0, slope), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(v, Op::Sigmoid(a.0), rg)
    }

    // ---- normalization --------------------------------------------------

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        check_axis("softmax", axis, shape.len())?;
        if !self.value(x).all_finite() {
            return Err(TensorError::NonFinite { op: "softmax" });
        }
        let (o, l, i) = split_axis(&shape, axis);
        let out = kernels::softmax(self.value(x).data(), o, l, i);
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(shape, out)?, Op::Softmax { x: x.0, axis }, rg))
    }

    /// Softmax over the last axis restricted to admissible entries.
    ///
    /// `mask` has the shape of the trailing two axes of `x` and is repeated
    /// over the leading axes. Masked entries get exactly zero weight and are
    /// excluded from the normalizer; a row without admissible entries is all
    /// zeros.
    pub fn masked_softmax(&mut self, x: Var, mask: &Tensor<F>, admissible: &[bool]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let r = shape.len();
        if r < 2 || mask.shape() != &shape[r - 2..] || admissible.len() != mask.numel() {
            return Err(shape_err("masked_softmax", &shape, mask.shape()));
        }
        let xv = self.value(x).data();
        for (i, &v) in xv.iter().enumerate() {
            if admissible[i % admissible.len()] && !v.is_finite() {
                return Err(TensorError::NonFinite {
                    op: "masked_softmax",
                });
            }
        }
        let out = kernels::masked_softmax(xv, admissible, shape[r - 1]);
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(shape, out)?, Op::MaskedSoftmax { x: x.0 }, rg))
    }

    /// Per-channel normalization of `[B, C, ...]` over every axis but 1.
    ///
    /// With `stats = None` the batch statistics are used and returned (as
    /// biased mean/variance); otherwise the given `(mean, var)` are used as
    /// constants.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: Option<(&[F], &[F])>,
        eps: F,
    ) -> Result<(Var, Vec<F>, Vec<F>)> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(shape_err("batch_norm", &shape, &[]));
        }
        let c = shape[1];
        let (b, inner) = (shape[0], shape[2..].iter().product::<usize>());
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(shape_err("batch_norm", &shape, self.shape(gamma)));
        }
        let xv = self.value(x).data();
        let count = F::lit((b * inner) as f64);
        let (mean, var) = match stats {
            Some((m, v)) => (m.to_vec(), v.to_vec()),
            None => {
                let mut mean = vec![F::ZERO; c];
                let mut var = vec![F::ZERO; c];
                for ch in 0..c {
                    let mut s = F::ZERO;
                    for bi in 0..b {
                        for &v in &xv[(bi * c + ch) * inner..][..inner] {
                            s += v;
                        }
                    }
                    let m = s / count;
                    let mut q = F::ZERO;
                    for bi in 0..b {
                        for &v in &xv[(bi * c + ch) * inner..][..inner] {
                            let d = v - m;
                            q += d * d;
                        }
                    }
                    mean[ch] = m;
                    var[ch] = q / count;
                }
                (mean, var)
            }
        };
        let inv_std: Vec<F> = var.iter().map(|&v| F::ONE / (v + eps).sqrt()).collect();
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![F::ZERO; xv.len()];
        let mut out = vec![F::ZERO; xv.len()];
        for bi in 0..b {
            for ch in 0..c {
                let base = (bi * c + ch) * inner;
                for j in base..base + inner {
                    let h = (xv[j] - mean[ch]) * inv_std[ch];
                    xhat[j] = h;
                    out[j] = g[ch] * h + bt[ch];
                }
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let v = self.push(
            Tensor::new(shape, out)?,
            Op::BatchNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                xhat,
                inv_std,
                batch_stats: stats.is_none(),
            },
            rg,
        );
        Ok((v, mean, var))
    }

    // ---- convolution ----------------------------------------------------

    /// Convolution of `x: [B, Cin, T, N]` with `w: [Cout, Cin, K]` along `T`,
    /// joints independent, zero padding `pad` on both ends.
    pub fn temporal_conv(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 4 || sw.len() != 3 || sx[1] != sw[1] {
            return Err(shape_err("temporal_conv", &sx, &sw));
        }
        let (b, cin, t, n) = (sx[0], sx[1], sx[2], sx[3]);
        let (cout, k) = (sw[0], sw[2]);
        if stride == 0 || t + 2 * pad < k {
            return Err(TensorError::InvalidArgument {
                op: "temporal_conv",
                msg: format!("T={t}, K={k}, stride={stride}, pad={pad} leaves no output frames"),
            });
        }
        let t_out = (t + 2 * pad - k) / stride + 1;
        let out = kernels::temporal_conv(
            self.value(x).data(),
            self.value(w).data(),
            b,
            cin,
            t,
            n,
            cout,
            k,
            stride,
            pad,
            t_out,
        );
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(
            Tensor::new([b, cout, t_out, n], out)?,
            Op::TemporalConv {
                x: x.0,
                w: w.0,
                stride,
                pad,
            },
            rg,
        ))
    }

    // ---- shape manipulation ---------------------------------------------

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs.first().ok_or(TensorError::InvalidArgument {
            op: "concat",
            msg: "no inputs".into(),
        })?;
        let base = self.shape(*first).to_vec();
        check_axis("concat", axis, base.len())?;
        let mut total = 0;
        for v in inputs {
            let s = self.shape(*v);
            if s.len() != base.len()
                || s.iter()
                    .enumerate()
                    .any(|(i, &d)| i != axis && d != base[i])
            {
                return Err(shape_err("concat", &base, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in inputs {
                let len = self.shape(*v)[axis];
                out.extend_from_slice(&self.value(*v).data()[o * len * inner..][..len * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = inputs.iter().any(|v| self.rg(*v));
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Concat {
                inputs: inputs.iter().map(|v| v.0).collect(),
                axis,
            },
            rg,
        ))
    }

    /// Contiguous range `[start, start + len)` of `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        check_axis("slice", axis, shape.len())?;
        if start + len > shape[axis] {
            return Err(TensorError::Index {
                op: "slice",
                index: start + len,
                len: shape[axis],
            });
        }
        let (outer, full, inner) = split_axis(&shape, axis);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            out.extend_from_slice(&xv[(o * full + start) * inner..][..len * inner]);
        }
        let mut s = shape;
        s[axis] = len;
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new(s, out)?,
            Op::Slice {
                x: x.0,
                axis,
                start,
            },
            rg,
        ))
    }

    /// Selects `indices` (repeats allowed) along `axis`; backward scatter-adds.
    pub fn gather(&mut self, x: Var, axis: usize, indices: Arc<Vec<usize>>) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        check_axis("gather", axis, shape.len())?;
        let (outer, len, inner) = split_axis(&shape, axis);
        if let Some(&bad) = indices.iter().find(|&&i| i >= len) {
            return Err(TensorError::Index {
                op: "gather",
                index: bad,
                len,
            });
        }
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &i in indices.iter() {
                out.extend_from_slice(&xv[(o * len + i) * inner..][..inner]);
            }
        }
        let mut s = shape;
        s[axis] = indices.len();
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new(s, out)?,
            Op::Gather {
                x: x.0,
                axis,
                indices,
            },
            rg,
        ))
    }

    /// Zero padding of `before`/`after` entries along `axis`.
    pub fn pad(&mut self, x: Var, axis: usize, before: usize, after: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        check_axis("pad", axis, shape.len())?;
        let (outer, len, inner) = split_axis(&shape, axis);
        let new_len = len + before + after;
        let xv = self.value(x).data();
        let mut out = vec![F::ZERO; outer * new_len * inner];
        for o in 0..outer {
            out[(o * new_len + before) * inner..][..len * inner]
                .copy_from_slice(&xv[o * len * inner..][..len * inner]);
        }
        let mut s = shape;
        s[axis] = new_len;
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new(s, out)?,
            Op::Pad {
                x: x.0,
                axis,
                before,
            },
            rg,
        ))
    }

    /// Arithmetic mean over `axis`, which is removed from the shape.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        check_axis("mean_pool", axis, shape.len())?;
        let (outer, len, inner) = split_axis(&shape, axis);
        let xv = self.value(x).data();
        let denom = F::lit(len as f64);
        let mut out = vec![F::ZERO; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                for i in 0..inner {
                    out[o * inner + i] += xv[(o * len + j) * inner + i];
                }
            }
        }
        for v in &mut out {
            *v = *v / denom;
        }
        let mut s = shape;
        s.remove(axis);
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(s, out)?, Op::MeanAxis { x: x.0, axis }, rg))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::SumAll(x.0), rg)
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.sum() / F::lit(v.numel() as f64);
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::MeanAll(x.0), rg)
    }

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len()
            || perm
                .iter()
                .any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true))
        {
            return Err(TensorError::InvalidArgument {
                op: "permute",
                msg: format!("{perm:?} is not a permutation of {} axes", shape.len()),
            });
        }
        let (out, s) = kernels::permute(self.value(x).data(), &shape, perm);
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new(s, out)?,
            Op::Permute {
                x: x.0,
                perm: perm.to_vec(),
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).reshape(shape.to_vec())?;
        let rg = self.rg(x);
        Ok(self.push(v, Op::Reshape(x.0), rg))
    }

    // ---- loss -----------------------------------------------------------

    /// Mean over the batch of `−log softmax(logits)[label]` for `logits: [B, K]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 || shape[0] != labels.len() {
            return Err(shape_err("cross_entropy", &shape, &[labels.len()]));
        }
        let k = shape[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(TensorError::Index {
                op: "cross_entropy",
                index: bad,
                len: k,
            });
        }
        let lv = self.value(logits);
        if !lv.all_finite() {
            return Err(TensorError::NonFinite {
                op: "cross_entropy",
            });
        }
        let probs = kernels::softmax(lv.data(), labels.len(), k, 1);
        let mut total = F::ZERO;
        for (b, &l) in labels.iter().enumerate() {
            let row = &lv.data()[b * k..(b + 1) * k];
            let mut mx = F::neg_infinity();
            for &v in row {
                mx = mx.max(v);
            }
            let mut s = F::ZERO;
            for &v in row {
                s += (v - mx).exp();
            }
            total += mx + s.ln() - row[l];
        }
        let loss = total / F::lit(labels.len() as f64);
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits: logits.0,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    // ---- backward -------------------------------------------------------

    /// Reverse sweep from a scalar `loss`. Parameter gradients are added to
    /// the store's accumulators; repeated calls keep accumulating until
    /// [`ParamStore::zero_grad`].
    pub fn backward(&self, loss: Var, store: &mut ParamStore<F>) -> Result<Gradients<F>> {
        let grads = self.gradients(loss)?;
        for (i, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads.grads[i]) {
                store.accumulate_grad(*id, g);
            }
        }
        Ok(grads)
    }

    /// Reverse sweep without touching any parameter store.
    pub fn gradients(&self, loss: Var) -> Result<Gradients<F>> {
        let ls = self.shape(loss);
        if self.value(loss).numel() != 1 {
            return Err(TensorError::NonScalarLoss(ls.to_vec()));
        }
        let mut grads: Vec<Option<Tensor<F>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::ones(ls.to_vec()));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn acc(&self, grads: &mut [Option<Tensor<F>>], idx: usize, g: Vec<F>) {
        if !self.nodes[idx].requires_grad {
            return;
        }
        match &mut grads[idx] {
            Some(t) => {
                for (a, v) in t.data_mut().iter_mut().zip(g) {
                    *a += v;
                }
            }
            slot @ None => {
                *slot = Some(
                    Tensor::new(self.nodes[idx].value.shape().to_vec(), g)
                        .expect("gradient shape matches value"),
                )
            }
        }
    }

    fn backward_node(
        &self,
        i: usize,
        g: &Tensor<F>,
        grads: &mut [Option<Tensor<F>>],
    ) -> Result<()> {
        let node = &self.nodes[i];
        let gd = g.data();
        let val = |j: usize| &self.nodes[j].value;
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul { a, b, ta, tb } => {
                let (sa, sb) = (val(*a).shape(), val(*b).shape());
                let r = sa.len();
                let batch: usize = sa[..r - 2].iter().product();
                let so = node.value.shape();
                let (m, n) = (so[r - 2], so[r - 1]);
                let k = if *ta { sa[r - 2] } else { sa[r - 1] };
                let (av, bv) = (val(*a).data(), val(*b).data());
                if self.nodes[*a].requires_grad {
                    let da = match (ta, tb) {
                        (false, false) => {
                            kernels::batched_gemm(gd, bv, batch, m, n, k, false, true)
                        }
                        (false, true) => {
                            kernels::batched_gemm(gd, bv, batch, m, n, k, false, false)
                        }
                        (true, false) => kernels::batched_gemm(bv, gd, batch, k, n, m, false, true),
                        (true, true) => kernels::batched_gemm(bv, gd, batch, k, n, m, true, true),
                    };
                    self.acc(grads, *a, da);
                }
                if self.nodes[*b].requires_grad {
                    let db = match (ta, tb) {
                        (false, false) => {
                            kernels::batched_gemm(av, gd, batch, k, m, n, true, false)
                        }
                        (false, true) => kernels::batched_gemm(gd, av, batch, n, m, k, true, false),
                        (true, false) => {
                            kernels::batched_gemm(av, gd, batch, k, m, n, false, false)
                        }
                        (true, true) => kernels::batched_gemm(gd, av, batch, n, m, k, true, true),
                    };
                    self.acc(grads, *b, db);
                }
                let _ = sb;
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let so = node.value.shape();
                let sign = if matches!(node.op, Op::Sub(..)) {
                    -F::ONE
                } else {
                    F::ONE
                };
                if self.nodes[*a].requires_grad {
                    let ga = kernels::sum_to_shape(gd, so, val(*a).shape());
                    self.acc(grads, *a, ga);
                }
                if self.nodes[*b].requires_grad {
                    let mut gb = kernels::sum_to_shape(gd, so, val(*b).shape());
                    if sign != F::ONE {
                        for v in &mut gb {
                            *v = -*v;
                        }
                    }
                    self.acc(grads, *b, gb);
                }
            }
            Op::Mul(a, b) => {
                let so = node.value.shape();
                let (sa, sb) = (val(*a).shape(), val(*b).shape());
                let sta = kernels::broadcast_strides(sa, so);
                let stb = kernels::broadcast_strides(sb, so);
                let (av, bv) = (val(*a).data(), val(*b).data());
                if self.nodes[*a].requires_grad {
                    let mut prod = vec![F::ZERO; gd.len()];
                    kernels::for_each_broadcast(so, &sta, &stb, |o, _, ib| {
                        prod[o] = gd[o] * bv[ib]
                    });
                    self.acc(grads, *a, kernels::sum_to_shape(&prod, so, sa));
                }
                if self.nodes[*b].requires_grad {
                    let mut prod = vec![F::ZERO; gd.len()];
                    kernels::for_each_broadcast(so, &sta, &stb, |o, ia, _| {
                        prod[o] = gd[o] * av[ia]
                    });
                    self.acc(grads, *b, kernels::sum_to_shape(&prod, so, sb));
                }
            }
            Op::Scale(a, s) => {
                self.acc(grads, *a, gd.iter().map(|&v| v * *s).collect());
            }
            Op::Relu(a) => {
                let x = val(*a).data();
                let d = gd
                    .iter()
                    .zip(x)
                    .map(|(&g, &x)| if x > F::ZERO { g } else { F::ZERO })
                    .collect();
                self.acc(grads, *a, d);
            }
            Op::LeakyRelu(a, slope) => {
                let x = val(*a).data();
                let d = gd
                    .iter()
                    .zip(x)
                    .map(|(&g, &x)| if x > F::ZERO { g } else { g * *slope })
                    .collect();
                self.acc(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                let d = gd
                    .iter()
                    .zip(y)
                    .map(|(&g, &y)| g * y * (F::ONE - y))
                    .collect();
                self.acc(grads, *a, d);
            }
            Op::Softmax { x, axis } => {
                let (o, l, inn) = split_axis(node.value.shape(), *axis);
                let d = kernels::softmax_backward(node.value.data(), gd, o, l, inn);
                self.acc(grads, *x, d);
            }
            Op::MaskedSoftmax { x } => {
                let l = *node.value.shape().last().expect("rank >= 2");
                let rows = node.value.numel() / l;
                // masked entries have y = 0 and therefore zero gradient
                let d = kernels::softmax_backward(node.value.data(), gd, rows, l, 1);
                self.acc(grads, *x, d);
            }
            Op::TemporalConv { x, w, stride, pad } => {
                let (sx, sw) = (val(*x).shape(), val(*w).shape());
                let t_out = node.value.shape()[2];
                let (dx, dw) = kernels::temporal_conv_backward(
                    val(*x).data(),
                    val(*w).data(),
                    gd,
                    sx[0],
                    sx[1],
                    sx[2],
                    sx[3],
                    sw[0],
                    sw[2],
                    *stride,
                    *pad,
                    t_out,
                );
                self.acc(grads, *x, dx);
                self.acc(grads, *w, dw);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let shape = node.value.shape();
                let (b, c) = (shape[0], shape[1]);
                let inner: usize = shape[2..].iter().product();
                let gam = val(*gamma).data();
                let mut dgamma = vec![F::ZERO; c];
                let mut dbeta = vec![F::ZERO; c];
                for bi in 0..b {
                    for ch in 0..c {
                        let base = (bi * c + ch) * inner;
                        for j in base..base + inner {
                            dgamma[ch] += gd[j] * xhat[j];
                            dbeta[ch] += gd[j];
                        }
                    }
                }
                if self.nodes[*x].requires_grad {
                    let mut dx = vec![F::ZERO; gd.len()];
                    let count = F::lit((b * inner) as f64);
                    for ch in 0..c {
                        // dxhat = dy·γ; sums reuse dβ and dγ
                        let (s1, s2) = (dbeta[ch] * gam[ch], dgamma[ch] * gam[ch]);
                        for bi in 0..b {
                            let base = (bi * c + ch) * inner;
                            for j in base..base + inner {
                                let dxh = gd[j] * gam[ch];
                                dx[j] = if *batch_stats {
                                    inv_std[ch] * (dxh - s1 / count - xhat[j] * s2 / count)
                                } else {
                                    inv_std[ch] * dxh
                                };
                            }
                        }
                    }
                    self.acc(grads, *x, dx);
                }
                self.acc(grads, *gamma, dgamma);
                self.acc(grads, *beta, dbeta);
            }
            Op::Concat { inputs, axis } => {
                let shape = node.value.shape();
                let (outer, total, inner) = split_axis(shape, *axis);
                let mut offset = 0;
                for &inp in inputs {
                    let len = val(inp).shape()[*axis];
                    if self.nodes[inp].requires_grad {
                        let mut d = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            d.extend_from_slice(&gd[(o * total + offset) * inner..][..len * inner]);
                        }
                        self.acc(grads, inp, d);
                    }
                    offset += len;
                }
            }
            Op::Slice { x, axis, start } => {
                let (outer, full, inner) = split_axis(val(*x).shape(), *axis);
                let len = node.value.shape()[*axis];
                let mut d = vec![F::ZERO; val(*x).numel()];
                for o in 0..outer {
                    d[(o * full + start) * inner..][..len * inner]
                        .copy_from_slice(&gd[o * len * inner..][..len * inner]);
                }
                self.acc(grads, *x, d);
            }
            Op::Gather { x, axis, indices } => {
                let (outer, len, inner) = split_axis(val(*x).shape(), *axis);
                let mut d = vec![F::ZERO; val(*x).numel()];
                let m = indices.len();
                for o in 0..outer {
                    for (k, &src) in indices.iter().enumerate() {
                        let from = &gd[(o * m + k) * inner..][..inner];
                        for (t, &v) in d[(o * len + src) * inner..][..inner].iter_mut().zip(from) {
                            *t += v;
                        }
                    }
                }
                self.acc(grads, *x, d);
            }
            Op::Pad { x, axis, before } => {
                let (outer, len, inner) = split_axis(val(*x).shape(), *axis);
                let new_len = node.value.shape()[*axis];
                let mut d = Vec::with_capacity(val(*x).numel());
                for o in 0..outer {
                    d.extend_from_slice(&gd[(o * new_len + before) * inner..][..len * inner]);
                }
                self.acc(grads, *x, d);
            }
            Op::MeanAxis { x, axis } => {
                let (outer, len, inner) = split_axis(val(*x).shape(), *axis);
                let denom = F::lit(len as f64);
                let mut d = vec![F::ZERO; val(*x).numel()];
                for o in 0..outer {
                    for j in 0..len {
                        for i2 in 0..inner {
                            d[(o * len + j) * inner + i2] = gd[o * inner + i2] / denom;
                        }
                    }
                }
                self.acc(grads, *x, d);
            }
            Op::SumAll(x) => {
                self.acc(grads, *x, vec![gd[0]; val(*x).numel()]);
            }
            Op::MeanAll(x) => {
                let n = val(*x).numel();
                self.acc(grads, *x, vec![gd[0] / F::lit(n as f64); n]);
            }
            Op::Permute { x, perm } => {
                let inv = kernels::inverse_permutation(perm);
                let (d, _) = kernels::permute(gd, node.value.shape(), &inv);
                self.acc(grads, *x, d);
            }
            Op::Reshape(x) => {
                self.acc(grads, *x, gd.to_vec());
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let k = val(*logits).shape()[1];
                let scale = gd[0] / F::lit(labels.len() as f64);
                let mut d: Vec<F> = probs.iter().map(|&p| p * scale).collect();
                for (b, &l) in labels.iter().enumerate() {
                    d[b * k + l] -= scale;
                }
                self.acc(grads, *logits, d);
            }
        }
        Ok(())
    }
}

pub(crate) fn sigmoid<F: Element>(x: F) -> F {
    if x >= F::ZERO {
        F::ONE / (F::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::ONE + e)
    }
}
