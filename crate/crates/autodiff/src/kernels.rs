//! Slice-level numeric kernels shared by the tape's forward and backward passes.
//!
//! Every reduction accumulates in ascending index order so results are
//! bitwise reproducible.

use crate::element::Element;
use crate::tensor::strides_of;

/// Numpy-style broadcast of two shapes aligned on trailing axes.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n {
            a[i + a.len() - n]
        } else {
            1
        };
        let db = if i + b.len() >= n {
            b[i + b.len() - n]
        } else {
            1
        };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `shape` viewed inside `out`, with 0 on broadcast axes.
pub fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let own = strides_of(shape);
    let lead = out.len() - shape.len();
    (0..out.len())
        .map(|i| {
            if i < lead || shape[i - lead] == 1 {
                0
            } else {
                own[i - lead]
            }
        })
        .collect()
}

/// Calls `f(out_index, a_offset, b_offset)` for every element of `out`.
pub fn for_each_broadcast(
    out: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let total: usize = out.iter().product();
    if total == 0 {
        return;
    }
    let nd = out.len();
    let mut idx = vec![0usize; nd];
    let (mut oa, mut ob) = (0usize, 0usize);
    for i in 0..total {
        f(i, oa, ob);
        for ax in (0..nd).rev() {
            idx[ax] += 1;
            oa += sa[ax];
            ob += sb[ax];
            if idx[ax] < out[ax] {
                break;
            }
            oa -= sa[ax] * out[ax];
            ob -= sb[ax] * out[ax];
            idx[ax] = 0;
        }
    }
}

/// Reduces a gradient of shape `from` onto a broadcast operand of shape `to`.
pub fn sum_to_shape<F: Element>(grad: &[F], from: &[usize], to: &[usize]) -> Vec<F> {
    if from == to {
        return grad.to_vec();
    }
    let mut out = vec![F::ZERO; to.iter().product()];
    let st = broadcast_strides(to, from);
    let zero = vec![0; from.len()];
    for_each_broadcast(from, &st, &zero, |i, o, _| out[o] += grad[i]);
    out
}

/// `out = op(a) · op(b)` for a single `m×k · k×n` product.
///
/// `ta`/`tb` mean the operand is stored transposed (`k×m` / `n×k`).
#[allow(clippy::too_many_arguments)]
pub fn gemm<F: Element>(
    a: &[F],
    b: &[F],
    out: &mut [F],
    m: usize,
    k: usize,
    n: usize,
    ta: bool,
    tb: bool,
) {
    for v in out.iter_mut() {
        *v = F::ZERO;
    }
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = if ta { a[p * m + i] } else { a[i * k + p] };
            if tb {
                for (j, r) in row.iter_mut().enumerate() {
                    *r += av * b[j * k + p];
                }
            } else {
                let brow = &b[p * n..(p + 1) * n];
                for (r, &bv) in row.iter_mut().zip(brow) {
                    *r += av * bv;
                }
            }
        }
    }
}

/// Batched product over identical leading dimensions.
#[allow(clippy::too_many_arguments)]
pub fn batched_gemm<F: Element>(
    a: &[F],
    b: &[F],
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    ta: bool,
    tb: bool,
) -> Vec<F> {
    let mut out = vec![F::ZERO; batch * m * n];
    for bi in 0..batch {
        gemm(
            &a[bi * m * k..(bi + 1) * m * k],
            &b[bi * k * n..(bi + 1) * k * n],
            &mut out[bi * m * n..(bi + 1) * m * n],
            m,
            k,
            n,
            ta,
            tb,
        );
    }
    out
}

pub fn permute<F: Element>(data: &[F], shape: &[usize], perm: &[usize]) -> (Vec<F>, Vec<usize>) {
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let in_strides = strides_of(shape);
    let gathered: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(data.len());
    let zero = vec![0; out_shape.len()];
    for_each_broadcast(&out_shape, &gathered, &zero, |_, o, _| out.push(data[o]));
    (out, out_shape)
}

pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Softmax over the middle extent of an (outer, len, inner) view.
pub fn softmax<F: Element>(x: &[F], outer: usize, len: usize, inner: usize) -> Vec<F> {
    let mut out = vec![F::ZERO; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * len * inner + j * inner + i;
            let mut mx = F::neg_infinity();
            for j in 0..len {
                mx = mx.max(x[at(j)]);
            }
            let mut sum = F::ZERO;
            for j in 0..len {
                let e = (x[at(j)] - mx).exp();
                out[at(j)] = e;
                sum += e;
            }
            for j in 0..len {
                out[at(j)] = out[at(j)] / sum;
            }
        }
    }
    out
}

/// `dx = y ⊙ (dy − Σ dy⊙y)` over the middle extent.
pub fn softmax_backward<F: Element>(
    y: &[F],
    dy: &[F],
    outer: usize,
    len: usize,
    inner: usize,
) -> Vec<F> {
    let mut dx = vec![F::ZERO; y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * len * inner + j * inner + i;
            let mut dot = F::ZERO;
            for j in 0..len {
                dot += dy[at(j)] * y[at(j)];
            }
            for j in 0..len {
                dx[at(j)] = y[at(j)] * (dy[at(j)] - dot);
            }
        }
    }
    dx
}

/// Row softmax over the last axis restricted to `mask`, which covers the
/// trailing `rows × len` block and repeats over leading dimensions.
/// Rows with no admissible entry produce zeros.
pub fn masked_softmax<F: Element>(x: &[F], mask: &[bool], len: usize) -> Vec<F> {
    let mut out = vec![F::ZERO; x.len()];
    let block = mask.len();
    for (r, (xr, or)) in x.chunks(len).zip(out.chunks_mut(len)).enumerate() {
        let mr = &mask[(r * len) % block..(r * len) % block + len];
        let mut mx = F::neg_infinity();
        for (&v, &m) in xr.iter().zip(mr) {
            if m {
                mx = mx.max(v);
            }
        }
        if mx == F::neg_infinity() {
            continue;
        }
        let mut sum = F::ZERO;
        for ((o, &v), &m) in or.iter_mut().zip(xr).zip(mr) {
            if m {
                let e = (v - mx).exp();
                *o = e;
                sum += e;
            }
        }
        for o in or.iter_mut() {
            *o = *o / sum;
        }
    }
    out
}

/// Temporal convolution of `[B, Cin, T, N]` with `[Cout, Cin, K]` along `T`.
#[allow(clippy::too_many_arguments)]
pub fn temporal_conv<F: Element>(
    x: &[F],
    w: &[F],
    b: usize,
    cin: usize,
    t: usize,
    n: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    t_out: usize,
) -> Vec<F> {
    let mut out = vec![F::ZERO; b * cout * t_out * n];
    for bi in 0..b {
        for o in 0..cout {
            for to in 0..t_out {
                let orow = &mut out[((bi * cout + o) * t_out + to) * n..][..n];
                for c in 0..cin {
                    for kk in 0..k {
                        let ti = (to * stride + kk) as isize - pad as isize;
                        if ti < 0 || ti >= t as isize {
                            continue;
                        }
                        let wv = w[(o * cin + c) * k + kk];
                        let xrow = &x[((bi * cin + c) * t + ti as usize) * n..][..n];
                        for (r, &xv) in orow.iter_mut().zip(xrow) {
                            *r += wv * xv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns `(dx, dw)` for [`temporal_conv`].
#[allow(clippy::too_many_arguments)]
pub fn temporal_conv_backward<F: Element>(
    x: &[F],
    w: &[F],
    dout: &[F],
    b: usize,
    cin: usize,
    t: usize,
    n: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    t_out: usize,
) -> (Vec<F>, Vec<F>) {
    let mut dx = vec![F::ZERO; x.len()];
    let mut dw = vec![F::ZERO; w.len()];
    for bi in 0..b {
        for o in 0..cout {
            for to in 0..t_out {
                let drow = &dout[((bi * cout + o) * t_out + to) * n..][..n];
                for c in 0..cin {
                    for kk in 0..k {
                        let ti = (to * stride + kk) as isize - pad as isize;
                        if ti < 0 || ti >= t as isize {
                            continue;
                        }
                        let widx = (o * cin + c) * k + kk;
                        let wv = w[widx];
                        let base = ((bi * cin + c) * t + ti as usize) * n;
                        let mut acc = F::ZERO;
                        for j in 0..n {
                            acc += drow[j] * x[base + j];
                            dx[base + j] += wv * drow[j];
                        }
                        dw[widx] += acc;
                    }
                }
            }
        }
    }
    (dx, dw)
}
