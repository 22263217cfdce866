//! Loop-level reference implementations used as oracles. Written directly
//! from the definitions, without any of the crate's tensor ops.

#![allow(dead_code)]

use std::collections::VecDeque;

use stgat_autodiff::{ParamStore, Tensor};
use stgat_core::attention::{AffinityKind, StAttention};
use stgat_core::skeleton::SkeletonGraph;

pub const EPS_BN: f64 = 1e-5;

pub fn dims(x: &Tensor) -> [usize; 4] {
    <[usize; 4]>::try_from(x.shape()).expect("4-d tensor")
}

/// All-pairs hop distances by breadth-first search over the undirected edges.
pub fn hop_table(graph: &SkeletonGraph) -> Vec<Vec<usize>> {
    let n = graph.num_joints();
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in graph.edges() {
        adj[a].push(b);
        adj[b].push(a);
    }
    (0..n)
        .map(|s| {
            let mut d = vec![usize::MAX; n];
            d[s] = 0;
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for &v in &adj[u] {
                    if d[v] == usize::MAX {
                        d[v] = d[u] + 1;
                        q.push_back(v);
                    }
                }
            }
            d
        })
        .collect()
}

/// Source frame of window offset `k` around `t`, clamped to the sequence.
pub fn window_frame(t: usize, k: usize, frames: usize, tau: usize, dilation: usize) -> usize {
    let off = (k as i64 - (tau as i64 - 1) / 2) * dilation as i64;
    (t as i64 + off).clamp(0, frames as i64 - 1) as usize
}

pub fn pointwise(w: &Tensor, x: &Tensor) -> Tensor {
    conv_t(w, x, 1, 0)
}

pub fn conv_t(w: &Tensor, x: &Tensor, stride: usize, pad: usize) -> Tensor {
    let [b, ci, t, n] = dims(x);
    let (co, k) = (w.shape()[0], w.shape()[2]);
    assert_eq!(w.shape()[1], ci);
    let t_out = (t + 2 * pad - k) / stride + 1;
    Tensor::from_fn([b, co, t_out, n], |ix| {
        let (bi, o, to, j) = (ix[0], ix[1], ix[2], ix[3]);
        let mut s = 0.0;
        for c in 0..ci {
            for kk in 0..k {
                let src = (to * stride + kk) as i64 - pad as i64;
                if src >= 0 && (src as usize) < t {
                    s += w.at(&[o, c, kk]) * x.at(&[bi, c, src as usize, j]);
                }
            }
        }
        s
    })
}

/// Batch statistics per channel, biased variance.
pub fn bn_train(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Tensor {
    let [b, c, t, n] = dims(x);
    let count = (b * t * n) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let mut s = 0.0;
        for bi in 0..b {
            for ti in 0..t {
                for j in 0..n {
                    s += x.at(&[bi, ch, ti, j]);
                }
            }
        }
        mean[ch] = s / count;
        let mut v = 0.0;
        for bi in 0..b {
            for ti in 0..t {
                for j in 0..n {
                    v += (x.at(&[bi, ch, ti, j]) - mean[ch]).powi(2);
                }
            }
        }
        var[ch] = v / count;
    }
    Tensor::from_fn([b, c, t, n], |ix| {
        let ch = ix[1];
        gamma.data()[ch] * (x.at(ix) - mean[ch]) / (var[ch] + EPS_BN).sqrt() + beta.data()[ch]
    })
}

pub fn relu(x: &Tensor) -> Tensor {
    Tensor::from_fn(x.shape().to_vec(), |ix| x.at(ix).max(0.0))
}

pub fn add(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.shape(), b.shape());
    Tensor::from_fn(a.shape().to_vec(), |ix| a.at(ix) + b.at(ix))
}

pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub struct RefHead {
    pub theta: Option<Tensor>,
    pub phi: Option<Tensor>,
    pub score_q: Option<Tensor>,
    pub score_k: Option<Tensor>,
    pub value: Tensor,
}

pub struct RefAttention {
    pub kind: AffinityKind,
    pub tau: usize,
    pub dilation: usize,
    pub heads: Vec<RefHead>,
    pub out_proj: Option<Tensor>,
}

impl RefAttention {
    /// Copies the weights of `attn` out of `store`.
    pub fn from_module(attn: &StAttention, store: &ParamStore) -> Self {
        let get = |id: Option<stgat_autodiff::ParamId>| id.map(|i| store.value(i).clone());
        Self {
            kind: attn.cfg.kind,
            tau: attn.cfg.window.tau,
            dilation: attn.cfg.window.dilation,
            heads: attn
                .heads
                .iter()
                .map(|h| RefHead {
                    theta: get(h.theta),
                    phi: get(h.phi),
                    score_q: get(h.score_q),
                    score_k: get(h.score_k),
                    value: store.value(h.value_out).clone(),
                })
                .collect(),
            out_proj: get(attn.out_proj),
        }
    }

    /// Output of every head, plus the fused result. `allowed(h, i, slot)`
    /// says whether target `i` may attend to window slot `slot` in head `h`;
    /// all other logits are treated as −∞.
    pub fn forward(&self, x: &Tensor, allowed: impl Fn(usize, usize, usize) -> bool) -> Tensor {
        let [b, _, t, n] = dims(x);
        let width = self.tau * n;
        let mut outs = Vec::new();
        for (h, head) in self.heads.iter().enumerate() {
            let (q, k) = match (&head.theta, &head.phi) {
                (Some(th), Some(ph)) => (pointwise(th, x), pointwise(ph, x)),
                _ => (x.clone(), x.clone()),
            };
            let ce = q.shape()[1];
            let cin = x.shape()[1];
            let mut agg = Tensor::zeros([b, cin, t, n]);
            for bi in 0..b {
                for ti in 0..t {
                    for i in 0..n {
                        let mut logits = vec![f64::NEG_INFINITY; width];
                        for (slot, l) in logits.iter_mut().enumerate() {
                            if !allowed(h, i, slot) {
                                continue;
                            }
                            let src = window_frame(ti, slot / n, t, self.tau, self.dilation);
                            let j = slot % n;
                            *l = match self.kind {
                                AffinityKind::Concatenation => {
                                    let (wq, wk) = (
                                        head.score_q.as_ref().unwrap(),
                                        head.score_k.as_ref().unwrap(),
                                    );
                                    let mut s = 0.0;
                                    for e in 0..ce {
                                        s += wq.at(&[0, e, 0]) * q.at(&[bi, e, ti, i]);
                                        s += wk.at(&[0, e, 0]) * k.at(&[bi, e, src, j]);
                                    }
                                    if s > 0.0 {
                                        s
                                    } else {
                                        0.2 * s
                                    }
                                }
                                _ => (0..ce)
                                    .map(|e| q.at(&[bi, e, ti, i]) * k.at(&[bi, e, src, j]))
                                    .sum(),
                            };
                        }
                        let weights: Vec<f64> = match self.kind {
                            AffinityKind::DotProduct => {
                                let cnt =
                                    logits.iter().filter(|l| l.is_finite()).count().max(1) as f64;
                                logits
                                    .iter()
                                    .map(|&l| if l.is_finite() { l / cnt } else { 0.0 })
                                    .collect()
                            }
                            _ => {
                                let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                                if mx == f64::NEG_INFINITY {
                                    vec![0.0; width]
                                } else {
                                    let e: Vec<f64> =
                                        logits.iter().map(|&l| (l - mx).exp()).collect();
                                    let z: f64 = e.iter().sum();
                                    e.iter().map(|v| v / z).collect()
                                }
                            }
                        };
                        for (slot, &wgt) in weights.iter().enumerate() {
                            if wgt == 0.0 {
                                continue;
                            }
                            let src = window_frame(ti, slot / n, t, self.tau, self.dilation);
                            for c in 0..cin {
                                let v =
                                    agg.at(&[bi, c, ti, i]) + wgt * x.at(&[bi, c, src, slot % n]);
                                agg.data_mut()[((bi * cin + c) * t + ti) * n + i] = v;
                            }
                        }
                    }
                }
            }
            outs.push(pointwise(&head.value, &agg));
        }
        match &self.out_proj {
            Some(p) => {
                let ch: usize = outs.iter().map(|o| o.shape()[1]).sum();
                let cat = Tensor::from_fn([b, ch, t, n], |ix| {
                    let mut c = ix[1];
                    for o in &outs {
                        let w = o.shape()[1];
                        if c < w {
                            return o.at(&[ix[0], c, ix[2], ix[3]]);
                        }
                        c -= w;
                    }
                    unreachable!()
                });
                pointwise(p, &cat)
            }
            None => {
                let s = outs.len() as f64;
                Tensor::from_fn(outs[0].shape().to_vec(), |ix| {
                    outs.iter().map(|o| o.at(ix)).sum::<f64>() / s
                })
            }
        }
    }
}

pub fn random_tensor(shape: &[usize], rng: &mut impl rand::Rng) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}
