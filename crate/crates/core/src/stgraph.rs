//! Windowed spatial-temporal neighborhoods, normalized graph convolution and
//! the hop-distance partition of a target joint's neighbors.

use std::sync::Arc;

use serde_json::json;
use stgat_autodiff::{Tape, Tensor, Var};

use crate::error::{Error, Result};
use crate::skeleton::SkeletonGraph;

/// A window of `tau` frames centered on the target frame, `dilation` frames
/// apart, replicating the first/last frame past the sequence boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowSpec {
    pub tau: usize,
    pub dilation: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            tau: 3,
            dilation: 1,
        }
    }
}

impl WindowSpec {
    pub fn new(tau: usize, dilation: usize) -> Result<Self> {
        let spec = Self { tau, dilation };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau == 0 || self.tau.is_multiple_of(2) {
            return Err(Error::config(
                "window.tau",
                format!(
                    "must be a positive odd integer (1, 3, 5, 7, ...), got {}",
                    self.tau
                ),
            ));
        }
        if self.dilation == 0 {
            return Err(Error::config("window.dilation", "must be ≥ 1, got 0"));
        }
        Ok(())
    }

    pub fn half(&self) -> usize {
        (self.tau - 1) / 2
    }

    /// Offset of the target frame inside the window.
    pub fn center(&self) -> usize {
        self.half()
    }
}

/// Source frames of the window around `t`, in window order.
pub fn window_indices(t: usize, frames: usize, spec: &WindowSpec) -> Vec<usize> {
    let half = spec.half() as isize;
    let last = frames as isize - 1;
    (-half..=half)
        .map(|k| (t as isize + k * spec.dilation as isize).clamp(0, last) as usize)
        .collect()
}

/// Window source frames for every target frame of a `frames`-long sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct STNeighborhood {
    pub spec: WindowSpec,
    pub frames: usize,
    pub indices: Vec<Vec<usize>>,
}

impl STNeighborhood {
    pub fn new(frames: usize, spec: WindowSpec) -> Self {
        Self {
            spec,
            frames,
            indices: (0..frames)
                .map(|t| window_indices(t, frames, &spec))
                .collect(),
        }
    }

    /// Flat indices into a `[T·N]` axis producing `[T·τN]`, slot `k·N + n` of
    /// frame `t` reading joint `n` of frame `indices[t][k]`.
    pub fn flat_gather(&self, joints: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.frames * self.spec.tau * joints);
        for win in &self.indices {
            for &src in win {
                out.extend((0..joints).map(|n| src * joints + n));
            }
        }
        out
    }
}

/// `[B, C, T, N]` → `[B, C, T, τN]`.
pub fn gather_window(tape: &mut Tape, x: Var, spec: &WindowSpec) -> Result<Var> {
    let [b, c, t, n] = dims4(tape, x)?;
    let idx = STNeighborhood::new(t, *spec).flat_gather(n);
    let flat = tape.reshape(x, &[b, c, t * n])?;
    let g = tape.gather(flat, 2, Arc::new(idx))?;
    Ok(tape.reshape(g, &[b, c, t, spec.tau * n])?)
}

pub(crate) fn dims4(tape: &Tape, x: Var) -> Result<[usize; 4]> {
    let s = tape.shape(x);
    <[usize; 4]>::try_from(s)
        .map_err(|_| Error::Data(format!("expected a [B, C, T, N] tensor, got shape {s:?}")))
}

/// `Λ^{-1/2} (A + I) Λ^{-1/2}` with `Λ` the degree matrix of `A + I`.
pub fn normalize_adjacency(a: &Tensor) -> Result<Tensor> {
    let n = match a.shape() {
        [r, c] if r == c => *r,
        s => return Err(Error::Data(format!("adjacency must be square, got {s:?}"))),
    };
    if let Some(v) = a.data().iter().find(|v| v.is_nan() || **v < 0.0) {
        return Err(Error::Data(format!(
            "adjacency has negative or NaN entry {v}"
        )));
    }
    let mut ai = a.clone();
    for i in 0..n {
        ai.set(&[i, i], a.at(&[i, i]) + 1.0);
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / (0..n).map(|j| ai.at(&[i, j])).sum::<f64>().sqrt())
        .collect();
    Ok(Tensor::from_fn([n, n], |ix| {
        inv_sqrt[ix[0]] * ai.at(ix) * inv_sqrt[ix[1]]
    }))
}

/// `W · X · Ā` applied per frame: `x` is `[B, C, T, N]`, `a_bar` `[N, N]`,
/// `w` a pointwise weight `[C', C, 1]`. No activation.
pub fn graph_conv(tape: &mut Tape, x: Var, a_bar: Var, w: Var) -> Result<Var> {
    let [b, c, t, n] = dims4(tape, x)?;
    let rows = tape.reshape(x, &[b * c * t, n])?;
    let mixed = tape.matmul(rows, a_bar)?;
    let mixed = tape.reshape(mixed, &[b, c, t, n])?;
    Ok(tape.temporal_conv(mixed, w, 1, 0)?)
}

/// Per target joint, the group of each of its `τN` window slots:
/// `min(hop(i, j), S − 1)` for slot `k·N + j`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupPartition {
    pub joints: usize,
    pub tau: usize,
    pub groups: usize,
    /// Row-major `N × N` joint-pair bucket.
    bucket: Vec<usize>,
}

pub fn partition_groups(
    graph: &SkeletonGraph,
    spec: &WindowSpec,
    groups: usize,
) -> Result<GroupPartition> {
    if groups == 0 {
        return Err(Error::config("attention.heads", "must be ≥ 1"));
    }
    let n = graph.num_joints();
    let mut bucket = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let h = graph.hop(i, j).ok_or_else(|| {
                Error::Data(format!(
                    "graph `{}` is disconnected: no path between joints {i} and {j}",
                    graph.name()
                ))
            })?;
            bucket.push(h.min(groups - 1));
        }
    }
    Ok(GroupPartition {
        joints: n,
        tau: spec.tau,
        groups,
        bucket,
    })
}

impl GroupPartition {
    pub fn group_of(&self, target: usize, slot: usize) -> usize {
        self.bucket[target * self.joints + slot % self.joints]
    }

    /// Row-major `N × τN` admissibility of group `g`.
    pub fn admissible(&self, g: usize) -> Vec<bool> {
        let width = self.tau * self.joints;
        let mut out = Vec::with_capacity(self.joints * width);
        for i in 0..self.joints {
            out.extend((0..width).map(|s| self.group_of(i, s) == g));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let width = self.tau * self.joints;
        let table: Vec<Vec<usize>> = (0..self.joints)
            .map(|i| (0..width).map(|s| self.group_of(i, s)).collect())
            .collect();
        json!({
            "joints": self.joints,
            "tau": self.tau,
            "groups": self.groups,
            "slot_groups": table,
        })
    }
}
