//! Multi-head spatial-temporal graph attention over a dilated frame window.
//!
//! For target frame `t` every joint attends to all `τN` joints of the
//! window around `t`. Attention maps are laid out `[B, T, N, τN]`: row `i`
//! is target joint `i`, slot `k·N + j` is joint `j` of the `k`-th window
//! frame.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde_json::json;
use stgat_autodiff::{Init, ParamId, ParamStore, Tape, Tensor, Var};

use crate::error::{Error, Result};
use crate::skeleton::SkeletonGraph;
use crate::stgraph::{dims4, gather_window, partition_groups, GroupPartition, WindowSpec};

pub const LEAKY_SLOPE: f64 = 0.2;

macro_rules! str_enum {
    ($ty:ident, $key:literal, { $($var:ident => $s:literal),+ $(,)? }) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$($ty::$var),+];

            pub fn name(self) -> &'static str {
                match self { $($ty::$var => $s),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($ty::$var),)+
                    other => Err(Error::config(
                        $key,
                        format!(
                            "unknown value `{other}` (accepted: {})",
                            [$($s),+].join(", ")
                        ),
                    )),
                }
            }
        }
    };
}

/// Pairwise score function.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AffinityKind {
    /// `exp(x_iᵀ x_j)`, softmax-normalized.
    Gaussian,
    /// `exp(θ(x_i)ᵀ φ(x_j))`, softmax-normalized.
    EmbeddedGaussian,
    /// `θ(x_i)ᵀ φ(x_j) / #admissible`.
    DotProduct,
    /// `LeakyReLU(w_qᵀ θ(x_i) + w_kᵀ φ(x_j))`, softmax-normalized.
    Concatenation,
}

str_enum!(AffinityKind, "attention.kind", {
    Gaussian => "gaussian",
    EmbeddedGaussian => "embedded-gaussian",
    DotProduct => "dot-product",
    Concatenation => "concatenation",
});

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadFusion {
    /// Heads of width `C_out / S` concatenated, then a pointwise transform.
    Concat,
    /// Heads of width `C_out`, averaged.
    Average,
}

str_enum!(HeadFusion, "attention.fusion", {
    Concat => "concat",
    Average => "average",
});

/// How the window graph is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphMode {
    /// Input-dependent attention over the whole window.
    Adaptive,
    /// Fixed uniform weights over all admissible slots.
    Dense,
    /// Spatial attention of the center frame copied to every window frame,
    /// scaled by `1/τ`.
    RepeatSpatial,
}

str_enum!(GraphMode, "attention.graph_mode", {
    Adaptive => "adaptive",
    Dense => "dense",
    RepeatSpatial => "repeat-spatial",
});

/// Where the learnable per-head frame weights enter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DtwPlacement {
    /// Multiplies the normalized maps.
    PostSoftmax,
    /// Added to the scores before normalization.
    LogitBias,
}

str_enum!(DtwPlacement, "modules.dtw_placement", {
    PostSoftmax => "post-softmax",
    LogitBias => "logit-bias",
});

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionConfig {
    pub kind: AffinityKind,
    pub heads: usize,
    /// Embedding width is `max(1, C_out / reduction)`.
    pub reduction: usize,
    pub window: WindowSpec,
    /// Bind head `s` to the slots at hop distance `s` (saturating).
    pub grouping: bool,
    pub fusion: HeadFusion,
    pub graph_mode: GraphMode,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            kind: AffinityKind::EmbeddedGaussian,
            heads: 8,
            reduction: 4,
            window: WindowSpec::default(),
            grouping: true,
            fusion: HeadFusion::Concat,
            graph_mode: GraphMode::Adaptive,
        }
    }
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        if self.heads == 0 {
            return Err(Error::config("attention.heads", "must be ≥ 1"));
        }
        if self.reduction == 0 {
            return Err(Error::config("attention.reduction", "must be ≥ 1"));
        }
        Ok(())
    }

    pub fn embed_dim(&self, c_out: usize) -> usize {
        (c_out / self.reduction).max(1)
    }

    /// Output width of a single head.
    pub fn head_width(&self, c_out: usize) -> Result<usize> {
        match self.fusion {
            HeadFusion::Average => Ok(c_out),
            HeadFusion::Concat if c_out.is_multiple_of(self.heads) => Ok(c_out / self.heads),
            HeadFusion::Concat => Err(Error::config(
                "attention.heads",
                format!(
                    "concat fusion needs the block width {c_out} to be divisible by {} heads",
                    self.heads
                ),
            )),
        }
    }
}

/// Admissible slots of one head.
#[derive(Clone, Debug)]
pub struct HeadMask {
    /// Row-major `N × τN`.
    pub admissible: Vec<bool>,
    /// 1 where admissible, else 0.
    pub indicator: Tensor,
    /// `indicator / row count` (rows without slots are zero).
    pub uniform: Tensor,
}

impl HeadMask {
    pub fn new(joints: usize, width: usize, admissible: Vec<bool>) -> Self {
        let indicator = Tensor::from_fn([joints, width], |ix| {
            if admissible[ix[0] * width + ix[1]] {
                1.0
            } else {
                0.0
            }
        });
        let counts: Vec<usize> = admissible
            .chunks(width)
            .map(|r| r.iter().filter(|&&a| a).count())
            .collect();
        let uniform = Tensor::from_fn([joints, width], |ix| {
            let c = counts[ix[0]];
            if c > 0 && admissible[ix[0] * width + ix[1]] {
                1.0 / c as f64
            } else {
                0.0
            }
        });
        Self {
            admissible,
            indicator,
            uniform,
        }
    }

    /// Keeps only slots inside window frame `k`.
    fn restrict_to_frame(&self, joints: usize, k: usize) -> Self {
        let width = self.admissible.len() / joints;
        let adm = self
            .admissible
            .iter()
            .enumerate()
            .map(|(i, &a)| a && (i % width) / joints == k)
            .collect();
        Self::new(joints, width, adm)
    }
}

#[derive(Clone, Debug)]
pub struct HeadParams {
    pub theta: Option<ParamId>,
    pub phi: Option<ParamId>,
    /// Query/key halves of the concatenation scoring vector.
    pub score_q: Option<ParamId>,
    pub score_k: Option<ParamId>,
    pub value_out: ParamId,
}

/// Learnable `[S, τ]` frame weights and where they apply.
#[derive(Clone, Copy, Debug)]
pub struct FrameWeighting {
    pub param: ParamId,
    pub placement: DtwPlacement,
}

#[derive(Clone, Debug)]
pub struct StAttention {
    pub prefix: String,
    pub cfg: AttentionConfig,
    pub c_in: usize,
    pub c_out: usize,
    pub joints: usize,
    pub heads: Vec<HeadParams>,
    pub masks: Vec<HeadMask>,
    pub partition: Option<GroupPartition>,
    pub out_proj: Option<ParamId>,
    pub dtw: Option<FrameWeighting>,
}

pub struct AttentionOutput {
    pub out: Var,
    /// Per head, `[B, T, N, τN]` after every weighting.
    pub maps: Vec<Var>,
}

impl StAttention {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        c_in: usize,
        c_out: usize,
        cfg: &AttentionConfig,
        graph: &SkeletonGraph,
        dtw: Option<DtwPlacement>,
    ) -> Result<Self> {
        cfg.validate()?;
        let c_h = cfg.head_width(c_out)?;
        let c_e = cfg.embed_dim(c_out);
        let n = graph.num_joints();
        let width = cfg.window.tau * n;
        let s = cfg.heads;

        let (partition, masks) = if cfg.grouping {
            let p = partition_groups(graph, &cfg.window, s)?;
            let m = (0..s)
                .map(|g| HeadMask::new(n, width, p.admissible(g)))
                .collect();
            (Some(p), m)
        } else {
            (
                None,
                vec![HeadMask::new(n, width, vec![true; n * width]); s],
            )
        };

        let small = Init::Uniform {
            low: -0.1,
            high: 0.1,
        };
        let projections = cfg.graph_mode != GraphMode::Dense && cfg.kind != AffinityKind::Gaussian;
        let mut heads = Vec::with_capacity(s);
        for h in 0..s {
            let p = format!("{prefix}.head{h}");
            let (theta, phi) = if projections {
                (
                    Some(store.add(format!("{p}.theta"), &[c_e, c_in, 1], small.clone(), rng)?),
                    Some(store.add(format!("{p}.phi"), &[c_e, c_in, 1], small.clone(), rng)?),
                )
            } else {
                (None, None)
            };
            let (score_q, score_k) = if projections && cfg.kind == AffinityKind::Concatenation {
                let init = Init::FanIn {
                    fan_in: 2 * c_e,
                    gain: 1.0,
                };
                (
                    Some(store.add(format!("{p}.score_q"), &[1, c_e, 1], init.clone(), rng)?),
                    Some(store.add(format!("{p}.score_k"), &[1, c_e, 1], init, rng)?),
                )
            } else {
                (None, None)
            };
            let value_out = store.add(
                format!("{p}.value_out"),
                &[c_h, c_in, 1],
                Init::FanIn {
                    fan_in: c_in,
                    gain: 1.0,
                },
                rng,
            )?;
            heads.push(HeadParams {
                theta,
                phi,
                score_q,
                score_k,
                value_out,
            });
        }
        let out_proj = match cfg.fusion {
            HeadFusion::Concat => Some(store.add(
                format!("{prefix}.out_proj"),
                &[c_out, s * c_h, 1],
                Init::FanIn {
                    fan_in: s * c_h,
                    gain: 1.0,
                },
                rng,
            )?),
            HeadFusion::Average => None,
        };
        let dtw = match dtw {
            Some(placement) => Some(FrameWeighting {
                param: store.add(
                    format!("{prefix}.frame_weights"),
                    &[s, cfg.window.tau],
                    Init::Constant(1.0),
                    rng,
                )?,
                placement,
            }),
            None => None,
        };
        Ok(Self {
            prefix: prefix.to_string(),
            cfg: cfg.clone(),
            c_in,
            c_out,
            joints: n,
            heads,
            masks,
            partition,
            out_proj,
            dtw,
        })
    }

    fn width(&self) -> usize {
        self.cfg.window.tau * self.joints
    }

    /// Row `head` of the `[S, τ]` frame weights spread over `τN` slots: `[1, τN]`.
    fn frame_weight_row(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        head: usize,
        p: ParamId,
    ) -> Result<Var> {
        let w = tape.param(store, p);
        let row = tape.slice(w, 0, head, 1)?;
        let idx: Vec<usize> = (0..self.width()).map(|slot| slot / self.joints).collect();
        Ok(tape.gather(row, 1, Arc::new(idx))?)
    }

    /// Raw `[B, T, N, τN]` scores of one head.
    fn scores(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        head: &HeadParams,
        x: Var,
        xw: Var,
    ) -> Result<Var> {
        let (q, k) = match (head.theta, head.phi) {
            (Some(th), Some(ph)) => {
                let (wt, wp) = (tape.param(store, th), tape.param(store, ph));
                let q = tape.temporal_conv(x, wt, 1, 0)?;
                let kx = tape.temporal_conv(x, wp, 1, 0)?;
                (q, gather_window(tape, kx, &self.cfg.window)?)
            }
            _ => (x, xw),
        };
        if let (Some(sq), Some(sk)) = (head.score_q, head.score_k) {
            let (wq, wk) = (tape.param(store, sq), tape.param(store, sk));
            let a = tape.temporal_conv(q, wq, 1, 0)?; // [B, 1, T, N]
            let a = tape.permute(a, &[0, 2, 3, 1])?; // [B, T, N, 1]
            let b = tape.temporal_conv(k, wk, 1, 0)?; // [B, 1, T, τN]
            let b = tape.permute(b, &[0, 2, 1, 3])?; // [B, T, 1, τN]
            let s = tape.add(a, b)?;
            return Ok(tape.leaky_relu(s, LEAKY_SLOPE));
        }
        let qp = tape.permute(q, &[0, 2, 3, 1])?; // [B, T, N, Ce]
        let kp = tape.permute(k, &[0, 2, 1, 3])?; // [B, T, Ce, τN]
        Ok(tape.matmul(qp, kp)?)
    }

    /// Normalized `[B, T, N, τN]` map of one head before frame weighting.
    fn head_map(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: usize,
        x: Var,
        xw: Var,
        bias: Option<Var>,
    ) -> Result<Var> {
        let [b, _, t, n] = dims4(tape, x)?;
        let mask = &self.masks[h];
        if self.cfg.graph_mode == GraphMode::Dense {
            let mut data = Vec::with_capacity(b * t * mask.uniform.numel());
            for _ in 0..b * t {
                data.extend_from_slice(mask.uniform.data());
            }
            return Ok(tape.constant(Tensor::new([b, t, n, self.width()], data)?));
        }
        let mut scores = self.scores(tape, store, &self.heads[h], x, xw)?;
        if let Some(bias) = bias {
            scores = tape.add(scores, bias)?;
        }
        let repeat = self.cfg.graph_mode == GraphMode::RepeatSpatial;
        let restricted;
        let mask = if repeat {
            restricted = mask.restrict_to_frame(n, self.cfg.window.center());
            &restricted
        } else {
            mask
        };
        let a = match self.cfg.kind {
            AffinityKind::DotProduct => {
                let m = tape.constant(mask.uniform.clone());
                tape.mul(scores, m)?
            }
            _ => tape.masked_softmax(scores, &mask.indicator, &mask.admissible)?,
        };
        if !repeat {
            return Ok(a);
        }
        let center = tape.slice(a, 3, self.cfg.window.center() * n, n)?;
        let copies = vec![center; self.cfg.window.tau];
        let tiled = tape.concat(&copies, 3)?;
        Ok(tape.scale(tiled, 1.0 / self.cfg.window.tau as f64))
    }

    /// `x`: `[B, C_in, T, N]`. `frame_weights`: optional `[B, T, τ]` factors
    /// applied to every head's map (per window frame).
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        frame_weights: Option<Var>,
    ) -> Result<AttentionOutput> {
        let [b, c, t, n] = dims4(tape, x)?;
        if c != self.c_in || n != self.joints {
            return Err(Error::Data(format!(
                "{}: expected {} channels and {} joints, got {c} and {n}",
                self.prefix, self.c_in, self.joints
            )));
        }
        let xw = gather_window(tape, x, &self.cfg.window)?;
        let xw_t = tape.permute(xw, &[0, 2, 1, 3])?; // [B, T, C, τN]

        let adaptive = match frame_weights {
            Some(w) => {
                let idx: Vec<usize> = (0..self.width()).map(|slot| slot / n).collect();
                let spread = tape.gather(w, 2, Arc::new(idx))?;
                Some(tape.reshape(spread, &[b, t, 1, self.width()])?)
            }
            None => None,
        };

        let mut maps = Vec::with_capacity(self.cfg.heads);
        let mut outs = Vec::with_capacity(self.cfg.heads);
        for h in 0..self.cfg.heads {
            let row = match self.dtw {
                Some(fw) => Some((
                    self.frame_weight_row(tape, store, h, fw.param)?,
                    fw.placement,
                )),
                None => None,
            };
            let bias = match row {
                Some((r, DtwPlacement::LogitBias)) => Some(r),
                _ => None,
            };
            let mut a = self.head_map(tape, store, h, x, xw, bias)?;
            if let Some((r, DtwPlacement::PostSoftmax)) = row {
                a = tape.mul(a, r)?;
            }
            if let Some(w) = adaptive {
                a = tape.mul(a, w)?;
            }
            maps.push(a);

            let agg = tape.matmul_t(xw_t, a, false, true)?; // [B, T, C, N]
            let agg = tape.permute(agg, &[0, 2, 1, 3])?;
            let wv = tape.param(store, self.heads[h].value_out);
            outs.push(tape.temporal_conv(agg, wv, 1, 0)?);
        }

        let out = match self.out_proj {
            Some(p) => {
                let cat = tape.concat(&outs, 1)?;
                let w = tape.param(store, p);
                tape.temporal_conv(cat, w, 1, 0)?
            }
            None => {
                let mut acc = outs[0];
                for &o in &outs[1..] {
                    acc = tape.add(acc, o)?;
                }
                tape.scale(acc, 1.0 / self.cfg.heads as f64)
            }
        };
        Ok(AttentionOutput { out, maps })
    }

    /// JSON dump of the maps of sample `sample`: for each head and frame, the
    /// weights of every target joint over its admissible slots.
    pub fn maps_json(&self, tape: &Tape, maps: &[Var], sample: usize) -> serde_json::Value {
        let width = self.width();
        let n = self.joints;
        let heads: Vec<serde_json::Value> = maps
            .iter()
            .enumerate()
            .map(|(h, &m)| {
                let v = tape.value(m);
                let t = v.shape()[1];
                let adm = &self.masks[h].admissible;
                let slots: Vec<Vec<usize>> = (0..n)
                    .map(|i| (0..width).filter(|&s| adm[i * width + s]).collect())
                    .collect();
                let frames: Vec<Vec<Vec<f64>>> = (0..t)
                    .map(|f| {
                        (0..n)
                            .map(|i| slots[i].iter().map(|&s| v.at(&[sample, f, i, s])).collect())
                            .collect()
                    })
                    .collect();
                json!({ "head": h, "slots": slots, "weights": frames })
            })
            .collect();
        json!({
            "module": self.prefix,
            "joints": n,
            "tau": self.cfg.window.tau,
            "dilation": self.cfg.window.dilation,
            "kind": self.cfg.kind.name(),
            "heads": heads,
        })
    }
}
