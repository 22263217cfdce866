use rand::Rng;
use stgat_autodiff::{Init, Mode, ParamId, ParamStore, Tape, Var};

use super::atw::AdaptiveFrameWeights;
use super::norm::BatchNorm;
use crate::attention::{AttentionConfig, AttentionOutput, DtwPlacement, StAttention};
use crate::error::{Error, Result};
use crate::skeleton::SkeletonGraph;
use crate::stgraph::dims4;

pub const TEMPORAL_KERNEL: usize = 7;

/// Which frame weighting a block applies to its attention maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameWeightingKind {
    None,
    Structural(DtwPlacement),
    Adaptive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockConfig {
    pub c_in: usize,
    pub c_out: usize,
    pub stride: usize,
    pub attention: AttentionConfig,
    pub weighting: FrameWeightingKind,
    /// Identity residual around the attention module when widths agree.
    pub residual: bool,
    pub temporal_kernel: usize,
}

impl BlockConfig {
    pub fn validate(&self) -> Result<()> {
        self.attention.validate()?;
        if !matches!(self.stride, 1 | 2) {
            return Err(Error::config(
                "model.channels",
                format!("block stride must be 1 or 2, got {}", self.stride),
            ));
        }
        if self.temporal_kernel.is_multiple_of(2) {
            return Err(Error::config(
                "model.temporal_kernel",
                format!("must be odd, got {}", self.temporal_kernel),
            ));
        }
        self.attention.head_width(self.c_out)?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Shortcut {
    pub weight: ParamId,
    pub bn: BatchNorm,
}

/// Graph attention followed by a strided temporal convolution:
///
/// ```text
/// a   = BN(attention(x))
/// y   = ReLU(a + x)              (ReLU(a) when widths differ or residual is off)
/// out = ReLU(BN(tconv(y)) + shortcut(x))
/// ```
///
/// `shortcut` is the identity, or BN of a strided pointwise map when the
/// stride or width changes.
#[derive(Clone, Debug)]
pub struct Stgab {
    pub cfg: BlockConfig,
    pub attention: StAttention,
    pub attn_bn: BatchNorm,
    pub adaptive: Option<AdaptiveFrameWeights>,
    pub tconv: ParamId,
    pub tconv_bn: BatchNorm,
    pub shortcut: Option<Shortcut>,
}

pub struct BlockOutput {
    pub out: Var,
    pub attention: AttentionOutput,
    /// `[B, T, τ]` adaptive frame weights when enabled.
    pub frame_weights: Option<Var>,
}

impl Stgab {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        cfg: &BlockConfig,
        graph: &SkeletonGraph,
    ) -> Result<Self> {
        cfg.validate()?;
        let dtw = match cfg.weighting {
            FrameWeightingKind::Structural(p) => Some(p),
            _ => None,
        };
        let attention = StAttention::new(
            store,
            rng,
            &format!("{prefix}.attn"),
            cfg.c_in,
            cfg.c_out,
            &cfg.attention,
            graph,
            dtw,
        )?;
        let attn_bn = BatchNorm::new(store, rng, &format!("{prefix}.attn_bn"), cfg.c_out)?;
        let adaptive = match cfg.weighting {
            FrameWeightingKind::Adaptive => Some(AdaptiveFrameWeights::new(
                store,
                rng,
                &format!("{prefix}.atw"),
                cfg.c_in,
                graph,
                cfg.attention.window,
            )?),
            _ => None,
        };
        let k = cfg.temporal_kernel;
        let tconv = store.add(
            format!("{prefix}.tconv"),
            &[cfg.c_out, cfg.c_out, k],
            Init::FanIn {
                fan_in: cfg.c_out * k,
                gain: 2.0,
            },
            rng,
        )?;
        let tconv_bn = BatchNorm::new(store, rng, &format!("{prefix}.tconv_bn"), cfg.c_out)?;
        let shortcut = if cfg.stride != 1 || cfg.c_in != cfg.c_out {
            Some(Shortcut {
                weight: store.add(
                    format!("{prefix}.shortcut"),
                    &[cfg.c_out, cfg.c_in, 1],
                    Init::FanIn {
                        fan_in: cfg.c_in,
                        gain: 1.0,
                    },
                    rng,
                )?,
                bn: BatchNorm::new(store, rng, &format!("{prefix}.shortcut_bn"), cfg.c_out)?,
            })
        } else {
            None
        };
        Ok(Self {
            cfg: cfg.clone(),
            attention,
            attn_bn,
            adaptive,
            tconv,
            tconv_bn,
            shortcut,
        })
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &mut ParamStore,
        x: Var,
        mode: Mode,
    ) -> Result<BlockOutput> {
        dims4(tape, x)?;
        let k = self.cfg.temporal_kernel;
        let frame_weights = match &self.adaptive {
            Some(a) => Some(a.forward(tape, store, x)?),
            None => None,
        };
        let attention = self.attention.forward(tape, store, x, frame_weights)?;
        let a = self.attn_bn.forward(tape, store, attention.out, mode)?;
        let y = if self.cfg.residual && self.cfg.c_in == self.cfg.c_out {
            tape.add(a, x)?
        } else {
            a
        };
        let y = tape.relu(y);

        let w = tape.param(store, self.tconv);
        let z = tape.temporal_conv(y, w, self.cfg.stride, (k - 1) / 2)?;
        let z = self.tconv_bn.forward(tape, store, z, mode)?;
        let skip = match &self.shortcut {
            Some(s) => {
                let ws = tape.param(store, s.weight);
                let p = tape.temporal_conv(x, ws, self.cfg.stride, 0)?;
                s.bn.forward(tape, store, p, mode)?
            }
            None => x,
        };
        let out = tape.add(z, skip)?;
        Ok(BlockOutput {
            out: tape.relu(out),
            attention,
            frame_weights,
        })
    }
}
