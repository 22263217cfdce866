use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stgat_autodiff::{
    grad_check, GradCheckConfig, GradCheckReport, Init, Mode, ParamId, ParamStore, Tape, Tensor,
    Var,
};

use super::block::{BlockConfig, BlockOutput, FrameWeightingKind, Stgab, TEMPORAL_KERNEL};
use super::emm::Embedding;
use crate::attention::{AttentionConfig, DtwPlacement};
use crate::error::{Error, Result};
use crate::skeleton::{SkeletonGraph, SkeletonSequence};
use crate::stgraph::WindowSpec;

pub const FULL_CHANNELS: [usize; 8] = [64, 64, 128, 128, 256, 256, 256, 256];

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub num_classes: usize,
    /// Width after the input embedding.
    pub embed_channels: usize,
    /// Output width of every block.
    pub channels: Vec<usize>,
    /// Person slots per sample; persons are folded into the batch and their
    /// features averaged before the classifier.
    pub persons: usize,
    pub attention: AttentionConfig,
    pub emm: bool,
    pub dtw: bool,
    pub dtw_placement: DtwPlacement,
    pub atw: bool,
    pub residual: bool,
    pub temporal_kernel: usize,
}

impl ModelConfig {
    /// Eight blocks of width 64, 64, 128, 128, 256, 256, 256, 256.
    pub fn full(num_classes: usize) -> Self {
        Self {
            in_channels: 3,
            num_classes,
            embed_channels: 64,
            channels: FULL_CHANNELS.to_vec(),
            persons: 2,
            attention: AttentionConfig::default(),
            emm: true,
            dtw: true,
            dtw_placement: DtwPlacement::PostSoftmax,
            atw: false,
            residual: true,
            temporal_kernel: TEMPORAL_KERNEL,
        }
    }

    /// Two blocks of width 8 and 16 with two heads and every module enabled.
    pub fn desk(num_classes: usize) -> Self {
        Self {
            embed_channels: 8,
            channels: vec![8, 16],
            persons: 1,
            attention: AttentionConfig {
                heads: 2,
                window: WindowSpec {
                    tau: 3,
                    dilation: 1,
                },
                ..AttentionConfig::default()
            },
            atw: true,
            ..Self::full(num_classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 {
            return Err(Error::config("model.in_channels", "must be ≥ 1"));
        }
        if self.num_classes == 0 {
            return Err(Error::config("model.num_classes", "must be ≥ 1"));
        }
        if self.persons == 0 {
            return Err(Error::config("data.persons", "must be ≥ 1"));
        }
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::config(
                "model.channels",
                "need at least one block, all widths ≥ 1",
            ));
        }
        if self.channels.windows(2).any(|w| w[1] < w[0]) || self.channels[0] < self.embed_channels {
            return Err(Error::config(
                "model.channels",
                format!(
                    "channel plan must be nondecreasing from model.embed_channels = {}, got {:?}",
                    self.embed_channels, self.channels
                ),
            ));
        }
        if self.emm && self.embed_channels <= self.in_channels {
            return Err(Error::config(
                "model.embed_channels",
                format!(
                    "motion embedding needs more than {} channels, got {}",
                    self.in_channels, self.embed_channels
                ),
            ));
        }
        for b in self.block_configs() {
            b.validate()?;
        }
        Ok(())
    }

    /// Per-block settings. Stride 2 wherever the width grows (except the
    /// first block). With both frame weightings enabled, blocks alternate:
    /// even blocks structural, odd blocks adaptive.
    pub fn block_configs(&self) -> Vec<BlockConfig> {
        let mut c_in = self.embed_channels;
        let mut out = Vec::with_capacity(self.channels.len());
        for (i, &c_out) in self.channels.iter().enumerate() {
            let stride = if i > 0 && c_out > c_in { 2 } else { 1 };
            let weighting = match (self.dtw, self.atw) {
                (true, true) if i % 2 == 1 => FrameWeightingKind::Adaptive,
                (true, _) => FrameWeightingKind::Structural(self.dtw_placement),
                (false, true) => FrameWeightingKind::Adaptive,
                (false, false) => FrameWeightingKind::None,
            };
            out.push(BlockConfig {
                c_in,
                c_out,
                stride,
                attention: self.attention.clone(),
                weighting,
                residual: self.residual,
                temporal_kernel: self.temporal_kernel,
            });
            c_in = c_out;
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct Stgat {
    pub cfg: ModelConfig,
    pub embedding: Embedding,
    pub blocks: Vec<Stgab>,
    pub fc_weight: ParamId,
    pub fc_bias: ParamId,
}

pub struct ModelOutput {
    /// `[B, K]`.
    pub logits: Var,
    pub blocks: Vec<BlockOutput>,
}

impl Stgat {
    /// Builds a model and its freshly initialized parameters.
    pub fn new(cfg: &ModelConfig, graph: &SkeletonGraph, seed: u64) -> Result<(Self, ParamStore)> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let embedding = if cfg.emm {
            Embedding::motion(
                &mut store,
                &mut rng,
                "embed",
                cfg.in_channels,
                cfg.embed_channels,
            )?
        } else {
            Embedding::pointwise(
                &mut store,
                &mut rng,
                "embed",
                cfg.in_channels,
                cfg.embed_channels,
            )?
        };
        let blocks = cfg
            .block_configs()
            .iter()
            .enumerate()
            .map(|(i, b)| Stgab::new(&mut store, &mut rng, &format!("blocks.{i}"), b, graph))
            .collect::<Result<Vec<_>>>()?;
        let c_last = *cfg.channels.last().expect("validated");
        let fc_weight = store.add(
            "fc.weight",
            &[c_last, cfg.num_classes],
            Init::FanIn {
                fan_in: c_last,
                gain: 1.0,
            },
            &mut rng,
        )?;
        let fc_bias = store.add("fc.bias", &[cfg.num_classes], Init::Zeros, &mut rng)?;
        Ok((
            Self {
                cfg: cfg.clone(),
                embedding,
                blocks,
                fc_weight,
                fc_bias,
            },
            store,
        ))
    }

    /// `x`: `[B·M, C, T, N]` with the `M` persons of a sample adjacent.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &mut ParamStore,
        x: Var,
        mode: Mode,
    ) -> Result<ModelOutput> {
        let shape = tape.shape(x).to_vec();
        let m = self.cfg.persons;
        if shape.len() != 4 || shape[0] % m != 0 || shape[1] != self.cfg.in_channels {
            return Err(Error::Data(format!(
                "model input must be [B·{m}, {}, T, N], got {shape:?}",
                self.cfg.in_channels
            )));
        }
        let b = shape[0] / m;
        let mut h = self.embedding.forward(tape, store, x)?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let o = block.forward(tape, store, h, mode)?;
            h = o.out;
            blocks.push(o);
        }
        let pooled = tape.mean_axis(h, 3)?;
        let pooled = tape.mean_axis(pooled, 2)?; // [B·M, C]
        let c = tape.shape(pooled)[1];
        let per_person = tape.reshape(pooled, &[b, m, c])?;
        let feat = tape.mean_axis(per_person, 1)?;
        let w = tape.param(store, self.fc_weight);
        let bias = tape.param(store, self.fc_bias);
        let logits = tape.matmul(feat, w)?;
        let logits = tape.add(logits, bias)?;
        Ok(ModelOutput { logits, blocks })
    }

    pub fn forward_logits(
        &self,
        tape: &mut Tape,
        store: &mut ParamStore,
        x: Tensor,
        mode: Mode,
    ) -> Result<Var> {
        let xv = tape.constant(x);
        Ok(self.forward(tape, store, xv, mode)?.logits)
    }

    /// Central-difference check of the cross-entropy gradient on one batch,
    /// with batch statistics in every normalization layer.
    pub fn grad_check(
        &self,
        store: &mut ParamStore,
        x: &Tensor,
        labels: &[usize],
        cfg: &GradCheckConfig,
    ) -> Result<GradCheckReport> {
        let report = grad_check(
            store,
            |tape, store| {
                let logits = self
                    .forward_logits(tape, store, x.clone(), Mode::Train)
                    .map_err(|e| match e {
                        Error::Tensor(t) => t,
                        other => stgat_autodiff::TensorError::InvalidArgument {
                            op: "model",
                            msg: other.to_string(),
                        },
                    })?;
                tape.cross_entropy(logits, labels)
            },
            cfg,
        )?;
        Ok(report)
    }
}

/// Stacks sequences into a `[B·M, C, T, N]` batch, padding or truncating
/// each to `persons` person slots.
pub fn stack_batch(samples: &[&SkeletonSequence], persons: usize) -> Result<Tensor> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Data("empty batch".into()))?;
    let [_, c, t, n] = first.dims();
    let mut data = Vec::with_capacity(samples.len() * persons * c * t * n);
    for s in samples {
        let [_, sc, st, sn] = s.dims();
        if (sc, st, sn) != (c, t, n) {
            return Err(Error::Data(format!(
                "batch mixes sample shapes (C,T,N) = ({c},{t},{n}) and ({sc},{st},{sn})"
            )));
        }
        data.extend_from_slice(s.with_persons(persons)?.data());
    }
    Ok(Tensor::new([samples.len() * persons, c, t, n], data)?)
}
