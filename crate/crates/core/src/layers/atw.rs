use rand::Rng;
use stgat_autodiff::{Init, ParamId, ParamStore, Tape, Tensor, Var};

use crate::error::Result;
use crate::skeleton::SkeletonGraph;
use crate::stgraph::{dims4, gather_window, graph_conv, normalize_adjacency, WindowSpec};

/// Input-adaptive window-frame weights `[B, T, τ]` in `(0, 1)`.
///
/// Per frame: one-hop graph convolution with ReLU, a pointwise enhancement,
/// difference against each window frame, mean over channels and joints,
/// sigmoid.
#[derive(Clone, Debug)]
pub struct AdaptiveFrameWeights {
    pub graph_weight: ParamId,
    pub enhance_weight: ParamId,
    pub a_norm: Tensor,
    pub window: WindowSpec,
}

impl AdaptiveFrameWeights {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        channels: usize,
        graph: &SkeletonGraph,
        window: WindowSpec,
    ) -> Result<Self> {
        let init = Init::FanIn {
            fan_in: channels,
            gain: 1.0,
        };
        Ok(Self {
            graph_weight: store.add(
                format!("{prefix}.graph"),
                &[channels, channels, 1],
                init.clone(),
                rng,
            )?,
            enhance_weight: store.add(
                format!("{prefix}.enhance"),
                &[channels, channels, 1],
                init,
                rng,
            )?,
            a_norm: normalize_adjacency(&graph.adjacency())?,
            window,
        })
    }

    /// Pre-sigmoid scores `[B, T, τ]`.
    pub fn logits(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let [b, c, t, n] = dims4(tape, x)?;
        let tau = self.window.tau;
        let a = tape.constant(self.a_norm.clone());
        let wg = tape.param(store, self.graph_weight);
        let g = graph_conv(tape, x, a, wg)?;
        let g = tape.relu(g);
        let we = tape.param(store, self.enhance_weight);
        let e = tape.temporal_conv(g, we, 1, 0)?;
        let e = tape.reshape(e, &[b, c, t, 1, n])?;
        let xw = gather_window(tape, x, &self.window)?;
        let xw = tape.reshape(xw, &[b, c, t, tau, n])?;
        let d = tape.sub(e, xw)?;
        let d = tape.mean_axis(d, 4)?; // [B, C, T, τ]
        Ok(tape.mean_axis(d, 1)?) // [B, T, τ]
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let z = self.logits(tape, store, x)?;
        Ok(tape.sigmoid(z))
    }
}
