use rand::Rng;
use stgat_autodiff::{Init, ParamId, ParamStore, Tape, Var};

use crate::error::{Error, Result};
use crate::stgraph::dims4;

/// Input embedding from `C_in` to `C_0` channels.
#[derive(Clone, Debug)]
pub enum Embedding {
    /// Raw input kept as the first `C_in` channels; the frame difference
    /// `x_t − x_{t−1}` (zero at `t = 0`) is mapped to the other `C_0 − C_in`.
    Motion {
        weight: ParamId,
        c_in: usize,
        c_out: usize,
    },
    /// Plain pointwise map `C_in → C_0`.
    Pointwise {
        weight: ParamId,
        c_in: usize,
        c_out: usize,
    },
}

impl Embedding {
    pub fn motion<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        c_in: usize,
        c_out: usize,
    ) -> Result<Self> {
        if c_out <= c_in {
            return Err(Error::config(
                "model.embed_channels",
                format!("motion embedding needs more than {c_in} output channels, got {c_out}"),
            ));
        }
        let weight = store.add(
            format!("{prefix}.motion"),
            &[c_out - c_in, c_in, 1],
            Init::FanIn {
                fan_in: c_in,
                gain: 1.0,
            },
            rng,
        )?;
        Ok(Embedding::Motion {
            weight,
            c_in,
            c_out,
        })
    }

    pub fn pointwise<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        c_in: usize,
        c_out: usize,
    ) -> Result<Self> {
        let weight = store.add(
            format!("{prefix}.pointwise"),
            &[c_out, c_in, 1],
            Init::FanIn {
                fan_in: c_in,
                gain: 1.0,
            },
            rng,
        )?;
        Ok(Embedding::Pointwise {
            weight,
            c_in,
            c_out,
        })
    }

    pub fn out_channels(&self) -> usize {
        match self {
            Embedding::Motion { c_out, .. } | Embedding::Pointwise { c_out, .. } => *c_out,
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            Embedding::Motion { c_in, c_out, .. } => c_in * (c_out - c_in),
            Embedding::Pointwise { c_in, c_out, .. } => c_in * c_out,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        match *self {
            Embedding::Pointwise { weight, .. } => {
                let w = tape.param(store, weight);
                Ok(tape.temporal_conv(x, w, 1, 0)?)
            }
            Embedding::Motion { weight, .. } => {
                let m = frame_difference(tape, x)?;
                let w = tape.param(store, weight);
                let moved = tape.temporal_conv(m, w, 1, 0)?;
                Ok(tape.concat(&[x, moved], 1)?)
            }
        }
    }
}

/// `x_t − x_{t−1}` along axis 2 with the first frame replicated (so `m_0 = 0`).
pub fn frame_difference(tape: &mut Tape, x: Var) -> Result<Var> {
    let [_, _, t, _] = dims4(tape, x)?;
    if t == 1 {
        let z = tape.scale(x, 0.0);
        return Ok(z);
    }
    let first = tape.slice(x, 2, 0, 1)?;
    let head = tape.slice(x, 2, 0, t - 1)?;
    let prev = tape.concat(&[first, head], 2)?;
    Ok(tape.sub(x, prev)?)
}
