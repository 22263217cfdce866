use rand::Rng;
use stgat_autodiff::{
    batch_norm, Init, Mode, ParamId, ParamStore, RunningStats, Tape, Tensor, Var,
};

use crate::error::{Error, Result};

/// Batch norm whose running statistics live in the parameter store as the
/// buffers `{prefix}.running_mean` / `{prefix}.running_var`.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub prefix: String,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub channels: usize,
}

impl BatchNorm {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        channels: usize,
    ) -> Result<Self> {
        Self::with_gamma(store, rng, prefix, channels, 1.0)
    }

    pub fn with_gamma<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        channels: usize,
        gamma: f64,
    ) -> Result<Self> {
        let g = store.add(
            format!("{prefix}.gamma"),
            &[channels],
            Init::Constant(gamma),
            rng,
        )?;
        let b = store.add(format!("{prefix}.beta"), &[channels], Init::Zeros, rng)?;
        store.set_buffer(format!("{prefix}.running_mean"), Tensor::zeros([channels]))?;
        store.set_buffer(format!("{prefix}.running_var"), Tensor::ones([channels]))?;
        Ok(Self {
            prefix: prefix.to_string(),
            gamma: g,
            beta: b,
            channels,
        })
    }

    fn key(&self, what: &str) -> String {
        format!("{}.{what}", self.prefix)
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &mut ParamStore,
        x: Var,
        mode: Mode,
    ) -> Result<Var> {
        let missing = || Error::Data(format!("{}: running statistics missing", self.prefix));
        let mean = store
            .buffer(&self.key("running_mean"))
            .ok_or_else(missing)?;
        let var = store.buffer(&self.key("running_var")).ok_or_else(missing)?;
        let mut stats = RunningStats {
            mean: mean.data().to_vec(),
            var: var.data().to_vec(),
        };
        let g = tape.param(store, self.gamma);
        let b = tape.param(store, self.beta);
        let y = batch_norm(tape, x, g, b, &mut stats, mode)?;
        if mode == Mode::Train {
            let c = self.channels;
            store.set_buffer(self.key("running_mean"), Tensor::new([c], stats.mean)?)?;
            store.set_buffer(self.key("running_var"), Tensor::new([c], stats.var)?)?;
        }
        Ok(y)
    }
}
