use crate::element::Element;
use crate::error::Result;
use crate::tape::{Tape, Var};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Running statistics of one batch-norm layer (mean 0, variance 1 at start).
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<F: Element = f64> {
    pub mean: Vec<F>,
    pub var: Vec<F>,
}

impl<F: Element> RunningStats<F> {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![F::ZERO; channels],
            var: vec![F::ONE; channels],
        }
    }
}

/// Batch normalization over `[B, C, ...]`.
///
/// Train mode normalizes with batch statistics and folds them into `stats`
/// with momentum [`BN_MOMENTUM`] (unbiased variance, as is customary). Eval
/// mode normalizes with the stored statistics and leaves them untouched.
pub fn batch_norm<F: Element>(
    tape: &mut Tape<F>,
    x: Var,
    gamma: Var,
    beta: Var,
    stats: &mut RunningStats<F>,
    mode: Mode,
) -> Result<Var> {
    let eps = F::lit(BN_EPS);
    match mode {
        Mode::Eval => {
            let (y, _, _) =
                tape.batch_norm(x, gamma, beta, Some((&stats.mean, &stats.var)), eps)?;
            Ok(y)
        }
        Mode::Train => {
            let shape = tape.shape(x);
            let n = shape[0] * shape[2..].iter().product::<usize>();
            let (y, mean, var) = tape.batch_norm(x, gamma, beta, None, eps)?;
            let m = F::lit(BN_MOMENTUM);
            let unbias = if n > 1 {
                F::lit(n as f64 / (n as f64 - 1.0))
            } else {
                F::ONE
            };
            for c in 0..mean.len() {
                stats.mean[c] = (F::ONE - m) * stats.mean[c] + m * mean[c];
                stats.var[c] = (F::ONE - m) * stats.var[c] + m * var[c] * unbias;
            }
            Ok(y)
        }
    }
}
