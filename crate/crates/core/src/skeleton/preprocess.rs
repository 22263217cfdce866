use rand::Rng;

use super::sequence::SkeletonSequence;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitMode {
    /// Random sorted sample, then a random contiguous crop.
    Train,
    /// Evenly spaced sample, then the central crop.
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameSampling {
    pub sample_len: usize,
    pub crop_len: usize,
}

impl Default for FrameSampling {
    fn default() -> Self {
        Self {
            sample_len: 150,
            crop_len: 128,
        }
    }
}

impl FrameSampling {
    pub fn validate(&self) -> Result<()> {
        if self.crop_len == 0 || self.crop_len > self.sample_len {
            return Err(Error::config(
                "data.crop_frames",
                format!(
                    "must be in 1..={} (data.sample_frames), got {}",
                    self.sample_len, self.crop_len
                ),
            ));
        }
        Ok(())
    }

    /// Source-frame indices of the output clip. Always sorted, within
    /// `[0, frames)` and of length `crop_len`.
    pub fn indices<R: Rng + ?Sized>(
        &self,
        frames: usize,
        mode: SplitMode,
        rng: &mut R,
    ) -> Vec<usize> {
        assert!(frames >= 1, "sequence without frames");
        let (s, c) = (self.sample_len, self.crop_len);
        let sampled: Vec<usize> = match mode {
            SplitMode::Test => (0..s).map(|i| i * frames / s).collect(),
            SplitMode::Train if frames >= s => {
                let mut v = rand::seq::index::sample(rng, frames, s).into_vec();
                v.sort_unstable();
                v
            }
            SplitMode::Train => {
                let mut v: Vec<usize> = (0..s).map(|_| rng.random_range(0..frames)).collect();
                v.sort_unstable();
                v
            }
        };
        let start = match mode {
            SplitMode::Test => (s - c) / 2,
            SplitMode::Train => rng.random_range(0..=s - c),
        };
        sampled[start..start + c].to_vec()
    }
}

/// Resamples `seq` to `sampling.crop_len` frames.
pub fn preprocess<R: Rng + ?Sized>(
    seq: &SkeletonSequence,
    sampling: &FrameSampling,
    mode: SplitMode,
    rng: &mut R,
) -> Result<SkeletonSequence> {
    sampling.validate()?;
    let idx = sampling.indices(seq.frames(), mode, rng);
    seq.select_frames(&idx)
}
