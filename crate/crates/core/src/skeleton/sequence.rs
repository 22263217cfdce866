use crate::error::{Error, Result};

/// Where a sequence came from. Stored as a one-byte tag in the dataset format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SourceFormat {
    Ntu,
    Kinetics,
    Synthetic,
    Internal,
}

impl SourceFormat {
    pub fn tag(self) -> u8 {
        match self {
            SourceFormat::Ntu => 1,
            SourceFormat::Kinetics => 2,
            SourceFormat::Synthetic => 3,
            SourceFormat::Internal => 0,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => SourceFormat::Internal,
            1 => SourceFormat::Ntu,
            2 => SourceFormat::Kinetics,
            3 => SourceFormat::Synthetic,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            SourceFormat::Ntu => "ntu",
            SourceFormat::Kinetics => "kinetics",
            SourceFormat::Synthetic => "synthetic",
            SourceFormat::Internal => "internal",
        }
    }
}

/// One action sample laid out as `[persons, channels, frames, joints]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonSequence {
    persons: usize,
    channels: usize,
    frames: usize,
    joints: usize,
    data: Vec<f64>,
    pub label: Option<usize>,
    pub source: SourceFormat,
}

impl SkeletonSequence {
    pub fn new(
        dims: [usize; 4],
        data: Vec<f64>,
        label: Option<usize>,
        source: SourceFormat,
    ) -> Result<Self> {
        let [m, c, t, n] = dims;
        if m == 0 || c == 0 || n == 0 {
            return Err(Error::Data(format!("degenerate sequence dims {dims:?}")));
        }
        if t == 0 {
            return Err(Error::Data("empty sequence: zero frames".into()));
        }
        if data.len() != m * c * t * n {
            return Err(Error::Data(format!(
                "payload has {} values, dims {dims:?} need {}",
                data.len(),
                m * c * t * n
            )));
        }
        Ok(Self {
            persons: m,
            channels: c,
            frames: t,
            joints: n,
            data,
            label,
            source,
        })
    }

    pub fn zeros(dims: [usize; 4], label: Option<usize>, source: SourceFormat) -> Result<Self> {
        Self::new(dims, vec![0.0; dims.iter().product()], label, source)
    }

    /// `(M, C, T, N)`.
    pub fn dims(&self) -> [usize; 4] {
        [self.persons, self.channels, self.frames, self.joints]
    }

    pub fn persons(&self) -> usize {
        self.persons
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, m: usize, c: usize, t: usize, n: usize) -> usize {
        ((m * self.channels + c) * self.frames + t) * self.joints + n
    }

    #[inline]
    pub fn at(&self, m: usize, c: usize, t: usize, n: usize) -> f64 {
        self.data[self.index(m, c, t, n)]
    }

    #[inline]
    pub fn set(&mut self, m: usize, c: usize, t: usize, n: usize, v: f64) {
        let i = self.index(m, c, t, n);
        self.data[i] = v;
    }

    /// New sequence made of the given frames (indices may repeat).
    pub fn select_frames(&self, idx: &[usize]) -> Result<Self> {
        let [m, c, _, n] = self.dims();
        let mut out = Self::zeros([m, c, idx.len(), n], self.label, self.source)?;
        for p in 0..m {
            for ch in 0..c {
                for (to, &ti) in idx.iter().enumerate() {
                    for j in 0..n {
                        out.set(p, ch, to, j, self.at(p, ch, ti, j));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Zero-pads or truncates the person axis to exactly `m` persons.
    pub fn with_persons(&self, m: usize) -> Result<Self> {
        let [_, c, t, n] = self.dims();
        let mut out = Self::zeros([m, c, t, n], self.label, self.source)?;
        let keep = m.min(self.persons) * c * t * n;
        out.data[..keep].copy_from_slice(&self.data[..keep]);
        Ok(out)
    }
}
