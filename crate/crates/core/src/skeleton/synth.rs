//! Reproducible toy action datasets on the 7-joint desk skeleton.
//!
//! Each class is a set of sinusoidal joint trajectories around a rest pose,
//! optionally with a short zero-mean micro-oscillation at a random onset.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::sequence::{SkeletonSequence, SourceFormat};
use crate::error::{Error, Result};

pub const DESK_JOINTS: usize = 7;

/// Rest positions (x, y, z) of the desk skeleton joints.
pub const DESK_REST_POSE: [[f64; 3]; DESK_JOINTS] = [
    [0.0, 0.0, 0.0],   // torso
    [0.0, 0.6, 0.0],   // head
    [-0.4, 0.1, 0.0],  // left elbow
    [-0.6, -0.2, 0.1], // left hand
    [0.4, 0.1, 0.0],   // right elbow
    [0.6, -0.2, 0.1],  // right hand
    [0.0, -0.6, 0.0],  // pelvis
];

const LEFT_ELBOW: usize = 2;
const LEFT_HAND: usize = 3;
const HEAD: usize = 1;
const RIGHT_ELBOW: usize = 4;
const RIGHT_HAND: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct Oscillation {
    pub joint: usize,
    pub axis: usize,
    pub amplitude: f64,
    /// Full periods over the whole sequence.
    pub cycles: f64,
    pub phase: f64,
}

/// `amplitude · sin(2π(k + ½)/frames)` added for `frames` consecutive frames.
#[derive(Clone, Debug, PartialEq)]
pub struct MicroGesture {
    pub joint: usize,
    pub axis: usize,
    pub amplitude: f64,
    pub frames: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassSpec {
    pub name: String,
    pub motions: Vec<Oscillation>,
    pub micro: Option<MicroGesture>,
}

/// Peak displacement of the micro-gesture in the `similar_pair` preset.
pub const SIMILAR_PAIR_AMPLITUDE: f64 = 0.15;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub classes: Vec<ClassSpec>,
    pub samples_per_class: usize,
    pub frames: usize,
    /// Standard deviation of i.i.d. Gaussian coordinate noise.
    pub noise: f64,
}

fn osc(joint: usize, axis: usize, amplitude: f64, cycles: f64, phase: f64) -> Oscillation {
    Oscillation {
        joint,
        axis,
        amplitude,
        cycles,
        phase,
    }
}

fn eat_motions() -> Vec<Oscillation> {
    vec![
        osc(RIGHT_HAND, 1, 0.30, 1.5, 0.0),
        osc(RIGHT_ELBOW, 1, 0.10, 1.5, 0.0),
    ]
}

impl SynthSpec {
    /// Four well separated classes: left-hand wave, head nod, hand-to-mouth,
    /// and fast horizontal scrubbing.
    pub fn four_class(samples_per_class: usize, frames: usize, noise: f64) -> Self {
        let classes = vec![
            ClassSpec {
                name: "wave_left".into(),
                motions: vec![
                    osc(LEFT_HAND, 0, 0.40, 3.0, 0.0),
                    osc(LEFT_ELBOW, 0, 0.15, 3.0, 0.0),
                ],
                micro: None,
            },
            ClassSpec {
                name: "nod".into(),
                motions: vec![osc(HEAD, 2, 0.20, 2.0, 0.0)],
                micro: None,
            },
            ClassSpec {
                name: "eat".into(),
                motions: eat_motions(),
                micro: None,
            },
            ClassSpec {
                name: "scrub".into(),
                motions: vec![osc(RIGHT_HAND, 0, 0.30, 4.0, 0.0)],
                micro: None,
            },
        ];
        Self {
            classes,
            samples_per_class,
            frames,
            noise,
        }
    }

    /// Two classes sharing the hand-to-mouth trajectory; the second adds a
    /// 5-frame micro-oscillation of the right hand.
    pub fn similar_pair(
        samples_per_class: usize,
        frames: usize,
        noise: f64,
        amplitude: f64,
    ) -> Self {
        let classes = vec![
            ClassSpec {
                name: "eat".into(),
                motions: eat_motions(),
                micro: None,
            },
            ClassSpec {
                name: "brush".into(),
                motions: eat_motions(),
                micro: Some(MicroGesture {
                    joint: RIGHT_HAND,
                    axis: 2,
                    amplitude,
                    frames: 5,
                }),
            },
        ];
        Self {
            classes,
            samples_per_class,
            frames,
            noise,
        }
    }

    pub fn by_name(
        name: &str,
        samples_per_class: usize,
        frames: usize,
        noise: f64,
    ) -> Result<Self> {
        match name {
            "four_class" => Ok(Self::four_class(samples_per_class, frames, noise)),
            "similar_pair" => Ok(Self::similar_pair(
                samples_per_class,
                frames,
                noise,
                SIMILAR_PAIR_AMPLITUDE,
            )),
            other => Err(Error::config(
                "preset",
                format!("unknown synthetic preset `{other}` (expected four_class or similar_pair)"),
            )),
        }
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::config("classes", "at least one class required"));
        }
        if self.samples_per_class == 0 {
            return Err(Error::config("samples_per_class", "must be ≥ 1"));
        }
        if self.frames == 0 {
            return Err(Error::config("frames", "must be ≥ 1"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::config(
                "noise",
                format!("must be finite and ≥ 0, got {}", self.noise),
            ));
        }
        for c in &self.classes {
            let bad_joint = |j: usize, a: usize| j >= DESK_JOINTS || a >= 3;
            if c.motions
                .iter()
                .any(|m| bad_joint(m.joint, m.axis) || !m.amplitude.is_finite())
            {
                return Err(Error::config(
                    "classes",
                    format!("class `{}`: bad joint/axis/amplitude", c.name),
                ));
            }
            if let Some(g) = &c.micro {
                if bad_joint(g.joint, g.axis) || g.frames == 0 || g.frames > self.frames {
                    return Err(Error::config(
                        "classes",
                        format!(
                            "class `{}`: micro-gesture must fit in {} frames",
                            c.name, self.frames
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Draws one sample. The random stream is consumed identically whether or
/// not the micro-gesture is rendered, so `with_micro = false` gives the bare
/// trajectory of the very same sample.
pub fn synth_sample<R: Rng + ?Sized>(
    spec: &SynthSpec,
    class: usize,
    with_micro: bool,
    rng: &mut R,
) -> Result<SkeletonSequence> {
    let cls = &spec.classes[class];
    let t = spec.frames;
    let phase = rng.random_range(0.0..TAU);
    let onset = rng.random_range(0..=t - cls.micro.as_ref().map_or(1, |g| g.frames));

    let mut seq =
        SkeletonSequence::zeros([1, 3, t, DESK_JOINTS], Some(class), SourceFormat::Synthetic)?;
    for f in 0..t {
        for (j, rest) in DESK_REST_POSE.iter().enumerate() {
            for (c, &r) in rest.iter().enumerate() {
                seq.set(0, c, f, j, r);
            }
        }
        for m in &cls.motions {
            let arg = TAU * m.cycles * f as f64 / t as f64 + m.phase + phase;
            let v = seq.at(0, m.axis, f, m.joint) + m.amplitude * arg.sin();
            seq.set(0, m.axis, f, m.joint, v);
        }
    }
    if let (Some(g), true) = (&cls.micro, with_micro) {
        for k in 0..g.frames {
            let v = g.amplitude * (TAU * (k as f64 + 0.5) / g.frames as f64).sin();
            let f = onset + k;
            seq.set(0, g.axis, f, g.joint, seq.at(0, g.axis, f, g.joint) + v);
        }
    }
    if spec.noise > 0.0 {
        let normal = Normal::new(0.0, spec.noise).expect("noise checked");
        for v in seq.data_mut() {
            *v += normal.sample(rng);
        }
    }
    Ok(seq)
}

/// `samples_per_class` samples of every class, interleaved by class
/// (`0, 1, …, K−1, 0, 1, …`).
pub fn synth_dataset(spec: &SynthSpec, seed: u64) -> Result<Vec<SkeletonSequence>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(spec.samples_per_class * spec.classes.len());
    for _ in 0..spec.samples_per_class {
        for class in 0..spec.classes.len() {
            out.push(synth_sample(spec, class, true, &mut rng)?);
        }
    }
    Ok(out)
}
