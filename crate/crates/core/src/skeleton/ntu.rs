//! Reader for the Kinect v2 `.skeleton` text layout.
//!
//! ```text
//! <frame count>
//! per frame:  <body count>
//!   per body: <10 header fields, the first being the body id>
//!             <joint count = 25>
//!             25 × <x y z depthX depthY colorX colorY orientW orientX orientY orientZ trackingState>
//! ```

use std::collections::HashMap;

use super::sequence::{SkeletonSequence, SourceFormat};
use crate::error::{Error, Result};

pub const NTU_JOINTS: usize = 25;
pub const NTU_MAX_BODIES: usize = 2;
const JOINT_FIELDS: usize = 12;
const BODY_HEADER_FIELDS: usize = 10;

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    /// Next non-blank line with its 1-based number.
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            self.last = i + 1;
            if !line.trim().is_empty() {
                return Ok((i + 1, line.trim()));
            }
        }
        Err(Error::parse_line(
            self.last + 1,
            format!("unexpected end of file, expected {what}"),
        ))
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let (no, line) = self.next(what)?;
        line.parse::<usize>()
            .map_err(|_| Error::parse_line(no, format!("expected {what}, found `{line}`")))
    }
}

struct Body {
    first_seen: usize,
    /// Per frame: 25 × xyz, or `None` when absent from that frame.
    frames: Vec<Option<Vec<[f64; 3]>>>,
}

impl Body {
    /// Sum over consecutive present frames of per-joint Euclidean displacement.
    fn motion(&self) -> f64 {
        let mut total = 0.0;
        for w in self.frames.windows(2) {
            if let (Some(a), Some(b)) = (&w[0], &w[1]) {
                for (p, q) in a.iter().zip(b) {
                    let d2: f64 = (0..3).map(|k| (q[k] - p[k]) * (q[k] - p[k])).sum();
                    total += d2.sqrt();
                }
            }
        }
        total
    }
}

/// Parses one `.skeleton` file.
///
/// At most [`NTU_MAX_BODIES`] bodies are kept, ranked by summed
/// frame-to-frame joint displacement (ties go to the body seen first); the
/// person axis has `min(max bodies in any frame, 2)` entries, zero where a
/// body is absent.
pub fn parse_ntu_skeleton(text: &str) -> Result<SkeletonSequence> {
    let mut lines = Lines::new(text);
    let frame_count = lines.count("frame count")?;
    if frame_count == 0 {
        return Err(Error::Data("empty sequence: frame count is 0".into()));
    }

    let mut bodies: Vec<Body> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    let mut max_per_frame = 0;

    for f in 0..frame_count {
        let body_count = lines.count("body count")?;
        max_per_frame = max_per_frame.max(body_count);
        for _ in 0..body_count {
            let (no, header) = lines.next("body header")?;
            let fields: Vec<&str> = header.split_whitespace().collect();
            if fields.len() != BODY_HEADER_FIELDS {
                return Err(Error::parse_line(
                    no,
                    format!(
                        "body header has {} fields, expected {BODY_HEADER_FIELDS}",
                        fields.len()
                    ),
                ));
            }
            let id = fields[0].to_string();

            let (jno, jline) = lines.next("joint count")?;
            let joints: usize = jline.parse().map_err(|_| {
                Error::parse_line(jno, format!("expected joint count, found `{jline}`"))
            })?;
            if joints != NTU_JOINTS {
                return Err(Error::parse_line(
                    jno,
                    format!("joint count {joints}, expected {NTU_JOINTS}"),
                ));
            }

            let mut coords = Vec::with_capacity(NTU_JOINTS);
            for _ in 0..NTU_JOINTS {
                let (lno, line) = lines.next("joint line")?;
                let vals: Vec<&str> = line.split_whitespace().collect();
                if vals.len() != JOINT_FIELDS {
                    return Err(Error::parse_line(
                        lno,
                        format!(
                            "joint line has {} fields, expected {JOINT_FIELDS}",
                            vals.len()
                        ),
                    ));
                }
                let mut xyz = [0.0; 3];
                for (k, v) in vals.iter().enumerate() {
                    let parsed: f64 = v
                        .parse()
                        .map_err(|_| Error::parse_line(lno, format!("non-numeric field `{v}`")))?;
                    if k < 3 {
                        xyz[k] = parsed;
                    }
                }
                coords.push(xyz);
            }

            let slot = *by_id.entry(id).or_insert_with(|| {
                bodies.push(Body {
                    first_seen: bodies.len(),
                    frames: vec![None; frame_count],
                });
                bodies.len() - 1
            });
            bodies[slot].frames[f] = Some(coords);
        }
    }

    if let Ok((no, line)) = lines.next("end of file") {
        return Err(Error::parse_line(no, format!("trailing content `{line}`")));
    }

    let mut ranked: Vec<(f64, usize)> = bodies.iter().map(|b| (b.motion(), b.first_seen)).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let m = max_per_frame
        .clamp(1, NTU_MAX_BODIES)
        .min(bodies.len().max(1));

    let mut seq =
        SkeletonSequence::zeros([m, 3, frame_count, NTU_JOINTS], None, SourceFormat::Ntu)?;
    for (p, &(_, idx)) in ranked.iter().take(m).enumerate() {
        for (t, frame) in bodies[idx].frames.iter().enumerate() {
            if let Some(coords) = frame {
                for (j, xyz) in coords.iter().enumerate() {
                    for (c, &v) in xyz.iter().enumerate() {
                        seq.set(p, c, t, j, v);
                    }
                }
            }
        }
    }
    Ok(seq)
}

/// Writes `seq` back out in the `.skeleton` layout. Non-coordinate fields are
/// zero and every person is written as a separate body in every frame.
pub fn write_ntu_skeleton(seq: &SkeletonSequence) -> Result<String> {
    let [m, c, t, n] = seq.dims();
    if c != 3 || n != NTU_JOINTS {
        return Err(Error::Data(format!(
            "cannot write ({m},{c},{t},{n}) as .skeleton"
        )));
    }
    let mut out = format!("{t}\n");
    for f in 0..t {
        out.push_str(&format!("{m}\n"));
        for p in 0..m {
            out.push_str(&format!(
                "{} 0 1 1 1 1 0 0 0 2\n{NTU_JOINTS}\n",
                72057594037931000u64 + p as u64
            ));
            for j in 0..n {
                out.push_str(&format!(
                    "{:?} {:?} {:?} 0 0 0 0 0 0 0 0 2\n",
                    seq.at(p, 0, f, j),
                    seq.at(p, 1, f, j),
                    seq.at(p, 2, f, j)
                ));
            }
        }
    }
    Ok(out)
}
