use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Per-sample class probabilities of one stream, in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    pub ids: Vec<String>,
    pub scores: Vec<Vec<f64>>,
}

impl ScoreTable {
    pub fn num_classes(&self) -> usize {
        self.scores.first().map_or(0, Vec::len)
    }

    /// `sample_id,softmax_0,...,softmax_{K-1}`; values are written in
    /// shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let k = self.num_classes();
        let mut out = String::from("sample_id");
        for c in 0..k {
            let _ = write!(out, ",softmax_{c}");
        }
        out.push('\n');
        for (id, row) in self.ids.iter().zip(&self.scores) {
            out.push_str(id);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse_line(1, "empty score file"))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.first() != Some(&"sample_id")
            || cols[1..]
                .iter()
                .enumerate()
                .any(|(c, name)| *name != format!("softmax_{c}"))
        {
            return Err(Error::parse_line(
                1,
                "header must be sample_id,softmax_0,...,softmax_{K-1}",
            ));
        }
        let k = cols.len() - 1;
        let mut table = ScoreTable {
            ids: Vec::new(),
            scores: Vec::new(),
        };
        for (i, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != k + 1 {
                return Err(Error::parse_line(
                    i + 1,
                    format!("expected {} fields, found {}", k + 1, fields.len()),
                ));
            }
            let row = fields[1..]
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::parse_line(i + 1, format!("non-numeric score `{f}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            table.ids.push(fields[0].to_string());
            table.scores.push(row);
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_csv())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Averages the probabilities of several streams sample by sample.
///
/// Each average is summed in ascending value order, so the result does not
/// depend on the order of `streams`.
pub fn fuse_streams(streams: &[ScoreTable]) -> Result<ScoreTable> {
    let first = streams
        .first()
        .ok_or_else(|| Error::Data("fusion needs at least one score table".into()))?;
    let k = first.num_classes();
    for (s, t) in streams.iter().enumerate() {
        if t.ids != first.ids {
            return Err(Error::Data(format!(
                "stream {s} lists different samples or a different order than stream 0"
            )));
        }
        if t.scores.iter().any(|r| r.len() != k) {
            return Err(Error::Data(format!("stream {s} does not have {k} classes")));
        }
    }
    let n = streams.len() as f64;
    let scores = (0..first.ids.len())
        .map(|i| {
            (0..k)
                .map(|c| {
                    let mut vals: Vec<f64> = streams.iter().map(|t| t.scores[i][c]).collect();
                    vals.sort_by(f64::total_cmp);
                    vals.iter().sum::<f64>() / n
                })
                .collect()
        })
        .collect();
    Ok(ScoreTable {
        ids: first.ids.clone(),
        scores,
    })
}

/// `sample_id,label` companion of a score table.
pub fn labels_to_csv(ids: &[String], labels: &[usize]) -> String {
    let mut out = String::from("sample_id,label\n");
    for (id, l) in ids.iter().zip(labels) {
        let _ = writeln!(out, "{id},{l}");
    }
    out
}

pub fn labels_from_csv(text: &str) -> Result<(Vec<String>, Vec<usize>)> {
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != "sample_id,label" {
                return Err(Error::parse_line(1, "header must be sample_id,label"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (id, l) = line
            .split_once(',')
            .ok_or_else(|| Error::parse_line(i + 1, "expected two fields"))?;
        ids.push(id.trim().to_string());
        labels.push(
            l.trim()
                .parse()
                .map_err(|_| Error::parse_line(i + 1, format!("bad label `{}`", l.trim())))?,
        );
    }
    Ok((ids, labels))
}
