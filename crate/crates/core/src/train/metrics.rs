use std::fmt::Write as _;
use std::path::Path;

use serde_json::json;

use crate::error::{Error, Result};

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Position of `class` when classes are ordered by descending score, ties
/// broken by lower index (consistent with [`argmax`]).
pub fn rank_of(row: &[f64], class: usize) -> usize {
    let s = row[class];
    row.iter()
        .enumerate()
        .filter(|&(j, &v)| v > s || (v == s && j < class))
        .count()
}

pub fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&v| (v - mx).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassAccuracy {
    pub id: usize,
    pub name: String,
    pub support: usize,
    pub correct: usize,
    /// `correct / support`, 0 for classes without samples.
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub samples: usize,
    pub top1: f64,
    pub top5: f64,
    pub per_class: Vec<ClassAccuracy>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl Metrics {
    pub fn from_scores(
        scores: &[Vec<f64>],
        labels: &[usize],
        class_names: Option<&[String]>,
    ) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} score rows but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.is_empty() {
            return Err(Error::Data("no samples to score".into()));
        }
        let k = scores[0].len();
        let mut confusion = vec![vec![0usize; k]; k];
        let (mut hit1, mut hit5) = (0usize, 0usize);
        for (i, (row, &y)) in scores.iter().zip(labels).enumerate() {
            if row.len() != k {
                return Err(Error::Data(format!(
                    "score row {i} has {} classes, expected {k}",
                    row.len()
                )));
            }
            if y >= k {
                return Err(Error::Data(format!(
                    "label {y} of sample {i} out of range for {k} classes"
                )));
            }
            let pred = argmax(row);
            confusion[y][pred] += 1;
            hit1 += usize::from(pred == y);
            hit5 += usize::from(rank_of(row, y) < 5);
        }
        let per_class = (0..k)
            .map(|c| {
                let support: usize = confusion[c].iter().sum();
                let correct = confusion[c][c];
                ClassAccuracy {
                    id: c,
                    name: class_names
                        .and_then(|n| n.get(c).cloned())
                        .unwrap_or_else(|| format!("class{c}")),
                    support,
                    correct,
                    accuracy: if support > 0 {
                        correct as f64 / support as f64
                    } else {
                        0.0
                    },
                }
            })
            .collect();
        let n = scores.len() as f64;
        Ok(Self {
            samples: scores.len(),
            top1: hit1 as f64 / n,
            top5: hit5 as f64 / n,
            per_class,
            confusion,
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "samples": self.samples,
            "top1": self.top1,
            "top5": self.top5,
            "per_class": self.per_class.iter().map(|c| json!({
                "class": c.name,
                "id": c.id,
                "support": c.support,
                "correct": c.correct,
                "accuracy": c.accuracy,
            })).collect::<Vec<_>>(),
            "confusion": self.confusion,
        })
    }

    /// `class,id,accuracy` with accuracy in percent.
    pub fn class_wise_csv(&self) -> String {
        let mut out = String::from("class,id,accuracy\n");
        for c in &self.per_class {
            let _ = writeln!(out, "{},{},{:.2}", c.name, c.id, 100.0 * c.accuracy);
        }
        out
    }

    pub fn write_files(&self, dir: &Path) -> Result<()> {
        std::fs::write(
            dir.join("metrics.json"),
            serde_json::to_string_pretty(&self.to_json()).expect("json"),
        )?;
        std::fs::write(dir.join("class_wise.csv"), self.class_wise_csv())?;
        Ok(())
    }
}
