use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stgat_autodiff::{Mode, ParamStore, Tape};

use super::fusion::ScoreTable;
use super::metrics::{argmax, softmax_row, Metrics};
use super::sgd::{Sgd, TrainConfig};
use crate::error::{Error, Result};
use crate::layers::{stack_batch, Stgat};
use crate::skeleton::{preprocess, FrameSampling, SkeletonSequence, SplitMode};

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub curve: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Accuracy the best epoch was selected on (validation if given).
    pub best_acc: f64,
    pub best_params: ParamStore,
}

impl TrainReport {
    /// `epoch,lr,train_loss,train_acc[,val_acc]`.
    pub fn curve_csv(&self) -> String {
        let with_val = self.curve.iter().any(|r| r.val_acc.is_some());
        let mut out = String::from("epoch,lr,train_loss,train_acc");
        if with_val {
            out.push_str(",val_acc");
        }
        out.push('\n');
        for r in &self.curve {
            out.push_str(&format!(
                "{},{},{},{}",
                r.epoch, r.lr, r.train_loss, r.train_acc
            ));
            if with_val {
                out.push_str(&format!(",{}", r.val_acc.unwrap_or(f64::NAN)));
            }
            out.push('\n');
        }
        out
    }
}

fn labels_of(samples: &[SkeletonSequence], classes: usize) -> Result<Vec<usize>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| match s.label {
            Some(l) if l < classes => Ok(l),
            Some(l) => Err(Error::Data(format!(
                "sample {i}: label {l} out of range for {classes} classes"
            ))),
            None => Err(Error::Data(format!("sample {i} has no label"))),
        })
        .collect()
}

/// Mini-batch training with a seeded shuffle and per-epoch frame sampling.
///
/// After every epoch the model is scored on `val` (or on the training
/// accuracy when `val` is `None`); the best-scoring parameters are kept.
pub fn train(
    model: &Stgat,
    store: &mut ParamStore,
    samples: &[SkeletonSequence],
    val: Option<&[SkeletonSequence]>,
    sampling: &FrameSampling,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainReport> {
    cfg.validate()?;
    sampling.validate()?;
    if samples.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let labels = labels_of(samples, model.cfg.num_classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Sgd::from_config(cfg);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, ParamStore)> = None;

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let clips = chunk
                .iter()
                .map(|&i| preprocess(&samples[i], sampling, SplitMode::Train, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&SkeletonSequence> = clips.iter().collect();
            let x = stack_batch(&refs, model.cfg.persons)?;
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();

            let mut tape = Tape::new();
            let logits = model.forward_logits(&mut tape, store, x, Mode::Train)?;
            let loss = tape.cross_entropy(logits, &y)?;
            let lv = tape.value(loss).item();
            if !lv.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite training loss at epoch {epoch}"
                )));
            }
            let lg = tape.value(logits);
            let k = model.cfg.num_classes;
            for (r, &yi) in y.iter().enumerate() {
                correct += usize::from(argmax(&lg.data()[r * k..(r + 1) * k]) == yi);
            }
            loss_sum += lv * chunk.len() as f64;

            store.zero_grad();
            tape.backward(loss, store)?;
            opt.step(store, lr)?;
        }
        let n = samples.len() as f64;
        let train_acc = correct as f64 / n;
        let val_acc = match val {
            Some(v) if !v.is_empty() => Some(
                evaluate(model, store, v, sampling, cfg.batch_size, None)?
                    .metrics
                    .top1,
            ),
            _ => None,
        };
        let rec = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / n,
            train_acc,
            val_acc,
        };
        on_epoch(&rec);
        let score = val_acc.unwrap_or(train_acc);
        if best.as_ref().is_none_or(|(_, b, _)| score > *b) {
            best = Some((epoch, score, store.clone()));
        }
        curve.push(rec);
    }
    let (best_epoch, best_acc, best_params) = best.expect("at least one epoch");
    Ok(TrainReport {
        curve,
        best_epoch,
        best_acc,
        best_params,
    })
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub scores: ScoreTable,
    pub labels: Vec<usize>,
}

/// Scores `samples` with test-mode frame sampling and eval-mode
/// normalization. Sample ids are the dataset positions.
pub fn evaluate(
    model: &Stgat,
    store: &mut ParamStore,
    samples: &[SkeletonSequence],
    sampling: &FrameSampling,
    batch_size: usize,
    class_names: Option<&[String]>,
) -> Result<Evaluation> {
    let labels = labels_of(samples, model.cfg.num_classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let k = model.cfg.num_classes;
    let mut scores = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let clips = chunk
            .iter()
            .map(|s| preprocess(s, sampling, SplitMode::Test, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&SkeletonSequence> = clips.iter().collect();
        let x = stack_batch(&refs, model.cfg.persons)?;
        let mut tape = Tape::new();
        let logits = model.forward_logits(&mut tape, store, x, Mode::Eval)?;
        let lg = tape.value(logits);
        if !lg.all_finite() {
            return Err(Error::Numeric("non-finite logits during evaluation".into()));
        }
        for r in 0..chunk.len() {
            scores.push(softmax_row(&lg.data()[r * k..(r + 1) * k]));
        }
    }
    let metrics = Metrics::from_scores(&scores, &labels, class_names)?;
    Ok(Evaluation {
        metrics,
        scores: ScoreTable {
            ids: (0..samples.len()).map(|i| i.to_string()).collect(),
            scores,
        },
        labels,
    })
}
