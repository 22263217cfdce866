use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use stgat_autodiff::{Checkpoint, GradCheckConfig, Mode, ParamStore, Tape, CHECKPOINT_VERSION};
use stgat_core::config::Config;
use stgat_core::layers::{stack_batch, Stgat};
use stgat_core::skeleton::{
    derive_stream, load_dataset, parse_kinetics_json, parse_ntu_skeleton, preprocess, save_dataset,
    synth_dataset, SkeletonSequence, SplitMode, DATASET_VERSION,
};
use stgat_core::train::{
    evaluate, fuse_streams, labels_from_csv, labels_to_csv, train, Evaluation, Metrics, ScoreTable,
};
use stgat_core::{Error, Result};

use crate::{flag_overrides, Cli, Command, Format};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::InspectData { file, format } => inspect_data(file, *format),
        Command::Eval { checkpoint } => {
            let ckpt = load_checkpoint(checkpoint)?;
            // Without --config the checkpoint's own config echo is the base.
            let cfg = match &cli.config {
                Some(_) => load_config(cli)?,
                None => Config::parse(&ckpt.config, &flag_overrides(cli)?)?,
            };
            let run = RunDir::create(cli, &cfg)?;
            eval(&cfg, &run, &ckpt)
        }
        cmd => {
            let cfg = load_config(cli)?;
            let run = RunDir::create(cli, &cfg)?;
            match cmd {
                Command::Synth => synth(&cfg, &run),
                Command::Train => train_cmd(&cfg, &run),
                Command::Fuse { scores, labels } => fuse(&run, scores, labels.as_deref()),
                Command::Gradcheck {
                    samples,
                    eps,
                    frames,
                    batch,
                } => gradcheck(&cfg, &run, *samples, *eps, *frames, *batch),
                Command::DumpAttn {
                    checkpoint,
                    input,
                    sample,
                } => dump_attn(&cfg, &run, checkpoint.as_deref(), input.as_deref(), *sample),
                Command::InspectData { .. } | Command::Eval { .. } => unreachable!(),
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let overrides = flag_overrides(cli)?;
    match &cli.config {
        Some(path) => Config::load(path, &overrides),
        None => Config::parse("", &overrides),
    }
}

/// Output directory of one invocation, with the config echo and run record.
struct RunDir {
    path: PathBuf,
}

impl RunDir {
    fn create(cli: &Cli, cfg: &Config) -> Result<Self> {
        let name = cli
            .run
            .clone()
            .unwrap_or_else(|| cli.command.name().to_string());
        let path = cfg.output_dir().join(name);
        fs::create_dir_all(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let run = Self { path };
        run.write("config.toml", &cfg.to_toml())?;
        let record = json!({
            "command": cli.command.name(),
            "argv": std::env::args().collect::<Vec<_>>(),
            "seed": cfg.train.seed,
            "config": "config.toml",
            "versions": {
                "stgat": env!("CARGO_PKG_VERSION"),
                "checkpoint_format": CHECKPOINT_VERSION,
                "dataset_format": DATASET_VERSION,
            },
        });
        run.write(
            "run.json",
            &serde_json::to_string_pretty(&record).expect("json"),
        )?;
        Ok(run)
    }

    fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        let p = self.file(name);
        fs::write(&p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Split {
    Train,
    Test,
}

/// A split from its dataset container, or synthesized when none is
/// configured (held-out data uses the next seed). Class names are known
/// only for synthetic data.
fn load_split(cfg: &Config, split: Split) -> Result<(Vec<SkeletonSequence>, Option<Vec<String>>)> {
    let path = match split {
        Split::Train => &cfg.data.train,
        Split::Test => &cfg.data.test,
    };
    let (raw, names) = if path.is_empty() {
        let spec = cfg.synth_spec()?;
        if spec.classes.len() != cfg.model.num_classes {
            return Err(Error::config(
                "model.num_classes",
                format!(
                    "synthetic set `{}` has {} classes, model has {}",
                    cfg.data.synth,
                    spec.classes.len(),
                    cfg.model.num_classes
                ),
            ));
        }
        let seed = cfg.train.seed + u64::from(split == Split::Test);
        (synth_dataset(&spec, seed)?, Some(spec.class_names()))
    } else {
        (load_dataset(path).map_err(|e| with_path(e, path))?, None)
    };
    let graph = cfg.graph()?;
    let stream = cfg.stream()?;
    let seqs = raw
        .iter()
        .map(|s| derive_stream(s, stream, &graph))
        .collect::<Result<Vec<_>>>()?;
    Ok((seqs, names))
}

fn with_path(e: Error, path: &str) -> Error {
    match e {
        Error::Parse { location, msg } => Error::Parse {
            location: format!("{path}: {location}"),
            msg,
        },
        Error::Data(msg) => Error::Data(format!("{path}: {msg}")),
        Error::Io(msg) => Error::Io(format!("{path}: {msg}")),
        other => other,
    }
}

fn build_model(cfg: &Config) -> Result<(Stgat, ParamStore)> {
    Stgat::new(&cfg.model_config()?, &cfg.graph()?, cfg.train.seed)
}

fn restore(ckpt: &Checkpoint, store: &mut ParamStore) -> Result<()> {
    ckpt.restore_into(store).map_err(|e| {
        Error::config(
            "model",
            format!("checkpoint does not match the model configuration: {e}"),
        )
    })
}

fn save_checkpoint(run: &RunDir, name: &str, store: &ParamStore, cfg: &Config) -> Result<()> {
    let p = run.file(name);
    Checkpoint::from_store(store, cfg.to_toml())
        .save(&p)
        .map_err(|e| Error::Io(format!("{}: {e}", p.display())))
}

fn write_evaluation(run: &RunDir, ev: &Evaluation) -> Result<()> {
    ev.metrics.write_files(&run.path)?;
    ev.scores.save(&run.file("scores.csv"))?;
    run.write("labels.csv", &labels_to_csv(&ev.scores.ids, &ev.labels))
}

fn synth(cfg: &Config, run: &RunDir) -> Result<()> {
    for (split, name) in [(Split::Train, "train.skds"), (Split::Test, "test.skds")] {
        let spec = cfg.synth_spec()?;
        let seed = cfg.train.seed + u64::from(split == Split::Test);
        let data = synth_dataset(&spec, seed)?;
        let p = run.file(name);
        save_dataset(&p, &data)?;
        println!(
            "wrote {} ({} samples, {} classes)",
            p.display(),
            data.len(),
            spec.classes.len()
        );
    }
    Ok(())
}

fn train_cmd(cfg: &Config, run: &RunDir) -> Result<()> {
    let (train_set, _) = load_split(cfg, Split::Train)?;
    let (val_set, names) = load_split(cfg, Split::Test)?;
    let (model, mut store) = build_model(cfg)?;
    let sampling = cfg.sampling();
    let report = train(
        &model,
        &mut store,
        &train_set,
        Some(&val_set),
        &sampling,
        &cfg.train_config(),
        |r| {
            println!(
                "epoch {} lr {} loss {:.6} train_acc {:.4} val_acc {:.4}",
                r.epoch,
                r.lr,
                r.train_loss,
                r.train_acc,
                r.val_acc.unwrap_or(f64::NAN)
            )
        },
    )?;
    run.write("curves.csv", &report.curve_csv())?;
    save_checkpoint(run, "checkpoint_last.ckpt", &store, cfg)?;
    save_checkpoint(run, "checkpoint_best.ckpt", &report.best_params, cfg)?;
    let mut best = report.best_params;
    let ev = evaluate(
        &model,
        &mut best,
        &val_set,
        &sampling,
        cfg.train.batch_size,
        names.as_deref(),
    )?;
    write_evaluation(run, &ev)?;
    println!(
        "best epoch {} top1 {:.4} top5 {:.4} -> {}",
        report.best_epoch,
        ev.metrics.top1,
        ev.metrics.top5,
        run.path.display()
    );
    Ok(())
}

fn eval(cfg: &Config, run: &RunDir, ckpt: &Checkpoint) -> Result<()> {
    let (model, mut store) = build_model(cfg)?;
    restore(ckpt, &mut store)?;
    let (data, names) = load_split(cfg, Split::Test)?;
    let ev = evaluate(
        &model,
        &mut store,
        &data,
        &cfg.sampling(),
        cfg.train.batch_size,
        names.as_deref(),
    )?;
    write_evaluation(run, &ev)?;
    println!(
        "top1 {:.4} top5 {:.4} samples {}",
        ev.metrics.top1, ev.metrics.top5, ev.metrics.samples
    );
    Ok(())
}

fn fuse(run: &RunDir, scores: &[PathBuf], labels: Option<&Path>) -> Result<()> {
    let tables = scores
        .iter()
        .map(|p| ScoreTable::load(p))
        .collect::<Result<Vec<_>>>()?;
    let fused = fuse_streams(&tables)?;
    fused.save(&run.file("scores.csv"))?;
    println!(
        "fused {} streams over {} samples",
        tables.len(),
        fused.ids.len()
    );
    if let Some(path) = labels {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let (ids, labels) = labels_from_csv(&text)?;
        if ids != fused.ids {
            return Err(Error::Data(format!(
                "{}: sample ids differ from the score files",
                path.display()
            )));
        }
        let metrics = Metrics::from_scores(&fused.scores, &labels, None)?;
        metrics.write_files(&run.path)?;
        run.write("labels.csv", &text)?;
        println!("top1 {:.4} top5 {:.4}", metrics.top1, metrics.top5);
    }
    Ok(())
}

fn gradcheck(
    cfg: &Config,
    run: &RunDir,
    samples: usize,
    eps: f64,
    frames: usize,
    batch: usize,
) -> Result<()> {
    if batch == 0 || frames == 0 {
        return Err(Error::config(
            "gradcheck",
            "--batch and --frames must be ≥ 1",
        ));
    }
    let mut spec = cfg.synth_spec()?;
    spec.frames = frames;
    spec.samples_per_class = batch.div_ceil(spec.classes.len());
    let data = synth_dataset(&spec, cfg.train.seed)?;
    let graph = cfg.graph()?;
    let stream = cfg.stream()?;
    let picked = data
        .iter()
        .take(batch)
        .map(|s| derive_stream(s, stream, &graph))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&SkeletonSequence> = picked.iter().collect();
    let labels: Vec<usize> = picked
        .iter()
        .map(|s| s.label.unwrap_or(0) % cfg.model.num_classes)
        .collect();
    let (model, mut store) = build_model(cfg)?;
    let x = stack_batch(&refs, model.cfg.persons)?;
    let report = model.grad_check(
        &mut store,
        &x,
        &labels,
        &GradCheckConfig {
            eps,
            samples,
            seed: cfg.train.seed,
        },
    )?;
    let worst = report.worst().map(|w| {
        json!({
            "param": w.param,
            "index": w.index,
            "analytic": w.analytic,
            "numeric": w.numeric,
            "rel_error": w.rel_error,
        })
    });
    let passed = report.passed(GRADCHECK_TOLERANCE);
    let out = json!({
        "max_rel_error": report.max_rel_error,
        "checked": report.checked,
        "non_finite": report.non_finite,
        "tolerance": GRADCHECK_TOLERANCE,
        "passed": passed,
        "worst": worst,
    });
    run.write(
        "gradcheck.json",
        &serde_json::to_string_pretty(&out).expect("json"),
    )?;
    println!(
        "max_rel_error {:.3e} checked {}",
        report.max_rel_error, report.checked
    );
    if !passed {
        return Err(Error::Numeric(format!(
            "gradient check failed: max relative error {:.3e} (tolerance {GRADCHECK_TOLERANCE:e}, non-finite: {})",
            report.max_rel_error, report.non_finite
        )));
    }
    Ok(())
}

fn dump_attn(
    cfg: &Config,
    run: &RunDir,
    ckpt: Option<&Path>,
    input: Option<&Path>,
    index: usize,
) -> Result<()> {
    let (model, mut store) = build_model(cfg)?;
    if let Some(p) = ckpt {
        restore(&load_checkpoint(p)?, &mut store)?;
    }
    let data = match input {
        Some(p) => {
            let graph = cfg.graph()?;
            let stream = cfg.stream()?;
            read_any(p, Format::Auto)?
                .iter()
                .map(|s| derive_stream(s, stream, &graph))
                .collect::<Result<Vec<_>>>()?
        }
        None => load_split(cfg, Split::Test)?.0,
    };
    let seq = data.get(index).ok_or_else(|| {
        Error::Data(format!(
            "sample {index} out of range ({} samples)",
            data.len()
        ))
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let clip = preprocess(seq, &cfg.sampling(), SplitMode::Test, &mut rng)?;
    let x = stack_batch(&[&clip], model.cfg.persons)?;
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let out = model.forward(&mut tape, &mut store, xv, Mode::Eval)?;
    let blocks: Vec<serde_json::Value> = model
        .blocks
        .iter()
        .zip(&out.blocks)
        .map(|(b, o)| b.attention.maps_json(&tape, &o.attention.maps, 0))
        .collect();
    let doc = json!({
        "sample": index,
        "label": seq.label,
        "frames": clip.frames(),
        "blocks": blocks,
    });
    let p = run.file("attention.json");
    fs::write(&p, serde_json::to_string(&doc).expect("json"))
        .map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
    println!("wrote {} ({} blocks)", p.display(), blocks.len());
    Ok(())
}

fn read_any(path: &Path, format: Format) -> Result<Vec<SkeletonSequence>> {
    let format = match format {
        Format::Auto => match path.extension().and_then(|e| e.to_str()) {
            Some("skeleton") => Format::Ntu,
            Some("json") => Format::Kinetics,
            _ => Format::Dataset,
        },
        f => f,
    };
    let shown = path.display().to_string();
    let text = || fs::read_to_string(path).map_err(|e| Error::Io(format!("{shown}: {e}")));
    let seqs = match format {
        Format::Ntu => vec![parse_ntu_skeleton(&text()?).map_err(|e| with_path(e, &shown))?],
        Format::Kinetics => vec![parse_kinetics_json(&text()?).map_err(|e| with_path(e, &shown))?],
        _ => load_dataset(path).map_err(|e| with_path(e, &shown))?,
    };
    Ok(seqs)
}

fn inspect_data(path: &Path, format: Format) -> Result<()> {
    let seqs = read_any(path, format)?;
    println!("{}: {} sequence(s)", path.display(), seqs.len());
    for (i, s) in seqs.iter().enumerate() {
        let [m, c, t, n] = s.dims();
        let label = s.label.map_or("none".to_string(), |l| l.to_string());
        println!(
            "sample {i}: (M,C,T,N)=({m},{c},{t},{n}) label={label} source={}",
            s.source.name()
        );
    }
    Ok(())
}
