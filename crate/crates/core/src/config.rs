//! Run configuration: a TOML file with the sections `data`, `model`,
//! `attention`, `window`, `modules`, `train` and `output`.
//!
//! Every field has a default. `model.preset` picks the default set
//! (`full` or `desk`); any field given explicitly overrides the preset.
//! Unknown sections or keys and mistyped values are rejected with the
//! dotted key in the message.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::attention::{AffinityKind, AttentionConfig, DtwPlacement, GraphMode, HeadFusion};
use crate::error::{Error, Result};
use crate::layers::{ModelConfig, TEMPORAL_KERNEL};
use crate::skeleton::{FrameSampling, SkeletonGraph, StreamKind, SynthSpec};
use crate::stgraph::WindowSpec;
use crate::train::TrainConfig;

/// Environment variable holding the default `output.dir`.
pub const OUTPUT_DIR_ENV: &str = "STGAT_OUTPUT_DIR";
pub const PRESETS: [&str; 2] = ["full", "desk"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Dataset container used for training (empty: none).
    pub train: String,
    /// Dataset container used for evaluation (empty: none).
    pub test: String,
    pub stream: String,
    pub graph: String,
    pub sample_frames: usize,
    pub crop_frames: usize,
    pub persons: usize,
    /// Synthetic generator used by `synth`: `four_class` or `similar_pair`.
    pub synth: String,
    pub synth_samples_per_class: usize,
    pub synth_frames: usize,
    pub synth_noise: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub preset: String,
    pub num_classes: usize,
    pub in_channels: usize,
    pub embed_channels: usize,
    pub channels: Vec<usize>,
    pub residual: bool,
    pub temporal_kernel: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionSection {
    pub kind: String,
    pub heads: usize,
    pub reduction: usize,
    pub fusion: String,
    pub graph_mode: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    pub tau: usize,
    pub dilation: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulesSection {
    pub separate_learning: bool,
    pub emm: bool,
    pub dtw: bool,
    pub dtw_placement: String,
    pub atw: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub milestones: Vec<usize>,
    pub lr_decay: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub data: DataSection,
    pub model: ModelSection,
    pub attention: AttentionSection,
    pub window: WindowSection,
    pub modules: ModulesSection,
    pub train: TrainSection,
    pub output: OutputSection,
}

fn default_output_dir() -> String {
    std::env::var(OUTPUT_DIR_ENV)
        .ok()
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "runs".into())
}

impl Config {
    /// Defaults of a preset.
    pub fn preset(name: &str) -> Result<Self> {
        let (model, train, data) = match name {
            "full" => (
                ModelConfig::full(60),
                TrainConfig::default(),
                ("ntu", 150, 128),
            ),
            "desk" => (ModelConfig::desk(4), TrainConfig::desk(), ("desk", 32, 28)),
            other => {
                return Err(Error::config(
                    "model.preset",
                    format!(
                        "unknown preset `{other}` (accepted: {})",
                        PRESETS.join(", ")
                    ),
                ))
            }
        };
        let a = &model.attention;
        Ok(Self {
            data: DataSection {
                train: String::new(),
                test: String::new(),
                stream: StreamKind::Joint.name().into(),
                graph: data.0.into(),
                sample_frames: data.1,
                crop_frames: data.2,
                persons: model.persons,
                synth: "four_class".into(),
                synth_samples_per_class: 50,
                synth_frames: 32,
                synth_noise: 0.01,
            },
            model: ModelSection {
                preset: name.into(),
                num_classes: model.num_classes,
                in_channels: model.in_channels,
                embed_channels: model.embed_channels,
                channels: model.channels.clone(),
                residual: model.residual,
                temporal_kernel: model.temporal_kernel,
            },
            attention: AttentionSection {
                kind: a.kind.name().into(),
                heads: a.heads,
                reduction: a.reduction,
                fusion: a.fusion.name().into(),
                graph_mode: a.graph_mode.name().into(),
            },
            window: WindowSection {
                tau: a.window.tau,
                dilation: a.window.dilation,
            },
            modules: ModulesSection {
                separate_learning: a.grouping,
                emm: model.emm,
                dtw: model.dtw,
                dtw_placement: model.dtw_placement.name().into(),
                atw: model.atw,
            },
            train: TrainSection {
                lr: train.lr,
                milestones: train.milestones,
                lr_decay: train.lr_decay,
                weight_decay: train.weight_decay,
                momentum: train.momentum,
                batch_size: train.batch_size,
                epochs: train.epochs,
                seed: train.seed,
            },
            output: OutputSection {
                dir: default_output_dir(),
            },
        })
    }

    /// Parses TOML text, applies `section.key=value` overrides on top of it
    /// and validates the result.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut user: Table = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(1, |s| 1 + text[..s.start].matches('\n').count());
            Error::config("config", format!("line {line}: {}", e.message()))
        })?;
        for o in overrides {
            apply_override(&mut user, o)?;
        }
        let preset = match user.get("model").and_then(|m| m.get("preset")) {
            None => "full".to_string(),
            Some(Value::String(s)) => s.clone(),
            Some(v) => return Err(type_error("model.preset", "string", v)),
        };
        let defaults = Self::preset(&preset)?;
        let mut merged = Table::try_from(&defaults).expect("config serializes");
        for (section, body) in user {
            let Some(Value::Table(dst)) = merged.get_mut(&section) else {
                return Err(Error::config(
                    section.clone(),
                    "unknown section (accepted: data, model, attention, window, modules, train, output)"
                        .to_string(),
                ));
            };
            let Value::Table(body) = body else {
                return Err(Error::config(section, "must be a table"));
            };
            for (key, value) in body {
                let path = format!("{section}.{key}");
                let Some(default) = dst.get(&key) else {
                    let accepted: Vec<&str> = dst.keys().map(String::as_str).collect();
                    return Err(Error::config(
                        path,
                        format!("unknown key (accepted: {})", accepted.join(", ")),
                    ));
                };
                let value = coerce(&path, default, value)?;
                dst.insert(key, value);
            }
        }
        let cfg: Config = Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    /// Effective configuration as TOML, suitable for [`Config::parse`].
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config()?.validate()?;
        self.train_config().validate()?;
        self.sampling().validate()?;
        self.stream()?;
        let graph = self.graph()?;
        if graph.num_joints() == 0 {
            return Err(Error::config("data.graph", "graph has no joints"));
        }
        if self.data.synth_samples_per_class == 0 {
            return Err(Error::config("data.synth_samples_per_class", "must be ≥ 1"));
        }
        self.synth_spec()?.validate().map_err(|e| match e {
            Error::Config { key, msg } => Error::config(format!("data.{key}"), msg),
            other => other,
        })?;
        if self.output.dir.is_empty() {
            return Err(Error::config("output.dir", "must not be empty"));
        }
        Ok(())
    }

    pub fn window(&self) -> WindowSpec {
        WindowSpec {
            tau: self.window.tau,
            dilation: self.window.dilation,
        }
    }

    pub fn attention_config(&self) -> Result<AttentionConfig> {
        Ok(AttentionConfig {
            kind: self.attention.kind.parse::<AffinityKind>()?,
            heads: self.attention.heads,
            reduction: self.attention.reduction,
            window: self.window(),
            grouping: self.modules.separate_learning,
            fusion: self.attention.fusion.parse::<HeadFusion>()?,
            graph_mode: self.attention.graph_mode.parse::<GraphMode>()?,
        })
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let m = &self.model;
        Ok(ModelConfig {
            in_channels: m.in_channels,
            num_classes: m.num_classes,
            embed_channels: m.embed_channels,
            channels: m.channels.clone(),
            persons: self.data.persons,
            attention: self.attention_config()?,
            emm: self.modules.emm,
            dtw: self.modules.dtw,
            dtw_placement: self.modules.dtw_placement.parse::<DtwPlacement>()?,
            atw: self.modules.atw,
            residual: m.residual,
            temporal_kernel: m.temporal_kernel,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            lr: t.lr,
            milestones: t.milestones.clone(),
            lr_decay: t.lr_decay,
            weight_decay: t.weight_decay,
            momentum: t.momentum,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed: t.seed,
        }
    }

    pub fn sampling(&self) -> FrameSampling {
        FrameSampling {
            sample_len: self.data.sample_frames,
            crop_len: self.data.crop_frames,
        }
    }

    pub fn stream(&self) -> Result<StreamKind> {
        self.data.stream.parse()
    }

    pub fn graph(&self) -> Result<SkeletonGraph> {
        SkeletonGraph::by_name(&self.data.graph)
    }

    pub fn synth_spec(&self) -> Result<SynthSpec> {
        let d = &self.data;
        SynthSpec::by_name(
            &d.synth,
            d.synth_samples_per_class,
            d.synth_frames,
            d.synth_noise,
        )
        .map_err(|e| match e {
            Error::Config { msg, .. } => Error::config("data.synth", msg),
            other => other,
        })
    }

    pub fn output_dir(&self) -> PathBuf {
        PathBuf::from(&self.output.dir)
    }
}

impl Default for Config {
    fn default() -> Self {
        Self::preset("full").expect("built-in preset")
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "string",
        Value::Integer(_) => "integer",
        Value::Float(_) => "float",
        Value::Boolean(_) => "boolean",
        Value::Datetime(_) => "datetime",
        Value::Array(_) => "array",
        Value::Table(_) => "table",
    }
}

fn type_error(path: &str, expected: &str, got: &Value) -> Error {
    Error::config(
        path,
        format!("expected {expected}, got {} `{got}`", type_name(got)),
    )
}

/// Checks `value` against the type of the default, widening integers to
/// floats and rejecting negative integers where counts are expected.
fn coerce(path: &str, default: &Value, value: Value) -> Result<Value> {
    match (default, value) {
        (Value::Float(_), Value::Integer(i)) => Ok(Value::Float(i as f64)),
        (Value::Integer(_), Value::Integer(i)) if i < 0 => Err(Error::config(
            path,
            format!("must be a non-negative integer, got {i}"),
        )),
        (Value::Array(d), Value::Array(items)) => {
            let Some(proto) = d.first() else {
                return Ok(Value::Array(items));
            };
            items
                .into_iter()
                .enumerate()
                .map(|(i, v)| coerce(&format!("{path}[{i}]"), proto, v))
                .collect::<Result<Vec<_>>>()
                .map(Value::Array)
        }
        (d, v) if std::mem::discriminant(d) == std::mem::discriminant(&v) => Ok(v),
        (d, v) => Err(type_error(path, type_name(d), &v)),
    }
}

/// `section.key=value`; the value is read as a TOML literal, or as a bare
/// string when it does not parse as one.
fn apply_override(user: &mut Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must look like section.key=value"))?;
    let path = path.trim();
    let (section, key) = path
        .split_once('.')
        .ok_or_else(|| Error::config(path, "override key must look like section.key"))?;
    let raw = raw.trim();
    let value = toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let entry = user
        .entry(section.to_string())
        .or_insert_with(|| Value::Table(Table::new()));
    let Value::Table(t) = entry else {
        return Err(Error::config(section, "must be a table"));
    };
    t.insert(key.to_string(), value);
    Ok(())
}

/// Kernel width default, re-exported for documentation of the schema.
pub const DEFAULT_TEMPORAL_KERNEL: usize = TEMPORAL_KERNEL;
