//! JSON experiment configuration.
//!
//! A run's config is built in three layers: per-command defaults, then the
//! optional config file, then dotted command-line overrides such as
//! `--train.lr 0.05`. Objects merge key by key; anything else is replaced.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use score_core::mlp::{Activation, DEFAULT_HIDDEN};
use score_core::objectives::{AttackConfig, Objective};
use score_core::toydist::{PerturbBall, ToyDist};
use score_core::trainer::TrainConfig;
use score_core::MetricSpec;

pub const OUT_ENV: &str = "SCORE_LAB_OUT";
pub const DEFAULT_OUT: &str = "score-lab-out";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{file}: {path}: {message}")]
    Parse {
        file: String,
        path: String,
        message: String,
    },
    #[error("override --{key}: {message}")]
    Override { key: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Svg,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    /// Falls back to `$SCORE_LAB_OUT`, then `score-lab-out`.
    pub dir: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            dir: None,
            formats: vec![Format::Csv, Format::Svg, Format::Jsonl],
        }
    }
}

impl Outputs {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    pub fn resolve_dir(&self) -> PathBuf {
        self.dir
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub hidden: usize,
    pub activation: Activation,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN,
            activation: Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoOptions {
    /// Moving-average window of the overfitting-onset detector.
    pub onset_window: usize,
    /// Training pairs drawn for `fig2`.
    pub sample_size: usize,
    /// Support nodes in curve CSVs and sup-gap evaluation.
    pub curve_points: usize,
}

impl Default for DemoOptions {
    fn default() -> Self {
        Self {
            onset_window: 10,
            sample_size: 6,
            curve_points: 201,
        }
    }
}

/// The loss x learning-rate grid of `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub losses: Vec<MetricSpec>,
    pub lrs: Vec<f64>,
    pub objective: Objective,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            losses: MetricSpec::SWEEP.to_vec(),
            lrs: vec![0.1, 0.05, 0.01],
            objective: Objective::Madry,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub distribution: ToyDist,
    /// Authoritative perturbation ball; copied into `attack.ball`.
    pub ball: PerturbBall,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub attack: AttackConfig,
    pub demo: DemoOptions,
    pub sweep: SweepSpec,
    pub outputs: Outputs,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Checks every nested invariant and syncs `attack.ball` to `ball`.
    pub fn finalize(mut self) -> Result<Self, ConfigError> {
        let invalid = |e: score_core::Error| ConfigError::Invalid(e.to_string());
        self.attack.ball = self.ball;
        self.distribution.validate().map_err(invalid)?;
        self.ball
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("ball: {e}")))?;
        self.attack
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("attack: {e}")))?;
        self.train.validate().map_err(invalid)?;
        if self.model.hidden < 1 {
            return Err(ConfigError::Invalid(
                "model.hidden must be at least 1".into(),
            ));
        }
        let d = &self.demo;
        if d.onset_window < 1 || d.sample_size < 1 || d.curve_points < 2 {
            return Err(ConfigError::Invalid(
                "demo.onset_window and demo.sample_size must be positive, demo.curve_points at least 2"
                    .into(),
            ));
        }
        if self.sweep.losses.is_empty() || self.sweep.lrs.is_empty() {
            return Err(ConfigError::Invalid(
                "sweep.losses and sweep.lrs must be nonempty".into(),
            ));
        }
        if self
            .sweep
            .lrs
            .iter()
            .any(|lr| !(*lr > 0.0) || !lr.is_finite())
        {
            return Err(ConfigError::Invalid("sweep.lrs must be positive".into()));
        }
        Ok(self)
    }
}

/// Tag keys of internally tagged enums in the config.
const TAGS: [&str; 2] = ["kind", "mode"];

/// Recursively merge `patch` into `base`. An object whose tag names a
/// different variant replaces the base object instead of merging into it.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p))
            if TAGS.iter().all(|t| match (b.get(*t), p.get(*t)) {
                (Some(x), Some(y)) => x == y,
                _ => true,
            }) =>
        {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// A `--a.b value` pair; the value is JSON when it parses, a string otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub key: String,
    pub value: Value,
}

impl Override {
    pub fn new(key: &str, raw: &str) -> Self {
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        Self {
            key: key.to_string(),
            value,
        }
    }

    fn apply(&self, root: &mut Value) -> Result<(), ConfigError> {
        let err = |message: &str| ConfigError::Override {
            key: self.key.clone(),
            message: message.into(),
        };
        let parts: Vec<&str> = self.key.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(err("empty path segment"));
        }
        let mut node = root;
        for part in &parts[..parts.len() - 1] {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| err("path runs through a non-object"))?;
            node = obj
                .entry(part.to_string())
                .or_insert_with(|| Value::Object(Map::new()));
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| err("path runs through a non-object"))?;
        obj.insert(parts[parts.len() - 1].to_string(), self.value.clone());
        Ok(())
    }
}

/// Split dotted `--a.b value` / `--a.b=value` overrides out of `args`.
/// Returns the remaining arguments and the overrides in order.
pub fn extract_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<Override>), ConfigError> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (key, inline) = match body.split_once('=') {
            Some((k, v)) => (k, Some(v.to_string())),
            None => (body, None),
        };
        if !key.contains('.') {
            rest.push(arg);
            continue;
        }
        let raw = match inline {
            Some(v) => v,
            None => it.next().ok_or_else(|| ConfigError::Override {
                key: key.to_string(),
                message: "missing value".into(),
            })?,
        };
        overrides.push(Override::new(key, &raw));
    }
    Ok((rest, overrides))
}

fn parse_error(file: &str, e: serde_path_to_error::Error<serde_json::Error>) -> ConfigError {
    let path = e.path().to_string();
    ConfigError::Parse {
        file: file.to_string(),
        path,
        message: e.into_inner().to_string(),
    }
}

/// Parse a config document on its own, for line and field diagnostics.
pub fn parse_document(name: &str, text: &str) -> Result<Value, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let _: ExperimentConfig =
        serde_path_to_error::deserialize(de).map_err(|e| parse_error(name, e))?;
    serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        file: name.to_string(),
        path: ".".into(),
        message: e.to_string(),
    })
}

pub fn read_document(path: &Path) -> Result<Value, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_document(&path.display().to_string(), &text)
}

/// `defaults`, then `file`, then `overrides`, into a validated config.
pub fn build(
    defaults: Value,
    file: Option<Value>,
    overrides: &[Override],
) -> Result<ExperimentConfig, ConfigError> {
    let mut root = serde_json::to_value(ExperimentConfig::default()).expect("config serializes");
    merge(&mut root, defaults);
    if let Some(f) = file {
        merge(&mut root, f);
    }
    for o in overrides {
        o.apply(&mut root)?;
    }
    let cfg: ExperimentConfig =
        serde_path_to_error::deserialize(root).map_err(|e| ConfigError::Parse {
            file: "merged config".into(),
            path: e.path().to_string(),
            message: e.into_inner().to_string(),
        })?;
    cfg.finalize()
}

/// Per-command defaults layered under the config file.
pub fn command_defaults(command: &str) -> Value {
    match command {
        "fig1" | "fig2" => json!({
            "train": { "spec": "KL", "steps": 500, "lr": 0.01, "record_every": 10 }
        }),
        "overfit_l2" => json!({
            "train": { "objective": "madry", "spec": "L2", "steps": 1000, "lr": 0.001, "record_every": 1 }
        }),
        "overfit_kl" => json!({
            "train": { "objective": "madry", "spec": "KL", "steps": 1000, "lr": 0.001, "record_every": 1 }
        }),
        "gradient_alignment" => json!({
            "train": { "objective": "madry", "spec": "KL", "steps": 500, "lr": 0.01, "record_every": 5 }
        }),
        "sweep" => json!({
            "train": {
                "steps": 300,
                "record_every": 300,
                "batch": { "mode": "full_quadrature", "points": 81 },
                "eval_points": 81
            }
        }),
        _ => json!({}),
    }
}
