//! Run configuration: one JSON document plus `dotted.path=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use clipedit::corpus::SynthConfig;
use clipedit::cotrain::{CoTrainConfig, TeacherMode};
use clipedit::editor::EditConfig;
use clipedit::encoder::TrainConfig;
use clipedit::timeline::InitStrategy;

use crate::Failure;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub features_dir: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

/// Boundary noise added to the initial training clips before warm-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JitterConfig {
    /// Fraction of training captions whose initial clip is jittered.
    pub fraction: f64,
    /// Largest shift applied to either boundary, in seconds.
    pub max_s: f64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self {
            fraction: 0.0,
            max_s: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoTrainSection {
    pub gamma: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub teacher_mode: TeacherMode,
}

impl Default for CoTrainSection {
    fn default() -> Self {
        let d = CoTrainConfig::default();
        Self {
            gamma: d.gamma,
            patience: d.patience,
            max_epochs: d.max_epochs,
            teacher_mode: d.teacher_mode,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub synth: Option<SynthConfig>,
    pub init_strategy: InitStrategy,
    pub jitter: JitterConfig,
    /// Warm-up training; the student reuses everything but `epochs`.
    pub train: TrainConfig,
    pub edit: EditConfig,
    pub cotrain: CoTrainSection,
    /// Seeds weight init, batch shuffling and jitter.
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, Failure> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
            }
            None => Value::Object(Map::new()),
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| Failure::Config(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn cotrain_config(&self) -> CoTrainConfig {
        CoTrainConfig {
            gamma: self.cotrain.gamma,
            patience: self.cotrain.patience,
            max_epochs: self.cotrain.max_epochs,
            teacher_mode: self.cotrain.teacher_mode,
            train: self.train_config(),
            edit: self.edit.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let on_disk = self.paths.features_dir.is_some() || self.paths.annotations.is_some();
        match (on_disk, &self.synth) {
            (true, Some(_)) => {
                return Err(Failure::Config(
                    "set either paths.features_dir/annotations or synth, not both".into(),
                ))
            }
            (false, None) => {
                return Err(Failure::Config(
                    "no corpus: set paths.features_dir and paths.annotations, or synth".into(),
                ))
            }
            (true, None) if self.paths.features_dir.is_none() || self.paths.annotations.is_none() => {
                return Err(Failure::Config(
                    "paths.features_dir and paths.annotations must be set together".into(),
                ))
            }
            _ => {}
        }
        if let Some(s) = &self.synth {
            s.validate()?;
        }
        if !(0.0..=1.0).contains(&self.jitter.fraction) || !(self.jitter.max_s >= 0.0) {
            return Err(Failure::Config(format!(
                "jitter.fraction must lie in [0, 1] and jitter.max_s be non-negative, got {:?}",
                self.jitter
            )));
        }
        self.init_strategy.validate()?;
        self.cotrain_config().validate()?;
        Ok(())
    }

    pub fn out_dir(&self) -> Result<&Path, Failure> {
        self.paths
            .out_dir
            .as_deref()
            .ok_or_else(|| Failure::Config("no output directory: pass --out or set paths.out_dir".into()))
    }
}

/// Parse the right-hand side of an override: JSON if it parses, a bare
/// string otherwise.
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Apply `a.b.c=value`, creating intermediate objects as needed.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), Failure> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Failure::Config(format!("--set expects KEY=VALUE, got {assignment:?}")))?;
    set_path(doc, path, parse_value(raw))
}

pub fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<(), Failure> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Failure::Config(format!("bad config path {path:?}")));
    }
    let mut node = doc;
    for key in &keys[..keys.len() - 1] {
        if node.is_null() {
            *node = Value::Object(Map::new());
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Failure::Config(format!("{path}: {key} is not inside an object")))?;
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    if node.is_null() {
        *node = Value::Object(Map::new());
    }
    node.as_object_mut()
        .ok_or_else(|| Failure::Config(format!("{path}: parent is not an object")))?
        .insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}
