//! Layered run configuration.
//!
//! A run starts from built-in defaults (the model comes from a named
//! preset), then applies a config file, then command-line flags; later
//! layers win key by key. The config file is TOML (`.toml`) or JSON
//! (anything else) with the same structure as the resolved snapshot every
//! command writes:
//!
//! ```toml
//! seed = 7
//! preset = "desk"
//!
//! [model]
//! dwconv_path = "p2"
//!
//! [train]
//! epochs = 20
//! ```
//!
//! The top-level `seed` is the single seed of a run: it becomes the dataset
//! master seed and the training seed.

use std::path::Path;

use rssnet_core::data::SplitSizes;
use rssnet_core::model::RssNetConfig;
use rssnet_core::sparse::{NnompConfig, SunsalConfig};
use rssnet_core::train::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::fsio::read_text;
use crate::{Error, Result};

pub const DEFAULT_PRESET: &str = "reference";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";

/// Dataset generation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSettings {
    pub name: String,
    pub sizes: SplitSizes,
    pub snr_db: [f64; 2],
    /// Grid every library spectrum is resampled to.
    pub length: usize,
    pub components: usize,
}

impl Default for DataSettings {
    fn default() -> Self {
        DataSettings {
            name: "rssnet".into(),
            sizes: SplitSizes {
                train: 60_000,
                val: 5_000,
                test: 5_000,
            },
            snr_db: [10.0, 20.0],
            length: 1024,
            components: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub preset: String,
    pub model: RssNetConfig,
    pub train: TrainConfig,
    pub data: DataSettings,
    pub sunsal: SunsalConfig,
    pub nnomp: NnompConfig,
}

impl RunConfig {
    pub fn defaults(preset: &str) -> Result<Self> {
        Ok(RunConfig {
            seed: 0,
            preset: preset.into(),
            model: RssNetConfig::preset(preset)?,
            train: TrainConfig::default(),
            data: DataSettings::default(),
            sunsal: SunsalConfig::default(),
            nnomp: NnompConfig::default(),
        })
    }

    /// Defaults, then `file`, then `flags`. `flags` is a partial document
    /// shaped like the resolved config.
    pub fn resolve(file: Option<&Path>, flags: &Value) -> Result<Self> {
        let file_layer = match file {
            Some(p) => read_layer(p)?,
            None => Value::Object(Map::new()),
        };
        let preset = [flags, &file_layer]
            .iter()
            .find_map(|v| v.get("preset").and_then(Value::as_str))
            .unwrap_or(DEFAULT_PRESET)
            .to_string();
        let mut doc = serde_json::to_value(RunConfig::defaults(&preset)?).expect("defaults serialise");
        merge(&mut doc, &file_layer);
        merge(&mut doc, flags);
        let mut cfg: RunConfig = serde_json::from_value(doc).map_err(|e| Error::Usage(format!("invalid configuration: {e}")))?;
        cfg.train.seed = cfg.seed;
        cfg.model.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }
}

/// Parses a config file into a partial document.
pub fn read_layer(path: &Path) -> Result<Value> {
    let text = read_text(path)?;
    let value: Value = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml")) {
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?
    } else {
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?
    };
    if !value.is_object() {
        return Err(Error::format(path, "config must be a table of settings"));
    }
    Ok(value)
}

/// Recursively overwrites `base` with `layer`; objects merge key by key,
/// everything else is replaced.
pub fn merge(base: &mut Value, layer: &Value) {
    match (base, layer) {
        (Value::Object(b), Value::Object(l)) => {
            for (k, v) in l {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, l) => *b = l.clone(),
    }
}

/// Sets a dotted `path` in a partial document, creating objects on the way.
pub fn set(doc: &mut Value, path: &str, value: Value) {
    let mut cur = doc;
    let mut keys = path.split('.').peekable();
    while let Some(k) = keys.next() {
        if !cur.is_object() {
            *cur = Value::Object(Map::new());
        }
        let map = cur.as_object_mut().expect("object");
        if keys.peek().is_none() {
            map.insert(k.into(), value);
            return;
        }
        cur = map.entry(k).or_insert_with(|| Value::Object(Map::new()));
    }
}
