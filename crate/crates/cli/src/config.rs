//! Run configuration: a TOML file, then `--set key=value` and typed flag
//! overrides on top (flags win), validated before any work starts.
//!
//! ```toml
//! seed = 3
//! out = "runs/a"
//!
//! [train]
//! epochs = 10
//! lr = 1e-4
//!
//! [model]
//! n_experts = 4
//!
//! [model.encoder]
//! d = 64
//!
//! [model.thresholds]
//! high = 0.9
//! low = 0.1
//!
//! [model.ablation]
//! module_subset = ["ip", "is", "t", "mm"]
//!
//! [data]
//! n_train = 2000
//! ```

use crate::error::{CliError, CliResult};
use gamed_core::{GamedError, GenSpec, ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds data generation, initialisation and batch order alike.
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: GenSpec,
}

/// Command-line values layered over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    /// Dotted `key=value` pairs; values parse as TOML, else as strings.
    pub set: Vec<String>,
}

/// Seeds live at the top level only, so one value cannot silently disagree with another.
const SHADOWED: [&str; 2] = ["train.seed", "data.seed"];

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> CliResult<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for kv in &overrides.set {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| CliError::config("set", format!("expected KEY=VALUE, got `{kv}`")))?;
            set_dotted(&mut table, key.trim(), parse_value(value.trim()))?;
        }
        for key in SHADOWED {
            if lookup(&table, key).is_some() {
                return Err(CliError::config(key, "set the top-level `seed` instead"));
            }
        }
        let mut cfg: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(&path, e.into_inner())
        })?;
        if let Some(s) = overrides.seed {
            cfg.seed = s;
        }
        if let Some(o) = &overrides.out {
            cfg.out = Some(o.clone());
        }
        if let Some(e) = overrides.epochs {
            cfg.train.epochs = e;
        }
        if let Some(lr) = overrides.lr {
            cfg.train.lr = lr;
        }
        cfg.train.seed = cfg.seed;
        cfg.data.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        section("model", self.model.validate())?;
        section("train", self.train.validate())?;
        section("data", self.data.validate())?;
        let enc = &self.model.encoder;
        if self.data.grid != enc.grid {
            return Err(CliError::config(
                "data.grid",
                format!("generates {0}x{0} images but the model expects {1}x{1}", self.data.grid, enc.grid),
            ));
        }
        if self.data.vocab > enc.vocab {
            return Err(CliError::config(
                "data.vocab",
                format!("{} exceeds the model vocabulary {}", self.data.vocab, enc.vocab),
            ));
        }
        Ok(())
    }

    pub fn out_dir(&self) -> CliResult<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::config("out", "no output directory; pass --out <dir>"))
    }
}

fn section(name: &str, r: gamed_core::Result<()>) -> CliResult<()> {
    r.map_err(|e| match e {
        GamedError::Config { key, reason } => CliError::config(&format!("{name}.{key}"), reason),
        e => CliError::config(name, e),
    })
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn lookup<'a>(table: &'a toml::Table, dotted: &str) -> Option<&'a toml::Value> {
    let mut parts = dotted.split('.');
    let mut cur = table.get(parts.next()?)?;
    for p in parts {
        cur = cur.as_table()?.get(p)?;
    }
    Some(cur)
}

fn set_dotted(table: &mut toml::Table, dotted: &str, value: toml::Value) -> CliResult<()> {
    let parts: Vec<&str> = dotted.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config("set", format!("bad key `{dotted}`")));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in parents {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::config(dotted, format!("`{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
