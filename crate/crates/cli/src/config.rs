//! Layered training configuration: built-in defaults, then an optional TOML
//! file, then `--set key.path=value` overrides, in that order.
//!
//! Every key in a file or override must already exist in the defaults, so a
//! misspelt key is an error rather than a silently ignored setting.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use bridge_learn::TrainConfig;
use toml::{Table, Value};

use crate::UsageError;

pub fn to_value(config: &TrainConfig) -> Result<Value> {
    Value::try_from(config).context("serializing configuration")
}

pub fn from_value(value: Value) -> Result<TrainConfig> {
    let config: TrainConfig = value.try_into().map_err(|e| UsageError(format!("invalid configuration: {e}")))?;
    Ok(config)
}

/// Resolves the layers on top of `base`.
pub fn resolve(base: &TrainConfig, file: Option<&Path>, sets: &[String]) -> Result<TrainConfig> {
    let mut root = to_value(base)?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let table: Table =
            toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        merge(&mut root, Value::Table(table), "")?;
    }
    for s in sets {
        apply_set(&mut root, s)?;
    }
    from_value(root)
}

fn merge(base: &mut Value, overlay: Value, path: &str) -> Result<()> {
    match (base, overlay) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                let sub = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                let slot = b.get_mut(&k).ok_or_else(|| UsageError(format!("unknown configuration key `{sub}`")))?;
                merge(slot, v, &sub)?;
            }
            Ok(())
        }
        (b, o) => {
            *b = coerce(b, o);
            Ok(())
        }
    }
}

/// TOML writes `2e6` as a float; integer fields accept whole floats.
fn coerce(old: &Value, new: Value) -> Value {
    match (old, &new) {
        (Value::Integer(_), Value::Float(f)) if f.fract() == 0.0 && f.abs() < 9.0e18 => Value::Integer(*f as i64),
        (Value::Float(_), Value::Integer(i)) => Value::Float(*i as f64),
        _ => new,
    }
}

/// Applies one `key.path=value` override. The value is parsed as a TOML
/// literal, falling back to a bare string (`algorithm=ppo`).
pub fn apply_set(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| UsageError(format!("override `{assignment}` is not of the form key.path=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").ok_or_else(|| anyhow!("empty override"))?,
        Err(_) => Value::String(raw.to_string()),
    };
    let mut node = &mut *root;
    for part in key.split('.') {
        node = match node {
            Value::Table(t) => t.get_mut(part),
            _ => None,
        }
        .ok_or_else(|| UsageError(format!("unknown configuration key `{key}`")))?;
    }
    if node.is_table() {
        bail!(UsageError(format!("`{key}` is a section; set one of its fields instead")));
    }
    *node = coerce(node, value);
    Ok(())
}
