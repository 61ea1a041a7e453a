//! `--config file.json`: a flat JSON object whose keys are flag names.
//! The object is turned into flag tokens that are spliced in right after
//! the subcommand, so anything typed on the command line comes later and
//! wins.

use serde_json::Value;

use crate::error::{Error, Result};

/// Converts a config document into `--flag value` tokens, in sorted key order.
pub fn config_to_args(json: &str) -> Result<Vec<String>> {
    let doc: Value = serde_json::from_str(json)?;
    let Value::Object(map) = doc else {
        return Err(Error::invalid("config must be a JSON object"));
    };
    let mut args = Vec::new();
    for (key, value) in map {
        let flag = key.replace('_', "-");
        if flag.is_empty() || flag.starts_with('-') || flag == "config" {
            return Err(Error::invalid(format!("config key '{key}' is not allowed")));
        }
        let scalar = |v: &Value| -> Result<String> {
            match v {
                Value::Number(n) => Ok(n.to_string()),
                Value::String(s) => Ok(s.clone()),
                _ => Err(Error::invalid(format!("config key '{key}' has an unsupported value"))),
            }
        };
        match &value {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => args.push(format!("--{flag}")),
            Value::Array(items) => {
                let joined = items.iter().map(scalar).collect::<Result<Vec<_>>>()?.join(",");
                args.push(format!("--{flag}={joined}"));
            }
            other => args.push(format!("--{flag}={}", scalar(other)?)),
        }
    }
    Ok(args)
}
