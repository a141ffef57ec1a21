//! `key = value` config files and run manifests. A manifest is itself a
//! valid config file, so `sampnum --config run.manifest` repeats a run.

use std::collections::{BTreeMap, HashSet};
use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::Value;

/// Keys written to manifests that are not command-line flags.
const INFORMATIONAL_KEYS: [&str; 1] = ["version"];

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("line {}: expected `key = value`", i + 1))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            bail!("line {}: empty key", i + 1);
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

fn flag_name(arg: &OsString) -> Option<String> {
    let s = arg.to_str()?;
    let name = s.strip_prefix("--")?;
    Some(name.split('=').next().unwrap_or(name).to_string())
}

/// Splices the contents of `--config FILE` into `args` (program name
/// first). Keys given on the command line win; a `command` key supplies the
/// subcommand when none is given.
pub fn expand_config(args: Vec<OsString>, subcommands: &[&str]) -> Result<Vec<OsString>> {
    let mut rest = Vec::new();
    let mut config_path = None;
    let mut iter = args.into_iter();
    let program = iter.next().unwrap_or_else(|| "sampnum".into());
    while let Some(arg) = iter.next() {
        match arg.to_str() {
            Some("--config") => {
                config_path = Some(iter.next().context("--config needs a file")?);
            }
            Some(s) if s.starts_with("--config=") => {
                config_path = Some(OsString::from(&s["--config=".len()..]));
            }
            _ => rest.push(arg),
        }
    }
    let Some(path) = config_path else {
        let mut out = vec![program];
        out.extend(rest);
        return Ok(out);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut config = parse_config(&text)?;

    let given: HashSet<String> = rest.iter().filter_map(flag_name).collect();
    let position = rest
        .iter()
        .position(|a| a.to_str().is_some_and(|s| subcommands.contains(&s)));
    let command = config.remove("command");
    let (before, sub, after) = match position {
        Some(p) => {
            let after = rest.split_off(p + 1);
            let sub = rest.pop().unwrap();
            (rest, sub, after)
        }
        None => {
            let sub = command.context("config has no `command` and none was given")?;
            (Vec::new(), OsString::from(sub), rest)
        }
    };
    let version = env!("CARGO_PKG_VERSION");
    if let Some(v) = config.get("version") {
        if v != version {
            eprintln!("warning: config written by sampnum {v}, running {version}");
        }
    }

    let mut out = vec![program, sub];
    for (key, value) in &config {
        if INFORMATIONAL_KEYS.contains(&key.as_str()) || given.contains(key) {
            continue;
        }
        match value.as_str() {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                out.push(format!("--{key}").into());
                out.push(value.into());
            }
        }
    }
    // Anything before the subcommand is a global flag and may follow it.
    out.extend(before);
    out.extend(after);
    Ok(out)
}

fn render(value: &Value) -> Option<String> {
    match value {
        Value::Null => None,
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) => Some(s.clone()),
        Value::Array(items) if items.is_empty() => None,
        Value::Array(items) => Some(
            items
                .iter()
                .filter_map(render)
                .collect::<Vec<_>>()
                .join(","),
        ),
        Value::Object(_) => None,
    }
}

/// The resolved configuration as `key = value` lines, sorted by key.
pub fn manifest_text(resolved: &impl Serialize, extra: &[(&str, String)]) -> Result<String> {
    let value = serde_json::to_value(resolved)?;
    let Value::Object(map) = value else {
        bail!("configuration did not serialise to a map");
    };
    let mut entries: BTreeMap<String, String> = map
        .iter()
        .filter_map(|(k, v)| render(v).map(|s| (k.clone(), s)))
        .collect();
    for (k, v) in extra {
        entries.insert((*k).to_string(), v.clone());
    }
    entries.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    let mut text = format!("# sampnum {} run manifest\n", env!("CARGO_PKG_VERSION"));
    for (k, v) in entries {
        text.push_str(&format!("{k} = {v}\n"));
    }
    Ok(text)
}
