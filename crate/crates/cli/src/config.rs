//! TOML config files are turned into extra command-line tokens placed before the user's
//! own flags; since every command sets `args_override_self`, the user's flags win.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Parser;
use toml::{Table, Value};

use crate::args::{Cli, Command};

const GLOBAL_KEYS: &[&str] = &["seed", "trials", "workers", "out", "emit-asymptotes", "record-time"];

/// Returns `argv` with the config file's values spliced in (unchanged when no
/// `--config` is given or the arguments do not parse yet).
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Ok(prelim) = Cli::try_parse_from(&argv) else {
        return Ok(argv);
    };
    let Some(path) = prelim.config.as_deref() else {
        return Ok(argv);
    };
    let table = load(path)?;
    let name = prelim.command.name();
    let mut injected = Vec::new();
    for (key, value) in &table {
        match value {
            Value::Table(_) => {
                if !is_subcommand(key) {
                    bail!("{}: unknown section [{key}]", path.display());
                }
            }
            _ if GLOBAL_KEYS.contains(&key.as_str()) => push_flag(&mut injected, key, value, path)?,
            _ => bail!("{}: unknown top-level key `{key}` (expected one of {GLOBAL_KEYS:?} or a subcommand table)", path.display()),
        }
    }
    if let Some(Value::Table(section)) = table.get(name) {
        for (key, value) in section {
            if key == positional_key(&prelim.command) {
                if positional_missing(&prelim.command) {
                    injected.push(OsString::from(scalar(value, key, path)?));
                }
                continue;
            }
            push_flag(&mut injected, key, value, path)?;
        }
    }
    let at = argv
        .iter()
        .skip(1)
        .position(|a| a == name)
        .map(|i| i + 2)
        .context("subcommand token not found")?;
    let mut out = argv[..at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[at..]);
    Ok(out)
}

pub fn load(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    text.parse::<Table>().with_context(|| format!("cannot parse config {}", path.display()))
}

fn is_subcommand(key: &str) -> bool {
    matches!(key, "predict" | "hutter" | "bigram" | "memory" | "chain" | "fit")
}

fn positional_key(cmd: &Command) -> &'static str {
    match cmd {
        Command::Predict(_) => "theorem",
        Command::Hutter(_) | Command::Bigram(_) => "kind",
        _ => "",
    }
}

fn positional_missing(cmd: &Command) -> bool {
    match cmd {
        Command::Predict(a) => a.theorem.is_none(),
        Command::Hutter(a) => a.kind.is_none(),
        Command::Bigram(a) => a.kind.is_none(),
        _ => false,
    }
}

fn push_flag(out: &mut Vec<OsString>, key: &str, value: &Value, path: &Path) -> Result<()> {
    match value {
        Value::Boolean(true) => out.push(format!("--{key}").into()),
        Value::Boolean(false) => {}
        _ => {
            out.push(format!("--{key}").into());
            out.push(scalar(value, key, path)?.into());
        }
    }
    Ok(())
}

fn scalar(value: &Value, key: &str, path: &Path) -> Result<String> {
    Ok(match value {
        Value::String(s) => s.clone(),
        Value::Integer(i) => i.to_string(),
        Value::Float(f) => f.to_string(),
        Value::Boolean(b) => b.to_string(),
        Value::Array(items) => items
            .iter()
            .map(|v| scalar(v, key, path))
            .collect::<Result<Vec<_>>>()?
            .join(","),
        _ => bail!("{}: unsupported value for `{key}`", path.display()),
    })
}
