//! Flat `key = value` config files. Entries become command-line flags placed
//! ahead of the real ones, so anything given on the command line wins.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::Command;

#[derive(Debug)]
pub enum ConfigError {
    Read(String),
    Syntax(String),
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut entries = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax(format!(
                "line {}: expected `key = value`, got `{line}`",
                n + 1
            )));
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(ConfigError::Syntax(format!("line {}: empty key", n + 1)));
        }
        entries.push((key, value.trim().to_string()));
    }
    Ok(entries)
}

/// Finds `--config PATH` / `--config=PATH` in raw arguments.
pub fn find_config_path(args: &[OsString]) -> Option<OsString> {
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            return iter.next().cloned();
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(rest.into());
        }
    }
    None
}

/// Turns config entries into flags for `sub`. Unknown keys are an error.
pub fn to_flags(entries: &[(String, String)], sub: &Command) -> Result<Vec<OsString>, ConfigError> {
    let mut flags = Vec::new();
    for (key, value) in entries {
        if key == "config" {
            return Err(ConfigError::Syntax(
                "config files cannot include other config files".into(),
            ));
        }
        let Some(arg) = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
        else {
            return Err(ConfigError::Syntax(format!(
                "unknown key `{key}` for `{}`",
                sub.get_name()
            )));
        };
        if arg.get_action().takes_values() {
            flags.push(format!("--{key}").into());
            flags.push(value.into());
        } else {
            match value.as_str() {
                "true" | "yes" | "1" => flags.push(format!("--{key}").into()),
                "false" | "no" | "0" => {}
                other => {
                    return Err(ConfigError::Syntax(format!(
                        "`{key}` takes true or false, got `{other}`"
                    )))
                }
            }
        }
    }
    Ok(flags)
}

pub fn load(path: &Path) -> Result<Vec<(String, String)>, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError::Read(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text)
}
