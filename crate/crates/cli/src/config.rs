//! Flat `key = value` config files, merged under the command-line flags.

use std::path::Path;

use clap::Command;

use crate::CliError;

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected `key = value`", i + 1))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(format!("config line {}: empty key", i + 1));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Pulls `--config PATH` (or `--config=PATH`) out of the raw arguments.
fn take_config_path(args: &mut Vec<String>) -> Result<Option<String>, CliError> {
    let mut i = 0;
    while i < args.len() {
        if args[i] == "--config" {
            if i + 1 >= args.len() {
                return Err(CliError::input("--config needs a path"));
            }
            let path = args.remove(i + 1);
            args.remove(i);
            return Ok(Some(path));
        }
        if let Some(p) = args[i].strip_prefix("--config=") {
            let path = p.to_string();
            args.remove(i);
            return Ok(Some(path));
        }
        i += 1;
    }
    Ok(None)
}

/// Rewrites config entries as flags, skipping any key the user also passed
/// on the command line.
pub fn merge_config_args(cmd: &Command, raw: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut args = raw;
    let Some(path) = take_config_path(&mut args)? else {
        return Ok(args);
    };
    let Some(sub_pos) = args
        .iter()
        .position(|a| cmd.get_subcommands().any(|s| s.get_name() == a))
    else {
        return Err(CliError::input("--config must follow a subcommand"));
    };
    let sub = cmd.find_subcommand(&args[sub_pos]).unwrap();
    let text = std::fs::read_to_string(Path::new(&path)).map_err(|e| CliError::input(format!("{path}: {e}")))?;
    let entries = parse_config(&text).map_err(|e| CliError::input(format!("{path}: {e}")))?;
    let given = |key: &str| {
        args[sub_pos + 1..]
            .iter()
            .any(|a| a.strip_prefix("--").is_some_and(|f| f == key || f.starts_with(&format!("{key}="))))
    };
    let mut injected = Vec::new();
    for (key, value) in entries {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && key != "config")
            .ok_or_else(|| CliError::input(format!("{path}: unknown key `{key}`")))?;
        if given(&key) {
            continue;
        }
        if arg.get_action().takes_values() {
            injected.push(format!("--{key}={value}"));
        } else {
            match value.as_str() {
                "true" | "1" | "yes" => injected.push(format!("--{key}")),
                "false" | "0" | "no" => {}
                _ => return Err(CliError::input(format!("{path}: `{key}` expects true or false"))),
            }
        }
    }
    let tail = args.split_off(sub_pos + 1);
    args.extend(injected);
    args.extend(tail);
    Ok(args)
}
