//! `key=value` config files merged in front of the command-line flags.

use std::fs;

/// Flags that take no value; `key=true` turns them on.
const SWITCHES: &[&str] = &["gaussian", "grid", "identical", "json"];

/// Expands `--config FILE` (also `--config=FILE`) into flags placed right
/// after the subcommand, so that explicit flags given later win.
pub fn expand(args: Vec<String>) -> Result<Vec<String>, String> {
    let mut rest = Vec::with_capacity(args.len());
    let mut file = None;
    let mut iter = args.into_iter();
    while let Some(a) = iter.next() {
        if a == "--config" {
            file = Some(iter.next().ok_or("--config needs a file path")?);
        } else if let Some(path) = a.strip_prefix("--config=") {
            file = Some(path.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(file) = file else { return Ok(rest) };
    let text = fs::read_to_string(&file).map_err(|e| format!("cannot read config {file}: {e}"))?;
    let from_file = parse(&text).map_err(|e| format!("{file}: {e}"))?;
    // The subcommand is the first argument that is not a global option.
    let mut at = 1;
    while at < rest.len() && rest[at].starts_with('-') {
        at += if rest[at] == "--threads" { 2 } else { 1 };
    }
    if at >= rest.len() {
        return Err("--config needs a subcommand".into());
    }
    let mut out = rest[..=at].to_vec();
    out.extend(from_file);
    out.extend_from_slice(&rest[at + 1..]);
    Ok(out)
}

fn parse(text: &str) -> Result<Vec<String>, String> {
    let mut flags = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", n + 1))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || key.starts_with('-') {
            return Err(format!("line {}: bad key '{key}'", n + 1));
        }
        if SWITCHES.contains(&key) {
            match value {
                "true" => flags.push(format!("--{key}")),
                "false" => {}
                _ => return Err(format!("line {}: {key} takes true or false", n + 1)),
            }
        } else {
            flags.push(format!("--{key}"));
            flags.push(value.to_string());
        }
    }
    Ok(flags)
}
