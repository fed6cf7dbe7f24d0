//! Flat `key = value` config files, spliced into argv as flags so that
//! command-line flags given later override them.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};

pub const SUBCOMMANDS: [&str; 6] = ["gamma-fit", "pde-solve", "run", "oracle", "diag", "bench"];

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key = value, got {raw:?}", i + 1);
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || k.contains(char::is_whitespace) {
            bail!("config line {}: bad key {k:?}", i + 1);
        }
        out.push((k.replace('_', "-"), v.to_string()));
    }
    Ok(out)
}

fn kv_to_flags(pairs: &[(String, String)]) -> Vec<OsString> {
    let mut flags = Vec::new();
    for (k, v) in pairs {
        match v.as_str() {
            "true" => flags.push(format!("--{k}").into()),
            "false" => {}
            _ => {
                flags.push(format!("--{k}").into());
                flags.push(v.into());
            }
        }
    }
    flags
}

/// Removes `--config FILE` (or `--config=FILE`) from `args` and inserts the
/// file's settings as flags right after the subcommand name.
pub fn splice_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut path: Option<OsString> = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy().into_owned();
        if s == "--config" {
            path = Some(it.next().context("--config needs a file")?);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(p.into());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let text = std::fs::read_to_string(Path::new(&path))
        .with_context(|| format!("reading config {}", Path::new(&path).display()))?;
    let flags = kv_to_flags(&parse_kv(&text)?);
    let Some(pos) = rest.iter().position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref())) else {
        bail!("--config given without a subcommand");
    };
    rest.splice(pos + 1..pos + 1, flags);
    Ok(rest)
}

/// Parses `1,2,5`, `3..7` (end exclusive) or `3..=7`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..=") {
            out.extend(a.trim().parse::<u64>()?..=b.trim().parse::<u64>()?);
        } else if let Some((a, b)) = part.split_once("..") {
            out.extend(a.trim().parse::<u64>()?..b.trim().parse::<u64>()?);
        } else {
            out.push(part.parse()?);
        }
    }
    if out.is_empty() {
        bail!("empty seed list {s:?}");
    }
    Ok(out)
}
