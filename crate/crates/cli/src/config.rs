//! Merging a key = value config file underneath command-line flags.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use clap::{CommandFactory, FromArgMatches};

use crate::{Cli, ConfigError};

/// Reads `key = value` lines; `#` starts a comment.
pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("{}:{}: expected key = value", path.display(), i + 1)))?;
        out.push((k.trim().replace('_', "-"), v.trim().to_string()));
    }
    Ok(out)
}

fn to_flags(pairs: &[(String, String)]) -> Vec<String> {
    let mut out = Vec::new();
    for (k, v) in pairs {
        match v.as_str() {
            "true" => out.push(format!("--{k}")),
            "false" => {}
            _ => {
                out.push(format!("--{k}"));
                out.push(v.clone());
            }
        }
    }
    out
}

fn parse(args: &[String]) -> Result<Cli> {
    let matches = Cli::command()
        .try_get_matches_from(args)
        .map_err(|e| match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => e.exit(),
            _ => anyhow::Error::new(ConfigError(e.to_string())),
        })?;
    Ok(Cli::from_arg_matches(&matches).map_err(|e| ConfigError(e.to_string()))?)
}

/// Parses `args`; when `--config` is given, its pairs are inserted right
/// after the subcommand name so later explicit flags override them.
pub fn parse_with_config(args: Vec<String>) -> Result<Cli> {
    let first = parse(&args)?;
    let Some(path) = first.config.clone() else {
        return Ok(first);
    };
    let flags = to_flags(&read_pairs(&path)?);
    let names: Vec<String> = Cli::command()
        .get_subcommands()
        .map(|c| c.get_name().to_string())
        .collect();
    let pos = args
        .iter()
        .position(|a| names.contains(a))
        .ok_or_else(|| ConfigError("no subcommand given".into()))?;
    let mut merged = args[..=pos].to_vec();
    merged.extend(flags);
    merged.extend_from_slice(&args[pos + 1..]);
    parse(&merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Command;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn flags_win_over_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.conf");
        fs::write(&cfg, "# search settings\nn_i = 30\nn-p = 12\nno-pruning = true\n").unwrap();
        let cmd = format!(
            "modsplit --config {} modularize --model m --val v --analysis a --n-i 40",
            cfg.display()
        );
        let cli = parse_with_config(argv(&cmd)).unwrap();
        let Command::Modularize(m) = cli.command else { panic!() };
        assert_eq!(m.search.n_i, 40);
        assert_eq!(m.search.n_p, 12);
        assert!(m.no_pruning);
    }

    #[test]
    fn malformed_line_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bad.conf");
        fs::write(&cfg, "n_i 30\n").unwrap();
        let err = read_pairs(&cfg).unwrap_err();
        assert!(err.is::<ConfigError>());
    }
}
