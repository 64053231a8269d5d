//! `key = value` config files, spliced into the argument list as flags.

use std::fs;
use std::path::Path;

/// Reads `path` and turns each `key = value` line into `--key value`.
/// `true` makes a bare switch and `false` drops the line. Blank lines and
/// lines starting with `#` are skipped.
pub fn file_args(path: &Path) -> Result<Vec<String>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse(&text).map_err(|(line, msg)| format!("{}:{line}: {msg}", path.display()))
}

fn parse(text: &str) -> Result<Vec<String>, (usize, String)> {
    let mut args = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| (i + 1, format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key.starts_with('-') {
            return Err((i + 1, format!("bad key `{key}`")));
        }
        if key == "config" {
            return Err((i + 1, "config files cannot include other config files".into()));
        }
        match value {
            "true" => args.push(format!("--{key}")),
            "false" => {}
            _ => {
                args.push(format!("--{key}"));
                args.push(value.to_string());
            }
        }
    }
    Ok(args)
}

/// Moves `--config` and the file's flags right after the subcommand words, so
/// that flags given on the command line come later and take precedence.
pub fn expand(argv: Vec<String>) -> Result<Vec<String>, String> {
    let Some(pos) = argv.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(argv);
    };
    let (path, consumed) = match argv[pos].strip_prefix("--config=") {
        Some(p) => (p.to_string(), 1),
        None => (
            argv.get(pos + 1).cloned().ok_or("--config needs a file path")?,
            2,
        ),
    };
    let injected = file_args(Path::new(&path))?;
    let mut rest = argv;
    let config_flag: Vec<String> = rest.drain(pos..pos + consumed).collect();
    let first_flag = rest.iter().skip(1).position(|a| a.starts_with('-')).map_or(rest.len(), |i| i + 1);
    rest.splice(first_flag..first_flag, config_flag.into_iter().chain(injected));
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lines() {
        let args = parse("# run\nsetting = FOU\nreps=3\n\nresplit_only = true\ninvariance = false\n").unwrap();
        assert_eq!(args, ["--setting", "FOU", "--reps", "3", "--resplit-only"]);
        assert_eq!(parse("nonsense").unwrap_err().0, 1);
        assert!(parse("config = x").is_err());
    }

    #[test]
    fn file_flags_precede_command_line_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "alpha = 0.1\nreps = 2\n").unwrap();
        let argv: Vec<String> = ["acir", "bench", "run", "--reps", "5", "--config", path.to_str().unwrap()]
            .map(String::from)
            .to_vec();
        assert_eq!(
            expand(argv).unwrap(),
            ["acir", "bench", "run", "--config", path.to_str().unwrap(), "--alpha", "0.1", "--reps", "2", "--reps", "5"]
        );
    }
}
