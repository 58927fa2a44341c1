//! `key = value` run files with one `[command]` section per subcommand.
//!
//! Keys are long flag names without the leading dashes. Values are merged
//! into the argument list for every flag not given on the command line, so
//! explicit flags always win.

use std::collections::BTreeMap;
use std::path::Path;

/// Section name to ordered `(key, value)` pairs.
#[derive(Debug, Default, PartialEq)]
pub struct RunFile {
    pub sections: BTreeMap<String, Vec<(String, String)>>,
}

pub fn parse(text: &str) -> Result<RunFile, String> {
    let mut file = RunFile::default();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_string();
            file.sections.entry(name.clone()).or_default();
            section = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {}: expected `key = value`", i + 1));
        };
        let Some(name) = &section else {
            return Err(format!("line {}: `{}` appears before any [section]", i + 1, key.trim()));
        };
        let value = value.trim().trim_matches('"').to_string();
        file.sections
            .get_mut(name)
            .expect("section registered")
            .push((key.trim().to_string(), value));
    }
    Ok(file)
}

pub fn load(path: &Path) -> Result<RunFile, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// True when `args` already carries `--key` in either spelling.
fn given(args: &[String], key: &str) -> bool {
    let flag = format!("--{key}");
    let joined = format!("--{key}=");
    args.iter().any(|a| *a == flag || a.starts_with(&joined))
}

/// Inserts the section's entries right after the subcommand token for every
/// key absent from `args`. `bool_flags` lists switches, which take no value:
/// `true` adds the switch and `false` leaves it out.
pub fn merge(
    args: &[String],
    command_pos: usize,
    entries: &[(String, String)],
    bool_flags: &[String],
) -> Result<Vec<String>, String> {
    let mut injected = Vec::new();
    for (key, value) in entries {
        if given(args, key) {
            continue;
        }
        if bool_flags.contains(key) {
            match value.as_str() {
                "true" => injected.push(format!("--{key}")),
                "false" => {}
                other => return Err(format!("{key}: expected true or false, found {other:?}")),
            }
        } else {
            for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                injected.push(format!("--{key}={item}"));
            }
        }
    }
    let mut out = args[..=command_pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[command_pos + 1..]);
    Ok(out)
}
