use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::CliError;

/// `summary.json` files under each input: the file itself, `dir/summary.json`,
/// or `dir/*/summary.json`.
pub fn collect_summaries(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut found = Vec::new();
    for input in inputs {
        if input.is_file() {
            found.push(input.clone());
            continue;
        }
        let direct = input.join("summary.json");
        if direct.is_file() {
            found.push(direct);
        }
        let mut subdirs: Vec<PathBuf> = fs::read_dir(input)
            .map_err(|e| CliError::Other(format!("cannot read {}: {e}", input.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("summary.json").is_file())
            .collect();
        subdirs.sort();
        found.extend(subdirs.into_iter().map(|p| p.join("summary.json")));
    }
    if found.is_empty() {
        return Err(CliError::Other("no summary.json found".into()));
    }
    Ok(found)
}

fn fmt(v: &Value) -> String {
    match v {
        Value::Null => "-".into(),
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() && (x == 0.0 || (1e-3..1e4).contains(&x.abs())) => format!("{}", (x * 1e4).round() / 1e4),
            Some(x) if n.is_f64() => format!("{x:.3e}"),
            _ => n.to_string(),
        },
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn describe(path: &Path, s: &Value) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "## {} ({} / {}, {})",
        path.display(),
        fmt(&s["system"]),
        fmt(&s["regime"]),
        fmt(&s["command"])
    );
    let _ = writeln!(out, "config_hash {} seed {}", fmt(&s["config_hash"]), fmt(&s["seed"]));
    match s["command"].as_str() {
        Some("analytic") => {
            let m = &s["max_residuals"];
            let _ = writeln!(
                out,
                "max residuals: continuity {} momentum {} identity {}",
                fmt(&m["continuity"]),
                fmt(&m["momentum"]),
                fmt(&m["identity"])
            );
            let _ = writeln!(
                out,
                "fitted sign {}  coherent_match {}  sign_change {}",
                fmt(&s["fitted_sign"]),
                fmt(&s["coherent_match"]),
                fmt(&s["sign_change"])
            );
            for t in s["times"].as_array().into_iter().flatten() {
                let fit = &t["fit"]["coefficient"];
                let _ = writeln!(out, "  t={} d2={} fit={}", fmt(&t["t"]), fmt(&t["covariance"]["d2"]), fmt(fit));
            }
        }
        Some("simulate") => {
            let _ = writeln!(out, "status {}", fmt(&s["status"]));
            for c in s["checks"].as_array().into_iter().flatten() {
                let mark = if c["passed"] == Value::Bool(true) { "PASS" } else { "FAIL" };
                let _ = writeln!(out, "  {mark} {} measured {} tolerance {}", fmt(&c["name"]), fmt(&c["measured"]), fmt(&c["tolerance"]));
            }
        }
        _ => {}
    }
    out
}

/// Markdown digest of the given summaries.
pub fn render(paths: &[PathBuf]) -> Result<String, CliError> {
    let mut out = String::from("# phasekin report\n\n");
    for p in paths {
        let text = fs::read_to_string(p)?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| CliError::Other(format!("{}: {e}", p.display())))?;
        out.push_str(&describe(p, &value));
        out.push('\n');
    }
    Ok(out)
}
