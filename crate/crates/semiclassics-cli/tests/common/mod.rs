#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
    pub summary: Option<Value>,
}

pub fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Outcome {
    let output = Command::new(env!("CARGO_BIN_EXE_semiclassics"))
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs");
    let summary = std::fs::read_to_string(out.join(format!("{sub}_summary.json")))
        .ok()
        .map(|t| serde_json::from_str(&t).expect("summary is JSON"));
    Outcome {
        code: output.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&output.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
        summary,
    }
}

/// Writes `text` as a config file inside `dir`.
pub fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Loads a shipped config, applies `edit`, and writes it to `dir`.
pub fn edited(dir: &Path, name: &str, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(config(name)).unwrap()).unwrap();
    edit(&mut v);
    write_config(dir, name, &serde_json::to_string_pretty(&v).unwrap())
}

pub fn checks(o: &Outcome) -> Vec<Value> {
    o.summary.as_ref().expect("summary written")["checks"].as_array().unwrap().clone()
}

pub fn failed(o: &Outcome) -> Vec<String> {
    checks(o)
        .iter()
        .filter(|c| c["pass"] != Value::Bool(true))
        .map(|c| c["name"].as_str().unwrap().to_string())
        .collect()
}
