#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub const CONFLICT_ORACLE: &str = "normal-normal:mu0=0,s0=2.5,sigma=1,y=10";

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_powerscale-sense")
}

pub fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 output")
}

/// Structural JSON equality with numbers compared to a relative tolerance.
pub fn json_close(a: &Value, b: &Value, tol: f64) -> Result<(), String> {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            if (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0) {
                Ok(())
            } else {
                Err(format!("{x} != {y}"))
            }
        }
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => {
            x.iter().zip(y).try_for_each(|(x, y)| json_close(x, y, tol))
        }
        (Value::Object(x), Value::Object(y)) if x.len() == y.len() => {
            x.iter().try_for_each(|(k, v)| match y.get(k) {
                Some(w) => json_close(v, w, tol).map_err(|e| format!("{k}: {e}")),
                None => Err(format!("missing key {k}")),
            })
        }
        _ if a == b => Ok(()),
        _ => Err(format!("{a} != {b}")),
    }
}

/// The golden comparison: same document structure and text, numbers equal
/// to 1e-12 relative.
pub fn golden_matches(produced: &str) -> Result<(), String> {
    let golden =
        std::fs::read_to_string(data("conflict_sensitivity.json")).map_err(|e| e.to_string())?;
    let a: Value = serde_json::from_str(produced).map_err(|e| e.to_string())?;
    let b: Value = serde_json::from_str(&golden).map_err(|e| e.to_string())?;
    json_close(&a, &b, 1e-12)
}
