//! Structured report assembly: JSON payloads with deterministic key order,
//! "inf" encoding for infinities, and CSV table dumps.

use std::io::Write;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

/// JSON encoding of a float: finite values as numbers, infinities as the
/// strings "inf"/"-inf" (and NaN, which should never be emitted, as "nan").
pub fn num(v: f64) -> Value {
    if v.is_nan() {
        Value::String("nan".into())
    } else if v == f64::INFINITY {
        Value::String("inf".into())
    } else if v == f64::NEG_INFINITY {
        Value::String("-inf".into())
    } else {
        json!(v)
    }
}

pub fn vec_num(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| num(x)).collect())
}

pub fn opt_num(v: Option<f64>) -> Value {
    v.map_or(Value::Null, num)
}

/// Assembles the full report document. Everything under "payload" is
/// deterministic for a fixed command and seed; wall-clock lives outside it.
pub fn assemble(command: &str, options: Value, results: Value, wall_clock_ms: f64) -> Value {
    let mut payload = Map::new();
    payload.insert("command".into(), Value::String(command.into()));
    payload.insert("options".into(), options);
    payload.insert("results".into(), results);
    payload.insert(
        "provenance".into(),
        json!({ "library": "erbound", "version": env!("CARGO_PKG_VERSION") }),
    );
    json!({ "payload": Value::Object(payload), "wall_clock_ms": wall_clock_ms })
}

/// The deterministic portion of a report, serialized. Two runs of the same
/// command with the same seed produce byte-identical output here.
pub fn payload_string(report: &Value) -> String {
    serde_json::to_string_pretty(&report["payload"]).expect("payload serializes")
}

/// CSV cell for a float: full precision, "." decimal separator, "inf" for
/// infinities.
pub fn csv_cell(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Invalid(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut out = std::fs::File::create(path).map_err(io_err)?;
    writeln!(out, "{}", header.join(",")).map_err(io_err)?;
    for row in rows {
        writeln!(out, "{}", row.join(",")).map_err(io_err)?;
    }
    Ok(())
}
