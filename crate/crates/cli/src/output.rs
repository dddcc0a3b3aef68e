//! JSON and CSV writers. Every float is written with 17 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use memdelay::format::sig17;
use serde::Serialize;
use serde_json::{Number, Value};
use sha2::{Digest, Sha256};

use crate::Failure;

pub const SCHEMA_VERSION: u32 = 1;

/// `sha256:` followed by the hex digest of the scenario file bytes.
pub fn scenario_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(7 + 64);
    s.push_str("sha256:");
    for b in digest.iter() {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

pub fn number(x: f64) -> Value {
    if x.is_finite() {
        Value::Number(serde_json::from_str::<Number>(&sig17(x)).expect("sig17 is a JSON number"))
    } else {
        Value::Null
    }
}

/// Rewrites every non-integer number in place.
fn normalize(v: &mut Value) {
    match v {
        Value::Number(n) if !(n.is_u64() || n.is_i64()) => {
            if let Some(x) = n.as_f64() {
                *v = number(x);
            }
        }
        Value::Array(items) => items.iter_mut().for_each(normalize),
        Value::Object(map) => map.values_mut().for_each(normalize),
        _ => {}
    }
}

pub fn to_value<T: Serialize>(x: &T) -> Value {
    let mut v = serde_json::to_value(x).expect("serializable");
    normalize(&mut v);
    v
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), Failure> {
    let mut v = value.clone();
    normalize(&mut v);
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, &v).map_err(|e| Failure::io(path, e))?;
    writeln!(out)
        .and_then(|_| out.flush())
        .map_err(|e| Failure::io(path, e))
}

pub fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path, e))
}

pub fn opt17(x: Option<f64>) -> String {
    x.map(sig17).unwrap_or_default()
}
