use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Map, Value};

/// A number rounded to 9 significant digits; non-finite values become the
/// strings `"inf"`, `"-inf"` and `"nan"`.
pub fn num(x: f64) -> Value {
    if x.is_nan() {
        Value::from("nan")
    } else if x.is_infinite() {
        Value::from(if x > 0.0 { "inf" } else { "-inf" })
    } else {
        let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
        json!(rounded)
    }
}

/// Serializes `v` and rounds every float in the tree.
pub fn to_value<T: Serialize>(v: &T) -> Value {
    let mut out = serde_json::to_value(v).expect("serializable");
    round_tree(&mut out);
    out
}

pub fn round_tree(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => *v = num(n.as_f64().expect("f64")),
        Value::Array(xs) => xs.iter_mut().for_each(round_tree),
        Value::Object(m) => m.values_mut().for_each(round_tree),
        _ => {}
    }
}

/// Provenance record attached to every command's output.
pub struct Manifest {
    command: String,
    params: Value,
    seed: Option<u64>,
    started: Instant,
    outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(command: &str, params: Value, seed: Option<u64>) -> Self {
        Manifest { command: command.to_string(), params, seed, started: Instant::now(), outputs: Vec::new() }
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Manifest object; `wall_clock` is the only field that varies between
    /// identical runs.
    pub fn to_value(&self) -> Value {
        json!({
            "command": self.command,
            "params": self.params,
            "seed": self.seed,
            "version": env!("CARGO_PKG_VERSION"),
            "wall_clock": num(self.started.elapsed().as_secs_f64()),
            "outputs": self.outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        })
    }
}

/// Adds the manifest to a result object and renders it.
pub fn render(mut result: Map<String, Value>, manifest: &Manifest) -> String {
    result.insert("manifest".into(), manifest.to_value());
    let mut s = serde_json::to_string_pretty(&Value::Object(result)).expect("json");
    s.push('\n');
    s
}
